//! Paired-comparison statistics: one-sided t-tests with effect sizes,
//! and Holm-Bonferroni correction across a comparison family.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("a paired test needs at least 2 pairs; got {0}")]
    TooFewPairs(usize),
    #[error("paired inputs differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("p-value {0} lies outside [0, 1]")]
    BadPValue(f64),
}

/// Result of a one-sided paired t-test of H1: mean(a) > mean(b).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PairedTTest {
    pub n: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub mean_diff: f64,
    /// Sample standard deviation of the differences (n-1 denominator).
    pub sd_diff: f64,
    pub t: f64,
    pub df: f64,
    /// One-sided p-value for H1: mean(a) > mean(b).
    pub p: f64,
    /// Paired Cohen's d: mean difference over its standard deviation.
    pub cohens_d: f64,
}

/// Paired one-sided t-test. Identical inputs give t = 0 and p = 0.5;
/// a zero-variance non-zero difference gives an infinite t with p of 0
/// or 1 depending on direction.
pub fn paired_t_one_sided(a: &[f64], b: &[f64]) -> Result<PairedTTest, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(StatsError::TooFewPairs(n));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let nf = n as f64;
    let mean_a = a.iter().sum::<f64>() / nf;
    let mean_b = b.iter().sum::<f64>() / nf;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_diff = diffs.iter().sum::<f64>() / nf;
    let var = diffs
        .iter()
        .map(|d| (d - mean_diff) * (d - mean_diff))
        .sum::<f64>()
        / (nf - 1.0);
    let sd_diff = var.sqrt();
    let df = nf - 1.0;

    let (t, p, cohens_d) = if sd_diff == 0.0 {
        if mean_diff == 0.0 {
            (0.0, 0.5, 0.0)
        } else if mean_diff > 0.0 {
            (f64::INFINITY, 0.0, f64::INFINITY)
        } else {
            (f64::NEG_INFINITY, 1.0, f64::NEG_INFINITY)
        }
    } else {
        let t = mean_diff / (sd_diff / nf.sqrt());
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1 is a valid t distribution");
        (t, 1.0 - dist.cdf(t), mean_diff / sd_diff)
    };

    Ok(PairedTTest {
        n,
        mean_a,
        mean_b,
        mean_diff,
        sd_diff,
        t,
        df,
        p,
        cohens_d,
    })
}

/// Holm-Bonferroni step-down adjustment. Returns adjusted p-values in
/// the input order: the i-th smallest raw p is multiplied by (m - i),
/// running maxima enforce monotonicity, and results cap at 1.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>, StatsError> {
    for &p in p_values {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(StatsError::BadPValue(p));
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| {
        p_values[i]
            .partial_cmp(&p_values[j])
            .expect("finite p-values compare")
            .then(i.cmp(&j))
    });
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (position, &index) in order.iter().enumerate() {
        let stepped = (m - position) as f64 * p_values[index];
        running = running.max(stepped);
        adjusted[index] = running.min(1.0);
    }
    Ok(adjusted)
}
