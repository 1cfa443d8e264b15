//! Corpus-level analytics: sublabel distributions, cross-dimension
//! association, diversity via normalized entropy, pooled community
//! profiles, the two-part community similarity metric with composite
//! ranking, and paired comparisons between inference sets.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::LabelAssignment;
use crate::gateway::cosine_similarity;
use crate::stats::{holm_adjust, paired_t_one_sided, StatsError};
use crate::taxonomy::{Dimension, DimensionGroup, TaxonomyError, TaxonomyRegistry};

/// Weight of the categorical rank in the composite ranking; the
/// remainder weights the embedding rank.
pub const DEFAULT_LAMBDA_RANK: f64 = 0.667;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("story {story:?} dimension {dimension:?}: expected {expected} slot embeddings, found {found}")]
    SlotCountMismatch {
        story: String,
        dimension: String,
        expected: usize,
        found: usize,
    },
    #[error("story {story:?} dimension {dimension:?} slot {slot}: embedding norm {norm} is not 1")]
    UnnormalizedEmbedding {
        story: String,
        dimension: String,
        slot: usize,
        norm: f64,
    },
    #[error("embedding width {found} differs from the first seen width {expected}")]
    MixedEmbeddingWidths { expected: usize, found: usize },
    #[error("lambda_rank must lie in [0, 1]; got {0}")]
    BadLambda(f64),
    #[error("pair {a}/{b} carries a non-finite score")]
    NonFiniteScore { a: String, b: String },
    #[error("comparison {comparison:?} references unknown set {set:?}")]
    UnknownSet { comparison: String, set: String },
    #[error("comparison {comparison:?}: set {set:?} is missing stories {missing:?}")]
    Unpaired {
        comparison: String,
        set: String,
        missing: Vec<String>,
    },
}

// ---------------------------------------------------------------------------
// Label distributions and entropy
// ---------------------------------------------------------------------------

/// Counts and probabilities over one dimension's full sublabel
/// vocabulary. Sublabels never observed keep an explicit zero count, so
/// the support always equals the registry's sublabel count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub dimension: String,
    /// Present when the distribution is scoped to one community.
    pub community: Option<String>,
    pub counts: BTreeMap<String, u64>,
    /// Empty when `total` is 0; otherwise sums to 1.
    pub probabilities: BTreeMap<String, f64>,
    pub total: u64,
}

impl LabelDistribution {
    pub fn support(&self) -> usize {
        self.counts.len()
    }

    /// False for an empty input, whose probabilities are undefined.
    pub fn is_defined(&self) -> bool {
        self.total > 0
    }

    /// Probabilities in sublabel key order; empty when undefined.
    pub fn probability_vector(&self) -> Vec<f64> {
        if !self.is_defined() {
            return Vec::new();
        }
        self.counts
            .keys()
            .map(|label| self.probabilities[label])
            .collect()
    }
}

/// Tallies sublabel occurrences over assignments for one dimension.
/// Each label counts once per assignment (one inference may carry
/// several labels, each contributing one occurrence). The optional
/// community filter keeps only assignments whose story maps to the
/// named community.
pub fn sublabel_distribution(
    assignments: &[LabelAssignment],
    dimension: &Dimension,
    community: Option<(&str, &BTreeMap<String, String>)>,
) -> LabelDistribution {
    let mut counts: BTreeMap<String, u64> = dimension
        .sublabels
        .iter()
        .map(|s| (s.id.clone(), 0))
        .collect();
    for assignment in assignments {
        if assignment.dimension != dimension.id {
            continue;
        }
        if let Some((name, story_communities)) = community {
            if story_communities.get(&assignment.story_id).map(String::as_str) != Some(name) {
                continue;
            }
        }
        for label in &assignment.labels {
            match counts.get_mut(label) {
                Some(count) => *count += 1,
                None => debug_assert!(false, "assignments must be registry-valid: {label}"),
            }
        }
    }
    let total: u64 = counts.values().sum();
    let probabilities = if total > 0 {
        counts
            .iter()
            .map(|(label, &count)| (label.clone(), count as f64 / total as f64))
            .collect()
    } else {
        BTreeMap::new()
    };
    LabelDistribution {
        dimension: dimension.id.clone(),
        community: community.map(|(name, _)| name.to_string()),
        counts,
        probabilities,
        total,
    }
}

/// Normalized entropy of a distribution, with its degeneracy marker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    /// H(p) / log2(S), in [0, 1].
    pub value: f64,
    /// True when the value is forced to 0: an undefined distribution or
    /// a single-sublabel support.
    pub degenerate: bool,
}

/// Shannon entropy over the support, normalized by the maximum log2(S)
/// so the result lies in [0, 1]. Zero-probability terms contribute 0.
pub fn normalized_entropy(distribution: &LabelDistribution) -> EntropyValue {
    let support = distribution.support();
    if !distribution.is_defined() || support <= 1 {
        return EntropyValue {
            value: 0.0,
            degenerate: true,
        };
    }
    let entropy: f64 = distribution
        .probabilities
        .values()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    EntropyValue {
        value: (entropy / (support as f64).log2()).clamp(0.0, 1.0),
        degenerate: false,
    }
}

/// Mean normalized entropy over a dimension group's defined
/// distributions in a profile; `None` when the group has none.
pub fn group_entropy(
    profile: &CommunityProfile,
    group: DimensionGroup,
    registry: &TaxonomyRegistry,
) -> Option<f64> {
    let values: Vec<f64> = registry
        .dimensions_in_group(group)
        .iter()
        .filter_map(|dimension| profile.distributions.get(&dimension.id))
        .filter(|distribution| distribution.is_defined())
        .map(|distribution| normalized_entropy(distribution).value)
        .collect();
    if values.is_empty() {
        return None;
    }
    Some(values.iter().sum::<f64>() / values.len() as f64)
}

// ---------------------------------------------------------------------------
// NPMI
// ---------------------------------------------------------------------------

/// Distinct sublabels a story exhibits, per dimension. The story is the
/// co-occurrence unit: a label counts once per story no matter how many
/// of the story's inferences carry it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryLabels {
    pub story_id: String,
    pub labels: BTreeMap<String, BTreeSet<String>>,
}

/// Normalized pointwise mutual information from co-occurrence counts:
/// ln(p(x,y) / (p(x) p(y))) / (-ln p(x,y)).
///
/// Conventions: a zero joint count gives -1; a joint probability of 1
/// gives +1; a zero marginal leaves the value undefined (`None`).
/// Counts must satisfy n_xy <= min(n_x, n_y) <= n.
pub fn npmi(n_x: u64, n_y: u64, n_xy: u64, n: u64) -> Option<f64> {
    debug_assert!(n_xy <= n_x.min(n_y) && n_x.max(n_y) <= n);
    if n == 0 || n_x == 0 || n_y == 0 {
        return None;
    }
    if n_xy == 0 {
        return Some(-1.0);
    }
    if n_xy == n {
        return Some(1.0);
    }
    let p_x = n_x as f64 / n as f64;
    let p_y = n_y as f64 / n as f64;
    let p_xy = n_xy as f64 / n as f64;
    let value = (p_xy / (p_x * p_y)).ln() / -p_xy.ln();
    Some(value.clamp(-1.0, 1.0))
}

/// NPMI between every sublabel of one dimension and every sublabel of
/// another, with story-level co-occurrence counts. Undefined entries
/// (zero-marginal labels) stay masked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NpmiMatrix {
    pub dimension_a: String,
    pub dimension_b: String,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub story_count: usize,
    /// values[row][col]; `None` marks a masked entry.
    pub values: Vec<Vec<Option<f64>>>,
}

impl NpmiMatrix {
    /// CSV with one header row of column labels and one row per row
    /// label. Masked entries render as empty cells.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label");
        for col in &self.col_labels {
            out.push(',');
            out.push_str(col);
        }
        out.push('\n');
        for (row_index, row_label) in self.row_labels.iter().enumerate() {
            out.push_str(row_label);
            for value in &self.values[row_index] {
                out.push(',');
                if let Some(v) = value {
                    out.push_str(&format!("{v:.6}"));
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Builds the NPMI matrix between two dimensions' sublabels over a
/// story collection.
pub fn npmi_matrix(
    stories: &[StoryLabels],
    dimension_a: &Dimension,
    dimension_b: &Dimension,
) -> NpmiMatrix {
    let mut row_labels: Vec<String> =
        dimension_a.sublabels.iter().map(|s| s.id.clone()).collect();
    row_labels.sort();
    let mut col_labels: Vec<String> =
        dimension_b.sublabels.iter().map(|s| s.id.clone()).collect();
    col_labels.sort();

    let n = stories.len() as u64;
    let has = |story: &StoryLabels, dimension: &str, label: &str| -> bool {
        story
            .labels
            .get(dimension)
            .is_some_and(|set| set.contains(label))
    };
    let count_x: Vec<u64> = row_labels
        .iter()
        .map(|x| {
            stories
                .iter()
                .filter(|s| has(s, &dimension_a.id, x))
                .count() as u64
        })
        .collect();
    let count_y: Vec<u64> = col_labels
        .iter()
        .map(|y| {
            stories
                .iter()
                .filter(|s| has(s, &dimension_b.id, y))
                .count() as u64
        })
        .collect();

    let values = row_labels
        .iter()
        .enumerate()
        .map(|(i, x)| {
            col_labels
                .iter()
                .enumerate()
                .map(|(j, y)| {
                    let joint = stories
                        .iter()
                        .filter(|s| has(s, &dimension_a.id, x) && has(s, &dimension_b.id, y))
                        .count() as u64;
                    npmi(count_x[i], count_y[j], joint, n)
                })
                .collect()
        })
        .collect();

    NpmiMatrix {
        dimension_a: dimension_a.id.clone(),
        dimension_b: dimension_b.id.clone(),
        row_labels,
        col_labels,
        story_count: stories.len(),
        values,
    }
}

// ---------------------------------------------------------------------------
// Community profiles
// ---------------------------------------------------------------------------

/// Per-story slot embeddings for pooling: dimension id to one
/// L2-normalized embedding per template slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorySlotEmbeddings {
    pub story_id: String,
    pub slots: BTreeMap<String, Vec<Vec<f64>>>,
}

/// A community's pooled representation: per-dimension mean embeddings
/// (mean over stories of the mean over slots) and per-dimension
/// sublabel distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityProfile {
    pub community: String,
    pub story_count: usize,
    /// Dimension id to h_c; absent when no story covered the dimension.
    pub embeddings: BTreeMap<String, Vec<f64>>,
    pub distributions: BTreeMap<String, LabelDistribution>,
    /// Dimension id to its template slot count.
    pub slot_counts: BTreeMap<String, usize>,
}

/// Pools story slot embeddings and label assignments into a community
/// profile. Slot embeddings must be L2-normalized and match the
/// dimension's slot count; pooled means are deliberately left
/// unnormalized.
pub fn build_community_profile(
    community: &str,
    stories: &[StorySlotEmbeddings],
    assignments: &[LabelAssignment],
    registry: &TaxonomyRegistry,
) -> Result<CommunityProfile, AnalyticsError> {
    let mut width: Option<usize> = None;
    let mut story_means: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for story in stories {
        for (dimension_id, slots) in &story.slots {
            let dimension = registry.dimension(dimension_id)?;
            if slots.len() != dimension.slot_count() {
                return Err(AnalyticsError::SlotCountMismatch {
                    story: story.story_id.clone(),
                    dimension: dimension_id.clone(),
                    expected: dimension.slot_count(),
                    found: slots.len(),
                });
            }
            for (slot, embedding) in slots.iter().enumerate() {
                let expected = *width.get_or_insert(embedding.len());
                if embedding.len() != expected {
                    return Err(AnalyticsError::MixedEmbeddingWidths {
                        expected,
                        found: embedding.len(),
                    });
                }
                let norm = embedding.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !norm.is_finite() || (norm - 1.0).abs() > 1e-6 {
                    return Err(AnalyticsError::UnnormalizedEmbedding {
                        story: story.story_id.clone(),
                        dimension: dimension_id.clone(),
                        slot,
                        norm,
                    });
                }
            }
            story_means
                .entry(dimension_id.clone())
                .or_default()
                .push(mean_vector(slots));
        }
    }

    let embeddings: BTreeMap<String, Vec<f64>> = story_means
        .into_iter()
        .map(|(dimension_id, means)| (dimension_id, mean_vector(&means)))
        .collect();

    let mut distributions = BTreeMap::new();
    let mut slot_counts = BTreeMap::new();
    for id in registry.dimension_ids() {
        let dimension = registry.dimension(id)?;
        let mut distribution = sublabel_distribution(assignments, dimension, None);
        distribution.community = Some(community.to_string());
        distributions.insert(id.to_string(), distribution);
        slot_counts.insert(id.to_string(), dimension.slot_count());
    }

    Ok(CommunityProfile {
        community: community.to_string(),
        story_count: stories.len(),
        embeddings,
        distributions,
        slot_counts,
    })
}

fn mean_vector(vectors: &[Vec<f64>]) -> Vec<f64> {
    let count = vectors.len() as f64;
    let width = vectors.first().map_or(0, Vec::len);
    let mut mean = vec![0.0; width];
    for vector in vectors {
        for (accumulator, value) in mean.iter_mut().zip(vector) {
            *accumulator += value;
        }
    }
    for value in &mut mean {
        *value /= count;
    }
    mean
}

// ---------------------------------------------------------------------------
// Community similarity
// ---------------------------------------------------------------------------

/// A dimension-averaged similarity, with the dimensions that could not
/// participate (absent from either side) listed rather than imputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityOutcome {
    /// `None` when no dimension was comparable.
    pub value: Option<f64>,
    pub dimensions_used: usize,
    pub missing_dimensions: Vec<String>,
}

/// Mean cosine similarity between the two communities' pooled
/// embeddings, over the dimensions present on both sides.
pub fn ssf_sim_gen(
    a: &CommunityProfile,
    b: &CommunityProfile,
    registry: &TaxonomyRegistry,
) -> SimilarityOutcome {
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for id in registry.dimension_ids() {
        match (a.embeddings.get(id), b.embeddings.get(id)) {
            (Some(left), Some(right)) => values.push(cosine_similarity(left, right)),
            _ => missing.push(id.to_string()),
        }
    }
    aggregate(values, missing)
}

/// Which Jensen-Shannon quantity the categorical similarity subtracts
/// from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JsMode {
    /// Square root of the divergence; a true metric in [0, 1].
    #[default]
    Distance,
    Divergence,
}

/// Jensen-Shannon divergence with base-2 logarithms, in [0, 1].
pub fn js_divergence(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut divergence = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        let mid = 0.5 * (pi + qi);
        if pi > 0.0 {
            divergence += 0.5 * pi * (pi / mid).log2();
        }
        if qi > 0.0 {
            divergence += 0.5 * qi * (qi / mid).log2();
        }
    }
    divergence.clamp(0.0, 1.0)
}

/// Jensen-Shannon distance: the square root of the divergence.
pub fn js_distance(p: &[f64], q: &[f64]) -> f64 {
    js_divergence(p, q).sqrt()
}

/// Mean categorical similarity (1 minus the Jensen-Shannon quantity
/// selected by `mode`) over dimensions where both communities have a
/// defined distribution.
pub fn ssf_sim_class(
    a: &CommunityProfile,
    b: &CommunityProfile,
    registry: &TaxonomyRegistry,
    mode: JsMode,
) -> SimilarityOutcome {
    let mut values = Vec::new();
    let mut missing = Vec::new();
    for id in registry.dimension_ids() {
        let left = a.distributions.get(id).filter(|d| d.is_defined());
        let right = b.distributions.get(id).filter(|d| d.is_defined());
        match (left, right) {
            (Some(left), Some(right)) => {
                let p = left.probability_vector();
                let q = right.probability_vector();
                let js = match mode {
                    JsMode::Distance => js_distance(&p, &q),
                    JsMode::Divergence => js_divergence(&p, &q),
                };
                values.push(1.0 - js);
            }
            _ => missing.push(id.to_string()),
        }
    }
    aggregate(values, missing)
}

fn aggregate(values: Vec<f64>, missing: Vec<String>) -> SimilarityOutcome {
    let dimensions_used = values.len();
    let value = if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / dimensions_used as f64)
    };
    SimilarityOutcome {
        value,
        dimensions_used,
        missing_dimensions: missing,
    }
}

// ---------------------------------------------------------------------------
// Composite ranking
// ---------------------------------------------------------------------------

/// Raw submetric scores for one community pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub a: String,
    pub b: String,
    pub gen_score: f64,
    pub class_score: f64,
}

/// One ranked community pair. Rank 1 is the most similar pair under a
/// submetric; ties share the average of the positions they span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedPair {
    pub a: String,
    pub b: String,
    pub gen_score: f64,
    pub class_score: f64,
    pub gen_rank: f64,
    pub class_rank: f64,
    /// lambda_rank * class_rank + (1 - lambda_rank) * gen_rank; lower
    /// means more similar.
    pub composite: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRanking {
    pub lambda_rank: f64,
    /// Ascending by composite; ties break on the pair names.
    pub pairs: Vec<RankedPair>,
}

impl SimilarityRanking {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "community_a,community_b,gen_score,class_score,gen_rank,class_rank,composite\n",
        );
        for pair in &self.pairs {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.3},{:.3},{:.4}\n",
                pair.a, pair.b, pair.gen_score, pair.class_score, pair.gen_rank,
                pair.class_rank, pair.composite
            ));
        }
        out
    }
}

/// Combines both submetrics' rankings into a composite. Scores rank
/// descending (most similar first) with ties averaged, and the output
/// sorts ascending by composite.
pub fn composite_ranking(
    pairs: &[PairScores],
    lambda_rank: f64,
) -> Result<SimilarityRanking, AnalyticsError> {
    if !lambda_rank.is_finite() || !(0.0..=1.0).contains(&lambda_rank) {
        return Err(AnalyticsError::BadLambda(lambda_rank));
    }
    for pair in pairs {
        if !pair.gen_score.is_finite() || !pair.class_score.is_finite() {
            return Err(AnalyticsError::NonFiniteScore {
                a: pair.a.clone(),
                b: pair.b.clone(),
            });
        }
    }
    let gen_ranks = average_ranks_descending(&pairs.iter().map(|p| p.gen_score).collect::<Vec<_>>());
    let class_ranks =
        average_ranks_descending(&pairs.iter().map(|p| p.class_score).collect::<Vec<_>>());
    let mut ranked: Vec<RankedPair> = pairs
        .iter()
        .zip(gen_ranks.iter().zip(&class_ranks))
        .map(|(pair, (&gen_rank, &class_rank))| RankedPair {
            a: pair.a.clone(),
            b: pair.b.clone(),
            gen_score: pair.gen_score,
            class_score: pair.class_score,
            gen_rank,
            class_rank,
            composite: lambda_rank * class_rank + (1.0 - lambda_rank) * gen_rank,
        })
        .collect();
    ranked.sort_by(|x, y| {
        x.composite
            .partial_cmp(&y.composite)
            .expect("finite ranks give finite composites")
            .then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b)))
    });
    Ok(SimilarityRanking {
        lambda_rank,
        pairs: ranked,
    })
}

/// Fractional ranks with rank 1 for the highest score and tied scores
/// sharing the mean of the positions they occupy.
fn average_ranks_descending(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .expect("callers validate score finiteness")
            .then(i.cmp(&j))
    });
    let mut ranks = vec![0.0; scores.len()];
    let mut position = 0;
    while position < order.len() {
        let mut tie_end = position + 1;
        while tie_end < order.len() && scores[order[tie_end]] == scores[order[position]] {
            tie_end += 1;
        }
        let average = (position + 1 + tie_end) as f64 / 2.0;
        for &index in &order[position..tie_end] {
            ranks[index] = average;
        }
        position = tie_end;
    }
    ranks
}

// ---------------------------------------------------------------------------
// Inference-set comparison
// ---------------------------------------------------------------------------

/// One directional hypothesis: `set_a` is closer to the reference than
/// `set_b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    pub name: String,
    pub set_a: String,
    pub set_b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub name: String,
    pub set_a: String,
    pub set_b: String,
    pub pairs: usize,
    /// Mean cosine similarity of each set to the reference.
    pub mean_a: f64,
    pub mean_b: f64,
    pub t: f64,
    pub df: f64,
    pub p_raw: f64,
    /// Holm-adjusted across every comparison in the report.
    pub p_holm: f64,
    pub cohens_d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub results: Vec<ComparisonResult>,
}

/// Compares inference sets by their story-paired cosine similarity to a
/// reference set, with one-sided paired t-tests and a Holm correction
/// across the comparison family. The reference's story ids define the
/// pairing; a set missing any of them is an error.
pub fn compare_inference_sets(
    sets: &BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    reference: &BTreeMap<String, Vec<f64>>,
    comparisons: &[ComparisonSpec],
) -> Result<ComparisonReport, AnalyticsError> {
    let mut partial = Vec::new();
    for spec in comparisons {
        let similarities = |set_name: &str| -> Result<Vec<f64>, AnalyticsError> {
            let set = sets.get(set_name).ok_or_else(|| AnalyticsError::UnknownSet {
                comparison: spec.name.clone(),
                set: set_name.to_string(),
            })?;
            let missing: Vec<String> = reference
                .keys()
                .filter(|story| !set.contains_key(*story))
                .cloned()
                .collect();
            if !missing.is_empty() {
                return Err(AnalyticsError::Unpaired {
                    comparison: spec.name.clone(),
                    set: set_name.to_string(),
                    missing,
                });
            }
            Ok(reference
                .iter()
                .map(|(story, embedding)| cosine_similarity(&set[story], embedding))
                .collect())
        };
        let sims_a = similarities(&spec.set_a)?;
        let sims_b = similarities(&spec.set_b)?;
        let test = paired_t_one_sided(&sims_a, &sims_b)?;
        partial.push((spec, test));
    }
    let raw: Vec<f64> = partial.iter().map(|(_, test)| test.p).collect();
    let adjusted = holm_adjust(&raw)?;
    let results = partial
        .into_iter()
        .zip(adjusted)
        .map(|((spec, test), p_holm)| ComparisonResult {
            name: spec.name.clone(),
            set_a: spec.set_a.clone(),
            set_b: spec.set_b.clone(),
            pairs: test.n,
            mean_a: test.mean_a,
            mean_b: test.mean_b,
            t: test.t,
            df: test.df,
            p_raw: test.p,
            p_holm,
            cohens_d: test.cohens_d,
        })
        .collect();
    Ok(ComparisonReport { results })
}
