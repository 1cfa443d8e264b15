//! Survey-rating quality control and classification agreement
//! statistics: the known-implausible attention filter over rating
//! exports, Jaccard agreement, multi-label F1, and per-dimension
//! plausibility rates.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::Variant;

#[derive(Debug, Error)]
pub enum ValidationError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("dimension {dimension:?}: predictions reference unknown inference ids {ids:?}")]
    UnknownInferences { dimension: String, ids: Vec<String> },
}

/// Plausibility rating on the survey's 4-point scale, ordered from
/// least to most plausible.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Rating {
    VeryUnlikely,
    SomewhatUnlikely,
    SomewhatLikely,
    VeryLikely,
}

impl Rating {
    pub const ALL: [Rating; 4] = [
        Rating::VeryUnlikely,
        Rating::SomewhatUnlikely,
        Rating::SomewhatLikely,
        Rating::VeryLikely,
    ];

    /// Top three ratings count as plausible.
    pub fn is_plausible(self) -> bool {
        self >= Rating::SomewhatUnlikely
    }

    /// Top two ratings count as likely.
    pub fn is_likely(self) -> bool {
        self >= Rating::SomewhatLikely
    }
}

/// One annotator's rating of one inference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub annotator_id: String,
    pub story_id: String,
    pub dimension: String,
    /// Rendered inference text or id, when the export links back to it.
    pub inference: Option<String>,
    pub variant: Variant,
    pub rating: Rating,
}

/// Row shape of a survey export: the five columns, in order.
#[derive(Debug, Serialize, Deserialize)]
struct RatingRow {
    annotator_id: String,
    story_id: String,
    dimension: String,
    variant: Variant,
    rating: Rating,
}

/// Reads a survey export with columns
/// `annotator_id,story_id,dimension,variant,rating`.
pub fn read_ratings_csv<R: io::Read>(reader: R) -> Result<Vec<RatingRecord>, ValidationError> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize() {
        let row: RatingRow = row?;
        out.push(RatingRecord {
            annotator_id: row.annotator_id,
            story_id: row.story_id,
            dimension: row.dimension,
            inference: None,
            variant: row.variant,
            rating: row.rating,
        });
    }
    Ok(out)
}

/// Writes records in the survey-export column layout.
pub fn write_ratings_csv<W: io::Write>(
    writer: W,
    records: &[RatingRecord],
) -> Result<(), ValidationError> {
    let mut writer = csv::Writer::from_writer(writer);
    for record in records {
        writer.serialize(RatingRow {
            annotator_id: record.annotator_id.clone(),
            story_id: record.story_id.clone(),
            dimension: record.dimension.clone(),
            variant: record.variant,
            rating: record.rating,
        })?;
    }
    writer.flush()?;
    Ok(())
}

/// One discarded (annotator, story) group: an injected implausible
/// inference was rated on the likely side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardedGroup {
    pub annotator_id: String,
    pub story_id: String,
    /// Dimensions whose known-implausible row failed the check.
    pub triggers: Vec<String>,
    /// Every rating in the group, standard and implausible alike.
    pub discarded_ratings: usize,
}

/// A group that did not cover every expected dimension. The filter
/// still runs on what is there.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageWarning {
    pub annotator_id: String,
    pub story_id: String,
    pub missing_dimensions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityFilterOutcome {
    /// Standard ratings from groups that passed the attention check.
    pub kept: Vec<RatingRecord>,
    pub discarded: Vec<DiscardedGroup>,
    pub warnings: Vec<CoverageWarning>,
}

/// Applies the attention check to a rating export. Ratings group by
/// (annotator, story); a group whose known-implausible inference is
/// rated somewhat_likely or very_likely is discarded whole. Passing
/// groups keep only their standard rows.
pub fn quality_filter(
    records: &[RatingRecord],
    expected_dimensions: &[String],
) -> QualityFilterOutcome {
    let mut groups: BTreeMap<(String, String), Vec<&RatingRecord>> = BTreeMap::new();
    for record in records {
        groups
            .entry((record.annotator_id.clone(), record.story_id.clone()))
            .or_default()
            .push(record);
    }

    let mut kept = Vec::new();
    let mut discarded = Vec::new();
    let mut warnings = Vec::new();
    for ((annotator_id, story_id), group) in groups {
        let covered: BTreeSet<&str> = group.iter().map(|r| r.dimension.as_str()).collect();
        let missing: Vec<String> = expected_dimensions
            .iter()
            .filter(|d| !covered.contains(d.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            warnings.push(CoverageWarning {
                annotator_id: annotator_id.clone(),
                story_id: story_id.clone(),
                missing_dimensions: missing,
            });
        }
        let triggers: Vec<String> = group
            .iter()
            .filter(|r| r.variant == Variant::KnownImplausible && r.rating.is_likely())
            .map(|r| r.dimension.clone())
            .collect();
        if triggers.is_empty() {
            kept.extend(
                group
                    .iter()
                    .filter(|r| r.variant == Variant::Standard)
                    .map(|&r| r.clone()),
            );
        } else {
            discarded.push(DiscardedGroup {
                annotator_id,
                story_id,
                triggers,
                discarded_ratings: group.len(),
            });
        }
    }
    QualityFilterOutcome {
        kept,
        discarded,
        warnings,
    }
}

/// Jaccard index of two label sets. Two empty sets agree perfectly:
/// "no applicable sublabel" is itself a shared judgment.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScore {
    pub label: String,
    pub tp: u64,
    pub fp: u64,
    pub fn_count: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub dimension: String,
    /// Inference ids evaluated (the gold key set).
    pub items: usize,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    /// Unweighted mean F1 over labels appearing in gold or predictions.
    pub macro_f1: f64,
    pub per_label: Vec<LabelScore>,
}

impl F1Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,tp,fp,fn,precision,recall,f1\n");
        for score in &self.per_label {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{:.6}\n",
                score.label,
                score.tp,
                score.fp,
                score.fn_count,
                score.precision,
                score.recall,
                score.f1
            ));
        }
        out.push_str(&format!(
            "_micro,,,,{:.6},{:.6},{:.6}\n",
            self.micro_precision, self.micro_recall, self.micro_f1
        ));
        out.push_str(&format!("_macro,,,,,,{:.6}\n", self.macro_f1));
        out
    }
}

fn precision_recall_f1(tp: u64, fp: u64, fn_count: u64) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_count == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_count) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Multi-label precision/recall/F1 of predictions against gold label
/// sets, keyed by inference id. Gold ids without a prediction entry
/// count as empty predictions; prediction ids outside gold are an
/// error. The label universe is everything observed in gold or
/// predictions, so sublabels that never occur stay out of the macro
/// average.
pub fn multilabel_f1(
    predictions: &BTreeMap<String, BTreeSet<String>>,
    gold: &BTreeMap<String, BTreeSet<String>>,
    dimension: &str,
) -> Result<F1Report, ValidationError> {
    let unknown: Vec<String> = predictions
        .keys()
        .filter(|id| !gold.contains_key(*id))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(ValidationError::UnknownInferences {
            dimension: dimension.to_string(),
            ids: unknown,
        });
    }

    let empty = BTreeSet::new();
    let mut universe: BTreeSet<&String> = BTreeSet::new();
    for labels in gold.values().chain(predictions.values()) {
        universe.extend(labels);
    }

    let mut per_label = Vec::new();
    let (mut total_tp, mut total_fp, mut total_fn) = (0u64, 0u64, 0u64);
    for label in universe {
        let (mut tp, mut fp, mut fn_count) = (0u64, 0u64, 0u64);
        for (id, gold_labels) in gold {
            let predicted = predictions.get(id).unwrap_or(&empty);
            match (predicted.contains(label), gold_labels.contains(label)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_count += 1,
                (false, false) => {}
            }
        }
        total_tp += tp;
        total_fp += fp;
        total_fn += fn_count;
        let (precision, recall, f1) = precision_recall_f1(tp, fp, fn_count);
        per_label.push(LabelScore {
            label: label.clone(),
            tp,
            fp,
            fn_count,
            precision,
            recall,
            f1,
        });
    }

    let (micro_precision, micro_recall, micro_f1) =
        precision_recall_f1(total_tp, total_fp, total_fn);
    let macro_f1 = if per_label.is_empty() {
        0.0
    } else {
        per_label.iter().map(|s| s.f1).sum::<f64>() / per_label.len() as f64
    };
    Ok(F1Report {
        dimension: dimension.to_string(),
        items: gold.len(),
        micro_precision,
        micro_recall,
        micro_f1,
        macro_f1,
        per_label,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionPlausibility {
    pub dimension: String,
    pub ratings: usize,
    /// Share rated in the top three scale points.
    pub plausible_rate: f64,
    /// Share rated in the top two scale points.
    pub likely_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlausibilitySummary {
    pub rows: Vec<DimensionPlausibility>,
}

impl PlausibilitySummary {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dimension,ratings,plausible_rate,likely_rate\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6}\n",
                row.dimension, row.ratings, row.plausible_rate, row.likely_rate
            ));
        }
        out
    }
}

/// Per-dimension plausible and likely rates over kept standard
/// ratings. Implausible rows, if any slip through, are ignored.
pub fn plausibility_summary(kept: &[RatingRecord]) -> PlausibilitySummary {
    let mut tallies: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for record in kept {
        if record.variant != Variant::Standard {
            continue;
        }
        let entry = tallies.entry(&record.dimension).or_default();
        entry.0 += 1;
        if record.rating.is_plausible() {
            entry.1 += 1;
        }
        if record.rating.is_likely() {
            entry.2 += 1;
        }
    }
    let rows = tallies
        .into_iter()
        .map(
            |(dimension, (ratings, plausible, likely))| DimensionPlausibility {
                dimension: dimension.to_string(),
                ratings,
                plausible_rate: plausible as f64 / ratings as f64,
                likely_rate: likely as f64 / ratings as f64,
            },
        )
        .collect();
    PlausibilitySummary { rows }
}
