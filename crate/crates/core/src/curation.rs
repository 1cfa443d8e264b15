//! Corpus curation: score-based filtering, split construction with
//! held-out communities, and flat stratified sampling.
//!
//! Scores (story probability, toxicity, sexual explicitness, masked
//! text) are consumed from a sidecar produced by external classifiers,
//! never computed here. All sampling is seeded and deterministic: a
//! community's assignment depends only on the seed and that
//! community's own stories.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Thresholds and sizing knobs for corpus construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurationConfig {
    /// Minimum masked-text length in characters.
    pub min_chars: usize,
    /// Keep stories scored at least this likely to be a story.
    pub story_prob_threshold: f64,
    /// Reject stories scoring at or above this on toxicity or sexual
    /// explicitness.
    pub toxicity_threshold: f64,
    pub excluded_communities: BTreeSet<String>,
    /// (train, val, test) fractions; must sum to 1.
    pub split_ratios: (f64, f64, f64),
    /// Communities with fewer kept stories than this are dropped.
    pub min_stories_per_community: usize,
    /// Communities reserved for evaluation only.
    pub heldout_community_count: usize,
    /// Share of each evaluation split that held-out stories should
    /// approximate.
    pub heldout_fraction: f64,
    /// Stories drawn per community by [`build_stratified`].
    pub stratified_sample_size: usize,
    pub rng_seed: u64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        CurationConfig {
            min_chars: 175,
            story_prob_threshold: 0.7,
            toxicity_threshold: 0.5,
            excluded_communities: BTreeSet::new(),
            split_ratios: (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0),
            min_stories_per_community: 45,
            heldout_community_count: 5,
            heldout_fraction: 0.10,
            stratified_sample_size: 45,
            rng_seed: 0,
        }
    }
}

impl CurationConfig {
    pub fn validate(&self) -> Result<(), CurationError> {
        let (train, val, test) = self.split_ratios;
        let sum = train + val + test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CurationError::InvalidConfig {
                message: format!("split ratios sum to {sum}, expected 1"),
            });
        }
        if !(0.0..=1.0).contains(&train) || !(0.0..=1.0).contains(&val) || !(0.0..=1.0).contains(&test)
        {
            return Err(CurationError::InvalidConfig {
                message: "split ratios must lie in [0, 1]".to_string(),
            });
        }
        for (name, value) in [
            ("story_prob_threshold", self.story_prob_threshold),
            ("toxicity_threshold", self.toxicity_threshold),
            ("heldout_fraction", self.heldout_fraction),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(CurationError::InvalidConfig {
                    message: format!("{name} must lie in [0, 1], got {value}"),
                });
            }
        }
        Ok(())
    }
}

/// Classifier outputs for one candidate story.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredText {
    pub story_probability: f64,
    pub toxicity: f64,
    pub sexually_explicit: f64,
    /// Story text with personal identifiers already masked.
    pub masked_text: String,
}

/// A candidate story joined with its scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredStory {
    pub id: String,
    pub community: String,
    pub scores: ScoredText,
}

/// One line of the score sidecar file. `masked_text` may be omitted
/// when the corpus text is already masked.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreSidecarRecord {
    pub id: String,
    pub story_probability: f64,
    pub toxicity: f64,
    pub sexually_explicit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masked_text: Option<String>,
}

#[derive(Debug, Error)]
pub enum CurationError {
    #[error("invalid curation config: {message}")]
    InvalidConfig { message: String },
    #[error("no score record for candidate {id}")]
    MissingScore { id: String },
    #[error("score out of [0, 1] for candidate {id}: {field} = {value}")]
    InvalidScore {
        id: String,
        field: &'static str,
        value: f64,
    },
    #[error("score sidecar line {line}: {message}")]
    SidecarParse { line: usize, message: String },
    #[error("{eligible} eligible communities, need at least {needed} to reserve held-out ones")]
    NotEnoughCommunities { eligible: usize, needed: usize },
}

/// Why a candidate was rejected; the first failing gate wins so audit
/// diffs stay stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    TooShort,
    StoryProbability,
    Toxicity,
    SexuallyExplicit,
    ExcludedCommunity,
}

impl RejectionReason {
    pub fn slug(self) -> &'static str {
        match self {
            RejectionReason::TooShort => "too_short",
            RejectionReason::StoryProbability => "story_probability",
            RejectionReason::Toxicity => "toxicity",
            RejectionReason::SexuallyExplicit => "sexually_explicit",
            RejectionReason::ExcludedCommunity => "excluded_community",
        }
    }
}

impl fmt::Display for RejectionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

/// Filter result: kept ids plus one reason per rejected id, both in
/// input order.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<String>,
    pub rejections: Vec<(String, RejectionReason)>,
}

impl FilterOutcome {
    /// Rejection counts keyed by reason slug, plus kept/total.
    pub fn report(&self) -> CurationReport {
        let mut by_reason = BTreeMap::new();
        for (_, reason) in &self.rejections {
            *by_reason.entry(reason.slug().to_string()).or_insert(0) += 1;
        }
        CurationReport {
            total: self.kept.len() + self.rejections.len(),
            kept: self.kept.len(),
            rejected: by_reason,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurationReport {
    pub total: usize,
    pub kept: usize,
    pub rejected: BTreeMap<String, usize>,
}

/// Reads the score sidecar JSONL, keyed by candidate id.
pub fn read_score_sidecar<R: BufRead>(
    reader: R,
) -> Result<BTreeMap<String, ScoreSidecarRecord>, CurationError> {
    let mut records = BTreeMap::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CurationError::SidecarParse {
            line: index + 1,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ScoreSidecarRecord =
            serde_json::from_str(&line).map_err(|e| CurationError::SidecarParse {
                line: index + 1,
                message: e.to_string(),
            })?;
        records.insert(record.id.clone(), record);
    }
    Ok(records)
}

/// Joins candidates with their sidecar scores. A candidate without a
/// score record is an error; a sidecar without masked text falls back
/// to the candidate's own text.
pub fn attach_scores(
    candidates: &[(String, String, String)],
    sidecar: &BTreeMap<String, ScoreSidecarRecord>,
) -> Result<Vec<ScoredStory>, CurationError> {
    let mut stories = Vec::with_capacity(candidates.len());
    for (id, community, text) in candidates {
        let record = sidecar
            .get(id)
            .ok_or_else(|| CurationError::MissingScore { id: id.clone() })?;
        for (field, value) in [
            ("story_probability", record.story_probability),
            ("toxicity", record.toxicity),
            ("sexually_explicit", record.sexually_explicit),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(CurationError::InvalidScore {
                    id: id.clone(),
                    field,
                    value,
                });
            }
        }
        stories.push(ScoredStory {
            id: id.clone(),
            community: community.clone(),
            scores: ScoredText {
                story_probability: record.story_probability,
                toxicity: record.toxicity,
                sexually_explicit: record.sexually_explicit,
                masked_text: record
                    .masked_text
                    .clone()
                    .unwrap_or_else(|| text.clone()),
            },
        });
    }
    Ok(stories)
}

/// Applies the keep gates in order: length, story probability,
/// toxicity, sexual explicitness, community exclusion.
pub fn apply_filters(stories: &[ScoredStory], cfg: &CurationConfig) -> FilterOutcome {
    let mut kept = Vec::new();
    let mut rejections = Vec::new();
    for story in stories {
        let reason = if story.scores.masked_text.chars().count() < cfg.min_chars {
            Some(RejectionReason::TooShort)
        } else if story.scores.story_probability < cfg.story_prob_threshold {
            Some(RejectionReason::StoryProbability)
        } else if story.scores.toxicity >= cfg.toxicity_threshold {
            Some(RejectionReason::Toxicity)
        } else if story.scores.sexually_explicit >= cfg.toxicity_threshold {
            Some(RejectionReason::SexuallyExplicit)
        } else if cfg.excluded_communities.contains(&story.community) {
            Some(RejectionReason::ExcludedCommunity)
        } else {
            None
        };
        match reason {
            Some(reason) => rejections.push((story.id.clone(), reason)),
            None => kept.push(story.id.clone()),
        }
    }
    FilterOutcome { kept, rejections }
}

/// Which split a story landed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// One story's placement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignedStory {
    pub id: String,
    pub community: String,
    pub split: Split,
    pub heldout: bool,
}

/// Full split construction output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub assignments: Vec<AssignedStory>,
    /// Held-out communities and the evaluation split each landed in.
    pub heldout_communities: BTreeMap<String, Split>,
    /// Communities dropped for having too few stories, with counts.
    pub excluded_small_communities: BTreeMap<String, usize>,
    /// Achieved held-out share of val and test.
    pub heldout_val_fraction: f64,
    pub heldout_test_fraction: f64,
}

impl SplitAssignment {
    pub fn count(&self, split: Split) -> usize {
        self.assignments.iter().filter(|a| a.split == split).count()
    }
}

fn mix_seed(seed: u64, salt: &str, name: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(salt.as_bytes());
    hasher.update([0u8]);
    hasher.update(name.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Splits `n` items across the ratios so that every count differs from
/// its exact quota by less than 1 (largest-remainder apportionment).
/// Leftover seats go to the largest fractional remainders, earlier
/// splits first on ties.
pub fn apportion(n: usize, ratios: (f64, f64, f64)) -> [usize; 3] {
    let quotas = [
        n as f64 * ratios.0,
        n as f64 * ratios.1,
        n as f64 * ratios.2,
    ];
    let mut counts = [0usize; 3];
    let mut remainders = [0f64; 3];
    for i in 0..3 {
        counts[i] = quotas[i].floor() as usize;
        remainders[i] = quotas[i] - quotas[i].floor();
    }
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        remainders[b]
            .partial_cmp(&remainders[a])
            .expect("remainders are finite")
            .then(a.cmp(&b))
    });
    for i in 0..n.saturating_sub(assigned) {
        counts[order[i % 3]] += 1;
    }
    counts
}

/// Picks `k` communities whose combined story mass best approximates
/// the target; exhaustive for small pools, greedy swap search beyond.
fn choose_heldout(
    sizes: &[(String, usize)],
    k: usize,
    target_mass: f64,
) -> Vec<usize> {
    let n = sizes.len();
    let score = |subset: &[usize]| {
        let mass: usize = subset.iter().map(|&i| sizes[i].1).sum();
        (mass as f64 - target_mass).abs()
    };
    let mut combinations = 1f64;
    for i in 0..k {
        combinations *= (n - i) as f64 / (i + 1) as f64;
    }
    if combinations <= 250_000.0 {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut current: Vec<usize> = (0..k).collect();
        loop {
            let s = score(&current);
            if best.as_ref().is_none_or(|(b, _)| s < b - 1e-12) {
                best = Some((s, current.clone()));
            }
            // Advance to the next k-combination in lexicographic order.
            let mut i = k;
            loop {
                if i == 0 {
                    return best.expect("at least one combination scored").1;
                }
                i -= 1;
                if current[i] < n - (k - i) {
                    current[i] += 1;
                    for j in i + 1..k {
                        current[j] = current[j - 1] + 1;
                    }
                    break;
                }
            }
        }
    }
    // Start from the k smallest communities, then improve by single
    // swaps until no swap reduces the distance to the target.
    let mut by_size: Vec<usize> = (0..n).collect();
    by_size.sort_by_key(|&i| (sizes[i].1, sizes[i].0.clone()));
    let mut chosen: Vec<usize> = by_size[..k].to_vec();
    loop {
        let current_score = score(&chosen);
        let mut improved = false;
        'outer: for slot in 0..k {
            for candidate in 0..n {
                if chosen.contains(&candidate) {
                    continue;
                }
                let mut trial = chosen.clone();
                trial[slot] = candidate;
                if score(&trial) < current_score - 1e-12 {
                    chosen = trial;
                    improved = true;
                    break 'outer;
                }
            }
        }
        if !improved {
            chosen.sort_unstable();
            return chosen;
        }
    }
}

/// Builds the train/val/test assignment.
///
/// Communities below `min_stories_per_community` are dropped and
/// reported. When `heldout_fraction` and `heldout_community_count` are
/// both positive, that many communities are reserved: each lands
/// wholly in val or wholly in test, divided so held-out stories best
/// approximate `heldout_fraction` of each evaluation split. All other
/// communities are split per the ratios with largest-remainder
/// rounding, independently shuffled per community.
pub fn build_splits(
    stories: &[ScoredStory],
    cfg: &CurationConfig,
) -> Result<SplitAssignment, CurationError> {
    cfg.validate()?;
    let mut by_community: BTreeMap<&str, Vec<&ScoredStory>> = BTreeMap::new();
    for story in stories {
        by_community.entry(&story.community).or_default().push(story);
    }
    for members in by_community.values_mut() {
        members.sort_by(|a, b| a.id.cmp(&b.id));
    }

    let mut excluded_small = BTreeMap::new();
    by_community.retain(|community, members| {
        if members.len() < cfg.min_stories_per_community {
            excluded_small.insert(community.to_string(), members.len());
            false
        } else {
            true
        }
    });

    let eligible: Vec<(String, usize)> = by_community
        .iter()
        .map(|(community, members)| (community.to_string(), members.len()))
        .collect();
    let total: usize = eligible.iter().map(|(_, n)| n).sum();

    let reserve = cfg.heldout_fraction > 0.0 && cfg.heldout_community_count > 0;
    let heldout_names: BTreeSet<String> = if reserve {
        if eligible.len() < cfg.heldout_community_count {
            return Err(CurationError::NotEnoughCommunities {
                eligible: eligible.len(),
                needed: cfg.heldout_community_count,
            });
        }
        let f = cfg.heldout_fraction;
        let eval_share = cfg.split_ratios.1 + cfg.split_ratios.2;
        let target_mass = f * eval_share * total as f64 / (1.0 - f + f * eval_share);
        choose_heldout(&eligible, cfg.heldout_community_count, target_mass)
            .into_iter()
            .map(|i| eligible[i].0.clone())
            .collect()
    } else {
        BTreeSet::new()
    };

    // Regular communities: seeded shuffle, then largest-remainder cut.
    let mut assignments = Vec::new();
    let mut regular_val = 0usize;
    let mut regular_test = 0usize;
    for (community, members) in &by_community {
        if heldout_names.contains(*community) {
            continue;
        }
        let mut shuffled: Vec<&ScoredStory> = members.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.rng_seed, "split", community));
        shuffled.shuffle(&mut rng);
        let [n_train, n_val, n_test] = apportion(shuffled.len(), cfg.split_ratios);
        regular_val += n_val;
        regular_test += n_test;
        for (index, story) in shuffled.iter().enumerate() {
            let split = if index < n_train {
                Split::Train
            } else if index < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            assignments.push(AssignedStory {
                id: story.id.clone(),
                community: story.community.clone(),
                split,
                heldout: false,
            });
        }
        debug_assert_eq!(n_train + n_val + n_test, shuffled.len());
    }

    // Held-out communities: try every val/test division and keep the
    // one whose held-out share of each evaluation split sits closest
    // to the configured fraction.
    let heldout_sizes: Vec<(&String, usize)> = heldout_names
        .iter()
        .map(|name| (name, by_community[name.as_str()].len()))
        .collect();
    let mut heldout_communities = BTreeMap::new();
    let mut heldout_val = 0usize;
    let mut heldout_test = 0usize;
    if !heldout_sizes.is_empty() {
        let f = cfg.heldout_fraction;
        let mut best: Option<(f64, u32)> = None;
        for mask in 0u32..(1 << heldout_sizes.len()) {
            let mut val_mass = 0usize;
            let mut test_mass = 0usize;
            for (bit, (_, size)) in heldout_sizes.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    val_mass += size;
                } else {
                    test_mass += size;
                }
            }
            let val_frac = val_mass as f64 / (val_mass + regular_val).max(1) as f64;
            let test_frac = test_mass as f64 / (test_mass + regular_test).max(1) as f64;
            let error = (val_frac - f).powi(2) + (test_frac - f).powi(2);
            if best.is_none_or(|(b, _)| error < b - 1e-15) {
                best = Some((error, mask));
            }
        }
        let mask = best.expect("at least one division scored").1;
        for (bit, (name, size)) in heldout_sizes.iter().enumerate() {
            let split = if mask & (1 << bit) != 0 {
                heldout_val += size;
                Split::Val
            } else {
                heldout_test += size;
                Split::Test
            };
            heldout_communities.insert((*name).clone(), split);
            for story in &by_community[name.as_str()] {
                assignments.push(AssignedStory {
                    id: story.id.clone(),
                    community: story.community.clone(),
                    split,
                    heldout: true,
                });
            }
        }
    }

    assignments.sort_by(|a, b| (&a.community, &a.id).cmp(&(&b.community, &b.id)));
    let val_total = regular_val + heldout_val;
    let test_total = regular_test + heldout_test;
    Ok(SplitAssignment {
        assignments,
        heldout_communities,
        excluded_small_communities: excluded_small,
        heldout_val_fraction: if val_total == 0 {
            0.0
        } else {
            heldout_val as f64 / val_total as f64
        },
        heldout_test_fraction: if test_total == 0 {
            0.0
        } else {
            heldout_test as f64 / test_total as f64
        },
    })
}

/// Flat stratified sample output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedSample {
    /// Sampled story ids with their communities, sorted by
    /// (community, id).
    pub stories: Vec<(String, String)>,
    /// Communities with too few stories to sample from, with counts.
    pub excluded: BTreeMap<String, usize>,
}

/// Draws exactly `stratified_sample_size` stories per community with
/// enough stories; smaller communities are excluded and reported.
pub fn build_stratified(stories: &[ScoredStory], cfg: &CurationConfig) -> StratifiedSample {
    let mut by_community: BTreeMap<&str, Vec<&ScoredStory>> = BTreeMap::new();
    for story in stories {
        by_community.entry(&story.community).or_default().push(story);
    }
    let mut sampled = Vec::new();
    let mut excluded = BTreeMap::new();
    for (community, mut members) in by_community {
        if members.len() < cfg.stratified_sample_size {
            excluded.insert(community.to_string(), members.len());
            continue;
        }
        members.sort_by(|a, b| a.id.cmp(&b.id));
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.rng_seed, "stratified", community));
        members.shuffle(&mut rng);
        for story in members.into_iter().take(cfg.stratified_sample_size) {
            sampled.push((story.id.clone(), story.community.clone()));
        }
    }
    sampled.sort();
    StratifiedSample {
        stories: sampled,
        excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::io::Cursor;

    fn story(id: &str, community: &str, prob: f64, tox: f64, sex: f64, len: usize) -> ScoredStory {
        ScoredStory {
            id: id.to_string(),
            community: community.to_string(),
            scores: ScoredText {
                story_probability: prob,
                toxicity: tox,
                sexually_explicit: sex,
                masked_text: "x".repeat(len),
            },
        }
    }

    fn corpus(communities: &[(&str, usize)]) -> Vec<ScoredStory> {
        let mut stories = Vec::new();
        for (community, n) in communities {
            for i in 0..*n {
                stories.push(story(
                    &format!("{community}-{i:04}"),
                    community,
                    0.9,
                    0.1,
                    0.1,
                    200,
                ));
            }
        }
        stories
    }

    #[test]
    fn filter_gates_match_thresholds_exactly() {
        let cfg = CurationConfig::default();
        let cases = vec![
            (story("keep", "c", 0.9, 0.1, 0.1, 200), None),
            (
                story("short", "c", 0.9, 0.1, 0.1, 174),
                Some(RejectionReason::TooShort),
            ),
            (story("len-exact", "c", 0.9, 0.1, 0.1, 175), None),
            (
                story("prob", "c", 0.69, 0.1, 0.1, 200),
                Some(RejectionReason::StoryProbability),
            ),
            (story("prob-exact", "c", 0.7, 0.1, 0.1, 200), None),
            (
                story("tox", "c", 0.95, 0.50, 0.1, 200),
                Some(RejectionReason::Toxicity),
            ),
            (story("tox-under", "c", 0.95, 0.49, 0.1, 200), None),
            (
                story("sex", "c", 0.95, 0.1, 0.5, 200),
                Some(RejectionReason::SexuallyExplicit),
            ),
        ];
        for (candidate, expected) in cases {
            let outcome = apply_filters(std::slice::from_ref(&candidate), &cfg);
            match expected {
                None => assert_eq!(outcome.kept, vec![candidate.id.clone()], "{}", candidate.id),
                Some(reason) => {
                    assert_eq!(
                        outcome.rejections,
                        vec![(candidate.id.clone(), reason)],
                        "{}",
                        candidate.id
                    );
                }
            }
        }
    }

    #[test]
    fn first_failing_gate_wins() {
        let mut cfg = CurationConfig::default();
        cfg.excluded_communities.insert("banned".to_string());
        // Fails every gate; the length gate is reported.
        let outcome = apply_filters(&[story("multi", "banned", 0.1, 0.9, 0.9, 10)], &cfg);
        assert_eq!(
            outcome.rejections,
            vec![("multi".to_string(), RejectionReason::TooShort)]
        );
        // Passes everything except community exclusion.
        let outcome = apply_filters(&[story("last", "banned", 0.9, 0.1, 0.1, 200)], &cfg);
        assert_eq!(
            outcome.rejections,
            vec![("last".to_string(), RejectionReason::ExcludedCommunity)]
        );
    }

    #[test]
    fn report_counts_by_reason() {
        let cfg = CurationConfig::default();
        let stories = vec![
            story("a", "c", 0.9, 0.1, 0.1, 200),
            story("b", "c", 0.1, 0.1, 0.1, 200),
            story("c", "c", 0.2, 0.1, 0.1, 200),
            story("d", "c", 0.9, 0.9, 0.1, 200),
        ];
        let report = apply_filters(&stories, &cfg).report();
        assert_eq!(report.total, 4);
        assert_eq!(report.kept, 1);
        assert_eq!(report.rejected["story_probability"], 2);
        assert_eq!(report.rejected["toxicity"], 1);
    }

    #[test]
    fn filtering_is_monotone_in_story_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let stories: Vec<ScoredStory> = (0..300)
            .map(|i| {
                story(
                    &format!("s{i}"),
                    "c",
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(0.0..1.0),
                    rng.random_range(100..300),
                )
            })
            .collect();
        let mut last_kept: Option<Vec<String>> = None;
        for threshold in [0.9, 0.7, 0.5, 0.3, 0.0] {
            let cfg = CurationConfig {
                story_prob_threshold: threshold,
                ..CurationConfig::default()
            };
            let kept = apply_filters(&stories, &cfg).kept;
            if let Some(previous) = &last_kept {
                for id in previous {
                    assert!(kept.contains(id), "lowering threshold dropped {id}");
                }
            }
            last_kept = Some(kept);
        }
    }

    #[test]
    fn missing_and_invalid_scores_are_named() {
        let sidecar = read_score_sidecar(Cursor::new(
            r#"{"id":"a","story_probability":0.9,"toxicity":0.1,"sexually_explicit":0.0}
{"id":"bad","story_probability":1.5,"toxicity":0.1,"sexually_explicit":0.0}"#,
        ))
        .unwrap();
        let missing = attach_scores(
            &[("ghost".to_string(), "c".to_string(), "text".to_string())],
            &sidecar,
        )
        .unwrap_err();
        assert!(missing.to_string().contains("ghost"));

        let invalid = attach_scores(
            &[("bad".to_string(), "c".to_string(), "text".to_string())],
            &sidecar,
        )
        .unwrap_err();
        assert!(invalid.to_string().contains("bad"));
        assert!(invalid.to_string().contains("story_probability"));
    }

    #[test]
    fn sidecar_masked_text_overrides_candidate_text() {
        let sidecar = read_score_sidecar(Cursor::new(
            r#"{"id":"a","story_probability":0.9,"toxicity":0.1,"sexually_explicit":0.0,"masked_text":"masked version"}"#,
        ))
        .unwrap();
        let stories = attach_scores(
            &[("a".to_string(), "c".to_string(), "original".to_string())],
            &sidecar,
        )
        .unwrap();
        assert_eq!(stories[0].scores.masked_text, "masked version");
    }

    #[test]
    fn apportionment_stays_within_one_of_quota() {
        let ratios = (2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0);
        for n in 0..500 {
            let counts = apportion(n, ratios);
            assert_eq!(counts.iter().sum::<usize>(), n);
            for (count, ratio) in counts.iter().zip([ratios.0, ratios.1, ratios.2]) {
                assert!(
                    (*count as f64 - n as f64 * ratio).abs() < 1.0,
                    "n={n}: count {count} vs quota {}",
                    n as f64 * ratio
                );
            }
        }
        // 45 stories: quotas 30 / 7.5 / 7.5; the leftover seat goes to
        // the earlier of the tied evaluation splits.
        assert_eq!(apportion(45, ratios), [30, 8, 7]);
        assert_eq!(apportion(60, ratios), [40, 10, 10]);
    }

    fn default_with(seed: u64) -> CurationConfig {
        CurationConfig {
            rng_seed: seed,
            ..CurationConfig::default()
        }
    }

    #[test]
    fn splits_partition_and_respect_heldout_rules() {
        let stories = corpus(&[
            ("alpha", 60),
            ("bravo", 60),
            ("charlie", 60),
            ("delta", 60),
            ("echo", 60),
            ("foxtrot", 60),
            ("golf", 60),
            ("hotel", 60),
            ("india", 60),
            ("juliet", 60),
            ("kilo", 60),
            ("lima", 60),
        ]);
        let assignment = build_splits(&stories, &default_with(11)).unwrap();
        assert_eq!(assignment.assignments.len(), stories.len());
        assert_eq!(assignment.heldout_communities.len(), 5);

        let mut seen = BTreeSet::new();
        for assigned in &assignment.assignments {
            assert!(seen.insert(&assigned.id), "{} assigned twice", assigned.id);
            let reserved = assignment.heldout_communities.get(&assigned.community);
            match reserved {
                Some(split) => {
                    assert!(assigned.heldout);
                    assert_eq!(assigned.split, *split);
                    assert_ne!(assigned.split, Split::Train);
                }
                None => {
                    assert!(!assigned.heldout);
                }
            }
        }

        // Regular communities stay within one story of exact quotas.
        for community in ["alpha", "bravo", "charlie"] {
            if assignment.heldout_communities.contains_key(community) {
                continue;
            }
            for (split, ratio) in [
                (Split::Train, 2.0 / 3.0),
                (Split::Val, 1.0 / 6.0),
                (Split::Test, 1.0 / 6.0),
            ] {
                let count = assignment
                    .assignments
                    .iter()
                    .filter(|a| a.community == community && a.split == split)
                    .count();
                assert!((count as f64 - 60.0 * ratio).abs() < 1.0);
            }
        }
        // Twelve equal communities cannot approach a 10% held-out
        // share; the division is still reported and bounded.
        for fraction in [
            assignment.heldout_val_fraction,
            assignment.heldout_test_fraction,
        ] {
            assert!((0.0..=1.0).contains(&fraction), "fraction {fraction}");
        }
        let heldout_total = assignment
            .assignments
            .iter()
            .filter(|a| a.heldout)
            .count();
        assert_eq!(heldout_total, 5 * 60);
    }

    #[test]
    fn same_seed_reproduces_different_seed_varies() {
        let stories = corpus(&[("a", 60), ("b", 60), ("c", 60), ("d", 60), ("e", 60), ("f", 60)]);
        let cfg = CurationConfig {
            heldout_fraction: 0.0,
            ..default_with(3)
        };
        let first = build_splits(&stories, &cfg).unwrap();
        let second = build_splits(&stories, &cfg).unwrap();
        assert_eq!(first, second);

        let other = build_splits(
            &stories,
            &CurationConfig {
                heldout_fraction: 0.0,
                ..default_with(4)
            },
        )
        .unwrap();
        assert_ne!(first.assignments, other.assignments);
    }

    #[test]
    fn zero_heldout_fraction_disables_reservation() {
        let stories = corpus(&[("a", 60), ("b", 60), ("c", 60)]);
        let cfg = CurationConfig {
            heldout_fraction: 0.0,
            ..default_with(5)
        };
        let assignment = build_splits(&stories, &cfg).unwrap();
        assert!(assignment.heldout_communities.is_empty());
        assert!(assignment.assignments.iter().all(|a| !a.heldout));
        assert_eq!(assignment.heldout_val_fraction, 0.0);
    }

    #[test]
    fn too_few_communities_for_heldout_is_an_error() {
        let stories = corpus(&[("a", 60), ("b", 60), ("c", 60)]);
        let err = build_splits(&stories, &default_with(0)).unwrap_err();
        match err {
            CurationError::NotEnoughCommunities { eligible, needed } => {
                assert_eq!(eligible, 3);
                assert_eq!(needed, 5);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn small_communities_are_dropped_and_reported() {
        let mut stories = corpus(&[("big", 60), ("huge", 90)]);
        stories.extend(corpus(&[("tiny", 10)]));
        let cfg = CurationConfig {
            heldout_fraction: 0.0,
            ..default_with(1)
        };
        let assignment = build_splits(&stories, &cfg).unwrap();
        assert_eq!(assignment.excluded_small_communities["tiny"], 10);
        assert!(assignment.assignments.iter().all(|a| a.community != "tiny"));
        assert_eq!(assignment.assignments.len(), 150);
    }

    #[test]
    fn heldout_share_approximates_the_target() {
        // 20 communities of 45 plus 5 of 8: the small communities sum
        // close to the mass a 10% evaluation share calls for, so they
        // are the natural held-out pick and the achieved fractions
        // land near the target.
        let mut spec: Vec<(String, usize)> = (0..20).map(|i| (format!("big{i:02}"), 45)).collect();
        spec.extend((0..5).map(|i| (format!("small{i}"), 8)));
        let stories = corpus(
            &spec
                .iter()
                .map(|(name, n)| (name.as_str(), *n))
                .collect::<Vec<_>>(),
        );
        let cfg = CurationConfig {
            min_stories_per_community: 8,
            ..default_with(9)
        };
        let assignment = build_splits(&stories, &cfg).unwrap();
        assert_eq!(assignment.heldout_communities.len(), 5);
        for name in assignment.heldout_communities.keys() {
            assert!(name.starts_with("small"), "picked {name}");
        }
        assert!(
            (assignment.heldout_val_fraction - 0.10).abs() < 0.05,
            "val fraction {}",
            assignment.heldout_val_fraction
        );
        assert!(
            (assignment.heldout_test_fraction - 0.10).abs() < 0.05,
            "test fraction {}",
            assignment.heldout_test_fraction
        );
    }

    #[test]
    fn randomized_split_counts_match_apportionment_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for round in 0..50 {
            let mut names = Vec::new();
            let n_communities = rng.random_range(6..12);
            for i in 0..n_communities {
                names.push((format!("c{i}"), rng.random_range(45..120)));
            }
            let stories = corpus(
                &names
                    .iter()
                    .map(|(name, n)| (name.as_str(), *n))
                    .collect::<Vec<_>>(),
            );
            let cfg = CurationConfig {
                heldout_fraction: 0.0,
                ..default_with(round)
            };
            let assignment = build_splits(&stories, &cfg).unwrap();
            for (name, n) in &names {
                let counts = apportion(*n, cfg.split_ratios);
                for (split, expected) in [Split::Train, Split::Val, Split::Test].iter().zip(counts)
                {
                    let got = assignment
                        .assignments
                        .iter()
                        .filter(|a| &a.community == name && a.split == *split)
                        .count();
                    assert_eq!(got, expected, "{name} {split}");
                }
            }
        }
    }

    #[test]
    fn stratified_draws_exactly_the_sample_size() {
        let stories = corpus(&[("a", 60), ("b", 45), ("c", 44)]);
        let cfg = default_with(2);
        let sample = build_stratified(&stories, &cfg);
        assert_eq!(sample.stories.len(), 90);
        assert_eq!(sample.excluded["c"], 44);
        for community in ["a", "b"] {
            assert_eq!(
                sample
                    .stories
                    .iter()
                    .filter(|(_, c)| c == community)
                    .count(),
                45
            );
        }
        let again = build_stratified(&stories, &cfg);
        assert_eq!(sample, again);
    }

    #[test]
    fn stratified_sample_size_one_is_seed_stable() {
        let stories = corpus(&[("a", 60), ("b", 60)]);
        let cfg = CurationConfig {
            stratified_sample_size: 1,
            ..default_with(77)
        };
        let first = build_stratified(&stories, &cfg);
        assert_eq!(first.stories.len(), 2);
        assert_eq!(first, build_stratified(&stories, &cfg));
    }

    #[test]
    fn config_validation_rejects_bad_ratios_and_thresholds() {
        let mut cfg = CurationConfig::default();
        cfg.split_ratios = (0.5, 0.2, 0.2);
        assert!(matches!(
            cfg.validate(),
            Err(CurationError::InvalidConfig { .. })
        ));
        let mut cfg = CurationConfig::default();
        cfg.story_prob_threshold = 1.2;
        assert!(cfg.validate().is_err());
        assert!(CurationConfig::default().validate().is_ok());
    }
}
