//! Triplet loss, triplet difficulty categories, online batch-hard mining,
//! pair verification and squared-L2 threshold calibration.
//!
//! All distances here are squared L2 distances between unit embeddings.

use crate::embedding::{squared_l2_distance, Embedding};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MARGIN: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("margin must be positive and finite, got {0}")]
    InvalidMargin(f64),
    #[error("invalid mining config: {0}")]
    InvalidConfig(String),
    #[error("{embeddings} embeddings but {labels} labels")]
    LengthMismatch { embeddings: usize, labels: usize },
    #[error("batch has {len} elements, config allows {max}")]
    BatchTooLarge { len: usize, max: usize },
    #[error("batch has no anchor-positive pair")]
    NoPositivePairs,
    #[error("batch has a single label, no negatives")]
    NoNegatives,
    #[error("threshold must be finite and non-negative, got {0}")]
    InvalidThreshold(f64),
    #[error("calibration needs at least one pair")]
    EmptyPairs,
    #[error("calibration pairs are all {}; falling back to trivial threshold {}", if *.all_same { "same" } else { "different" }, .trivial.threshold)]
    DegenerateCalibration { all_same: bool, trivial: CalibrationResult },
    #[error("distance {0} is not finite and non-negative")]
    InvalidDistance(f64),
    #[error("labeled pairs line {line}: {message}")]
    Malformed { line: usize, message: String },
}

fn check_margin(margin: f64) -> Result<(), MetricError> {
    if margin.is_finite() && margin > 0.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidMargin(margin))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripletCategory {
    Easy,
    SemiHard,
    Hard,
}

/// Hinge loss on precomputed squared distances: `max(0, d_ap − d_an + margin)`.
pub fn triplet_loss_from_distances(d_ap: f64, d_an: f64, margin: f64) -> f64 {
    (d_ap - d_an + margin).max(0.0)
}

/// Category from precomputed squared distances. Easy iff the loss is zero
/// (`d_an ≥ d_ap + margin`); hard iff `d_an ≤ d_ap`; semi-hard in between.
pub fn categorize_distances(d_ap: f64, d_an: f64, margin: f64) -> TripletCategory {
    // Same expression as the loss so "easy" and "zero loss" agree under rounding.
    if d_ap - d_an + margin <= 0.0 {
        TripletCategory::Easy
    } else if d_an <= d_ap {
        TripletCategory::Hard
    } else {
        TripletCategory::SemiHard
    }
}

pub fn triplet_loss(
    anchor: &Embedding,
    positive: &Embedding,
    negative: &Embedding,
    margin: f64,
) -> Result<f64, MetricError> {
    check_margin(margin)?;
    Ok(triplet_loss_from_distances(
        squared_l2_distance(anchor, positive),
        squared_l2_distance(anchor, negative),
        margin,
    ))
}

pub fn categorize(
    anchor: &Embedding,
    positive: &Embedding,
    negative: &Embedding,
    margin: f64,
) -> Result<TripletCategory, MetricError> {
    check_margin(margin)?;
    Ok(categorize_distances(
        squared_l2_distance(anchor, positive),
        squared_l2_distance(anchor, negative),
        margin,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiningConfig {
    pub margin: f64,
    pub batch_size: usize,
    /// Drop zero-loss triplets from the mined set.
    pub drop_easy: bool,
}

impl Default for MiningConfig {
    fn default() -> Self {
        MiningConfig { margin: DEFAULT_MARGIN, batch_size: 32, drop_easy: false }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        check_margin(self.margin)?;
        if self.batch_size < 3 {
            return Err(MetricError::InvalidConfig(format!("batch_size must be at least 3, got {}", self.batch_size)));
        }
        Ok(())
    }
}

/// A mined triplet as batch indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    pub loss: f64,
    pub category: TripletCategory,
}

/// Batch-hard online mining: for every ordered anchor-positive pair with a
/// shared label, pick the different-label element closest to the anchor
/// (lowest index on ties). Output is ordered by anchor, then positive index.
pub fn mine_batch_hard<L: PartialEq>(
    embeddings: &[Embedding],
    labels: &[L],
    config: &MiningConfig,
) -> Result<Vec<Triplet>, MetricError> {
    config.validate()?;
    if embeddings.len() != labels.len() {
        return Err(MetricError::LengthMismatch { embeddings: embeddings.len(), labels: labels.len() });
    }
    let n = embeddings.len();
    if n > config.batch_size {
        return Err(MetricError::BatchTooLarge { len: n, max: config.batch_size });
    }
    let has_positive = (0..n).any(|i| ((i + 1)..n).any(|j| labels[i] == labels[j]));
    if !has_positive {
        return Err(MetricError::NoPositivePairs);
    }
    if labels.iter().all(|l| *l == labels[0]) {
        return Err(MetricError::NoNegatives);
    }

    let mut dist = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_l2_distance(&embeddings[i], &embeddings[j]);
            dist[i][j] = d;
            dist[j][i] = d;
        }
    }

    let mut triplets = Vec::new();
    for a in 0..n {
        let hardest_negative = (0..n)
            .filter(|&k| labels[k] != labels[a])
            .fold(None::<usize>, |best, k| match best {
                Some(b) if dist[a][b] <= dist[a][k] => Some(b),
                _ => Some(k),
            });
        let Some(neg) = hardest_negative else { continue };
        for p in (0..n).filter(|&p| p != a && labels[p] == labels[a]) {
            let loss = triplet_loss_from_distances(dist[a][p], dist[a][neg], config.margin);
            if config.drop_easy && loss == 0.0 {
                continue;
            }
            triplets.push(Triplet {
                anchor: a,
                positive: p,
                negative: neg,
                loss,
                category: categorize_distances(dist[a][p], dist[a][neg], config.margin),
            });
        }
    }
    Ok(triplets)
}

/// Same identity iff `d²(a, b) ≤ threshold`.
pub fn verify_pair(a: &Embedding, b: &Embedding, threshold: f64) -> Result<bool, MetricError> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(MetricError::InvalidThreshold(threshold));
    }
    Ok(squared_l2_distance(a, b) <= threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub a: Embedding,
    pub b: Embedding,
    pub same: bool,
}

impl LabeledPair {
    pub fn distance(&self) -> f64 {
        squared_l2_distance(&self.a, &self.b)
    }
}

/// One line of a labeled-pairs JSONL file: either two embeddings or a
/// precomputed squared distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LabeledSample {
    Pair(LabeledPair),
    Distance { distance: f64, same: bool },
}

impl LabeledSample {
    pub fn scored(&self) -> (f64, bool) {
        match self {
            LabeledSample::Pair(p) => (p.distance(), p.same),
            LabeledSample::Distance { distance, same } => (*distance, *same),
        }
    }
}

/// Parse labeled pairs, one JSON object per line. Blank lines are skipped;
/// line numbers in errors are 1-based.
pub fn parse_labeled_pairs_jsonl(text: &str) -> Result<Vec<LabeledSample>, MetricError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let sample: LabeledSample =
            serde_json::from_str(line).map_err(|e| MetricError::Malformed { line: i + 1, message: e.to_string() })?;
        if let LabeledSample::Distance { distance, .. } = sample {
            if !(distance.is_finite() && distance >= 0.0) {
                return Err(MetricError::Malformed { line: i + 1, message: format!("invalid distance {distance}") });
            }
        }
        out.push(sample);
    }
    Ok(out)
}

/// Outcome of a threshold sweep. Serialized as the calibration report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub threshold: f64,
    pub accuracy: f64,
    pub num_pairs: usize,
    pub candidates_evaluated: usize,
}

/// Pick the verification threshold maximizing accuracy over labeled pairs.
pub fn calibrate_threshold(pairs: &[LabeledPair]) -> Result<CalibrationResult, MetricError> {
    let scored: Vec<(f64, bool)> = pairs.iter().map(|p| (p.distance(), p.same)).collect();
    calibrate_distances(&scored)
}

/// Calibration over `(squared distance, same)` samples.
///
/// Candidates are `0`, the midpoints of adjacent distinct sorted distances,
/// and the maximum distance. The most accurate candidate wins; ties go to the
/// smallest threshold.
pub fn calibrate_distances(samples: &[(f64, bool)]) -> Result<CalibrationResult, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::EmptyPairs);
    }
    if let Some(&(d, _)) = samples.iter().find(|(d, _)| !(d.is_finite() && *d >= 0.0)) {
        return Err(MetricError::InvalidDistance(d));
    }
    let n = samples.len();
    let n_same = samples.iter().filter(|(_, s)| *s).count();
    if n_same == 0 || n_same == n {
        let all_same = n_same == n;
        let trivial = CalibrationResult {
            threshold: if all_same { 4.0 } else { 0.0 },
            accuracy: 1.0,
            num_pairs: n,
            candidates_evaluated: 0,
        };
        return Err(MetricError::DegenerateCalibration { all_same, trivial });
    }

    let mut sorted: Vec<(f64, bool)> = samples.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Distinct distances with per-group label counts.
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &(d, same) in &sorted {
        match groups.last_mut() {
            Some(g) if g.0 == d => {
                if same { g.1 += 1 } else { g.2 += 1 }
            }
            _ => groups.push((d, same as usize, (!same) as usize)),
        }
    }
    let mut candidates = vec![0.0];
    candidates.extend(groups.windows(2).map(|w| (w[0].0 + w[1].0) / 2.0));
    candidates.push(groups[groups.len() - 1].0);
    candidates.dedup();

    // Sweep candidates upward; everything at or below the threshold is "same".
    let n_diff = n - n_same;
    let mut best: Option<(usize, f64)> = None;
    let (mut g, mut same_below, mut diff_below) = (0usize, 0usize, 0usize);
    for &threshold in &candidates {
        while g < groups.len() && groups[g].0 <= threshold {
            same_below += groups[g].1;
            diff_below += groups[g].2;
            g += 1;
        }
        let correct = same_below + (n_diff - diff_below);
        if best.is_none_or(|(c, _)| correct > c) {
            best = Some((correct, threshold));
        }
    }
    let evaluated = candidates.len();

    let (correct, threshold) = best.expect("at least one candidate");
    Ok(CalibrationResult {
        threshold,
        accuracy: correct as f64 / n as f64,
        num_pairs: n,
        candidates_evaluated: evaluated,
    })
}

/// Fraction of pairs `verify_pair` classifies correctly at `threshold`.
pub fn accuracy_at(pairs: &[(f64, bool)], threshold: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let correct = pairs.iter().filter(|(d, same)| (*d <= threshold) == *same).count();
    correct as f64 / pairs.len() as f64
}
