//! Pair-verification benchmark over an LFW-layout dataset, the calibration
//! holdout protocol, and the subset-size ablation.

use crate::detection::{crop_and_resize, BoundingBox};
use crate::embedding::{embed, squared_l2_distance, Embedding};
use crate::imaging::decode_frame;
use crate::metric::{accuracy_at, calibrate_distances, CalibrationResult, MetricError};
use crate::pipeline::{FacePipeline, PipelineError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("io error at {path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("pair list line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("pair list line {line}: image {image} not found in dataset")]
    MissingImage { line: usize, image: String },
    #[error("image {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("need at least {required} pairs, got {got}")]
    TooFewPairs { required: usize, got: usize },
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

fn io_err(path: &Path, e: std::io::Error) -> DatasetError {
    DatasetError::Io { path: path.to_path_buf(), message: e.to_string() }
}

const IMAGE_EXTENSIONS: [&str; 3] = ["jpg", "jpeg", "png"];

/// Index of an LFW-layout tree: `root/<Name>/<Name>_<NNNN>.<ext>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub identities: BTreeMap<String, BTreeMap<u32, PathBuf>>,
    pub image_count: usize,
    pub identity_count: usize,
}

impl DatasetManifest {
    /// Scan `root`. Files that do not follow the naming scheme are skipped.
    pub fn scan(root: &Path) -> Result<Self, DatasetError> {
        let mut identities = BTreeMap::new();
        for entry in std::fs::read_dir(root).map_err(|e| io_err(root, e))? {
            let entry = entry.map_err(|e| io_err(root, e))?;
            let dir = entry.path();
            if !dir.is_dir() {
                continue;
            }
            let Some(name) = dir.file_name().and_then(|n| n.to_str()).map(str::to_string) else { continue };
            let mut images = BTreeMap::new();
            for file in std::fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
                let path = file.map_err(|e| io_err(&dir, e))?.path();
                if let Some(idx) = parse_image_name(&path, &name) {
                    images.insert(idx, path);
                }
            }
            if !images.is_empty() {
                identities.insert(name, images);
            }
        }
        Ok(Self::from_identities(root.to_path_buf(), identities))
    }

    pub fn from_identities(root: PathBuf, identities: BTreeMap<String, BTreeMap<u32, PathBuf>>) -> Self {
        let image_count = identities.values().map(BTreeMap::len).sum();
        let identity_count = identities.len();
        DatasetManifest { root, identities, image_count, identity_count }
    }

    pub fn resolve(&self, image: &ImageRef) -> Option<&Path> {
        self.identities.get(&image.name)?.get(&image.index).map(PathBuf::as_path)
    }
}

fn parse_image_name(path: &Path, identity: &str) -> Option<u32> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if !IMAGE_EXTENSIONS.contains(&ext.as_str()) {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    let digits = stem.strip_prefix(identity)?.strip_prefix('_')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImageRef {
    pub name: String,
    pub index: u32,
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{:04}", self.name, self.index)
    }
}

/// One line of a pair list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairRef {
    pub a: ImageRef,
    pub b: ImageRef,
    pub same: bool,
    /// 1-based source line.
    pub line: usize,
}

/// Parse a pair list. Lines are `name i j` (same identity) or
/// `name1 i name2 j` (different identities), whitespace separated. The first
/// non-blank line may be a header of one or two integers (e.g. `10 300`).
pub fn parse_pair_list(text: &str) -> Result<Vec<PairRef>, DatasetError> {
    let mut out = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let first_content = !seen_content;
        seen_content = true;
        let index = |t: &str| {
            t.parse::<u32>().map_err(|_| DatasetError::Parse { line, message: format!("invalid image index {t:?}") })
        };
        match tokens.as_slice() {
            [_] | [_, _] if first_content && tokens.iter().all(|t| t.parse::<u64>().is_ok()) => {}
            [name, i, j] => {
                let a = ImageRef { name: name.to_string(), index: index(i)? };
                let b = ImageRef { name: name.to_string(), index: index(j)? };
                out.push(PairRef { a, b, same: true, line });
            }
            [n1, i, n2, j] => {
                if n1 == n2 {
                    return Err(DatasetError::Parse {
                        line,
                        message: "different-identity line names the same identity twice".into(),
                    });
                }
                let a = ImageRef { name: n1.to_string(), index: index(i)? };
                let b = ImageRef { name: n2.to_string(), index: index(j)? };
                out.push(PairRef { a, b, same: false, line });
            }
            _ => {
                return Err(DatasetError::Parse { line, message: format!("expected 3 or 4 fields, got {}", tokens.len()) });
            }
        }
    }
    Ok(out)
}

/// Serialize pairs back into the pair-list grammar, preceded by a `1 N` header.
pub fn format_pair_list(pairs: &[PairRef]) -> String {
    let mut out = format!("1\t{}\n", pairs.len());
    for p in pairs {
        if p.same {
            out.push_str(&format!("{}\t{}\t{}\n", p.a.name, p.a.index, p.b.index));
        } else {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", p.a.name, p.a.index, p.b.name, p.b.index));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResolvedPair {
    pub a: PathBuf,
    pub b: PathBuf,
    pub same: bool,
    pub line: usize,
}

/// Resolve every pair against the manifest.
pub fn load_pairs(manifest: &DatasetManifest, pair_list: &str) -> Result<Vec<ResolvedPair>, DatasetError> {
    parse_pair_list(pair_list)?
        .into_iter()
        .map(|p| {
            let find = |r: &ImageRef| {
                manifest
                    .resolve(r)
                    .map(Path::to_path_buf)
                    .ok_or_else(|| DatasetError::MissingImage { line: p.line, image: r.to_string() })
            };
            Ok(ResolvedPair { a: find(&p.a)?, b: find(&p.b)?, same: p.same, line: p.line })
        })
        .collect()
}

pub fn load_pairs_file(manifest: &DatasetManifest, path: &Path) -> Result<Vec<ResolvedPair>, DatasetError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    load_pairs(manifest, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Fraction of each class held out for calibration when `folds == 1`.
    pub holdout_fraction: f64,
    /// `1` is a single seeded split; `k > 1` rotates k stratified folds as
    /// the calibration set and averages the accuracies.
    pub folds: usize,
    pub split_seed: u64,
    pub min_pairs: usize,
    /// Reuse embeddings of images that appear in several pairs.
    pub cache_embeddings: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { holdout_fraction: 0.1, folds: 1, split_seed: 0, min_pairs: 20, cache_embeddings: true }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(DatasetError::InvalidConfig("holdout_fraction must lie in (0, 1)".into()));
        }
        if self.folds == 0 {
            return Err(DatasetError::InvalidConfig("folds must be at least 1".into()));
        }
        if self.min_pairs < 2 {
            return Err(DatasetError::InvalidConfig("min_pairs must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub threshold: f64,
    pub num_pairs: usize,
    pub same_pairs: usize,
    pub different_pairs: usize,
    pub holdout_pairs: usize,
    pub eval_pairs: usize,
    pub folds: usize,
    pub split_seed: u64,
    pub subset_size: Option<usize>,
    pub backend: String,
    pub protocol: String,
    /// Holdout had a single class; calibrated and scored on the full set.
    pub calibration_fallback: bool,
    /// Images where no face was detected and the whole frame was embedded.
    pub no_face_fallbacks: usize,
    pub wall_time_ms: u64,
}

impl EvalReport {
    /// Copy with run-dependent fields cleared, for comparisons.
    pub fn without_timing(&self) -> EvalReport {
        EvalReport { wall_time_ms: 0, ..self.clone() }
    }
}

/// Squared distances of embedded pairs plus bookkeeping from embedding them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPairs {
    pub samples: Vec<(f64, bool)>,
    pub no_face_fallbacks: usize,
    pub backend: String,
}

fn load_image(path: &Path) -> Result<crate::imaging::RgbImage, DatasetError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    decode_frame(&bytes).map_err(|e| DatasetError::Image { path: path.to_path_buf(), message: e.to_string() })
}

/// Embed the most probable face, falling back to the whole frame.
fn embed_image(path: &Path, pipeline: &FacePipeline) -> Result<(Embedding, bool), DatasetError> {
    let img = load_image(path)?;
    match pipeline.embed_primary_face(&img) {
        Ok((_, e)) => Ok((e, false)),
        Err(PipelineError::NoFace) => {
            let chip = crop_and_resize(&img, &BoundingBox::full_frame(img.width(), img.height()), pipeline.chip_side)
                .map_err(PipelineError::from)?;
            Ok((embed(&chip, pipeline.embedder.as_ref()).map_err(PipelineError::from)?, true))
        }
        Err(e) => Err(e.into()),
    }
}

/// Embed both sides of every pair and compute squared distances, in pair order.
pub fn score_pairs(pairs: &[ResolvedPair], pipeline: &FacePipeline, cache: bool) -> Result<ScoredPairs, DatasetError> {
    let backend = pipeline.backend_name();
    if cache {
        let mut unique: Vec<&Path> = pairs.iter().flat_map(|p| [p.a.as_path(), p.b.as_path()]).collect();
        unique.sort();
        unique.dedup();
        let embedded: Vec<(Embedding, bool)> =
            unique.par_iter().map(|p| embed_image(p, pipeline)).collect::<Result<_, _>>()?;
        let no_face_fallbacks = embedded.iter().filter(|(_, f)| *f).count();
        let lookup: HashMap<&Path, &Embedding> = unique.iter().copied().zip(embedded.iter().map(|(e, _)| e)).collect();
        let samples = pairs
            .iter()
            .map(|p| (squared_l2_distance(lookup[p.a.as_path()], lookup[p.b.as_path()]), p.same))
            .collect();
        Ok(ScoredPairs { samples, no_face_fallbacks, backend })
    } else {
        let scored: Vec<(f64, bool, usize)> = pairs
            .par_iter()
            .map(|p| {
                let (ea, fa) = embed_image(&p.a, pipeline)?;
                let (eb, fb) = embed_image(&p.b, pipeline)?;
                Ok((squared_l2_distance(&ea, &eb), p.same, fa as usize + fb as usize))
            })
            .collect::<Result<_, DatasetError>>()?;
        Ok(ScoredPairs {
            samples: scored.iter().map(|&(d, s, _)| (d, s)).collect(),
            no_face_fallbacks: scored.iter().map(|s| s.2).sum(),
            backend,
        })
    }
}

fn shuffled_indices(samples: &[(f64, bool)], label: bool, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].1 == label).collect();
    idx.shuffle(rng);
    idx
}

fn calibrate_lenient(samples: &[(f64, bool)]) -> Result<CalibrationResult, DatasetError> {
    match calibrate_distances(samples) {
        Ok(c) => Ok(c),
        Err(MetricError::DegenerateCalibration { trivial, .. }) => Ok(trivial),
        Err(e) => Err(DatasetError::InvalidConfig(e.to_string())),
    }
}

/// Calibrate on a held-out part of `samples` and score the rest.
pub fn evaluate_scored(scored: &ScoredPairs, config: &EvalConfig) -> Result<EvalReport, DatasetError> {
    config.validate()?;
    let start = Instant::now();
    let samples = &scored.samples;
    let n = samples.len();
    if n < config.min_pairs {
        return Err(DatasetError::TooFewPairs { required: config.min_pairs, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.split_seed);
    let same = shuffled_indices(samples, true, &mut rng);
    let diff = shuffled_indices(samples, false, &mut rng);
    let pick = |idx: &[usize]| -> Vec<(f64, bool)> { idx.iter().map(|&i| samples[i]).collect() };

    // Calibration folds: each a stratified slice of both classes.
    let folds: Vec<Vec<usize>> = if config.folds == 1 {
        let take = |v: &[usize]| {
            if v.len() < 2 {
                0
            } else {
                ((v.len() as f64 * config.holdout_fraction).round() as usize).clamp(1, v.len() - 1)
            }
        };
        let mut f = same[..take(&same)].to_vec();
        f.extend_from_slice(&diff[..take(&diff)]);
        vec![f]
    } else {
        let k = config.folds;
        (0..k)
            .map(|j| {
                let mut f: Vec<usize> = same.iter().skip(j).step_by(k).copied().collect();
                f.extend(diff.iter().skip(j).step_by(k));
                f
            })
            .collect()
    };

    let degenerate = folds.iter().any(|f| {
        let s = f.iter().filter(|&&i| samples[i].1).count();
        s == 0 || s == f.len()
    });
    let (accuracy, threshold, holdout_pairs, eval_pairs) = if degenerate {
        tracing::warn!(pairs = n, "calibration holdout has a single class; using the full set");
        let c = calibrate_lenient(samples)?;
        (accuracy_at(samples, c.threshold), c.threshold, n, n)
    } else {
        let mut accs = Vec::with_capacity(folds.len());
        let mut thresholds = Vec::with_capacity(folds.len());
        for f in &folds {
            let mut in_fold = vec![false; n];
            for &i in f {
                in_fold[i] = true;
            }
            let rest: Vec<usize> = (0..n).filter(|&i| !in_fold[i]).collect();
            let c = calibrate_lenient(&pick(f))?;
            accs.push(accuracy_at(&pick(&rest), c.threshold));
            thresholds.push(c.threshold);
        }
        let k = folds.len() as f64;
        let holdout = folds[0].len();
        (accs.iter().sum::<f64>() / k, thresholds.iter().sum::<f64>() / k, holdout, n - holdout)
    };

    let same_pairs = samples.iter().filter(|s| s.1).count();
    let protocol = if config.folds == 1 {
        format!("single stratified split, {:.0}% calibration holdout", config.holdout_fraction * 100.0)
    } else {
        format!("{}-fold rotating calibration", config.folds)
    };
    Ok(EvalReport {
        accuracy,
        threshold,
        num_pairs: n,
        same_pairs,
        different_pairs: n - same_pairs,
        holdout_pairs,
        eval_pairs,
        folds: config.folds,
        split_seed: config.split_seed,
        subset_size: None,
        backend: scored.backend.clone(),
        protocol,
        calibration_fallback: degenerate,
        no_face_fallbacks: scored.no_face_fallbacks,
        wall_time_ms: start.elapsed().as_millis() as u64,
    })
}

/// Embed, calibrate on the holdout, report accuracy on the remainder.
pub fn evaluate_verification(
    pairs: &[ResolvedPair],
    pipeline: &FacePipeline,
    config: &EvalConfig,
) -> Result<EvalReport, DatasetError> {
    config.validate()?;
    if pairs.len() < config.min_pairs {
        return Err(DatasetError::TooFewPairs { required: config.min_pairs, got: pairs.len() });
    }
    let start = Instant::now();
    let scored = score_pairs(pairs, pipeline, config.cache_embeddings)?;
    let mut report = evaluate_scored(&scored, config)?;
    report.wall_time_ms = start.elapsed().as_millis() as u64;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetSize {
    Count(usize),
    Full,
}

impl std::str::FromStr for SubsetSize {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("full") {
            return Ok(SubsetSize::Full);
        }
        s.parse::<usize>()
            .map(SubsetSize::Count)
            .map_err(|_| DatasetError::InvalidConfig(format!("subset size {s:?} is neither a count nor \"full\"")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub sizes: Vec<SubsetSize>,
    pub repeats: usize,
    pub seed: u64,
    pub eval: EvalConfig,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            sizes: vec![SubsetSize::Count(70), SubsetSize::Count(700), SubsetSize::Count(7000), SubsetSize::Full],
            repeats: 5,
            seed: 0,
            // Small subsets are part of the point of the ablation.
            eval: EvalConfig { min_pairs: 4, ..EvalConfig::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub requested: SubsetSize,
    pub size: usize,
    pub mean_accuracy: f64,
    pub accuracies: Vec<f64>,
    /// The requested size exceeded the dataset and was reduced.
    pub clipped: bool,
}

impl AblationRow {
    pub fn label(&self) -> String {
        match self.requested {
            SubsetSize::Full => "Full Dataset".into(),
            SubsetSize::Count(_) => self.size.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub backend: String,
    pub repeats: usize,
    pub seed: u64,
}

fn sub_seed(seed: u64, size: usize, repeat: usize) -> u64 {
    crate::tracking::derive_schedule_seed(seed ^ (size as u64).rotate_left(32), repeat as u64)
}

/// Stratified sample of `size` indices, proportional to the class balance.
fn sample_subset(samples: &[(f64, bool)], size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let same = shuffled_indices(samples, true, rng);
    let diff = shuffled_indices(samples, false, rng);
    let n = samples.len();
    let mut k_same = ((size as f64) * same.len() as f64 / n as f64).round() as usize;
    if size >= 2 && !same.is_empty() && !diff.is_empty() {
        k_same = k_same.clamp(1, size - 1);
    }
    k_same = k_same.min(same.len()).max(size.saturating_sub(diff.len()));
    let mut idx: Vec<usize> = same[..k_same].iter().chain(&diff[..size - k_same]).copied().collect();
    idx.sort_unstable();
    idx
}

/// Ablation over subset sizes on already-scored pairs.
pub fn ablation_scored(scored: &ScoredPairs, config: &AblationConfig) -> Result<AblationTable, DatasetError> {
    if config.repeats == 0 {
        return Err(DatasetError::InvalidConfig("repeats must be at least 1".into()));
    }
    let counts: Vec<usize> = config
        .sizes
        .iter()
        .map(|s| match s {
            SubsetSize::Count(c) => *c,
            SubsetSize::Full => usize::MAX,
        })
        .collect();
    if counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(DatasetError::InvalidConfig("sizes must be ascending".into()));
    }
    let n = scored.samples.len();
    let mut rows = Vec::with_capacity(config.sizes.len());
    for &requested in &config.sizes {
        let (size, clipped) = match requested {
            SubsetSize::Full => (n, false),
            SubsetSize::Count(c) if c > n => {
                tracing::warn!(requested = c, available = n, "subset size clipped to dataset");
                (n, true)
            }
            SubsetSize::Count(c) => (c, false),
        };
        let accuracies = if requested == SubsetSize::Full {
            // The whole set in file order: identical to a direct evaluation.
            vec![evaluate_scored(scored, &config.eval)?.accuracy; config.repeats]
        } else {
            (0..config.repeats)
                .map(|r| {
                    let seed = sub_seed(config.seed, size, r);
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let idx = sample_subset(&scored.samples, size, &mut rng);
                    let sub = ScoredPairs {
                        samples: idx.iter().map(|&i| scored.samples[i]).collect(),
                        no_face_fallbacks: 0,
                        backend: scored.backend.clone(),
                    };
                    let eval = EvalConfig { split_seed: seed, ..config.eval.clone() };
                    Ok(evaluate_scored(&sub, &eval)?.accuracy)
                })
                .collect::<Result<Vec<_>, DatasetError>>()?
        };
        let mean_accuracy = accuracies.iter().sum::<f64>() / accuracies.len() as f64;
        rows.push(AblationRow { requested, size, mean_accuracy, accuracies, clipped });
    }
    Ok(AblationTable { rows, backend: scored.backend.clone(), repeats: config.repeats, seed: config.seed })
}

pub fn ablation_by_subset_size(
    pairs: &[ResolvedPair],
    pipeline: &FacePipeline,
    config: &AblationConfig,
) -> Result<AblationTable, DatasetError> {
    let scored = score_pairs(pairs, pipeline, config.eval.cache_embeddings)?;
    ablation_scored(&scored, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = DatasetError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(DatasetError::InvalidConfig(format!("unknown report format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Report {
    Verification(EvalReport),
    Ablation(AblationTable),
}

impl Report {
    fn rows(&self) -> Vec<(String, f64)> {
        match self {
            Report::Verification(r) => {
                vec![(r.subset_size.map_or_else(|| "Full Dataset".to_string(), |s| s.to_string()), r.accuracy)]
            }
            Report::Ablation(t) => t.rows.iter().map(|r| (r.label(), r.mean_accuracy)).collect(),
        }
    }
}

/// Deterministic text rendering of a report.
pub fn render_report(report: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s = String::from("size,accuracy\n");
            for (label, acc) in report.rows() {
                let size = if label == "Full Dataset" { "full".to_string() } else { label };
                s.push_str(&format!("{size},{acc}\n"));
            }
            s
        }
        ReportFormat::Markdown => {
            let mut s = String::from("| Pairs | Accuracy (%) |\n|---|---|\n");
            for (label, acc) in report.rows() {
                s.push_str(&format!("| {label} | {:.1} |\n", acc * 100.0));
            }
            s
        }
    }
}

pub fn emit_report(report: &Report, format: ReportFormat, path: &Path) -> Result<(), DatasetError> {
    std::fs::write(path, render_report(report, format)).map_err(|e| io_err(path, e))
}
