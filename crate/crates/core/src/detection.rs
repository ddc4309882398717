//! Three-stage coarse-to-fine face detection (proposal → refine → output)
//! with greedy non-max suppression, plus the crop/resize step that turns a
//! detection into a [`FaceChip`].
//!
//! Stage networks are pluggable through [`StagePredictor`]. The reference
//! predictors report the whole input as a face with probability 1, which lets
//! the rest of the pipeline run without model weights.

use crate::embedding::{EmbeddingError, FaceChip, CANONICAL_CHIP_SIDE};
use crate::imaging::{resize_bilinear, RgbImage};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectionError {
    #[error("detector backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("invalid crop: {0}")]
    InvalidCrop(String),
    #[error("invalid detector configuration: {0}")]
    InvalidConfig(String),
    #[error("stage predictor violated its contract: {0}")]
    InvalidPrediction(String),
    #[error("malformed detection: {0}")]
    Malformed(String),
}

impl From<EmbeddingError> for DetectionError {
    fn from(e: EmbeddingError) -> Self {
        DetectionError::InvalidCrop(e.to_string())
    }
}

/// Axis-aligned rectangle in pixels; `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        BoundingBox { x, y, w, h }
    }

    pub fn full_frame(width: u32, height: u32) -> Self {
        BoundingBox::new(0.0, 0.0, width as f64, height as f64)
    }

    pub fn is_valid(&self) -> bool {
        [self.x, self.y, self.w, self.h].iter().all(|v| v.is_finite()) && self.w > 0.0 && self.h > 0.0
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn contains(&self, px: f64, py: f64) -> bool {
        px >= self.x && px <= self.right() && py >= self.y && py <= self.bottom()
    }

    pub fn intersection(&self, other: &BoundingBox) -> Option<BoundingBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BoundingBox::new(x0, y0, x1 - x0, y1 - y0))
    }

    /// Intersection over union with inclusive area `w · h`.
    pub fn iou(&self, other: &BoundingBox) -> f64 {
        let inter = self.intersection(other).map_or(0.0, |b| b.area());
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    /// Smallest square with the same center that covers the box.
    pub fn to_square(&self) -> BoundingBox {
        let side = self.w.max(self.h);
        let cx = self.x + self.w / 2.0;
        let cy = self.y + self.h / 2.0;
        BoundingBox::new(cx - side / 2.0, cy - side / 2.0, side, side)
    }

    pub fn clip_to(&self, width: u32, height: u32) -> Option<BoundingBox> {
        self.intersection(&BoundingBox::full_frame(width, height))
    }
}

/// Five facial keypoints: left eye, right eye, nose, left and right mouth corners.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaceLandmarks {
    pub points: [[f64; 2]; 5],
}

impl FaceLandmarks {
    /// Fractional positions used by the reference output stage.
    pub const REFERENCE_FRACTIONS: [[f64; 2]; 5] =
        [[0.3, 0.35], [0.7, 0.35], [0.5, 0.55], [0.35, 0.75], [0.65, 0.75]];

    pub fn at_fractions(b: &BoundingBox, fractions: &[[f64; 2]; 5]) -> Self {
        let mut points = [[0.0; 2]; 5];
        for (p, f) in points.iter_mut().zip(fractions) {
            *p = [b.x + f[0] * b.w, b.y + f[1] * b.h];
        }
        FaceLandmarks { points }
    }

    pub fn all_inside(&self, b: &BoundingBox) -> bool {
        self.points.iter().all(|p| b.contains(p[0], p[1]))
    }

    fn clamped_into(&self, b: &BoundingBox) -> Self {
        let mut points = self.points;
        for p in points.iter_mut() {
            p[0] = p[0].clamp(b.x, b.right());
            p[1] = p[1].clamp(b.y, b.bottom());
        }
        FaceLandmarks { points }
    }
}

#[derive(Debug, Deserialize)]
struct RawDetection {
    #[serde(rename = "box")]
    bbox: BoundingBox,
    prob: f64,
    landmarks: FaceLandmarks,
}

/// A detected face: box, five landmarks and the face probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDetection")]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(rename = "prob")]
    pub probability: f64,
    pub landmarks: FaceLandmarks,
}

impl TryFrom<RawDetection> for Detection {
    type Error = DetectionError;
    fn try_from(raw: RawDetection) -> Result<Self, Self::Error> {
        Detection::new(raw.bbox, raw.landmarks, raw.prob)
    }
}

impl Detection {
    pub fn new(bbox: BoundingBox, landmarks: FaceLandmarks, probability: f64) -> Result<Self, DetectionError> {
        if !bbox.is_valid() {
            return Err(DetectionError::Malformed(format!("degenerate box {bbox:?}")));
        }
        if !(0.0..=1.0).contains(&probability) {
            return Err(DetectionError::Malformed(format!("probability {probability} outside [0, 1]")));
        }
        if !landmarks.all_inside(&bbox) {
            return Err(DetectionError::Malformed("landmark outside its box".into()));
        }
        Ok(Detection { bbox, probability, landmarks })
    }

    pub fn from_json(s: &str) -> Result<Self, DetectionError> {
        serde_json::from_str(s).map_err(|e| DetectionError::Malformed(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("detection serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Proposal,
    Refine,
    Output,
}

/// One scored box emitted by a stage, in the coordinates of that stage's input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub bbox: BoundingBox,
    pub score: f64,
    pub landmarks: Option<FaceLandmarks>,
}

/// One network of the cascade.
///
/// The proposal stage receives each pyramid level in full and returns boxes in
/// that level's pixel coordinates. Refine and output stages receive a square
/// crop of side [`StagePredictor::input_side`] and return boxes inside it.
/// Output-stage candidates must carry landmarks.
pub trait StagePredictor: Send + Sync {
    fn stage(&self) -> Stage;
    /// Crop side for refine/output; detection window (cell) size for proposal.
    fn input_side(&self) -> u32;
    fn predict(&self, input: &RgbImage) -> Result<Vec<Candidate>, DetectionError>;
}

/// Full-frame predictor used when no model weights are loaded.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceStage {
    stage: Stage,
}

impl ReferenceStage {
    pub fn new(stage: Stage) -> Self {
        ReferenceStage { stage }
    }
}

impl StagePredictor for ReferenceStage {
    fn stage(&self) -> Stage {
        self.stage
    }

    fn input_side(&self) -> u32 {
        match self.stage {
            Stage::Proposal => 12,
            Stage::Refine => 24,
            Stage::Output => 48,
        }
    }

    fn predict(&self, input: &RgbImage) -> Result<Vec<Candidate>, DetectionError> {
        let bbox = BoundingBox::full_frame(input.width(), input.height());
        let landmarks = (self.stage == Stage::Output)
            .then(|| FaceLandmarks::at_fractions(&bbox, &FaceLandmarks::REFERENCE_FRACTIONS));
        Ok(vec![Candidate { bbox, score: 1.0, landmarks }])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CascadeConfig {
    /// Minimum score kept after the proposal, refine and output stages.
    pub thresholds: [f64; 3],
    pub nms_iou: f64,
    /// Ratio between consecutive pyramid levels.
    pub pyramid_factor: f64,
    /// Smallest face side searched for, in pixels.
    pub min_face: f64,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig { thresholds: [0.6, 0.7, 0.8], nms_iou: 0.5, pyramid_factor: 0.709, min_face: 20.0 }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<(), DetectionError> {
        if self.thresholds.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(DetectionError::InvalidConfig("stage thresholds must be finite and non-negative".into()));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(DetectionError::InvalidConfig("nms_iou must lie in (0, 1)".into()));
        }
        if !(self.pyramid_factor > 0.0 && self.pyramid_factor < 1.0) {
            return Err(DetectionError::InvalidConfig("pyramid_factor must lie in (0, 1)".into()));
        }
        if !(self.min_face.is_finite() && self.min_face > 0.0) {
            return Err(DetectionError::InvalidConfig("min_face must be positive".into()));
        }
        Ok(())
    }

    /// Pyramid scales for an image whose shorter side is `min_side`.
    pub fn pyramid_scales(&self, min_side: u32, cell: u32) -> Vec<f64> {
        let mut scales = Vec::new();
        let mut scale = cell as f64 / self.min_face;
        let mut side = min_side as f64 * scale;
        while side >= cell as f64 {
            scales.push(scale);
            scale *= self.pyramid_factor;
            side *= self.pyramid_factor;
        }
        scales
    }
}

/// Proposal → refine → output detector cascade.
pub struct Cascade {
    stages: [Box<dyn StagePredictor>; 3],
    name: String,
}

impl std::fmt::Debug for Cascade {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Cascade").field("name", &self.name).finish()
    }
}

impl Cascade {
    pub fn new(
        name: impl Into<String>,
        proposal: Box<dyn StagePredictor>,
        refine: Box<dyn StagePredictor>,
        output: Box<dyn StagePredictor>,
    ) -> Result<Self, DetectionError> {
        let expected = [Stage::Proposal, Stage::Refine, Stage::Output];
        let stages = [proposal, refine, output];
        for (s, want) in stages.iter().zip(expected) {
            if s.stage() != want {
                return Err(DetectionError::InvalidConfig(format!(
                    "expected a {want:?} predictor, got {:?}",
                    s.stage()
                )));
            }
            if s.input_side() == 0 {
                return Err(DetectionError::InvalidConfig("stage input side must be positive".into()));
            }
        }
        Ok(Cascade { stages, name: name.into() })
    }

    pub fn reference() -> Self {
        Cascade::new(
            "reference",
            Box::new(ReferenceStage::new(Stage::Proposal)),
            Box::new(ReferenceStage::new(Stage::Refine)),
            Box::new(ReferenceStage::new(Stage::Output)),
        )
        .expect("reference stages are well formed")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn stage(&self, stage: Stage) -> &dyn StagePredictor {
        self.stages[stage as usize].as_ref()
    }
}

fn check_score(c: &Candidate) -> Result<(), DetectionError> {
    if !(0.0..=1.0).contains(&c.score) {
        return Err(DetectionError::InvalidPrediction(format!("score {} outside [0, 1]", c.score)));
    }
    if !c.bbox.is_valid() {
        return Err(DetectionError::InvalidPrediction(format!("degenerate box {:?}", c.bbox)));
    }
    Ok(())
}

/// Run the cascade over an image. Results are sorted by descending probability.
pub fn detect(image: &RgbImage, cascade: &Cascade, config: &CascadeConfig) -> Result<Vec<Detection>, DetectionError> {
    config.validate()?;
    let (width, height) = image.dimensions();
    if width == 0 || height == 0 {
        return Err(DetectionError::InvalidImage("zero-area image".into()));
    }

    // Stage 1: proposals over the image pyramid.
    let proposal = cascade.stage(Stage::Proposal);
    let mut proposals = Vec::new();
    for scale in config.pyramid_scales(width.min(height), proposal.input_side()) {
        let sw = ((width as f64 * scale).ceil() as u32).max(1);
        let sh = ((height as f64 * scale).ceil() as u32).max(1);
        let level = resize_bilinear(image, sw, sh);
        let sx = width as f64 / sw as f64;
        let sy = height as f64 / sh as f64;
        let mut level_dets = Vec::new();
        for c in proposal.predict(&level)? {
            check_score(&c)?;
            if c.score < config.thresholds[0] {
                continue;
            }
            let bbox = BoundingBox::new(c.bbox.x * sx, c.bbox.y * sy, c.bbox.w * sx, c.bbox.h * sy);
            level_dets.push(ScoredBox { bbox, score: c.score, landmarks: None });
        }
        proposals.extend(nms_scored(level_dets, 0.5));
    }
    let proposals = nms_scored(proposals, config.nms_iou);

    // Stage 2: refine square crops of each proposal.
    let refined = run_crop_stage(image, cascade.stage(Stage::Refine), &proposals, config.thresholds[1], false)?;
    let refined = nms_scored(refined, config.nms_iou);

    // Stage 3: output probability, box and landmarks.
    let output = run_crop_stage(image, cascade.stage(Stage::Output), &refined, config.thresholds[2], true)?;
    let mut detections = Vec::new();
    for sb in nms_scored(output, config.nms_iou) {
        let Some(bbox) = sb.bbox.clip_to(width, height) else { continue };
        let landmarks = sb
            .landmarks
            .expect("output stage candidates carry landmarks")
            .clamped_into(&bbox);
        detections.push(Detection::new(bbox, landmarks, sb.score)?);
    }
    sort_by_probability(&mut detections);
    Ok(detections)
}

#[derive(Debug, Clone, Copy)]
struct ScoredBox {
    bbox: BoundingBox,
    score: f64,
    landmarks: Option<FaceLandmarks>,
}

fn run_crop_stage(
    image: &RgbImage,
    predictor: &dyn StagePredictor,
    inputs: &[ScoredBox],
    threshold: f64,
    needs_landmarks: bool,
) -> Result<Vec<ScoredBox>, DetectionError> {
    let side = predictor.input_side();
    let mut out = Vec::new();
    for sb in inputs {
        let square = sb.bbox.to_square();
        let crop = match crop_square(image, &square, side) {
            Ok(c) => c,
            Err(DetectionError::InvalidCrop(_)) => continue,
            Err(e) => return Err(e),
        };
        let k = square.w / side as f64;
        for c in predictor.predict(&crop)? {
            check_score(&c)?;
            if needs_landmarks && c.landmarks.is_none() {
                return Err(DetectionError::InvalidPrediction("output stage returned no landmarks".into()));
            }
            if c.score < threshold {
                continue;
            }
            let bbox = BoundingBox::new(
                square.x + c.bbox.x * square.w / side as f64,
                square.y + c.bbox.y * square.h / side as f64,
                c.bbox.w * square.w / side as f64,
                c.bbox.h * square.h / side as f64,
            );
            let landmarks = c.landmarks.map(|l| {
                let mut points = l.points;
                for p in points.iter_mut() {
                    *p = [square.x + p[0] * k, square.y + p[1] * k];
                }
                FaceLandmarks { points }
            });
            out.push(ScoredBox { bbox, score: c.score, landmarks });
        }
    }
    Ok(out)
}

fn by_descending_score(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

fn sort_by_probability(dets: &mut [Detection]) {
    dets.sort_by(|a, b| by_descending_score(a.probability, b.probability));
}

fn nms_scored(mut boxes: Vec<ScoredBox>, iou_threshold: f64) -> Vec<ScoredBox> {
    boxes.sort_by(|a, b| by_descending_score(a.score, b.score));
    let mut kept: Vec<ScoredBox> = Vec::with_capacity(boxes.len());
    for b in boxes {
        if kept.iter().all(|k| k.bbox.iou(&b.bbox) < iou_threshold) {
            kept.push(b);
        }
    }
    kept
}

/// Greedy non-max suppression. Detections are visited by descending
/// probability (ties keep input order); one is kept iff its IoU with every
/// already-kept detection is below `iou_threshold`.
pub fn non_max_suppression(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut sorted = dets.to_vec();
    sort_by_probability(&mut sorted);
    let mut kept: Vec<Detection> = Vec::with_capacity(sorted.len());
    for d in sorted {
        if kept.iter().all(|k| k.bbox.iou(&d.bbox) < iou_threshold) {
            kept.push(d);
        }
    }
    kept
}

/// Clamp `bbox` to the image, pad the clamped region to a square by edge
/// replication and resize it to `side × side`.
fn crop_square(image: &RgbImage, bbox: &BoundingBox, side: u32) -> Result<RgbImage, DetectionError> {
    if side == 0 {
        return Err(DetectionError::InvalidCrop("side must be positive".into()));
    }
    if !bbox.is_valid() {
        return Err(DetectionError::InvalidCrop(format!("degenerate box {bbox:?}")));
    }
    let (width, height) = image.dimensions();
    let x0 = bbox.x.floor().max(0.0);
    let y0 = bbox.y.floor().max(0.0);
    let x1 = bbox.right().ceil().min(width as f64);
    let y1 = bbox.bottom().ceil().min(height as f64);
    if x1 <= x0 || y1 <= y0 {
        return Err(DetectionError::InvalidCrop(format!("box {bbox:?} lies outside the {width}x{height} image")));
    }
    let (x0, y0, x1, y1) = (x0 as u32, y0 as u32, x1 as u32, y1 as u32);
    let (cw, ch) = (x1 - x0, y1 - y0);
    let s = cw.max(ch);
    let pad_x = (s - cw) / 2;
    let pad_y = (s - ch) / 2;
    let square = RgbImage::from_fn(s, s, |i, j| {
        let sx = (x0 + i).saturating_sub(pad_x).clamp(x0, x1 - 1);
        let sy = (y0 + j).saturating_sub(pad_y).clamp(y0, y1 - 1);
        *image.get_pixel(sx, sy)
    });
    Ok(resize_bilinear(&square, side, side))
}

/// Cut a detection out of a frame as a square face chip of the given side.
pub fn crop_and_resize(image: &RgbImage, bbox: &BoundingBox, side: u32) -> Result<FaceChip, DetectionError> {
    let chip = crop_square(image, bbox, side)?;
    Ok(FaceChip::from_image(&chip)?)
}

/// [`crop_and_resize`] at the canonical 220 px side.
pub fn crop_canonical(image: &RgbImage, bbox: &BoundingBox) -> Result<FaceChip, DetectionError> {
    crop_and_resize(image, bbox, CANONICAL_CHIP_SIDE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Rgb;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(x: f64, y: f64, w: f64, h: f64, p: f64) -> Detection {
        let b = BoundingBox::new(x, y, w, h);
        Detection::new(b, FaceLandmarks::at_fractions(&b, &FaceLandmarks::REFERENCE_FRACTIONS), p).unwrap()
    }

    #[test]
    fn iou_basics() {
        let a = BoundingBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        let b = BoundingBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((a.iou(&b) - 50.0 / 150.0).abs() < 1e-12);
        let c = BoundingBox::new(20.0, 20.0, 5.0, 5.0);
        assert_eq!(a.iou(&c), 0.0);
    }

    #[test]
    fn blank_image_gives_one_full_frame_detection() {
        let img = RgbImage::new(220, 220);
        let dets = detect(&img, &Cascade::reference(), &CascadeConfig::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BoundingBox::full_frame(220, 220));
        assert_eq!(dets[0].probability, 1.0);
        assert!(dets[0].landmarks.all_inside(&dets[0].bbox));
    }

    #[test]
    fn non_square_image_detection_is_clipped() {
        let img = RgbImage::new(300, 140);
        let dets = detect(&img, &Cascade::reference(), &CascadeConfig::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BoundingBox::full_frame(300, 140));
        assert!(dets[0].landmarks.all_inside(&dets[0].bbox));
    }

    #[test]
    fn impossible_refine_threshold_gives_nothing() {
        let img = RgbImage::from_pixel(120, 90, Rgb([10, 200, 30]));
        let config = CascadeConfig { thresholds: [0.6, 1.01, 0.8], ..Default::default() };
        assert!(detect(&img, &Cascade::reference(), &config).unwrap().is_empty());
    }

    #[test]
    fn zero_area_image_rejected() {
        let img = RgbImage::new(0, 10);
        assert!(matches!(
            detect(&img, &Cascade::reference(), &CascadeConfig::default()),
            Err(DetectionError::InvalidImage(_))
        ));
    }

    #[test]
    fn tiny_image_has_no_pyramid_levels() {
        let img = RgbImage::new(15, 15);
        assert!(detect(&img, &Cascade::reference(), &CascadeConfig::default()).unwrap().is_empty());
    }

    #[test]
    fn cascade_rejects_misordered_stages() {
        let r = Cascade::new(
            "bad",
            Box::new(ReferenceStage::new(Stage::Refine)),
            Box::new(ReferenceStage::new(Stage::Refine)),
            Box::new(ReferenceStage::new(Stage::Output)),
        );
        assert!(matches!(r, Err(DetectionError::InvalidConfig(_))));
    }

    #[test]
    fn pyramid_for_220() {
        let scales = CascadeConfig::default().pyramid_scales(220, 12);
        assert_eq!(scales.len(), 7);
        assert!((scales[0] - 0.6).abs() < 1e-12);
        assert!(scales.windows(2).all(|w| (w[1] / w[0] - 0.709).abs() < 1e-12));
    }

    #[test]
    fn nms_single_and_identical() {
        let a = det(0.0, 0.0, 10.0, 10.0, 0.9);
        assert_eq!(non_max_suppression(&[a], 0.5), vec![a]);
        let b = det(0.0, 0.0, 10.0, 10.0, 0.8);
        assert_eq!(non_max_suppression(&[b, a], 0.5), vec![a]);
        assert!(non_max_suppression(&[], 0.5).is_empty());
    }

    /// Exhaustive characterization of greedy NMS: among all subsets, the
    /// result is the one where (in descending-probability order) an element is
    /// present iff it overlaps no earlier present element at ≥ threshold.
    fn subset_oracle(dets: &[Detection], t: f64) -> Vec<Detection> {
        let mut order: Vec<usize> = (0..dets.len()).collect();
        order.sort_by(|&i, &j| dets[j].probability.partial_cmp(&dets[i].probability).unwrap().then(i.cmp(&j)));
        let n = dets.len();
        let mut found = Vec::new();
        for mask in 0u32..(1 << n) {
            let member = |rank: usize| mask & (1 << rank) != 0;
            let consistent = (0..n).all(|r| {
                let clear = (0..r).filter(|&q| member(q)).all(|q| dets[order[q]].bbox.iou(&dets[order[r]].bbox) < t);
                member(r) == clear
            });
            if consistent {
                found.push((0..n).filter(|&r| member(r)).map(|r| dets[order[r]]).collect::<Vec<_>>());
            }
        }
        assert_eq!(found.len(), 1, "greedy NMS characterization must be unique");
        found.pop().unwrap()
    }

    #[test]
    fn nms_matches_subset_oracle_on_random_boxes() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.random_range(1..=10);
            let dets: Vec<Detection> = (0..n)
                .map(|_| {
                    det(
                        rng.random_range(0.0..40.0),
                        rng.random_range(0.0..40.0),
                        rng.random_range(5.0..30.0),
                        rng.random_range(5.0..30.0),
                        (rng.random_range(0..20) as f64) / 20.0,
                    )
                })
                .collect();
            let t = rng.random_range(0.1..0.9);
            assert_eq!(non_max_suppression(&dets, t), subset_oracle(&dets, t));
        }
    }

    /// Proposal stage that reports fixed boxes (in original-image pixels,
    /// rescaled to the pyramid level) only on the first pyramid level.
    struct FixedProposals {
        boxes: Vec<(BoundingBox, f64)>,
        original_width: u32,
    }

    impl StagePredictor for FixedProposals {
        fn stage(&self) -> Stage {
            Stage::Proposal
        }
        fn input_side(&self) -> u32 {
            12
        }
        fn predict(&self, input: &RgbImage) -> Result<Vec<Candidate>, DetectionError> {
            let s = input.width() as f64 / self.original_width as f64;
            if (s - 0.6).abs() > 0.01 {
                return Ok(vec![]);
            }
            Ok(self
                .boxes
                .iter()
                .map(|(b, p)| Candidate {
                    bbox: BoundingBox::new(b.x * s, b.y * s, b.w * s, b.h * s),
                    score: *p,
                    landmarks: None,
                })
                .collect())
        }
    }

    /// Refine/output stage that echoes the crop with a score read from the
    /// crop's mean red channel.
    struct RedScore(Stage, u32);

    impl StagePredictor for RedScore {
        fn stage(&self) -> Stage {
            self.0
        }
        fn input_side(&self) -> u32 {
            self.1
        }
        fn predict(&self, input: &RgbImage) -> Result<Vec<Candidate>, DetectionError> {
            let mean = input.pixels().map(|p| p.0[0] as f64).sum::<f64>() / (input.width() * input.height()) as f64;
            let bbox = BoundingBox::full_frame(input.width(), input.height());
            let landmarks = (self.0 == Stage::Output)
                .then(|| FaceLandmarks::at_fractions(&bbox, &FaceLandmarks::REFERENCE_FRACTIONS));
            Ok(vec![Candidate { bbox, score: mean / 255.0, landmarks }])
        }
    }

    fn two_face_image() -> RgbImage {
        RgbImage::from_fn(200, 100, |x, _| if x < 100 { Rgb([250, 0, 0]) } else { Rgb([240, 0, 0]) })
    }

    fn custom_cascade(boxes: Vec<(BoundingBox, f64)>) -> Cascade {
        Cascade::new(
            "custom",
            Box::new(FixedProposals { boxes, original_width: 200 }),
            Box::new(RedScore(Stage::Refine, 24)),
            Box::new(RedScore(Stage::Output, 48)),
        )
        .unwrap()
    }

    #[test]
    fn separated_proposals_both_survive() {
        let boxes = vec![
            (BoundingBox::new(10.0, 10.0, 60.0, 60.0), 0.9),
            (BoundingBox::new(120.0, 20.0, 60.0, 60.0), 0.95),
        ];
        let dets = detect(&two_face_image(), &custom_cascade(boxes.clone()), &CascadeConfig::default()).unwrap();
        assert_eq!(dets.len(), 2);
        // Oracle: the output-stage scores reduce to the mean red of each crop,
        // then greedy NMS over those boxes.
        let oracle_input: Vec<Detection> = boxes
            .iter()
            .map(|(b, _)| {
                let red = if b.x < 100.0 { 250.0 } else { 240.0 };
                det(b.x, b.y, b.w, b.h, red / 255.0)
            })
            .collect();
        let oracle = subset_oracle(&oracle_input, 0.5);
        for (d, o) in dets.iter().zip(&oracle) {
            assert!((d.bbox.x - o.bbox.x).abs() < 1e-9 && (d.bbox.y - o.bbox.y).abs() < 1e-9);
            assert!((d.probability - o.probability).abs() < 1e-9);
        }
    }

    #[test]
    fn overlapping_proposals_collapse() {
        let boxes = vec![
            (BoundingBox::new(10.0, 10.0, 60.0, 60.0), 0.9),
            (BoundingBox::new(14.0, 12.0, 60.0, 60.0), 0.8),
        ];
        let dets = detect(&two_face_image(), &custom_cascade(boxes), &CascadeConfig::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!(dets[0].bbox, BoundingBox::new(10.0, 10.0, 60.0, 60.0));
    }

    #[test]
    fn output_stage_without_landmarks_is_rejected() {
        let cascade = Cascade::new(
            "bad-output",
            Box::new(ReferenceStage::new(Stage::Proposal)),
            Box::new(ReferenceStage::new(Stage::Refine)),
            Box::new(RedScoreNoLandmarks),
        )
        .unwrap();
        let img = RgbImage::from_pixel(50, 50, Rgb([255, 0, 0]));
        assert!(matches!(
            detect(&img, &cascade, &CascadeConfig::default()),
            Err(DetectionError::InvalidPrediction(_))
        ));
    }

    struct RedScoreNoLandmarks;
    impl StagePredictor for RedScoreNoLandmarks {
        fn stage(&self) -> Stage {
            Stage::Output
        }
        fn input_side(&self) -> u32 {
            48
        }
        fn predict(&self, input: &RgbImage) -> Result<Vec<Candidate>, DetectionError> {
            Ok(vec![Candidate { bbox: BoundingBox::full_frame(input.width(), input.height()), score: 1.0, landmarks: None }])
        }
    }

    #[test]
    fn identity_crop_is_pixel_identical() {
        let img = RgbImage::from_fn(220, 220, |x, y| Rgb([(x % 256) as u8, (y % 256) as u8, ((x * y) % 256) as u8]));
        let chip = crop_and_resize(&img, &BoundingBox::full_frame(220, 220), 220).unwrap();
        assert_eq!(chip.pixels(), img.as_raw().as_slice());
    }

    #[test]
    fn crop_resizes_to_requested_side() {
        let img = RgbImage::new(300, 300);
        let chip = crop_and_resize(&img, &BoundingBox::new(50.0, 50.0, 100.0, 100.0), 220).unwrap();
        assert_eq!(chip.side(), 220);
    }

    #[test]
    fn crop_outside_image_fails() {
        let img = RgbImage::new(100, 100);
        assert!(matches!(
            crop_and_resize(&img, &BoundingBox::new(150.0, 10.0, 20.0, 20.0), 220),
            Err(DetectionError::InvalidCrop(_))
        ));
    }

    #[test]
    fn off_edge_crop_matches_clamp_then_resize_oracle() {
        let img = RgbImage::from_fn(200, 160, |x, y| Rgb([(x * 3 % 256) as u8, (y * 5 % 256) as u8, 77]));
        // Box hangs off the top-left corner; the clamped region is 90x90.
        let bbox = BoundingBox::new(-30.0, -40.0, 120.0, 130.0);
        let chip = crop_and_resize(&img, &bbox, 120).unwrap();
        let clamped = image::imageops::crop_imm(&img, 0, 0, 90, 90).to_image();
        let oracle = resize_bilinear(&clamped, 120, 120);
        assert_eq!(chip.pixels(), oracle.as_raw().as_slice());
    }

    #[test]
    fn rectangular_clamp_is_edge_padded() {
        let img = RgbImage::from_fn(10, 4, |x, _| Rgb([x as u8 * 20, 0, 0]));
        let sq = crop_square(&img, &BoundingBox::new(0.0, 0.0, 10.0, 4.0), 10).unwrap();
        // Rows above and below the 4 real rows replicate the edge rows.
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(sq.get_pixel(x, y).0[0], x as u8 * 20);
            }
        }
    }

    #[test]
    fn detection_json_shape() {
        let d = det(1.0, 2.0, 30.0, 40.0, 0.75);
        let v: serde_json::Value = serde_json::from_str(&d.to_json()).unwrap();
        assert_eq!(v["box"]["w"], 30.0);
        assert_eq!(v["prob"], 0.75);
        assert_eq!(v["landmarks"].as_array().unwrap().len(), 5);
        assert_eq!(Detection::from_json(&d.to_json()).unwrap(), d);
        let bad = r#"{"box":{"x":0,"y":0,"w":10,"h":10},"prob":1.5,"landmarks":[[1,1],[1,1],[1,1],[1,1],[1,1]]}"#;
        assert!(Detection::from_json(bad).is_err());
        let outside = r#"{"box":{"x":0,"y":0,"w":10,"h":10},"prob":0.5,"landmarks":[[1,1],[1,1],[1,1],[1,1],[11,1]]}"#;
        assert!(Detection::from_json(outside).is_err());
    }
}
