//! 128-d face embeddings, squared-L2 distance math and the embedder backend
//! contract.
//!
//! Embeddings are stored as unit-norm `f64` vectors. Squared L2 distance
//! between two of them is therefore bounded to `[0, 4]` and equals
//! `2 - 2⟨a, b⟩`.

use crate::imaging::{area_average_gray, resize_bilinear, RgbImage};
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::OnceLock;
use thiserror::Error;

pub const EMBEDDING_DIM: usize = 128;
/// Canonical face-chip side fed to embedders.
pub const CANONICAL_CHIP_SIDE: u32 = 220;
pub const MIN_CHIP_SIDE: u32 = 80;
pub const MAX_CHIP_SIDE: u32 = 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbeddingError {
    #[error("expected {EMBEDDING_DIM} components, got {0}")]
    WrongDimension(usize),
    #[error("component {0} is not finite")]
    NonFinite(usize),
    #[error("cannot normalize a zero vector")]
    DegenerateVector,
    #[error("empty embedding batch")]
    EmptyBatch,
    #[error("invalid face chip: {0}")]
    InvalidChip(String),
    #[error("embedder backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("malformed embedding encoding: {0}")]
    Malformed(String),
}

/// A unit-norm point in the 128-d face metric space.
#[derive(Clone, PartialEq)]
pub struct Embedding {
    values: Box<[f64; EMBEDDING_DIM]>,
}

impl fmt::Debug for Embedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Embedding([{:.4}, {:.4}, {:.4}, …])",
            self.values[0], self.values[1], self.values[2]
        )
    }
}

fn check_components(v: &[f64]) -> Result<(), EmbeddingError> {
    if v.len() != EMBEDDING_DIM {
        return Err(EmbeddingError::WrongDimension(v.len()));
    }
    if let Some(i) = v.iter().position(|x| !x.is_finite()) {
        return Err(EmbeddingError::NonFinite(i));
    }
    Ok(())
}

/// Scale a 128-component vector to unit L2 norm.
pub fn l2_normalize(v: &[f64]) -> Result<Embedding, EmbeddingError> {
    check_components(v)?;
    // Rescale by the max magnitude first so tiny or huge inputs do not
    // underflow/overflow when squared.
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return Err(EmbeddingError::DegenerateVector);
    }
    let norm = v.iter().map(|x| (x / max) * (x / max)).sum::<f64>().sqrt() * max;
    let mut values = Box::new([0.0; EMBEDDING_DIM]);
    for (dst, x) in values.iter_mut().zip(v) {
        *dst = x / norm;
    }
    Ok(Embedding { values })
}

impl Embedding {
    /// Build from components that are already (approximately) unit norm.
    /// Inputs within 1e-6 of unit norm are kept verbatim, anything else is
    /// renormalized.
    pub fn from_values(v: &[f64]) -> Result<Self, EmbeddingError> {
        check_components(v)?;
        let norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if (norm_sq.sqrt() - 1.0).abs() <= 1e-6 {
            let mut values = Box::new([0.0; EMBEDDING_DIM]);
            values.copy_from_slice(v);
            Ok(Embedding { values })
        } else {
            l2_normalize(v)
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Embedding) -> f64 {
        self.values.iter().zip(other.values.iter()).map(|(a, b)| a * b).sum()
    }

    /// Unit basis vector `e_i`.
    pub fn basis(i: usize) -> Self {
        assert!(i < EMBEDDING_DIM, "basis index out of range");
        let mut values = Box::new([0.0; EMBEDDING_DIM]);
        values[i] = 1.0;
        Embedding { values }
    }

    /// Binary form: 128 little-endian `f32` values (512 bytes).
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(EMBEDDING_DIM * 4);
        for v in self.values.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        if bytes.len() != EMBEDDING_DIM * 4 {
            return Err(EmbeddingError::Malformed(format!(
                "expected {} bytes, got {}",
                EMBEDDING_DIM * 4,
                bytes.len()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Embedding::from_values(&values)
    }

    /// JSON form: an array of 128 numbers.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("embedding serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, EmbeddingError> {
        serde_json::from_str(s).map_err(|e| EmbeddingError::Malformed(e.to_string()))
    }
}

impl Serialize for Embedding {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(EMBEDDING_DIM))?;
        for v in self.values.iter() {
            seq.serialize_element(v)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Embedding {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct EmbeddingVisitor;
        impl<'de> Visitor<'de> for EmbeddingVisitor {
            type Value = Embedding;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "an array of {EMBEDDING_DIM} finite numbers")
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Embedding, A::Error> {
                let mut values = Vec::with_capacity(EMBEDDING_DIM);
                while let Some(v) = seq.next_element::<f64>()? {
                    if values.len() == EMBEDDING_DIM {
                        return Err(de::Error::custom(EmbeddingError::WrongDimension(
                            EMBEDDING_DIM + 1,
                        )));
                    }
                    values.push(v);
                }
                Embedding::from_values(&values).map_err(de::Error::custom)
            }
        }
        deserializer.deserialize_seq(EmbeddingVisitor)
    }
}

/// `Σ (aᵢ − bᵢ)²`.
pub fn squared_l2_distance(a: &Embedding, b: &Embedding) -> f64 {
    a.values
        .iter()
        .zip(b.values.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Symmetric n×n matrix of squared distances with a zero diagonal.
pub fn pairwise_squared_distances(es: &[Embedding]) -> Result<Vec<Vec<f64>>, EmbeddingError> {
    if es.is_empty() {
        return Err(EmbeddingError::EmptyBatch);
    }
    let n = es.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = squared_l2_distance(&es[i], &es[j]);
            m[i][j] = d;
            m[j][i] = d;
        }
    }
    Ok(m)
}

/// A square, row-major 8-bit RGB face crop.
#[derive(Clone, PartialEq, Eq)]
pub struct FaceChip {
    pixels: Vec<u8>,
    side: u32,
}

impl fmt::Debug for FaceChip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FaceChip({}x{})", self.side, self.side)
    }
}

impl FaceChip {
    pub fn new(pixels: Vec<u8>, width: u32, height: u32) -> Result<Self, EmbeddingError> {
        if width != height {
            return Err(EmbeddingError::InvalidChip(format!(
                "chip must be square, got {width}x{height}"
            )));
        }
        if !(MIN_CHIP_SIDE..=MAX_CHIP_SIDE).contains(&width) {
            return Err(EmbeddingError::InvalidChip(format!(
                "side {width} outside [{MIN_CHIP_SIDE}, {MAX_CHIP_SIDE}]"
            )));
        }
        let expected = (width as usize) * (height as usize) * 3;
        if pixels.len() != expected {
            return Err(EmbeddingError::InvalidChip(format!(
                "buffer has {} bytes, expected {expected}",
                pixels.len()
            )));
        }
        Ok(FaceChip { pixels, side: width })
    }

    pub fn from_image(img: &RgbImage) -> Result<Self, EmbeddingError> {
        FaceChip::new(img.as_raw().clone(), img.width(), img.height())
    }

    pub fn side(&self) -> u32 {
        self.side
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn to_image(&self) -> RgbImage {
        RgbImage::from_raw(self.side, self.side, self.pixels.clone()).expect("chip buffer sized")
    }
}

/// Something that maps a face chip to a 128-d embedding.
pub trait EmbedderBackend: Send + Sync {
    fn name(&self) -> &str;
    /// Side length the backend resizes chips to before inference.
    fn input_side(&self) -> u32;
    fn deterministic(&self) -> bool;
    fn embed_chip(&self, chip: &FaceChip) -> Result<Embedding, EmbeddingError>;
}

pub fn embed(chip: &FaceChip, backend: &dyn EmbedderBackend) -> Result<Embedding, EmbeddingError> {
    backend.embed_chip(chip)
}

/// Seed of the reference projection.
pub const REFERENCE_SEED: u64 = 42;
/// Grid side the reference backend downsamples chips to.
pub const REFERENCE_GRID: u32 = 16;
const REFERENCE_FEATURES: usize = (REFERENCE_GRID * REFERENCE_GRID) as usize;

/// 64-bit linear congruential generator used to draw the reference
/// projection signs. `state ← state · 6364136223846793005 + 1442695040888963407 (mod 2⁶⁴)`;
/// each step yields `+1` when bit 63 of the new state is clear, `−1` otherwise.
#[derive(Debug, Clone)]
pub struct SignLcg {
    state: u64,
}

impl SignLcg {
    pub const MULTIPLIER: u64 = 6364136223846793005;
    pub const INCREMENT: u64 = 1442695040888963407;

    pub fn new(seed: u64) -> Self {
        SignLcg { state: seed }
    }

    pub fn next_sign(&mut self) -> f64 {
        self.state = self.state.wrapping_mul(Self::MULTIPLIER).wrapping_add(Self::INCREMENT);
        if self.state >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

struct Projection {
    /// 128 rows × 256 columns, row-major.
    weights: Vec<f64>,
    bias: [f64; EMBEDDING_DIM],
}

fn reference_projection() -> &'static Projection {
    static PROJECTION: OnceLock<Projection> = OnceLock::new();
    PROJECTION.get_or_init(|| {
        let mut lcg = SignLcg::new(REFERENCE_SEED);
        let weights = (0..EMBEDDING_DIM * REFERENCE_FEATURES).map(|_| lcg.next_sign()).collect();
        let mut bias = [0.0; EMBEDDING_DIM];
        for b in bias.iter_mut() {
            *b = lcg.next_sign();
        }
        Projection { weights, bias }
    })
}

/// Model-free deterministic embedder: 16×16 grayscale area average, features
/// in `[0, 1]`, fixed ±1 random projection plus bias, then L2 normalization.
#[derive(Debug, Default, Clone, Copy)]
pub struct ReferenceEmbedder;

impl ReferenceEmbedder {
    pub fn new() -> Self {
        ReferenceEmbedder
    }

    /// The 256 grid features of a chip, row-major, in `[0, 1]`.
    pub fn features(chip: &FaceChip) -> Vec<f64> {
        area_average_gray(chip.pixels(), chip.side(), REFERENCE_GRID)
            .into_iter()
            .map(|g| g / 255.0)
            .collect()
    }
}

impl EmbedderBackend for ReferenceEmbedder {
    fn name(&self) -> &str {
        "reference"
    }

    fn input_side(&self) -> u32 {
        REFERENCE_GRID
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn embed_chip(&self, chip: &FaceChip) -> Result<Embedding, EmbeddingError> {
        let features = Self::features(chip);
        let proj = reference_projection();
        let raw: Vec<f64> = proj
            .weights
            .chunks_exact(REFERENCE_FEATURES)
            .zip(proj.bias.iter())
            .map(|(row, b)| row.iter().zip(&features).map(|(w, f)| w * f).sum::<f64>() + b)
            .collect();
        l2_normalize(&raw)
    }
}

/// A pretrained network mapping a resized RGB chip to 128 raw floats.
///
/// `input` is HWC, `side × side × 3`, with channel values scaled as
/// `(v − 127.5) / 128`.
pub trait EmbeddingModel: Send + Sync {
    fn name(&self) -> &str;
    fn input_side(&self) -> u32;
    fn infer(&self, input: &[f32]) -> Result<Vec<f32>, EmbeddingError>;
}

/// Adapter turning any [`EmbeddingModel`] into an [`EmbedderBackend`]:
/// bilinear resize to the model side, standardize, infer, normalize.
pub struct ModelEmbedder<M> {
    model: M,
}

impl<M: EmbeddingModel> ModelEmbedder<M> {
    pub fn new(model: M) -> Self {
        ModelEmbedder { model }
    }

    pub fn model(&self) -> &M {
        &self.model
    }
}

impl<M: EmbeddingModel> EmbedderBackend for ModelEmbedder<M> {
    fn name(&self) -> &str {
        self.model.name()
    }

    fn input_side(&self) -> u32 {
        self.model.input_side()
    }

    fn deterministic(&self) -> bool {
        true
    }

    fn embed_chip(&self, chip: &FaceChip) -> Result<Embedding, EmbeddingError> {
        let side = self.model.input_side();
        let resized = resize_bilinear(&chip.to_image(), side, side);
        let input: Vec<f32> = resized.as_raw().iter().map(|&v| (v as f32 - 127.5) / 128.0).collect();
        let raw = self.model.infer(&input)?;
        let raw: Vec<f64> = raw.into_iter().map(f64::from).collect();
        l2_normalize(&raw)
    }
}

/// Placeholder for a backend whose weights could not be loaded; every call
/// fails with [`EmbeddingError::BackendUnavailable`].
#[derive(Debug, Clone)]
pub struct UnavailableEmbedder {
    reason: String,
}

impl UnavailableEmbedder {
    pub fn new(reason: impl Into<String>) -> Self {
        UnavailableEmbedder { reason: reason.into() }
    }
}

impl EmbedderBackend for UnavailableEmbedder {
    fn name(&self) -> &str {
        "unavailable"
    }
    fn input_side(&self) -> u32 {
        CANONICAL_CHIP_SIDE
    }
    fn deterministic(&self) -> bool {
        true
    }
    fn embed_chip(&self, _chip: &FaceChip) -> Result<Embedding, EmbeddingError> {
        Err(EmbeddingError::BackendUnavailable(self.reason.clone()))
    }
}
