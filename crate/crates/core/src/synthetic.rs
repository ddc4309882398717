//! Seeded synthetic face-like images: each identity is a coarse color
//! pattern, each rendering adds per-cell and per-pixel noise. Useful for
//! exercising the pipeline and the evaluation harness without a real dataset.

use crate::evaluation::{format_pair_list, DatasetError, DatasetManifest, ImageRef, PairRef};
use crate::imaging::{encode_png, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub identities: usize,
    pub images_per_identity: u32,
    /// Image side in pixels.
    pub side: u32,
    /// Cells per side of the identity pattern.
    pub grid: u32,
    /// Amplitude of per-rendering jitter of each cell, in 0..=255 units.
    pub cell_noise: f64,
    /// Amplitude of per-pixel noise.
    pub pixel_noise: f64,
    /// Probability that a rendering is corrupted with `outlier_noise` cell jitter.
    pub outlier_fraction: f64,
    pub outlier_noise: f64,
    /// Identities are grouped into families of this size that share a base
    /// pattern (lookalikes). `1` makes every identity independent.
    pub family_size: usize,
    /// How far a family member's pattern sits from the family base, in [0, 1].
    pub family_spread: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec { identities: 6, images_per_identity: 4, side: 96, grid: 8, cell_noise: 10.0, pixel_noise: 12.0, outlier_fraction: 0.0, outlier_noise: 0.0, family_size: 1, family_spread: 1.0, seed: 1 }
    }
}

impl SyntheticSpec {
    /// Forty identities in two lookalike families of twenty, ten renderings
    /// each. Different-identity distances are bimodal (close within a family,
    /// far across), so thresholds calibrated on few pairs tend to be loose.
    pub fn noisy_clusters(seed: u64) -> Self {
        SyntheticSpec {
            identities: 40,
            images_per_identity: 10,
            side: 64,
            grid: 8,
            cell_noise: 15.0,
            pixel_noise: 20.0,
            outlier_fraction: 0.0,
            outlier_noise: 0.0,
            family_size: 20,
            family_spread: 0.4,
            seed,
        }
    }
}

pub fn identity_name(identity: usize) -> String {
    format!("Person_{identity:04}")
}

fn mix(a: u64, b: u64) -> u64 {
    crate::tracking::derive_schedule_seed(a, b)
}

fn random_pattern(cells: u32, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cells).map(|_| [rng.random_range(0.0..255.0), rng.random_range(0.0..255.0), rng.random_range(0.0..255.0)]).collect()
}

fn template(spec: &SyntheticSpec, identity: usize) -> Vec<[f64; 3]> {
    let cells = spec.grid * spec.grid;
    let own = random_pattern(cells, mix(spec.seed, identity as u64));
    if spec.family_size <= 1 {
        return own;
    }
    let family = identity / spec.family_size;
    let base = random_pattern(cells, mix(!spec.seed, family as u64));
    let w = spec.family_spread.clamp(0.0, 1.0);
    base.iter().zip(&own).map(|(b, o)| std::array::from_fn(|k| (1.0 - w) * b[k] + w * o[k])).collect()
}

/// Render image `index` of `identity`. Identities at or beyond
/// `spec.identities` are valid too and act as strangers.
pub fn render(spec: &SyntheticSpec, identity: usize, index: u32) -> RgbImage {
    let cells = template(spec, identity);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(mix(spec.seed, identity as u64), u64::from(index) + 1));
    let amplitude = if rng.random_bool(spec.outlier_fraction.clamp(0.0, 1.0)) { spec.outlier_noise } else { spec.cell_noise };
    let jitter: Vec<[f64; 3]> = cells
        .iter()
        .map(|c| {
            let mut j = *c;
            for v in &mut j {
                *v += rng.random_range(-1.0..=1.0) * amplitude;
            }
            j
        })
        .collect();
    let g = spec.grid.max(1);
    RgbImage::from_fn(spec.side, spec.side, |x, y| {
        let cx = (x * g / spec.side).min(g - 1);
        let cy = (y * g / spec.side).min(g - 1);
        let c = jitter[(cy * g + cx) as usize];
        let mut px = [0u8; 3];
        for (k, p) in px.iter_mut().enumerate() {
            let v = c[k] + rng.random_range(-1.0..=1.0) * spec.pixel_noise;
            *p = v.round().clamp(0.0, 255.0) as u8;
        }
        Rgb(px)
    })
}

/// Write `root/<Name>/<Name>_<NNNN>.png` for every identity and image (1-based).
pub fn write_dataset(spec: &SyntheticSpec, root: &Path) -> Result<DatasetManifest, DatasetError> {
    let io = |p: &Path, e: std::io::Error| DatasetError::Io { path: p.to_path_buf(), message: e.to_string() };
    let mut identities = BTreeMap::new();
    for id in 0..spec.identities {
        let name = identity_name(id);
        let dir = root.join(&name);
        std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
        let mut images = BTreeMap::new();
        for idx in 1..=spec.images_per_identity {
            let path = dir.join(format!("{name}_{idx:04}.png"));
            std::fs::write(&path, encode_png(&render(spec, id, idx))).map_err(|e| io(&path, e))?;
            images.insert(idx, path);
        }
        identities.insert(name, images);
    }
    Ok(DatasetManifest::from_identities(root.to_path_buf(), identities))
}

/// Draw `n_same` same-identity and `n_diff` different-identity pairs
/// (without repeats where the dataset allows), interleaved.
pub fn generate_pairs(spec: &SyntheticSpec, n_same: usize, n_diff: usize, seed: u64) -> Vec<PairRef> {
    assert!(spec.identities >= 2 && spec.images_per_identity >= 2, "need two identities with two images each");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = spec.images_per_identity;
    let img = |id: usize, index: u32| ImageRef { name: identity_name(id), index };
    let mut seen = std::collections::HashSet::new();
    let mut draw = |same: bool, rng: &mut ChaCha8Rng| loop {
        let a = rng.random_range(0..spec.identities);
        let b = if same {
            a
        } else {
            let o = rng.random_range(0..spec.identities - 1);
            if o >= a { o + 1 } else { o }
        };
        let i = rng.random_range(1..=m);
        let mut j = rng.random_range(1..=m);
        if same && i == j {
            j = if j == m { 1 } else { j + 1 };
        }
        let key = (a, i, b, j);
        let capacity = if same {
            spec.identities * (m * (m - 1)) as usize
        } else {
            spec.identities * (spec.identities - 1) * (m * m) as usize
        };
        if seen.insert(key) || seen.len() >= capacity {
            return PairRef { a: img(a, i), b: img(b, j), same, line: 0 };
        }
    };
    let mut out = Vec::with_capacity(n_same + n_diff);
    let (mut s, mut d) = (0, 0);
    while s < n_same || d < n_diff {
        if s < n_same {
            out.push(draw(true, &mut rng));
            s += 1;
        }
        if d < n_diff {
            out.push(draw(false, &mut rng));
            d += 1;
        }
    }
    for (i, p) in out.iter_mut().enumerate() {
        p.line = i + 2;
    }
    out
}

/// Dataset plus pair file written under `root`; returns the pair-file path.
pub fn write_benchmark(
    spec: &SyntheticSpec,
    root: &Path,
    n_same: usize,
    n_diff: usize,
    pair_seed: u64,
) -> Result<(DatasetManifest, std::path::PathBuf), DatasetError> {
    let manifest = write_dataset(spec, &root.join("images"))?;
    let pairs = generate_pairs(spec, n_same, n_diff, pair_seed);
    let path = root.join("pairs.txt");
    std::fs::write(&path, format_pair_list(&pairs))
        .map_err(|e| DatasetError::Io { path: path.clone(), message: e.to_string() })?;
    Ok((manifest, path))
}
