//! Building the detector and embedder pair named by the config.

use crate::config::{BackendConfig, BackendKind};
use presenzia_core::detection::{Cascade, CascadeConfig};
use presenzia_core::embedding::{EmbedderBackend, ReferenceEmbedder};
use presenzia_core::FacePipeline;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
#[error("backend unavailable: {0}")]
pub struct BackendError(pub String);

pub fn build_pipeline(cfg: &BackendConfig, detection: CascadeConfig) -> Result<FacePipeline, BackendError> {
    let detector: Arc<Cascade> = match cfg.detector {
        BackendKind::Reference => Arc::new(Cascade::reference()),
        BackendKind::Real => Arc::new(real::detector(cfg)?),
    };
    let embedder: Arc<dyn EmbedderBackend> = match cfg.embedder {
        BackendKind::Reference => Arc::new(ReferenceEmbedder::new()),
        BackendKind::Real => real::embedder(cfg)?,
    };
    Ok(FacePipeline::new(detector, embedder).with_detection_config(detection))
}

#[cfg(not(feature = "onnx"))]
mod real {
    use super::*;

    const MISSING: &str = "the real backend needs a build with `--features onnx`";

    pub fn detector(_: &BackendConfig) -> Result<Cascade, BackendError> {
        Err(BackendError(MISSING.into()))
    }

    pub fn embedder(_: &BackendConfig) -> Result<Arc<dyn EmbedderBackend>, BackendError> {
        Err(BackendError(MISSING.into()))
    }
}

#[cfg(feature = "onnx")]
mod real {
    //! ONNX models run with tract. Inputs are NCHW float tensors scaled as
    //! `(v - 127.5) / 128`. Detector stages follow the common cascade export
    //! layout: the proposal net emits a 2-channel score map and a 4-channel
    //! box-offset map at stride 2 over 12 px windows; the refine and output nets
    //! emit a 2-way score, 4 box offsets and (output only) 10 landmark values,
    //! five x then five y, as fractions of the crop.
    use super::*;
    use presenzia_core::detection::{BoundingBox, Candidate, DetectionError, FaceLandmarks, Stage, StagePredictor};
    use presenzia_core::embedding::{EmbeddingError, EmbeddingModel, ModelEmbedder};
    use presenzia_core::imaging::RgbImage;
    use std::path::Path;
    use tract_onnx::prelude::*;

    type Plan = TypedRunnableModel<TypedModel>;

    fn load(path: &Path, shape: Option<[usize; 4]>) -> Result<Plan, BackendError> {
        let err = |e: TractError| BackendError(format!("{}: {e}", path.display()));
        let mut model = tract_onnx::onnx().model_for_path(path).map_err(err)?;
        if let Some(s) = shape {
            model = model.with_input_fact(0, f32::fact(s).into()).map_err(err)?;
        }
        model.into_optimized().and_then(|m| m.into_runnable()).map_err(err)
    }

    fn nchw(img: &RgbImage) -> Tensor {
        let (w, h) = img.dimensions();
        let arr = tract_ndarray::Array4::from_shape_fn((1, 3, h as usize, w as usize), |(_, c, y, x)| {
            (img.get_pixel(x as u32, y as u32).0[c] as f32 - 127.5) / 128.0
        });
        arr.into()
    }

    fn run(plan: &Plan, input: Tensor) -> Result<Vec<Arc<Tensor>>, String> {
        plan.run(tvec!(input.into())).map(|o| o.into_iter().map(|t| t.into_arc_tensor()).collect()).map_err(|e| e.to_string())
    }

    pub struct OnnxEmbedding {
        plan: Plan,
        side: u32,
        name: String,
    }

    impl EmbeddingModel for OnnxEmbedding {
        fn name(&self) -> &str {
            &self.name
        }
        fn input_side(&self) -> u32 {
            self.side
        }
        fn infer(&self, input: &[f32]) -> Result<Vec<f32>, EmbeddingError> {
            let s = self.side as usize;
            let arr = tract_ndarray::Array4::from_shape_fn((1, 3, s, s), |(_, c, y, x)| input[(y * s + x) * 3 + c]);
            let out = run(&self.plan, arr.into()).map_err(EmbeddingError::BackendUnavailable)?;
            let v = out[0].as_slice::<f32>().map_err(|e| EmbeddingError::BackendUnavailable(e.to_string()))?;
            Ok(v.to_vec())
        }
    }

    pub fn embedder(cfg: &BackendConfig) -> Result<Arc<dyn EmbedderBackend>, BackendError> {
        let path = cfg.embedder_model.as_ref().ok_or_else(|| BackendError("embedder_model not set".into()))?;
        let side = cfg.embedder_input_side.unwrap_or(160);
        let plan = load(path, Some([1, 3, side as usize, side as usize]))?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("onnx").to_string();
        Ok(Arc::new(ModelEmbedder::new(OnnxEmbedding { plan, side, name })))
    }

    struct OnnxStage {
        stage: Stage,
        side: u32,
        path: std::path::PathBuf,
        fixed: Option<Plan>,
        /// Proposal plans keyed by input size; pyramid levels vary in shape.
        by_size: parking_lot::Mutex<std::collections::HashMap<(u32, u32), Arc<Plan>>>,
    }

    fn bad(e: impl std::fmt::Display) -> DetectionError {
        DetectionError::BackendUnavailable(e.to_string())
    }

    /// Split outputs by their channel count (2 = scores, 4 = boxes, 10 = landmarks).
    fn pick(outputs: &[Arc<Tensor>], channels: usize, axis: usize) -> Option<Arc<Tensor>> {
        outputs.iter().find(|t| t.shape().get(axis) == Some(&channels)).cloned()
    }

    impl StagePredictor for OnnxStage {
        fn stage(&self) -> Stage {
            self.stage
        }

        fn input_side(&self) -> u32 {
            self.side
        }

        fn predict(&self, input: &RgbImage) -> Result<Vec<Candidate>, DetectionError> {
            match self.stage {
                Stage::Proposal => self.propose(input),
                _ => self.score_crop(input),
            }
        }
    }

    impl OnnxStage {
        fn propose(&self, input: &RgbImage) -> Result<Vec<Candidate>, DetectionError> {
            let (w, h) = input.dimensions();
            if w < 12 || h < 12 {
                return Ok(Vec::new());
            }
            let plan = {
                let mut cache = self.by_size.lock();
                match cache.get(&(w, h)) {
                    Some(p) => p.clone(),
                    None => {
                        let p = Arc::new(load(&self.path, Some([1, 3, h as usize, w as usize])).map_err(bad)?);
                        cache.insert((w, h), p.clone());
                        p
                    }
                }
            };
            let out = run(&plan, nchw(input)).map_err(bad)?;
            let prob = pick(&out, 2, 1).ok_or_else(|| bad("proposal net has no 2-channel output"))?;
            let reg = pick(&out, 4, 1).ok_or_else(|| bad("proposal net has no 4-channel output"))?;
            let prob = prob.to_array_view::<f32>().map_err(bad)?;
            let reg = reg.to_array_view::<f32>().map_err(bad)?;
            let (gh, gw) = (prob.shape()[2], prob.shape()[3]);
            let mut out = Vec::new();
            for gy in 0..gh {
                for gx in 0..gw {
                    let score = prob[[0, 1, gy, gx]] as f64;
                    let (x0, y0) = (gx as f64 * 2.0, gy as f64 * 2.0);
                    let d = |c: usize| reg[[0, c, gy, gx]] as f64 * 12.0;
                    let (x1, y1, x2, y2) = (x0 + d(0), y0 + d(1), x0 + 12.0 + d(2), y0 + 12.0 + d(3));
                    if x2 > x1 && y2 > y1 {
                        out.push(Candidate { bbox: BoundingBox::new(x1, y1, x2 - x1, y2 - y1), score: score.clamp(0.0, 1.0), landmarks: None });
                    }
                }
            }
            Ok(out)
        }

        fn score_crop(&self, input: &RgbImage) -> Result<Vec<Candidate>, DetectionError> {
            let plan = self.fixed.as_ref().expect("crop stages load a fixed plan");
            let out = run(plan, nchw(input)).map_err(bad)?;
            let prob = pick(&out, 2, 1).ok_or_else(|| bad("stage net has no 2-way score output"))?;
            let reg = pick(&out, 4, 1).ok_or_else(|| bad("stage net has no box output"))?;
            let prob = prob.as_slice::<f32>().map_err(bad)?;
            let reg = reg.as_slice::<f32>().map_err(bad)?;
            let s = self.side as f64;
            let (x1, y1, x2, y2) = (reg[0] as f64 * s, reg[1] as f64 * s, s + reg[2] as f64 * s, s + reg[3] as f64 * s);
            if !(x2 > x1 && y2 > y1) {
                return Ok(Vec::new());
            }
            let bbox = BoundingBox::new(x1, y1, x2 - x1, y2 - y1);
            let landmarks = if self.stage == Stage::Output {
                let lm = pick(&out, 10, 1).ok_or_else(|| bad("output net has no landmark output"))?;
                let lm = lm.as_slice::<f32>().map_err(bad)?;
                let mut points = [[0.0; 2]; 5];
                for (i, p) in points.iter_mut().enumerate() {
                    *p = [lm[i] as f64 * s, lm[i + 5] as f64 * s];
                }
                Some(FaceLandmarks { points })
            } else {
                None
            };
            Ok(vec![Candidate { bbox, score: (prob[1] as f64).clamp(0.0, 1.0), landmarks }])
        }
    }

    pub fn detector(cfg: &BackendConfig) -> Result<Cascade, BackendError> {
        let [p, r, o] = cfg.detector_models.clone().ok_or_else(|| BackendError("detector_models not set".into()))?;
        let stage = |stage: Stage, side: u32, path: std::path::PathBuf| -> Result<Box<dyn StagePredictor>, BackendError> {
            let fixed = match stage {
                Stage::Proposal => None,
                _ => Some(load(&path, Some([1, 3, side as usize, side as usize]))?),
            };
            Ok(Box::new(OnnxStage { stage, side, path, fixed, by_size: Default::default() }))
        };
        Cascade::new("onnx-cascade", stage(Stage::Proposal, 12, p)?, stage(Stage::Refine, 24, r)?, stage(Stage::Output, 48, o)?)
            .map_err(|e| BackendError(e.to_string()))
    }
}
