//! Detect → crop → embed → identify, per frame.

use crate::detection::{crop_and_resize, detect, Cascade, CascadeConfig, Detection, DetectionError};
use crate::embedding::{embed, EmbedderBackend, Embedding, EmbeddingError, CANONICAL_CHIP_SIDE};
use crate::gallery::{Gallery, GalleryError, IdentificationResult, RecognitionConfig};
use crate::imaging::RgbImage;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Gallery(#[from] GalleryError),
    #[error("no face found in image")]
    NoFace,
}

/// The detector cascade and embedder used together.
#[derive(Clone)]
pub struct FacePipeline {
    pub detector: Arc<Cascade>,
    pub embedder: Arc<dyn EmbedderBackend>,
    pub detection: CascadeConfig,
    pub chip_side: u32,
}

impl std::fmt::Debug for FacePipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FacePipeline")
            .field("detector", &self.detector.name())
            .field("embedder", &self.embedder.name())
            .finish()
    }
}

impl FacePipeline {
    pub fn new(detector: Arc<Cascade>, embedder: Arc<dyn EmbedderBackend>) -> Self {
        FacePipeline { detector, embedder, detection: CascadeConfig::default(), chip_side: CANONICAL_CHIP_SIDE }
    }

    /// Reference detector and reference embedder; needs no model files.
    pub fn reference() -> Self {
        FacePipeline::new(Arc::new(Cascade::reference()), Arc::new(crate::embedding::ReferenceEmbedder))
    }

    pub fn with_detection_config(mut self, config: CascadeConfig) -> Self {
        self.detection = config;
        self
    }

    pub fn backend_name(&self) -> String {
        format!("{}+{}", self.detector.name(), self.embedder.name())
    }

    pub fn detect(&self, image: &RgbImage) -> Result<Vec<Detection>, PipelineError> {
        Ok(detect(image, &self.detector, &self.detection)?)
    }

    pub fn embed_detection(&self, image: &RgbImage, det: &Detection) -> Result<Embedding, PipelineError> {
        let chip = crop_and_resize(image, &det.bbox, self.chip_side)?;
        Ok(embed(&chip, self.embedder.as_ref())?)
    }

    /// Embedding of the most probable face in the image.
    pub fn embed_primary_face(&self, image: &RgbImage) -> Result<(Detection, Embedding), PipelineError> {
        let dets = self.detect(image)?;
        let best = *dets.first().ok_or(PipelineError::NoFace)?;
        let e = self.embed_detection(image, &best)?;
        Ok((best, e))
    }

    /// Embed every detected face, in detection order.
    pub fn embed_faces(&self, image: &RgbImage) -> Result<Vec<(Detection, Embedding)>, PipelineError> {
        self.detect(image)?
            .into_iter()
            .map(|d| self.embed_detection(image, &d).map(|e| (d, e)))
            .collect()
    }
}

/// One recognized face in a frame.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FaceRecognition {
    pub detection: Detection,
    pub identification: IdentificationResult,
}

/// Run the full pipeline on one frame, preserving detection order.
pub fn recognize_frame(
    image: &RgbImage,
    pipeline: &FacePipeline,
    gallery: &Gallery,
    config: &RecognitionConfig,
) -> Result<Vec<FaceRecognition>, PipelineError> {
    config.validate()?;
    pipeline
        .embed_faces(image)?
        .into_iter()
        .map(|(detection, e)| {
            let identification = gallery.identify(&e, config)?;
            Ok(FaceRecognition { detection, identification })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::{crop_canonical, CascadeConfig};
    use crate::gallery::Decision;
    use crate::imaging::Rgb;
    use crate::time::Timestamp;

    #[test]
    fn enrolled_image_is_recognized() {
        let p = FacePipeline::reference();
        let img = RgbImage::from_fn(160, 160, |x, y| Rgb([(x ^ y) as u8, x as u8, y as u8]));
        let (_, e) = p.embed_primary_face(&img).unwrap();
        let mut g = Gallery::new();
        g.enroll("emp-1".into(), vec![e], Timestamp(0)).unwrap();
        let out = recognize_frame(&img, &p, &g, &RecognitionConfig { k: 1, tau: 0.01 }).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].identification.decision, Decision::Person("emp-1".into()));
        assert_eq!(out[0].identification.candidates[0].distance, 0.0);
    }

    #[test]
    fn no_detections_gives_empty_list() {
        let p = FacePipeline::reference()
            .with_detection_config(CascadeConfig { thresholds: [0.6, 1.01, 0.8], ..Default::default() });
        let img = RgbImage::new(100, 100);
        assert!(recognize_frame(&img, &p, &Gallery::new(), &RecognitionConfig::default()).unwrap().is_empty());
        assert_eq!(p.embed_primary_face(&img).unwrap_err(), PipelineError::NoFace);
    }

    #[test]
    fn pipeline_matches_stepwise_manual_run() {
        let p = FacePipeline::reference();
        let img = RgbImage::from_fn(240, 180, |x, y| Rgb([(x * 7 % 256) as u8, (y * 3 % 256) as u8, 50]));
        let dets = detect(&img, &p.detector, &p.detection).unwrap();
        let manual = embed(&crop_canonical(&img, &dets[0].bbox).unwrap(), p.embedder.as_ref()).unwrap();
        let mut g = Gallery::new();
        g.enroll("x".into(), vec![manual.clone()], Timestamp(0)).unwrap();
        let out = recognize_frame(&img, &p, &g, &RecognitionConfig { k: 1, tau: 0.0 }).unwrap();
        assert_eq!(out[0].detection, dets[0]);
        assert_eq!(out[0].identification.candidates[0].distance, 0.0);
    }
}
