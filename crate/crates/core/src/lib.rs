//! Face-recognition attendance tracking: detection, embedding, metric
//! learning utilities, the identity gallery, employee directory, presence
//! tracking and offline evaluation.

pub mod attendance;
pub mod detection;
pub mod directory;
pub mod embedding;
pub mod gallery;
pub mod imaging;
pub mod metric;
pub mod evaluation;
pub mod pipeline;
pub mod synthetic;
pub mod time;
pub mod tracking;

pub use attendance::{Attendance, AttendanceError, AttendanceState, Change, Journal, NullJournal};
pub use detection::{detect, BoundingBox, Cascade, CascadeConfig, Detection, FaceLandmarks};
pub use directory::{EmployeeId, EmployeePatch, EmployeeRecord, EmployeeRole, Principal, Role};
pub use embedding::{squared_l2_distance, EmbedderBackend, Embedding, FaceChip, ReferenceEmbedder};
pub use gallery::{Decision, Gallery, IdentificationResult, PersonId, RecognitionConfig};
pub use metric::{calibrate_threshold, triplet_loss, CalibrationResult, LabeledPair, LabeledSample, MiningConfig};
pub use pipeline::{recognize_frame, FacePipeline, FaceRecognition};
pub use time::Timestamp;
pub use tracking::{CheckOutcome, TrackingConfig, WorkSession};
