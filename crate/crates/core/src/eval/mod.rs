//! Grounding and segmentation metrics over JSON Lines annotation corpora.

mod detection;
mod diagnosis;
mod geometry;
mod keypoints;
mod record;
mod report;
mod rle;
mod segmentation;

use thiserror::Error;

pub use detection::{
    best_f1_sweep, eval_detection, eval_detection_corpus, match_detections, precision_recall_f1,
    DetectionGroup, Matching, ScoredBox, SweepResult,
};
pub use diagnosis::{eval_diagnosis, eval_diagnosis_corpus, Diagnosis, DiagnosisTruth};
pub use geometry::{iou_boxes, iou_masks, Rect};
pub use keypoints::{eval_keypoints, eval_keypoints_corpus};
pub use record::{AnnotationRecord, Corpus, Keypoint, Target};
pub use report::{support_weighted, DetectionSummary, EvalTask, MetricReport};
pub use rle::{rle_decode, rle_encode, RleMask};
pub use segmentation::{eval_segmentation, eval_segmentation_corpus};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("corrupt mask: run lengths sum to {got}, expected {expected}")]
    CorruptMask { expected: usize, got: usize },
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}
