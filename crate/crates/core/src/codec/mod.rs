//! Grounding-token codec.
//!
//! Model output text carries spatial primitives between special markers:
//!
//! ```text
//! <|box_start|>(x1,y1),(x2,y2)<|box_end|>
//! <|point_start|>(x,y)<|point_end|>
//! <|line_start|>(x1,y1),(x2,y2)<|line_end|>
//! <|seg_mask|><|seg_mask|>...            (one run = one mask query)
//! <|object_ref_start|>label<|object_ref_end|> followed by its primitives
//! ```
//!
//! Coordinates are integer bins in `[0, bins)` (1000 by default). Parsing is
//! total: malformed fragments become [`ParseDiagnostic`]s and the scan
//! resumes at the next marker.

mod parse;
mod quantize;
mod serialize;
mod validate;

pub use parse::{parse, parse_with_bins, ParseOutput};
pub use quantize::{dequantize, quantize, Quantizer, DEFAULT_BINS};
pub use serialize::{serialize, serialize_with_bins};
pub use validate::{validate_against_task, Task};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BOX_START: &str = "<|box_start|>";
pub const BOX_END: &str = "<|box_end|>";
pub const POINT_START: &str = "<|point_start|>";
pub const POINT_END: &str = "<|point_end|>";
pub const LINE_START: &str = "<|line_start|>";
pub const LINE_END: &str = "<|line_end|>";
pub const SEG_MASK: &str = "<|seg_mask|>";
pub const REF_START: &str = "<|object_ref_start|>";
pub const REF_END: &str = "<|object_ref_end|>";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundingElement {
    Box {
        x1: u32,
        y1: u32,
        x2: u32,
        y2: u32,
    },
    Point {
        x: u32,
        y: u32,
    },
    Line {
        x1: u32,
        y1: u32,
        x2: u32,
        y2: u32,
    },
    MaskQuery {
        token_count: usize,
    },
    ObjectRef {
        label: String,
        body: Vec<GroundingElement>,
    },
}

impl GroundingElement {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Box { .. } => "box",
            Self::Point { .. } => "point",
            Self::Line { .. } => "line",
            Self::MaskQuery { .. } => "mask_query",
            Self::ObjectRef { .. } => "object_ref",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticCode {
    UnclosedMarker,
    UnexpectedToken,
    CoordOutOfRange,
    BadCoordArity,
    SegCountMismatch,
    NestedRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParseDiagnostic {
    pub byte_offset: usize,
    pub severity: Severity,
    pub code: DiagnosticCode,
    pub message: String,
}

impl ParseDiagnostic {
    pub fn error(byte_offset: usize, code: DiagnosticCode, message: impl Into<String>) -> Self {
        Self {
            byte_offset,
            severity: Severity::Error,
            code,
            message: message.into(),
        }
    }

    pub fn warning(byte_offset: usize, code: DiagnosticCode, message: impl Into<String>) -> Self {
        Self {
            byte_offset,
            severity: Severity::Warning,
            code,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CodecError {
    #[error("value {value} outside [0, {max}]")]
    Range { value: f64, max: f64 },
    #[error("invalid quantizer: {0}")]
    Quantizer(String),
    #[error("element {index}: {reason}")]
    Serialize { index: usize, reason: String },
}
