use serde::{Deserialize, Serialize};

use super::{DiagnosticCode, GroundingElement, ParseDiagnostic, ParseOutput};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Segment,
    Detect,
    Point,
    Line,
}

impl Task {
    fn expected_kind(self) -> &'static str {
        match self {
            Task::Segment => "mask_query",
            Task::Detect => "box",
            Task::Point => "point",
            Task::Line => "line",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "segment" | "seg" => Ok(Task::Segment),
            "detect" | "det" => Ok(Task::Detect),
            "point" => Ok(Task::Point),
            "line" => Ok(Task::Line),
            other => Err(format!(
                "unknown task {other:?} (segment, detect, point, line)"
            )),
        }
    }
}

/// Checks that every primitive matches `task`, and that mask queries carry
/// exactly `n_query` tokens. Diagnostics carry offset 0 since the elements
/// have no source text; see [`ParseOutput::validate`].
pub fn validate_against_task(
    elements: &[GroundingElement],
    task: Task,
    n_query: usize,
) -> Vec<ParseDiagnostic> {
    check(elements, &[], task, n_query)
}

impl ParseOutput {
    /// Task validation with each diagnostic anchored at the opening marker
    /// of the offending top-level element.
    pub fn validate(&self, task: Task, n_query: usize) -> Vec<ParseDiagnostic> {
        check(&self.elements, &self.offsets, task, n_query)
    }
}

fn check(
    elements: &[GroundingElement],
    offsets: &[usize],
    task: Task,
    n_query: usize,
) -> Vec<ParseDiagnostic> {
    let mut diags = Vec::new();
    for (i, el) in elements.iter().enumerate() {
        let offset = offsets.get(i).copied().unwrap_or(0);
        match el {
            GroundingElement::ObjectRef { body, .. } => {
                for inner in body {
                    check_one(inner, offset, task, n_query, &mut diags);
                }
            }
            other => check_one(other, offset, task, n_query, &mut diags),
        }
    }
    diags
}

fn check_one(
    el: &GroundingElement,
    offset: usize,
    task: Task,
    n_query: usize,
    diags: &mut Vec<ParseDiagnostic>,
) {
    if el.kind_name() != task.expected_kind() {
        diags.push(ParseDiagnostic::warning(
            offset,
            DiagnosticCode::UnexpectedToken,
            format!(
                "{} in a {:?} response (expected {})",
                el.kind_name(),
                task,
                task.expected_kind()
            ),
        ));
        return;
    }
    if let GroundingElement::MaskQuery { token_count } = *el {
        if token_count != n_query {
            diags.push(ParseDiagnostic::error(
                offset,
                DiagnosticCode::SegCountMismatch,
                format!("mask query has {token_count} tokens, expected {n_query}"),
            ));
        }
    }
}
