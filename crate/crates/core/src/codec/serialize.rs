use std::fmt::Write as _;

use super::{
    CodecError, GroundingElement, BOX_END, BOX_START, DEFAULT_BINS, LINE_END, LINE_START,
    POINT_END, POINT_START, REF_END, REF_START, SEG_MASK,
};

/// Canonical token text for `elements` with the default 1000 bins.
pub fn serialize(elements: &[GroundingElement]) -> Result<String, CodecError> {
    serialize_with_bins(elements, DEFAULT_BINS)
}

pub fn serialize_with_bins(elements: &[GroundingElement], bins: u32) -> Result<String, CodecError> {
    let mut out = String::new();
    let mut seen_ref = false;
    for (index, el) in elements.iter().enumerate() {
        let fail = |reason: String| CodecError::Serialize { index, reason };
        if let GroundingElement::ObjectRef { label, body } = el {
            seen_ref = true;
            if label.contains("<|") {
                return Err(fail(
                    "object reference label contains a marker prefix \"<|\"".into(),
                ));
            }
            for (j, inner) in body.iter().enumerate() {
                if matches!(inner, GroundingElement::ObjectRef { .. }) {
                    return Err(fail(format!(
                        "nested object reference at body position {j}"
                    )));
                }
                check_primitive(inner, bins)
                    .map_err(|r| fail(format!("body position {j}: {r}")))?;
            }
            check_mask_runs(body).map_err(|r| fail(format!("body: {r}")))?;
            out.push_str(REF_START);
            out.push_str(label);
            out.push_str(REF_END);
            for inner in body {
                write_primitive(&mut out, inner);
            }
        } else {
            if seen_ref {
                return Err(fail(format!(
                    "{} after an object reference would bind to that reference",
                    el.kind_name()
                )));
            }
            check_primitive(el, bins).map_err(fail)?;
            if index > 0 {
                check_mask_runs(&elements[index - 1..=index]).map_err(fail)?;
            }
            write_primitive(&mut out, el);
        }
    }
    Ok(out)
}

fn check_primitive(el: &GroundingElement, bins: u32) -> Result<(), String> {
    let in_range = |vals: &[u32]| -> Result<(), String> {
        match vals.iter().find(|&&v| v >= bins) {
            Some(v) => Err(format!("coordinate {v} outside [0, {}]", bins - 1)),
            None => Ok(()),
        }
    };
    match *el {
        GroundingElement::Box { x1, y1, x2, y2 } => {
            in_range(&[x1, y1, x2, y2])?;
            if x1 > x2 || y1 > y2 {
                return Err("box corners are not ordered (x1 <= x2, y1 <= y2)".into());
            }
            Ok(())
        }
        GroundingElement::Point { x, y } => in_range(&[x, y]),
        GroundingElement::Line { x1, y1, x2, y2 } => in_range(&[x1, y1, x2, y2]),
        GroundingElement::MaskQuery { token_count: 0 } => Err("mask query with zero tokens".into()),
        GroundingElement::MaskQuery { .. } => Ok(()),
        GroundingElement::ObjectRef { .. } => Err("unexpected object reference".into()),
    }
}

// Two adjacent mask queries would merge into one run on parse.
fn check_mask_runs(els: &[GroundingElement]) -> Result<(), String> {
    let adjacent = els.windows(2).any(|w| {
        matches!(w[0], GroundingElement::MaskQuery { .. })
            && matches!(w[1], GroundingElement::MaskQuery { .. })
    });
    if adjacent {
        Err("adjacent mask queries are indistinguishable from one longer run".into())
    } else {
        Ok(())
    }
}

fn write_primitive(out: &mut String, el: &GroundingElement) {
    match *el {
        GroundingElement::Box { x1, y1, x2, y2 } => {
            let _ = write!(out, "{BOX_START}({x1},{y1}),({x2},{y2}){BOX_END}");
        }
        GroundingElement::Point { x, y } => {
            let _ = write!(out, "{POINT_START}({x},{y}){POINT_END}");
        }
        GroundingElement::Line { x1, y1, x2, y2 } => {
            let _ = write!(out, "{LINE_START}({x1},{y1}),({x2},{y2}){LINE_END}");
        }
        GroundingElement::MaskQuery { token_count } => {
            for _ in 0..token_count {
                out.push_str(SEG_MASK);
            }
        }
        GroundingElement::ObjectRef { .. } => unreachable!("refs are written by the caller"),
    }
}
