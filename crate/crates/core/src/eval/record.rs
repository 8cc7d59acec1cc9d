use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{EvalError, Rect, RleMask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Target {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<RleMask>,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Rect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Vec<Keypoint>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<String>,
    #[serde(flatten, skip_serializing)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub site: String,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(flatten, skip_serializing)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl AnnotationRecord {
    pub fn new(
        image_id: &str,
        width: usize,
        height: usize,
        site: &str,
        targets: Vec<Target>,
    ) -> Self {
        Self {
            image_id: image_id.to_string(),
            width,
            height,
            site: site.to_string(),
            targets,
            extra: BTreeMap::new(),
        }
    }

    /// Checks that geometry lies inside the image and keypoint names are unique.
    pub fn validate(&self) -> Result<(), EvalError> {
        let (w, h) = (self.width as f64, self.height as f64);
        let fail = |what: String| {
            Err(EvalError::Ingestion(format!(
                "image {:?}: {what}",
                self.image_id
            )))
        };
        for (i, t) in self.targets.iter().enumerate() {
            if let Some(m) = &t.mask {
                if (m.height, m.width) != (self.height, self.width) {
                    return fail(format!(
                        "target {i} mask is {}x{}, image is {}x{}",
                        m.height, m.width, self.height, self.width
                    ));
                }
                let total: Option<usize> =
                    m.counts.iter().try_fold(0usize, |a, &c| a.checked_add(c));
                if total != Some(m.height * m.width) {
                    return Err(EvalError::CorruptMask {
                        expected: m.height * m.width,
                        got: total.unwrap_or(usize::MAX),
                    });
                }
            }
            if let Some(b) = &t.bbox {
                b.validate()?;
                if b.x1 < 0.0 || b.y1 < 0.0 || b.x2 > w || b.y2 > h {
                    return fail(format!(
                        "target {i} box {:?} leaves the image",
                        <[f64; 4]>::from(*b)
                    ));
                }
            }
            if let Some(kps) = &t.keypoints {
                let mut seen = BTreeSet::new();
                for kp in kps {
                    if !seen.insert(kp.name.as_str()) {
                        return fail(format!("target {i} repeats keypoint {:?}", kp.name));
                    }
                    let inside = (0.0..=w).contains(&kp.x) && (0.0..=h).contains(&kp.y);
                    if !inside {
                        return fail(format!(
                            "target {i} keypoint {:?} leaves the image",
                            kp.name
                        ));
                    }
                }
            }
            if let Some(s) = t.score {
                if !s.is_finite() {
                    return fail(format!("target {i} has non-finite score"));
                }
            }
        }
        Ok(())
    }
}

/// A validated set of records keyed by image id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub records: BTreeMap<String, AnnotationRecord>,
    pub warnings: Vec<String>,
}

impl Corpus {
    pub fn from_records(records: Vec<AnnotationRecord>) -> Result<Self, EvalError> {
        let mut corpus = Corpus::default();
        for r in records {
            corpus.insert(r, None)?;
        }
        Ok(corpus)
    }

    /// Reads JSON Lines; blank lines are skipped, unknown fields produce warnings.
    pub fn from_jsonl(text: &str) -> Result<Self, EvalError> {
        let mut corpus = Corpus::default();
        for (i, line) in text.lines().enumerate() {
            let lineno = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: AnnotationRecord = serde_json::from_str(line)
                .map_err(|e| EvalError::Ingestion(format!("line {lineno}: {e}")))?;
            for key in record.extra.keys() {
                corpus
                    .warnings
                    .push(format!("line {lineno}: unknown field {key:?} ignored"));
            }
            for (t, target) in record.targets.iter().enumerate() {
                for key in target.extra.keys() {
                    corpus.warnings.push(format!(
                        "line {lineno}: target {t}: unknown field {key:?} ignored"
                    ));
                }
            }
            corpus.insert(record, Some(lineno))?;
        }
        Ok(corpus)
    }

    fn insert(&mut self, record: AnnotationRecord, line: Option<usize>) -> Result<(), EvalError> {
        let at = line.map(|l| format!("line {l}: ")).unwrap_or_default();
        record
            .validate()
            .map_err(|e| EvalError::Ingestion(format!("{at}{e}")))?;
        if self.records.contains_key(&record.image_id) {
            return Err(EvalError::Ingestion(format!(
                "{at}duplicate image_id {:?}",
                record.image_id
            )));
        }
        self.records.insert(record.image_id.clone(), record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&AnnotationRecord> {
        self.records.get(image_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &AnnotationRecord> {
        self.records.values()
    }
}

/// Pairs the k-th gt target carrying `label` with the k-th prediction target
/// carrying the same label.
pub(crate) fn label_matched<'a>(
    gt: &[Target],
    pred: Option<&'a [Target]>,
) -> Vec<Option<&'a Target>> {
    let mut used: BTreeMap<&str, usize> = BTreeMap::new();
    gt.iter()
        .map(|t| {
            let k = used.entry(t.label.as_str()).or_insert(0);
            let found = pred.and_then(|p| p.iter().filter(|c| c.label == t.label).nth(*k));
            *k += 1;
            found
        })
        .collect()
}
