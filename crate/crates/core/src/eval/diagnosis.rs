use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Corpus, EvalError, EvalTask, MetricReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagnosis {
    Benign,
    Malignant,
}

impl FromStr for Diagnosis {
    type Err = EvalError;

    /// Case-insensitive after trimming; any other text, including hedged
    /// answers, is rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().as_str() {
            "benign" => Ok(Diagnosis::Benign),
            "malignant" => Ok(Diagnosis::Malignant),
            _ => Err(EvalError::Ingestion(format!("not a diagnosis: {s:?}"))),
        }
    }
}

/// Ground-truth label and site for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosisTruth {
    pub label: Diagnosis,
    pub site: String,
}

/// Accuracy in percent. A missing or unparseable prediction is wrong.
pub fn eval_diagnosis(
    preds: &BTreeMap<String, String>,
    gts: &BTreeMap<String, DiagnosisTruth>,
) -> MetricReport {
    let mut by_site: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (image_id, truth) in gts {
        let correct = preds
            .get(image_id)
            .and_then(|p| p.parse::<Diagnosis>().ok())
            .is_some_and(|d| d == truth.label);
        let entry = by_site.entry(truth.site.clone()).or_default();
        entry.0 += usize::from(correct);
        entry.1 += 1;
    }
    let sites = by_site
        .into_iter()
        .map(|(site, (hits, n))| (site, (100.0 * hits as f64 / n as f64, n)))
        .collect();
    MetricReport::weighted(EvalTask::Diagnosis, sites)
}

/// First `diagnosis` field found among a record's targets.
fn record_diagnosis(rec: &super::AnnotationRecord) -> Option<&str> {
    rec.targets.iter().find_map(|t| t.diagnosis.as_deref())
}

/// Corpus form: gt records must carry a valid diagnosis; predictions keep
/// their raw text.
pub fn eval_diagnosis_corpus(preds: &Corpus, gts: &Corpus) -> Result<MetricReport, EvalError> {
    let mut truth = BTreeMap::new();
    for rec in gts.iter() {
        let raw = record_diagnosis(rec).ok_or_else(|| {
            EvalError::Protocol(format!("image {:?}: gt has no diagnosis", rec.image_id))
        })?;
        let label = raw
            .parse()
            .map_err(|e| EvalError::Ingestion(format!("image {:?}: {e}", rec.image_id)))?;
        truth.insert(
            rec.image_id.clone(),
            DiagnosisTruth {
                label,
                site: rec.site.clone(),
            },
        );
    }
    let answers = preds
        .iter()
        .filter_map(|r| record_diagnosis(r).map(|d| (r.image_id.clone(), d.to_string())))
        .collect();
    Ok(eval_diagnosis(&answers, &truth))
}
