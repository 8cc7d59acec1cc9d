use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::Failure;

/// Defaults loaded from `--settings`. Any explicit flag overrides the
/// matching entry here.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub steps: Option<u64>,
    pub lr: Option<f64>,
    pub min_dice: Option<f64>,
    pub task: Option<String>,
    pub n_query: Option<u64>,
    pub iou_thresh: Option<f64>,
    pub best_f1: Option<bool>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        let settings: Settings = serde_json::from_str(&text)
            .map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        settings.validate()?;
        Ok(settings)
    }

    /// Same domain checks as the flags themselves.
    fn validate(&self) -> Result<(), Failure> {
        let bad = |what: &str| Err(Failure::Usage(format!("settings: {what}")));
        if self.trials == Some(0) {
            return bad("trials must be at least 1");
        }
        if self.steps == Some(0) {
            return bad("steps must be at least 1");
        }
        if self.n_query == Some(0) {
            return bad("n_query must be at least 1");
        }
        if self.lr.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
            return bad("lr must be positive");
        }
        for (name, v) in [("iou_thresh", self.iou_thresh), ("min_dice", self.min_dice)] {
            if v.is_some_and(|v| !(v > 0.0 && v <= 1.0)) {
                return bad(&format!("{name} must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}
