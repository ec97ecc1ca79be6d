use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, VldPattern};
use crate::train::{StopReason, TrainOutcome};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    Capacity,
    ReasonTrain,
    ReasonEval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricUnit {
    Bits,
    Accuracy,
    Nats,
}

impl MetricUnit {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricUnit::Bits => "bits",
            MetricUnit::Accuracy => "accuracy",
            MetricUnit::Nats => "nats",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub param_count: usize,
    pub base_depth: usize,
    pub factor: usize,
    pub pattern: VldPattern,
    pub effective_depth: usize,
    /// Headline value: absorbed entropy, accuracy, or final training loss.
    pub metric: Option<f64>,
    pub unit: MetricUnit,
    #[serde(default)]
    pub values: BTreeMap<String, f64>,
}

impl RunMetrics {
    pub fn for_model(model: &ModelConfig, unit: MetricUnit) -> Self {
        RunMetrics {
            param_count: model.param_count(),
            base_depth: model.base_depth,
            factor: model.factor,
            pattern: model.pattern,
            effective_depth: model.effective_depth(),
            metric: None,
            unit,
            values: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub steps: usize,
    pub stop: StopReason,
    pub final_interval_loss: Option<f64>,
    pub interval_means: Vec<f64>,
}

impl From<&TrainOutcome> for Convergence {
    fn from(o: &TrainOutcome) -> Self {
        Convergence {
            steps: o.steps,
            stop: o.stop.clone(),
            final_interval_loss: o.final_interval_loss(),
            interval_means: o.interval_means.clone(),
        }
    }
}

/// Seed-complete record of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub kind: RunKind,
    pub label: String,
    /// Fully resolved configuration of the run.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub started_at: String,
    pub finished_at: String,
    pub metrics: RunMetrics,
    pub convergence: Option<Convergence>,
    pub failure: Option<String>,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(kind: RunKind, label: impl Into<String>, config: &impl Serialize, metrics: RunMetrics) -> Result<Self> {
        Ok(RunManifest {
            artifact_version: ARTIFACT_VERSION.into(),
            kind,
            label: label.into(),
            config: serde_json::to_value(config).map_err(|e| Error::Serde(e.to_string()))?,
            seeds: BTreeMap::new(),
            started_at: now(),
            finished_at: String::new(),
            metrics,
            convergence: None,
            failure: None,
        })
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none() && self.metrics.metric.is_some_and(f64::is_finite)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Serde(e.to_string()))
    }

    /// Writes `run_manifest.json` into `dir`; an existing manifest is never
    /// replaced.
    pub fn write_new(&mut self, dir: &Path) -> Result<()> {
        if self.finished_at.is_empty() {
            self.finished_at = now();
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(RUN_MANIFEST_FILE);
        let json = self.to_json()?;
        let mut file = std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::AlreadyExists => Error::Usage(format!(
                    "{} already exists; run manifests are never overwritten",
                    path.display()
                )),
                _ => Error::io(&path, e),
            })?;
        std::io::Write::write_all(&mut file, json.as_bytes()).map_err(|e| Error::io(&path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
    }

    /// Serialized form with timestamps blanked, for reproducibility checks.
    pub fn without_timestamps(&self) -> Self {
        RunManifest {
            started_at: String::new(),
            finished_at: String::new(),
            ..self.clone()
        }
    }
}
