use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VldPattern;

use super::manifest::{MetricUnit, RunManifest};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub label: String,
    pub param_count: usize,
    pub base_depth: usize,
    pub factor: usize,
    pub pattern: VldPattern,
    pub effective_depth: usize,
    pub metric: f64,
    pub unit: MetricUnit,
}

impl ScalingRow {
    /// Row of a completed run; `None` for failed or metric-less runs.
    pub fn from_manifest(m: &RunManifest) -> Option<Self> {
        if !m.completed() {
            return None;
        }
        Some(ScalingRow {
            label: m.label.clone(),
            param_count: m.metrics.param_count,
            base_depth: m.metrics.base_depth,
            factor: m.metrics.factor,
            pattern: m.metrics.pattern,
            effective_depth: m.metrics.effective_depth,
            metric: m.metrics.metric?,
            unit: m.metrics.unit,
        })
    }
}

/// Rows of one metric unit, sorted by (param_count, pattern, factor, label).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingTable {
    pub unit: MetricUnit,
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    pub fn new(unit: MetricUnit, rows: impl IntoIterator<Item = ScalingRow>) -> Result<Self> {
        let mut rows: Vec<ScalingRow> = rows.into_iter().collect();
        if let Some(r) = rows.iter().find(|r| r.unit != unit) {
            return Err(Error::Data(format!(
                "row {} is measured in {}, table holds {}",
                r.label,
                r.unit.as_str(),
                unit.as_str()
            )));
        }
        rows.sort_by(|a, b| {
            (a.param_count, a.pattern.as_str(), a.factor, &a.label).cmp(&(
                b.param_count,
                b.pattern.as_str(),
                b.factor,
                &b.label,
            ))
        });
        Ok(ScalingTable { unit, rows })
    }

    pub fn to_csv(&self) -> Result<String> {
        let metric = format!("metric_{}", self.unit.as_str());
        let mut w = csv::Writer::from_writer(Vec::new());
        let ser = |e: csv::Error| Error::Serde(e.to_string());
        w.write_record([
            "label",
            "param_count",
            "base_depth",
            "factor",
            "pattern",
            "effective_depth",
            metric.as_str(),
        ])
        .map_err(ser)?;
        for r in &self.rows {
            w.write_record([
                r.label.clone(),
                r.param_count.to_string(),
                r.base_depth.to_string(),
                r.factor.to_string(),
                r.pattern.to_string(),
                r.effective_depth.to_string(),
                r.metric.to_string(),
            ])
            .map_err(ser)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }
}
