use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::manifest::{MetricUnit, RunKind, RunManifest, RUN_MANIFEST_FILE};
use super::table::{ScalingRow, ScalingTable};

pub const CAPACITY_TABLE: &str = "capacity_table.csv";
pub const REASONING_TABLE: &str = "reasoning_table.csv";
pub const CAPACITY_PLOT: &str = "plot_capacity_vs_params.csv";
pub const ACCURACY_PLOT: &str = "plot_accuracy_vs_depth.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub capacity: ScalingTable,
    pub reasoning: ScalingTable,
    /// Manifests that could not be read, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

fn find_manifests(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_manifests(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == RUN_MANIFEST_FILE) {
            out.push(path);
        }
    }
    Ok(())
}

/// Collects every run manifest under `runs`. Unreadable manifests are
/// skipped and listed; at least one completed run is required.
pub fn build_report(runs: &Path) -> Result<Report> {
    let mut paths = Vec::new();
    find_manifests(runs, &mut paths)?;
    let mut skipped = Vec::new();
    let mut capacity = Vec::new();
    let mut reasoning = Vec::new();
    for path in paths {
        match RunManifest::read(&path) {
            Ok(m) => {
                let Some(row) = ScalingRow::from_manifest(&m) else {
                    continue;
                };
                match (m.kind, row.unit) {
                    (RunKind::Capacity, MetricUnit::Bits) => capacity.push(row),
                    (RunKind::ReasonEval, MetricUnit::Accuracy) => reasoning.push(row),
                    _ => {}
                }
            }
            Err(e) => skipped.push((path, e.to_string())),
        }
    }
    if capacity.is_empty() && reasoning.is_empty() {
        return Err(Error::Data(format!(
            "no completed capacity or evaluation runs under {}",
            runs.display()
        )));
    }
    Ok(Report {
        capacity: ScalingTable::new(MetricUnit::Bits, capacity)?,
        reasoning: ScalingTable::new(MetricUnit::Accuracy, reasoning)?,
        skipped,
    })
}

fn series(rows: &[ScalingRow], header: &str, line: impl Fn(&ScalingRow) -> String) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out
}

impl Report {
    /// Capacity against parameters, one series per pattern.
    pub fn capacity_plot(&self) -> String {
        series(
            &self.capacity.rows,
            "pattern,factor,param_count,delta_h_bits,label",
            |r| format!("{},{},{},{},{}", r.pattern, r.factor, r.param_count, r.metric, r.label),
        )
    }

    /// Accuracy against effective depth with parameters as bubble size.
    pub fn accuracy_plot(&self) -> String {
        let mut rows = self.reasoning.rows.clone();
        rows.sort_by(|a, b| {
            (a.effective_depth, a.pattern.as_str(), a.factor, &a.label).cmp(&(
                b.effective_depth,
                b.pattern.as_str(),
                b.factor,
                &b.label,
            ))
        });
        series(
            &rows,
            "effective_depth,accuracy,param_count,pattern,factor,label",
            |r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.effective_depth, r.metric, r.param_count, r.pattern, r.factor, r.label
                )
            },
        )
    }

    /// Writes both tables and both plot series into `out`.
    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let files = [
            (CAPACITY_TABLE, self.capacity.to_csv()?),
            (REASONING_TABLE, self.reasoning.to_csv()?),
            (CAPACITY_PLOT, self.capacity_plot()),
            (ACCURACY_PLOT, self.accuracy_plot()),
        ];
        for (name, body) in files {
            let path = out.join(name);
            std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
