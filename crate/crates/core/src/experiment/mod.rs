//! Experiment plumbing: config files, run manifests, scaling tables and the
//! capacity and reasoning drivers used by the command-line front end.

mod capacity;
mod config;
mod manifest;
mod reasoning;
mod report;
mod table;

pub use capacity::{capacity_experiment, CapacityGridResult};
pub use config::{load_toml, to_toml, CapacityGridConfig, GenIgsmConfig, GridPoint, ModelSpec, ReasonConfig};
pub use manifest::{
    now, Convergence, MetricUnit, RunKind, RunManifest, RunMetrics, ARTIFACT_VERSION, RUN_MANIFEST_FILE,
};
pub use reasoning::{
    check_checkpoint, reason_eval, reason_train, record_eval, CHECKPOINT_FILE, EVAL_RECORDS_FILE, EVAL_SUMMARY_FILE,
};
pub use report::{build_report, Report, ACCURACY_PLOT, CAPACITY_PLOT, CAPACITY_TABLE, REASONING_TABLE};
pub use table::{ScalingRow, ScalingTable};
