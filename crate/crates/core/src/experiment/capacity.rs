use std::path::Path;

use crate::capacity::{generate_random_dataset, run_capacity, CapacityOutcome};
use crate::error::{Error, Result};
use crate::train::StopReason;

use super::config::{CapacityGridConfig, GridPoint};
use super::manifest::{Convergence, MetricUnit, RunKind, RunManifest, RunMetrics};
use super::report::CAPACITY_TABLE;
use super::table::{ScalingRow, ScalingTable};

#[derive(Clone, Debug)]
pub struct CapacityGridResult {
    /// One manifest per grid point, in grid order.
    pub manifests: Vec<RunManifest>,
    /// Rows of the completed runs only.
    pub table: ScalingTable,
}

impl CapacityGridResult {
    pub fn failures(&self) -> usize {
        self.manifests.iter().filter(|m| m.failure.is_some()).count()
    }
}

fn run_point(
    config: &CapacityGridConfig,
    point: &GridPoint,
    dataset: &crate::capacity::RandomSequenceDataset,
    log: &(dyn Fn(&str) + Sync),
) -> Result<RunManifest> {
    let resolved = serde_json::json!({
        "dataset": config.dataset,
        "train": config.train,
        "model": point.model,
    });
    let mut manifest = RunManifest::new(
        RunKind::Capacity,
        &point.label,
        &resolved,
        RunMetrics::for_model(&point.model, MetricUnit::Bits),
    )?;
    manifest.seeds.insert("dataset".into(), config.dataset.seed);
    manifest.seeds.insert("model".into(), point.model.seed);
    manifest.seeds.insert("train".into(), config.train.seed);

    let label = point.label.clone();
    let result = run_capacity(&point.model, dataset, &config.train, |step, loss, _| {
        log(&format!("{label}: step {step} loss {loss:.4}"));
        Ok(())
    });
    match result {
        Ok((_, CapacityOutcome { report, training })) => {
            manifest.convergence = Some(Convergence::from(&training));
            if training.stop == StopReason::Diverged {
                manifest.failure = training.failure.clone().or(Some("diverged".into()));
            }
            if let Some(r) = report {
                manifest.metrics.metric = Some(r.delta_h_bits);
                let v = &mut manifest.metrics.values;
                v.insert("h1_bits".into(), r.h1_bits);
                v.insert("h2_bits".into(), r.h2_bits);
                v.insert("delta_h_bits".into(), r.delta_h_bits);
                v.insert("bits_per_param".into(), r.bits_per_param);
                v.insert("predicted_positions".into(), r.predicted_positions as f64);
            }
        }
        Err(e) if e.is_config() => return Err(e),
        Err(e) => manifest.failure = Some(e.to_string()),
    }
    Ok(manifest)
}

/// Trains and measures every grid point on one shared random dataset.
/// Each run's manifest lands in `out/runs/<label>/`; the table of completed
/// runs in `out/capacity_table.csv`. Failed runs keep their manifest but get
/// no row. With `threads > 1` grid points run concurrently; results do not
/// depend on the thread count.
pub fn capacity_experiment(
    config: &CapacityGridConfig,
    out: &Path,
    threads: usize,
    log: &(dyn Fn(&str) + Sync),
) -> Result<CapacityGridResult> {
    let points = config.points()?;
    for p in &points {
        config.train.validate(p.model.context_length)?;
        let dir = out.join("runs").join(&p.label);
        if dir.join(super::manifest::RUN_MANIFEST_FILE).exists() {
            return Err(Error::Usage(format!("{} already holds a completed run", dir.display())));
        }
    }
    let dataset = generate_random_dataset(config.dataset.n, config.dataset.k, config.dataset.seed)?;
    let threads = threads.clamp(1, points.len());

    let mut manifests: Vec<Option<Result<RunManifest>>> = (0..points.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<Vec<usize>> = (0..threads)
            .map(|t| (t..points.len()).step_by(threads).collect())
            .collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|idx| {
                let (points, dataset) = (&points, &dataset);
                s.spawn(move || {
                    idx.into_iter()
                        .map(|i| {
                            let mut m = run_point(config, &points[i], dataset, log);
                            if let Ok(m) = &mut m {
                                m.write_new(&out.join("runs").join(&points[i].label))?;
                            }
                            Ok((i, m?))
                        })
                        .collect::<Vec<Result<(usize, RunManifest)>>>()
                })
            })
            .collect();
        for h in handles {
            for r in h.join().expect("capacity worker panicked") {
                match r {
                    Ok((i, m)) => manifests[i] = Some(Ok(m)),
                    Err(e) => {
                        if let Some(slot) = manifests.iter_mut().find(|m| m.is_none()) {
                            *slot = Some(Err(e));
                        }
                    }
                }
            }
        }
    });
    let manifests: Vec<RunManifest> = manifests
        .into_iter()
        .map(|m| m.expect("every grid point reports"))
        .collect::<Result<_>>()?;

    let table = ScalingTable::new(MetricUnit::Bits, manifests.iter().filter_map(ScalingRow::from_manifest))?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(CAPACITY_TABLE);
    std::fs::write(&path, table.to_csv()?).map_err(|e| Error::io(&path, e))?;
    Ok(CapacityGridResult { manifests, table })
}
