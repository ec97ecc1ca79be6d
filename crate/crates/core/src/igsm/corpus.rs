use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::rng;

use super::graph::generate_graph;
use super::hash::HASH_BUCKETS;
use super::render::{render_problem, Problem};
use super::verify::verify_problem;
use super::GenConfig;

pub const CORPUS_FORMAT_VERSION: u32 = 1;
pub const TRAIN_FILE: &str = "train.jsonl";
pub const VAL_FILE: &str = "val.jsonl";
pub const MANIFEST_FILE: &str = "corpus_manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSizes {
    pub train: usize,
    pub val: usize,
    /// Operation count of validation problems; defaults to `max_ops`.
    #[serde(default)]
    pub val_ops: Option<usize>,
}

/// Counts from a corpus build, kept in the manifest.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub train_attempts: usize,
    pub val_attempts: usize,
    pub generation_failures: usize,
    pub hash_rejected: usize,
    pub overlap_rejected: usize,
    pub verify_rejected: usize,
    /// Template hash of every rendered candidate, before filtering.
    pub hash_histogram: Vec<usize>,
    pub train_op_histogram: BTreeMap<usize, usize>,
    pub val_op_histogram: BTreeMap<usize, usize>,
    pub train_distinct_skeletons: usize,
    pub val_distinct_skeletons: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub config: GenConfig,
    pub sizes: CorpusSizes,
    pub census: Census,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<Problem>,
    pub val: Vec<Problem>,
    pub manifest: CorpusManifest,
}

/// One problem with exactly `target_ops` operations from its own seed.
pub fn generate_problem(config: &GenConfig, target_ops: usize, seed: u64) -> Result<Problem> {
    let mut rng = rng::rng_from(seed);
    let graph = generate_graph(config, target_ops, &mut rng)?;
    let mut problem = render_problem(&graph, config, &mut rng)?;
    problem.seed = seed;
    Ok(problem)
}

enum Candidate {
    Failed,
    Unverified(Problem),
    Ok(Problem),
}

fn candidate(config: &GenConfig, label: &str, index: u64, fixed_ops: Option<usize>) -> Candidate {
    let mut r = rng::stream(config.seed, label, index);
    let ops = fixed_ops.unwrap_or_else(|| r.random_range(1..=config.max_ops));
    let seed: u64 = r.random();
    match generate_problem(config, ops, seed) {
        Err(_) => Candidate::Failed,
        Ok(p) if verify_problem(&p).is_ok() => Candidate::Ok(p),
        Ok(p) => Candidate::Unverified(p),
    }
}

/// Maps `f` over `range` on up to `threads` scoped threads, in index order.
fn par_map<T: Send>(range: std::ops::Range<u64>, threads: usize, f: impl Fn(u64) -> T + Sync) -> Vec<T> {
    let n = (range.end - range.start) as usize;
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return range.map(f).collect();
    }
    let chunk = n.div_ceil(threads) as u64;
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads as u64)
            .map(|t| {
                let lo = range.start + t * chunk;
                let hi = (lo + chunk).min(range.end);
                let f = &f;
                s.spawn(move || (lo..hi).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("generation worker panicked"))
            .collect()
    })
}

struct Split<'a> {
    label: &'a str,
    size: usize,
    fixed_ops: Option<usize>,
    exclude: &'a BTreeSet<String>,
}

fn build_split(
    config: &GenConfig,
    split: Split<'_>,
    threads: usize,
    census: &mut Census,
) -> Result<(Vec<Problem>, usize)> {
    const CHUNK: u64 = 256;
    let budget = 50 * split.size as u64 + 1000;
    let mut out = Vec::with_capacity(split.size);
    let mut next = 0u64;
    while out.len() < split.size {
        if next >= budget {
            return Err(Error::Generation(format!(
                "{} split filled {} of {} problems within {budget} attempts; census: {}",
                split.label,
                out.len(),
                split.size,
                serde_json::to_string(census).unwrap_or_default()
            )));
        }
        let end = (next + CHUNK).min(budget);
        let batch = par_map(next..end, threads, |i| {
            candidate(config, split.label, i, split.fixed_ops)
        });
        for c in batch {
            next += 1;
            let p = match c {
                Candidate::Failed => {
                    census.generation_failures += 1;
                    continue;
                }
                Candidate::Unverified(p) => {
                    census.hash_histogram[p.template_hash as usize] += 1;
                    census.verify_rejected += 1;
                    continue;
                }
                Candidate::Ok(p) => p,
            };
            census.hash_histogram[p.template_hash as usize] += 1;
            if p.template_hash >= config.hash_filter_max {
                census.hash_rejected += 1;
            } else if split.exclude.contains(&p.skeleton) {
                census.overlap_rejected += 1;
            } else {
                out.push(p);
                if out.len() == split.size {
                    break;
                }
            }
        }
    }
    Ok((out, next as usize))
}

/// Builds validation problems with exactly `val_ops` operations first, then
/// training problems with uniformly drawn operation counts whose skeletons
/// never occur in validation. Output depends only on the config, not on
/// `threads`.
pub fn generate_corpus(config: &GenConfig, sizes: CorpusSizes, threads: usize) -> Result<Corpus> {
    config.validate()?;
    let val_ops = sizes.val_ops.unwrap_or(config.max_ops);
    if val_ops == 0 || val_ops > config.max_ops {
        return Err(config_err!(
            "validation ops {val_ops} must lie in [1, max_ops = {}]",
            config.max_ops
        ));
    }
    let mut census = Census {
        hash_histogram: vec![0; HASH_BUCKETS as usize],
        ..Census::default()
    };
    let none = BTreeSet::new();
    let (val, val_attempts) = build_split(
        config,
        Split {
            label: "val",
            size: sizes.val,
            fixed_ops: Some(val_ops),
            exclude: &none,
        },
        threads,
        &mut census,
    )?;
    census.val_attempts = val_attempts;
    let val_skeletons: BTreeSet<String> = val.iter().map(|p| p.skeleton.clone()).collect();
    let (train, train_attempts) = build_split(
        config,
        Split {
            label: "train",
            size: sizes.train,
            fixed_ops: None,
            exclude: &val_skeletons,
        },
        threads,
        &mut census,
    )?;
    census.train_attempts = train_attempts;

    let train_skeletons: BTreeSet<&String> = train.iter().map(|p| &p.skeleton).collect();
    if train_skeletons.iter().any(|s| val_skeletons.contains(*s)) {
        return Err(Error::Generation("train and validation skeletons overlap".into()));
    }
    for p in &train {
        *census.train_op_histogram.entry(p.op_count).or_default() += 1;
    }
    for p in &val {
        *census.val_op_histogram.entry(p.op_count).or_default() += 1;
    }
    census.train_distinct_skeletons = train_skeletons.len();
    census.val_distinct_skeletons = val_skeletons.len();

    Ok(Corpus {
        train,
        val,
        manifest: CorpusManifest {
            format_version: CORPUS_FORMAT_VERSION,
            config: config.clone(),
            sizes,
            census,
        },
    })
}

fn write_lines(path: &Path, problems: &[Problem]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in problems {
        let line = serde_json::to_string(p).map_err(|e| Error::Serde(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path) -> Result<Vec<Problem>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let p = serde_json::from_str(&line).map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(p);
    }
    Ok(out)
}

/// Writes `train.jsonl`, `val.jsonl` and `corpus_manifest.json` into `dir`.
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_lines(&dir.join(TRAIN_FILE), &corpus.train)?;
    write_lines(&dir.join(VAL_FILE), &corpus.val)?;
    let manifest = serde_json::to_string_pretty(&corpus.manifest).map_err(|e| Error::Serde(e.to_string()))?;
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, manifest + "\n").map_err(|e| Error::io(&path, e))
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CorpusManifest =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(Corpus {
        train: read_lines(&dir.join(TRAIN_FILE))?,
        val: read_lines(&dir.join(VAL_FILE))?,
        manifest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> (GenConfig, CorpusSizes) {
        let cfg = GenConfig {
            seed: 5,
            ..GenConfig::with_max_ops(5)
        };
        (
            cfg,
            CorpusSizes {
                train: 300,
                val: 40,
                val_ops: None,
            },
        )
    }

    #[test]
    fn corpus_is_filtered_disjoint_and_thread_independent() {
        let (cfg, sizes) = small();
        let a = generate_corpus(&cfg, sizes, 1).unwrap();
        let b = generate_corpus(&cfg, sizes, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.len(), 300);
        assert_eq!(a.val.len(), 40);
        assert!(a.val.iter().all(|p| p.op_count == 5));
        let val: BTreeSet<_> = a.val.iter().map(|p| &p.skeleton).collect();
        assert!(a.train.iter().all(|p| !val.contains(&p.skeleton)));
        assert!(a.train.iter().chain(&a.val).all(|p| p.template_hash < 17));
    }

    #[test]
    fn val_ops_beyond_max_is_rejected() {
        let (cfg, mut sizes) = small();
        sizes.val_ops = Some(6);
        assert!(generate_corpus(&cfg, sizes, 1).unwrap_err().is_config());
    }

    #[test]
    fn corpus_files_round_trip() {
        let (cfg, mut sizes) = small();
        sizes.train = 20;
        sizes.val = 5;
        let c = generate_corpus(&cfg, sizes, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_corpus(dir.path(), &c).unwrap();
        assert_eq!(read_corpus(dir.path()).unwrap(), c);
    }
}
