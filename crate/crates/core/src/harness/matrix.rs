use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::lab::Lab;
use super::output::{render_summary, steps_csv, summary_csv, write_file, SummaryRow};
use super::stats::{mean, sample_std};
use crate::error::{Error, Result};
use crate::methods::{mean_accuracy, StepRecord};
use crate::shift::ShiftKind;

pub const MANIFEST_FORMAT: &str = "asap-lab-run/1";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatrixOptions {
    /// Worker threads; `None` uses the available parallelism.
    pub parallel: Option<usize>,
    /// Record wall times. Forces a single worker.
    pub timing: bool,
}

impl MatrixOptions {
    pub fn workers(&self) -> usize {
        if self.timing {
            return 1;
        }
        self.parallel
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1)
    }
}

/// One (shift, method, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub shift: String,
    pub method: String,
    pub seed: u64,
    pub steps_file: Option<String>,
    pub mean_accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub train_accuracy: Option<f64>,
    pub error: Option<String>,
}

/// Written as `manifest.json` next to the summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub config_hash: String,
    pub timing: bool,
    pub seeds: Vec<SeedRecord>,
    pub cells: Vec<CellRecord>,
    pub summary_csv: String,
    pub summary_md: String,
    pub config: RunConfig,
}

#[derive(Debug)]
pub struct MatrixOutcome {
    pub rows: Vec<SummaryRow>,
    pub manifest: Manifest,
    pub output_dir: PathBuf,
}

impl MatrixOutcome {
    pub fn failures(&self) -> usize {
        self.manifest
            .cells
            .iter()
            .filter(|c| c.error.is_some())
            .count()
    }
}

pub(crate) fn steps_file_name(dataset: &str, shift: ShiftKind, method: &str, seed: u64) -> String {
    format!("{dataset}_{shift}_{method}_{seed}.csv")
}

pub(crate) fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

struct CellRun {
    shift: ShiftKind,
    method: usize,
    seed: u64,
    result: Result<(Vec<StepRecord>, f64)>,
}

/// Runs every (shift, method, seed) cell and writes the step traces,
/// `summary.csv`, `summary.md` and `manifest.json` under `config.output_dir`.
/// A failing cell is recorded and skipped; only configuration problems and
/// I/O errors abort the run.
pub fn run_matrix(config: &RunConfig, options: MatrixOptions) -> Result<MatrixOutcome> {
    config.validate()?;
    let pool = worker_pool(options.workers())?;
    let (lab, runs) = pool.install(|| -> Result<_> {
        let lab = Lab::new(config.clone())?;
        let mut cells = Vec::new();
        for &shift in &config.shifts {
            for method in 0..config.methods.len() {
                for &seed in &config.seeds {
                    cells.push((shift, method, seed));
                }
            }
        }
        let runs: Vec<CellRun> = cells
            .into_par_iter()
            .map(|(shift, method, seed)| {
                let start = Instant::now();
                let result =
                    lab.run_cell(shift, &config.methods[method], seed)
                        .and_then(|records| {
                            let total = start.elapsed().as_secs_f64();
                            let wall: f64 =
                                records.iter().map(|r| r.wall_nanos as f64 * 1e-9).sum();
                            if wall > total {
                                return Err(Error::structural("update time exceeds cell runtime"));
                            }
                            Ok((records, wall))
                        });
                CellRun {
                    shift,
                    method,
                    seed,
                    result,
                }
            })
            .collect();
        Ok((lab, runs))
    })?;
    collect(&lab, runs, options.timing)
}

fn collect(lab: &Lab, runs: Vec<CellRun>, timing: bool) -> Result<MatrixOutcome> {
    let config = &lab.config;
    let out = config.output_dir.clone();
    let dataset = config.dataset.name.clone();
    let mut cells = Vec::with_capacity(runs.len());
    let mut rows = Vec::new();

    for chunk in runs.chunk_by(|a, b| a.shift == b.shift && a.method == b.method) {
        let method = config.methods[chunk[0].method].label();
        let (mut accs, mut walls, mut failures) = (Vec::new(), Vec::new(), 0);
        for run in chunk {
            match &run.result {
                Ok((records, wall)) => {
                    let name = steps_file_name(&dataset, run.shift, &method, run.seed);
                    write_file(&out.join("steps").join(&name), &steps_csv(records, timing)?)?;
                    let acc = 100.0 * mean_accuracy(records);
                    accs.push(acc);
                    walls.push(*wall);
                    cells.push(CellRecord {
                        shift: run.shift.to_string(),
                        method: method.clone(),
                        seed: run.seed,
                        steps_file: Some(format!("steps/{name}")),
                        mean_accuracy: Some(acc),
                        error: None,
                    });
                }
                Err(e) => {
                    failures += 1;
                    cells.push(CellRecord {
                        shift: run.shift.to_string(),
                        method: method.clone(),
                        seed: run.seed,
                        steps_file: None,
                        mean_accuracy: None,
                        error: Some(e.to_string()),
                    });
                }
            }
        }
        rows.push(SummaryRow {
            dataset: dataset.clone(),
            shift: chunk[0].shift.to_string(),
            method,
            runs: accs.len(),
            failures,
            mean_acc: mean(&accs),
            std_acc: sample_std(&accs),
            mean_wall_sec: (timing && !walls.is_empty()).then(|| mean(&walls)),
            std_wall_sec: (timing && !walls.is_empty()).then(|| sample_std(&walls)),
        });
    }

    write_file(&out.join("summary.csv"), &summary_csv(&rows)?)?;
    write_file(&out.join("summary.md"), render_summary(&rows).as_bytes())?;
    let seeds = config
        .seeds
        .iter()
        .map(|&seed| match lab.setup(seed) {
            Ok(s) => SeedRecord {
                seed,
                train_accuracy: Some(s.train_accuracy),
                error: None,
            },
            Err(e) => SeedRecord {
                seed,
                train_accuracy: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let manifest = Manifest {
        format: MANIFEST_FORMAT.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.config_hash(),
        timing,
        seeds,
        cells,
        summary_csv: "summary.csv".to_string(),
        summary_md: "summary.md".to_string(),
        config: config.clone(),
    };
    write_manifest(&out, &manifest)?;
    Ok(MatrixOutcome {
        rows,
        manifest,
        output_dir: out,
    })
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    write_file(&dir.join("manifest.json"), text.as_bytes())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}
