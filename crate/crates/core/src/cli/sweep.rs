//! Accuracy versus training size and feed count.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{generate_dataset, Dataset, ScenarioSpec};

use super::config::{ExperimentConfig, TypeSpec};
use super::pipeline::estimate_and_evaluate;

/// One CSV row; failed cells keep their coordinates and an error status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "type")]
    pub ty: String,
    pub n_f: usize,
    pub k: usize,
    pub seed: u64,
    pub nmse_db: Option<f64>,
    pub zeta_db: Option<f64>,
    pub iterations: Option<usize>,
    pub wall_time_ms: Option<f64>,
    pub converged: Option<bool>,
    /// `ok` or `error:<kind>`.
    pub status: String,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Smallest K of a (type, n_f, seed) curve whose zeta reaches the target.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Threshold {
    #[serde(rename = "type")]
    pub ty: String,
    pub n_f: usize,
    pub seed: u64,
    pub target_zeta_db: f64,
    pub k: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    /// Empty for noiseless scenarios.
    pub thresholds: Vec<Threshold>,
}

/// Scenario for one seed, generated with the largest feed count of the grid.
fn dataset_for(cfg: &ExperimentConfig, seed: u64) -> Result<Dataset> {
    let n_f_max = cfg.n_f_grid().into_iter().max().unwrap_or(cfg.scenario.n_f);
    let spec = ScenarioSpec {
        n_f: n_f_max,
        seed,
        ..cfg.scenario.clone()
    };
    let k_max = cfg.k_grid.iter().copied().max().unwrap_or(0);
    generate_dataset(&spec, k_max, cfg.test_configs, true)
}

/// Runs every (seed, n_f, type, k) cell. Cells are independent and run in
/// parallel; their randomness comes only from the seed, so the row order and
/// contents do not depend on scheduling.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    cfg.validate_sweep()?;
    let seeds = cfg.seeds();
    let n_fs = cfg.n_f_grid();
    let datasets = seeds
        .par_iter()
        .map(|&seed| dataset_for(cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut columns = Vec::new();
    for (si, &seed) in seeds.iter().enumerate() {
        for &n_f in &n_fs {
            let feeds: Vec<usize> = (0..n_f).collect();
            columns.push((seed, n_f, datasets[si].restrict_feeds(&feeds)?));
        }
    }
    let mut cells = Vec::new();
    for (ci, (seed, n_f, _)) in columns.iter().enumerate() {
        for &spec in &cfg.problem_types {
            for &k in &cfg.k_grid {
                cells.push((ci, *seed, *n_f, spec, k));
            }
        }
    }
    let rows: Vec<SweepRow> = cells
        .par_iter()
        .map(|&(ci, seed, n_f, spec, k)| run_cell(&columns[ci].2, cfg, spec, seed, n_f, k))
        .collect();
    let thresholds = match cfg.scenario.snr_db {
        Some(snr) => thresholds(&rows, snr - 3.0),
        None => Vec::new(),
    };
    Ok(SweepOutcome { rows, thresholds })
}

fn run_cell(ds: &Dataset, cfg: &ExperimentConfig, spec: TypeSpec, seed: u64, n_f: usize, k: usize) -> SweepRow {
    let mut row = SweepRow {
        ty: spec.to_string(),
        n_f,
        k,
        seed,
        nmse_db: None,
        zeta_db: None,
        iterations: None,
        wall_time_ms: None,
        converged: None,
        status: "ok".into(),
    };
    match estimate_and_evaluate(ds, spec, Some(k), Some(cfg.test_configs), &cfg.estimator) {
        Ok(ev) => {
            row.nmse_db = Some(ev.metrics.nmse_db);
            row.zeta_db = Some(ev.metrics.zeta_db);
            row.iterations = Some(ev.estimate.report.iterations_used);
            row.converged = Some(ev.estimate.report.converged);
            if cfg.timing {
                row.wall_time_ms = Some(ev.estimate.wall_time.as_secs_f64() * 1e3);
            }
        }
        Err(e) => {
            log::info!("cell type {spec} n_f {n_f} k {k} seed {seed}: {e}");
            row.status = format!("error:{}", e.kind());
        }
    }
    row
}

/// First K per (type, n_f, seed) at which zeta reaches `target` dB.
pub fn thresholds(rows: &[SweepRow], target: f64) -> Vec<Threshold> {
    let mut keys: Vec<(String, usize, u64)> = rows.iter().map(|r| (r.ty.clone(), r.n_f, r.seed)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(ty, n_f, seed)| {
            let k = rows
                .iter()
                .filter(|r| r.ty == ty && r.n_f == n_f && r.seed == seed && r.is_ok())
                .filter(|r| r.zeta_db.is_some_and(|z| z >= target))
                .map(|r| r.k)
                .min();
            Threshold {
                ty,
                n_f,
                seed,
                target_zeta_db: target,
                k,
            }
        })
        .collect()
}

pub fn write_csv(rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("writing CSV: {e}")))?;
    Ok(())
}

pub fn save_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(rows, std::io::BufWriter::new(file))
}

pub fn read_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().map_err(csv_error)?.clone();
    for required in super::CSV_COLUMNS {
        if !headers.iter().any(|h| h == required) {
            return Err(Error::Parse {
                offset: 0,
                message: format!("missing column `{required}`"),
            });
        }
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    let offset = e.position().map(|p| p.byte() as usize).unwrap_or(0);
    Error::Parse {
        offset,
        message: e.to_string(),
    }
}
