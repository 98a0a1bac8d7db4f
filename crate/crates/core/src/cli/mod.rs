//! Command-line harness: `generate`, `estimate`, `sweep`, `optimize`, `report`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 identifiability or
//! missing input, 4 numerical failure.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod sweep;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::EstimatorConfig;
use crate::metrics::MetricReport;
use crate::optimizer::{channel_gain, genetic_optimize, GaConfig, OptimizationResult};
use crate::scenario::{generate_dataset, load_dataset, save_dataset};

use config::{parse_list, ExperimentConfig, TypeSpec};

/// Exact header of sweep CSV files.
pub const CSV_COLUMNS: [&str; 10] = [
    "type",
    "n_f",
    "k",
    "seed",
    "nmse_db",
    "zeta_db",
    "iterations",
    "wall_time_ms",
    "converged",
    "status",
];

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "DMACE_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "dmace", version, about = "Mutual-coupling-aware DMA channel estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory (default: config `output_dir`, then $DMACE_OUTPUT_DIR, then `.`).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Output file; overrides the default name inside the output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScenarioOverrides {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub snr_db: Option<f64>,
    #[arg(long)]
    pub coupling: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset from an experiment config.
    Generate {
        config: PathBuf,
        #[command(flatten)]
        scenario: ScenarioOverrides,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Estimate channels from a dataset and score them on held-out configurations.
    Estimate {
        dataset: PathBuf,
        /// 1, 2, rbf, 3 or 4, optionally suffixed with -nomc.
        #[arg(long = "type", default_value = "1")]
        ty: TypeSpec,
        /// Training measurements to use (default: all).
        #[arg(long)]
        k: Option<usize>,
        /// Held-out measurements to score on (default: all).
        #[arg(long)]
        q: Option<usize>,
        /// Assume Gamma = 0 (MC-unaware benchmark).
        #[arg(long)]
        no_mc: bool,
        /// Seed of the random initialization.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Sweep estimator types, training sizes and feed counts; writes CSV.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        scenario: ScenarioOverrides,
        /// Comma-separated types, replacing `problem_types`.
        #[arg(long = "type")]
        ty: Option<String>,
        /// Comma-separated training sizes, replacing `k_grid`.
        #[arg(long)]
        k: Option<String>,
        #[arg(long)]
        q: Option<usize>,
        /// Run every type on the MC-unaware stacks.
        #[arg(long)]
        no_mc: bool,
        /// Leave `wall_time_ms` empty so that repeated runs give identical files.
        #[arg(long)]
        no_timing: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Pick the configuration maximizing one link's gain under the estimated model.
    Optimize {
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        user: usize,
        #[arg(long, default_value_t = 0)]
        feed: usize,
        #[arg(long = "type", default_value = "1")]
        ty: TypeSpec,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        no_mc: bool,
        /// Optimize the embedded ground-truth model instead of an estimate.
        #[arg(long)]
        truth: bool,
        /// GA seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        max_generations: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Summarize a sweep CSV into minimum-K and best-zeta tables.
    Report {
        csv: PathBuf,
        /// Target zeta is this SNR minus 3 dB.
        #[arg(long, conflicts_with = "zeta_target")]
        snr_db: Option<f64>,
        /// Target zeta in dB.
        #[arg(long)]
        zeta_target: Option<f64>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            config,
            scenario,
            output,
        } => cmd_generate(&config, &scenario, &output),
        Command::Estimate {
            dataset,
            ty,
            k,
            q,
            no_mc,
            seed,
            max_iter,
            output,
        } => {
            let mut cfg = EstimatorConfig::default();
            if let Some(s) = seed {
                cfg.init_seed = s;
            }
            if let Some(m) = max_iter {
                cfg.max_iter = m;
            }
            let spec = TypeSpec::new(ty.ty, ty.no_mc || no_mc);
            cmd_estimate(&dataset, spec, k, q, &cfg, &output)
        }
        Command::Sweep {
            config,
            scenario,
            ty,
            k,
            q,
            no_mc,
            no_timing,
            output,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            apply_overrides(&mut cfg, &scenario);
            if let Some(list) = ty {
                cfg.problem_types = parse_list(&list)?;
            }
            if let Some(list) = k {
                cfg.k_grid = parse_list(&list)?;
            }
            if let Some(q) = q {
                cfg.test_configs = q;
            }
            if no_mc {
                for t in &mut cfg.problem_types {
                    t.no_mc = true;
                }
            }
            if no_timing {
                cfg.timing = false;
            }
            cfg.validate()?;
            cmd_sweep(&cfg, &output)
        }
        Command::Optimize {
            dataset,
            user,
            feed,
            ty,
            k,
            no_mc,
            truth,
            seed,
            population,
            max_generations,
            output,
        } => {
            let mut ga = GaConfig::default();
            if let Some(s) = seed {
                ga.seed = s;
            }
            if let Some(p) = population {
                ga.population = p;
            }
            ga.max_generations = max_generations.or(ga.max_generations);
            let opts = OptimizeOptions {
                user,
                feed,
                spec: TypeSpec::new(ty.ty, ty.no_mc || no_mc),
                k,
                truth,
                ga,
            };
            cmd_optimize(&dataset, &opts, &output)
        }
        Command::Report {
            csv,
            snr_db,
            zeta_target,
            output,
        } => cmd_report(&csv, zeta_target.or(snr_db.map(|s| s - 3.0)), &output),
    }
}

fn apply_overrides(cfg: &mut ExperimentConfig, o: &ScenarioOverrides) {
    if let Some(s) = o.seed {
        cfg.scenario.seed = s;
        cfg.seeds.clear();
    }
    if let Some(snr) = o.snr_db {
        cfg.scenario.snr_db = Some(snr);
    }
    if let Some(c) = o.coupling {
        cfg.scenario.coupling = c;
    }
}

fn output_path(output: &OutputArgs, config_dir: Option<&Path>, default_name: &str) -> Result<PathBuf> {
    if let Some(out) = &output.out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        return Ok(out.clone());
    }
    let dir = output
        .output_dir
        .clone()
        .or_else(|| config_dir.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir.join(default_name))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("cannot serialize output: {e}")))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_generate(config: &Path, overrides: &ScenarioOverrides, output: &OutputArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config)?;
    apply_overrides(&mut cfg, overrides);
    cfg.validate()?;
    let train = cfg.train_count()?;
    let ds = generate_dataset(&cfg.scenario, train, cfg.test_configs, cfg.generate.ground_truth)?;
    let path = output_path(output, cfg.output_dir.as_deref(), "dataset.json")?;
    save_dataset(&ds, &path)?;
    let (n_u, n_f, n_m, k) = ds.dims();
    println!("wrote {}", path.display());
    println!("dims: N_U={n_u} N_F={n_f} N_M={n_m}, {k} measurements (1 reference, {train} training, {} test)", ds.test_count());
    match ds.measurements.snr_db {
        Some(snr) => println!("snr: {snr} dB"),
        None => println!("snr: noiseless"),
    }
    println!(
        "seeds: scenario {} configs {} noise {}",
        ds.seeds.scenario, ds.seeds.configs, ds.seeds.noise
    );
    Ok(())
}

#[derive(Serialize)]
struct EstimateOutput<'a> {
    dataset: String,
    #[serde(rename = "type")]
    ty: String,
    k: usize,
    q: usize,
    estimation: &'a crate::estimators::EstimationReport,
    metrics: &'a MetricReport,
}

fn cmd_estimate(
    dataset: &Path,
    spec: TypeSpec,
    k: Option<usize>,
    q: Option<usize>,
    cfg: &EstimatorConfig,
    output: &OutputArgs,
) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let ev = pipeline::estimate_and_evaluate(&ds, spec, k, q, cfg)?;
    let rep = &ev.estimate.report;
    let m = &ev.metrics;
    let path = output_path(output, None, &format!("estimate-{spec}.json"))?;
    write_json(
        &EstimateOutput {
            dataset: dataset.display().to_string(),
            ty: spec.to_string(),
            k: rep.k_used,
            q: m.q_count,
            estimation: rep,
            metrics: m,
        },
        &path,
    )?;
    println!("type {spec}: K = {} (K_min {}), Q = {}", rep.k_used, rep.min_k_required, m.q_count);
    println!(
        "iterations {} converged {} final cost {:.3e}",
        rep.iterations_used,
        rep.converged,
        rep.final_cost()
    );
    println!("nmse {:.2} dB, zeta {:.2} dB", m.nmse_db, m.zeta_db);
    if m.infinite_entries > 0 {
        println!("{} entries with zero error spread left out of zeta", m.infinite_entries);
    }
    if rep.flags.rank_deficient_d_update || rep.flags.gram_pinv_fallback {
        println!("flags: {:?}", rep.flags);
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_sweep(cfg: &ExperimentConfig, output: &OutputArgs) -> Result<()> {
    let outcome = sweep::run_sweep(cfg)?;
    let path = output_path(output, cfg.output_dir.as_deref(), "sweep.csv")?;
    sweep::save_csv(&outcome.rows, &path)?;
    let summary_path = path.with_extension("summary.json");
    write_json(&outcome, &summary_path)?;
    let failed = outcome.rows.iter().filter(|r| !r.is_ok()).count();
    println!("{} cells, {failed} failed; wrote {}", outcome.rows.len(), path.display());
    for t in &outcome.thresholds {
        let k = t.k.map_or("not reached".into(), |k| format!("reached at K = {k}"));
        println!(
            "type {} N_F={} seed {}: zeta >= {:.1} dB {k}",
            t.ty, t.n_f, t.seed, t.target_zeta_db
        );
    }
    Ok(())
}

pub struct OptimizeOptions {
    pub user: usize,
    pub feed: usize,
    pub spec: TypeSpec,
    pub k: Option<usize>,
    pub truth: bool,
    pub ga: GaConfig,
}

#[derive(Serialize)]
pub struct OptimizeOutput {
    pub user: usize,
    pub feed: usize,
    /// `truth` when the ground-truth model was optimized directly.
    pub model: String,
    pub result: OptimizationResult,
    pub predicted_gain: f64,
    /// Gain of `best_v` under the ground-truth model, when embedded.
    pub true_gain: Option<f64>,
    /// `10 log10(predicted / true)`.
    pub gain_gap_db: Option<f64>,
}

pub fn optimize_dataset(ds: &crate::scenario::Dataset, opts: &OptimizeOptions) -> Result<OptimizeOutput> {
    let truth = ds.ground_truth.as_ref();
    let (params, model) = if opts.truth {
        let p = truth.ok_or_else(|| Error::MissingParameter("dataset has no ground truth".into()))?;
        (p.clone(), "truth".to_string())
    } else {
        let est = pipeline::estimate(ds, opts.spec, opts.k, &EstimatorConfig::default())?;
        (est.parameters()?, opts.spec.to_string())
    };
    let result = genetic_optimize(
        |v| channel_gain(&params, v, opts.user, opts.feed),
        params.n_m(),
        &opts.ga,
    )?;
    let predicted_gain = result.best_gain;
    let true_gain = truth
        .map(|p| channel_gain(p, &result.best_v, opts.user, opts.feed))
        .transpose()?;
    Ok(OptimizeOutput {
        user: opts.user,
        feed: opts.feed,
        model,
        gain_gap_db: true_gain.map(|t| 10.0 * (predicted_gain / t).log10()),
        result,
        predicted_gain,
        true_gain,
    })
}

fn cmd_optimize(dataset: &Path, opts: &OptimizeOptions, output: &OutputArgs) -> Result<()> {
    let ds = load_dataset(dataset)?;
    let out = optimize_dataset(&ds, opts)?;
    let path = output_path(output, None, "optimize.json")?;
    write_json(&out, &path)?;
    let r = &out.result;
    println!(
        "best configuration {} after {} generations",
        r.best_v.to_bitstring(),
        r.generations_used
    );
    println!(
        "predicted gain {:.6e}, random baseline mean {:.6e} (sd {:.3e}), enhancement {:.2}",
        r.best_gain, r.random_baseline.mean, r.random_baseline.sd, r.enhancement
    );
    if let (Some(t), Some(gap)) = (out.true_gain, out.gain_gap_db) {
        println!("ground-truth gain {t:.6e} ({gap:+.3} dB predicted vs true)");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_report(csv: &Path, target: Option<f64>, output: &OutputArgs) -> Result<()> {
    let text = std::fs::read_to_string(csv).map_err(|e| Error::io(csv, e))?;
    let rows = sweep::read_csv(&text)?;
    let summary = report::summarize(&rows, target);
    print!("{}", report::render(&summary));
    let path = output_path(output, None, "report.json")?;
    write_json(&summary, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}
