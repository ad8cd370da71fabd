//! `nolab`: dataset generation, training and verification runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use nolab_core::grid::{make_grid, GrfSampler};
use nolab_core::operator::{build_operator, load_checkpoint, save_checkpoint, Activation, KernelKind, OperatorConfig};
use nolab_core::training::{gen_dataset, train, Dataset, TargetOperator, TrainConfig, TrainError};
use nolab_core::verification::{
    accepts_model, bench_complexity, run_named, BenchKernel, ComplexityConfig, ComplexityRun, Status, VerifyError,
    VerifyReport, EXPERIMENTS,
};

#[derive(Parser)]
#[command(name = "nolab", version, about = "Neural operators on periodic grids, with executable checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample GRF inputs, apply a target operator, write a dataset file.
    GenData(GenDataArgs),
    /// Train an operator on a dataset; writes a checkpoint and history.csv.
    Train(TrainArgs),
    /// Run one verification experiment, or `all` of them.
    Verify(VerifyArgs),
    /// Time the forward pass across grid sizes (single-threaded).
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// bessel-inverse, antiderivative, smoothed-tanh or band-limited.
    #[arg(long)]
    target: String,
    /// Points per axis (power of two, at least 8).
    #[arg(long)]
    grid: usize,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    length: f64,
    #[arg(long)]
    n_samples: usize,
    /// GRF smoothness exponent.
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// JSON training config (see `TrainFile`).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint path; history.csv is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Experiment name or `all`.
    experiment: String,
    /// JSON config. For `all`, an object keyed by experiment name.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained checkpoint to verify instead of a freshly built operator.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Reduced budgets (trials divided by ten and similar).
    #[arg(long)]
    quick: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// dense or spectral.
    #[arg(long)]
    kernel: String,
    /// Comma-separated grid sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    /// Hidden width; defaults to 8 (spectral) or 1 (dense).
    #[arg(long)]
    width: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Training run: architecture (grid taken from the dataset), init seed and
/// optimizer settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    width: usize,
    layers: usize,
    kernel: KernelKind,
    activation: Activation,
    #[serde(default = "unit")]
    init_scale: f64,
    #[serde(default)]
    init_seed: u64,
    train: TrainConfig,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Serialize)]
struct SuiteEntry {
    experiment: String,
    status: Status,
    pass: bool,
    report: String,
}

#[derive(Debug, Serialize)]
struct SuiteManifest {
    runs: Vec<SuiteEntry>,
    quick: bool,
    pass: bool,
}

enum CliError {
    /// Bad flags or config: exit 2.
    Usage(String),
    /// I/O failure, divergence or numerical error: exit 1.
    Failure(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        match e {
            VerifyError::Config(_) | VerifyError::Grid(_) => CliError::Usage(e.to_string()),
            other => CliError::Failure(other.to_string()),
        }
    }
}

fn failure(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| failure(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn gen_data(a: GenDataArgs) -> Result<bool, CliError> {
    let target = TargetOperator::from_name(&a.target)
        .ok_or_else(|| usage(format!("unknown target {:?}", a.target)))?;
    let grid = make_grid(a.dim, a.grid, a.length).map_err(usage)?;
    if a.n_samples == 0 {
        return Err(usage("--n-samples must be positive"));
    }
    let sampler = GrfSampler::new(a.alpha, a.amplitude, a.seed).map_err(usage)?;
    let data = gen_dataset(&target, &sampler, &grid, a.n_samples).map_err(failure)?;
    data.save(&a.out).map_err(failure)?;
    let summary = serde_json::json!({
        "path": a.out.display().to_string(),
        "target": target,
        "grid": grid,
        "samples": data.len(),
        "sampler": sampler,
    });
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(true)
}

fn write_history(path: &Path, history: &[f64]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(failure)?;
    w.write_record(["step", "loss"]).map_err(failure)?;
    for (i, l) in history.iter().enumerate() {
        w.write_record([i.to_string(), format!("{l:e}")]).map_err(failure)?;
    }
    w.flush()?;
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<bool, CliError> {
    let text = read_text(&a.config)?;
    let cfg: TrainFile = parse_json(&a.config, &text)?;
    let data = Dataset::load(&a.data).map_err(failure)?;
    let op_cfg = OperatorConfig {
        grid: data.grid,
        in_channels: data.channels_in(),
        out_channels: data.channels_out(),
        width: cfg.width,
        layers: cfg.layers,
        kernel: cfg.kernel,
        activation: cfg.activation,
        init_scale: cfg.init_scale,
    };
    let op = build_operator(&op_cfg, cfg.init_seed).map_err(usage)?;
    cfg.train.validate().map_err(usage)?;
    let history_path = a.out.with_file_name("history.csv");
    match train(&op, &data, &cfg.train) {
        Ok(out) => {
            save_checkpoint(&out.operator, &a.out).map_err(failure)?;
            write_history(&history_path, &out.history)?;
            println!(
                "{}",
                serde_json::json!({
                    "checkpoint": a.out.display().to_string(),
                    "history": history_path.display().to_string(),
                    "steps": out.history.len(),
                    "final_loss": out.final_loss(),
                    "params": out.operator.param_count(),
                })
            );
            Ok(true)
        }
        Err(TrainError::Diverged { step, loss, history }) => {
            write_history(&history_path, &history)?;
            Err(failure(format!("training diverged at step {step} (loss {loss:e}); partial history written")))
        }
        Err(e) => Err(failure(e)),
    }
}

fn write_report(report: &VerifyReport, dir: &Path) -> Result<PathBuf, CliError> {
    let path = report.write_json(dir)?;
    report.write_series_csv(dir).map_err(failure)?;
    Ok(path)
}

fn print_report(report: &VerifyReport) {
    for a in &report.assertions {
        eprintln!(
            "  [{}] {} (measured {:e}, threshold {:e})",
            if a.pass { "ok" } else { "FAIL" },
            a.description,
            a.measured,
            a.threshold
        );
    }
    for w in &report.warnings {
        eprintln!("  warning: {w}");
    }
    eprintln!("{}: {:?} in {:.0} ms", report.experiment, report.status, report.wall_ms);
}

fn verify(a: VerifyArgs) -> Result<bool, CliError> {
    let model = match &a.model {
        Some(p) => Some(load_checkpoint(p).map_err(failure)?),
        None => None,
    };
    let text = match &a.config {
        Some(p) => Some(read_text(p)?),
        None => None,
    };
    fs::create_dir_all(&a.out)?;
    if a.experiment != "all" {
        if !EXPERIMENTS.contains(&a.experiment.as_str()) {
            return Err(usage(format!(
                "unknown experiment {:?}; valid names: {}, all",
                a.experiment,
                EXPERIMENTS.join(", ")
            )));
        }
        let report = run_named(&a.experiment, text.as_deref(), model.as_ref(), a.quick).map_err(|e| match e {
            VerifyError::Config(m) => match &a.config {
                Some(p) => usage(format!("{}: {m}", p.display())),
                None => usage(m),
            },
            other => other.into(),
        })?;
        print_report(&report);
        let path = write_report(&report, &a.out)?;
        println!("{}", path.display());
        return Ok(report.pass());
    }
    // `all`: per-experiment configs under their names.
    let configs: serde_json::Map<String, serde_json::Value> = match (&a.config, &text) {
        (Some(p), Some(t)) => parse_json(p, t)?,
        _ => serde_json::Map::new(),
    };
    if let Some(bad) = configs.keys().find(|k| !EXPERIMENTS.contains(&k.as_str())) {
        return Err(usage(format!("unknown experiment {bad:?} in suite config")));
    }
    let mut runs = Vec::new();
    for name in EXPERIMENTS {
        let cfg = configs.get(name).map(|v| v.to_string());
        let m = if accepts_model(name) { model.as_ref() } else { None };
        let report = run_named(name, cfg.as_deref(), m, a.quick)?;
        print_report(&report);
        let path = write_report(&report, &a.out)?;
        runs.push(SuiteEntry {
            experiment: name.to_string(),
            status: report.status,
            pass: report.pass(),
            report: path.file_name().unwrap().to_string_lossy().into_owned(),
        });
    }
    let manifest = SuiteManifest {
        pass: runs.iter().all(|r| r.pass),
        quick: a.quick,
        runs,
    };
    let path = a.out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap())?;
    println!("{}", path.display());
    Ok(manifest.pass)
}

fn bench(a: BenchArgs) -> Result<bool, CliError> {
    let kernel = BenchKernel::from_name(&a.kernel)
        .ok_or_else(|| usage(format!("unknown kernel {:?}; expected dense or spectral", a.kernel)))?;
    let mut run = ComplexityRun::for_kernel(kernel);
    if let Some(s) = a.sizes {
        run.n_list = s;
    }
    if run.n_list.len() < 3 {
        return Err(usage("bench needs at least 3 sizes"));
    }
    run.reps = a.reps;
    if let Some(w) = a.width {
        run.width = w;
    }
    let report = bench_complexity(&ComplexityConfig {
        runs: vec![run],
        seed: a.seed,
    })?;
    print_report(&report);
    let tag = match kernel {
        BenchKernel::Spectral => "spectral",
        BenchKernel::Dense => "dense",
    };
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        report.write_json(dir)?;
        let mut w = csv::Writer::from_path(dir.join("bench.csv")).map_err(failure)?;
        w.write_record(["N", "median_ms"]).map_err(failure)?;
        for (n, t) in report.series[&format!("{tag}.n")]
            .iter()
            .zip(&report.series[&format!("{tag}.median_seconds")])
        {
            w.write_record([format!("{n}"), format!("{:e}", t * 1e3)]).map_err(failure)?;
        }
        w.flush()?;
    }
    println!(
        "{}",
        serde_json::json!({
            "kernel": tag,
            "slope": report.measured.get(&format!("{tag}.slope")),
            "r2": report.measured.get(&format!("{tag}.r2")),
            "status": report.status,
        })
    );
    Ok(report.pass())
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("NOLAB_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| usage(format!("NOLAB_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(failure)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|_| match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Verify(a) => verify(a),
        Command::Bench(a) => bench(a),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
