use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dmaware_core::active_learning::Criterion;
use dmaware_core::exec::configure_threads;
use dmaware_core::harness::{
    bootstrap_ci, run_al, run_correlation, write_al_outputs, write_correlation_outputs, ExperimentConfig,
    ExperimentKind, DEFAULT_RESAMPLES,
};
use dmaware_core::ExecMode;
use dmaware_service::AppState;

#[derive(Parser)]
#[command(name = "dmaware", version, about = "Reliability-aware treatment decisions and active learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Correlate imbalance with estimated and observed Type S error.
    Correlation(RunArgs),
    /// Run an active-learning experiment.
    Al(AlArgs),
    /// Bootstrap confidence intervals for a column of a results table.
    Bootstrap(BootstrapArgs),
    /// Start the elicitation HTTP service.
    Serve(ServeArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of repetitions.
    #[arg(long)]
    reps: Option<usize>,
    /// Number of queries per session.
    #[arg(long)]
    queries: Option<usize>,
    /// Comma-separated acquisition criteria.
    #[arg(long, value_delimiter = ',')]
    criteria: Option<Vec<String>>,
    /// Output directory for result tables.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict scoring to the k candidates nearest the target.
    #[arg(long)]
    knn: Option<usize>,
    /// Worker threads; 1 runs sequentially.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct AlArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Experiment kind when no config file is given.
    #[arg(long, default_value = "al_binary")]
    kind: String,
}

#[derive(Args)]
struct BootstrapArgs {
    /// Results table produced by `al`.
    input: PathBuf,
    /// Column to summarise, grouped by criterion and step.
    #[arg(long, default_value = "correct_proportion")]
    column: String,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write `bootstrap.json` here instead of printing.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// Bind address; overrides the environment variable.
    #[arg(long, env = dmaware_service::BIND_ENV, default_value = dmaware_service::DEFAULT_BIND)]
    bind: String,
    /// Directory for per-session journals.
    #[arg(long, env = "DMAWARE_JOURNAL_DIR")]
    journal_dir: Option<PathBuf>,
    #[arg(long)]
    jobs: Option<usize>,
}

fn parse_kind(s: &str) -> Result<ExperimentKind> {
    Ok(match s.replace('-', "_").as_str() {
        "al_binary" | "binary" => ExperimentKind::AlBinary,
        "al_continuous" | "continuous" => ExperimentKind::AlContinuous,
        "al_comparative" | "comparative" => ExperimentKind::AlComparative,
        other => bail!("unknown experiment kind {other:?}"),
    })
}

fn load_config(args: &RunArgs, fallback: ExperimentKind) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::new(fallback),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.reps {
        cfg.repetitions = r;
    }
    if let Some(q) = args.queries {
        cfg.n_queries = q;
    }
    if let Some(list) = &args.criteria {
        cfg.criteria = list
            .iter()
            .map(|s| s.trim().parse::<Criterion>())
            .collect::<dmaware_core::Result<_>>()?;
    }
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if args.knn.is_some() {
        cfg.knn = args.knn;
    }
    if args.jobs.is_some() {
        cfg.jobs = args.jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn exec_mode(jobs: Option<usize>) -> Result<ExecMode> {
    match jobs {
        Some(1) => Ok(ExecMode::Sequential),
        Some(n) => {
            configure_threads(n)?;
            Ok(ExecMode::Parallel)
        }
        None => Ok(ExecMode::Parallel),
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("results"))
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn correlation(args: &RunArgs) -> Result<()> {
    let cfg = load_config(args, ExperimentKind::Correlation)?;
    if cfg.kind != ExperimentKind::Correlation {
        bail!("config kind must be \"correlation\" for this subcommand");
    }
    let result = run_correlation(&cfg, exec_mode(cfg.jobs)?)?;
    for c in &result.correlations {
        println!(
            "n_train={} rep={} corr(gamma_hat, gamma)={:.3} (p={:.2e}) corr(mmd, gamma)={:.3} (p={:.2e}) corr(mmd, gamma_hat)={:.3}",
            c.n_train.map_or("all".into(), |n| n.to_string()),
            c.repetition.map_or("all".into(), |n| n.to_string()),
            c.gamma_hat_vs_observed.r,
            c.gamma_hat_vs_observed.p_value,
            c.mmd_vs_observed.r,
            c.mmd_vs_observed.p_value,
            c.mmd_vs_gamma_hat.r,
        );
    }
    if !result.excluded.is_empty() {
        eprintln!("{} cells excluded", result.excluded.len());
    }
    report(&write_correlation_outputs(&out_dir(&cfg), &result)?);
    Ok(())
}

fn al(args: &AlArgs) -> Result<()> {
    let cfg = load_config(&args.run, parse_kind(&args.kind)?)?;
    if cfg.kind == ExperimentKind::Correlation {
        bail!("use the `correlation` subcommand for correlation experiments");
    }
    let record = run_al(&cfg, exec_mode(cfg.jobs)?)?;
    for s in &record.summary {
        println!(
            "{:<18} step {:>2}  correct {:.3} [{:.3}, {:.3}]  gamma_hat {:.4}",
            s.criterion.name(),
            s.step,
            s.correct.mean,
            s.correct.ci_low,
            s.correct.ci_high,
            s.gamma_hat.mean
        );
    }
    if !record.excluded.is_empty() {
        eprintln!("{} repetitions excluded", record.excluded.len());
    }
    report(&write_al_outputs(&out_dir(&cfg), &record)?);
    Ok(())
}

fn bootstrap(args: &BootstrapArgs) -> Result<()> {
    let groups = read_groups(&args.input, &args.column)?;
    let mut out = Vec::new();
    for (i, ((criterion, step), values)) in groups.iter().enumerate() {
        let s = bootstrap_ci(values, args.resamples, args.seed.wrapping_add(i as u64))?;
        out.push(serde_json::json!({ "criterion": criterion, "step": step, "summary": s }));
    }
    let text = serde_json::to_string_pretty(&out)?;
    match &args.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join("bootstrap.json");
            std::fs::write(&path, text + "\n")?;
            report(&[path]);
        }
        None => println!("{text}"),
    }
    Ok(())
}

type Groups = std::collections::BTreeMap<(String, usize), Vec<f64>>;

fn read_groups(path: &Path, column: &str) -> Result<Groups> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("column {name:?} not in {}", path.display()))
    };
    let (ci, si, vi) = (find("criterion")?, find("step")?, find(column)?);
    let mut groups = Groups::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let step: usize = rec[si].parse().with_context(|| format!("row {}: bad step", row + 1))?;
        let value: f64 = rec[vi]
            .parse()
            .with_context(|| format!("row {}, column {column}: not a number", row + 1))?;
        groups.entry((rec[ci].to_string(), step)).or_default().push(value);
    }
    if groups.is_empty() {
        bail!("{} has no rows", path.display());
    }
    Ok(groups)
}

fn serve(args: &ServeArgs) -> Result<()> {
    let addr: SocketAddr = args
        .bind
        .parse()
        .with_context(|| format!("invalid bind address '{}'", args.bind))?;
    let exec = exec_mode(args.jobs)?;
    let state = match &args.journal_dir {
        Some(dir) => AppState::with_journal(dir, exec)
            .with_context(|| format!("cannot open journal directory {}", dir.display()))?,
        None => AppState::new(exec),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("cannot start async runtime")?;
    runtime.block_on(dmaware_service::serve(addr, state))?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Correlation(a) => correlation(a),
        Command::Al(a) => al(a),
        Command::Bootstrap(a) => bootstrap(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
