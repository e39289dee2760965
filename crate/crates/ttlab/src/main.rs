use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};
use ttlab::catalog::catalog;
use ttlab::config::{ExperimentConfig, Task};
use ttlab::runner::{config_from_manifest, run, RunSummary};
use ttlab::LabError;

#[derive(Parser)]
#[command(name = "ttlab", version, about = "Correlation and limit-theorem experiments for skew products")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads: 0 for all cores, 1 for sequential.
    #[arg(long, env = "TTLAB_WORKERS")]
    workers: Option<usize>,
    /// Output directory (default: the configured `out`, else `ttlab-out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of the configuration.
    Run(Common),
    /// Re-run the configuration recorded in a manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the scenario catalog.
    Catalog,
    /// Run catalog scenarios by id (`all` for every entry).
    Scenario {
        ids: Vec<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Social partitions, kappa tables and the natural pairing check.
    Partitions {
        /// Tuple size when no configuration is given.
        #[arg(long, default_value_t = 4)]
        s: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Exact correlation series of the configured `exact-corr` tasks.
    ExactCorr(Common),
    /// Monte Carlo correlation estimates with batch-means error bars.
    Mc(Common),
    /// Normalized-sum histogram, moments and KS distance.
    Clt(Common),
    /// Exact law of the Birkhoff sum `tau_N`.
    TauDist(Common),
    /// Characteristic function of `tau_N` on a frequency list.
    Charfn(Common),
    /// Point-mass suprema `sup_z P(tau_N = z)` against `N`.
    Anticoncentration(Common),
    /// Local limit ratios against the Gaussian density.
    LltCheck(Common),
    /// Sample-path deviation exponent of `S_N`.
    Deviations(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(summary) => report(&summary),
        Err(e) => {
            let code = e.downcast_ref::<LabError>().map_or(2, LabError::exit_code);
            eprintln!("error: {e:#}");
            ExitCode::from(code as u8)
        }
    }
}

fn report(summary: &Option<RunSummary>) -> ExitCode {
    let Some(summary) = summary else {
        return ExitCode::SUCCESS;
    };
    for r in &summary.results {
        println!("[{:02}] {} ({:.2}s)", r.index, r.task.kind(), r.runtime_secs);
        for rep in &r.reports {
            let mark = if rep.pass { "PASS" } else { "FAIL" };
            println!("     {mark} {}/{} measured {:.6}", rep.scenario, rep.check, rep.measured);
        }
    }
    println!("artifacts: {}", summary.manifest.artifacts.len());
    if summary.pass() {
        ExitCode::SUCCESS
    } else {
        for f in summary.failures() {
            eprintln!("tolerance failure: {}/{}: {}", f.scenario, f.check, f.claim);
        }
        ExitCode::from(1)
    }
}

fn load(common: &Common, fallback: Option<Vec<Task>>) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let parsed: ExperimentConfig = toml::from_str(&text).map_err(|e| LabError::Schema(e.to_string()))?;
            parsed
        }
        None => ExperimentConfig { seed: 0, workers: None, out: None, budget: None, system: None, tasks: Vec::new() },
    };
    if let Some(tasks) = fallback {
        if cfg.tasks.is_empty() {
            cfg.tasks = tasks;
        }
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        cfg.workers = Some(w);
    }
    Ok(cfg)
}

fn out_dir(common: &Common, cfg: &ExperimentConfig) -> PathBuf {
    common.out.clone().or_else(|| cfg.out.as_ref().map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("ttlab-out"))
}

fn execute(cfg: ExperimentConfig, out: &Path) -> Result<Option<RunSummary>> {
    cfg.validate()?;
    Ok(Some(run(&cfg, out)?))
}

fn only(common: &Common, kind: &str) -> Result<Option<RunSummary>> {
    let mut cfg = load(common, None)?;
    cfg.tasks.retain(|t| t.kind() == kind);
    if cfg.tasks.is_empty() {
        return Err(LabError::Schema(format!("configuration has no {kind:?} tasks")).into());
    }
    let out = out_dir(common, &cfg);
    execute(cfg, &out)
}

fn dispatch(cmd: Command) -> Result<Option<RunSummary>> {
    match cmd {
        Command::Run(common) => {
            let cfg = load(&common, None)?;
            let out = out_dir(&common, &cfg);
            execute(cfg, &out)
        }
        Command::Rerun { manifest, out } => execute(config_from_manifest(&manifest)?, &out),
        Command::Catalog => {
            for e in catalog() {
                println!("{:<12} {:<36} budget {:>4}s  {}", e.id, e.title, e.budget_secs, e.anchor);
            }
            Ok(None)
        }
        Command::Scenario { ids, common } => {
            let ids: Vec<String> = if ids.iter().any(|i| i == "all") {
                catalog().iter().map(|e| e.id.to_string()).collect()
            } else {
                ids
            };
            let tasks = ids.into_iter().map(|id| Task::Scenario { id }).collect();
            let mut cfg = load(&common, Some(tasks))?;
            cfg.tasks.retain(|t| t.kind() == "scenario");
            let out = out_dir(&common, &cfg);
            execute(cfg, &out)
        }
        Command::Partitions { s, common } => {
            let default = Task::Partitions { s, times: None, rule: None, d: 1, pairing: vec![4, 6, 8] };
            let mut cfg = load(&common, Some(vec![default]))?;
            cfg.tasks.retain(|t| t.kind() == "partitions");
            let out = out_dir(&common, &cfg);
            execute(cfg, &out)
        }
        Command::ExactCorr(c) => only(&c, "exact-corr"),
        Command::Mc(c) => only(&c, "mc"),
        Command::Clt(c) => only(&c, "clt"),
        Command::TauDist(c) => only(&c, "tau-dist"),
        Command::Charfn(c) => only(&c, "charfn"),
        Command::Anticoncentration(c) => only(&c, "anticoncentration"),
        Command::LltCheck(c) => only(&c, "llt-check"),
        Command::Deviations(c) => only(&c, "deviations"),
    }
}
