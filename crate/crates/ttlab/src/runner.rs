//! Executes configured tasks and writes CSV tables, JSON sidecars and a
//! manifest into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use ttlab_core::correlations::exact_correlation;
use ttlab_core::dist::{anticoncentration_sup, char_fn, tau_dist_budget, tau_dist_sweep, LLTNormalization};
use ttlab_core::fit::loglog_slope;
use ttlab_core::mc::{clt_experiment, deviation_exponent_mc, mc_correlation, McConfig};
use ttlab_core::partitions::{enumerate_social, kappa, min_kappa_bound, natural_pairing_check, GapRule, TimeTuple, PAIRING_GRID};
use ttlab_core::correlations::llt_check;
use ttlab_core::skew::BasePart;
use ttlab_core::Workers;

use crate::catalog::{run_scenario, Context, ScenarioReport};
use crate::config::{BuiltSystem, ExperimentConfig, Task};
use crate::error::{LabError, LabResult};
use crate::output::{num, Table};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub workers: usize,
    pub timestamp_unix: u64,
    /// Resolved configuration; running it again reproduces every table.
    pub config: String,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskResult {
    pub index: usize,
    pub task: Task,
    pub summary: serde_json::Value,
    pub reports: Vec<ScenarioReport>,
    pub runtime_secs: f64,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub results: Vec<TaskResult>,
    pub manifest: Manifest,
}

impl RunSummary {
    pub fn pass(&self) -> bool {
        self.results.iter().flat_map(|r| &r.reports).all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&ScenarioReport> {
        self.results.iter().flat_map(|r| &r.reports).filter(|r| !r.pass).collect()
    }
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs every task; failed tolerances are reported, not raised.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> LabResult<RunSummary> {
    cfg.validate()?;
    let system = match &cfg.system {
        Some(s) if cfg.tasks.iter().any(|t| !matches!(t, Task::Partitions { .. } | Task::Scenario { .. })) => Some(s.build()?),
        _ => None,
    };
    fs::create_dir_all(out).map_err(|e| LabError::io(out, e))?;
    let ctx = Context { seed: cfg.seed, workers: Workers(cfg.workers()) };
    let mut results = Vec::new();
    let mut artifacts = Vec::new();
    for (index, task) in cfg.tasks.iter().enumerate() {
        let start = Instant::now();
        let (summary, tables, reports) = run_task(task, system.as_ref(), cfg, &ctx)?;
        let result = TaskResult { index, task: task.clone(), summary, reports, runtime_secs: start.elapsed().as_secs_f64(), tables };
        let prefix = format!("{index:02}-{}", task.kind());
        for t in &result.tables {
            let name = format!("{prefix}-{}.csv", t.name);
            write(&out.join(&name), &t.to_csv())?;
            artifacts.push(name);
        }
        let sidecar = format!("{prefix}.json");
        write(&out.join(&sidecar), &serde_json::to_string_pretty(&result)?)?;
        artifacts.push(sidecar);
        results.push(result);
    }
    let config = cfg.to_toml();
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: config_hash(&config),
        seed: cfg.seed,
        workers: cfg.workers(),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        config,
        artifacts,
    };
    write(&out.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunSummary { results, manifest })
}

/// Reads a manifest and returns the configuration it recorded.
pub fn config_from_manifest(path: &Path) -> LabResult<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if config_hash(&manifest.config) != manifest.config_sha256 {
        return Err(LabError::Schema("manifest config does not match its hash".into()));
    }
    ExperimentConfig::from_toml(&manifest.config)
}

fn write(path: &PathBuf, text: &str) -> LabResult<()> {
    fs::write(path, text).map_err(|e| LabError::io(path, e))
}

type TaskOutput = (serde_json::Value, Vec<Table>, Vec<ScenarioReport>);

fn run_task(task: &Task, sys: Option<&BuiltSystem>, cfg: &ExperimentConfig, ctx: &Context) -> LabResult<TaskOutput> {
    let sys = || sys.ok_or_else(|| LabError::Schema(format!("{} needs a [system] table", task.kind())));
    let mc = |samples: usize| McConfig { workers: ctx.workers.0, ..McConfig::new(samples, ctx.seed) };
    let no_reports = Vec::new;
    Ok(match task {
        Task::ExactCorr { times, pair } => {
            let b = sys()?;
            let [i, j] = pair.unwrap_or([0, 0]);
            let s = exact_correlation(&b.system, &b.observables[i], &b.observables[j], &times.expand(), ctx.workers)?;
            let mut t = Table::new("series", &["N", "re", "im", "abs"]);
            for (n, v) in s.times.iter().zip(&s.values) {
                t.push(vec![n.to_string(), num(v.re), num(v.im), num(v.norm())]);
            }
            let summary = serde_json::json!({ "metadata": s.metadata, "max_imag": s.max_imag() });
            (summary, vec![t], no_reports())
        }
        Task::Mc { times, samples, pair } => {
            let b = sys()?;
            let [i, j] = pair.unwrap_or([0, 0]);
            let mut t = Table::new("estimates", &["N", "estimate", "stderr", "samples"]);
            for n in times.expand() {
                let e = mc_correlation(&b.system, &b.observables[i], &b.observables[j], n, &mc(*samples))?;
                t.push(vec![n.to_string(), num(e.estimate), num(e.stderr), e.samples.to_string()]);
            }
            (serde_json::json!({ "seed": ctx.seed }), vec![t], no_reports())
        }
        Task::Clt { n, samples, sigma2, observable } => {
            let b = sys()?;
            let r = clt_experiment(&b.system, &b.observables[*observable], *n, *sigma2, &mc(*samples))?;
            let mut t = Table::new("birkhoff", &["N", "mean", "variance", "m3", "m4", "q50", "q90", "q99"]);
            for row in &r.birkhoff.rows {
                let q = row.max_quantiles;
                t.push(vec![row.n.to_string(), num(row.mean), num(row.variance), num(row.m3), num(row.m4), num(q[0]), num(q[1]), num(q[2])]);
            }
            (serde_json::to_value(&r)?, vec![t], no_reports())
        }
        Task::TauDist { n } => {
            let b = sys()?;
            let m = markov(b)?;
            let d = tau_dist_budget(&m, &b.system.cocycle, *n, cfg.budget())?;
            let mut t = Table::new("law", &["z", "mass"]);
            for (z, p) in d.support() {
                t.push(vec![join(&z), num(p)]);
            }
            let summary = serde_json::json!({ "n": n, "total_mass": d.total_mass(), "pruned_mass": d.pruned_mass(), "drift": d.drift() });
            (summary, vec![t], no_reports())
        }
        Task::Charfn { times, xi } => {
            let b = sys()?;
            let m = markov(b)?;
            let mut t = Table::new("charfn", &["N", "xi", "re", "im", "abs"]);
            for n in times.expand() {
                for x in xi {
                    let v = char_fn(&m, &b.system.cocycle, x, n)?;
                    t.push(vec![n.to_string(), join(x), num(v.re), num(v.im), num(v.norm())]);
                }
            }
            (serde_json::Value::Null, vec![t], no_reports())
        }
        Task::Anticoncentration { times } => {
            let b = sys()?;
            let m = markov(b)?;
            let c = &b.system.cocycle;
            let ns = times.expand();
            let norm = LLTNormalization::new(&m, c)?;
            let sups: Vec<f64> = tau_dist_sweep(&m, c, &ns, cfg.budget())?.iter().map(|d| anticoncentration_sup(d, &norm)).collect();
            let mut t = Table::new("sup", &["N", "sup"]);
            for (n, s) in ns.iter().zip(&sups) {
                t.push(vec![n.to_string(), num(*s)]);
            }
            let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
            let slope = loglog_slope(&x, &sups).ok().map(|(s, e)| serde_json::json!({ "slope": s, "stderr": e }));
            (serde_json::json!({ "loglog": slope }), vec![t], no_reports())
        }
        Task::LltCheck { times, z, shift, a0, a1 } => {
            let b = sys()?;
            let m = markov(b)?;
            let part = |w: &Option<Vec<f64>>| w.as_ref().map_or(BasePart::Constant(1.0), |v| BasePart::by_symbol(v));
            let shift = shift.clone().unwrap_or_else(|| vec![0; z.len()]);
            let rows = llt_check(&m, &b.system.cocycle, &part(a0), &part(a1), &shift, z, &times.expand())?;
            let mut t = Table::new("llt", &["N", "cell", "lhs", "rhs", "ratio"]);
            for r in &rows {
                t.push(vec![r.n.to_string(), join(&r.cell), num(r.lhs), num(r.rhs), num(r.ratio)]);
            }
            (serde_json::Value::Null, vec![t], no_reports())
        }
        Task::Partitions { s, times, rule, d, pairing } => {
            let rule = rule.clone().unwrap_or_else(GapRule::sqrt);
            let tuple = TimeTuple::new(times.clone().unwrap_or_else(|| (0..*s as u64).collect()))?;
            let mut t = Table::new("kappa", &["partition", "kappa_plus", "kappa_minus", "kappa", "identity"]);
            for p in enumerate_social(*s)? {
                let k = kappa(&p, &tuple, &rule)?;
                t.push(vec![p.to_string(), num(k.plus), num(k.minus), num(k.kappa), k.identity_holds.to_string()]);
            }
            let bound = min_kappa_bound(&tuple, &rule, *d)?;
            let checks = pairing.iter().map(|&m| natural_pairing_check(m, PAIRING_GRID)).collect::<Result<Vec<_>, _>>()?;
            let checks: Vec<_> = checks
                .iter()
                .map(|c| serde_json::json!({ "m": c.m, "pairings": c.pairings, "tuples": c.tuples, "holds": c.holds, "counterexamples": c.counterexamples.len() }))
                .collect();
            let summary = serde_json::json!({
                "count": t.rows.len(),
                "bound": bound.bound,
                "minimizer": bound.minimizer.to_string(),
                "ties": bound.ties,
                "pairing": checks,
            });
            (summary, vec![t], no_reports())
        }
        Task::Deviations { n_max, samples, observable } => {
            let b = sys()?;
            let r = deviation_exponent_mc(&b.system, &b.observables[*observable], *n_max, &mc(*samples))?;
            let mut t = Table::new("deviations", &["N", "mean_log_max", "violation_fraction"]);
            for ((n, l), v) in r.n_grid.iter().zip(&r.mean_log_max).zip(&r.violation_fraction) {
                t.push(vec![n.to_string(), num(*l), num(*v)]);
            }
            (serde_json::to_value(&r)?, vec![t], no_reports())
        }
        Task::Scenario { id } => {
            let o = run_scenario(id, ctx)?;
            let mut tables = vec![o.report_table()];
            tables.extend(o.tables.iter().cloned());
            let summary = serde_json::json!({ "id": o.id, "pass": o.pass(), "runtime_secs": o.runtime_secs, "within_budget": o.within_budget });
            (summary, tables, o.reports)
        }
    })
}

fn markov(b: &BuiltSystem) -> LabResult<ttlab_core::sft::GibbsMarkovMeasure> {
    b.system.markov().ok_or_else(|| LabError::Schema("task needs a symbolic (SFT) base".into()))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(" ")
}
