//! TOML experiment configuration.
//!
//! Every table rejects unknown keys, and [`ExperimentConfig::validate`]
//! checks cross-field constraints before anything is computed.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use ttlab_core::cocycle::CocycleSpec;
use ttlab_core::partitions::GapRule;
use ttlab_core::scenarios;
use ttlab_core::sft::{build_gibbs, Potential, SubshiftSpec};
use ttlab_core::skew::{BasePart, BaseSystem, FiberAction, Observable, ProductTerm, SkewSystem};
use ttlab_core::torus::{IntMatrix, TrigPoly};

use crate::error::{LabError, LabResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// `0` for the default pool, `1` for sequential.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out: Option<String>,
    /// Cell budget for exact lattice laws.
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub system: Option<SystemConfig>,
    #[serde(default)]
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Catalog system; excludes `base`, `cocycle` and `fiber`.
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub base: Option<BaseConfig>,
    #[serde(default)]
    pub cocycle: Option<CocycleConfig>,
    #[serde(default)]
    pub fiber: Option<FiberConfig>,
    /// Overrides the preset observables when nonempty.
    #[serde(default)]
    pub observables: Vec<ObservableConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    ZeroDriftMixing,
    DriftedMixing,
    GoldenRotation,
    LiouvilleRotation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BaseConfig {
    Sft {
        transitions: Vec<Vec<u8>>,
        /// Potential on transitions; zero when absent.
        #[serde(default)]
        potential: Option<Vec<Vec<f64>>>,
    },
    Full {
        alphabet: usize,
    },
    GoldenMean,
    CatMap {
        matrix: Vec<Vec<i64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CocycleConfig {
    /// `values[a][b]` is the step on the transition `a -> b`.
    Lattice { values: Vec<Vec<Vec<i64>>> },
    Real { values: Vec<Vec<Vec<f64>>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FiberConfig {
    Rotation { alpha: f64 },
    /// Row-major `m x d` frequency matrix.
    Translation { m: usize, d: usize, alpha: Vec<f64> },
    Automorphism { matrix: Vec<Vec<i64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    /// `a(x_0)` by symbol; excludes `base_table`.
    #[serde(default)]
    pub base: Option<Vec<f64>>,
    /// `a(x_0, x_1)` table.
    #[serde(default)]
    pub base_table: Option<Vec<Vec<f64>>>,
    /// Fourier coefficients of the fiber factor.
    #[serde(default)]
    pub terms: Vec<FourierTerm>,
    /// Cosines `amp cos(2 pi <k, y>)` added to `terms`.
    #[serde(default)]
    pub cos: Vec<Cosine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub k: Vec<i64>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cosine {
    pub k: Vec<i64>,
    #[serde(default = "one")]
    pub amp: f64,
}

fn one() -> f64 {
    1.0
}

/// Explicit list or inclusive range of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Times {
    List(Vec<usize>),
    Range(TimeRange),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeRange {
    pub from: usize,
    pub to: usize,
    #[serde(default = "unit_step")]
    pub step: usize,
}

fn unit_step() -> usize {
    1
}

impl Times {
    pub fn expand(&self) -> Vec<usize> {
        match self {
            Times::List(v) => v.clone(),
            Times::Range(r) => (r.from..=r.to).step_by(r.step.max(1)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    ExactCorr {
        times: Times,
        /// Observable indices `(H1, H2)`.
        #[serde(default)]
        pair: Option<[usize; 2]>,
    },
    Mc {
        times: Times,
        samples: usize,
        #[serde(default)]
        pair: Option<[usize; 2]>,
    },
    Clt {
        n: usize,
        samples: usize,
        #[serde(default)]
        sigma2: Option<f64>,
        #[serde(default)]
        observable: usize,
    },
    TauDist {
        n: usize,
    },
    Charfn {
        times: Times,
        /// Frequencies, one vector per point.
        xi: Vec<Vec<f64>>,
    },
    Anticoncentration {
        times: Times,
    },
    LltCheck {
        times: Times,
        z: Vec<f64>,
        #[serde(default)]
        shift: Option<Vec<i64>>,
        /// Base weights by symbol; ones when absent.
        #[serde(default)]
        a0: Option<Vec<f64>>,
        #[serde(default)]
        a1: Option<Vec<f64>>,
    },
    Partitions {
        s: usize,
        /// Tuple for the kappa table; `0, 1, ..., s-1` when absent.
        #[serde(default)]
        times: Option<Vec<u64>>,
        #[serde(default)]
        rule: Option<GapRule>,
        #[serde(default = "one_u32")]
        d: u32,
        /// Even sizes for the natural pairing check.
        #[serde(default)]
        pairing: Vec<usize>,
    },
    Deviations {
        n_max: usize,
        samples: usize,
        #[serde(default)]
        observable: usize,
    },
    Scenario {
        id: String,
    },
}

fn one_u32() -> u32 {
    1
}

impl Task {
    pub fn kind(&self) -> &'static str {
        match self {
            Task::ExactCorr { .. } => "exact-corr",
            Task::Mc { .. } => "mc",
            Task::Clt { .. } => "clt",
            Task::TauDist { .. } => "tau-dist",
            Task::Charfn { .. } => "charfn",
            Task::Anticoncentration { .. } => "anticoncentration",
            Task::LltCheck { .. } => "llt-check",
            Task::Partitions { .. } => "partitions",
            Task::Deviations { .. } => "deviations",
            Task::Scenario { .. } => "scenario",
        }
    }

    fn needs_system(&self) -> bool {
        !matches!(self, Task::Partitions { .. } | Task::Scenario { .. })
    }
}

fn schema(msg: impl Into<String>) -> LabError {
    LabError::Schema(msg.into())
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> LabResult<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Cross-field checks; building the system also validates its parts.
    pub fn validate(&self) -> LabResult<()> {
        if self.tasks.is_empty() {
            return Err(schema("task list is empty; add at least one [[tasks]] table"));
        }
        if self.tasks.iter().any(Task::needs_system) {
            let sys = self.system.as_ref().ok_or_else(|| schema("tasks need a [system] table"))?;
            let built = sys.build()?;
            for t in &self.tasks {
                self.check_task(t, &built)?;
            }
        }
        for t in &self.tasks {
            match t {
                Task::Scenario { id } if crate::catalog::entry(id).is_none() => {
                    return Err(schema(format!("unknown scenario id {id:?}")));
                }
                Task::Partitions { s, times, .. } => {
                    if !(2..=ttlab_core::partitions::MAX_BOUND).contains(s) {
                        return Err(schema(format!("partitions: s = {s} outside 2..=8")));
                    }
                    if times.as_ref().is_some_and(|v| v.len() != *s) {
                        return Err(schema("partitions: times must have s entries"));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn check_task(&self, t: &Task, sys: &BuiltSystem) -> LabResult<()> {
        let count = sys.observables.len();
        let index_ok = |i: usize| {
            if i < count {
                Ok(())
            } else {
                Err(schema(format!("{}: observable index {i} but only {count} observables", t.kind())))
            }
        };
        match t {
            Task::ExactCorr { times, pair } | Task::Mc { times, pair, .. } => {
                if times.expand().is_empty() {
                    return Err(schema(format!("{}: empty time grid", t.kind())));
                }
                for i in pair.unwrap_or([0, 0]) {
                    index_ok(i)?;
                }
            }
            Task::Clt { observable, n, .. } | Task::Deviations { observable, n_max: n, .. } => {
                index_ok(*observable)?;
                if *n == 0 {
                    return Err(schema(format!("{}: time must be positive", t.kind())));
                }
            }
            Task::Charfn { xi, times } => {
                let d = sys.system.cocycle.dim();
                if xi.is_empty() || xi.iter().any(|x| x.len() != d) || times.expand().is_empty() {
                    return Err(schema(format!("charfn: need nonempty times and frequencies of dimension {d}")));
                }
            }
            Task::LltCheck { z, shift, .. } => {
                let d = sys.system.cocycle.dim();
                if z.len() != d || shift.as_ref().is_some_and(|s| s.len() != d) {
                    return Err(schema(format!("llt-check: z and shift need dimension {d}")));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(0)
    }

    pub fn budget(&self) -> u64 {
        self.budget.unwrap_or(ttlab_core::lattice::DEFAULT_BUDGET)
    }
}

/// A validated system with its observables.
#[derive(Debug, Clone)]
pub struct BuiltSystem {
    pub system: SkewSystem,
    pub observables: Vec<Observable>,
}

impl SystemConfig {
    pub fn build(&self) -> LabResult<BuiltSystem> {
        let explicit = self.base.is_some() || self.cocycle.is_some() || self.fiber.is_some();
        let (system, defaults) = match (self.preset, explicit) {
            (Some(_), true) => return Err(schema("system: preset excludes base, cocycle and fiber")),
            (Some(p), false) => preset(p)?,
            (None, _) => {
                let base = self.base.as_ref().ok_or_else(|| schema("system: missing base"))?;
                let cocycle = self.cocycle.as_ref().ok_or_else(|| schema("system: missing cocycle"))?;
                let fiber = self.fiber.as_ref().ok_or_else(|| schema("system: missing fiber"))?;
                (explicit_system(base, cocycle, fiber)?, Vec::new())
            }
        };
        let observables = if self.observables.is_empty() {
            defaults
        } else {
            self.observables.iter().map(|o| o.build(system.fiber.torus_dim())).collect::<LabResult<_>>()?
        };
        if observables.is_empty() {
            return Err(schema("system: at least one observable is required"));
        }
        for h in &observables {
            system.check_observable(h).map_err(|e| schema(e.to_string()))?;
        }
        Ok(BuiltSystem { system, observables })
    }
}

fn preset(p: Preset) -> LabResult<(SkewSystem, Vec<Observable>)> {
    Ok(match p {
        Preset::ZeroDriftMixing => (scenarios::zero_drift_mixing()?, vec![scenarios::mixing_observable()]),
        Preset::DriftedMixing => (scenarios::drifted_mixing()?, vec![scenarios::mixing_observable()]),
        Preset::GoldenRotation => (scenarios::golden_rotation()?, vec![scenarios::sawtooth_observable()]),
        Preset::LiouvilleRotation => (scenarios::liouville_rotation()?, vec![scenarios::sawtooth_observable()]),
    })
}

fn explicit_system(base: &BaseConfig, cocycle: &CocycleConfig, fiber: &FiberConfig) -> LabResult<SkewSystem> {
    let bad = |e: ttlab_core::Error| schema(e.to_string());
    let base = match base {
        BaseConfig::Sft { transitions, potential } => {
            let spec = SubshiftSpec::new(transitions).map_err(bad)?;
            let phi = match potential {
                Some(p) => Potential::from_matrix(&spec, p).map_err(bad)?,
                None => Potential::zero(&spec),
            };
            BaseSystem::Sft(build_gibbs(&spec, &phi)?)
        }
        BaseConfig::Full { alphabet } => {
            if *alphabet < 2 {
                return Err(schema("full shift needs at least two symbols"));
            }
            BaseSystem::Sft(ttlab_core::sft::GibbsMarkovMeasure::uniform_full_shift(*alphabet))
        }
        BaseConfig::GoldenMean => {
            let spec = SubshiftSpec::golden_mean();
            BaseSystem::Sft(build_gibbs(&spec, &Potential::zero(&spec))?)
        }
        BaseConfig::CatMap { matrix } => BaseSystem::cat_map(IntMatrix::new(matrix).map_err(bad)?).map_err(bad)?,
    };
    let spec = base.coding();
    let a = spec.alphabet_size();
    let shape_ok = |rows: usize, cols: &[usize]| rows == a && cols.iter().all(|&c| c == a);
    let cocycle = match cocycle {
        CocycleConfig::Lattice { values } => {
            if !shape_ok(values.len(), &values.iter().map(Vec::len).collect::<Vec<_>>()) {
                return Err(schema(format!("cocycle values must be {a} x {a}")));
            }
            let dim = values[0][0].len();
            if values.iter().flatten().any(|v| v.len() != dim) {
                return Err(schema("cocycle entries must share one dimension"));
            }
            CocycleSpec::lattice(&spec, dim, |i, j| values[i][j].clone()).map_err(bad)?
        }
        CocycleConfig::Real { values } => {
            if !shape_ok(values.len(), &values.iter().map(Vec::len).collect::<Vec<_>>()) {
                return Err(schema(format!("cocycle values must be {a} x {a}")));
            }
            let dim = values[0][0].len();
            if values.iter().flatten().any(|v| v.len() != dim) {
                return Err(schema("cocycle entries must share one dimension"));
            }
            CocycleSpec::real(&spec, dim, |i, j| values[i][j].clone()).map_err(bad)?
        }
    };
    let fiber = match fiber {
        FiberConfig::Rotation { alpha } => FiberAction::rotation(*alpha),
        FiberConfig::Translation { m, d, alpha } => FiberAction::translation(*m, *d, alpha.clone()).map_err(bad)?,
        FiberConfig::Automorphism { matrix } => {
            FiberAction::automorphism(IntMatrix::new(matrix).map_err(bad)?).map_err(bad)?
        }
    };
    SkewSystem::new(base, cocycle, fiber).map_err(bad)
}

impl ObservableConfig {
    fn build(&self, torus_dim: usize) -> LabResult<Observable> {
        let base = match (&self.base, &self.base_table) {
            (Some(_), Some(_)) => return Err(schema("observable: base and base_table are exclusive")),
            (Some(v), None) => BasePart::by_symbol(v),
            (None, Some(t)) => BasePart::symbolic(t).map_err(|e| schema(e.to_string()))?,
            (None, None) => BasePart::Constant(1.0),
        };
        let mut coeffs: Vec<(Vec<i64>, Complex64)> =
            self.terms.iter().map(|t| (t.k.clone(), Complex64::new(t.re, t.im))).collect();
        for c in &self.cos {
            let neg: Vec<i64> = c.k.iter().map(|x| -x).collect();
            coeffs.push((c.k.clone(), Complex64::new(c.amp / 2.0, 0.0)));
            coeffs.push((neg, Complex64::new(c.amp / 2.0, 0.0)));
        }
        if coeffs.is_empty() {
            return Err(schema("observable: no fiber terms"));
        }
        let fiber = TrigPoly::new(torus_dim, coeffs).map_err(|e| schema(e.to_string()))?;
        Observable::sum(vec![ProductTerm { base, fiber }]).map_err(|e| schema(e.to_string()))
    }
}
