//! Exact law of `tau_N`, characteristic and Laplace functions, and the
//! Gaussian / anticoncentration bounds built on them.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cocycle::{aperiodicity, drift, gk_covariance_tau, CocycleSpec};
use crate::error::{Error, Result};
use crate::lattice::{LatticeLaw, StepKernel, DEFAULT_BUDGET};
use crate::sft::GibbsMarkovMeasure;

/// Transition probabilities and integer increments in the layout used by
/// [`LatticeLaw::step`].
#[derive(Debug, Clone)]
pub struct KernelTables {
    pub states: usize,
    pub dim: usize,
    pub p: Vec<f64>,
    pub inc: Vec<i64>,
}

impl KernelTables {
    pub fn new(m: &GibbsMarkovMeasure, c: &CocycleSpec) -> Result<Self> {
        c.check_measure(m)?;
        c.require_lattice()?;
        let n = m.alphabet_size();
        let d = c.dim();
        let mut inc = vec![0i64; n * n * d];
        for (a, b) in m.spec().edges() {
            inc[(a * n + b) * d..(a * n + b + 1) * d].copy_from_slice(c.lattice_value(a, b));
        }
        Ok(KernelTables { states: n, dim: d, p: m.transition_matrix().to_vec(), inc })
    }

    pub fn kernel<'a>(&'a self, weights: Option<&'a [f64]>) -> StepKernel<'a> {
        StepKernel { p: &self.p, increments: &self.inc, weights }
    }

    /// Increments for a joint law over `s` checkpoints: coordinate block `j`
    /// accumulates `v` while `active[j]` holds.
    pub fn joint_increments(&self, active: &[bool]) -> Vec<i64> {
        let n2 = self.states * self.states;
        let d = self.dim;
        let mut out = Vec::with_capacity(n2 * d * active.len());
        for i in 0..n2 {
            for &on in active {
                for k in 0..d {
                    out.push(if on { self.inc[i * d + k] } else { 0 });
                }
            }
        }
        out
    }
}

/// Law of `tau_N` under the stationary measure, resolved by end state.
#[derive(Debug, Clone, PartialEq)]
pub struct TauDistribution {
    n: usize,
    drift: Vec<f64>,
    law: LatticeLaw,
}

impl TauDistribution {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn drift(&self) -> &[f64] {
        &self.drift
    }

    /// Mass by `(end state, z)`.
    pub fn law(&self) -> &LatticeLaw {
        &self.law
    }

    pub fn total_mass(&self) -> f64 {
        self.law.total_mass()
    }

    pub fn pruned_mass(&self) -> f64 {
        self.law.pruned_mass()
    }

    /// `mu(tau_N = z)`.
    pub fn mass_at(&self, z: &[i64]) -> f64 {
        self.law.marginal_at(z)
    }

    /// Nonzero `(z, mass)` pairs of the marginal law.
    pub fn support(&self) -> Vec<(Vec<i64>, f64)> {
        self.law.support()
    }

    /// `D_N = N mu(tau)` when it is a lattice point.
    pub fn integral_centre(&self) -> Option<Vec<i64>> {
        self.drift
            .iter()
            .map(|&mu| {
                let x = mu * self.n as f64;
                let r = x.round();
                ((x - r).abs() < 1e-9).then_some(r as i64)
            })
            .collect()
    }
}

pub fn tau_dist(m: &GibbsMarkovMeasure, c: &CocycleSpec, n: usize) -> Result<TauDistribution> {
    tau_dist_budget(m, c, n, DEFAULT_BUDGET)
}

pub fn tau_dist_budget(m: &GibbsMarkovMeasure, c: &CocycleSpec, n: usize, budget: u64) -> Result<TauDistribution> {
    Ok(tau_dist_sweep(m, c, &[n], budget)?.pop().expect("one time requested"))
}

/// Laws at every requested time from a single forward pass.
pub fn tau_dist_sweep(m: &GibbsMarkovMeasure, c: &CocycleSpec, times: &[usize], budget: u64) -> Result<Vec<TauDistribution>> {
    let tables = KernelTables::new(m, c)?;
    let mu = drift(m, c)?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by_key(|&i| times[i]);
    let mut out: Vec<Option<TauDistribution>> = vec![None; times.len()];
    let mut law = LatticeLaw::start(m.pi(), c.dim());
    let mut t = 0;
    for i in order {
        while t < times[i] {
            law.step(&tables.kernel(None), budget).map_err(|e| project(e, t, times[i], c.dim()))?;
            t += 1;
        }
        out[i] = Some(TauDistribution { n: t, drift: mu.clone(), law: law.clone() });
    }
    Ok(out.into_iter().map(|d| d.expect("filled")).collect())
}

/// Rescales a budget failure at step `t` into an estimate for the full run.
fn project(e: Error, t: usize, target: usize, dim: usize) -> Error {
    match e {
        Error::BudgetExceeded { required, budget } => {
            let growth = (target as f64 / (t + 1) as f64).powf(dim as f64 / 2.0).max(1.0);
            Error::BudgetExceeded { required: (required as f64 * growth).ceil() as u64, budget }
        }
        other => other,
    }
}

/// Joint law of `(tau_{n_1}, ..., tau_{n_s})`, coordinates stacked in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTauDistribution {
    times: Vec<usize>,
    dim: usize,
    law: LatticeLaw,
}

impl JointTauDistribution {
    pub fn times(&self) -> &[usize] {
        &self.times
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn law(&self) -> &LatticeLaw {
        &self.law
    }

    pub fn total_mass(&self) -> f64 {
        self.law.total_mass()
    }

    /// Nonzero `((z_1, ..., z_s) stacked, mass)` pairs.
    pub fn support(&self) -> Vec<(Vec<i64>, f64)> {
        self.law.support()
    }

    /// Marginal law of `tau_{n_j}`.
    pub fn marginal(&self, j: usize) -> Vec<(Vec<i64>, f64)> {
        let d = self.dim;
        accumulate(self.support().into_iter().map(|(z, m)| (z[j * d..(j + 1) * d].to_vec(), m)))
    }

    /// Law of `tau_{n_j} - tau_{n_i}`.
    pub fn increment(&self, i: usize, j: usize) -> Vec<(Vec<i64>, f64)> {
        let d = self.dim;
        accumulate(self.support().into_iter().map(|(z, m)| {
            ((0..d).map(|k| z[j * d + k] - z[i * d + k]).collect(), m)
        }))
    }
}

fn accumulate(it: impl Iterator<Item = (Vec<i64>, f64)>) -> Vec<(Vec<i64>, f64)> {
    let mut map = std::collections::BTreeMap::new();
    for (z, m) in it {
        *map.entry(z).or_insert(0.0) += m;
    }
    map.into_iter().collect()
}

pub fn joint_tau_dist(m: &GibbsMarkovMeasure, c: &CocycleSpec, times: &[usize]) -> Result<JointTauDistribution> {
    joint_tau_dist_budget(m, c, times, DEFAULT_BUDGET)
}

pub fn joint_tau_dist_budget(
    m: &GibbsMarkovMeasure,
    c: &CocycleSpec,
    times: &[usize],
    budget: u64,
) -> Result<JointTauDistribution> {
    if times.is_empty() || times.len() > 3 {
        return Err(Error::OutOfRange("number of joint times (1 to 3)".into()));
    }
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Invalid("joint times must be nondecreasing".into()));
    }
    let tables = KernelTables::new(m, c)?;
    let s = times.len();
    let mut law = LatticeLaw::start(m.pi(), s * c.dim());
    let last = times[s - 1];
    for t in 0..last {
        let active: Vec<bool> = times.iter().map(|&n| t < n).collect();
        let inc = tables.joint_increments(&active);
        law.step(&StepKernel { p: &tables.p, increments: &inc, weights: None }, budget)
            .map_err(|e| project(e, t, last, s * c.dim()))?;
    }
    Ok(JointTauDistribution { times: times.to_vec(), dim: c.dim(), law })
}

fn twisted_power(m: &GibbsMarkovMeasure, n: usize, weight: impl Fn(usize, usize) -> Complex64) -> Complex64 {
    let a = m.alphabet_size();
    let mut l = vec![Complex64::new(0.0, 0.0); a * a];
    for (x, y) in m.spec().edges() {
        l[x * a + y] = weight(x, y) * m.p(x, y);
    }
    let mut u: Vec<Complex64> = m.pi().iter().map(|&p| Complex64::new(p, 0.0)).collect();
    let mut next = vec![Complex64::new(0.0, 0.0); a];
    for _ in 0..n {
        next.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for x in 0..a {
            for y in 0..a {
                next[y] += u[x] * l[x * a + y];
            }
        }
        std::mem::swap(&mut u, &mut next);
    }
    u.iter().sum()
}

fn dot(xi: &[f64], v: &[f64]) -> f64 {
    xi.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn check_xi(c: &CocycleSpec, xi: &[f64]) -> Result<()> {
    if xi.len() != c.dim() {
        return Err(Error::Invalid(format!("frequency has dimension {}, cocycle has {}", xi.len(), c.dim())));
    }
    Ok(())
}

/// `Phi_N(xi) = mu(exp(i <xi, tau_N>))` via the twisted transfer matrix.
pub fn char_fn(m: &GibbsMarkovMeasure, c: &CocycleSpec, xi: &[f64], n: usize) -> Result<Complex64> {
    c.check_measure(m)?;
    check_xi(c, xi)?;
    Ok(twisted_power(m, n, |a, b| Complex64::from_polar(1.0, dot(xi, c.value(a, b)))))
}

/// `mu(exp(<xi, tau_N>))`.
pub fn laplace_fn(m: &GibbsMarkovMeasure, c: &CocycleSpec, xi: &[f64], n: usize) -> Result<f64> {
    Ok(log_laplace_fn(m, c, xi, n, false)?.exp())
}

/// `log mu(exp(<xi, tau_N - N mu(tau)>))` if `centred`, else without centring.
/// Renormalises every step so large `N |xi|` cannot overflow.
pub fn log_laplace_fn(m: &GibbsMarkovMeasure, c: &CocycleSpec, xi: &[f64], n: usize, centred: bool) -> Result<f64> {
    c.check_measure(m)?;
    check_xi(c, xi)?;
    let shift = if centred { dot(xi, &drift(m, c)?) } else { 0.0 };
    let a = m.alphabet_size();
    let mut l = vec![0.0; a * a];
    for (x, y) in m.spec().edges() {
        l[x * a + y] = m.p(x, y) * (dot(xi, c.value(x, y)) - shift).exp();
    }
    let mut u = m.pi().to_vec();
    let mut log_scale = 0.0;
    for _ in 0..n {
        let mut next = vec![0.0; a];
        for x in 0..a {
            for y in 0..a {
                next[y] += u[x] * l[x * a + y];
            }
        }
        let s: f64 = next.iter().sum();
        log_scale += s.ln();
        u = next.into_iter().map(|v| v / s).collect();
    }
    Ok(log_scale + u.iter().sum::<f64>().ln())
}

/// Default radius for Gaussian bound grids: `1 / (4 max |v|)`.
pub fn default_delta0(m: &GibbsMarkovMeasure, c: &CocycleSpec) -> f64 {
    let r = c.max_norm(m.spec());
    if r == 0.0 {
        1.0
    } else {
        0.25 / r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBoundFit {
    /// `inf -log|Phi_N(xi)| / (N |xi|^2)` over the grid.
    pub c1_fourier: f64,
    /// `sup log mu(exp <xi, tau_N - N mu>) / (N |xi|^2)` over the grid.
    pub c1_laplace: f64,
    pub delta0: f64,
    /// Set when the Fourier constant vanishes (no Gaussian decay).
    pub degenerate: bool,
}

pub fn gaussian_bound_fit(
    m: &GibbsMarkovMeasure,
    c: &CocycleSpec,
    xi_grid: &[Vec<f64>],
    n_grid: &[usize],
    delta0: Option<f64>,
) -> Result<GaussianBoundFit> {
    let delta0 = delta0.unwrap_or_else(|| default_delta0(m, c));
    if xi_grid.is_empty() || n_grid.is_empty() {
        return Err(Error::TooFewPoints("empty frequency or time grid".into()));
    }
    let mut fourier = f64::INFINITY;
    let mut laplace = f64::NEG_INFINITY;
    for xi in xi_grid {
        let r2: f64 = xi.iter().map(|x| x * x).sum();
        if r2 == 0.0 || r2.sqrt() > delta0 {
            return Err(Error::OutOfRange(format!("frequency {xi:?} (must satisfy 0 < |xi| <= {delta0})")));
        }
        for &n in n_grid {
            if n == 0 {
                return Err(Error::OutOfRange("time 0 in Gaussian bound grid".into()));
            }
            let scale = n as f64 * r2;
            let phi = char_fn(m, c, xi, n)?.norm();
            fourier = fourier.min(-phi.ln() / scale);
            laplace = laplace.max(log_laplace_fn(m, c, xi, n, true)? / scale);
        }
    }
    let fourier = fourier.max(0.0);
    Ok(GaussianBoundFit { c1_fourier: fourier, c1_laplace: laplace, delta0, degenerate: fourier <= 1e-12 })
}

/// Symmetric 1-d grid `±delta0 * k / count`, `k = 1..count`.
pub fn symmetric_grid(delta0: f64, count: usize) -> Vec<Vec<f64>> {
    (1..=count)
        .flat_map(|k| {
            let x = delta0 * k as f64 / count as f64;
            [vec![-x], vec![x]]
        })
        .collect()
}

/// Scaling data for local limit comparisons: `L_N = s sqrt(N)` with
/// `s = det(Sigma)^(1/(2d))`, `D_N = N mu(tau)` and density `N(0, Sigma / s^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LLTNormalization {
    pub dim: usize,
    /// Row-major Green-Kubo covariance of `tau`.
    pub covariance: Vec<f64>,
    pub scale: f64,
    pub drift: Vec<f64>,
    /// Covolume of the lattice generated by `tau_N - tau_N'` differences.
    pub lattice_cell_volume: f64,
    precision: Vec<f64>,
}

impl LLTNormalization {
    pub fn new(m: &GibbsMarkovMeasure, c: &CocycleSpec) -> Result<Self> {
        let sigma = gk_covariance_tau(m, c)?;
        let d = c.dim();
        let det = sigma.determinant();
        let scale = det.powf(1.0 / (2.0 * d as f64));
        let cell = if c.is_lattice() {
            aperiodicity(m.spec(), c)?
                .cell_volume()
                .ok_or_else(|| Error::Unsupported("cocycle generates a lower-rank lattice".into()))?
        } else {
            1.0
        };
        let normalised: DMatrix<f64> = &sigma / (scale * scale);
        let precision = normalised
            .try_inverse()
            .ok_or_else(|| Error::Invalid("singular covariance".into()))?;
        Ok(LLTNormalization {
            dim: d,
            covariance: sigma.as_slice().to_vec(),
            scale,
            drift: drift(m, c)?,
            lattice_cell_volume: cell,
            precision: precision.as_slice().to_vec(),
        })
    }

    pub fn l_n(&self, n: usize) -> f64 {
        self.scale * (n as f64).sqrt()
    }

    pub fn d_n(&self, n: usize) -> Vec<f64> {
        self.drift.iter().map(|m| m * n as f64).collect()
    }

    /// Density of `N(0, Sigma / s^2)`; its determinant is one.
    pub fn density(&self, z: &[f64]) -> f64 {
        let d = self.dim;
        let mut q = 0.0;
        for i in 0..d {
            for j in 0..d {
                q += z[i] * self.precision[i * d + j] * z[j];
            }
        }
        (2.0 * std::f64::consts::PI).powf(-(d as f64) / 2.0) * (-0.5 * q).exp()
    }
}

/// `sup` over half-open integer unit cubes of `mu(tau_N in C) L_N^d`.
pub fn anticoncentration_sup(dist: &TauDistribution, norm: &LLTNormalization) -> f64 {
    let peak = dist.law.marginal().into_iter().fold(0.0, f64::max);
    peak * norm.l_n(dist.n).powi(dist.dim() as i32)
}

/// Exact `mu(|tau_N / N - mu(tau)|_inf >= eps)` from the law.
pub fn ld_tail(dist: &TauDistribution, eps: f64) -> f64 {
    let n = dist.n as f64;
    let tail: Vec<f64> = dist
        .support()
        .into_iter()
        .filter(|(z, _)| {
            z.iter()
                .zip(&dist.drift)
                .map(|(&zi, mu)| (zi as f64 / n - mu).abs())
                .fold(0.0, f64::max)
                >= eps - 1e-12
        })
        .map(|(_, m)| m)
        .collect();
    crate::par::pairwise_sum(&tail)
}

/// Gaussian envelope `mu(tau_N in C_z) <= C3 N^{-d/2} exp(-c3 |z - N mu|^2 / N)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub c3_const: f64,
    pub c3_rate: f64,
    pub dim: usize,
    pub drift: Vec<f64>,
    pub points: usize,
    pub violations: usize,
}

impl Envelope {
    pub fn bound(&self, n: usize, z: &[i64]) -> f64 {
        if n == 0 {
            return self.c3_const;
        }
        let nf = n as f64;
        let r2: f64 = z.iter().zip(&self.drift).map(|(&zi, mu)| (zi as f64 - nf * mu).powi(2)).sum();
        self.c3_const * nf.powf(-(self.dim as f64) / 2.0) * (-self.c3_rate * r2 / nf).exp()
    }
}

/// Envelope point `(N, |z - N mu|^2 / N, mass N^{d/2})`.
fn envelope_points(dists: &[TauDistribution]) -> Vec<(f64, f64)> {
    let mut pts = Vec::new();
    for dist in dists {
        let nf = dist.n as f64;
        let norm = nf.powf(dist.dim() as f64 / 2.0);
        for (z, m) in dist.support() {
            if m > 0.0 {
                let r2: f64 = z.iter().zip(&dist.drift).map(|(&zi, mu)| (zi as f64 - nf * mu).powi(2)).sum();
                pts.push((r2 / nf, m * norm));
            }
        }
    }
    pts
}

fn envelope_const(pts: &[(f64, f64)], c: f64) -> f64 {
    pts.iter().map(|&(x, y)| y * (c * x).exp()).fold(0.0, f64::max)
}

/// Fits the envelope over every computed `(N, z)`.
///
/// `c3` is the largest rate at which the required constant is at most twice
/// the `c3 = 0` constant (anticoncentration); `C3` is the constant at that rate.
pub fn acld_envelope_fit(m: &GibbsMarkovMeasure, c: &CocycleSpec, n_grid: &[usize]) -> Result<Envelope> {
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::TooFewPoints("envelope grid needs positive times".into()));
    }
    let dists = tau_dist_sweep(m, c, n_grid, DEFAULT_BUDGET)?;
    let pts = envelope_points(&dists);
    let base = envelope_const(&pts, 0.0);
    let target = 2.0 * base;
    let (mut lo, mut hi) = (0.0, 1.0);
    while envelope_const(&pts, hi) <= target && hi < 1e6 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if envelope_const(&pts, mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let env = Envelope {
        c3_const: envelope_const(&pts, lo),
        c3_rate: lo,
        dim: c.dim(),
        drift: drift(m, c)?,
        points: pts.len(),
        violations: 0,
    };
    let violations = dists
        .iter()
        .flat_map(|d| d.support().into_iter().map(move |(z, mass)| (d.n, z, mass)))
        .filter(|(n, z, mass)| *mass > env.bound(*n, z) * (1.0 + 1e-12))
        .count();
    Ok(Envelope { violations, ..env })
}

/// Result of checking `mu(tau_{n1} in C_{z1}, tau_{n2} in C_{z2}) <=
/// K E(n1, z1) E(n2 - n1, z2 - z1)` over all `0 < n1 < n2 <= max_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductBoundReport {
    pub max_n: usize,
    pub pairs: usize,
    /// Smallest global constant that works, i.e. the largest observed ratio.
    pub constant: f64,
    /// `1 / min pi`, the constant the Markov property guarantees.
    pub markov_constant: f64,
    pub holds: bool,
}

/// Order-2 product bound, evaluated through the Markov decomposition
/// `joint(z1, z2) = sum_a mu(tau_{n1} = z1, x_{n1} = a) P_a(tau_{n2-n1} = z2 - z1)`.
pub fn pair_product_bound(
    m: &GibbsMarkovMeasure,
    c: &CocycleSpec,
    max_n: usize,
    env: &Envelope,
) -> Result<ProductBoundReport> {
    let tables = KernelTables::new(m, c)?;
    let a = m.alphabet_size();
    let times: Vec<usize> = (1..max_n).collect();
    let forward = tau_dist_sweep(m, c, &times, DEFAULT_BUDGET)?;
    // conditional laws started from each state, for every gap
    let mut from_state: Vec<Vec<LatticeLaw>> = Vec::with_capacity(a);
    for s in 0..a {
        let mut init = vec![0.0; a];
        init[s] = 1.0;
        let mut law = LatticeLaw::start(&init, c.dim());
        let mut laws = Vec::with_capacity(max_n);
        for _ in 1..max_n {
            law.step(&tables.kernel(None), DEFAULT_BUDGET)?;
            laws.push(law.clone());
        }
        from_state.push(laws);
    }
    let gap_support: Vec<Vec<(Vec<i64>, Vec<f64>)>> = (1..max_n)
        .map(|k| {
            let mut zs: std::collections::BTreeSet<Vec<i64>> = std::collections::BTreeSet::new();
            for laws in &from_state {
                zs.extend(laws[k - 1].support().into_iter().map(|(z, _)| z));
            }
            zs.into_iter()
                .map(|z| {
                    let per_start: Vec<f64> = (0..a).map(|s| from_state[s][k - 1].marginal_at(&z)).collect();
                    (z, per_start)
                })
                .collect()
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for n1 in 1..max_n {
        let d1 = &forward[n1 - 1];
        let cells1: Vec<(Vec<i64>, Vec<f64>)> = d1
            .support()
            .into_iter()
            .map(|(z, _)| {
                let r = d1.law.restrict_at(&z);
                (z, r)
            })
            .collect();
        for n2 in n1 + 1..=max_n {
            let k = n2 - n1;
            pairs += 1;
            for (z1, r1) in &cells1 {
                let e1 = env.bound(n1, z1);
                for (dz, per_start) in &gap_support[k - 1] {
                    let joint: f64 = r1.iter().zip(per_start).map(|(x, y)| x * y).sum();
                    if joint > 0.0 {
                        worst = worst.max(joint / (e1 * env.bound(k, dz)));
                    }
                }
            }
        }
    }
    let markov_constant = 1.0 / m.pi().iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ProductBoundReport {
        max_n,
        pairs,
        constant: worst,
        markov_constant,
        holds: worst.is_finite() && worst <= markov_constant * (1.0 + 1e-9),
    })
}
