//! Monte Carlo estimators over sampled orbits: correlations, CLT
//! diagnostics, growth of Birkhoff sums and deviation exponents.
//!
//! Sample `i` always draws from `rng::stream(seed, purpose, i)` and partial
//! results are merged in sample order, so reports do not depend on the
//! worker count.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::correlations::{exact_correlation, CorrelationSeries};
use crate::error::{Error, Result};
use crate::fit::{decay_fit, linear_fit, loglog_slope, DecayFit, DecayModel};
use crate::par::{map_indexed, pairwise_sum, Workers};
use crate::rng::{purpose, stream};
use crate::sft::MarkovSampler;
use crate::skew::{BaseSystem, Observable, SkewSystem};
use crate::torus::{FastEval, TrigPoly};

/// Batches used for batch-means standard errors.
pub const BATCHES: usize = 32;

/// Variance below which a CLT experiment is reported as degenerate.
pub const DEGENERATE_VARIANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub samples: usize,
    pub seed: u64,
    /// `0` for the default pool, `1` for sequential.
    #[serde(default)]
    pub workers: usize,
}

impl McConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        McConfig { samples, seed, workers: 0 }
    }

    pub fn workers(&self) -> Workers {
        Workers(self.workers)
    }

    fn check(&self) -> Result<()> {
        if self.samples < BATCHES {
            return Err(Error::Invalid(format!("need at least {BATCHES} samples")));
        }
        Ok(())
    }

    /// Contiguous sample ranges; fixed by the sample count alone.
    fn chunks(&self) -> Vec<std::ops::Range<usize>> {
        let count = self.samples.clamp(1, 256);
        (0..count)
            .map(|c| (c * self.samples / count)..((c + 1) * self.samples / count))
            .collect()
    }
}

/// Real part of a trigonometric polynomial, conjugate pairs folded together.
#[derive(Debug, Clone)]
enum FiberEval {
    Fast(FastEval),
    Folded { constant: f64, terms: Vec<(Vec<i64>, f64, f64)> },
}

impl FiberEval {
    fn new(p: &TrigPoly) -> Self {
        let fast = FastEval::new(p);
        if matches!(fast, FastEval::Table(_)) || !p.is_real() {
            return FiberEval::Fast(fast);
        }
        let zero = vec![0; p.dim()];
        let mut terms = Vec::new();
        for (k, b) in p.terms() {
            if *k > zero {
                terms.push((k.clone(), 2.0 * b.re, -2.0 * b.im));
            }
        }
        FiberEval::Folded { constant: p.coefficient(&zero).re, terms }
    }

    #[inline]
    fn eval(&self, y: &[u64]) -> f64 {
        match self {
            FiberEval::Fast(f) => f.eval(y),
            FiberEval::Folded { constant, terms } => {
                let mut acc = *constant;
                for (k, c, s) in terms {
                    let ph = k.iter().zip(y).fold(0u64, |a, (&ki, &yi)| a.wrapping_add((ki as u64).wrapping_mul(yi)));
                    let angle = (ph as i64) as f64 * (std::f64::consts::TAU / 18_446_744_073_709_551_616.0);
                    let (sn, cs) = angle.sin_cos();
                    acc += c * cs + s * sn;
                }
                acc
            }
        }
    }
}

/// Real observable compiled for fast orbit evaluation.
#[derive(Debug, Clone)]
struct CompiledObservable {
    alphabet: usize,
    terms: Vec<(Vec<f64>, FiberEval)>,
}

impl CompiledObservable {
    fn new(h: &Observable, alphabet: usize) -> Result<Self> {
        let terms = h
            .terms()
            .iter()
            .map(|t| Ok((t.base.table(alphabet)?, FiberEval::new(&t.fiber))))
            .collect::<Result<Vec<_>>>()?;
        Ok(CompiledObservable { alphabet, terms })
    }

    #[inline]
    fn eval(&self, a: usize, b: usize, y: &[u64]) -> f64 {
        let e = a * self.alphabet + b;
        self.terms.iter().map(|(tab, f)| if tab[e] == 0.0 { 0.0 } else { tab[e] * f.eval(y) }).sum()
    }
}

#[derive(Debug, Clone)]
enum BaseSim {
    Markov(MarkovSampler),
    Torus(crate::torus::IntMatrix),
}

#[derive(Debug, Clone)]
enum BaseState {
    Symbol(usize),
    Torus([u64; 2]),
}

/// Orbit simulator with the fiber move of every edge precomputed as an
/// affine map `y -> M y + s` on `(Z / 2^64)^m`.
#[derive(Debug, Clone)]
pub struct OrbitSim {
    base: BaseSim,
    alphabet: usize,
    dim: usize,
    moves: Vec<(Vec<u64>, Vec<u64>)>,
    identity: Vec<bool>,
}

impl OrbitSim {
    pub fn new(sys: &SkewSystem) -> Result<Self> {
        let alphabet = sys.cocycle.alphabet_size();
        let dim = sys.fiber.torus_dim();
        let base = match &sys.base {
            BaseSystem::Sft(m) => BaseSim::Markov(MarkovSampler::new(m)),
            BaseSystem::Doubling => BaseSim::Markov(MarkovSampler::new(&crate::sft::GibbsMarkovMeasure::uniform_full_shift(2))),
            BaseSystem::CatMap(mat) => BaseSim::Torus(mat.clone()),
        };
        let mut moves = Vec::with_capacity(alphabet * alphabet);
        let mut identity = Vec::with_capacity(alphabet * alphabet);
        for a in 0..alphabet {
            for b in 0..alphabet {
                let zero = vec![0u64; dim];
                let (shift, cols) = if sys.cocycle.is_lattice() {
                    let t = sys.cocycle.lattice_value(a, b);
                    let shift = sys.fiber.apply_lattice(&zero, t);
                    let cols: Vec<Vec<u64>> = (0..dim)
                        .map(|i| {
                            let mut e = zero.clone();
                            e[i] = 1;
                            sys.fiber.apply_lattice(&e, t)
                        })
                        .collect();
                    (shift, cols)
                } else {
                    let t = sys.cocycle.value(a, b);
                    let shift = sys.fiber.apply(&zero, t)?;
                    let cols: Vec<Vec<u64>> = (0..dim)
                        .map(|i| {
                            let mut e = zero.clone();
                            e[i] = 1;
                            sys.fiber.apply(&e, t)
                        })
                        .collect::<Result<_>>()?;
                    (shift, cols)
                };
                // matrix entries M[r][i] = col_i[r] - shift[r]
                let mut mat = vec![0u64; dim * dim];
                for (i, col) in cols.iter().enumerate() {
                    for r in 0..dim {
                        mat[r * dim + i] = col[r].wrapping_sub(shift[r]);
                    }
                }
                let is_id = (0..dim).all(|r| (0..dim).all(|i| mat[r * dim + i] == u64::from(r == i)));
                identity.push(is_id);
                moves.push((mat, shift));
            }
        }
        Ok(OrbitSim { base, alphabet, dim, moves, identity })
    }

    fn initial<R: Rng>(&self, rng: &mut R) -> (BaseState, Vec<u64>) {
        let base = match &self.base {
            BaseSim::Markov(s) => BaseState::Symbol(s.initial(rng)),
            BaseSim::Torus(_) => BaseState::Torus([rng.gen(), rng.gen()]),
        };
        let y = (0..self.dim).map(|_| rng.gen()).collect();
        (base, y)
    }

    /// Advances the base and returns the edge `(a, b)` just traversed.
    #[inline]
    fn step_base<R: Rng>(&self, rng: &mut R, state: &mut BaseState) -> (usize, usize) {
        match (&self.base, state) {
            (BaseSim::Markov(s), BaseState::Symbol(a)) => {
                let b = s.next(rng, *a);
                let e = (*a, b);
                *a = b;
                e
            }
            (BaseSim::Torus(mat), BaseState::Torus(x)) => {
                let next = mat.apply_wrapping(&x[..]);
                let e = (BaseSystem::quadrant(&x[..]), BaseSystem::quadrant(&next));
                *x = [next[0], next[1]];
                e
            }
            _ => unreachable!("state built by initial()"),
        }
    }

    #[inline]
    fn move_fiber(&self, a: usize, b: usize, y: &mut [u64], scratch: &mut [u64]) {
        let e = a * self.alphabet + b;
        let (mat, shift) = &self.moves[e];
        if self.identity[e] {
            for (yi, s) in y.iter_mut().zip(shift) {
                *yi = yi.wrapping_add(*s);
            }
            return;
        }
        let d = self.dim;
        for r in 0..d {
            let mut acc = shift[r];
            for i in 0..d {
                acc = acc.wrapping_add(mat[r * d + i].wrapping_mul(y[i]));
            }
            scratch[r] = acc;
        }
        y.copy_from_slice(&scratch[..d]);
    }

    /// Runs one orbit for `steps` steps, calling `visit(n, a, b, y)` with the
    /// edge `x_n x_{n+1}` and fiber point `y_n` before moving.
    fn run<R: Rng>(&self, rng: &mut R, steps: usize, mut visit: impl FnMut(usize, usize, usize, &[u64])) {
        let (mut base, mut y) = self.initial(rng);
        let mut scratch = vec![0u64; self.dim];
        for n in 0..steps {
            let (a, b) = self.step_base(rng, &mut base);
            visit(n, a, b, &y);
            self.move_fiber(a, b, &mut y, &mut scratch);
        }
    }
}

fn compile(sys: &SkewSystem, hs: &[&Observable]) -> Result<(OrbitSim, Vec<CompiledObservable>)> {
    let sim = OrbitSim::new(sys)?;
    let compiled = hs
        .iter()
        .map(|h| {
            sys.check_observable(h)?;
            if !h.is_real() {
                return Err(Error::Unsupported("Monte Carlo estimators need real observables".into()));
            }
            CompiledObservable::new(h, sim.alphabet)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((sim, compiled))
}

/// Batch-means standard error of the mean of `values`.
pub fn batch_means_stderr(values: &[f64], batches: usize) -> f64 {
    let n = values.len();
    let b = batches.min(n).max(2);
    let means: Vec<f64> = (0..b)
        .map(|i| {
            let chunk = &values[i * n / b..(i + 1) * n / b];
            pairwise_sum(chunk) / chunk.len() as f64
        })
        .collect();
    let grand = pairwise_sum(&means) / b as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub n: usize,
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
}

/// Estimates `zeta(H_1 (H_2 o F^N)) - zeta(H_1) zeta(H_2)` from independent
/// orbits started at `zeta`-distributed points.
pub fn mc_correlation(sys: &SkewSystem, h1: &Observable, h2: &Observable, n: usize, cfg: &McConfig) -> Result<McEstimate> {
    cfg.check()?;
    let (sim, obs) = compile(sys, &[h1, h2])?;
    let chunks = cfg.chunks();
    let parts = map_indexed(chunks.len(), cfg.workers(), |c| {
        chunks[c]
            .clone()
            .map(|i| {
                let mut rng = stream(cfg.seed, purpose::ORBIT, i as u64);
                let (mut x, mut y) = (0.0, 0.0);
                sim.run(&mut rng, n + 1, |t, a, b, fib| {
                    if t == 0 {
                        x = obs[0].eval(a, b, fib);
                    }
                    if t == n {
                        y = obs[1].eval(a, b, fib);
                    }
                });
                (x, y)
            })
            .collect::<Vec<_>>()
    });
    let pairs: Vec<(f64, f64)> = parts.into_iter().flatten().collect();
    let count = pairs.len() as f64;
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let xy: Vec<f64> = pairs.iter().map(|p| p.0 * p.1).collect();
    let (mx, my) = (pairwise_sum(&xs) / count, pairwise_sum(&ys) / count);
    let estimate = pairwise_sum(&xy) / count - mx * my;
    // influence function of the plug-in estimator
    let influence: Vec<f64> = pairs.iter().map(|(x, y)| (x - mx) * (y - my)).collect();
    Ok(McEstimate { n, estimate, stderr: batch_means_stderr(&influence, BATCHES), samples: cfg.samples })
}

/// Sample moments at one checkpoint `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffRow {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    /// Standardized third moment.
    pub m3: f64,
    /// Standardized fourth moment.
    pub m4: f64,
    /// Quantiles 0.5, 0.9, 0.99 of `max_{n <= N} |S_n|`.
    pub max_quantiles: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffReport {
    pub rows: Vec<BirkhoffRow>,
    /// Log-log slope of the second moment of `S_N` against `N`.
    pub growth_exponent: Option<f64>,
}

fn moments(values: &[f64]) -> (f64, f64, f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let c: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let m2 = pairwise_sum(&c.iter().map(|x| x * x).collect::<Vec<_>>()) / n;
    let m3 = pairwise_sum(&c.iter().map(|x| x * x * x).collect::<Vec<_>>()) / n;
    let m4 = pairwise_sum(&c.iter().map(|x| (x * x) * (x * x)).collect::<Vec<_>>()) / n;
    if m2 == 0.0 {
        return (mean, 0.0, 0.0, 1.0);
    }
    (mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2))
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Per-sample `(S_N, max_{n<=N} |S_n|)` at each checkpoint, in sample order.
fn birkhoff_samples(
    sim: &OrbitSim,
    h: &CompiledObservable,
    shift: f64,
    checkpoints: &[usize],
    cfg: &McConfig,
    stream_purpose: u64,
) -> Vec<Vec<(f64, f64)>> {
    let chunks = cfg.chunks();
    let steps = checkpoints.iter().copied().max().unwrap_or(0);
    let parts = map_indexed(chunks.len(), cfg.workers(), |c| {
        chunks[c]
            .clone()
            .map(|i| {
                let mut rng = stream(cfg.seed, stream_purpose, i as u64);
                let mut out = Vec::with_capacity(checkpoints.len());
                let mut s = 0.0;
                let mut mx: f64 = 0.0;
                let mut next = 0;
                sim.run(&mut rng, steps, |t, a, b, y| {
                    s += h.eval(a, b, y) - shift;
                    mx = mx.max(s.abs());
                    while next < checkpoints.len() && checkpoints[next] == t + 1 {
                        out.push((s, mx));
                        next += 1;
                    }
                });
                out
            })
            .collect::<Vec<_>>()
    });
    parts.into_iter().flatten().collect()
}

fn birkhoff_report(samples: &[Vec<(f64, f64)>], checkpoints: &[usize]) -> BirkhoffReport {
    let rows: Vec<BirkhoffRow> = checkpoints
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let s: Vec<f64> = samples.iter().map(|v| v[j].0).collect();
            let mut mx: Vec<f64> = samples.iter().map(|v| v[j].1).collect();
            mx.sort_by(f64::total_cmp);
            let (mean, variance, m3, m4) = moments(&s);
            BirkhoffRow {
                n,
                mean,
                variance,
                m3,
                m4,
                max_quantiles: [quantile(&mx, 0.5), quantile(&mx, 0.9), quantile(&mx, 0.99)],
            }
        })
        .collect();
    let growth_exponent = if rows.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.variance + r.mean * r.mean).collect();
        loglog_slope(&x, &y).ok().map(|(s, _)| s)
    } else {
        None
    };
    BirkhoffReport { rows, growth_exponent }
}

/// Dyadic checkpoints `2^k <= n_max`, plus `n_max` itself.
pub fn dyadic_grid(n_max: usize) -> Vec<usize> {
    let mut g: Vec<usize> = (0..usize::BITS).map(|k| 1usize << k).take_while(|&n| n <= n_max).collect();
    if g.last() != Some(&n_max) && n_max > 0 {
        g.push(n_max);
    }
    g
}

/// Normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov-Smirnov distance between a sample and `Normal(0, variance)`.
pub fn ks_normal(sample: &[f64], variance: f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let sd = variance.sqrt();
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x / sd);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub n: usize,
    pub birkhoff: BirkhoffReport,
    /// Sample variance of `Sigma_N / sqrt(N)`.
    pub variance: f64,
    /// Standardized third and fourth moments of `Sigma_N`.
    pub m3: f64,
    pub m4: f64,
    /// Reference `sigma^2` (Green-Kubo), when supplied.
    pub sigma2: Option<f64>,
    pub variance_ratio: Option<f64>,
    /// KS distance to `Normal(0, sigma^2)`, or to the fitted normal without a reference.
    pub ks_distance: Option<f64>,
    /// KS distance to `Normal(0, sample variance)`.
    pub ks_fitted: Option<f64>,
    pub degenerate: bool,
}

/// Distribution of `Sigma_N(H) / sqrt(N)` over sampled orbits.
///
/// `H` is centred by its exact mean first when the base is symbolic.
pub fn clt_experiment(sys: &SkewSystem, h: &Observable, n: usize, sigma2: Option<f64>, cfg: &McConfig) -> Result<CltReport> {
    cfg.check()?;
    if n == 0 {
        return Err(Error::Invalid("CLT experiment needs N >= 1".into()));
    }
    let (sim, obs) = compile(sys, &[h])?;
    let shift = match sys.markov() {
        Some(m) => h.mean(&m)?.re,
        None => 0.0,
    };
    let checkpoints = dyadic_grid(n);
    let samples = birkhoff_samples(&sim, &obs[0], shift, &checkpoints, cfg, purpose::ORBIT);
    let birkhoff = birkhoff_report(&samples, &checkpoints);
    let last = checkpoints.len() - 1;
    let scaled: Vec<f64> = samples.iter().map(|v| v[last].0 / (n as f64).sqrt()).collect();
    let (_, variance, m3, m4) = moments(&scaled);
    let degenerate = variance < DEGENERATE_VARIANCE;
    let (ks_distance, ks_fitted) = if degenerate {
        (None, None)
    } else {
        let fitted = ks_normal(&scaled, variance);
        let reference = sigma2.filter(|s| *s > DEGENERATE_VARIANCE).map(|s| ks_normal(&scaled, s));
        (Some(reference.unwrap_or(fitted)), Some(fitted))
    };
    Ok(CltReport {
        n,
        birkhoff,
        variance,
        m3,
        m4,
        sigma2,
        variance_ratio: sigma2.map(|s| variance / s),
        ks_distance,
        ks_fitted,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S2Growth {
    pub n_grid: Vec<usize>,
    /// Exact `E(S_N^2)` at each grid point.
    pub second_moment: Vec<f64>,
    /// Fitted growth exponent `2 rho*`.
    pub exponent: f64,
    pub stderr: f64,
    pub rho_star: f64,
    /// Deviation exponent `max(rho*, 1/2)`.
    pub alpha: f64,
}

/// `E(S_N^2) = N rho(0) + 2 sum_{n=1}^{N-1} (N - n) Re rho(n)` from an exact
/// series, and its log-log growth exponent over `n_grid`.
pub fn exact_s2_growth(series: &CorrelationSeries, n_grid: &[usize]) -> Result<S2Growth> {
    let n_max = n_grid.iter().copied().max().unwrap_or(0);
    let consecutive = series.times.iter().enumerate().all(|(i, &t)| t == i);
    if !consecutive || series.times.len() < n_max || n_grid.len() < 2 || n_grid.contains(&0) {
        return Err(Error::ShortPrefix { need: n_max, have: series.times.len() });
    }
    let re: Vec<f64> = series.values.iter().map(|z| z.re).collect();
    // prefix sums of rho(n) and n rho(n) give every grid point in O(1)
    let mut p0 = vec![0.0; re.len() + 1];
    let mut p1 = vec![0.0; re.len() + 1];
    for (i, r) in re.iter().enumerate() {
        p0[i + 1] = p0[i] + r;
        p1[i + 1] = p1[i] + i as f64 * r;
    }
    let second_moment: Vec<f64> = n_grid
        .iter()
        .map(|&n| {
            let nf = n as f64;
            let s0 = p0[n] - p0[1];
            let s1 = p1[n] - p1[1];
            nf * re[0] + 2.0 * (nf * s0 - s1)
        })
        .collect();
    let x: Vec<f64> = n_grid.iter().map(|&n| n as f64).collect();
    let (exponent, stderr) = loglog_slope(&x, &second_moment)?;
    let rho_star = exponent / 2.0;
    Ok(S2Growth {
        n_grid: n_grid.to_vec(),
        second_moment,
        exponent,
        stderr,
        rho_star,
        alpha: rho_star.max(0.5),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub n_grid: Vec<usize>,
    /// Mean of `log max_{n <= N} |S_n|` over paths.
    pub mean_log_max: Vec<f64>,
    pub alpha_hat: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Smallest `N` used in the regression.
    pub fit_from: usize,
    /// Fraction of paths with `max_{n <= N} |S_n| > e^{intercept} N^{alpha_hat + 0.05}`.
    pub violation_fraction: Vec<f64>,
}

/// Smallest dyadic `N` entering the deviation regression.
pub const DEVIATION_FIT_FROM: usize = 64;

/// Regresses `log max_{n <= N} |S_n|` on `log N` over dyadic `N`.
pub fn deviation_exponent_mc(sys: &SkewSystem, h: &Observable, n_max: usize, cfg: &McConfig) -> Result<DeviationReport> {
    cfg.check()?;
    let (sim, obs) = compile(sys, &[h])?;
    let shift = match sys.markov() {
        Some(m) => h.mean(&m)?.re,
        None => 0.0,
    };
    let grid: Vec<usize> = dyadic_grid(n_max).into_iter().filter(|n| n.is_power_of_two()).collect();
    let samples = birkhoff_samples(&sim, &obs[0], shift, &grid, cfg, purpose::PATH);
    let mean_log_max: Vec<f64> = (0..grid.len())
        .map(|j| {
            let logs: Vec<f64> = samples.iter().map(|v| v[j].1.max(f64::MIN_POSITIVE).ln()).collect();
            pairwise_sum(&logs) / logs.len() as f64
        })
        .collect();
    let fit_from = DEVIATION_FIT_FROM.min(grid[grid.len().saturating_sub(3)]);
    let idx: Vec<usize> = (0..grid.len()).filter(|&j| grid[j] >= fit_from).collect();
    if idx.len() < 3 {
        return Err(Error::TooFewPoints(format!("deviation fit needs 3 dyadic points, have {}", idx.len())));
    }
    let lx: Vec<f64> = idx.iter().map(|&j| (grid[j] as f64).ln()).collect();
    let ly: Vec<f64> = idx.iter().map(|&j| mean_log_max[j]).collect();
    let (intercept, alpha_hat) = linear_fit(&lx, &ly);
    let resid: Vec<f64> = lx.iter().zip(&ly).map(|(x, y)| y - alpha_hat * x - intercept).collect();
    let sxx: f64 = {
        let m = lx.iter().sum::<f64>() / lx.len() as f64;
        lx.iter().map(|x| (x - m).powi(2)).sum()
    };
    let s2 = resid.iter().map(|r| r * r).sum::<f64>() / (lx.len() as f64 - 2.0).max(1.0);
    let violation_fraction = grid
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let threshold = intercept.exp() * (n as f64).powf(alpha_hat + 0.05);
            samples.iter().filter(|v| v[j].1 > threshold).count() as f64 / samples.len() as f64
        })
        .collect();
    Ok(DeviationReport {
        n_grid: grid,
        mean_log_max,
        alpha_hat,
        stderr: (s2 / sxx).sqrt(),
        intercept,
        fit_from,
        violation_fraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastReport {
    pub diophantine: DecayFit,
    pub liouville: DecayFit,
    /// `liouville exponent - diophantine exponent`.
    pub contrast: f64,
    pub diophantine_ok: bool,
    pub contrast_ok: bool,
}

/// Required Diophantine decay exponent (at most this).
pub const DIOPHANTINE_EXPONENT: f64 = -0.8;
/// Required gap between the Liouville and Diophantine exponents.
pub const CONTRAST_GAP: f64 = 0.3;

/// Power-law fits of exact `|rho(N)|` for two translation-fiber systems over
/// a common window.
pub fn diophantine_contrast(
    sys_dioph: &SkewSystem,
    sys_liouville: &SkewSystem,
    h: &Observable,
    times: &[usize],
    workers: Workers,
) -> Result<ContrastReport> {
    for s in [sys_dioph, sys_liouville] {
        if !matches!(s.fiber, crate::skew::FiberAction::Translation { .. }) {
            return Err(Error::Invalid("Diophantine contrast compares translation fibers".into()));
        }
    }
    let fit = |sys: &SkewSystem| -> Result<DecayFit> {
        let series = exact_correlation(sys, h, h, times, workers)?;
        decay_fit(&series.times_f64(), &series.abs(), DecayModel::Power, None)
    };
    let diophantine = fit(sys_dioph)?;
    let liouville = fit(sys_liouville)?;
    let contrast = liouville.slope - diophantine.slope;
    Ok(ContrastReport {
        diophantine_ok: diophantine.slope <= DIOPHANTINE_EXPONENT,
        contrast_ok: contrast >= CONTRAST_GAP,
        diophantine,
        liouville,
        contrast,
    })
}
