//! Exact correlation series of product observables on symbolic bases,
//! Green-Kubo sums and local limit comparisons.
//!
//! For `H_j = A_j(x) B_j(y)` the fiber integral reduces to characters, so
//! `zeta(H_1 H_2 o F^N)` becomes a base expectation of
//! `A_1(x) A_2(f^N x) w(tau_N(x))`. Translation fibers give `w` a pure phase,
//! handled by a twisted transfer matrix; automorphism fibers give a finitely
//! supported `w`, handled by the weighted lattice law of `tau_N`.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cocycle::{aperiodicity, drift, CocycleSpec};
use crate::dist::{KernelTables, LLTNormalization};
use crate::error::{Error, Result};
use crate::fit::{compare_models, DecayModel};
use crate::lattice::{LatticeLaw, DEFAULT_BUDGET};
use crate::par::{map_indexed, Workers};
use crate::sft::GibbsMarkovMeasure;
use crate::skew::{fiber_correlation, BasePart, FiberAction, Observable, SkewSystem};
use crate::torus::TrigPoly;

/// Largest `|t|` searched for frequency matches of an automorphism fiber.
pub const AUTOMORPHISM_SEARCH: i64 = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub times: Vec<usize>,
    pub values: Vec<Complex64>,
    pub method: Method,
    /// Hash of the system and observables that produced the series.
    pub metadata: String,
}

impl CorrelationSeries {
    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    pub fn times_f64(&self) -> Vec<f64> {
        self.times.iter().map(|&t| t as f64).collect()
    }

    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|z| z.im.abs()).fold(0.0, f64::max)
    }

    pub fn value_at(&self, n: usize) -> Option<Complex64> {
        self.times.iter().position(|&t| t == n).map(|i| self.values[i])
    }
}

/// FNV-1a hash of the debug rendering, stable across runs.
pub fn fingerprint(parts: &[&dyn std::fmt::Debug]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for byte in format!("{p:?}").bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Base weights of one pair of product terms.
struct PairWeights {
    n: usize,
    a1: Vec<f64>,
    /// `g(b) = sum_c P(b,c) a2(b,c)`.
    g2: Vec<f64>,
    /// `N = 0` value `sum pi(a) P(a,b) a1(a,b) a2(a,b)`.
    w0: f64,
}

impl PairWeights {
    fn new(m: &GibbsMarkovMeasure, a1: &BasePart, a2: &BasePart) -> Result<Self> {
        let n = m.alphabet_size();
        let a1 = a1.table(n)?;
        let a2 = a2.table(n)?;
        let g2 = (0..n).map(|b| (0..n).map(|c| m.p(b, c) * a2[b * n + c]).sum()).collect();
        let w0 = m.spec().edges().map(|(a, b)| m.pi()[a] * m.p(a, b) * a1[a * n + b] * a2[a * n + b]).sum();
        Ok(PairWeights { n, a1, g2, w0 })
    }

    /// `E[A1(x) A2(f^N x) prod_{n<N} w(x_n, x_{n+1})]` at every time.
    fn twisted_series(&self, m: &GibbsMarkovMeasure, w: &[Complex64], times: &[usize]) -> Vec<Complex64> {
        let n = self.n;
        let zero = Complex64::new(0.0, 0.0);
        let l: Vec<Complex64> = (0..n * n).map(|i| w[i] * m.transition_matrix()[i]).collect();
        let max_t = times.iter().copied().max().unwrap_or(0);
        let mut at = vec![zero; max_t + 1];
        at[0] = Complex64::new(self.w0, 0.0);
        if max_t >= 1 {
            let mut u = vec![zero; n];
            for a in 0..n {
                for b in 0..n {
                    u[b] += l[a * n + b] * (m.pi()[a] * self.a1[a * n + b]);
                }
            }
            let mut next = vec![zero; n];
            for (t, slot) in at.iter_mut().enumerate().skip(1) {
                if t > 1 {
                    next.iter_mut().for_each(|z| *z = zero);
                    for a in 0..n {
                        let ua = u[a];
                        if ua != zero {
                            for b in 0..n {
                                next[b] += ua * l[a * n + b];
                            }
                        }
                    }
                    std::mem::swap(&mut u, &mut next);
                }
                *slot = u.iter().zip(&self.g2).map(|(x, g)| x * g).sum();
            }
        }
        times.iter().map(|&t| at[t]).collect()
    }

    /// `E[A1(x) A2(f^N x) 1{tau_N = z}]` for each time and each target `z`.
    fn lattice_series(
        &self,
        m: &GibbsMarkovMeasure,
        c: &CocycleSpec,
        times: &[usize],
        targets: &[Vec<i64>],
    ) -> Result<Vec<Vec<f64>>> {
        let tables = KernelTables::new(m, c)?;
        let mut order: Vec<usize> = (0..times.len()).collect();
        order.sort_by_key(|&i| times[i]);
        let mut out = vec![vec![0.0; targets.len()]; times.len()];
        let zero = vec![0; c.dim()];
        let mut law: Option<LatticeLaw> = None;
        let mut t = 0;
        for i in order {
            let target = times[i];
            if target == 0 {
                for (o, z) in out[i].iter_mut().zip(targets) {
                    *o = if *z == zero { self.w0 } else { 0.0 };
                }
                continue;
            }
            while t < target {
                match law.as_mut() {
                    None => {
                        let mut l = LatticeLaw::start(m.pi(), c.dim());
                        l.step(&tables.kernel(Some(&self.a1)), DEFAULT_BUDGET)?;
                        law = Some(l);
                    }
                    Some(l) => l.step(&tables.kernel(None), DEFAULT_BUDGET)?,
                }
                t += 1;
            }
            let l = law.as_ref().expect("stepped at least once");
            for (o, z) in out[i].iter_mut().zip(targets) {
                *o = l.restrict_at(z).iter().zip(&self.g2).map(|(x, g)| x * g).sum();
            }
        }
        Ok(out)
    }
}

/// Nonzero values of `nu(B_1 (B_2 o G_t))` for zero-mean parts of an
/// automorphism fiber, searched over `|t| <= AUTOMORPHISM_SEARCH`.
pub fn automorphism_support(fib: &FiberAction, b1: &TrigPoly, b2: &TrigPoly) -> Result<BTreeMap<i64, Complex64>> {
    let b1 = b1.without_mean();
    let b2 = b2.without_mean();
    let lookup: HashMap<Vec<i128>, Complex64> =
        b1.terms().map(|(k, b)| (k.iter().map(|&x| x as i128).collect(), *b)).collect();
    let mut support = BTreeMap::new();
    for (k2, c2) in b2.terms() {
        for t in -AUTOMORPHISM_SEARCH..=AUTOMORPHISM_SEARCH {
            // frequencies grow geometrically; overflow means no further match
            let Some((img, _)) = fib.transport(k2, &[t]) else { continue };
            let neg: Vec<i128> = img.iter().map(|x| -x).collect();
            if let Some(c1) = lookup.get(&neg) {
                *support.entry(t).or_insert(Complex64::new(0.0, 0.0)) += c1 * c2;
            }
        }
    }
    support.retain(|_, v| *v != Complex64::new(0.0, 0.0));
    Ok(support)
}

fn check_pair(sys: &SkewSystem, h1: &Observable, h2: &Observable) -> Result<GibbsMarkovMeasure> {
    sys.check_observable(h1)?;
    sys.check_observable(h2)?;
    sys.require_markov()
}

/// `rho(N) = zeta(H_1 (H_2 o F^N)) - zeta(H_1) zeta(H_2)` at each time.
pub fn exact_correlation(
    sys: &SkewSystem,
    h1: &Observable,
    h2: &Observable,
    times: &[usize],
    workers: Workers,
) -> Result<CorrelationSeries> {
    let m = check_pair(sys, h1, h2)?;
    let c = &sys.cocycle;
    let n = m.alphabet_size();
    let mut total = vec![Complex64::new(0.0, 0.0); times.len()];
    for t1 in h1.terms() {
        for t2 in h2.terms() {
            let w = PairWeights::new(&m, &t1.base, &t2.base)?;
            let part = match &sys.fiber {
                FiberAction::Translation { .. } => {
                    let jobs: Vec<(Vec<i64>, Complex64)> = t2
                        .fiber
                        .terms()
                        .filter_map(|(k, b2)| {
                            let neg: Vec<i64> = k.iter().map(|x| -x).collect();
                            let b1 = t1.fiber.coefficient(&neg);
                            (b1 != Complex64::new(0.0, 0.0)).then(|| (k.clone(), b1 * b2))
                        })
                        .collect();
                    let series = map_indexed(jobs.len(), workers, |j| -> Result<Vec<Complex64>> {
                        let (k, coef) = &jobs[j];
                        let xi: Vec<f64> = if c.is_lattice() {
                            sys.fiber.dual_frequency(k)?
                        } else {
                            translation_frequency(&sys.fiber, k)
                        };
                        let tw: Vec<Complex64> = (0..n * n)
                            .map(|i| {
                                let v = c.value(i / n, i % n);
                                let ph: f64 = xi.iter().zip(v).map(|(a, b)| a * b).sum();
                                Complex64::from_polar(1.0, std::f64::consts::TAU * ph)
                            })
                            .collect();
                        Ok(w.twisted_series(&m, &tw, times).into_iter().map(|z| z * coef).collect())
                    });
                    sum_series(series, times.len())?
                }
                FiberAction::Automorphism { .. } => {
                    let mean = t1.fiber.mean() * t2.fiber.mean();
                    let mut acc = vec![Complex64::new(0.0, 0.0); times.len()];
                    if mean != Complex64::new(0.0, 0.0) {
                        let ones = vec![Complex64::new(1.0, 0.0); n * n];
                        for (a, b) in acc.iter_mut().zip(w.twisted_series(&m, &ones, times)) {
                            *a += mean * b;
                        }
                    }
                    let support = automorphism_support(&sys.fiber, &t1.fiber, &t2.fiber)?;
                    if !support.is_empty() {
                        let targets: Vec<Vec<i64>> = support.keys().map(|&t| vec![t]).collect();
                        let weights: Vec<Complex64> = support.values().copied().collect();
                        let table = w.lattice_series(&m, c, times, &targets)?;
                        for (a, row) in acc.iter_mut().zip(&table) {
                            *a += row.iter().zip(&weights).map(|(x, y)| y * x).sum::<Complex64>();
                        }
                    }
                    acc
                }
            };
            for (t, p) in total.iter_mut().zip(part) {
                *t += p;
            }
        }
    }
    let product = h1.mean(&m)? * h2.mean(&m)?;
    Ok(CorrelationSeries {
        times: times.to_vec(),
        values: total.into_iter().map(|z| z - product).collect(),
        method: Method::Exact,
        metadata: fingerprint(&[sys, h1, h2]),
    })
}

/// `alpha^T k` without reduction, for real-valued cocycles.
fn translation_frequency(fib: &FiberAction, k: &[i64]) -> Vec<f64> {
    let FiberAction::Translation { m, d, alpha } = fib else { unreachable!() };
    (0..*d).map(|j| (0..*m).map(|i| k[i] as f64 * alpha[i * d + j]).sum()).collect()
}

fn sum_series(series: Vec<Result<Vec<Complex64>>>, len: usize) -> Result<Vec<Complex64>> {
    let mut acc = vec![Complex64::new(0.0, 0.0); len];
    for s in series {
        for (a, v) in acc.iter_mut().zip(s?) {
            *a += v;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripleCorrelation {
    pub n2: usize,
    pub n3: usize,
    /// `zeta(H_1 (H_2 o F^{n2}) (H_3 o F^{n3}))`.
    pub moment: Complex64,
    /// `moment - zeta(H_1) zeta(H_2) zeta(H_3)`.
    pub connected: Complex64,
}

pub fn triple_correlation(
    sys: &SkewSystem,
    hs: [&Observable; 3],
    n2: usize,
    n3: usize,
) -> Result<TripleCorrelation> {
    Ok(triple_correlation_grid(sys, hs, &[(n2, n3)])?[0])
}

/// Triple correlations at times `(0, n2, n3)` for every requested pair.
///
/// Uses the Markov decomposition at time `n2`: the weighted law of
/// `(x_{n2}, tau_{n2})` composed with the state-started weighted law of the
/// increment `tau_{n3} - tau_{n2}`.
pub fn triple_correlation_grid(
    sys: &SkewSystem,
    hs: [&Observable; 3],
    pairs: &[(usize, usize)],
) -> Result<Vec<TripleCorrelation>> {
    let m = check_pair(sys, hs[0], hs[1])?;
    sys.check_observable(hs[2])?;
    let c = &sys.cocycle;
    c.require_lattice()?;
    if pairs.iter().any(|(a, b)| a > b) {
        return Err(Error::Invalid("triple times must satisfy n2 <= n3".into()));
    }
    let mut moments = vec![Complex64::new(0.0, 0.0); pairs.len()];
    for t1 in hs[0].terms() {
        for t2 in hs[1].terms() {
            for t3 in hs[2].terms() {
                let engine = TripleEngine::new(&m, c, [&t1.base, &t2.base, &t3.base], pairs)?;
                let mut fiber = FiberCache::new(&sys.fiber, [&t1.fiber, &t2.fiber, &t3.fiber]);
                for (slot, &(n2, n3)) in moments.iter_mut().zip(pairs) {
                    *slot += engine.moment(n2, n3, &mut fiber)?;
                }
            }
        }
    }
    let product = hs[0].mean(&m)? * hs[1].mean(&m)? * hs[2].mean(&m)?;
    Ok(pairs
        .iter()
        .zip(moments)
        .map(|(&(n2, n3), moment)| TripleCorrelation { n2, n3, moment, connected: moment - product })
        .collect())
}

/// `nu(B_1 (B_2 o G_{t2}) (B_3 o G_{t3}))`, memoised over `(t2, t3)`.
struct FiberCache<'a> {
    fib: &'a FiberAction,
    b1: HashMap<Vec<i128>, Complex64>,
    b2: &'a TrigPoly,
    b3: &'a TrigPoly,
    transported: [HashMap<Vec<i64>, Vec<(Vec<i128>, Complex64)>>; 2],
    values: HashMap<(Vec<i64>, Vec<i64>), Complex64>,
}

impl<'a> FiberCache<'a> {
    fn new(fib: &'a FiberAction, bs: [&'a TrigPoly; 3]) -> Self {
        FiberCache {
            fib,
            b1: bs[0].terms().map(|(k, b)| (k.iter().map(|&x| x as i128).collect(), *b)).collect(),
            b2: bs[1],
            b3: bs[2],
            transported: [HashMap::new(), HashMap::new()],
            values: HashMap::new(),
        }
    }

    fn images(&mut self, which: usize, t: &[i64]) -> Result<Vec<(Vec<i128>, Complex64)>> {
        if let Some(v) = self.transported[which].get(t) {
            return Ok(v.clone());
        }
        let poly = if which == 0 { self.b2 } else { self.b3 };
        let mut out = Vec::with_capacity(poly.len());
        for (k, b) in poly.terms() {
            let (img, ph) = self
                .fib
                .transport(k, t)
                .ok_or_else(|| Error::OutOfRange(format!("transported frequency of {k:?} at time {t:?}")))?;
            out.push((img, b * ph));
        }
        self.transported[which].insert(t.to_vec(), out.clone());
        Ok(out)
    }

    fn get(&mut self, t2: &[i64], t3: &[i64]) -> Result<Complex64> {
        let key = (t2.to_vec(), t3.to_vec());
        if let Some(v) = self.values.get(&key) {
            return Ok(*v);
        }
        let i2 = self.images(0, t2)?;
        let i3 = self.images(1, t3)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k2, c2) in &i2 {
            for (k3, c3) in &i3 {
                let need: Option<Vec<i128>> = k2.iter().zip(k3).map(|(a, b)| a.checked_add(*b).map(|s| -s)).collect();
                if let Some(c1) = need.and_then(|k| self.b1.get(&k)) {
                    acc += c1 * c2 * c3;
                }
            }
        }
        self.values.insert(key, acc);
        Ok(acc)
    }
}

/// Lattice function on a box, row-major from `lo`.
struct IncrementFn {
    lo: Vec<i64>,
    shape: Vec<usize>,
    values: Vec<f64>,
}

/// Weighted laws for the Markov decomposition of a triple moment.
struct TripleEngine {
    dim: usize,
    pi: Vec<f64>,
    /// `head[n2 - 1]`: law of `(x_{n2}, tau_{n2})` weighted by `A_1(x_0, x_1)`.
    head: Vec<LatticeLaw>,
    /// `tail[first][b][k]`: from state `b`, lattice function of `tau_k` weighted
    /// by the first-transition weight and `A_3(x_k, x_{k+1})`. `first = 0` uses
    /// `A_2`, `first = 1` uses `A_1 A_2` (for `n2 = 0`).
    tail: [Vec<Vec<IncrementFn>>; 2],
}

impl TripleEngine {
    fn new(m: &GibbsMarkovMeasure, c: &CocycleSpec, bases: [&BasePart; 3], pairs: &[(usize, usize)]) -> Result<Self> {
        let n = m.alphabet_size();
        let a1 = bases[0].table(n)?;
        let a2 = bases[1].table(n)?;
        let a3 = bases[2].table(n)?;
        let a12: Vec<f64> = a1.iter().zip(&a2).map(|(x, y)| x * y).collect();
        let tables = KernelTables::new(m, c)?;
        let max_head = pairs.iter().map(|p| p.0).max().unwrap_or(0);
        let max_gap = pairs.iter().map(|p| p.1 - p.0).max().unwrap_or(0);
        let mut head = Vec::with_capacity(max_head);
        if max_head > 0 {
            let mut law = LatticeLaw::start(m.pi(), c.dim());
            law.step(&tables.kernel(Some(&a1)), DEFAULT_BUDGET)?;
            head.push(law.clone());
            for _ in 1..max_head {
                law.step(&tables.kernel(None), DEFAULT_BUDGET)?;
                head.push(law.clone());
            }
        }
        let g3: Vec<f64> = (0..n).map(|b| (0..n).map(|x| m.p(b, x) * a3[b * n + x]).sum()).collect();
        let build = |first: &[f64]| -> Result<Vec<Vec<IncrementFn>>> {
            (0..n)
                .map(|b| {
                    let mut per_k = Vec::with_capacity(max_gap + 1);
                    let k0: f64 = (0..n).map(|x| m.p(b, x) * first[b * n + x] * a3[b * n + x]).sum();
                    per_k.push(IncrementFn { lo: vec![0; c.dim()], shape: vec![1; c.dim()], values: vec![k0] });
                    let mut init = vec![0.0; n];
                    init[b] = 1.0;
                    let mut law = LatticeLaw::start(&init, c.dim());
                    for k in 1..=max_gap {
                        let w = if k == 1 { Some(first) } else { None };
                        law.step(&tables.kernel(w), DEFAULT_BUDGET)?;
                        per_k.push(IncrementFn {
                            lo: law.lo().to_vec(),
                            shape: law.shape().to_vec(),
                            values: law.contract(&g3),
                        });
                    }
                    Ok(per_k)
                })
                .collect()
        };
        let tail = [build(&a2)?, build(&a12)?];
        Ok(TripleEngine { dim: c.dim(), pi: m.pi().to_vec(), head, tail })
    }

    fn moment(&self, n2: usize, n3: usize, fiber: &mut FiberCache<'_>) -> Result<Complex64> {
        let k = n3 - n2;
        let first = if n2 == 0 { 1 } else { 0 };
        // (t2, per-state masses) at time n2
        let heads: Vec<(Vec<i64>, Vec<f64>)> = if n2 == 0 {
            vec![(vec![0; self.dim], self.pi.clone())]
        } else {
            let law = &self.head[n2 - 1];
            (0..law.cells())
                .map(|i| {
                    let z = law.coords(i);
                    let masses = law.restrict_at(&z);
                    (z, masses)
                })
                .filter(|(_, r)| r.iter().any(|x| *x != 0.0))
                .collect()
        };
        let mut acc = Complex64::new(0.0, 0.0);
        for (t2, masses) in &heads {
            // combined increment function sum_b masses[b] K_b(delta)
            let mut combined: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
            for (b, &mb) in masses.iter().enumerate() {
                if mb == 0.0 {
                    continue;
                }
                let f = &self.tail[first][b][k];
                for (i, v) in f.values.iter().enumerate() {
                    if *v != 0.0 {
                        *combined.entry(coords_in(&f.lo, &f.shape, i)).or_insert(0.0) += mb * v;
                    }
                }
            }
            for (delta, w) in combined {
                let t3: Vec<i64> = t2.iter().zip(&delta).map(|(a, b)| a + b).collect();
                acc += fiber.get(t2, &t3)? * w;
            }
        }
        Ok(acc)
    }
}

fn coords_in(lo: &[i64], shape: &[usize], idx: usize) -> Vec<i64> {
    let mut rem = idx;
    let mut out = vec![0; lo.len()];
    for j in (0..lo.len()).rev() {
        out[j] = lo[j] + (rem % shape[j]) as i64;
        rem /= shape[j];
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenKuboSigma2 {
    pub sigma2: f64,
    /// Bound on the neglected tail `2 sum_{n > N_max} |rho(n)|`.
    pub truncation_bound: f64,
    pub n_max: usize,
}

/// Tail level below which a series counts as converged.
pub const TAIL_TOLERANCE: f64 = 1e-10;

/// `sigma^2 = rho(0) + 2 sum_{n >= 1} Re rho(n)` from a series on `0..=N_max`.
pub fn greenkubo_sigma2(series: &CorrelationSeries) -> Result<GreenKuboSigma2> {
    if series.times.first() != Some(&0) || series.times.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Invalid("Green-Kubo sum needs the series on consecutive times from 0".into()));
    }
    let n_max = *series.times.last().expect("nonempty");
    let re: Vec<f64> = series.values.iter().map(|z| z.re).collect();
    let sigma2 = re[0] + 2.0 * crate::par::pairwise_sum(&re[1..]);
    let abs = series.abs();
    let tail_level = abs[abs.len().saturating_sub(4)..].iter().copied().fold(0.0, f64::max);
    if tail_level < TAIL_TOLERANCE {
        return Ok(GreenKuboSigma2 { sigma2, truncation_bound: 2.0 * tail_level, n_max });
    }
    let t = series.times_f64();
    let cmp = compare_models(&t[1..], &abs[1..], None)?;
    let last = abs[abs.len() - 1];
    let bound = match cmp.preferred {
        DecayModel::Exponential if cmp.exponential.slope < 0.0 => {
            let q = cmp.exponential.slope.exp();
            2.0 * last * q / (1.0 - q)
        }
        _ => {
            let p = cmp.power.slope;
            if p >= -1.0 {
                return Err(Error::NonSummable { exponent: p });
            }
            2.0 * last * n_max as f64 / (-p - 1.0)
        }
    };
    Ok(GreenKuboSigma2 { sigma2, truncation_bound: bound, n_max })
}

/// Limit of `L_N^d rho(N)` for zero drift: `p(0) vol sum_i mu(A1_i) mu(A2_j)
/// sum_t nu(B1_i (B2_j o G_t))`, summed over product terms.
pub fn greenkubo_constant(
    sys: &SkewSystem,
    h1: &Observable,
    h2: &Observable,
    norm: &LLTNormalization,
) -> Result<Complex64> {
    let m = check_pair(sys, h1, h2)?;
    let FiberAction::Automorphism { .. } = sys.fiber else {
        return Err(Error::Unsupported("Green-Kubo constant needs a mixing (automorphism) fiber".into()));
    };
    let mu = drift(&m, &sys.cocycle)?;
    if mu.iter().any(|x| x.abs() > 1e-12) {
        return Err(Error::NonzeroDrift(mu));
    }
    if !h1.zero_fiber_mean() || !h2.zero_fiber_mean() {
        return Err(Error::NonzeroFiberMean);
    }
    if !aperiodicity(m.spec(), &sys.cocycle)?.is_aperiodic() {
        return Err(Error::Unsupported("periodic cocycle: the lattice limit depends on the residue class".into()));
    }
    let mut total = Complex64::new(0.0, 0.0);
    for t1 in h1.terms() {
        for t2 in h2.terms() {
            let fib: Complex64 = automorphism_support(&sys.fiber, &t1.fiber, &t2.fiber)?.values().sum();
            total += fib * t1.base.mean(&m)? * t2.base.mean(&m)?;
        }
    }
    Ok(total * norm.density(&vec![0.0; norm.dim]) * norm.lattice_cell_volume)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LltRow {
    pub n: usize,
    /// Lattice point whose unit cube is tested.
    pub cell: Vec<i64>,
    /// `(cell - D_N) / L_N`, where the density is evaluated.
    pub z_effective: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Compares `L_N^d mu(A0 A1 o f^N 1_C(tau_N - D_N - z_N))` with
/// `p(z) mu(A0) mu(A1) vol(C) vol(lattice)` for each `N`.
///
/// `z_N` is the lattice point nearest to `z L_N + D_N`, shifted by `cube_shift`.
pub fn llt_check(
    m: &GibbsMarkovMeasure,
    c: &CocycleSpec,
    a0: &BasePart,
    a1: &BasePart,
    cube_shift: &[i64],
    z: &[f64],
    n_grid: &[usize],
) -> Result<Vec<LltRow>> {
    let norm = LLTNormalization::new(m, c)?;
    let d = c.dim();
    if z.len() != d || cube_shift.len() != d {
        return Err(Error::Invalid("LLT point and cube shift must match the cocycle dimension".into()));
    }
    let w = PairWeights::new(m, a0, a1)?;
    let cells: Vec<Vec<i64>> = n_grid
        .iter()
        .map(|&n| {
            let ln = norm.l_n(n);
            let dn = norm.d_n(n);
            (0..d).map(|j| (z[j] * ln + dn[j]).round() as i64 + cube_shift[j]).collect()
        })
        .collect();
    let means = a0.mean(m)? * a1.mean(m)?;
    let mut rows = Vec::with_capacity(n_grid.len());
    for (i, &n) in n_grid.iter().enumerate() {
        let table = w.lattice_series(m, c, &[n], &cells[i..=i])?;
        let ln = norm.l_n(n);
        let dn = norm.d_n(n);
        let z_eff: Vec<f64> = (0..d).map(|j| (cells[i][j] as f64 - dn[j]) / ln).collect();
        let lhs = ln.powi(d as i32) * table[0][0];
        let rhs = norm.density(&z_eff) * means * norm.lattice_cell_volume;
        rows.push(LltRow { n, cell: cells[i].clone(), z_effective: z_eff, lhs, rhs, ratio: lhs / rhs });
    }
    Ok(rows)
}

/// Base-only correlation `mu(A1 (A2 o f^N)) - mu(A1) mu(A2)`.
pub fn base_correlation(m: &GibbsMarkovMeasure, a1: &BasePart, a2: &BasePart, times: &[usize]) -> Result<Vec<f64>> {
    let w = PairWeights::new(m, a1, a2)?;
    let ones = vec![Complex64::new(1.0, 0.0); m.alphabet_size().pow(2)];
    let prod = a1.mean(m)? * a2.mean(m)?;
    Ok(w.twisted_series(m, &ones, times).into_iter().map(|z| z.re - prod).collect())
}

/// Exact fiber correlation helper re-exported for reports.
pub fn fiber_correlation_at(fib: &FiberAction, b1: &TrigPoly, b2: &TrigPoly, t: i64) -> Result<Complex64> {
    fiber_correlation(fib, b1, b2, &[t])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skew::{ProductTerm, GOLDEN};
    use crate::torus::IntMatrix;
    use approx::assert_abs_diff_eq;

    fn iid_rotation(alpha: f64) -> SkewSystem {
        let m = GibbsMarkovMeasure::uniform_full_shift(2);
        let c = CocycleSpec::lattice_1d(m.spec(), &[vec![1, -1], vec![1, -1]]).unwrap();
        SkewSystem::new(crate::skew::BaseSystem::Sft(m), c, FiberAction::rotation(alpha)).unwrap()
    }

    #[test]
    fn iid_rotation_closed_form() {
        let sys = iid_rotation(GOLDEN);
        let e = Observable::product(BasePart::Constant(1.0), TrigPoly::character(vec![1]));
        let conj = Observable::product(BasePart::Constant(1.0), TrigPoly::character(vec![-1]));
        let times: Vec<usize> = (0..30).collect();
        let s = exact_correlation(&sys, &conj, &e, &times, Workers::SEQUENTIAL).unwrap();
        for (t, v) in times.iter().zip(&s.values) {
            let expected = f64::cos(std::f64::consts::TAU * GOLDEN).powi(*t as i32);
            assert_abs_diff_eq!(v.re, expected, epsilon = 1e-12);
            assert_abs_diff_eq!(v.im, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_observable_has_zero_correlation() {
        let sys = iid_rotation(GOLDEN);
        let h = Observable::product(BasePart::by_symbol(&[1.0, 3.0]), TrigPoly::cos(vec![1], 1.0));
        let one = Observable::constant(1, 2.5);
        let s = exact_correlation(&sys, &h, &one, &[0, 1, 5], Workers::SEQUENTIAL).unwrap();
        assert!(s.abs().iter().all(|v| *v < 1e-14));
    }

    #[test]
    fn frozen_fiber_does_not_mix() {
        let m = GibbsMarkovMeasure::uniform_full_shift(2);
        let sys = SkewSystem::new(
            crate::skew::BaseSystem::Sft(m.clone()),
            CocycleSpec::zero(m.spec(), 1),
            FiberAction::rotation(GOLDEN),
        )
        .unwrap();
        let e = Observable::product(BasePart::Constant(1.0), TrigPoly::character(vec![1]));
        let conj = Observable::product(BasePart::Constant(1.0), TrigPoly::character(vec![-1]));
        let s = exact_correlation(&sys, &conj, &e, &[0, 3, 50], Workers::SEQUENTIAL).unwrap();
        for v in &s.values {
            assert_abs_diff_eq!(v.re, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn automorphism_cos_pair_is_half_return_probability() {
        let m = GibbsMarkovMeasure::uniform_full_shift(2);
        let c = CocycleSpec::lattice_1d(m.spec(), &[vec![1, -1], vec![1, -1]]).unwrap();
        let b = IntMatrix::new(&[vec![2, 1], vec![1, 1]]).unwrap();
        let sys = SkewSystem::new(crate::skew::BaseSystem::Sft(m), c, FiberAction::automorphism(b).unwrap()).unwrap();
        let h = Observable::product(BasePart::Constant(1.0), TrigPoly::cos(vec![1, 0], 1.0));
        let s = exact_correlation(&sys, &h, &h, &[0, 1, 2, 4], Workers::SEQUENTIAL).unwrap();
        // rho(N) = P(tau_N = 0) / 2
        assert_abs_diff_eq!(s.values[0].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.values[1].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.values[2].re, 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s.values[3].re, 6.0 / 32.0, epsilon = 1e-15);
    }

    /// Brute force over all words of a full shift.
    fn triple_by_enumeration(
        sys: &SkewSystem,
        hs: [&Observable; 3],
        n2: usize,
        n3: usize,
    ) -> Complex64 {
        let m = sys.markov().unwrap();
        let a = m.alphabet_size();
        let len = n3 + 2;
        let mut acc = Complex64::new(0.0, 0.0);
        for code in 0..a.pow(len as u32) {
            let word: Vec<usize> = (0..len).map(|i| (code / a.pow(i as u32)) % a).collect();
            let mut prob = m.pi()[word[0]];
            for w in word.windows(2) {
                prob *= m.p(w[0], w[1]);
            }
            let tau = |t: usize| -> i64 { (0..t).map(|i| sys.cocycle.lattice_value(word[i], word[i + 1])[0]).sum() };
            for x in hs[0].terms() {
                for y in hs[1].terms() {
                    for z in hs[2].terms() {
                        let tab = |p: &BasePart, i: usize| p.table(a).unwrap()[word[i] * a + word[i + 1]];
                        let base = tab(&x.base, 0) * tab(&y.base, n2) * tab(&z.base, n3);
                        let (t2, t3) = ([tau(n2)], [tau(n3)]);
                        let fib = crate::skew::fiber_moment(
                            &sys.fiber,
                            &[(&x.fiber, &[0][..]), (&y.fiber, &t2[..]), (&z.fiber, &t3[..])],
                        )
                        .unwrap();
                        acc += fib * base * prob;
                    }
                }
            }
        }
        acc
    }

    #[test]
    fn triple_matches_enumeration() {
        let m = GibbsMarkovMeasure::uniform_full_shift(2);
        let c = CocycleSpec::lattice_1d(m.spec(), &[vec![1, -1], vec![2, 0]]).unwrap();
        let b = IntMatrix::new(&[vec![2, 1], vec![1, 1]]).unwrap();
        let sys = SkewSystem::new(crate::skew::BaseSystem::Sft(m), c, FiberAction::automorphism(b).unwrap()).unwrap();
        let h1 = Observable::product(BasePart::by_symbol(&[1.0, 2.0]), TrigPoly::cos(vec![1, 0], 1.0));
        let h2 = Observable::product(BasePart::by_symbol(&[0.5, -1.0]), TrigPoly::cos(vec![0, 1], 1.0));
        let h3 = Observable::sum(vec![
            ProductTerm { base: BasePart::Constant(1.0), fiber: TrigPoly::cos(vec![1, 1], 1.0) },
            ProductTerm { base: BasePart::by_symbol(&[1.0, 0.0]), fiber: TrigPoly::constant(2, 0.3) },
        ])
        .unwrap();
        let pairs = [(0, 0), (0, 2), (1, 1), (1, 3), (2, 5), (3, 4)];
        let got = triple_correlation_grid(&sys, [&h1, &h2, &h3], &pairs).unwrap();
        for (g, &(n2, n3)) in got.iter().zip(&pairs) {
            let want = triple_by_enumeration(&sys, [&h1, &h2, &h3], n2, n3);
            assert!((g.moment - want).norm() < 1e-12, "{n2} {n3}: {} vs {want}", g.moment);
        }
    }

    #[test]
    fn geometric_green_kubo() {
        let r: f64 = 0.6;
        let times: Vec<usize> = (0..200).collect();
        let series = CorrelationSeries {
            values: times.iter().map(|&t| Complex64::new(2.0 * r.powi(t as i32), 0.0)).collect(),
            times,
            method: Method::Exact,
            metadata: String::new(),
        };
        let g = greenkubo_sigma2(&series).unwrap();
        assert_abs_diff_eq!(g.sigma2, 2.0 * (1.0 + r) / (1.0 - r), epsilon = 1e-9);
    }

    #[test]
    fn slow_series_is_not_summable() {
        let times: Vec<usize> = (0..2000).collect();
        let series = CorrelationSeries {
            values: times.iter().map(|&t| Complex64::new(1.0 / ((t + 1) as f64).sqrt(), 0.0)).collect(),
            times,
            method: Method::Exact,
            metadata: String::new(),
        };
        assert!(matches!(greenkubo_sigma2(&series), Err(Error::NonSummable { .. })));
    }

    #[test]
    fn llt_outside_support_is_zero() {
        let m = GibbsMarkovMeasure::uniform_full_shift(2);
        let c = CocycleSpec::lattice_1d(m.spec(), &[vec![1, -1], vec![1, -1]]).unwrap();
        let one = BasePart::Constant(1.0);
        let rows = llt_check(&m, &c, &one, &one, &[1000], &[0.0], &[10, 20]).unwrap();
        assert!(rows.iter().all(|r| r.lhs == 0.0));
        let rows = llt_check(&m, &c, &one, &one, &[0], &[0.0], &[400, 1600]).unwrap();
        for r in rows {
            assert!((r.ratio - 1.0).abs() < 2e-3, "{r:?}");
        }
    }
}
