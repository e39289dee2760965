//! One line per acceptance criterion. Criteria 2-9 run the catalog
//! scenarios; criterion 1 compares exact results with word enumeration.

use std::collections::BTreeMap;

use num_complex::Complex64;
use ttlab::catalog::{run_scenario, Context, ScenarioOutcome};
use ttlab_core::cocycle::CocycleSpec;
use ttlab_core::correlations::{exact_correlation, triple_correlation_grid};
use ttlab_core::dist::{joint_tau_dist, tau_dist};
use ttlab_core::scenarios;
use ttlab_core::sft::GibbsMarkovMeasure;
use ttlab_core::skew::{fiber_moment, Observable, SkewSystem};
use ttlab_core::Workers;

const SEED: u64 = 2024;

fn words(m: &GibbsMarkovMeasure, len: usize) -> Vec<(Vec<usize>, f64)> {
    let a = m.alphabet_size();
    let mut out: Vec<(Vec<usize>, f64)> = (0..a).map(|s| (vec![s], m.pi()[s])).collect();
    for _ in 1..len {
        out = out
            .into_iter()
            .flat_map(|(w, p)| {
                let last = *w.last().unwrap();
                (0..a).filter(move |&b| m.spec().allowed(last, b)).map(move |b| {
                    let mut v = w.clone();
                    v.push(b);
                    (v, p * m.p(last, b))
                })
            })
            .collect();
    }
    out
}

fn tau(c: &CocycleSpec, w: &[usize], n: usize) -> i64 {
    (0..n).map(|i| c.lattice_value(w[i], w[i + 1])[0]).sum()
}

/// `zeta(prod_j H_j o F^{n_j})` over all words, fiber part by character algebra.
fn moment(sys: &SkewSystem, hs: &[&Observable], ns: &[usize], w: &[usize]) -> Complex64 {
    let a = sys.cocycle.alphabet_size();
    let taus: Vec<[i64; 1]> = ns.iter().map(|&n| [tau(&sys.cocycle, w, n)]).collect();
    let mut acc = Complex64::new(0.0, 0.0);
    let mut idx = vec![0usize; hs.len()];
    loop {
        let mut base = 1.0;
        let mut factors = Vec::with_capacity(hs.len());
        for (j, h) in hs.iter().enumerate() {
            let term = &h.terms()[idx[j]];
            base *= term.base.table(a).unwrap()[w[ns[j]] * a + w[ns[j] + 1]];
            factors.push((&term.fiber, &taus[j][..]));
        }
        acc += fiber_moment(&sys.fiber, &factors).unwrap() * base;
        let mut j = 0;
        loop {
            if j == hs.len() {
                return acc;
            }
            idx[j] += 1;
            if idx[j] < hs[j].terms().len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

fn oracle_error() -> f64 {
    let mut worst: f64 = 0.0;
    let s1 = scenarios::zero_drift_mixing().unwrap();
    let m1 = s1.markov().unwrap();
    let (mg, cg) = scenarios::appendix_base().unwrap();
    for (m, c) in [(&mg, &cg), (&m1, &s1.cocycle)] {
        for n in 0..=12 {
            let mut law: BTreeMap<i64, f64> = BTreeMap::new();
            for (w, p) in words(m, n + 1) {
                *law.entry(tau(c, &w, n)).or_default() += p;
            }
            let d = tau_dist(m, c, n).unwrap();
            for (z, p) in law {
                worst = worst.max((d.mass_at(&[z]) - p).abs());
            }
        }
        let times = [3, 7, 12];
        let mut law: BTreeMap<Vec<i64>, f64> = BTreeMap::new();
        for (w, p) in words(m, 13) {
            *law.entry(times.iter().map(|&t| tau(c, &w, t)).collect()).or_default() += p;
        }
        let joint: BTreeMap<Vec<i64>, f64> = joint_tau_dist(m, c, &times).unwrap().support().into_iter().collect();
        for (z, p) in law {
            worst = worst.max((joint.get(&z).copied().unwrap_or(0.0) - p).abs());
        }
    }

    let h = scenarios::mixing_observable();
    let times: Vec<usize> = (0..=10).collect();
    let series = exact_correlation(&s1, &h, &h, &times, Workers::default()).unwrap();
    let mean2 = h.mean(&m1).unwrap().powi(2);
    for (&n, v) in times.iter().zip(&series.values) {
        let direct: Complex64 = words(&m1, n + 2).iter().map(|(w, p)| moment(&s1, &[&h, &h], &[0, n], w) * p).sum();
        worst = worst.max((v - (direct - mean2)).norm());
    }

    let [a, b, c] = scenarios::triple_observables();
    let pairs: Vec<(usize, usize)> = (0..=8).flat_map(|n3| (0..=n3).map(move |n2| (n2, n3))).collect();
    let grid = triple_correlation_grid(&s1, [&a, &b, &c], &pairs).unwrap();
    for (g, &(n2, n3)) in grid.iter().zip(&pairs) {
        let direct: Complex64 = words(&m1, n3 + 2).iter().map(|(w, p)| moment(&s1, &[&a, &b, &c], &[0, n2, n3], w) * p).sum();
        worst = worst.max((g.moment - direct).norm());
    }
    worst
}

fn line(criterion: u32, pass: bool, detail: String) -> bool {
    println!("criterion {criterion}: {} | {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn run(id: &str) -> ScenarioOutcome {
    run_scenario(id, &Context { seed: SEED, workers: Workers::default() }).unwrap()
}

fn checks(o: &ScenarioOutcome, names: &[&str]) -> (bool, String) {
    let picked: Vec<_> = o.reports.iter().filter(|r| names.is_empty() || names.contains(&r.check.as_str())).collect();
    let pass = !picked.is_empty() && picked.iter().all(|r| r.pass);
    let detail = picked.iter().map(|r| format!("{}={:.4}{}", r.check, r.measured, if r.pass { "" } else { "(fail)" })).collect::<Vec<_>>().join(", ");
    (pass, format!("{} [{:.1}s]: {detail}", o.id, o.runtime_secs))
}

#[test]
fn acceptance() {
    let mut results = Vec::new();

    let err = oracle_error();
    results.push(line(1, err <= 1e-10, format!("max deviation from word enumeration {err:.2e}")));

    let (p, d) = checks(&run("S5"), &[]);
    results.push(line(2, p, d));

    let (p, d) = checks(&run("gk-constant"), &[]);
    results.push(line(3, p, d));

    let (p, d) = checks(&run("S2"), &[]);
    results.push(line(4, p, d));

    let s3 = run("S3");
    let (p3, d3) = checks(&s3, &["power-decay"]);
    let (p4, d4) = checks(&run("S4"), &[]);
    results.push(line(5, p3 && p4, format!("{d3}; {d4}")));

    let (p1, d1) = checks(&run("S1"), &["s2-growth", "mc-deviation"]);
    let (p3, d3) = checks(&s3, &["s2-growth", "mc-deviation"]);
    results.push(line(6, p1 && p3, format!("{d1}; {d3}")));

    let (p, d) = checks(&run("S6"), &[]);
    results.push(line(7, p, d));

    let (p, d) = checks(&run("S7"), &[]);
    results.push(line(8, p, d));

    let (p, d) = checks(&run("triple"), &[]);
    results.push(line(9, p, d));

    println!(
        "criterion 10: EXCLUDED | homogeneous-decay constants, geodesic-flow cascades, Edgeworth polynomial data and \
         horocycle/nilflow fibers are out of desk scale; covered only by the property suites"
    );

    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
