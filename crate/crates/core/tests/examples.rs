//! Worked examples with independent oracles: dense eigen-solvers, exact
//! laws, closed forms and Monte Carlo.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use ttlab_core::cocycle::{gk_covariance_tau, CocycleSpec};
use ttlab_core::correlations::{exact_correlation, greenkubo_constant, greenkubo_sigma2, llt_check, CorrelationSeries, Method};
use ttlab_core::dist::{tau_dist, LLTNormalization};
use ttlab_core::fit::{compare_models, DecayModel};
use ttlab_core::mc::{exact_s2_growth, mc_correlation, McConfig};
use ttlab_core::scenarios;
use ttlab_core::sft::{build_gibbs, sample_path, GibbsMarkovMeasure, Potential, SubshiftSpec};
use ttlab_core::skew::{fiber_correlation, BasePart, BaseSystem, FiberAction, Observable, SkewSystem, GOLDEN};
use ttlab_core::torus::TrigPoly;
use ttlab_core::Workers;

#[test]
fn golden_mean_gibbs_matches_dense_eigensolver() {
    let spec = SubshiftSpec::golden_mean();
    let m = build_gibbs(&spec, &Potential::zero(&spec)).unwrap();
    // the transition matrix is symmetric, so left and right eigenvectors agree
    let a = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
    let eig = SymmetricEigen::new(a);
    let (i, &lambda) = eig.eigenvalues.iter().enumerate().max_by(|x: &(usize, &f64), y| x.1.total_cmp(y.1)).unwrap();
    let r: Vec<f64> = eig.eigenvectors.column(i).iter().map(|x: &f64| x.abs()).collect();
    assert!((m.log_pressure() - lambda.ln()).abs() < 1e-12);
    assert!((lambda - (1.0 + 5f64.sqrt()) / 2.0).abs() < 1e-12);
    let z: f64 = r.iter().map(|x| x * x).sum();
    for s in 0..2 {
        assert!((m.pi()[s] - r[s] * r[s] / z).abs() < 1e-12);
        for t in 0..2 {
            let expected = if spec.allowed(s, t) { r[t] / (lambda * r[s]) } else { 0.0 };
            assert!((m.p(s, t) - expected).abs() < 1e-12);
        }
    }
}

#[test]
fn green_kubo_covariance_matches_exact_and_sampled_variance() {
    let (m, c) = scenarios::appendix_base().unwrap();
    let sigma2 = gk_covariance_tau(&m, &c).unwrap()[(0, 0)];

    let n = 2000;
    let d = tau_dist(&m, &c, n).unwrap();
    let mean: f64 = d.support().iter().map(|(z, p)| z[0] as f64 * p).sum();
    let var: f64 = d.support().iter().map(|(z, p)| (z[0] as f64 - mean).powi(2) * p).sum();
    assert!((var / n as f64 / sigma2 - 1.0).abs() < 0.01, "{} vs {sigma2}", var / n as f64);

    let (paths, len) = (400, 10_000);
    let sums: Vec<f64> = (0..paths)
        .map(|s| {
            let p = sample_path(&m, len + 1, s);
            (0..len).map(|i| c.lattice_value(p[i], p[i + 1])[0] as f64).sum::<f64>()
        })
        .collect();
    let mu = sums.iter().sum::<f64>() / paths as f64;
    let sample_var = sums.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (paths - 1) as f64 / len as f64;
    let se = sigma2 * (2.0 / (paths - 1) as f64).sqrt();
    assert!((sample_var - sigma2).abs() < 3.0 * se, "{sample_var} vs {sigma2} (se {se})");
}

#[test]
fn local_limit_ratios() {
    let (m, c) = scenarios::appendix_base().unwrap();
    let one = BasePart::by_symbol(&[1.0, 1.0]);
    let at0 = llt_check(&m, &c, &one, &one, &[0], &[0.0], &[500, 2000]).unwrap();
    assert!((at0[1].ratio - 1.0).abs() < (at0[0].ratio - 1.0).abs() + 1e-9);
    assert!((at0[1].ratio - 1.0).abs() < 0.02, "{:?}", at0[1]);

    let at2 = llt_check(&m, &c, &one, &one, &[0], &[2.0], &[2000]).unwrap();
    let norm = LLTNormalization::new(&m, &c).unwrap();
    let exact = at2[0].lhs / at0[1].lhs;
    let gaussian = norm.density(&at2[0].z_effective) / norm.density(&at0[1].z_effective);
    assert!((exact / gaussian - 1.0).abs() < 0.05, "{exact} vs {gaussian}");
}

fn cat_pair(k1: Vec<i64>, k2: Vec<i64>) -> (SkewSystem, Observable, Observable) {
    let sys = scenarios::zero_drift_mixing().unwrap();
    let h1 = Observable::product(scenarios::weight_a(), TrigPoly::cos(k1, 1.0));
    let h2 = Observable::product(scenarios::weight_b(), TrigPoly::cos(k2, 1.0));
    (sys, h1, h2)
}

#[test]
fn green_kubo_constant_examples() {
    // (0, 1) lies on a different frequency orbit from (1, 0) under the cat map
    let (sys, h1, h2) = cat_pair(vec![1, 0], vec![0, 1]);
    let m = sys.markov().unwrap();
    let norm = LLTNormalization::new(&m, &sys.cocycle).unwrap();
    assert_eq!(greenkubo_constant(&sys, &h1, &h2, &norm).unwrap(), Complex64::new(0.0, 0.0));

    let (sys, h1, h2) = cat_pair(vec![1, 0], vec![1, 0]);
    let got = greenkubo_constant(&sys, &h1, &h2, &norm).unwrap();
    let means = scenarios::weight_a().mean(&m).unwrap() * scenarios::weight_b().mean(&m).unwrap();
    let expected = norm.density(&[0.0]) * 0.5 * means * norm.lattice_cell_volume;
    assert!((got.re - expected).abs() < 1e-12 && got.im.abs() < 1e-12);

    let doubled = greenkubo_constant(&sys, &h1.scaled(2.0), &h2, &norm).unwrap();
    assert!((doubled - 2.0 * got).norm() < 1e-12);
}

fn iid_signs_rotation() -> SkewSystem {
    let m = GibbsMarkovMeasure::uniform_full_shift(2);
    let c = CocycleSpec::lattice_1d(m.spec(), &[vec![1, -1], vec![1, -1]]).unwrap();
    SkewSystem::new(BaseSystem::Sft(m), c, FiberAction::rotation(GOLDEN)).unwrap()
}

#[test]
fn closed_form_rotation_series_prefers_exponential_decay() {
    let sys = iid_signs_rotation();
    let character = |k: i64| Observable::product(BasePart::by_symbol(&[1.0, 1.0]), TrigPoly::new(1, [(vec![k], Complex64::new(1.0, 0.0))]).unwrap());
    let times: Vec<usize> = (0..60).collect();
    let s = exact_correlation(&sys, &character(-1), &character(1), &times, Workers::SEQUENTIAL).unwrap();
    let r = (std::f64::consts::TAU * GOLDEN).cos();
    for (&n, v) in times.iter().zip(&s.values) {
        assert!((v.norm() - r.abs().powi(n as i32)).abs() < 1e-12);
    }
    let cmp = compare_models(&s.times_f64(), &s.abs(), None).unwrap();
    assert_eq!(cmp.preferred, DecayModel::Exponential);
    assert!((cmp.exponential.exponent_or_rate() + r.abs().ln()).abs() < 1e-6);
    assert!(cmp.exponential.aic < cmp.power.aic);
}

#[test]
fn parseval_at_time_zero() {
    let b = TrigPoly::new(
        2,
        [
            (vec![1, 0], Complex64::new(0.5, 0.2)),
            (vec![-1, 0], Complex64::new(0.5, -0.2)),
            (vec![2, -3], Complex64::new(-0.1, 0.7)),
            (vec![-2, 3], Complex64::new(-0.1, -0.7)),
            (vec![0, 0], Complex64::new(0.3, 0.0)),
        ],
    )
    .unwrap();
    let l2: f64 = b.terms().map(|(_, c)| c.norm_sqr()).sum();
    for fib in [scenarios::cat_fiber(), FiberAction::translation(2, 1, vec![GOLDEN, 0.3]).unwrap()] {
        let v = fiber_correlation(&fib, &b, &b, &[0; 1][..fib.action_dim()]).unwrap();
        assert!((v.re - l2).abs() < 1e-12 && v.im.abs() < 1e-12);
    }
}

#[test]
fn sampled_paths_follow_the_measure() {
    let m = build_gibbs(&scenarios::three_symbol_spec(), &Potential::from_fn(&scenarios::three_symbol_spec(), |a, b| 0.4 * (a as f64) - 0.3 * (b * b) as f64)).unwrap();
    let draws = 1_000_000;
    let mut counts = [0usize; 3];
    for seed in 0..draws {
        counts[sample_path(&m, 1, seed as u64)[0]] += 1;
    }
    let chi2: f64 = (0..3).map(|a| (counts[a] as f64 - draws as f64 * m.pi()[a]).powi(2) / (draws as f64 * m.pi()[a])).sum();
    // 0.999 quantile of chi-square with 2 degrees of freedom
    assert!(chi2 < 13.816, "chi2 = {chi2}");

    let path = sample_path(&m, 1_000_001, 7);
    let mut trans = [[0usize; 3]; 3];
    for w in path.windows(2) {
        trans[w[0]][w[1]] += 1;
    }
    for a in 0..3 {
        let row: usize = trans[a].iter().sum();
        for b in 0..3 {
            let p = m.p(a, b);
            let freq = trans[a][b] as f64 / row as f64;
            let sd = (p * (1.0 - p) / row as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * sd + 1e-15, "({a},{b}) {freq} vs {p}");
        }
    }
    assert_eq!(sample_path(&m, 50, 3), sample_path(&m, 50, 3));
}

#[test]
fn monte_carlo_agrees_with_exact_series() {
    let s1 = scenarios::zero_drift_mixing().unwrap();
    let s2 = scenarios::drifted_mixing().unwrap();
    let h = scenarios::mixing_observable();
    let rot = scenarios::golden_rotation().unwrap();
    let saw = scenarios::sawtooth_observable();
    let cfg = McConfig::new(40_000, 11);
    for (sys, obs) in [(&s1, &h), (&s2, &h), (&rot, &saw)] {
        let times = [0, 1, 3, 8];
        let exact = exact_correlation(sys, obs, obs, &times, Workers::default()).unwrap();
        for (&n, v) in times.iter().zip(&exact.values) {
            let est = mc_correlation(sys, obs, obs, n, &cfg).unwrap();
            assert!((est.estimate - v.re).abs() < 4.0 * est.stderr, "N={n}: {} +- {} vs {}", est.estimate, est.stderr, v.re);
        }
    }
    let small = mc_correlation(&s1, &h, &h, 2, &McConfig::new(50_000, 5)).unwrap();
    let large = mc_correlation(&s1, &h, &h, 2, &McConfig::new(100_000, 5)).unwrap();
    let shrink = small.stderr / large.stderr;
    assert!((shrink / 2f64.sqrt() - 1.0).abs() < 0.15, "shrink {shrink}");
}

#[test]
fn green_kubo_variance_of_closed_forms() {
    let series = |values: Vec<f64>| CorrelationSeries {
        times: (0..values.len()).collect(),
        values: values.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        method: Method::Exact,
        metadata: String::new(),
    };
    let mut white = vec![0.0; 50];
    white[0] = 1.7;
    assert!((greenkubo_sigma2(&series(white)).unwrap().sigma2 - 1.7).abs() < 1e-12);
    let r: f64 = -0.35;
    let geo = greenkubo_sigma2(&series((0..200).map(|n| 2.0 * r.powi(n)).collect())).unwrap();
    assert!((geo.sigma2 - (1.0 + r) / (1.0 - r) * 2.0).abs() < 1e-9);
}

#[test]
fn s2_growth_of_synthetic_power_laws() {
    let n_max = 1 << 20;
    let grid: Vec<usize> = (14..=20).map(|k| 1 << k).collect();
    for (beta, expected) in [(0.25, 1.75), (0.5, 1.5), (0.75, 1.25), (1.5, 1.0)] {
        let values: Vec<Complex64> =
            (0..n_max).map(|n| Complex64::new(if n == 0 { 1.0 } else { (n as f64).powf(-beta) }, 0.0)).collect();
        let s = CorrelationSeries { times: (0..n_max).collect(), values, method: Method::Exact, metadata: String::new() };
        let g = exact_s2_growth(&s, &grid).unwrap();
        assert!((g.exponent - expected).abs() < 0.03, "beta {beta}: {}", g.exponent);
    }
}
