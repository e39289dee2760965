//! Systems and observables of the scenario catalog.

use crate::cocycle::CocycleSpec;
use crate::error::Result;
use crate::sft::{build_gibbs, GibbsMarkovMeasure, Potential, SubshiftSpec};
use crate::skew::{liouville, BasePart, BaseSystem, FiberAction, Observable, SkewSystem, GOLDEN};
use crate::torus::{IntMatrix, TrigPoly};

/// Harmonics kept in the sawtooth observable of the rotation scenarios.
pub const SAWTOOTH_HARMONICS: usize = 2048;
/// Tilt of the drifted scenario's potential `phi(a, b) = TILT (b - 1)`.
pub const TILT: f64 = 0.0866;
/// Terms of the base-2 Liouville number.
pub const LIOUVILLE_TERMS: u32 = 4;

/// Three symbols, `0 <-> 2` forbidden in one step.
pub fn three_symbol_spec() -> SubshiftSpec {
    SubshiftSpec::new(&[vec![1, 1, 0], vec![1, 1, 1], vec![0, 1, 1]]).expect("primitive")
}

/// Cocycle `v(a, b) = b - 1`.
pub fn step_cocycle(spec: &SubshiftSpec) -> Result<CocycleSpec> {
    CocycleSpec::lattice(spec, 1, |_, b| vec![b as i64 - 1])
}

pub fn cat_fiber() -> FiberAction {
    FiberAction::automorphism(IntMatrix::new(&[vec![2, 1], vec![1, 1]]).expect("square")).expect("unimodular")
}

/// Base weight of the first observable in the mixing scenarios.
pub fn weight_a() -> BasePart {
    BasePart::by_symbol(&[1.0, 1.5, 0.5])
}

pub fn weight_b() -> BasePart {
    BasePart::by_symbol(&[0.5, 1.0, 1.25])
}

/// S1: zero drift, hyperbolic automorphism fiber.
pub fn zero_drift_mixing() -> Result<SkewSystem> {
    let spec = three_symbol_spec();
    let m = build_gibbs(&spec, &Potential::zero(&spec))?;
    let c = step_cocycle(&spec)?;
    SkewSystem::new(BaseSystem::Sft(m), c, cat_fiber())
}

/// `A(x) cos(2 pi y_1)`.
pub fn mixing_observable() -> Observable {
    Observable::product(weight_a(), TrigPoly::cos(vec![1, 0], 1.0))
}

/// Zero-fiber-mean triple whose frequencies resonate at equal times.
pub fn triple_observables() -> [Observable; 3] {
    [
        Observable::product(weight_a(), TrigPoly::cos(vec![1, 0], 1.0)),
        Observable::product(weight_b(), TrigPoly::cos(vec![0, 1], 1.0)),
        Observable::product(BasePart::Constant(1.0), TrigPoly::cos(vec![1, 1], 1.0)),
    ]
}

pub fn tilted_measure() -> Result<GibbsMarkovMeasure> {
    let spec = three_symbol_spec();
    build_gibbs(&spec, &Potential::from_fn(&spec, |_, b| TILT * (b as f64 - 1.0)))
}

/// S2: nonzero drift, same fiber.
pub fn drifted_mixing() -> Result<SkewSystem> {
    let m = tilted_measure()?;
    let c = step_cocycle(m.spec())?;
    SkewSystem::new(BaseSystem::Sft(m), c, cat_fiber())
}

/// S3/S4: uniform full 3-shift, cocycle `(-3, 1, 2)` by the landing symbol,
/// rotation fiber by `alpha`.
pub fn rotation_system(alpha: f64) -> Result<SkewSystem> {
    let m = GibbsMarkovMeasure::uniform_full_shift(3);
    let steps = [-3, 1, 2];
    let c = CocycleSpec::lattice(m.spec(), 1, |_, b| vec![steps[b]])?;
    SkewSystem::new(BaseSystem::Sft(m), c, FiberAction::rotation(alpha))
}

pub fn golden_rotation() -> Result<SkewSystem> {
    rotation_system(GOLDEN)
}

pub fn liouville_alpha() -> f64 {
    liouville(2.0, LIOUVILLE_TERMS)
}

pub fn liouville_rotation() -> Result<SkewSystem> {
    rotation_system(liouville_alpha())
}

/// Truncated sawtooth `{y} - 1/2`.
pub fn sawtooth_observable() -> Observable {
    Observable::product(BasePart::Constant(1.0), TrigPoly::sawtooth(SAWTOOTH_HARMONICS))
}

/// S5: golden-mean shift with its maximal-entropy measure and the cocycle
/// `v(0,0) = v(0,1) = 1`, `v(1,0) = 0`.
pub fn appendix_base() -> Result<(GibbsMarkovMeasure, CocycleSpec)> {
    let spec = SubshiftSpec::golden_mean();
    let m = build_gibbs(&spec, &Potential::zero(&spec))?;
    let c = CocycleSpec::lattice(&spec, 1, |a, b| vec![if (a, b) == (1, 0) { 0 } else { 1 }])?;
    Ok((m, c))
}
