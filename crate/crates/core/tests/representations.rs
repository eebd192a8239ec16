//! The eigenmode sum and the reflection sum describe the same Green function.

use convexlab::airy::AiryZeroTable;
use convexlab::green_reflection::{Reflection, ReflectionConfig};
use convexlab::green_spectral::{linspace, Spectral, SpectralConfig, Weighting};
use convexlab::model::{ModelParams, QuadraticForm};

#[test]
fn eigenmodes_match_reflections() {
    let params = ModelParams::new(0.05, 0.25, 0.3);
    let form = QuadraticForm::identity(1);
    let table = AiryZeroTable::shared();
    let xs = linspace(0.05, 0.45, 5);
    let ys = linspace(-1.6, -0.6, 5);
    let spec = Spectral::new(params, &form, table, SpectralConfig::default()).unwrap();
    let g = spec.field(0.6, &xs, &ys, Weighting::Total).unwrap();
    let refl = Reflection::new(params, &form, table, ReflectionConfig::default()).unwrap();
    let r = refl.brute(0.6, &xs, &ys, Weighting::Total).unwrap();
    let sup = g.sup().sup;
    let gap = g.values.iter().zip(&r.total.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / sup;
    assert!(gap < 1e-2);
}
