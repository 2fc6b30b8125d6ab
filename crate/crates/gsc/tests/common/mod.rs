//! Shared helpers for the integration tests: deterministic random problem
//! instances at desk scale.
#![allow(dead_code)] // not every test target uses every helper

use gsc::harmony::HarmonyParams;
use gsc::representation::FillerRoleSpec;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

/// A filler/role spec with generic names f0.., r0..
pub fn spec(f: usize, r: usize) -> FillerRoleSpec {
    FillerRoleSpec::new(
        (0..f).map(|i| format!("f{i}")).collect(),
        (0..r).map(|i| format!("r{i}")).collect(),
    )
    .unwrap()
}

/// Random Harmony parameters with symmetric W and entries in [-scale, scale].
pub fn random_params(rng: &mut ChaCha12Rng, n: usize, scale: f64) -> HarmonyParams {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-scale..scale));
    let w = (&a + a.transpose()) * 0.5;
    let b = DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale));
    HarmonyParams::new(w, b).unwrap()
}

/// Random W, b with Frobenius norms capped at 1 ("moderate magnitudes").
pub fn random_params_unit_norm(rng: &mut ChaCha12Rng, n: usize) -> HarmonyParams {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.6..0.6));
    let mut w = (&a + a.transpose()) * 0.5;
    let wn = w.norm();
    if wn > 1.0 {
        w /= wn;
    }
    let mut b = DVector::from_fn(n, |_, _| rng.gen_range(-0.6..0.6));
    let bn = b.norm();
    if bn > 1.0 {
        b /= bn;
    }
    HarmonyParams::new(w, b).unwrap()
}

/// Prints the one-line verdict for an acceptance criterion and panics on
/// failure so the test harness records it.
pub fn verdict(criterion: usize, name: &str, passed: bool, detail: &str) {
    println!(
        "acceptance criterion {criterion} ({name}): {} — {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} ({name}) failed: {detail}");
}
