//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rand::Rng as _;
use rand_distr::StandardNormal;

use fedselect::data::{generate_synthetic_world, SymmetrizedExample, World, WorldParams};
use fedselect::models::SelectorArch;
use fedselect::rng::Rng;

/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Largest accepted relative error between analytic and numeric gradients.
pub const FD_REL_TOL: f64 = 1e-4;

pub fn gaussian(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Denominator floor for relative errors. Central differences of an O(1)
/// loss carry about `eps / FD_STEP ~ 2e-11` of round-off, so coordinates
/// far below this floor cannot be resolved relatively.
pub const FD_REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, FD_REL_FLOOR)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_REL_FLOOR)
}

/// Central differences of `f` at `params`, one coordinate at a time.
pub fn numeric_grad(params: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + FD_STEP;
            let up = f(&p);
            p[i] = orig - FD_STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Worst per-coordinate relative error.
pub fn worst_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| rel_err(*a, *n))
        .fold(0.0, f64::max)
}

/// Random symmetrized examples with random labels for an architecture.
pub fn random_examples(arch: &SelectorArch, n: usize, rng: &mut Rng) -> Vec<SymmetrizedExample> {
    (0..n)
        .map(|i| SymmetrizedExample {
            x: gaussian(arch.d_x, rng),
            y0: gaussian(arch.d_y, rng),
            y1: gaussian(arch.d_y, rng),
            label: rng.random_range(0..2u8),
            source: i,
        })
        .collect()
}

pub fn world(params: WorldParams) -> World {
    generate_synthetic_world(&params.materialize().expect("valid world")).expect("world generates")
}

/// Binomial standard deviation of a count.
pub fn binomial_sigma(n: usize, p: f64) -> f64 {
    (n as f64 * p * (1.0 - p)).sqrt()
}
