use std::f64::consts::PI;

use rand::Rng;

use super::field::{ScalarField, VectorField};
use super::grid::TorusGrid;

/// Random real trigonometric polynomial with `terms` nonconstant modes,
/// `|k_a| <= max_mode` on every axis and coefficients uniform in `[-1, 1]`.
pub fn random_trig_polynomial<R: Rng + ?Sized>(
    grid: &TorusGrid,
    max_mode: i64,
    terms: usize,
    rng: &mut R,
) -> ScalarField {
    let n = grid.n();
    let mut modes = Vec::with_capacity(terms);
    while modes.len() < terms {
        let k: Vec<f64> = (0..n).map(|_| rng.random_range(-max_mode..=max_mode) as f64).collect();
        if k.iter().all(|&c| c == 0.0) {
            continue;
        }
        let a: f64 = rng.random_range(-1.0..1.0);
        let b: f64 = rng.random_range(-1.0..1.0);
        modes.push((k, a, b));
    }
    ScalarField::from_fn(grid, |p| {
        modes
            .iter()
            .map(|(k, a, b)| {
                let phase = 2.0 * PI * k.iter().zip(p).map(|(k, x)| k * x).sum::<f64>();
                a * phase.cos() + b * phase.sin()
            })
            .sum()
    })
}

pub fn random_trig_vector<R: Rng + ?Sized>(
    grid: &TorusGrid,
    dim: usize,
    max_mode: i64,
    terms: usize,
    rng: &mut R,
) -> VectorField {
    let comps = (0..dim)
        .map(|_| random_trig_polynomial(grid, max_mode, terms, rng))
        .collect();
    VectorField::from_scalars(comps).expect("components share a grid")
}
