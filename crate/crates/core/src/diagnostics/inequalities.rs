//! Randomized audits of functional inequalities on the torus. Each check
//! returns the worst slack `rhs - lhs` over its trials.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fisher_information, relative_entropy};
use crate::error::{contract, Result};
use crate::torus::{gradient, random_trig_polynomial, DensityField, ScalarField, TorusGrid};

fn audit_grid(n: usize) -> Result<TorusGrid> {
    match n {
        1 => TorusGrid::uniform(1, 1, 256),
        2 => TorusGrid::uniform(2, 1, 48),
        3 => TorusGrid::uniform(3, 1, 16),
        _ => contract(format!("inequality audits support n in 1..=3, got {n}")),
    }
}

fn random_field(grid: &TorusGrid, rng: &mut ChaCha8Rng) -> ScalarField {
    let max_mode = if grid.n() == 3 { 2 } else { 4 };
    let terms = rng.random_range(1..=6);
    let f = random_trig_polynomial(grid, max_mode, terms, rng);
    f.add_constant(rng.random_range(-1.5..1.5))
}

fn random_density(grid: &TorusGrid, rng: &mut ChaCha8Rng) -> Result<DensityField> {
    let f = random_trig_polynomial(grid, 3, rng.random_range(1..=5), rng);
    let amp = rng.random_range(0.1..3.0) / f.sup_norm().max(1e-12);
    DensityField::normalized(grid.clone(), f.values().iter().map(|v| (amp * v).exp()).collect())
}

/// Slack of `|u|_2^2 <= 2 |u|_1^2 + a |grad u|_2^(2n/(n+2)) |u|_1^(4/(n+2))`
/// with `a = 2 * 3^(2n/(n+2))` for a single field.
pub fn nash_slack(u: &ScalarField) -> Result<f64> {
    let n = u.grid().n() as f64;
    let l1 = u.lp_norm(1.0);
    let l2sq = u.l2_norm().powi(2);
    let grad = gradient(u)?.l2_norm();
    let expo = 2.0 * n / (n + 2.0);
    let a = 2.0 * 3f64.powf(expo);
    Ok(2.0 * l1 * l1 + a * grad.powf(expo) * l1.powf(4.0 / (n + 2.0)) - l2sq)
}

pub fn nash_check(trials: usize, n: usize, seed: u64) -> Result<f64> {
    let grid = audit_grid(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        worst = worst.min(nash_slack(&random_field(&grid, &mut rng))?);
    }
    Ok(worst)
}

/// Slack of `|u - mean u|_2^2 <= |grad u|_2^2 / (4 pi^2)`.
pub fn poincare_check(trials: usize, n: usize, seed: u64) -> Result<f64> {
    let grid = audit_grid(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let u = random_field(&grid, &mut rng);
        let lhs = u.zero_mean().l2_norm().powi(2);
        let rhs = gradient(&u)?.l2_norm().powi(2) / (4.0 * PI * PI);
        worst = worst.min(rhs - lhs);
    }
    Ok(worst)
}

/// Slack of `H(mu | 1) <= I(mu | 1) / (8 pi^2)` for random positive `mu` on `T^1`.
pub fn lsi_check(trials: usize, seed: u64) -> Result<f64> {
    let grid = audit_grid(1)?;
    let uni = DensityField::uniform(&grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let mu = random_density(&grid, &mut rng)?;
        let slack = fisher_information(&mu, &uni)? / (8.0 * PI * PI) - relative_entropy(&mu, &uni)?;
        worst = worst.min(slack);
    }
    Ok(worst)
}

/// Slack of `TV(mu, nu) <= sqrt(2 H(mu | nu))` over random density pairs.
pub fn csiszar_kullback_check(trials: usize, n: usize, seed: u64) -> Result<f64> {
    let grid = audit_grid(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let mu = random_density(&grid, &mut rng)?;
        let nu = random_density(&grid, &mut rng)?;
        let tv = 0.5 * mu.values().iter().zip(nu.values()).map(|(a, b)| (a - b).abs()).sum::<f64>() * grid.cell_volume();
        worst = worst.min((2.0 * relative_entropy(&mu, &nu)?).sqrt() - tv);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nash_on_constants_and_cosine() {
        let g = audit_grid(1).unwrap();
        assert!((nash_slack(&ScalarField::constant(&g, 1.0)).unwrap() - 1.0).abs() < 1e-12);
        let u = ScalarField::from_fn(&g, |p| (2.0 * PI * p[0]).cos());
        let l1 = u.lp_norm(1.0);
        assert!((l1 - 2.0 / PI).abs() < 1e-4);
        assert!(2.0 * l1 * l1 - 0.5 >= 0.31);
        assert!(nash_slack(&u).unwrap() >= 0.31);
    }

    #[test]
    fn audits_pass_in_all_dimensions() {
        for n in 1..=3 {
            assert!(nash_check(100, n, 3).unwrap() >= -1e-9);
            assert!(poincare_check(60, n, 4).unwrap() >= -1e-9);
            assert!(csiszar_kullback_check(40, n, 5).unwrap() >= -1e-9);
        }
        assert!(lsi_check(100, 6).unwrap() >= -1e-12);
        assert!(nash_check(1, 4, 0).is_err());
    }
}
