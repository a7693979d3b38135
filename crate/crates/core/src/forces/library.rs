//! Built-in test potentials and non-conservative perturbations.
//!
//! Coordinates: `x` is axis 0 and `y` is axis `m` (the first fiber axis).

use std::f64::consts::PI;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ForceField;
use crate::error::{contract, Error, Result};
use crate::torus::{random_trig_vector, ScalarField, TorusGrid, VectorField};

const TWO_PI: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialId {
    Zero,
    /// `sum_i cos(2 pi z_i)`
    V1,
    /// `cos(2 pi x) cos(2 pi y) + 0.5 cos(2 pi y)`
    V2,
    /// `cos(4 pi x) + 0.3 cos(2 pi (x - y))`
    V3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationId {
    None,
    /// `(-sin(2 pi y) psi, sin(2 pi x) psi)` with `psi = (1 + cos(2 pi (x + y))) / 2`
    Rotational,
    /// Seeded band-limited field with both divergence and curl.
    Random,
}

impl FromStr for PotentialId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "zero" | "none" => Ok(Self::Zero),
            "v1" => Ok(Self::V1),
            "v2" => Ok(Self::V2),
            "v3" => Ok(Self::V3),
            other => Err(Error::Config(format!("unknown potential `{other}`"))),
        }
    }
}

impl FromStr for PerturbationId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "zero" => Ok(Self::None),
            "rotational" | "rot" => Ok(Self::Rotational),
            "random" => Ok(Self::Random),
            other => Err(Error::Config(format!("unknown perturbation `{other}`"))),
        }
    }
}

fn needs_fiber(grid: &TorusGrid, what: &str) -> Result<usize> {
    if grid.n() <= grid.m() {
        return contract(format!("{what} needs at least one fiber axis"));
    }
    Ok(grid.m())
}

pub fn potential(grid: &TorusGrid, id: PotentialId) -> Result<ScalarField> {
    Ok(match id {
        PotentialId::Zero => ScalarField::zeros(grid),
        PotentialId::V1 => ScalarField::from_fn(grid, |p| p.iter().map(|z| (TWO_PI * z).cos()).sum()),
        PotentialId::V2 => {
            let ya = needs_fiber(grid, "V2")?;
            ScalarField::from_fn(grid, |p| {
                (TWO_PI * p[0]).cos() * (TWO_PI * p[ya]).cos() + 0.5 * (TWO_PI * p[ya]).cos()
            })
        }
        PotentialId::V3 => {
            let ya = needs_fiber(grid, "V3")?;
            ScalarField::from_fn(grid, |p| (2.0 * TWO_PI * p[0]).cos() + 0.3 * (TWO_PI * (p[0] - p[ya])).cos())
        }
    })
}

/// Perturbation field normalized to grid sup norm 1 (zero for `None`).
pub fn perturbation(grid: &TorusGrid, id: PerturbationId, seed: u64) -> Result<VectorField> {
    let n = grid.n();
    let raw = match id {
        PerturbationId::None => return Ok(VectorField::zeros(grid, n)),
        PerturbationId::Rotational => {
            let ya = needs_fiber(grid, "the rotational perturbation")?;
            VectorField::from_fn(grid, n, |p| {
                let psi = 0.5 * (1.0 + (TWO_PI * (p[0] + p[ya])).cos());
                let mut v = vec![0.0; n];
                v[0] = -(TWO_PI * p[ya]).sin() * psi;
                v[ya] = (TWO_PI * p[0]).sin() * psi;
                v
            })
        }
        PerturbationId::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_trig_vector(grid, n, 2, 4, &mut rng)
        }
    };
    let sup = raw.sup_norm();
    Ok(raw.scale(1.0 / sup))
}

pub fn build_force(
    grid: &TorusGrid,
    potential_id: PotentialId,
    perturbation_id: PerturbationId,
    epsilon: f64,
    beta: f64,
    seed: u64,
) -> Result<ForceField> {
    ForceField::new(potential(grid, potential_id)?, perturbation(grid, perturbation_id, seed)?, epsilon, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::divergence;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perturbations_have_unit_sup_norm() {
        let g = TorusGrid::uniform(2, 1, 32).unwrap();
        for id in [PerturbationId::Rotational, PerturbationId::Random] {
            assert_abs_diff_eq!(perturbation(&g, id, 3).unwrap().sup_norm(), 1.0, epsilon = 1e-14);
        }
        let f = build_force(&g, PotentialId::V1, PerturbationId::Rotational, 0.05, 1.0, 0).unwrap();
        assert_abs_diff_eq!(f.perturbation_size(), 0.05, epsilon = 1e-14);
    }

    #[test]
    fn rotational_field_is_not_a_gradient() {
        let g = TorusGrid::uniform(2, 1, 32).unwrap();
        let d = perturbation(&g, PerturbationId::Rotational, 0).unwrap();
        let ops = crate::torus::SpectralOps::new(&g);
        let dyx = ops.gradient(d.component(0))[1].clone();
        let dxy = ops.gradient(d.component(1))[0].clone();
        let curl = dxy.iter().zip(&dyx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(curl > 1.0);
        assert!(divergence(&d).unwrap().sup_norm() > 0.1);
    }

    #[test]
    fn random_perturbation_is_seeded() {
        let g = TorusGrid::uniform(2, 1, 16).unwrap();
        let a = perturbation(&g, PerturbationId::Random, 5).unwrap();
        let b = perturbation(&g, PerturbationId::Random, 5).unwrap();
        let c = perturbation(&g, PerturbationId::Random, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn names_parse() {
        assert_eq!("V3".parse::<PotentialId>().unwrap(), PotentialId::V3);
        assert_eq!("rot".parse::<PerturbationId>().unwrap(), PerturbationId::Rotational);
        assert!("v9".parse::<PotentialId>().is_err());
    }
}
