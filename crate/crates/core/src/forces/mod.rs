//! Force fields `F = -grad V + eps * Delta`, their Lipschitz constants, and the
//! free-energy reference equilibrium.

pub mod library;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::torus::{
    gradient, periodic_distance, DensityField, ScalarField, SparseSpectrum, SpectralOps, TorusGrid, VectorField,
    POSITIVITY_FLOOR,
};

const REFINE: usize = 4;

/// Force `F = -grad V + eps * Delta` on `T^n` at inverse temperature `beta`.
#[derive(Debug, Clone)]
pub struct ForceField {
    potential: ScalarField,
    nonconservative: VectorField,
    epsilon: f64,
    beta: f64,
    values: VectorField,
}

impl ForceField {
    pub fn new(potential: ScalarField, nonconservative: VectorField, epsilon: f64, beta: f64) -> Result<Self> {
        let grid = potential.grid().clone();
        if *nonconservative.grid() != grid {
            return contract("potential and perturbation live on different grids");
        }
        if nonconservative.dim() != grid.n() {
            return contract(format!(
                "perturbation has {} components on T^{}",
                nonconservative.dim(),
                grid.n()
            ));
        }
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return contract(format!("epsilon must be finite and nonnegative, got {epsilon}"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return contract(format!("beta must be positive, got {beta}"));
        }
        if !potential.is_finite() || !nonconservative.is_finite() {
            return contract("force ingredients must be finite");
        }
        let grad = gradient(&potential)?;
        let values = grad.axpby(-1.0, &nonconservative, epsilon)?;
        Ok(Self {
            potential,
            nonconservative,
            epsilon,
            beta,
            values,
        })
    }

    pub fn conservative(potential: ScalarField, beta: f64) -> Result<Self> {
        let n = potential.grid().n();
        let zero = VectorField::zeros(potential.grid(), n);
        Self::new(potential, zero, 0.0, beta)
    }

    pub fn zero(grid: &TorusGrid, beta: f64) -> Result<Self> {
        Self::conservative(ScalarField::zeros(grid), beta)
    }

    /// Same force at a different inverse temperature.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(self.potential.clone(), self.nonconservative.clone(), self.epsilon, beta)
    }

    pub fn grid(&self) -> &TorusGrid {
        self.potential.grid()
    }

    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    pub fn nonconservative(&self) -> &VectorField {
        &self.nonconservative
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn values(&self) -> &VectorField {
        &self.values
    }

    pub fn is_conservative(&self) -> bool {
        self.epsilon == 0.0 || self.nonconservative.sup_norm() == 0.0
    }

    /// `sup |F|` over the grid (Euclidean norm per point).
    pub fn sup_norm(&self) -> f64 {
        self.values.sup_norm()
    }

    /// `sup |F + grad V| = eps * sup |Delta|`.
    pub fn perturbation_size(&self) -> f64 {
        self.epsilon * self.nonconservative.sup_norm()
    }

    /// First `m` components of the force, as a field on `T^n`.
    pub fn f1(&self) -> Vec<&[f64]> {
        (0..self.grid().m()).map(|c| self.values.component(c)).collect()
    }

    /// Lipschitz constant of `x -> F1(x, y)`: the sup of the Frobenius norm of
    /// `d_x F1`, evaluated on a refined grid through the trigonometric interpolant.
    pub fn lipschitz_x(&self) -> f64 {
        let m = self.grid().m();
        self.jacobian_sup(0..m)
    }

    /// Lipschitz constant of `y -> F1(x, y)`.
    pub fn lipschitz_y(&self) -> f64 {
        let grid = self.grid();
        self.jacobian_sup(grid.m()..grid.n())
    }

    fn jacobian_sup(&self, axes: std::ops::Range<usize>) -> f64 {
        let grid = self.grid();
        let m = grid.m();
        if axes.is_empty() {
            return 0.0;
        }
        let ops = SpectralOps::new(grid);
        let mut comps = Vec::new();
        for c in 0..m {
            let spec = grid.forward_real(self.values.component(c));
            for axis in axes.clone() {
                comps.push(ops.derivative_from_spectrum(&spec, axis));
            }
        }
        let jac = VectorField::new(grid.clone(), comps).expect("grid-shaped components");
        let interp = SparseSpectrum::from_vector(&jac);
        if interp.mode_count() == 0 {
            return 0.0;
        }
        let fine: Vec<usize> = grid.resolution().iter().map(|r| r * REFINE).collect();
        let fine = TorusGrid::new(&fine, m).expect("refined grid is valid");
        let mut scratch = Vec::new();
        let mut out = vec![0.0; jac.dim()];
        let mut sup = jac.sup_norm();
        for flat in 0..fine.len() {
            interp.eval_into(&fine.coords(flat), &mut scratch, &mut out);
            sup = sup.max(out.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        sup
    }
}

/// `-grad V + eps * Delta` sampled on `grid`.
pub fn evaluate_force(f: &ForceField, grid: &TorusGrid) -> Result<VectorField> {
    if f.grid() != grid {
        return contract(format!("force lives on {:?}, requested {:?}", f.grid(), grid));
    }
    Ok(f.values.clone())
}

/// Sampled Lipschitz estimate of `x -> F1(x, y)` with a 5% safety factor.
///
/// Half the triples use nearby `x, x'` (separation below one cell) to resolve
/// the local slope; the rest are uniform.
pub fn lipschitz_estimate(f: &ForceField, samples: usize, seed: u64) -> Result<f64> {
    if samples == 0 {
        return contract("lipschitz_estimate needs at least one sample");
    }
    let grid = f.grid();
    let (n, m) = (grid.n(), grid.m());
    let f1: Vec<Vec<f64>> = f.f1().iter().map(|c| c.to_vec()).collect();
    let interp = SparseSpectrum::from_vector(&VectorField::new(grid.clone(), f1)?);
    if interp.mode_count() == 0 {
        return Ok(0.0);
    }
    let h = grid.min_spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scratch = Vec::new();
    let (mut a, mut b) = (vec![0.0; m], vec![0.0; m]);
    let mut best = 0.0f64;
    for s in 0..samples {
        let p: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut q = p.clone();
        for v in q.iter_mut().take(m) {
            *v = if s % 2 == 0 {
                (*v + h * rng.random_range(-1.0..1.0)).rem_euclid(1.0)
            } else {
                rng.random::<f64>()
            };
        }
        let d = periodic_distance(&p[..m], &q[..m])?;
        if d < 1e-9 {
            continue;
        }
        interp.eval_into(&p, &mut scratch, &mut a);
        interp.eval_into(&q, &mut scratch, &mut b);
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        best = best.max(diff / d);
    }
    Ok(1.05 * best)
}

/// Free energy `A`, its gradient, and the Gibbs and biased equilibria.
#[derive(Debug, Clone)]
pub struct ReferenceEquilibrium {
    pub a: ScalarField,
    pub grad_a: VectorField,
    pub mu: DensityField,
    pub mu_a: DensityField,
}

/// `A(x) = -1/beta ln int exp(-beta V(x, y)) dy`, gauged to `int A = 0`.
pub fn free_energy(v: &ScalarField, beta: f64) -> Result<ReferenceEquilibrium> {
    if !(beta > 0.0) {
        return contract(format!("beta must be positive, got {beta}"));
    }
    if !v.is_finite() {
        return contract("potential must be finite");
    }
    let grid = v.grid();
    let xi = grid.xi_grid();
    let fiber = grid.fiber_len();
    let mut a: Vec<f64> = v
        .values()
        .chunks_exact(fiber)
        .map(|vs| {
            let min = vs.iter().copied().fold(f64::INFINITY, f64::min);
            let s = vs.iter().map(|&u| (-beta * (u - min)).exp()).sum::<f64>() / fiber as f64;
            min - s.ln() / beta
        })
        .collect();
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    a.iter_mut().for_each(|x| *x -= mean);
    let a = ScalarField::new(xi, a)?;
    let grad_a = gradient(&a)?;
    let mu = DensityField::gibbs(v, beta)?;
    let biased: Vec<f64> = v
        .values()
        .chunks_exact(fiber)
        .zip(a.values())
        .flat_map(|(vs, &ax)| vs.iter().map(move |&u| u - ax))
        .collect();
    let mu_a = DensityField::gibbs(&ScalarField::new(grid.clone(), biased)?, beta)?;
    Ok(ReferenceEquilibrium { a, grad_a, mu, mu_a })
}

/// Conditional mean `x -> -sum_y F1 pi / sum_y pi` for raw grid arrays.
pub(crate) fn conditional_mean_force(grid: &TorusGrid, f1: &[&[f64]], pi: &[f64]) -> Result<Vec<Vec<f64>>> {
    let fiber = grid.fiber_len();
    let xi_len = grid.xi_len();
    let mut out = vec![vec![0.0; xi_len]; f1.len()];
    for x in 0..xi_len {
        let slice = &pi[x * fiber..(x + 1) * fiber];
        let mass: f64 = slice.iter().sum();
        if !(mass / fiber as f64 > POSITIVITY_FLOOR) {
            return Err(Error::DegenerateConditional {
                index: x,
                marginal: mass / fiber as f64,
            });
        }
        for (c, comp) in f1.iter().enumerate() {
            let s: f64 = comp[x * fiber..(x + 1) * fiber].iter().zip(slice).map(|(f, p)| f * p).sum();
            out[c][x] = -s / mass;
        }
    }
    Ok(out)
}

/// `G(x) = -int F1(x, y) pi(y | x) dy`.
pub fn local_mean_force(f: &ForceField, pi: &DensityField) -> Result<VectorField> {
    if f.grid() != pi.grid() {
        return contract("force and density live on different grids");
    }
    let comps = conditional_mean_force(f.grid(), &f.f1(), pi.values())?;
    VectorField::new(f.grid().xi_grid(), comps)
}
