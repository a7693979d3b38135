//! Stationary densities of fixed-drift diffusions and the stationary
//! fixed point `B = T(B)` of the adaptive dynamics.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stepper::{transport_spectrum, Etdrk4};
use super::Method;
use crate::error::{contract, Error, Result};
use crate::forces::{local_mean_force, ForceField};
use crate::helmholtz::project_lebesgue;
use crate::linalg::gmres;
use crate::torus::{random_trig_vector, DensityField, ScalarField, SpectralOps, TorusGrid, VectorField};

pub const LINEAR_TOL: f64 = 1e-9;
const GMRES_RESTART: usize = 50;
const GMRES_MAX_ITER: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolver {
    /// GMRES on `w = nu - 1`, preconditioned by the inverse Laplacian.
    Gmres,
    /// March the linear Fokker-Planck equation until `||d_t nu||_2 <= tol`.
    TimeMarch { dt: f64, max_steps: usize },
}

#[derive(Debug, Clone)]
pub struct StationaryLinear {
    pub nu: DensityField,
    /// `||beta^-1 Lap nu - div(a nu)||_2`.
    pub residual: f64,
    pub iterations: usize,
}

fn l2(grid: &TorusGrid, v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() * grid.cell_volume()).sqrt()
}

fn check_drift(a: &VectorField, beta: f64) -> Result<()> {
    if a.dim() != a.grid().n() {
        return contract(format!("drift needs {} components, got {}", a.grid().n(), a.dim()));
    }
    if !a.is_finite() {
        return contract("drift must be finite");
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return contract(format!("beta must be positive, got {beta}"));
    }
    Ok(())
}

/// `beta^-1 Lap nu - div(a nu)` on the grid.
fn stationary_operator(ops: &SpectralOps, a: &VectorField, beta: f64, nu: &[f64]) -> Vec<f64> {
    let grid = ops.grid();
    let mut spec = vec![Complex64::new(0.0, 0.0); grid.len()];
    transport_spectrum(ops, a.components(), nu, &mut spec);
    let nu_spec = grid.forward_real(nu);
    for ((s, u), &k2) in spec.iter_mut().zip(&nu_spec).zip(ops.k2()) {
        *s -= u * (4.0 * std::f64::consts::PI * std::f64::consts::PI * k2 / beta);
    }
    grid.inverse_real(spec)
}

/// `||beta^-1 Lap nu - div(a nu)||_2`.
pub fn stationary_residual(a: &VectorField, beta: f64, nu: &DensityField) -> Result<f64> {
    check_drift(a, beta)?;
    crate::torus::check_same_grid(a.grid(), nu.grid())?;
    let ops = SpectralOps::new(a.grid());
    Ok(l2(a.grid(), &stationary_operator(&ops, a, beta, nu.values())))
}

/// Stationary density of `dZ = a(Z) dt + sqrt(2/beta) dW`.
pub fn stationary_linear(a: &VectorField, beta: f64) -> Result<DensityField> {
    Ok(stationary_linear_with(a, beta, LinearSolver::Gmres, LINEAR_TOL)?.nu)
}

pub fn stationary_linear_with(a: &VectorField, beta: f64, solver: LinearSolver, tol: f64) -> Result<StationaryLinear> {
    check_drift(a, beta)?;
    let ops = SpectralOps::new(a.grid());
    let (values, iterations) = match solver {
        LinearSolver::Gmres => solve_gmres(&ops, a, beta, tol)?,
        LinearSolver::TimeMarch { dt, max_steps } => solve_time_march(&ops, a, beta, tol, dt, max_steps)?,
    };
    let residual = l2(a.grid(), &stationary_operator(&ops, a, beta, &values));
    if residual > tol {
        return Err(Error::SolverFailure {
            message: format!("stationary solve stopped above tolerance after {iterations} iterations"),
            residual,
        });
    }
    let nu = DensityField::normalized(a.grid().clone(), values).map_err(|_| Error::SolverFailure {
        message: "stationary solution is not strictly positive".into(),
        residual,
    })?;
    Ok(StationaryLinear { nu, residual, iterations })
}

fn solve_gmres(ops: &SpectralOps, a: &VectorField, beta: f64, tol: f64) -> Result<(Vec<f64>, usize)> {
    let grid = ops.grid();
    // w - beta Lap^-1 div(a w) = beta Lap^-1 div(a)
    let apply = |w: &[f64]| -> Vec<f64> {
        let flux: Vec<Vec<f64>> = a
            .components()
            .iter()
            .map(|c| c.iter().zip(w).map(|(x, y)| x * y).collect())
            .collect();
        let refs: Vec<&[f64]> = flux.iter().map(Vec::as_slice).collect();
        let mut spec = ops.divergence_spectrum(&refs);
        ops.inverse_laplacian_spectrum(&mut spec);
        let inv = grid.inverse_real(spec);
        w.iter().zip(&inv).map(|(x, y)| x - beta * y).collect()
    };
    let refs: Vec<&[f64]> = a.components().iter().map(Vec::as_slice).collect();
    let mut rhs_spec = ops.divergence_spectrum(&refs);
    ops.inverse_laplacian_spectrum(&mut rhs_spec);
    let rhs: Vec<f64> = grid.inverse_real(rhs_spec).into_iter().map(|v| beta * v).collect();

    let mut w = vec![0.0; grid.len()];
    let mut iterations = 0;
    let mut inner = 1e-12;
    loop {
        let out = gmres(&apply, &rhs, w, GMRES_RESTART, inner, GMRES_MAX_ITER);
        iterations += out.iterations;
        w = out.x;
        let nu: Vec<f64> = w.iter().map(|v| 1.0 + v).collect();
        let res = l2(grid, &stationary_operator(ops, a, beta, &nu));
        // a stagnated inner solve will not improve with a tighter target
        if res <= tol || inner < 1e-15 || out.relative_residual > inner {
            return Ok((nu, iterations));
        }
        inner *= 0.01;
    }
}

fn solve_time_march(
    ops: &SpectralOps,
    a: &VectorField,
    beta: f64,
    tol: f64,
    dt: f64,
    max_steps: usize,
) -> Result<(Vec<f64>, usize)> {
    let grid = ops.grid();
    let limit = super::max_stable_dt(grid, a.sup_norm(), 0.0);
    if !(dt > 0.0) || dt > limit * (1.0 + 1e-12) {
        return contract(format!("time-march step {dt} outside (0, {limit:.4e}]"));
    }
    let scheme = Etdrk4::new(ops, beta, dt);
    let nonlinear = |u: &[Complex64]| -> Result<Vec<Complex64>> {
        let pi = grid.inverse_real(u.to_vec());
        let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
        transport_spectrum(ops, a.components(), &pi, &mut out);
        Ok(out)
    };
    let mut u = vec![Complex64::new(0.0, 0.0); grid.len()];
    u[0] = Complex64::new(grid.len() as f64, 0.0);
    for s in 0..max_steps {
        if s % 20 == 0 {
            let nu = grid.inverse_real(u.clone());
            if l2(grid, &stationary_operator(ops, a, beta, &nu)) <= tol {
                return Ok((nu, s));
            }
        }
        u = scheme.advance(&u, nonlinear)?;
    }
    Ok((grid.inverse_real(u), max_steps))
}

/// Converged stationary pair with its certificates.
#[derive(Debug, Clone)]
pub struct StationaryState {
    pub pi_inf: DensityField,
    pub b_inf: VectorField,
    /// Zero-mean potential of the Lebesgue projection of `b_inf`.
    pub h_inf: ScalarField,
    pub fp_residual: f64,
    pub pde_residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct FixedPointOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub linear_tol: f64,
    pub b0: Option<VectorField>,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-9,
            linear_tol: LINEAR_TOL,
            b0: None,
        }
    }
}

fn biased_drift(force: &ForceField, b: &VectorField) -> Result<VectorField> {
    let grid = force.grid();
    let lifted = VectorField::lift_from_xi(b, grid, grid.n())?;
    force.values().add(&lifted)
}

/// Picard iteration `B <- (1 - theta) B + theta T(B)` for
/// `T(B) = P(G(nu_{F + B}))`, `P` the projection for PABF and identity for ABF.
pub fn fixed_point_iterate(force: &ForceField, method: Method, max_iters: usize, tol: f64) -> Result<StationaryState> {
    fixed_point_iterate_with(
        force,
        method,
        &FixedPointOptions {
            max_iters,
            tol,
            ..Default::default()
        },
    )
}

pub fn fixed_point_iterate_with(force: &ForceField, method: Method, opts: &FixedPointOptions) -> Result<StationaryState> {
    if method == Method::Unbiased {
        return contract("fixed_point_iterate needs ABF or PABF");
    }
    let grid = force.grid();
    let xi = grid.xi_grid();
    let mut b = match &opts.b0 {
        Some(b0) => {
            crate::torus::check_same_grid(b0.grid(), &xi)?;
            b0.clone()
        }
        None => VectorField::zeros(&xi, grid.m()),
    };
    let mut history = Vec::new();
    let mut theta = 1.0;
    let mut increases = 0;
    for k in 0..opts.max_iters {
        let lin = stationary_linear_with(&biased_drift(force, &b)?, force.beta(), LinearSolver::Gmres, opts.linear_tol)?;
        let g = local_mean_force(force, &lin.nu)?;
        let tb = match method {
            Method::Pabf => project_lebesgue(&g)?.projected,
            _ => g,
        };
        let r = tb.sub(&b)?.l2_norm();
        if let Some(&prev) = history.last() {
            increases = if r > prev { increases + 1 } else { 0 };
        }
        history.push(r);
        if r <= opts.tol {
            let h_inf = project_lebesgue(&b)?.potential;
            return Ok(StationaryState {
                pi_inf: lin.nu,
                b_inf: b,
                h_inf,
                fp_residual: r,
                pde_residual: lin.residual,
                iterations: k,
                history,
            });
        }
        if increases >= 2 {
            theta = 0.5;
        }
        b = b.axpby(1.0 - theta, &tb, theta)?;
    }
    Err(Error::NonConvergence { history })
}

/// Runs the iteration from `starts` random initial biases (plus `B = 0`) and
/// returns the distinct limits found, with the number of non-converged starts.
pub fn fixed_point_multistart(
    force: &ForceField,
    method: Method,
    opts: &FixedPointOptions,
    starts: usize,
    seed: u64,
) -> Result<(Vec<StationaryState>, usize)> {
    let xi = force.grid().xi_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut limits: Vec<StationaryState> = Vec::new();
    let mut failures = 0;
    for s in 0..=starts {
        let b0 = if s == 0 {
            None
        } else {
            let raw = random_trig_vector(&xi, xi.n(), 2, 3, &mut rng);
            let scale = force.sup_norm().max(1.0) * rng.random_range(0.1..1.0) / raw.sup_norm().max(1e-300);
            Some(raw.scale(scale))
        };
        let o = FixedPointOptions {
            b0,
            ..opts.clone()
        };
        match fixed_point_iterate_with(force, method, &o) {
            Ok(state) => {
                let novel = limits
                    .iter()
                    .all(|l| l.b_inf.sub(&state.b_inf).map(|d| d.l2_norm() > 1e-6).unwrap_or(true));
                if novel {
                    limits.push(state);
                }
            }
            Err(Error::NonConvergence { .. }) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((limits, failures))
}

/// Per-pair outcomes of the drift-to-measure audit.
#[derive(Debug, Clone)]
pub struct DriftLipschitzReport {
    /// `||nu_a - nu_b||_2 / ||a - b||_2` per pair.
    pub ratios: Vec<f64>,
    /// `max(sup nu / inf nu)` over both members, per pair.
    pub harnack: Vec<f64>,
}

impl DriftLipschitzReport {
    pub fn max_ratio(&self, pairs: usize) -> f64 {
        self.ratios.iter().take(pairs).copied().fold(0.0, f64::max)
    }

    pub fn max_harnack(&self, pairs: usize) -> f64 {
        self.harnack.iter().take(pairs).copied().fold(0.0, f64::max)
    }
}

/// Random band-limited drift pairs with `sup |a|, sup |b| <= m_cap`.
pub fn drift_lipschitz_check(
    grid: &TorusGrid,
    pairs: usize,
    beta: f64,
    m_cap: f64,
    seed: u64,
) -> Result<DriftLipschitzReport> {
    if pairs == 0 {
        return contract("drift_lipschitz_check needs at least one pair");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> VectorField {
        let raw = random_trig_vector(grid, grid.n(), 2, 3, rng);
        let s = m_cap * rng.random_range(0.1..1.0) / raw.sup_norm().max(1e-300);
        raw.scale(s)
    };
    let mut report = DriftLipschitzReport {
        ratios: Vec::with_capacity(pairs),
        harnack: Vec::with_capacity(pairs),
    };
    for _ in 0..pairs {
        let a = draw(&mut rng);
        let b = draw(&mut rng);
        let na = stationary_linear(&a, beta)?;
        let nb = stationary_linear(&b, beta)?;
        let dn: Vec<f64> = na.values().iter().zip(nb.values()).map(|(x, y)| x - y).collect();
        let da = a.sub(&b)?.l2_norm();
        let ratio = if da > 1e-14 { l2(grid, &dn) / da } else { 0.0 };
        report.ratios.push(ratio);
        report
            .harnack
            .push((na.max() / na.min()).max(nb.max() / nb.min()));
    }
    Ok(report)
}
