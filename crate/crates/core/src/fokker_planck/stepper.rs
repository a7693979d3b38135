//! Exponential time differencing (fourth-order Runge-Kutta, Cox-Matthews form)
//! with the diffusion integrated exactly in Fourier space.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{marginal_deviation, BiasProfile, Method, PdeState};
use crate::error::{contract, Result};
use crate::forces::{conditional_mean_force, ForceField};
use crate::torus::{SpectralOps, TorusGrid, VectorField};

const TWO_PI: f64 = 2.0 * PI;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// `(phi1, phi2, phi3)(z)` for real `z <= 0`.
fn phi(z: f64) -> (f64, f64, f64) {
    if z.abs() < 1.0 {
        // phi_k(z) = sum_j z^j / (j + k)!
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let mut fact: f64 = (1..=k + 1).map(|i| i as f64).product();
            let mut term = 1.0 / fact;
            let mut s = term;
            for j in 1..30 {
                fact = (j + k + 1) as f64;
                term *= z / fact;
                s += term;
                if term.abs() < 1e-18 * s.abs() {
                    break;
                }
            }
            *o = s;
        }
        (out[0], out[1], out[2])
    } else {
        let e = z.exp();
        let p1 = (e - 1.0) / z;
        let p2 = (e - 1.0 - z) / (z * z);
        let p3 = (e - 1.0 - z - 0.5 * z * z) / (z * z * z);
        (p1, p2, p3)
    }
}

/// Per-mode ETDRK4 coefficients for the diagonal operator `L = -4 pi^2 |k|^2 / beta`.
#[derive(Debug, Clone)]
pub(crate) struct Etdrk4 {
    pub dt: f64,
    pub l: Vec<f64>,
    e: Vec<f64>,
    e2: Vec<f64>,
    q: Vec<f64>,
    f1: Vec<f64>,
    f2: Vec<f64>,
    f3: Vec<f64>,
}

impl Etdrk4 {
    pub fn new(ops: &SpectralOps, beta: f64, dt: f64) -> Self {
        let len = ops.k2().len();
        let mut s = Self {
            dt,
            l: Vec::with_capacity(len),
            e: Vec::with_capacity(len),
            e2: Vec::with_capacity(len),
            q: Vec::with_capacity(len),
            f1: Vec::with_capacity(len),
            f2: Vec::with_capacity(len),
            f3: Vec::with_capacity(len),
        };
        for &k2 in ops.k2() {
            let l = -4.0 * PI * PI * k2 / beta;
            let z = l * dt;
            let (p1, p2, p3) = phi(z);
            let (h1, _, _) = phi(0.5 * z);
            s.l.push(l);
            s.e.push(z.exp());
            s.e2.push((0.5 * z).exp());
            s.q.push(0.5 * dt * h1);
            s.f1.push(dt * (p1 - 3.0 * p2 + 4.0 * p3));
            s.f2.push(dt * (p2 - 2.0 * p3));
            s.f3.push(dt * (-p2 + 4.0 * p3));
        }
        s
    }

    pub fn advance(
        &self,
        u: &[Complex64],
        mut nonlinear: impl FnMut(&[Complex64]) -> Result<Vec<Complex64>>,
    ) -> Result<Vec<Complex64>> {
        let nu = nonlinear(u)?;
        let a: Vec<Complex64> = (0..u.len()).map(|i| u[i] * self.e2[i] + nu[i] * self.q[i]).collect();
        let na = nonlinear(&a)?;
        let b: Vec<Complex64> = (0..u.len()).map(|i| u[i] * self.e2[i] + na[i] * self.q[i]).collect();
        let nb = nonlinear(&b)?;
        let c: Vec<Complex64> = (0..u.len())
            .map(|i| a[i] * self.e2[i] + (nb[i] * 2.0 - nu[i]) * self.q[i])
            .collect();
        let nc = nonlinear(&c)?;
        Ok((0..u.len())
            .map(|i| {
                u[i] * self.e[i] + nu[i] * self.f1[i] + (na[i] + nb[i]) * (2.0 * self.f2[i]) + nc[i] * self.f3[i]
            })
            .collect())
    }
}

/// `-sum_j d_j (drift_j pi)` in Fourier space, for drift components on the full grid.
pub(crate) fn transport_spectrum(ops: &SpectralOps, drift: &[Vec<f64>], pi: &[f64], out: &mut [Complex64]) {
    let grid = ops.grid();
    out.iter_mut().for_each(|z| *z = ZERO);
    let mut buf = vec![ZERO; grid.len()];
    for (axis, comp) in drift.iter().enumerate() {
        for ((b, a), p) in buf.iter_mut().zip(comp).zip(pi) {
            *b = Complex64::new(a * p, 0.0);
        }
        grid.fft(&mut buf);
        for ((o, b), &k) in out.iter_mut().zip(&buf).zip(&ops.kd()[axis]) {
            *o -= b * Complex64::new(0.0, TWO_PI * k);
        }
    }
}

/// Largest step allowed by `dt <= 0.5 h / max(|F| + |B|, 1)`.
pub fn max_stable_dt(grid: &TorusGrid, force_sup: f64, bias_sup: f64) -> f64 {
    0.5 * grid.min_spacing() / (force_sup + bias_sup).max(1.0)
}

/// Time stepper for the adaptive-bias Fokker-Planck equation with a fixed
/// force, method and step size.
#[derive(Debug, Clone)]
pub struct Stepper {
    force: ForceField,
    method: Method,
    scheme: Etdrk4,
    ops: SpectralOps,
    xi_kd: Vec<Vec<f64>>,
    bias_stride: u64,
}

impl Stepper {
    pub fn new(force: &ForceField, method: Method, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return contract(format!("time step must be positive, got {dt}"));
        }
        let grid = force.grid();
        let ops = SpectralOps::new(grid);
        let xi_kd = SpectralOps::new(&grid.xi_grid()).kd().to_vec();
        Ok(Self {
            scheme: Etdrk4::new(&ops, force.beta(), dt),
            force: force.clone(),
            method,
            ops,
            xi_kd,
            bias_stride: 1,
        })
    }

    /// Recompute the bias every `stride` steps and hold it in between.
    pub fn with_bias_stride(mut self, stride: u64) -> Self {
        self.bias_stride = stride.max(1);
        self
    }

    pub fn dt(&self) -> f64 {
        self.scheme.dt
    }

    pub fn force(&self) -> &ForceField {
        &self.force
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn initial_state(&self, pi0: &crate::torus::DensityField) -> Result<PdeState> {
        PdeState::new(pi0, &self.force, self.method)
    }

    fn check_cfl(&self, bias_sup: f64) -> Result<()> {
        let limit = max_stable_dt(self.force.grid(), self.force.sup_norm(), bias_sup);
        if self.scheme.dt > limit * (1.0 + 1e-12) {
            return contract(format!(
                "time step {} exceeds the stability bound {limit:.6e} (|F| = {:.4}, |B| = {:.4})",
                self.scheme.dt,
                self.force.sup_norm(),
                bias_sup
            ));
        }
        Ok(())
    }

    /// `N(pi) = -div((F + B) pi)`, with the zero-fiber-wavenumber slice
    /// rewritten as `-div_x((B - G) pi^xi)`.
    fn nonlinear(&self, spec: &[Complex64], frozen: Option<&VectorField>) -> Result<Vec<Complex64>> {
        let grid = self.force.grid();
        let (m, fiber) = (grid.m(), grid.fiber_len());
        let pi = grid.inverse_real(spec.to_vec());
        let dev = marginal_deviation(grid, spec);
        let g = VectorField::new(grid.xi_grid(), conditional_mean_force(grid, &self.force.f1(), &pi)?)?;
        let bias = match frozen {
            None => BiasProfile::from_mean_force(g, self.method)?,
            Some(b) => BiasProfile::frozen(g, b.clone())?,
        };
        let f = self.force.values();
        let drift: Vec<Vec<f64>> = (0..grid.n())
            .map(|axis| {
                let mut c = f.component(axis).to_vec();
                if axis < m {
                    let b = bias.b.component(axis);
                    for (i, v) in c.iter_mut().enumerate() {
                        *v += b[i / fiber];
                    }
                }
                c
            })
            .collect();
        let mut out = vec![ZERO; grid.len()];
        transport_spectrum(&self.ops, &drift, &pi, &mut out);

        let xi = grid.xi_grid();
        for k in 0..grid.xi_len() {
            out[k * fiber] = ZERO;
        }
        let mut buf = vec![ZERO; xi.len()];
        for axis in 0..m {
            let d = bias.drift.component(axis);
            for (x, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(d[x] * (1.0 + dev[x]), 0.0);
            }
            xi.fft(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                out[k * fiber] -= b * Complex64::new(0.0, TWO_PI * self.xi_kd[axis][k] * fiber as f64);
            }
        }
        Ok(out)
    }

    pub fn step(&self, state: &PdeState) -> Result<PdeState> {
        if state.grid() != self.force.grid() {
            return contract("state and stepper live on different grids");
        }
        self.check_cfl(state.bias.b.sup_norm())?;
        let frozen = (self.bias_stride > 1).then(|| state.bias.b.clone());
        let next = self
            .scheme
            .advance(state.spectrum(), |u| self.nonlinear(u, frozen.as_ref()))?;
        let steps = state.steps + 1;
        let hold = frozen.filter(|_| steps % self.bias_stride != 0);
        PdeState::from_spectrum(
            next,
            &self.force,
            self.method,
            state.time + self.scheme.dt,
            steps,
            hold.as_ref(),
        )
    }

    /// `||d pi / dt||_2` at the given state, from the right-hand side.
    pub fn time_derivative_norm(&self, state: &PdeState) -> Result<f64> {
        let grid = self.force.grid();
        let frozen = (self.bias_stride > 1).then(|| state.bias.b.clone());
        let mut rhs = self.nonlinear(state.spectrum(), frozen.as_ref())?;
        for (r, (u, l)) in rhs.iter_mut().zip(state.spectrum().iter().zip(&self.scheme.l)) {
            *r += u * *l;
        }
        let values = grid.inverse_real(rhs);
        Ok((values.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume()).sqrt())
    }
}

/// One step with a freshly built stepper.
pub fn step(state: &PdeState, force: &ForceField, dt: f64) -> Result<PdeState> {
    Stepper::new(force, state.method, dt)?.step(state)
}

/// Runs to `t_end`, recording the initial state and every `record_every`-th step.
pub fn simulate(stepper: &Stepper, initial: PdeState, t_end: f64, record_every: u64) -> Result<Vec<PdeState>> {
    let steps = (t_end / stepper.dt()).round() as u64;
    if ((steps as f64) * stepper.dt() - t_end).abs() > 1e-9 * t_end.max(1.0) {
        return contract(format!(
            "t_end = {t_end} is not a whole number of steps of {}",
            stepper.dt()
        ));
    }
    let record_every = record_every.max(1);
    let mut out = vec![initial];
    let mut current = out[0].clone();
    for s in 1..=steps {
        current = stepper.step(&current)?;
        // keep the nominal clock exact
        current.time = s as f64 * stepper.dt();
        if s % record_every == 0 || s == steps {
            out.push(current.clone());
        }
    }
    Ok(out)
}

/// Max over interior states of the residual of the marginal evolution
/// `d_t pi^xi = beta^-1 Lap pi^xi - div((B - G) pi^xi)`.
pub fn marginal_equation_check(trajectory: &[PdeState]) -> Result<f64> {
    if trajectory.len() < 3 {
        return contract("marginal_equation_check needs at least three states");
    }
    let dt = trajectory[1].time - trajectory[0].time;
    for w in trajectory.windows(2) {
        if ((w[1].time - w[0].time) - dt).abs() > 1e-9 * dt {
            return contract("trajectory is not uniformly spaced in time");
        }
    }
    let xi = trajectory[0].grid().xi_grid();
    let ops = SpectralOps::new(&xi);
    let mut worst = 0.0f64;
    for k in 1..trajectory.len() - 1 {
        let s = &trajectory[k];
        let beta = s.beta;
        let dev = s.marginal_deviation();
        let lap = ops.laplacian(dev);
        let flux: Vec<Vec<f64>> = (0..xi.n())
            .map(|axis| {
                s.bias
                    .drift()
                    .component(axis)
                    .iter()
                    .zip(dev)
                    .map(|(d, v)| d * (1.0 + v))
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = flux.iter().map(Vec::as_slice).collect();
        let div = ops.divergence(&refs);
        let (prev, next) = (trajectory[k - 1].marginal_deviation(), trajectory[k + 1].marginal_deviation());
        let sq: f64 = (0..xi.len())
            .map(|i| {
                let dtv = (next[i] - prev[i]) / (2.0 * dt);
                let r = dtv - (lap[i] / beta - div[i]);
                r * r
            })
            .sum();
        worst = worst.max((sq * xi.cell_volume()).sqrt());
    }
    Ok(worst)
}
