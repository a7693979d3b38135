//! Entropies, Fisher information, the entropy split, rate fits and
//! log-Sobolev lower bounds.

pub mod inequalities;
pub mod sweep;
pub mod trajectory;

use std::f64::consts::PI;

use crate::error::{contract, Error, Result};
use crate::fokker_planck::{marginal_deviation, PdeState};
use crate::forces::{local_mean_force, ForceField};
use crate::torus::{check_same_grid, DensityField, SpectralOps, TorusGrid, VectorField};

pub use inequalities::{csiszar_kullback_check, lsi_check, nash_check, poincare_check};
pub use sweep::{observable_estimate, perturbation_sweep, write_sweep_csv, SweepRow, SweepTable};
pub use trajectory::{trajectory_diagnostics, write_trajectory_csv, TrajectoryRow, TRAJECTORY_HEADER};

const FOUR_PI2: f64 = 4.0 * PI * PI;

/// Returned by the entropy routines when `nu` vanishes where `mu` does not.
pub const INFINITE_ENTROPY: f64 = f64::INFINITY;

/// `(1 + u) ln(1 + u) - u`, accurate for tiny `|u|`.
pub(crate) fn entropy_kernel(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        // sum_{k >= 2} (-1)^k u^k / (k (k - 1))
        let mut term = u * u;
        let mut acc = 0.0;
        for k in 2..12 {
            let kf = k as f64;
            acc += term / (kf * (kf - 1.0));
            term *= -u;
        }
        acc
    } else if u <= -1.0 {
        1.0
    } else {
        (1.0 + u) * u.ln_1p() - u
    }
}

/// `sum cell * mu ln(mu / nu)` for two arrays of equal mass.
pub fn relative_entropy_values(mu: &[f64], nu: &[f64], cell: f64) -> f64 {
    let mut acc = 0.0;
    for (&p, &q) in mu.iter().zip(nu) {
        if q <= 0.0 {
            if p > 0.0 {
                return INFINITE_ENTROPY;
            }
            continue;
        }
        acc += q * entropy_kernel((p - q) / q);
    }
    acc * cell
}

/// Same as [`relative_entropy_values`] for `mu = nu (1 + u)` given `u` directly.
fn entropy_of_ratio(nu: &[f64], u: &[f64], cell: f64) -> f64 {
    nu.iter().zip(u).map(|(q, &x)| q * entropy_kernel(x)).sum::<f64>() * cell
}

/// `H(mu | lambda)` for a density `1 + dev` against the uniform measure.
pub fn entropy_of_deviation(dev: &[f64], cell: f64) -> f64 {
    dev.iter().map(|&d| entropy_kernel(d)).sum::<f64>() * cell
}

pub fn relative_entropy(mu: &DensityField, nu: &DensityField) -> Result<f64> {
    check_same_grid(mu.grid(), nu.grid())?;
    Ok(relative_entropy_values(mu.values(), nu.values(), mu.grid().cell_volume()))
}

fn fisher_values(grid: &TorusGrid, mu: &[f64], log_ratio: &[f64], axes: std::ops::Range<usize>) -> f64 {
    let ops = SpectralOps::new(grid);
    let spec = grid.forward_real(log_ratio);
    let mut acc = vec![0.0; mu.len()];
    for axis in axes {
        let d = ops.derivative_from_spectrum(&spec, axis);
        acc.iter_mut().zip(&d).for_each(|(a, v)| *a += v * v);
    }
    acc.iter().zip(mu).map(|(a, p)| a * p).sum::<f64>() * grid.cell_volume()
}

/// `int |grad ln(mu / nu)|^2 dmu`.
pub fn fisher_information(mu: &DensityField, nu: &DensityField) -> Result<f64> {
    check_same_grid(mu.grid(), nu.grid())?;
    if mu.min() <= 0.0 || nu.min() <= 0.0 {
        return contract("fisher information needs strictly positive densities");
    }
    let h: Vec<f64> = mu.values().iter().zip(nu.values()).map(|(p, q)| (p / q).ln()).collect();
    Ok(fisher_values(mu.grid(), mu.values(), &h, 0..mu.grid().n()))
}

/// `int |grad_y ln(mu / nu)|^2 dmu`, the fiber part of the Fisher information.
pub fn fiber_fisher_information(mu: &DensityField, nu: &DensityField) -> Result<f64> {
    check_same_grid(mu.grid(), nu.grid())?;
    let grid = mu.grid();
    let h: Vec<f64> = mu.values().iter().zip(nu.values()).map(|(p, q)| (p / q).ln()).collect();
    Ok(fisher_values(grid, mu.values(), &h, grid.m()..grid.n()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntropyReport {
    /// `H(pi | pi_inf)`
    pub e: f64,
    /// `H(pi^xi | pi_inf^xi)`
    pub e_big_m: f64,
    /// `int e_m(x) pi^xi(x) dx`
    pub e_m: f64,
    /// `I(pi^xi | pi_inf^xi)`
    pub i_m: f64,
    pub tv: f64,
    /// `sup |pi^xi - 1|`
    pub linf_marginal: f64,
}

pub(crate) fn spectral_deviation(d: &DensityField) -> Vec<f64> {
    marginal_deviation(d.grid(), &d.grid().forward_real(d.values()))
}

/// Conditional entropies `e_m(x) = H(pi(.|x) | pi_inf(.|x))` on the xi-grid.
fn conditional_entropies(grid: &TorusGrid, pi: &[f64], dev: &[f64], pi_inf: &[f64], dev_inf: &[f64]) -> Vec<f64> {
    let fiber = grid.fiber_len();
    let cell_y = grid.fiber_grid().map_or(1.0, |f| f.cell_volume());
    let mut u = vec![0.0; fiber];
    let mut q_inf = vec![0.0; fiber];
    (0..grid.xi_len())
        .map(|x| {
            if fiber == 1 {
                return 0.0;
            }
            let c = (dev[x] - dev_inf[x]) / (1.0 + dev_inf[x]);
            for j in 0..fiber {
                let (p, q) = (pi[x * fiber + j], pi_inf[x * fiber + j]);
                let a = (p - q) / q;
                u[j] = (a - c) / (1.0 + c);
                q_inf[j] = q / (1.0 + dev_inf[x]);
            }
            entropy_of_ratio(&q_inf, &u, cell_y)
        })
        .collect()
}

fn split_raw(pi: &DensityField, dev: &[f64], pi_inf: &DensityField, dev_inf: &[f64]) -> Result<EntropyReport> {
    check_same_grid(pi.grid(), pi_inf.grid())?;
    let grid = pi.grid();
    let xi = grid.xi_grid();
    let cell = grid.cell_volume();
    let cell_x = xi.cell_volume();
    let e = relative_entropy_values(pi.values(), pi_inf.values(), cell);
    let p_inf: Vec<f64> = dev_inf.iter().map(|d| 1.0 + d).collect();
    let c: Vec<f64> = dev.iter().zip(dev_inf).map(|(d, di)| (d - di) / (1.0 + di)).collect();
    let e_big_m = entropy_of_ratio(&p_inf, &c, cell_x);
    let em = conditional_entropies(grid, pi.values(), dev, pi_inf.values(), dev_inf);
    let e_m = em.iter().zip(dev).map(|(e, d)| e * (1.0 + d)).sum::<f64>() * cell_x;
    let log_ratio: Vec<f64> = dev.iter().zip(dev_inf).map(|(d, di)| d.ln_1p() - di.ln_1p()).collect();
    let p: Vec<f64> = dev.iter().map(|d| 1.0 + d).collect();
    let i_m = fisher_values(&xi, &p, &log_ratio, 0..xi.n());
    let tv = 0.5 * pi.values().iter().zip(pi_inf.values()).map(|(a, b)| (a - b).abs()).sum::<f64>() * cell;
    let linf_marginal = dev.iter().fold(0.0f64, |a, d| a.max(d.abs()));
    let gap = (e - e_m - e_big_m).abs();
    if e.is_finite() && gap > 1e-8 {
        return Err(Error::SolverFailure {
            message: format!("entropy split mismatch: E = {e:e}, E_m + E_M = {:e}", e_m + e_big_m),
            residual: gap,
        });
    }
    Ok(EntropyReport {
        e,
        e_big_m,
        e_m,
        i_m,
        tv,
        linf_marginal,
    })
}

/// Total, macroscopic and microscopic entropies of `pi` relative to `pi_inf`.
pub fn entropy_split(pi: &DensityField, pi_inf: &DensityField) -> Result<EntropyReport> {
    split_raw(pi, &spectral_deviation(pi), pi_inf, &spectral_deviation(pi_inf))
}

/// [`entropy_split`] using the marginal deviation carried by the PDE state.
pub fn entropy_split_state(state: &PdeState, pi_inf: &DensityField) -> Result<EntropyReport> {
    split_raw(&state.pi, state.marginal_deviation(), pi_inf, &spectral_deviation(pi_inf))
}

/// Least-squares fit of `ln v = ln K - rate t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub rate: f64,
    pub prefactor: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
}

impl RateFit {
    pub fn accepted(&self) -> bool {
        self.r_squared >= 0.95
    }
}

pub fn fit_rate(series: &[(f64, f64)], window: (f64, f64)) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .copied()
        .filter(|(t, _)| *t >= window.0 - 1e-12 && *t <= window.1 + 1e-12)
        .collect();
    if pts.len() < 5 {
        return contract(format!("rate fit needs 5 points in {window:?}, found {}", pts.len()));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return contract(format!("nonpositive value {v:e} at t = {t} in rate fit"));
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let lm = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut stt, mut stl, mut sll) = (0.0, 0.0, 0.0);
    for &(t, v) in &pts {
        let (dt, dl) = (t - tm, v.ln() - lm);
        stt += dt * dt;
        stl += dt * dl;
        sll += dl * dl;
    }
    if stt == 0.0 {
        return contract("rate fit window has a single time");
    }
    let slope = stl / stt;
    let ss_res = (sll - slope * stl).max(0.0);
    let r_squared = if sll <= 1e-300 { 1.0 } else { (1.0 - ss_res / sll).clamp(0.0, 1.0) };
    Ok(RateFit {
        rate: -slope,
        prefactor: (lm - slope * tm).exp(),
        window,
        r_squared,
        points: pts.len(),
    })
}

/// Fits over `[t/4, t]`, `[t/2, t]` and `[t/2, 3t/4]` for `t = t_end`.
pub fn fit_sensitivity(series: &[(f64, f64)], t_end: f64) -> Vec<Result<RateFit>> {
    [(0.25, 1.0), (0.5, 1.0), (0.5, 0.75)]
        .iter()
        .map(|&(a, b)| fit_rate(series, (a * t_end, b * t_end)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsiEstimates {
    pub r_lower: f64,
    pub rho_lower: f64,
    /// Lipschitz constant of `x -> F1(x, y)`.
    pub m: f64,
    /// Lipschitz constant of `y -> F1(x, y)`, the one the bias bound needs.
    pub m_fiber: f64,
    pub beta: f64,
    pub lambda_pred_abf: f64,
    pub lambda_pred_pabf: f64,
    /// `2 R (1 - M_y beta / (2 rho)) / beta`; `None` when `M_y beta >= 2 rho_lower`.
    pub lambda_pred_noncons: Option<f64>,
}

impl LsiEstimates {
    pub fn noncons_hypothesis(&self) -> bool {
        self.m_fiber * self.beta < 2.0 * self.rho_lower
    }

    /// Non-conservative rate prediction for an arbitrary Lipschitz constant.
    pub fn noncons_prediction(&self, m: f64) -> Option<f64> {
        let ratio = m * self.beta / (2.0 * self.rho_lower);
        (ratio < 1.0).then(|| 2.0 * self.r_lower * (1.0 - ratio) / self.beta)
    }
}

fn oscillation(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Holley-Stroock lower bounds for the log-Sobolev constants of `pi_inf` and
/// of its conditionals, and the rates they predict.
pub fn lsi_bounds(pi_inf: &DensityField, force: &ForceField) -> Result<LsiEstimates> {
    check_same_grid(pi_inf.grid(), force.grid())?;
    if pi_inf.min() <= 0.0 {
        return contract("lsi_bounds needs a positive density");
    }
    let grid = pi_inf.grid();
    let logs: Vec<f64> = pi_inf.values().iter().map(|v| v.ln()).collect();
    let r_lower = FOUR_PI2 * (-oscillation(logs.iter().copied())).exp();
    let rho_lower = if grid.fiber_len() == 1 {
        f64::INFINITY
    } else {
        let osc = logs
            .chunks_exact(grid.fiber_len())
            .map(|c| oscillation(c.iter().copied()))
            .fold(0.0f64, f64::max);
        FOUR_PI2 * (-osc).exp()
    };
    let beta = force.beta();
    let mut est = LsiEstimates {
        r_lower,
        rho_lower,
        m: force.lipschitz_x(),
        m_fiber: force.lipschitz_y(),
        beta,
        lambda_pred_abf: (2.0 * FOUR_PI2).min(2.0 * rho_lower) / beta,
        lambda_pred_pabf: FOUR_PI2.min(2.0 * rho_lower) / beta,
        lambda_pred_noncons: None,
    };
    est.lambda_pred_noncons = est.noncons_prediction(est.m_fiber);
    Ok(est)
}

/// Pointwise `|G(x) - G_inf(x)|` against `M_y sqrt(2 e_m(x) / rho)`.
#[derive(Debug, Clone)]
pub struct BiasBound {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
}

impl BiasBound {
    pub fn max_violation(&self) -> f64 {
        self.lhs.iter().zip(&self.rhs).map(|(l, r)| l - r).fold(f64::NEG_INFINITY, f64::max)
    }
}

pub fn bias_bound_check(
    pi: &DensityField,
    pi_inf: &DensityField,
    force: &ForceField,
    lsi: &LsiEstimates,
) -> Result<BiasBound> {
    check_same_grid(pi.grid(), pi_inf.grid())?;
    let grid = pi.grid();
    let g = local_mean_force(force, pi)?;
    let g_inf = local_mean_force(force, pi_inf)?;
    let em = conditional_entropies(
        grid,
        pi.values(),
        &spectral_deviation(pi),
        pi_inf.values(),
        &spectral_deviation(pi_inf),
    );
    let diff = g.sub(&g_inf)?;
    let lhs = (0..grid.xi_len()).map(|x| diff.norm_at(x)).collect();
    let rhs = em
        .iter()
        .map(|&e| if lsi.rho_lower.is_infinite() { 0.0 } else { lsi.m_fiber * (2.0 * e.max(0.0) / lsi.rho_lower).sqrt() })
        .collect();
    Ok(BiasBound { lhs, rhs })
}

/// `(E_m, I_y / (2 rho))`: the microscopic entropy and its log-Sobolev bound.
pub fn microscopic_bound(pi: &DensityField, pi_inf: &DensityField, rho: f64) -> Result<(f64, f64)> {
    let report = entropy_split(pi, pi_inf)?;
    Ok((report.e_m, fiber_fisher_information(pi, pi_inf)? / (2.0 * rho)))
}

/// Right-hand side of the total entropy dissipation identity:
/// `-1/beta int |grad h|^2 pi + int (B - B_inf) . grad_x h pi`, `h = ln(pi / pi_inf)`.
pub fn entropy_dissipation(
    pi: &DensityField,
    pi_inf: &DensityField,
    b: &VectorField,
    b_inf: &VectorField,
    beta: f64,
) -> Result<f64> {
    check_same_grid(pi.grid(), pi_inf.grid())?;
    let grid = pi.grid();
    let m = grid.m();
    let h: Vec<f64> = pi.values().iter().zip(pi_inf.values()).map(|(p, q)| (p / q).ln()).collect();
    let ops = SpectralOps::new(grid);
    let spec = grid.forward_real(&h);
    let db = VectorField::lift_from_xi(&b.sub(b_inf)?, grid, m)?;
    let mut acc = 0.0;
    for axis in 0..grid.n() {
        let d = ops.derivative_from_spectrum(&spec, axis);
        for (i, (dv, p)) in d.iter().zip(pi.values()).enumerate() {
            acc -= dv * dv * p / beta;
            if axis < m {
                acc += db.component(axis)[i] * dv * p;
            }
        }
    }
    Ok(acc * grid.cell_volume())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forces::library::{build_force, PerturbationId, PotentialId};
    use crate::forces::free_energy;
    use crate::torus::ScalarField;
    use approx::assert_abs_diff_eq;

    fn t1(n: usize) -> TorusGrid {
        TorusGrid::uniform(1, 1, n).unwrap()
    }

    fn density(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64) -> DensityField {
        DensityField::normalized(grid.clone(), ScalarField::from_fn(grid, f).into_values()).unwrap()
    }

    fn tilt(base: &DensityField, f: impl Fn(&[f64]) -> f64) -> DensityField {
        let g = base.grid();
        let vals = base.values().iter().enumerate().map(|(i, v)| v * f(&g.coords(i))).collect();
        DensityField::normalized(g.clone(), vals).unwrap()
    }

    #[test]
    fn kernel_series_matches_closed_form() {
        for u in [-9e-4, -3e-4, 1e-5, 5e-4, 9.9e-4] {
            let direct = (1.0 + u) * (u as f64).ln_1p() - u;
            assert!((entropy_kernel(u) - direct).abs() <= 4e-16 * u.abs());
        }
        assert_eq!(entropy_kernel(0.0), 0.0);
        assert!((entropy_kernel(1e-12) - 5e-25).abs() < 1e-35);
    }

    #[test]
    fn relative_entropy_examples() {
        let g = t1(128);
        let nu = DensityField::uniform(&g);
        assert_eq!(relative_entropy(&nu, &nu).unwrap(), 0.0);
        let mu = density(&g, |p| 1.0 + 0.1 * (2.0 * PI * p[0]).cos());
        let h = relative_entropy(&mu, &nu).unwrap();
        assert!((0.0024..=0.0026).contains(&h), "{h}");
        let bump = density(&g, |p| (40.0 * (2.0 * PI * p[0]).cos()).exp());
        let direct: f64 = bump.values().iter().map(|v| v * v.ln()).sum::<f64>() / 128.0;
        let h = relative_entropy(&bump, &nu).unwrap();
        assert!(h > 1.0);
        assert!((h - direct).abs() <= 1e-10 * direct);
        assert_eq!(relative_entropy_values(&[1.0, 1.0], &[2.0, 0.0], 0.5), INFINITE_ENTROPY);
    }

    #[test]
    fn fisher_examples() {
        let g = t1(128);
        let nu = DensityField::uniform(&g);
        assert_eq!(fisher_information(&nu, &nu).unwrap(), 0.0);
        let mu = density(&g, |p| (2.0 * PI * p[0]).cos().exp());
        let oracle: f64 = (0..128)
            .map(|i| {
                let x = i as f64 / 128.0;
                (2.0 * PI * (2.0 * PI * x).sin()).powi(2) * mu.values()[i]
            })
            .sum::<f64>()
            / 128.0;
        assert_abs_diff_eq!(fisher_information(&mu, &nu).unwrap(), oracle, epsilon = 1e-8);
    }

    #[test]
    fn split_of_product_density() {
        let g = TorusGrid::uniform(2, 1, 32).unwrap();
        let p = |x: f64| 1.0 + 0.3 * (2.0 * PI * x).sin();
        let q = |y: f64| (0.7 * (2.0 * PI * y).cos()).exp();
        let pi = density(&g, |c| p(c[0]) * q(c[1]));
        let uni = DensityField::uniform(&g);
        let r = entropy_split(&pi, &uni).unwrap();
        let t = t1(32);
        let hp = relative_entropy(&density(&t, |c| p(c[0])), &DensityField::uniform(&t)).unwrap();
        let hq = relative_entropy(&density(&t, |c| q(c[0])), &DensityField::uniform(&t)).unwrap();
        assert_abs_diff_eq!(r.e_big_m, hp, epsilon = 1e-12);
        assert_abs_diff_eq!(r.e_m, hq, epsilon = 1e-12);
        assert!(r.tv <= (2.0 * r.e).sqrt());
        let zero = entropy_split(&uni, &uni).unwrap();
        assert_eq!((zero.e, zero.e_m, zero.e_big_m, zero.tv), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn split_generic_pair_agrees_with_direct_entropy() {
        let g = TorusGrid::uniform(2, 1, 32).unwrap();
        let pi = density(&g, |c| (0.8 * (2.0 * PI * (c[0] + c[1])).sin() + 0.4 * (2.0 * PI * c[1]).cos()).exp());
        let pi_inf = density(&g, |c| (1.1 * (2.0 * PI * c[0]).cos() * (2.0 * PI * c[1]).sin()).exp());
        let r = entropy_split(&pi, &pi_inf).unwrap();
        let direct: f64 = pi
            .values()
            .iter()
            .zip(pi_inf.values())
            .map(|(a, b)| a * (a / b).ln())
            .sum::<f64>()
            * g.cell_volume();
        assert_abs_diff_eq!(r.e, direct, epsilon = 1e-12);
        assert_abs_diff_eq!(r.e_m + r.e_big_m, direct, epsilon = 1e-8);
    }

    #[test]
    fn fit_rate_examples() {
        let exact: Vec<(f64, f64)> = (0..10).map(|i| (0.1 * i as f64, 3.0 * (-2.0 * 0.1 * i as f64).exp())).collect();
        let f = fit_rate(&exact, (0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(f.rate, 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f.prefactor, 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f.r_squared, 1.0, epsilon = 1e-10);
        let wobble: Vec<(f64, f64)> = (0..=150)
            .map(|i| {
                let t = 0.1 * i as f64;
                (t, (-t).exp() * (2.0 + t.cos()))
            })
            .collect();
        let f = fit_rate(&wobble, (2.0 * PI, 4.0 * PI)).unwrap();
        assert!((0.9..=1.1).contains(&f.rate) && f.r_squared >= 0.95, "{f:?}");
        let f = fit_rate(&wobble, (5.0, 10.0)).unwrap();
        assert!((f.rate - 1.0).abs() <= 0.3 && f.r_squared >= 0.95, "{f:?}");
        let flat: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 4.0)).collect();
        assert_eq!(fit_rate(&flat, (0.0, 5.0)).unwrap().rate, 0.0);
        let bad = [(0.0, 1.0), (1.0, 0.0), (2.0, 1.0), (3.0, 1.0), (4.0, 1.0)];
        assert!(matches!(fit_rate(&bad, (0.0, 4.0)), Err(Error::Contract(_))));
        assert!(fit_rate(&exact[..4], (0.0, 1.0)).is_err());
        assert_eq!(fit_sensitivity(&exact, 0.9).len(), 3);
    }

    #[test]
    fn lsi_examples() {
        let g = TorusGrid::uniform(2, 1, 32).unwrap();
        let force = ForceField::zero(&g, 1.0).unwrap();
        let est = lsi_bounds(&DensityField::uniform(&g), &force).unwrap();
        assert_abs_diff_eq!(est.r_lower, FOUR_PI2, epsilon = 1e-12);
        assert_abs_diff_eq!(est.rho_lower, FOUR_PI2, epsilon = 1e-12);
        assert_abs_diff_eq!(est.lambda_pred_abf, 2.0 * FOUR_PI2, epsilon = 1e-12);
        let fibers = density(&g, |c| (-(2.0 * PI * c[1]).cos()).exp());
        let est = lsi_bounds(&fibers, &force).unwrap();
        assert_abs_diff_eq!(est.rho_lower, FOUR_PI2 * (-2.0f64).exp(), epsilon = 1e-10);
        let v1 = build_force(&g, PotentialId::V1, PerturbationId::None, 0.0, 1.0, 0).unwrap();
        let mu_a = free_energy(v1.potential(), 1.0).unwrap().mu_a;
        let est = lsi_bounds(&mu_a, &v1).unwrap();
        assert_abs_diff_eq!(est.rho_lower, FOUR_PI2 * (-2.0f64).exp(), epsilon = 1e-10);
        assert_abs_diff_eq!(est.lambda_pred_pabf, 2.0 * est.rho_lower.min(FOUR_PI2 / 2.0), epsilon = 1e-12);
    }

    #[test]
    fn noncons_rate_uses_the_fiber_constant() {
        let g = TorusGrid::uniform(2, 1, 32).unwrap();
        let f = build_force(&g, PotentialId::V1, PerturbationId::Rotational, 0.05, 1.0, 0).unwrap();
        let est = lsi_bounds(&free_energy(f.potential(), 1.0).unwrap().mu_a, &f).unwrap();
        assert!(est.m > 2.0 * est.rho_lower && est.m_fiber < 2.0 * est.rho_lower);
        assert!(est.noncons_hypothesis());
        let expected = 2.0 * est.r_lower * (1.0 - est.m_fiber / (2.0 * est.rho_lower));
        assert_abs_diff_eq!(est.lambda_pred_noncons.unwrap(), expected, epsilon = 1e-12);
        assert_eq!(est.noncons_prediction(est.m), None);
    }

    #[test]
    fn bias_bound_examples() {
        let g = TorusGrid::uniform(2, 1, 32).unwrap();
        let force = build_force(&g, PotentialId::V2, PerturbationId::None, 0.0, 1.0, 0).unwrap();
        let mu_a = free_energy(force.potential(), 1.0).unwrap().mu_a;
        let lsi = lsi_bounds(&mu_a, &force).unwrap();
        let same = bias_bound_check(&mu_a, &mu_a, &force, &lsi).unwrap();
        assert!(same.lhs.iter().chain(&same.rhs).all(|v| v.abs() < 1e-12));
        let pi = tilt(&mu_a, |c| 1.0 + 0.4 * (2.0 * PI * (c[0] - c[1])).sin());
        let b = bias_bound_check(&pi, &mu_a, &force, &lsi).unwrap();
        assert!(b.max_violation() <= 1e-8);
        let v1 = build_force(&g, PotentialId::V1, PerturbationId::None, 0.0, 1.0, 0).unwrap();
        let b = bias_bound_check(&pi, &mu_a, &v1, &lsi_bounds(&mu_a, &v1).unwrap()).unwrap();
        assert!(b.lhs.iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn microscopic_bound_holds_for_perturbed_density() {
        let g = TorusGrid::uniform(2, 1, 32).unwrap();
        let pi_inf = density(&g, |c| (-(2.0 * PI * c[1]).cos()).exp());
        let pi = tilt(&pi_inf, |c| (0.6 * (2.0 * PI * (c[0] + 2.0 * c[1])).sin()).exp());
        let (em, bound) = microscopic_bound(&pi, &pi_inf, FOUR_PI2 * (-2.0f64).exp()).unwrap();
        assert!(em <= bound + 1e-8, "{em} > {bound}");
    }
}
