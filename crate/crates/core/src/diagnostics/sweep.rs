//! Robustness of the conservative equilibrium under non-conservative
//! perturbations of growing size.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{contract, Result};
use crate::fokker_planck::{fixed_point_iterate_with, stationary_linear, FixedPointOptions, Method};
use crate::forces::{free_energy, local_mean_force, ForceField};
use crate::helmholtz::project_lebesgue;
use crate::torus::{check_same_grid, gradient, marginal_xi, DensityField, ScalarField, VectorField};

/// `int psi e^{-beta H} pi_inf / int e^{-beta H} pi_inf`, with `H` lifted from `T^m`.
pub fn observable_estimate(psi: &ScalarField, pi_inf: &DensityField, h_inf: &ScalarField, beta: f64) -> Result<f64> {
    check_same_grid(psi.grid(), pi_inf.grid())?;
    let grid = pi_inf.grid();
    check_same_grid(h_inf.grid(), &grid.xi_grid())?;
    let fiber = grid.fiber_len();
    let h = h_inf.values();
    let hmin = h.iter().copied().fold(f64::INFINITY, f64::min);
    let (mut num, mut den) = (0.0, 0.0);
    for (i, (&s, &p)) in psi.values().iter().zip(pi_inf.values()).enumerate() {
        let w = (-beta * (h[i / fiber] - hmin)).exp() * p;
        num += s * w;
        den += w;
    }
    Ok(num / den)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub epsilon: f64,
    /// Set when the fixed point did not converge at this `epsilon`.
    pub failure: Option<String>,
    pub iterations: usize,
    /// `|grad A - grad H_inf|_p`
    pub grad_error: f64,
    /// `|int psi dmu - I_psi|`, one entry per observable.
    pub observable_errors: Vec<f64>,
    /// Pairwise `L^2` distances `(H1, H2)`, `(H1, H3)`, `(H2, H3)` of the
    /// three free-energy generalizations.
    pub h_distances: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub p: f64,
    pub observables: Vec<String>,
    pub rows: Vec<SweepRow>,
    /// Log-log slope of the gradient error against `epsilon`.
    pub grad_slope: Option<f64>,
    pub observable_slopes: Vec<Option<f64>>,
}

fn log_log_slope(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .filter(|(e, v)| *e > 0.0 && *v > 0.0 && v.is_finite())
        .map(|(e, v)| (e.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let xm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `H1 = -1/beta ln nu^xi` and `H2` (potential of the projected mean force)
/// for the unbiased stationary measure `nu` of `F`.
fn unbiased_free_energies(force: &ForceField) -> Result<(ScalarField, ScalarField)> {
    let nu = stationary_linear(force.values(), force.beta())?;
    let beta = force.beta();
    let h1 = marginal_xi(&nu)?.as_scalar().map(|v| -v.ln() / beta).zero_mean();
    let h2 = project_lebesgue(&local_mean_force(force, &nu)?)?.potential;
    Ok((h1, h2))
}

fn sweep_row(
    v: &ScalarField,
    delta: &VectorField,
    epsilon: f64,
    p: f64,
    psis: &[(String, ScalarField)],
    opts: &FixedPointOptions,
    reference: &(VectorField, Vec<f64>),
    beta: f64,
) -> Result<SweepRow> {
    let force = ForceField::new(v.clone(), delta.clone(), epsilon, beta)?;
    let failed = |msg: String| SweepRow {
        epsilon,
        failure: Some(msg),
        iterations: 0,
        grad_error: f64::NAN,
        observable_errors: vec![f64::NAN; psis.len()],
        h_distances: [f64::NAN; 3],
    };
    let state = match fixed_point_iterate_with(&force, Method::Pabf, opts) {
        Ok(s) => s,
        Err(e) => return Ok(failed(e.to_string())),
    };
    let grad_h = gradient(&state.h_inf)?;
    let grad_error = reference.0.sub(&grad_h)?.lp_norm(p);
    let mut observable_errors = Vec::with_capacity(psis.len());
    for ((_, psi), exact) in psis.iter().zip(&reference.1) {
        observable_errors.push((exact - observable_estimate(psi, &state.pi_inf, &state.h_inf, beta)?).abs());
    }
    let (h1, h2) = match unbiased_free_energies(&force) {
        Ok(h) => h,
        Err(e) => return Ok(failed(e.to_string())),
    };
    let h3 = state.h_inf.zero_mean();
    let dist = |a: &ScalarField, b: &ScalarField| a.zip_map(b, |x, y| x - y).map(|d| d.l2_norm());
    Ok(SweepRow {
        epsilon,
        failure: None,
        iterations: state.iterations,
        grad_error,
        observable_errors,
        h_distances: [dist(&h1, &h2)?, dist(&h1, &h3)?, dist(&h2, &h3)?],
    })
}

/// PABF fixed point for `F = -grad V + eps Delta` at each `eps`, compared to
/// the conservative equilibrium. Non-converged points are kept as failure rows.
pub fn perturbation_sweep(
    v: &ScalarField,
    delta: &VectorField,
    epsilons: &[f64],
    p: f64,
    psis: &[(String, ScalarField)],
    beta: f64,
    opts: &FixedPointOptions,
) -> Result<SweepTable> {
    if !(p >= 1.0) {
        return contract(format!("sweep norm exponent must be >= 1, got {p}"));
    }
    if epsilons.windows(2).any(|w| w[0] > w[1]) || epsilons.iter().any(|e| !(*e >= 0.0)) {
        return contract("sweep epsilons must be nonnegative and sorted ascending");
    }
    let sup = delta.sup_norm();
    if let Some(e) = epsilons.iter().find(|e| **e * sup > 1.0) {
        return contract(format!("perturbation size {e} * {sup} exceeds 1"));
    }
    for (name, psi) in psis {
        if psi.grid() != v.grid() {
            return contract(format!("observable `{name}` lives on another grid"));
        }
    }
    let eq = free_energy(v, beta)?;
    let exact: Vec<f64> = psis
        .iter()
        .map(|(_, psi)| psi.values().iter().zip(eq.mu.values()).map(|(a, b)| a * b).sum::<f64>() * v.grid().cell_volume())
        .collect();
    let reference = (eq.grad_a, exact);
    let rows = epsilons
        .par_iter()
        .map(|&e| sweep_row(v, delta, e, p, psis, opts, &reference, beta))
        .collect::<Result<Vec<_>>>()?;
    let ok = || rows.iter().filter(|r| r.failure.is_none());
    let grad_slope = log_log_slope(ok().map(|r| (r.epsilon, r.grad_error)));
    let observable_slopes = (0..psis.len())
        .map(|k| log_log_slope(ok().map(|r| (r.epsilon, r.observable_errors[k]))))
        .collect();
    Ok(SweepTable {
        p,
        observables: psis.iter().map(|(n, _)| n.clone()).collect(),
        rows,
        grad_slope,
        observable_slopes,
    })
}

/// One `(epsilon, metric, value)` record per row and metric.
pub fn write_sweep_csv<W: Write>(table: &SweepTable, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epsilon", "metric", "value"])?;
    for r in &table.rows {
        let eps = format!("{:.17e}", r.epsilon);
        let status = match &r.failure {
            None => "converged".to_string(),
            Some(msg) => format!("failed: {msg}"),
        };
        w.write_record([eps.as_str(), "status", status.as_str()])?;
        let mut metrics = vec![
            (format!("grad_error_l{}", table.p), r.grad_error),
            ("iterations".to_string(), r.iterations as f64),
        ];
        for (name, e) in table.observables.iter().zip(&r.observable_errors) {
            metrics.push((format!("observable_error:{name}"), *e));
        }
        for (name, d) in ["h1_h2_l2", "h1_h3_l2", "h2_h3_l2"].iter().zip(r.h_distances) {
            metrics.push((name.to_string(), d));
        }
        for (name, value) in metrics {
            w.write_record([eps.as_str(), name.as_str(), format!("{value:.17e}").as_str()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forces::library::{perturbation, potential, PerturbationId, PotentialId};
    use crate::torus::TorusGrid;
    use std::f64::consts::PI;

    fn grid() -> TorusGrid {
        TorusGrid::uniform(2, 1, 24).unwrap()
    }

    #[test]
    fn observable_examples() {
        let g = grid();
        let v = potential(&g, PotentialId::V2).unwrap();
        let eq = free_energy(&v, 1.0).unwrap();
        let psi = ScalarField::from_fn(&g, |p| (2.0 * PI * p[0]).cos() + (2.0 * PI * p[1]).sin().powi(2));
        let exact: f64 = psi.values().iter().zip(eq.mu.values()).map(|(a, b)| a * b).sum::<f64>() * g.cell_volume();
        let est = observable_estimate(&psi, &eq.mu_a, &eq.a, 1.0).unwrap();
        assert!((est - exact).abs() <= 1e-7);
        let shifted = observable_estimate(&psi, &eq.mu_a, &eq.a.add_constant(3.7), 1.0).unwrap();
        assert!((est - shifted).abs() <= 1e-12);
        let one = ScalarField::constant(&g, 1.0);
        assert!((observable_estimate(&one, &eq.mu_a, &eq.a, 1.0).unwrap() - 1.0).abs() < 1e-14);

        let xi = g.xi_grid();
        let h = ScalarField::from_fn(&xi, |p| 0.4 * (2.0 * PI * p[0]).sin());
        let psi_x = ScalarField::from_fn(&g, |p| (2.0 * PI * p[0]).cos());
        let raw = ScalarField::from_fn(&g, |p| (0.8 * (2.0 * PI * (p[1] + 0.1 * (2.0 * PI * p[0]).sin())).cos()).exp());
        let flat = DensityField::normalized(
            g.clone(),
            raw.values()
                .chunks(g.fiber_len())
                .flat_map(|c| {
                    let s: f64 = c.iter().sum();
                    c.iter().map(move |v| v / s)
                })
                .collect(),
        )
        .unwrap();
        let xs = xi.axis_coords();
        let (mut num, mut den) = (0.0, 0.0);
        for (x, hv) in xs[0].iter().zip(h.values()) {
            let w = (-hv).exp();
            num += (2.0 * PI * x).cos() * w;
            den += w;
        }
        let est = observable_estimate(&psi_x, &flat, &h, 1.0).unwrap();
        assert!((est - num / den).abs() < 1e-12);
    }

    #[test]
    fn slope_of_power_law() {
        let pts = [(0.01, 2e-3), (0.02, 4e-3), (0.04, 8e-3)];
        assert!((log_log_slope(pts.into_iter()).unwrap() - 1.0).abs() < 1e-12);
        assert!(log_log_slope([(0.0, 1.0), (0.1, 0.0)].into_iter()).is_none());
    }

    #[test]
    fn sweep_is_linear_in_epsilon() {
        let g = grid();
        let v = potential(&g, PotentialId::V1).unwrap();
        let delta = perturbation(&g, PerturbationId::Rotational, 0).unwrap();
        let psis = vec![("cos".to_string(), ScalarField::from_fn(&g, |p| (2.0 * PI * p[0]).cos()))];
        let opts = FixedPointOptions::default();
        let t = perturbation_sweep(&v, &delta, &[0.0, 0.01, 0.02, 0.04], 2.0, &psis, 1.0, &opts).unwrap();
        let zero = &t.rows[0];
        assert!(zero.failure.is_none());
        assert!(zero.grad_error <= 1e-6 && zero.observable_errors[0] <= 1e-6, "{zero:?}");
        assert!(zero.h_distances.iter().all(|d| *d <= 1e-6));
        let s = t.grad_slope.unwrap();
        assert!((0.9..=1.1).contains(&s), "grad slope {s}");
        let s = t.observable_slopes[0].unwrap();
        assert!((0.9..=1.1).contains(&s), "observable slope {s}");
        let mut buf = Vec::new();
        write_sweep_csv(&t, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("epsilon,metric,value\n"));
        assert_eq!(text.lines().count(), 1 + 4 * 7);
    }

    #[test]
    fn sweep_validates_inputs() {
        let g = grid();
        let v = potential(&g, PotentialId::V1).unwrap();
        let delta = perturbation(&g, PerturbationId::Rotational, 0).unwrap();
        let opts = FixedPointOptions::default();
        assert!(perturbation_sweep(&v, &delta, &[0.02, 0.01], 2.0, &[], 1.0, &opts).is_err());
        assert!(perturbation_sweep(&v, &delta, &[2.0], 2.0, &[], 1.0, &opts).is_err());
        assert!(perturbation_sweep(&v, &delta, &[0.01], 0.5, &[], 1.0, &opts).is_err());
    }

    #[test]
    fn failed_points_become_markers() {
        let g = grid();
        let v = potential(&g, PotentialId::V1).unwrap();
        let delta = perturbation(&g, PerturbationId::Rotational, 0).unwrap();
        let opts = FixedPointOptions {
            max_iters: 1,
            tol: 1e-30,
            ..Default::default()
        };
        let t = perturbation_sweep(&v, &delta, &[0.01, 0.02], 2.0, &[], 1.0, &opts).unwrap();
        assert!(t.rows.iter().all(|r| r.failure.is_some()));
        assert!(t.grad_slope.is_none());
    }
}
