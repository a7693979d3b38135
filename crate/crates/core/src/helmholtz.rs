//! Helmholtz projections onto gradient fields on `T^m`, with respect to the
//! Lebesgue measure and to a positive weight.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Error, Result};
use crate::torus::{random_trig_vector, DensityField, ScalarField, SpectralOps, TorusGrid, VectorField};

const TWO_PI: f64 = 2.0 * PI;
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub const WEIGHTED_TOL: f64 = 1e-9;

/// `G = grad H + residual` with `H` zero-mean.
#[derive(Debug, Clone)]
pub struct HelmholtzResult {
    pub potential: ScalarField,
    pub projected: VectorField,
    pub residual: VectorField,
    /// Conjugate-gradient iterations (0 for closed-form paths).
    pub iterations: usize,
}

fn check_input(g: &VectorField) -> Result<()> {
    if g.dim() != g.grid().n() {
        return contract(format!(
            "projection needs {} components, got {}",
            g.grid().n(),
            g.dim()
        ));
    }
    if !g.is_finite() {
        return contract("projection of a non-finite field");
    }
    Ok(())
}

/// Spectrum of the zero-mean potential of the `L^2(lambda)` projection.
fn lebesgue_potential_spectrum(ops: &SpectralOps, specs: &[Vec<Complex64>]) -> Vec<Complex64> {
    let grid = ops.grid();
    let kd = ops.kd();
    (0..grid.len())
        .map(|i| {
            let k2: f64 = kd.iter().map(|k| k[i] * k[i]).sum();
            if k2 == 0.0 {
                return ZERO;
            }
            let dot: Complex64 = specs.iter().zip(kd).map(|(s, k)| s[i] * k[i]).sum();
            dot / Complex64::new(0.0, TWO_PI * k2)
        })
        .collect()
}

/// Orthogonal projection of `G` onto gradients in `L^2(lambda)`, mode by mode.
pub fn project_lebesgue(g: &VectorField) -> Result<HelmholtzResult> {
    check_input(g)?;
    let grid = g.grid();
    let ops = SpectralOps::new(grid);
    let specs: Vec<Vec<Complex64>> = g.components().iter().map(|c| grid.forward_real(c)).collect();
    let h_spec = lebesgue_potential_spectrum(&ops, &specs);
    let kd = ops.kd();
    let mut projected = Vec::with_capacity(g.dim());
    let mut residual = Vec::with_capacity(g.dim());
    for (axis, s) in specs.iter().enumerate() {
        let grad: Vec<Complex64> = if grid.n() == 1 {
            // every zero-mean resolved mode on T^1 is a gradient; keep it bit-exact
            s.iter().zip(&kd[0]).map(|(z, &k)| if k == 0.0 { ZERO } else { *z }).collect()
        } else {
            h_spec
                .iter()
                .zip(&kd[axis])
                .map(|(h, &k)| h * Complex64::new(0.0, TWO_PI * k))
                .collect()
        };
        let res: Vec<Complex64> = s.iter().zip(&grad).map(|(a, b)| a - b).collect();
        projected.push(grid.inverse_real(grad));
        residual.push(grid.inverse_real(res));
    }
    Ok(HelmholtzResult {
        potential: ScalarField::new(grid.clone(), grid.inverse_real(h_spec))?,
        projected: VectorField::new(grid.clone(), projected)?,
        residual: VectorField::new(grid.clone(), residual)?,
        iterations: 0,
    })
}

/// Projection onto gradients in `L^2(nu)`: `div(nu grad H) = div(nu G)`.
pub fn project_weighted(g: &VectorField, nu: &DensityField) -> Result<HelmholtzResult> {
    let max_iter = 10 * g.grid().len();
    if g.grid().n() == 1 {
        project_weighted_1d(g, nu)
    } else {
        project_weighted_cg(g, nu, WEIGHTED_TOL, max_iter)
    }
}

fn check_weight(g: &VectorField, nu: &DensityField) -> Result<()> {
    check_input(g)?;
    if g.grid() != nu.grid() {
        return contract("field and weight live on different grids");
    }
    if !(nu.min() > 0.0) {
        return contract("weight must be strictly positive");
    }
    Ok(())
}

/// On `T^1` the flux `nu (H' - G)` is constant, and `H'` has zero circulation:
/// `H' = G - c / nu` with `c = int G / int nu^{-1}`.
pub(crate) fn project_weighted_1d(g: &VectorField, nu: &DensityField) -> Result<HelmholtzResult> {
    check_weight(g, nu)?;
    let grid = g.grid();
    let comp = g.component(0);
    let inv_int: f64 = nu.values().iter().map(|v| 1.0 / v).sum::<f64>();
    let g_int: f64 = comp.iter().sum::<f64>();
    let c = g_int / inv_int;
    let projected: Vec<f64> = comp.iter().zip(nu.values()).map(|(gv, v)| gv - c / v).collect();
    let residual: Vec<f64> = nu.values().iter().map(|v| c / v).collect();
    let ops = SpectralOps::new(grid);
    let spec = grid.forward_real(&projected);
    let h_spec = lebesgue_potential_spectrum(&ops, &[spec]);
    Ok(HelmholtzResult {
        potential: ScalarField::new(grid.clone(), grid.inverse_real(h_spec))?,
        projected: VectorField::new(grid.clone(), vec![projected])?,
        residual: VectorField::new(grid.clone(), vec![residual])?,
        iterations: 0,
    })
}

/// Preconditioned conjugate gradient for `-div(nu grad h) = -div(nu G)` on
/// zero-mean `h`, preconditioned by the inverse Laplacian.
pub(crate) fn project_weighted_cg(
    g: &VectorField,
    nu: &DensityField,
    tol: f64,
    max_iter: usize,
) -> Result<HelmholtzResult> {
    check_weight(g, nu)?;
    let grid = g.grid();
    let ops = SpectralOps::new(grid);
    let cell = grid.cell_volume();
    let w = nu.values();
    let apply = |h: &[f64]| -> Vec<f64> {
        let grads = ops.gradient(h);
        let flux: Vec<Vec<f64>> = grads
            .into_iter()
            .map(|c| c.into_iter().zip(w).map(|(d, v)| d * v).collect())
            .collect();
        let refs: Vec<&[f64]> = flux.iter().map(Vec::as_slice).collect();
        ops.divergence(&refs).into_iter().map(|v| -v).collect()
    };
    let precondition = |r: &[f64]| -> Vec<f64> { ops.inverse_laplacian(r).into_iter().map(|v| -v).collect() };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * cell;

    let weighted: Vec<Vec<f64>> = g
        .components()
        .iter()
        .map(|c| c.iter().zip(w).map(|(gv, v)| gv * v).collect())
        .collect();
    let refs: Vec<&[f64]> = weighted.iter().map(Vec::as_slice).collect();
    let b: Vec<f64> = ops.divergence(&refs).into_iter().map(|v| -v).collect();

    let mut h = precondition(&b);
    let ah = apply(&h);
    let mut r: Vec<f64> = b.iter().zip(&ah).map(|(x, y)| x - y).collect();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = dot(&r, &r).sqrt();
    let mut iterations = 0;
    while res > tol {
        if iterations >= max_iter {
            return Err(Error::SolverFailure {
                message: format!("weighted Helmholtz CG stalled after {iterations} iterations"),
                residual: res,
            });
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::SolverFailure {
                message: "weighted Helmholtz operator lost positivity".into(),
                residual: res,
            });
        }
        let alpha = rz / pap;
        h.iter_mut().zip(&p).for_each(|(x, d)| *x += alpha * d);
        r.iter_mut().zip(&ap).for_each(|(x, d)| *x -= alpha * d);
        z = precondition(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.iter_mut().zip(&z).for_each(|(x, d)| *x = d + beta * *x);
        res = dot(&r, &r).sqrt();
        iterations += 1;
    }
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    h.iter_mut().for_each(|v| *v -= mean);
    let projected = ops.gradient(&h);
    let residual: Vec<Vec<f64>> = g
        .components()
        .iter()
        .zip(&projected)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    Ok(HelmholtzResult {
        potential: ScalarField::new(grid.clone(), h)?,
        projected: VectorField::new(grid.clone(), projected)?,
        residual: VectorField::new(grid.clone(), residual)?,
        iterations,
    })
}

/// Empirical `max ||P G||_p / ||G||_p` over random band-limited `G` on `grid`.
pub fn projection_norm_check(grid: &TorusGrid, p: f64, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return contract("projection_norm_check needs at least one trial");
    }
    if !(p >= 2.0) {
        return contract(format!("exponent must be at least 2, got {p}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let g = random_trig_vector(grid, grid.n(), 4, 5, &mut rng);
        let norm = g.lp_norm(p);
        if norm == 0.0 {
            continue;
        }
        worst = worst.max(project_lebesgue(&g)?.projected.lp_norm(p) / norm);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::torus::{gradient, random_trig_polynomial};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn diff(a: &VectorField, b: &VectorField) -> f64 {
        a.sub(b).unwrap().sup_norm()
    }

    fn random_density<R: Rng>(grid: &TorusGrid, rng: &mut R) -> DensityField {
        let f = random_trig_polynomial(grid, 2, 3, rng);
        let s = f.sup_norm().max(1e-12);
        DensityField::normalized(grid.clone(), f.values().iter().map(|v| (0.8 * v / s).exp()).collect()).unwrap()
    }

    #[test]
    fn gradients_project_to_themselves() {
        let g = TorusGrid::uniform(2, 2, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pot = random_trig_polynomial(&g, 3, 4, &mut rng);
        let grad = gradient(&pot).unwrap();
        let res = project_lebesgue(&grad).unwrap();
        assert!(diff(&res.projected, &grad) <= 1e-10);
        assert!(res.residual.sup_norm() <= 1e-10);
        let nu = random_density(&g, &mut rng);
        let w = project_weighted(&grad, &nu).unwrap();
        assert!(diff(&w.projected, &grad) <= 1e-8);
    }

    #[test]
    fn constants_and_transverse_mode_project_to_zero() {
        let g = TorusGrid::uniform(2, 2, 16).unwrap();
        let c = VectorField::constant(&g, &[0.7, -1.2]);
        let res = project_lebesgue(&c).unwrap();
        assert!(res.projected.sup_norm() <= 1e-14);
        assert!(diff(&res.residual, &c) <= 1e-14);

        let t = VectorField::from_fn(&g, 2, |p| vec![-(TWO_PI * p[1]).cos(), 0.0]);
        let res = project_lebesgue(&t).unwrap();
        assert!(res.projected.sup_norm() <= 1e-14);
    }

    #[test]
    fn uniform_weight_matches_lebesgue() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for m in [1, 2] {
            let g = TorusGrid::uniform(m, m, 32).unwrap();
            let v = random_trig_vector(&g, m, 3, 5, &mut rng);
            let a = project_lebesgue(&v).unwrap();
            let b = project_weighted(&v, &DensityField::uniform(&g)).unwrap();
            assert!(diff(&a.projected, &b.projected) <= 1e-8);
        }
    }

    #[test]
    fn one_dimensional_closed_form_matches_cg_and_has_constant_flux() {
        let g = TorusGrid::uniform(1, 1, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..5 {
            let v = random_trig_vector(&g, 1, 4, 5, &mut rng).add(&VectorField::constant(&g, &[0.4])).unwrap();
            let nu = random_density(&g, &mut rng);
            let fast = project_weighted(&v, &nu).unwrap();
            let cg = project_weighted_cg(&v, &nu, 1e-11, 10_000).unwrap();
            assert!(diff(&fast.projected, &cg.projected) <= 1e-8);
            assert_abs_diff_eq!(fast.projected.means()[0], 0.0, epsilon = 1e-12);
            let flux: Vec<f64> =
                fast.residual.component(0).iter().zip(nu.values()).map(|(r, w)| r * w).collect();
            assert!(flux.iter().all(|f| (f - flux[0]).abs() <= 1e-12));
            let grad_h = gradient(&fast.potential).unwrap();
            assert!(diff(&grad_h, &fast.projected) <= 1e-10);
        }
    }

    #[test]
    fn weighted_projection_satisfies_pythagoras_and_minimality() {
        let g = TorusGrid::uniform(2, 2, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..3 {
            let v = random_trig_vector(&g, 2, 3, 5, &mut rng);
            let nu = random_density(&g, &mut rng);
            let w = project_weighted(&v, &nu).unwrap();
            let weighted_sq = |f: &VectorField| -> f64 {
                (0..g.len()).map(|i| f.norm_at(i).powi(2) * nu.values()[i]).sum::<f64>() * g.cell_volume()
            };
            let lhs = weighted_sq(&v);
            let rhs = weighted_sq(&w.projected) + weighted_sq(&w.residual);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-8 * lhs.max(1.0));
            // the Lebesgue projection is a competitor in the weighted minimization
            let leb = project_lebesgue(&v).unwrap();
            let competitor = v.sub(&leb.projected).unwrap();
            assert!(weighted_sq(&w.residual) <= weighted_sq(&competitor) + 1e-10);
            let grad_h = gradient(&w.potential).unwrap();
            assert!(diff(&grad_h, &w.projected) <= 1e-10);
        }
    }

    #[test]
    fn residual_is_orthogonal_to_gradients() {
        let g = TorusGrid::uniform(2, 2, 32).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_trig_vector(&g, 2, 4, 6, &mut rng);
        let res = project_lebesgue(&v).unwrap();
        let div = crate::torus::divergence(&res.residual).unwrap();
        assert!(div.sup_norm() <= 1e-10);
        let rn = res.residual.l2_norm();
        for _ in 0..50 {
            let test = gradient(&random_trig_polynomial(&g, 5, 4, &mut rng)).unwrap();
            let ip = res.residual.inner(&test).unwrap();
            assert!(ip.abs() <= 1e-8 * rn * test.l2_norm());
        }
    }

    #[test]
    fn norm_check_examples() {
        let g1 = TorusGrid::uniform(1, 1, 64).unwrap();
        let g2 = TorusGrid::uniform(2, 2, 32).unwrap();
        assert!(projection_norm_check(&g2, 2.0, 50, 1).unwrap() <= 1.0 + 1e-10);
        let c4 = projection_norm_check(&g1, 4.0, 500, 2).unwrap();
        assert!(c4.is_finite() && c4 > 0.0);
        let grad = gradient(&random_trig_polynomial(&g2, 3, 4, &mut ChaCha8Rng::seed_from_u64(9))).unwrap();
        let ratio = project_lebesgue(&grad).unwrap().projected.lp_norm(4.0) / grad.lp_norm(4.0);
        assert_abs_diff_eq!(ratio, 1.0, epsilon = 1e-10);
    }

    fn field_strategy() -> impl Strategy<Value = (u64, u64)> {
        (any::<u64>(), any::<u64>())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn lebesgue_projection_algebra((s1, s2) in field_strategy(), a in -3.0f64..3.0, b in -3.0f64..3.0,
                                       z0 in -8isize..8, z1 in -8isize..8) {
            let g = TorusGrid::uniform(2, 2, 16).unwrap();
            let v1 = random_trig_vector(&g, 2, 3, 4, &mut ChaCha8Rng::seed_from_u64(s1));
            let v2 = random_trig_vector(&g, 2, 3, 4, &mut ChaCha8Rng::seed_from_u64(s2));
            let p1 = project_lebesgue(&v1).unwrap().projected;
            let p2 = project_lebesgue(&v2).unwrap().projected;

            let twice = project_lebesgue(&p1).unwrap().projected;
            prop_assert!(diff(&twice, &p1) <= 1e-10);

            let combo = project_lebesgue(&v1.axpby(a, &v2, b).unwrap()).unwrap().projected;
            prop_assert!(diff(&combo, &p1.axpby(a, &p2, b).unwrap()) <= 1e-10);

            let shifted = project_lebesgue(&v1.shifted(&[z0, z1])).unwrap().projected;
            prop_assert!(diff(&shifted, &p1.shifted(&[z0, z1])) <= 1e-10);

            prop_assert!(p1.l2_norm() <= v1.l2_norm() * (1.0 + 1e-12));
        }
    }
}
