//! Spectral differentiation, quadrature over fibers and periodic geometry.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::field::{same_grid, DensityField, ScalarField, VectorField, POSITIVITY_FLOOR};
use super::grid::TorusGrid;
use crate::error::{contract, Error, Result};

const TWO_PI: f64 = 2.0 * PI;

/// Precomputed wavenumber tables for repeated spectral operations on one grid.
#[derive(Debug, Clone)]
pub struct SpectralOps {
    grid: TorusGrid,
    kd: Vec<Vec<f64>>,
    k2: Vec<f64>,
}

impl SpectralOps {
    pub fn new(grid: &TorusGrid) -> Self {
        let (kd, k2) = grid.wavenumber_tables();
        Self {
            grid: grid.clone(),
            kd,
            k2,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// Derivative wavenumbers (Nyquist zeroed), per axis.
    pub fn kd(&self) -> &[Vec<f64>] {
        &self.kd
    }

    /// `|k|^2` per mode, Nyquist included.
    pub fn k2(&self) -> &[f64] {
        &self.k2
    }

    pub fn gradient(&self, values: &[f64]) -> Vec<Vec<f64>> {
        let spec = self.grid.forward_real(values);
        (0..self.grid.n()).map(|axis| self.derivative_from_spectrum(&spec, axis)).collect()
    }

    pub fn derivative_from_spectrum(&self, spec: &[Complex64], axis: usize) -> Vec<f64> {
        let d: Vec<Complex64> = spec
            .iter()
            .zip(&self.kd[axis])
            .map(|(c, &k)| c * Complex64::new(0.0, TWO_PI * k))
            .collect();
        self.grid.inverse_real(d)
    }

    /// Spectrum of `sum_j d_j f_j`.
    pub fn divergence_spectrum(&self, components: &[&[f64]]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        for (axis, comp) in components.iter().enumerate() {
            let spec = self.grid.forward_real(comp);
            for ((o, c), &k) in out.iter_mut().zip(&spec).zip(&self.kd[axis]) {
                *o += c * Complex64::new(0.0, TWO_PI * k);
            }
        }
        out
    }

    pub fn divergence(&self, components: &[&[f64]]) -> Vec<f64> {
        self.grid.inverse_real(self.divergence_spectrum(components))
    }

    pub fn laplacian(&self, values: &[f64]) -> Vec<f64> {
        let spec: Vec<Complex64> = self
            .grid
            .forward_real(values)
            .into_iter()
            .zip(&self.k2)
            .map(|(c, &k2)| -c * (4.0 * PI * PI * k2))
            .collect();
        self.grid.inverse_real(spec)
    }

    /// Zero-mean solution `u` of `Lap u = f - mean(f)`.
    pub fn inverse_laplacian(&self, values: &[f64]) -> Vec<f64> {
        let mut spec = self.grid.forward_real(values);
        self.inverse_laplacian_spectrum(&mut spec);
        self.grid.inverse_real(spec)
    }

    pub fn inverse_laplacian_spectrum(&self, spec: &mut [Complex64]) {
        for (c, &k2) in spec.iter_mut().zip(&self.k2) {
            if k2 == 0.0 {
                *c = Complex64::new(0.0, 0.0);
            } else {
                *c /= -4.0 * PI * PI * k2;
            }
        }
    }
}

/// Geodesic distance on the flat torus `T^d`.
pub fn periodic_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return contract(format!(
            "periodic_distance needs equal positive dimensions, got {} and {}",
            p.len(),
            q.len()
        ));
    }
    Ok(p.iter()
        .zip(q)
        .map(|(a, b)| {
            let d = (a - b).rem_euclid(1.0);
            let d = d.min(1.0 - d);
            d * d
        })
        .sum::<f64>()
        .sqrt())
}

/// Exact derivative of the trigonometric interpolant of `f`.
pub fn gradient(f: &ScalarField) -> Result<VectorField> {
    if !f.is_finite() {
        return contract("gradient of a non-finite field");
    }
    let ops = SpectralOps::new(f.grid());
    VectorField::new(f.grid().clone(), ops.gradient(f.values()))
}

pub fn divergence(v: &VectorField) -> Result<ScalarField> {
    if v.dim() != v.grid().n() {
        return contract(format!(
            "divergence needs {} components, got {}",
            v.grid().n(),
            v.dim()
        ));
    }
    let ops = SpectralOps::new(v.grid());
    let comps: Vec<&[f64]> = v.components().iter().map(Vec::as_slice).collect();
    ScalarField::new(v.grid().clone(), ops.divergence(&comps))
}

pub fn laplacian(f: &ScalarField) -> ScalarField {
    let ops = SpectralOps::new(f.grid());
    ScalarField::new(f.grid().clone(), ops.laplacian(f.values())).expect("same grid")
}

/// Fiber averages `x -> int f(x, y) dy` on `T^m`.
pub fn fiber_average(grid: &TorusGrid, values: &[f64]) -> Vec<f64> {
    let fiber = grid.fiber_len();
    values
        .chunks_exact(fiber)
        .map(|c| c.iter().sum::<f64>() / fiber as f64)
        .collect()
}

/// `x -> int pi(x, y) dy` by the rectangle rule over the fiber axes.
pub fn marginal_xi(pi: &DensityField) -> Result<DensityField> {
    let xi = pi.grid().xi_grid();
    DensityField::normalized_preserving(xi, fiber_average(pi.grid(), pi.values()))
}

/// Conditional density `y -> pi(x, y) / pi^xi(x)` at xi-index `x`.
pub fn conditional(pi: &DensityField, x: usize) -> Result<DensityField> {
    let grid = pi.grid();
    let fiber_grid = grid
        .fiber_grid()
        .ok_or_else(|| Error::Contract("conditional needs n > m".into()))?;
    if x >= grid.xi_len() {
        return contract(format!("xi-index {x} out of range"));
    }
    let slice = pi.fiber(x);
    let marginal = slice.iter().sum::<f64>() / slice.len() as f64;
    if !(marginal > POSITIVITY_FLOOR) {
        return Err(Error::DegenerateConditional { index: x, marginal });
    }
    DensityField::normalized(fiber_grid, slice.iter().map(|v| v / marginal).collect())
}

impl DensityField {
    /// Wraps values that are already a density up to rounding, without rescaling.
    pub(crate) fn normalized_preserving(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        let cell = grid.cell_volume();
        let mass = values.iter().sum::<f64>() * cell;
        if (mass - 1.0).abs() > 1e-10 {
            return DensityField::normalized(grid, values);
        }
        DensityField::new(grid, values)
    }
}

/// Checks that the two fields live on the same grid.
pub fn check_same_grid(a: &TorusGrid, b: &TorusGrid) -> Result<()> {
    same_grid(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn distance_examples() {
        assert_abs_diff_eq!(periodic_distance(&[0.1], &[0.9]).unwrap(), 0.2, epsilon = 1e-15);
        assert_eq!(periodic_distance(&[0.3, 0.3], &[0.3, 0.3]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            periodic_distance(&[0.0, 0.0], &[0.5, 0.5]).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-15
        );
        assert!(periodic_distance(&[0.0], &[0.0, 0.1]).is_err());
    }

    #[test]
    fn gradient_examples() {
        let g1 = TorusGrid::uniform(1, 1, 32).unwrap();
        let c = gradient(&ScalarField::constant(&g1, 3.5)).unwrap();
        assert!(c.sup_norm() < 1e-13);

        let s = ScalarField::from_fn(&g1, |p| (TWO_PI * p[0]).sin());
        let ds = gradient(&s).unwrap();
        for i in 0..g1.len() {
            let x = g1.coords(i)[0];
            assert_abs_diff_eq!(ds.component(0)[i], TWO_PI * (TWO_PI * x).cos(), epsilon = 1e-12);
        }

        let g2 = TorusGrid::uniform(2, 1, 16).unwrap();
        let f = ScalarField::from_fn(&g2, |p| (TWO_PI * p[0]).cos() * (TWO_PI * p[1]).cos());
        let df = gradient(&f).unwrap();
        for i in 0..g2.len() {
            let p = g2.coords(i);
            let (x, y) = (TWO_PI * p[0], TWO_PI * p[1]);
            assert_abs_diff_eq!(df.component(0)[i], -TWO_PI * x.sin() * y.cos(), epsilon = 1e-12);
            assert_abs_diff_eq!(df.component(1)[i], -TWO_PI * x.cos() * y.sin(), epsilon = 1e-12);
        }
        for m in df.means() {
            assert!(m.abs() < 1e-14);
        }
    }

    #[test]
    fn marginal_examples() {
        let g = TorusGrid::uniform(2, 1, 16).unwrap();
        let u = DensityField::uniform(&g);
        let mu = marginal_xi(&u).unwrap();
        assert!(mu.values().iter().all(|v| (v - 1.0).abs() < 1e-15));

        let p = DensityField::new(
            g.clone(),
            (0..g.len())
                .map(|i| {
                    let c = g.coords(i);
                    1.0 + 0.5 * (TWO_PI * c[0]).cos() * (TWO_PI * c[1]).cos()
                })
                .collect(),
        )
        .unwrap();
        let pm = marginal_xi(&p).unwrap();
        assert!(pm.values().iter().all(|v| (v - 1.0).abs() < 1e-14));

        let prod = DensityField::new(
            g.clone(),
            (0..g.len())
                .map(|i| {
                    let c = g.coords(i);
                    (1.0 + 0.3 * (TWO_PI * c[0]).sin()) * (1.0 + 0.7 * (TWO_PI * c[1]).cos())
                })
                .collect(),
        )
        .unwrap();
        let m = marginal_xi(&prod).unwrap();
        for (x, v) in m.values().iter().enumerate() {
            let xc = x as f64 / 16.0;
            assert_abs_diff_eq!(*v, 1.0 + 0.3 * (TWO_PI * xc).sin(), epsilon = 1e-14);
        }
        for x in 0..16 {
            let q = conditional(&prod, x).unwrap();
            for (j, v) in q.values().iter().enumerate() {
                let yc = j as f64 / 16.0;
                assert_abs_diff_eq!(*v, 1.0 + 0.7 * (TWO_PI * yc).cos(), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn conditional_of_coupled_gibbs_density() {
        let g = TorusGrid::uniform(2, 1, 32).unwrap();
        let v = ScalarField::from_fn(&g, |p| (TWO_PI * p[0]).cos() + (TWO_PI * p[1]).cos());
        let pi = DensityField::gibbs(&v, 1.0).unwrap();
        // 1-D quadrature oracle for the fiber normalization
        let ny = 32;
        let z: f64 = (0..ny).map(|j| (-(TWO_PI * j as f64 / ny as f64).cos()).exp()).sum::<f64>() / ny as f64;
        for x in [0, 7, 19] {
            let q = conditional(&pi, x).unwrap();
            assert_abs_diff_eq!(q.mass(), 1.0, epsilon = 1e-12);
            for (j, val) in q.values().iter().enumerate() {
                let expect = (-(TWO_PI * j as f64 / ny as f64).cos()).exp() / z;
                assert_abs_diff_eq!(*val, expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_conditional_errors() {
        let g = TorusGrid::uniform(2, 1, 4).unwrap();
        let mut vals = vec![1.0; 16];
        for v in &mut vals[0..4] {
            *v = 1e-310;
        }
        let pi = DensityField::normalized(g, vals).unwrap();
        assert!(matches!(conditional(&pi, 0), Err(Error::DegenerateConditional { index: 0, .. })));
        assert!(conditional(&pi, 1).is_ok());
    }

    #[test]
    fn inverse_laplacian_inverts_on_zero_mean() {
        let g = TorusGrid::uniform(2, 1, 16).unwrap();
        let ops = SpectralOps::new(&g);
        let f = ScalarField::from_fn(&g, |p| (TWO_PI * p[0]).sin() + 0.3 * (4.0 * PI * (p[0] + p[1])).cos());
        let u = ops.inverse_laplacian(f.values());
        let back = ops.laplacian(&u);
        for (a, b) in back.iter().zip(f.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }
}
