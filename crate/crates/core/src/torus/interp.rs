//! Off-grid evaluation of trigonometric interpolants.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::field::{ScalarField, VectorField};
use super::grid::TorusGrid;

const RELATIVE_CUTOFF: f64 = 1e-14;

/// Trigonometric interpolant of a (vector) field, keeping only the modes whose
/// coefficient exceeds a relative cutoff. Band-limited fields evaluate exactly
/// with a handful of modes.
#[derive(Debug, Clone)]
pub struct SparseSpectrum {
    n: usize,
    dim: usize,
    kmax: Vec<i64>,
    wavenumbers: Vec<i64>,
    coefficients: Vec<Complex64>,
}

impl SparseSpectrum {
    pub fn from_scalar(f: &ScalarField) -> Self {
        Self::build(f.grid(), &[f.values()])
    }

    pub fn from_vector(v: &VectorField) -> Self {
        let comps: Vec<&[f64]> = v.components().iter().map(Vec::as_slice).collect();
        Self::build(v.grid(), &comps)
    }

    fn build(grid: &TorusGrid, comps: &[&[f64]]) -> Self {
        let n = grid.n();
        let len = grid.len() as f64;
        let specs: Vec<Vec<Complex64>> = comps
            .iter()
            .map(|c| grid.forward_real(c).into_iter().map(|z| z / len).collect())
            .collect();
        let max = specs.iter().flatten().fold(0.0f64, |m, z| m.max(z.norm()));
        let cutoff = (max * RELATIVE_CUTOFF).max(1e-300);
        let mut kmax = vec![0i64; n];
        let mut wavenumbers = Vec::new();
        let mut coefficients = Vec::new();
        for flat in 0..grid.len() {
            if specs.iter().all(|s| s[flat].norm() <= cutoff) {
                continue;
            }
            let idx = grid.multi_index(flat);
            for axis in 0..n {
                let k = grid.wavenumber(axis, idx[axis]) as i64;
                kmax[axis] = kmax[axis].max(k.abs());
                wavenumbers.push(k);
            }
            coefficients.extend(specs.iter().map(|s| s[flat]));
        }
        Self {
            n,
            dim: comps.len(),
            kmax,
            wavenumbers,
            coefficients,
        }
    }

    pub fn mode_count(&self) -> usize {
        self.coefficients.len() / self.dim.max(1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates every component at `p`, writing into `out`.
    pub fn eval_into(&self, p: &[f64], scratch: &mut Vec<Complex64>, out: &mut [f64]) {
        debug_assert_eq!(p.len(), self.n);
        debug_assert_eq!(out.len(), self.dim);
        // per-axis power tables w^k for k in -kmax..=kmax
        scratch.clear();
        let mut offsets = [0usize; 8];
        for axis in 0..self.n {
            let k = self.kmax[axis];
            offsets[axis] = scratch.len() + k as usize;
            let w = Complex64::from_polar(1.0, 2.0 * PI * p[axis]);
            let start = scratch.len();
            scratch.resize(start + 2 * k as usize + 1, Complex64::new(1.0, 0.0));
            let mid = start + k as usize;
            for j in 1..=k as usize {
                let v = scratch[mid + j - 1] * w;
                scratch[mid + j] = v;
                scratch[mid - j] = v.conj();
            }
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        for (mode, ks) in self.wavenumbers.chunks_exact(self.n).enumerate() {
            let mut phase = Complex64::new(1.0, 0.0);
            for (axis, &k) in ks.iter().enumerate() {
                phase *= scratch[(offsets[axis] as i64 + k) as usize];
            }
            let coeffs = &self.coefficients[mode * self.dim..(mode + 1) * self.dim];
            for (o, c) in out.iter_mut().zip(coeffs) {
                *o += c.re * phase.re - c.im * phase.im;
            }
        }
    }

    pub fn eval(&self, p: &[f64]) -> Vec<f64> {
        let mut scratch = Vec::new();
        let mut out = vec![0.0; self.dim];
        self.eval_into(p, &mut scratch, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn reproduces_grid_values_and_off_grid_trig_polynomials() {
        let g = TorusGrid::uniform(2, 1, 16).unwrap();
        let f = |p: &[f64]| (2.0 * PI * p[0]).sin() * (4.0 * PI * p[1]).cos() + 0.2 * (2.0 * PI * (p[0] - p[1])).cos();
        let field = ScalarField::from_fn(&g, f);
        let s = SparseSpectrum::from_scalar(&field);
        assert!(s.mode_count() <= 6);
        for p in [[0.013, 0.77], [0.5, 0.25], [0.91, 0.333]] {
            assert_abs_diff_eq!(s.eval(&p)[0], f(&p), epsilon = 1e-13);
        }
        for i in 0..g.len() {
            assert_abs_diff_eq!(s.eval(&g.coords(i))[0], field.values()[i], epsilon = 1e-13);
        }
    }
}
