use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{contract, Result};

struct AxisPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Regular collocation grid on `T^n = T^m x T^(n-m)`.
///
/// Points are stored row-major with axis 0 slowest. The first `m` axes carry
/// the reaction coordinate `x`, the remaining ones the fiber coordinate `y`,
/// so every fiber `{x} x T^(n-m)` is a contiguous block of `fiber_len()` values.
#[derive(Clone)]
pub struct TorusGrid {
    resolution: Vec<usize>,
    m: usize,
    plans: Arc<Vec<AxisPlan>>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("resolution", &self.resolution)
            .field("m", &self.m)
            .finish()
    }
}

impl PartialEq for TorusGrid {
    fn eq(&self, other: &Self) -> bool {
        self.resolution == other.resolution && self.m == other.m
    }
}

impl Eq for TorusGrid {}

impl TorusGrid {
    pub fn new(resolution: &[usize], m: usize) -> Result<Self> {
        let n = resolution.len();
        if n == 0 {
            return contract("torus dimension must be positive");
        }
        if m == 0 || m > n {
            return contract(format!("reaction-coordinate dimension m = {m} must satisfy 1 <= m <= n = {n}"));
        }
        if resolution.iter().any(|&r| r < 2) {
            return contract(format!("every axis needs at least 2 points, got {resolution:?}"));
        }
        let mut planner = FftPlanner::new();
        let plans = resolution
            .iter()
            .map(|&len| AxisPlan {
                forward: planner.plan_fft_forward(len),
                inverse: planner.plan_fft_inverse(len),
            })
            .collect();
        Ok(Self {
            resolution: resolution.to_vec(),
            m,
            plans: Arc::new(plans),
        })
    }

    /// Square grid with `points` per axis.
    pub fn uniform(n: usize, m: usize, points: usize) -> Result<Self> {
        Self::new(&vec![points; n], m)
    }

    pub fn n(&self) -> usize {
        self.resolution.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / self.resolution[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.n()).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn cell_volume(&self) -> f64 {
        1.0 / self.len() as f64
    }

    /// Number of points in `T^m`.
    pub fn xi_len(&self) -> usize {
        self.resolution[..self.m].iter().product()
    }

    /// Number of points in one fiber `T^(n-m)` (1 when `m == n`).
    pub fn fiber_len(&self) -> usize {
        self.resolution[self.m..].iter().product()
    }

    /// Grid on the reaction-coordinate torus `T^m`.
    pub fn xi_grid(&self) -> TorusGrid {
        Self::new(&self.resolution[..self.m], self.m).expect("sub-grid of a valid grid")
    }

    /// Grid on the fiber torus `T^(n-m)`, `None` when `m == n`.
    pub fn fiber_grid(&self) -> Option<TorusGrid> {
        let k = self.n() - self.m;
        (k > 0).then(|| Self::new(&self.resolution[self.m..], k).expect("sub-grid of a valid grid"))
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.n()];
        for axis in (0..self.n()).rev() {
            idx[axis] = flat % self.resolution[axis];
            flat /= self.resolution[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.resolution)
            .fold(0, |acc, (&i, &r)| acc * r + i % r)
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.resolution)
            .map(|(&i, &r)| i as f64 / r as f64)
            .collect()
    }

    /// Fills `out` with the coordinates of every grid point, one `Vec` per axis.
    pub fn axis_coords(&self) -> Vec<Vec<f64>> {
        let len = self.len();
        let mut out = vec![vec![0.0; len]; self.n()];
        for flat in 0..len {
            for (axis, c) in self.coords(flat).into_iter().enumerate() {
                out[axis][flat] = c;
            }
        }
        out
    }

    /// Signed integer wavenumber of DFT slot `i` on `axis`.
    pub fn wavenumber(&self, axis: usize, i: usize) -> f64 {
        let len = self.resolution[axis];
        if i <= len / 2 {
            if len % 2 == 0 && i == len / 2 {
                // Nyquist: sign is ambiguous; even derivatives use |k| = len/2
                (len / 2) as f64
            } else {
                i as f64
            }
        } else {
            i as f64 - len as f64
        }
    }

    /// Wavenumber used by first derivatives: the Nyquist slot is zeroed so that
    /// spectral differentiation stays real and skew-adjoint.
    pub fn derivative_wavenumber(&self, axis: usize, i: usize) -> f64 {
        let len = self.resolution[axis];
        if len % 2 == 0 && i == len / 2 {
            0.0
        } else {
            self.wavenumber(axis, i)
        }
    }

    /// Per-point wavenumber tables: `(k_derivative[axis][flat], |k|^2[flat])`,
    /// the squared norm keeping the Nyquist contribution.
    pub fn wavenumber_tables(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let len = self.len();
        let n = self.n();
        let mut kd = vec![vec![0.0; len]; n];
        let mut k2 = vec![0.0; len];
        for flat in 0..len {
            let idx = self.multi_index(flat);
            for axis in 0..n {
                kd[axis][flat] = self.derivative_wavenumber(axis, idx[axis]);
                let k = self.wavenumber(axis, idx[axis]);
                k2[flat] += k * k;
            }
        }
        (kd, k2)
    }

    /// Unnormalized forward DFT over all axes, in place.
    pub fn fft(&self, data: &mut [Complex64]) {
        self.transform(data, false);
    }

    /// Inverse DFT over all axes including the `1/len` normalization.
    pub fn ifft(&self, data: &mut [Complex64]) {
        self.transform(data, true);
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft(&mut buf);
        buf
    }

    pub fn inverse_real(&self, mut spectrum: Vec<Complex64>) -> Vec<f64> {
        self.ifft(&mut spectrum);
        spectrum.into_iter().map(|z| z.re).collect()
    }

    fn transform(&self, data: &mut [Complex64], inverse: bool) {
        assert_eq!(data.len(), self.len(), "buffer does not match grid size");
        let n = self.n();
        for axis in 0..n {
            let len = self.resolution[axis];
            let stride: usize = self.resolution[axis + 1..].iter().product();
            let plan = if inverse {
                &self.plans[axis].inverse
            } else {
                &self.plans[axis].forward
            };
            let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            if stride == 1 {
                plan.process_with_scratch(data, &mut scratch);
                continue;
            }
            let outer = data.len() / (len * stride);
            let mut line = vec![Complex64::new(0.0, 0.0); len];
            for o in 0..outer {
                let base = o * len * stride;
                for s in 0..stride {
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = data[base + j * stride + s];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        data[base + j * stride + s] = *v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_volume_times_points_is_one() {
        for res in [vec![64], vec![32, 16], vec![8, 8, 4]] {
            let g = TorusGrid::new(&res, 1).unwrap();
            assert!((g.cell_volume() * g.len() as f64 - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(TorusGrid::new(&[16, 16], 0).is_err());
        assert!(TorusGrid::new(&[16, 16], 3).is_err());
        assert!(TorusGrid::new(&[], 1).is_err());
        assert!(TorusGrid::new(&[1, 4], 1).is_err());
    }

    #[test]
    fn index_round_trip_wraps() {
        let g = TorusGrid::new(&[4, 6, 5], 2).unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
        assert_eq!(g.flat_index(&[4, 6, 5]), 0);
        assert_eq!(g.xi_len() * g.fiber_len(), g.len());
    }

    #[test]
    fn fft_round_trip() {
        let g = TorusGrid::new(&[8, 6, 4], 1).unwrap();
        let vals: Vec<f64> = (0..g.len()).map(|i| ((i * 37) % 11) as f64 - 3.0).collect();
        let back = g.inverse_real(g.forward_real(&vals));
        for (a, b) in vals.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
