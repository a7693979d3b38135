use num_complex::Complex64;

use super::grid::TorusGrid;
use crate::error::{contract, Error, Result};

/// Marginal values below this floor make conditionals undefined.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// Real-valued field sampled on a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return contract(format!(
                "field has {} values but grid has {} points",
                values.len(),
                grid.len()
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &TorusGrid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn constant(grid: &TorusGrid, c: f64) -> Self {
        Self {
            values: vec![c; grid.len()],
            grid: grid.clone(),
        }
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: &TorusGrid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> f64 {
        self.integral()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.grid.cell_volume()).powf(1.0 / p)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_constant(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Returns the field with its mean removed.
    pub fn zero_mean(&self) -> Self {
        let mean = self.mean();
        self.add_constant(-mean)
    }

    pub fn spectrum(&self) -> Vec<Complex64> {
        self.grid.forward_real(&self.values)
    }

    /// Cyclic shift by whole grid cells: `(tau_z f)(p) = f(p - z)`.
    pub fn shifted(&self, shift: &[isize]) -> Self {
        let mut out = vec![0.0; self.values.len()];
        let res = self.grid.resolution();
        for (flat, &v) in self.values.iter().enumerate() {
            let idx: Vec<usize> = self
                .grid
                .multi_index(flat)
                .iter()
                .zip(res)
                .zip(shift)
                .map(|((&i, &r), &s)| (i as isize + s).rem_euclid(r as isize) as usize)
                .collect();
            out[self.grid.flat_index(&idx)] = v;
        }
        Self {
            grid: self.grid.clone(),
            values: out,
        }
    }
}

/// `d`-component vector field stored component-major.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: TorusGrid, components: Vec<Vec<f64>>) -> Result<Self> {
        if components.is_empty() {
            return contract("vector field needs at least one component");
        }
        if components.iter().any(|c| c.len() != grid.len()) {
            return contract("vector field component length does not match grid");
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: &TorusGrid, dim: usize) -> Self {
        Self {
            grid: grid.clone(),
            components: vec![vec![0.0; grid.len()]; dim],
        }
    }

    pub fn constant(grid: &TorusGrid, value: &[f64]) -> Self {
        Self {
            grid: grid.clone(),
            components: value.iter().map(|&c| vec![c; grid.len()]).collect(),
        }
    }

    pub fn from_fn(grid: &TorusGrid, dim: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut components = vec![vec![0.0; grid.len()]; dim];
        for i in 0..grid.len() {
            let v = f(&grid.coords(i));
            assert_eq!(v.len(), dim, "closure returned wrong number of components");
            for (c, val) in components.iter_mut().zip(v) {
                c[i] = val;
            }
        }
        Self {
            grid: grid.clone(),
            components,
        }
    }

    pub fn from_scalars(fields: Vec<ScalarField>) -> Result<Self> {
        let grid = fields
            .first()
            .map(|f| f.grid().clone())
            .ok_or_else(|| Error::Contract("empty component list".into()))?;
        for f in &fields {
            same_grid(&grid, f.grid())?;
        }
        Ok(Self {
            grid,
            components: fields.into_iter().map(ScalarField::into_values).collect(),
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, c: usize) -> &[f64] {
        &self.components[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.components[c]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn scalar(&self, c: usize) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.components[c].clone(),
        }
    }

    pub fn at(&self, flat: usize) -> Vec<f64> {
        self.components.iter().map(|c| c[flat]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().flatten().all(|v| v.is_finite())
    }

    pub fn norm_at(&self, flat: usize) -> f64 {
        self.components.iter().map(|c| c[flat] * c[flat]).sum::<f64>().sqrt()
    }

    /// `sup_z |v(z)|` with the Euclidean norm per point.
    pub fn sup_norm(&self) -> f64 {
        (0..self.grid.len()).fold(0.0, |m, i| m.max(self.norm_at(i)))
    }

    pub fn l2_norm(&self) -> f64 {
        (self.components.iter().flatten().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        let s: f64 = (0..self.grid.len()).map(|i| self.norm_at(i).powf(p)).sum();
        (s * self.grid.cell_volume()).powf(1.0 / p)
    }

    pub fn means(&self) -> Vec<f64> {
        let w = self.grid.cell_volume();
        self.components.iter().map(|c| c.iter().sum::<f64>() * w).collect()
    }

    pub fn inner(&self, other: &Self) -> Result<f64> {
        same_grid(&self.grid, &other.grid)?;
        if self.dim() != other.dim() {
            return contract("inner product of vector fields with different dimension");
        }
        let s: f64 = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            components: self.components.iter().map(|c| c.iter().map(|&v| f(v)).collect()).collect(),
        }
    }

    /// `a * self + b * other`
    pub fn axpby(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        same_grid(&self.grid, &other.grid)?;
        if self.dim() != other.dim() {
            return contract("vector fields have different dimension");
        }
        Ok(Self {
            grid: self.grid.clone(),
            components: self
                .components
                .iter()
                .zip(&other.components)
                .map(|(x, y)| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect())
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpby(1.0, other, -1.0)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpby(1.0, other, 1.0)
    }

    pub fn shifted(&self, shift: &[isize]) -> Self {
        Self {
            grid: self.grid.clone(),
            components: (0..self.dim()).map(|c| self.scalar(c).shifted(shift).into_values()).collect(),
        }
    }

    /// Extends a field on `T^m` to `T^n` by `(x, y) -> v(x)`; extra components are zero.
    pub fn lift_from_xi(xi_field: &VectorField, grid: &TorusGrid, dim: usize) -> Result<Self> {
        if *xi_field.grid() != grid.xi_grid() {
            return contract("field to lift does not live on the xi-grid");
        }
        let fiber = grid.fiber_len();
        let mut out = Self::zeros(grid, dim);
        for c in 0..xi_field.dim().min(dim) {
            let src = xi_field.component(c);
            let dst = out.component_mut(c);
            for (x, &v) in src.iter().enumerate() {
                dst[x * fiber..(x + 1) * fiber].fill(v);
            }
        }
        Ok(out)
    }
}

/// Strictly positive probability density on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl DensityField {
    /// Validates strict positivity and normalization (within `1e-10`).
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        let d = Self::positive(grid, values)?;
        let mass = d.mass();
        if (mass - 1.0).abs() > 1e-10 {
            return contract(format!("density has mass {mass}, expected 1"));
        }
        Ok(d)
    }

    /// Normalizes arbitrary positive weights into a density.
    pub fn normalized(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        let mut d = Self::positive(grid, values)?;
        let mass = d.mass();
        d.values.iter_mut().for_each(|v| *v /= mass);
        Ok(d)
    }

    /// Density proportional to `exp(-beta * potential)`, evaluated with a max shift.
    pub fn gibbs(potential: &ScalarField, beta: f64) -> Result<Self> {
        let min = potential.min();
        let w = potential.values().iter().map(|&v| (-beta * (v - min)).exp()).collect();
        Self::normalized(potential.grid().clone(), w)
    }

    pub fn uniform(grid: &TorusGrid) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![1.0; grid.len()],
        }
    }

    fn positive(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return contract("density length does not match grid");
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return contract(format!("density value {v} at point {i} is not strictly positive"));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    pub fn as_scalar(&self) -> ScalarField {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.clone(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fiber slice `y -> pi(x, y)` at xi-index `x` (unnormalized).
    pub fn fiber(&self, x: usize) -> &[f64] {
        let f = self.grid.fiber_len();
        &self.values[x * f..(x + 1) * f]
    }
}

pub(crate) fn same_grid(a: &TorusGrid, b: &TorusGrid) -> Result<()> {
    if a != b {
        return contract(format!("grid mismatch: {:?} vs {:?}", a, b));
    }
    Ok(())
}
