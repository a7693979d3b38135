//! The nonlinear Fokker-Planck system of ABF and PABF, linear stationary
//! solves for fixed drifts, and the stationary fixed-point iteration.

mod stationary;
mod stepper;

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forces::{conditional_mean_force, ForceField};
use crate::helmholtz::project_lebesgue;
use crate::torus::{DensityField, ScalarField, TorusGrid, VectorField};

pub use stationary::{
    drift_lipschitz_check, fixed_point_iterate, fixed_point_iterate_with, fixed_point_multistart,
    stationary_linear, stationary_linear_with, stationary_residual, DriftLipschitzReport, FixedPointOptions,
    LinearSolver, StationaryLinear, StationaryState,
};
pub use stepper::{marginal_equation_check, max_stable_dt, simulate, step, Stepper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Abf,
    Pabf,
    Unbiased,
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "abf" => Ok(Self::Abf),
            "pabf" => Ok(Self::Pabf),
            "unbiased" | "none" => Ok(Self::Unbiased),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Abf => "abf",
            Self::Pabf => "pabf",
            Self::Unbiased => "unbiased",
        })
    }
}

/// Raw mean force `G`, applied bias `B` and (PABF) the potential `H` with
/// `B = grad H`, all on `T^m`.
#[derive(Debug, Clone)]
pub struct BiasProfile {
    pub g: VectorField,
    pub b: VectorField,
    pub h: Option<ScalarField>,
    /// `B - G`, evaluated without cancellation where the method allows.
    pub(crate) drift: VectorField,
}

impl BiasProfile {
    pub fn drift(&self) -> &VectorField {
        &self.drift
    }

    pub(crate) fn from_mean_force(g: VectorField, method: Method) -> Result<Self> {
        let xi = g.grid().clone();
        let m = g.dim();
        Ok(match method {
            Method::Abf => Self {
                b: g.clone(),
                drift: VectorField::zeros(&xi, m),
                g,
                h: None,
            },
            Method::Pabf => {
                let proj = project_lebesgue(&g)?;
                Self {
                    b: proj.projected,
                    drift: proj.residual.scale(-1.0),
                    g,
                    h: Some(proj.potential),
                }
            }
            Method::Unbiased => Self {
                b: VectorField::zeros(&xi, m),
                drift: g.scale(-1.0),
                g,
                h: None,
            },
        })
    }

    /// Bias held at `b` while `G` follows the density.
    pub(crate) fn frozen(g: VectorField, b: VectorField) -> Result<Self> {
        let drift = b.sub(&g)?;
        Ok(Self { g, b, h: None, drift })
    }

    pub fn compute(force: &ForceField, pi: &[f64], method: Method) -> Result<Self> {
        let grid = force.grid();
        let g = VectorField::new(grid.xi_grid(), conditional_mean_force(grid, &force.f1(), pi)?)?;
        Self::from_mean_force(g, method)
    }
}

/// Density, bias and time along a PDE trajectory.
///
/// The density is carried as its full spectrum so that mass is exact and the
/// marginal deviation `pi^xi - 1` stays accurate far below unit roundoff.
#[derive(Debug, Clone)]
pub struct PdeState {
    pub time: f64,
    pub steps: u64,
    pub pi: DensityField,
    pub bias: BiasProfile,
    pub method: Method,
    pub beta: f64,
    spectrum: Vec<Complex64>,
    marginal_deviation: Vec<f64>,
}

impl PdeState {
    pub fn new(pi0: &DensityField, force: &ForceField, method: Method) -> Result<Self> {
        let grid = force.grid();
        crate::torus::check_same_grid(grid, pi0.grid())?;
        let mut spectrum = grid.forward_real(pi0.values());
        let scale = grid.len() as f64 / spectrum[0].re;
        spectrum.iter_mut().for_each(|z| *z *= scale);
        spectrum[0] = Complex64::new(grid.len() as f64, 0.0);
        Self::from_spectrum(spectrum, force, method, 0.0, 0, None)
    }

    pub(crate) fn from_spectrum(
        spectrum: Vec<Complex64>,
        force: &ForceField,
        method: Method,
        time: f64,
        steps: u64,
        frozen: Option<&VectorField>,
    ) -> Result<Self> {
        let grid = force.grid();
        let (values, marginal_deviation) = physical(grid, &spectrum);
        if let Some((i, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > crate::torus::POSITIVITY_FLOOR))
        {
            return Err(Error::SolverFailure {
                message: format!(
                    "density lost positivity at t = {time}, step {steps}, point {:?} (value {v:e}, min {:e})",
                    grid.multi_index(i),
                    values.iter().copied().fold(f64::INFINITY, f64::min)
                ),
                residual: v,
            });
        }
        let bias = match frozen {
            None => BiasProfile::compute(force, &values, method)?,
            Some(b) => {
                let g = VectorField::new(grid.xi_grid(), conditional_mean_force(grid, &force.f1(), &values)?)?;
                BiasProfile::frozen(g, b.clone())?
            }
        };
        Ok(Self {
            time,
            steps,
            pi: DensityField::new(grid.clone(), values)?,
            bias,
            method,
            beta: force.beta(),
            spectrum,
            marginal_deviation,
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        self.pi.grid()
    }

    /// `pi^xi - 1` on the xi-grid.
    pub fn marginal_deviation(&self) -> &[f64] {
        &self.marginal_deviation
    }

    pub fn marginal(&self) -> Result<DensityField> {
        DensityField::new(
            self.grid().xi_grid(),
            self.marginal_deviation.iter().map(|d| 1.0 + d).collect(),
        )
    }

    pub(crate) fn spectrum(&self) -> &[Complex64] {
        &self.spectrum
    }
}

/// Physical values and marginal deviation of a density spectrum.
pub(crate) fn physical(grid: &TorusGrid, spectrum: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
    let values = grid.inverse_real(spectrum.to_vec());
    (values, marginal_deviation(grid, spectrum))
}

pub(crate) fn marginal_deviation(grid: &TorusGrid, spectrum: &[Complex64]) -> Vec<f64> {
    let fiber = grid.fiber_len();
    let xi = grid.xi_grid();
    let mut slice: Vec<Complex64> = (0..grid.xi_len()).map(|k| spectrum[k * fiber] / fiber as f64).collect();
    slice[0] = Complex64::new(0.0, 0.0);
    xi.inverse_real(slice)
}
