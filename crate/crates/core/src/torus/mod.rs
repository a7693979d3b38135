//! Periodic grid geometry, fields and spectral calculus on the flat torus.

mod field;
mod grid;
mod interp;
pub mod io;
mod random;
mod spectral;

pub use field::{DensityField, ScalarField, VectorField, POSITIVITY_FLOOR};
pub use grid::TorusGrid;
pub use interp::SparseSpectrum;
pub use random::{random_trig_polynomial, random_trig_vector};
pub use spectral::{
    check_same_grid,
    conditional, divergence, fiber_average, gradient, laplacian, marginal_xi, periodic_distance, SpectralOps,
};
