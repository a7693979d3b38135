//! Adaptive biasing force dynamics on the flat torus.

pub mod diagnostics;
pub mod error;
pub mod fokker_planck;
pub mod forces;
pub mod helmholtz;
mod linalg;
pub mod particles;
pub mod torus;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
