//! Per-time diagnostics of a PDE trajectory.

use std::io::Write;

use super::{entropy_of_deviation, entropy_split_state};
use crate::error::Result;
use crate::fokker_planck::PdeState;
use crate::torus::{DensityField, VectorField};

pub const TRAJECTORY_HEADER: [&str; 8] = [
    "t",
    "marginal_entropy",
    "marginal_linf",
    "bias_error_l2",
    "entropy",
    "micro_entropy",
    "macro_entropy",
    "macro_fisher",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    /// `H(pi^xi | lambda)`
    pub marginal_entropy: f64,
    pub marginal_linf: f64,
    /// `|B_t - B_ref|_2`
    pub bias_error: f64,
    pub e: f64,
    pub e_m: f64,
    pub e_big_m: f64,
    pub i_m: f64,
}

impl TrajectoryRow {
    fn fields(&self) -> [f64; 8] {
        [
            self.t,
            self.marginal_entropy,
            self.marginal_linf,
            self.bias_error,
            self.e,
            self.e_m,
            self.e_big_m,
            self.i_m,
        ]
    }
}

pub fn trajectory_diagnostics(states: &[PdeState], pi_inf: &DensityField, b_ref: &VectorField) -> Result<Vec<TrajectoryRow>> {
    let cell_x = pi_inf.grid().xi_grid().cell_volume();
    states
        .iter()
        .map(|s| {
            let r = entropy_split_state(s, pi_inf)?;
            Ok(TrajectoryRow {
                t: s.time,
                marginal_entropy: entropy_of_deviation(s.marginal_deviation(), cell_x),
                marginal_linf: r.linf_marginal,
                bias_error: s.bias.b.sub(b_ref)?.l2_norm(),
                e: r.e,
                e_m: r.e_m,
                e_big_m: r.e_big_m,
                i_m: r.i_m,
            })
        })
        .collect()
}

pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        w.write_record(r.fields().iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fokker_planck::{simulate, Method, Stepper};
    use crate::forces::free_energy;
    use crate::forces::library::{build_force, PerturbationId, PotentialId};
    use crate::torus::{ScalarField, TorusGrid};
    use std::f64::consts::PI;

    #[test]
    fn conservative_trajectory_decays_and_writes() {
        let g = TorusGrid::uniform(2, 1, 24).unwrap();
        let force = build_force(&g, PotentialId::V1, PerturbationId::None, 0.0, 1.0, 0).unwrap();
        let eq = free_energy(force.potential(), 1.0).unwrap();
        let pi0 = DensityField::normalized(
            g.clone(),
            ScalarField::from_fn(&g, |p| 1.0 + 0.5 * (2.0 * PI * p[0]).cos() + 0.3 * (2.0 * PI * p[1]).sin())
                .into_values(),
        )
        .unwrap();
        let stepper = Stepper::new(&force, Method::Abf, 1e-3).unwrap();
        let states = simulate(&stepper, stepper.initial_state(&pi0).unwrap(), 0.1, 5).unwrap();
        let rows = trajectory_diagnostics(&states, &eq.mu_a, &eq.grad_a).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].marginal_entropy <= w[0].marginal_entropy);
            assert!(w[1].e <= w[0].e);
        }
        for r in &rows {
            assert!((r.e - r.e_m - r.e_big_m).abs() <= 1e-8);
        }
        let mut buf = Vec::new();
        write_trajectory_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRAJECTORY_HEADER.join(","));
        assert_eq!(text.lines().count(), rows.len() + 1);
    }
}
