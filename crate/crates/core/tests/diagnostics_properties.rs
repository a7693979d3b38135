use std::f64::consts::PI;

use abf_core::diagnostics::{
    csiszar_kullback_check, entropy_dissipation, entropy_split_state, fit_rate, lsi_bounds, microscopic_bound,
    trajectory_diagnostics,
};
use abf_core::fokker_planck::{simulate, Method, Stepper};
use abf_core::forces::free_energy;
use abf_core::forces::library::{build_force, PerturbationId, PotentialId};
use abf_core::torus::{DensityField, ScalarField, TorusGrid};

fn skewed(grid: &TorusGrid) -> DensityField {
    let f = ScalarField::from_fn(grid, |p| {
        (0.9 * (2.0 * PI * p[0]).cos() + 0.6 * (2.0 * PI * (p[0] + p[1])).sin() + 0.4 * (4.0 * PI * p[1]).cos()).exp()
    });
    DensityField::normalized(grid.clone(), f.into_values()).unwrap()
}

#[test]
fn entropy_dissipation_identity_along_trajectory() {
    let grid = TorusGrid::uniform(2, 1, 32).unwrap();
    for method in [Method::Abf, Method::Pabf] {
        let force = build_force(&grid, PotentialId::V2, PerturbationId::None, 0.0, 1.0, 0).unwrap();
        let eq = free_energy(force.potential(), 1.0).unwrap();
        let dt = 1e-4;
        let stepper = Stepper::new(&force, method, dt).unwrap();
        let states = simulate(&stepper, stepper.initial_state(&skewed(&grid)).unwrap(), 0.02, 1).unwrap();
        let e: Vec<f64> = states.iter().map(|s| entropy_split_state(s, &eq.mu_a).unwrap().e).collect();
        for k in (1..states.len() - 1).step_by(40) {
            let fd = (e[k + 1] - e[k - 1]) / (2.0 * dt);
            let s = &states[k];
            let rhs = entropy_dissipation(&s.pi, &eq.mu_a, &s.bias.b, &eq.grad_a, 1.0).unwrap();
            assert!((fd - rhs).abs() <= 1e-3 * rhs.abs().max(1.0), "{method}: t = {}, {fd} vs {rhs}", s.time);
        }
    }
}

#[test]
fn marginal_entropy_is_monotone_and_micro_bound_holds() {
    let grid = TorusGrid::uniform(2, 1, 32).unwrap();
    for (pot, method) in [(PotentialId::V2, Method::Abf), (PotentialId::V3, Method::Pabf)] {
        let force = build_force(&grid, pot, PerturbationId::None, 0.0, 1.0, 0).unwrap();
        let eq = free_energy(force.potential(), 1.0).unwrap();
        let lsi = lsi_bounds(&eq.mu_a, &force).unwrap();
        let stepper = Stepper::new(&force, method, 5e-4).unwrap();
        let states = simulate(&stepper, stepper.initial_state(&skewed(&grid)).unwrap(), 0.3, 10).unwrap();
        let rows = trajectory_diagnostics(&states, &eq.mu_a, &eq.grad_a).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].marginal_entropy <= w[0].marginal_entropy * (1.0 + 1e-12) + 1e-300);
        }
        for s in &states {
            let (em, bound) = microscopic_bound(&s.pi, &eq.mu_a, lsi.rho_lower).unwrap();
            assert!(bound - em >= -1e-8, "t = {}: {em} > {bound}", s.time);
        }
    }
}

#[test]
fn conservative_entropy_rate_exceeds_prediction() {
    let grid = TorusGrid::uniform(2, 1, 32).unwrap();
    let force = build_force(&grid, PotentialId::V2, PerturbationId::None, 0.0, 1.0, 0).unwrap();
    let eq = free_energy(force.potential(), 1.0).unwrap();
    let lsi = lsi_bounds(&eq.mu_a, &force).unwrap();
    let stepper = Stepper::new(&force, Method::Abf, 1e-3).unwrap();
    let states = simulate(&stepper, stepper.initial_state(&skewed(&grid)).unwrap(), 0.5, 20).unwrap();
    let series: Vec<(f64, f64)> = trajectory_diagnostics(&states, &eq.mu_a, &eq.grad_a)
        .unwrap()
        .iter()
        .map(|r| (r.t, r.e))
        .collect();
    let fit = fit_rate(&series, (0.1, 0.5)).unwrap();
    assert!(fit.accepted());
    assert!(fit.rate >= 0.95 * lsi.lambda_pred_abf, "{} < {}", fit.rate, lsi.lambda_pred_abf);
}

#[test]
fn csiszar_kullback_on_random_pairs() {
    for n in 1..=2 {
        assert!(csiszar_kullback_check(200, n, 11).unwrap() >= -1e-9);
    }
}
