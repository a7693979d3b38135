use std::f64::consts::PI;

use abf_core::diagnostics::fit_rate;
use abf_core::fokker_planck::{simulate, Method, Stepper};
use abf_core::forces::free_energy;
use abf_core::forces::library::{build_force, PerturbationId, PotentialId};
use abf_core::forces::ForceField;
use abf_core::particles::{
    bootstrap_bias_se, histogram_tv_to_uniform, run_particles, BinnedBias, ParticleConfig, ParticleEngine,
    ParticleEnsemble,
};
use abf_core::torus::{DensityField, ScalarField, TorusGrid};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

fn skewed(grid: &TorusGrid) -> DensityField {
    let f = ScalarField::from_fn(grid, |p| {
        (1.0 + 0.5 * (2.0 * PI * p[0]).cos()) * (1.0 + 0.3 * (2.0 * PI * p[1]).sin())
    });
    DensityField::normalized(grid.clone(), f.into_values()).unwrap()
}

#[test]
fn brownian_increments_are_gaussian() {
    let grid = TorusGrid::uniform(2, 1, 16).unwrap();
    let force = ForceField::zero(&grid, 1.0).unwrap();
    let count = 100_000;
    let dt = 0.01;
    let mut ens = ParticleEnsemble::new(2, vec![0.5; 2 * count], 2024).unwrap();
    let engine = ParticleEngine::new(&force, Method::Abf, dt).unwrap();
    engine.step(&mut ens, &BinnedBias::zero(engine.bins())).unwrap();
    let sd = (2.0 * dt).sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let bins = 40;
    let edges: Vec<f64> = (1..bins).map(|i| normal.inverse_cdf(i as f64 / bins as f64)).collect();
    for axis in 0..2 {
        let mut counts = vec![0usize; bins];
        let mut var = 0.0;
        for i in 0..count {
            let d = ens.at(i)[axis] - 0.5;
            let d = d - d.round();
            var += d * d;
            counts[edges.partition_point(|e| *e < d / sd)] += 1;
        }
        var /= count as f64;
        assert!((var / (sd * sd) - 1.0).abs() < 0.02, "variance ratio {}", var / (sd * sd));
        let expected = count as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let p = 1.0 - ChiSquared::new((bins - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.001, "axis {axis}: chi2 = {chi2}, p = {p}");
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let grid = TorusGrid::uniform(2, 1, 16).unwrap();
    let force = build_force(&grid, PotentialId::V3, PerturbationId::Rotational, 0.2, 1.0, 0).unwrap();
    let cfg = ParticleConfig {
        particles: 20_000,
        dt: 2e-3,
        t_end: 0.1,
        schedule: vec![0.0, 0.04, 0.1],
        seed: 77,
    };
    let init = ParticleEnsemble::from_density(&skewed(&grid), cfg.particles, cfg.seed).unwrap();
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_particles(&force, Method::Pabf, &cfg, &init).unwrap())
    };
    let a = run_with(1);
    let b = run_with(3);
    assert_eq!(a.ensemble, b.ensemble);
    assert_eq!(a.snapshots, b.snapshots);
}

#[test]
fn abf_particles_flatten_the_histogram() {
    let grid = TorusGrid::uniform(2, 1, 32).unwrap();
    let force = build_force(&grid, PotentialId::V1, PerturbationId::None, 0.0, 1.0, 0).unwrap();
    let cfg = ParticleConfig {
        particles: 100_000,
        dt: 5e-3,
        t_end: 5.0,
        schedule: vec![5.0],
        seed: 3,
    };
    let init = ParticleEnsemble::from_density(&skewed(&grid), cfg.particles, cfg.seed).unwrap();
    let run = run_particles(&force, Method::Abf, &cfg, &init).unwrap();
    let tv = histogram_tv_to_uniform(&run.snapshots[0].histogram);
    let envelope = 3.0 * ((32.0 / cfg.particles as f64).sqrt() + cfg.dt);
    assert!(tv <= envelope, "{tv} > {envelope}");
    assert!(run.final_bias.g_hat.sup_norm() <= force.sup_norm());
}

#[test]
fn pabf_particles_agree_with_pde_bias() {
    let grid = TorusGrid::uniform(2, 1, 64).unwrap();
    let force = build_force(&grid, PotentialId::V1, PerturbationId::None, 0.0, 1.0, 0).unwrap();
    let pi0 = skewed(&grid);
    let cfg = ParticleConfig {
        particles: 100_000,
        dt: 1e-3,
        t_end: 0.3,
        schedule: vec![0.3],
        seed: 5,
    };
    let init = ParticleEnsemble::from_density(&pi0, cfg.particles, cfg.seed).unwrap();
    let stepper = Stepper::new(&force, Method::Pabf, 5e-4).unwrap();
    let pde = simulate(&stepper, stepper.initial_state(&pi0).unwrap(), cfg.t_end, 600).unwrap();
    let b_pde = &pde.last().unwrap().bias.b;
    let run = run_particles(&force, Method::Pabf, &cfg, &init).unwrap();
    let err = run.final_bias.b_hat.sub(b_pde).unwrap().l2_norm();
    let se = bootstrap_bias_se(&run.ensemble, &force, Method::Pabf, None, 100, 1).unwrap();
    assert!(err <= 3.0 * se, "{err} > 3 * {se}");
}

fn bias_error_series(particles: usize, seed: u64) -> Vec<(f64, f64)> {
    let grid = TorusGrid::uniform(2, 1, 32).unwrap();
    let force = build_force(&grid, PotentialId::V2, PerturbationId::None, 0.0, 1.0, 0).unwrap();
    let eq = free_energy(force.potential(), 1.0).unwrap();
    let pi0 = DensityField::normalized(
        grid.clone(),
        ScalarField::from_fn(&grid, |p| (1.5 * (2.0 * PI * (p[0] + p[1])).cos()).exp()).into_values(),
    )
    .unwrap();
    let cfg = ParticleConfig {
        particles,
        dt: 2e-3,
        t_end: 1.0,
        schedule: (0..=500).map(|k| 2e-3 * k as f64).collect(),
        seed,
    };
    let init = ParticleEnsemble::from_density(&pi0, particles, seed).unwrap();
    let run = run_particles(&force, Method::Abf, &cfg, &init).unwrap();
    run.snapshots
        .iter()
        .map(|s| (s.t, s.bias.b_hat.sub(&eq.grad_a).unwrap().l2_norm()))
        .collect()
}

#[test]
fn bias_error_decays_to_a_root_n_floor() {
    let floor = |series: &[(f64, f64)]| {
        let tail: Vec<f64> = series.iter().filter(|p| p.0 >= 0.5).map(|p| p.1 * p.1).collect();
        (tail.iter().sum::<f64>() / tail.len() as f64).sqrt()
    };
    let small = bias_error_series(4_000, 8);
    let large = bias_error_series(16_000, 8);
    let ratio = floor(&small) / floor(&large);
    assert!((1.6..=2.5).contains(&ratio), "floor ratio {ratio}");
    let f = floor(&large);
    let above: Vec<(f64, f64)> = large.iter().copied().take_while(|p| p.1 > 4.0 * f).collect();
    let fit = fit_rate(&above, (0.0, above.last().unwrap().0)).unwrap();
    assert!(fit.rate > 0.0 && fit.accepted(), "{fit:?}");
}
