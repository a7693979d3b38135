//! Engine dispatch, artifact writing and run manifests.
//!
//! Outputs are assembled in memory and written only once the engine has
//! finished, so a validation failure leaves the output directory untouched.
//! The manifest echoes the effective configuration plus a `[provenance]`
//! table; feeding it back through `--config` reproduces every CSV and binary
//! output byte for byte.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use abf_core::diagnostics::{
    csiszar_kullback_check, fit_rate, lsi_bounds, lsi_check, nash_check, perturbation_sweep, poincare_check,
    trajectory_diagnostics, write_sweep_csv, write_trajectory_csv, TrajectoryRow,
};
use abf_core::fokker_planck::{
    fixed_point_iterate_with, simulate, stationary_linear, FixedPointOptions, Method, StationaryState, Stepper,
};
use abf_core::forces::library::perturbation;
use abf_core::forces::{free_energy, ForceField};
use abf_core::particles::{
    bootstrap_bias_se, histogram_tv_to_uniform, run_particles, write_particle_csv, ParticleConfig, ParticleEnsemble,
};
use abf_core::torus::io::{write_binary, write_csv, write_scalar_csv};
use abf_core::torus::{DensityField, ScalarField, VectorField};
use abf_core::Error;
use serde::Serialize;

use crate::config::{ConfigError, Engine, ExperimentConfig, Prepared, Reference};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

pub const MANIFEST: &str = "manifest.toml";

#[derive(Debug)]
pub enum RunError {
    Validation(String),
    Core(Error),
    Io(std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => EXIT_VALIDATION,
            Self::Core(Error::NonConvergence { .. }) => EXIT_NONCONVERGENCE,
            Self::Core(Error::SolverFailure { .. } | Error::DegenerateConditional { .. } | Error::Contract(_)) => {
                EXIT_SOLVER
            }
            Self::Core(_) | Self::Io(_) => EXIT_OTHER,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Validation(m) => write!(f, "invalid configuration: {m}"),
            Self::Core(e) => write!(f, "{e}"),
            Self::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        Self::Validation(e.0)
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        Self::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

/// A named output file held in memory until the run finishes.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

fn artifact(name: &str, write: impl FnOnce(&mut Vec<u8>) -> abf_core::Result<()>) -> abf_core::Result<Artifact> {
    let mut bytes = Vec::new();
    write(&mut bytes)?;
    Ok(Artifact {
        name: name.to_string(),
        bytes,
    })
}

fn metric_csv(name: &str, rows: &[(String, f64)]) -> abf_core::Result<Artifact> {
    artifact(name, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["metric", "value"])?;
        for (k, v) in rows {
            w.write_record([k.clone(), format!("{v:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn history_csv(history: &[f64]) -> abf_core::Result<Artifact> {
    artifact("residual_history.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["iteration", "residual"])?;
        for (k, r) in history.iter().enumerate() {
            w.write_record([k.to_string(), format!("{r:.17e}")])?;
        }
        w.flush()?;
        Ok(())
    })
}

fn density_binary(name: &str, pi: &DensityField) -> abf_core::Result<Artifact> {
    artifact(name, |buf| write_binary(&VectorField::from_scalars(vec![pi.as_scalar()])?, buf))
}

#[derive(Debug, Serialize)]
struct Provenance {
    status: String,
    exit_code: i32,
    engine: String,
    seed: u64,
    cli_version: String,
    core_version: String,
    threads: usize,
    wall_time_s: f64,
    outputs: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub error: Option<String>,
    pub outputs: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Stationary reference `(pi_inf, B_inf)` for trajectory diagnostics.
fn reference(cfg: &ExperimentConfig, force: &ForceField) -> abf_core::Result<(DensityField, VectorField)> {
    let method = cfg.experiment.method;
    let xi = force.grid().xi_grid();
    if method == Method::Unbiased {
        let pi = if force.is_conservative() {
            DensityField::gibbs(force.potential(), force.beta())?
        } else {
            stationary_linear(force.values(), force.beta())?
        };
        return Ok((pi, VectorField::zeros(&xi, xi.n())));
    }
    let use_free_energy = match cfg.diagnostics.reference {
        Reference::Auto => force.is_conservative(),
        Reference::FreeEnergy => true,
        Reference::Stationary => false,
    };
    if use_free_energy {
        let eq = free_energy(force.potential(), force.beta())?;
        Ok((eq.mu_a, eq.grad_a))
    } else {
        let s = fixed_point(cfg, force, method)?;
        Ok((s.pi_inf, s.b_inf))
    }
}

fn fixed_point(cfg: &ExperimentConfig, force: &ForceField, method: Method) -> abf_core::Result<StationaryState> {
    let opts = FixedPointOptions {
        max_iters: cfg.stationary.max_iters,
        tol: cfg.stationary.tol,
        ..Default::default()
    };
    fixed_point_iterate_with(force, method, &opts)
}

fn fits_csv(cfg: &ExperimentConfig, rows: &[TrajectoryRow]) -> abf_core::Result<Artifact> {
    let series: [(&str, Vec<(f64, f64)>); 3] = [
        ("entropy", rows.iter().map(|r| (r.t, r.e)).collect()),
        ("marginal_entropy", rows.iter().map(|r| (r.t, r.marginal_entropy)).collect()),
        ("bias_error_sq", rows.iter().map(|r| (r.t, r.bias_error * r.bias_error)).collect()),
    ];
    artifact("fits.csv", |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["series", "t_start", "t_end", "status", "rate", "prefactor", "r_squared", "points"])?;
        for (name, s) in &series {
            for win in &cfg.diagnostics.fit_windows {
                let mut rec = vec![name.to_string(), format!("{:e}", win[0]), format!("{:e}", win[1])];
                match fit_rate(s, (win[0], win[1])) {
                    Ok(f) => rec.extend([
                        if f.accepted() { "ok" } else { "rejected" }.to_string(),
                        format!("{:.17e}", f.rate),
                        format!("{:.17e}", f.prefactor),
                        format!("{:.17e}", f.r_squared),
                        f.points.to_string(),
                    ]),
                    Err(e) => rec.extend([format!("failed: {e}"), String::new(), String::new(), String::new(), "0".into()]),
                }
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    })
}

fn run_pde(cfg: &ExperimentConfig, p: &Prepared) -> abf_core::Result<Vec<Artifact>> {
    let method = cfg.experiment.method;
    let stepper = Stepper::new(&p.force, method, cfg.run.dt)?.with_bias_stride(cfg.run.bias_stride);
    let init = stepper.initial_state(&cfg.initial_density(&p.grid)?)?;
    let states = simulate(&stepper, init, cfg.run.t_end, cfg.run.stride)?;
    let (pi_inf, b_ref) = reference(cfg, &p.force)?;
    let rows = trajectory_diagnostics(&states, &pi_inf, &b_ref)?;
    let last = states.last().expect("trajectory has its initial state");
    Ok(vec![
        artifact("trajectory.csv", |buf| write_trajectory_csv(&rows, buf))?,
        fits_csv(cfg, &rows)?,
        density_binary("final_density.bin", &last.pi)?,
        artifact("final_bias.bin", |buf| write_binary(&last.bias.b, buf))?,
    ])
}

fn run_particle_engine(cfg: &ExperimentConfig, p: &Prepared) -> abf_core::Result<Vec<Artifact>> {
    let r = &cfg.run;
    let steps = (r.t_end / r.dt).round() as u64;
    let mut schedule: Vec<f64> = (0..=steps).step_by(r.stride as usize).map(|k| k as f64 * r.dt).collect();
    schedule.push(r.t_end);
    let pc = ParticleConfig {
        particles: r.particles,
        dt: r.dt,
        t_end: r.t_end,
        schedule,
        seed: cfg.experiment.seed,
    };
    let method = cfg.experiment.method;
    let init = ParticleEnsemble::from_density(&cfg.initial_density(&p.grid)?, pc.particles, pc.seed)?;
    let run = run_particles(&p.force, method, &pc, &init)?;
    let se = bootstrap_bias_se(&run.ensemble, &p.force, method, None, 100, pc.seed ^ 0xb007)?;
    let last = run.snapshots.last().expect("final time is scheduled");
    let summary = vec![
        ("final_time".to_string(), last.t),
        ("histogram_tv_uniform".to_string(), histogram_tv_to_uniform(&last.histogram)),
        ("bias_l2".to_string(), run.final_bias.b_hat.l2_norm()),
        ("bootstrap_se".to_string(), se),
    ];
    Ok(vec![
        artifact("particles.csv", |buf| write_particle_csv(&run, &pc, method, buf))?,
        metric_csv("particle_summary.csv", &summary)?,
        artifact("final_bias.bin", |buf| write_binary(&run.final_bias.b_hat, buf))?,
    ])
}

fn run_stationary(cfg: &ExperimentConfig, p: &Prepared) -> Result<Vec<Artifact>, (Error, Vec<Artifact>)> {
    match fixed_point(cfg, &p.force, cfg.experiment.method) {
        Ok(s) => {
            let summary = vec![
                ("fp_residual".to_string(), s.fp_residual),
                ("pde_residual".to_string(), s.pde_residual),
                ("iterations".to_string(), s.iterations as f64),
            ];
            let h = &s.h_inf;
            (|| {
                Ok(vec![
                    metric_csv("stationary.csv", &summary)?,
                    history_csv(&s.history)?,
                    artifact("stationary_density.csv", |buf| write_scalar_csv(&s.pi_inf.as_scalar(), buf))?,
                    artifact("stationary_bias.csv", |buf| write_csv(&s.b_inf, buf))?,
                    density_binary("stationary_density.bin", &s.pi_inf)?,
                    artifact("stationary_bias.bin", |buf| write_binary(&s.b_inf, buf))?,
                    artifact("stationary_potential.bin", |buf| {
                        write_binary(&VectorField::from_scalars(vec![h.clone()])?, buf)
                    })?,
                ])
            })()
            .map_err(|e| (e, Vec::new()))
        }
        Err(Error::NonConvergence { history }) => {
            let files = history_csv(&history).map(|a| vec![a]).unwrap_or_default();
            Err((Error::NonConvergence { history }, files))
        }
        Err(e) => Err((e, Vec::new())),
    }
}

fn run_sweep(cfg: &ExperimentConfig, p: &Prepared) -> abf_core::Result<Vec<Artifact>> {
    let delta = perturbation(&p.grid, cfg.force.perturbation, cfg.experiment.seed)?;
    let psis: Vec<(String, ScalarField)> = p.observables.iter().map(|o| (o.name.clone(), o.field(&p.grid))).collect();
    let opts = FixedPointOptions {
        max_iters: cfg.stationary.max_iters,
        tol: cfg.stationary.tol,
        ..Default::default()
    };
    let table = perturbation_sweep(
        p.force.potential(),
        &delta,
        &cfg.sweep.epsilons,
        cfg.sweep.p,
        &psis,
        cfg.force.beta,
        &opts,
    )?;
    let mut slopes = vec![("grad_slope".to_string(), table.grad_slope.unwrap_or(f64::NAN))];
    for (name, s) in table.observables.iter().zip(&table.observable_slopes) {
        slopes.push((format!("observable_slope:{name}"), s.unwrap_or(f64::NAN)));
    }
    Ok(vec![
        artifact("sweep.csv", |buf| write_sweep_csv(&table, buf))?,
        metric_csv("sweep_slopes.csv", &slopes)?,
    ])
}

fn run_diagnose(cfg: &ExperimentConfig, p: &Prepared) -> abf_core::Result<Vec<Artifact>> {
    let method = match cfg.experiment.method {
        Method::Unbiased => Method::Abf,
        m => m,
    };
    let mut c = cfg.clone();
    c.experiment.method = method;
    let (pi_inf, _) = reference(&c, &p.force)?;
    let lsi = lsi_bounds(&pi_inf, &p.force)?;
    let trials = cfg.diagnostics.trials;
    let seed = cfg.experiment.seed;
    let mut rows = vec![
        ("r_lower".to_string(), lsi.r_lower),
        ("rho_lower".to_string(), lsi.rho_lower),
        ("lipschitz_x".to_string(), lsi.m),
        ("lipschitz_y".to_string(), lsi.m_fiber),
        ("lambda_pred_abf".to_string(), lsi.lambda_pred_abf),
        ("lambda_pred_pabf".to_string(), lsi.lambda_pred_pabf),
        ("lambda_pred_noncons".to_string(), lsi.lambda_pred_noncons.unwrap_or(f64::NAN)),
        ("noncons_hypothesis".to_string(), if lsi.noncons_hypothesis() { 1.0 } else { 0.0 }),
    ];
    for n in 1..=2 {
        rows.push((format!("nash_slack_t{n}"), nash_check(trials, n, seed)?));
        rows.push((format!("poincare_slack_t{n}"), poincare_check(trials, n, seed)?));
        rows.push((format!("csiszar_kullback_slack_t{n}"), csiszar_kullback_check(trials, n, seed)?));
    }
    rows.push(("lsi_slack_t1".to_string(), lsi_check(trials, seed)?));
    Ok(vec![metric_csv("diagnostics.csv", &rows)?])
}

fn write_all(out: &Path, files: &[Artifact]) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out)?;
    files
        .iter()
        .map(|a| {
            let path = out.join(&a.name);
            std::fs::write(&path, &a.bytes)?;
            Ok(path)
        })
        .collect()
}

/// Validates, runs the configured engine and writes its outputs and manifest
/// into `out`. Validation errors are returned before anything is written;
/// engine failures still produce a manifest (and a residual history for
/// non-convergence) and are reported through [`RunOutcome::exit_code`].
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<RunOutcome, RunError> {
    let prepared = cfg.validate()?;
    let start = Instant::now();
    let result = match cfg.experiment.engine {
        Engine::Pde => run_pde(cfg, &prepared).map_err(|e| (e, Vec::new())),
        Engine::Particles => run_particle_engine(cfg, &prepared).map_err(|e| (e, Vec::new())),
        Engine::Stationary => run_stationary(cfg, &prepared),
        Engine::Sweep => run_sweep(cfg, &prepared).map_err(|e| (e, Vec::new())),
        Engine::Diagnose => run_diagnose(cfg, &prepared).map_err(|e| (e, Vec::new())),
    };
    let wall = start.elapsed().as_secs_f64();
    let (files, error) = match result {
        Ok(files) => (files, None),
        Err((e, files)) => (files, Some(RunError::Core(e))),
    };
    let outputs = write_all(out, &files)?;
    let exit_code = error.as_ref().map_or(EXIT_OK, RunError::exit_code);
    let prov = Provenance {
        status: error.as_ref().map_or_else(|| "ok".to_string(), |e| e.to_string()),
        exit_code,
        engine: cfg.experiment.engine.to_string(),
        seed: cfg.experiment.seed,
        cli_version: env!("CARGO_PKG_VERSION").to_string(),
        core_version: abf_core::VERSION.to_string(),
        threads: rayon::current_num_threads(),
        wall_time_s: wall,
        outputs: files.iter().map(|a| a.name.clone()).collect(),
    };
    let mut text = cfg.to_toml();
    text.push_str("\n[provenance]\n");
    text.push_str(&toml::to_string(&prov).expect("provenance serializes"));
    let manifest = out.join(MANIFEST);
    std::fs::write(&manifest, text)?;
    Ok(RunOutcome {
        exit_code,
        error: error.map(|e| e.to_string()),
        outputs,
        manifest,
    })
}
