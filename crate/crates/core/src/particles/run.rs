use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BinnedBias, ParticleEngine, ParticleEnsemble};
use crate::error::{contract, Result};
use crate::fokker_planck::Method;
use crate::forces::ForceField;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleConfig {
    pub particles: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Output times; each is rounded to the nearest step.
    pub schedule: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSnapshot {
    pub t: f64,
    pub steps: u64,
    /// Fraction of particles per bin.
    pub histogram: Vec<f64>,
    pub bias: BinnedBias,
}

#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub snapshots: Vec<ParticleSnapshot>,
    pub ensemble: ParticleEnsemble,
    pub final_bias: BinnedBias,
}

fn snapshot(ens: &ParticleEnsemble, bias: &BinnedBias) -> ParticleSnapshot {
    let n = ens.len() as f64;
    ParticleSnapshot {
        t: ens.time(),
        steps: ens.steps(),
        histogram: bias.counts.iter().map(|&c| c as f64 / n).collect(),
        bias: bias.clone(),
    }
}

/// Alternates bias estimation and Euler-Maruyama steps from `initial` up to
/// `t_end`, recording the histogram and bias at the scheduled steps.
pub fn run_particles(
    force: &ForceField,
    method: Method,
    config: &ParticleConfig,
    initial: &ParticleEnsemble,
) -> Result<ParticleRun> {
    if !(config.t_end > 0.0) {
        return contract(format!("t_end must be positive, got {}", config.t_end));
    }
    if let Some(t) = config.schedule.iter().find(|t| !(**t >= 0.0 && **t <= config.t_end * (1.0 + 1e-12))) {
        return contract(format!("output time {t} outside [0, {}]", config.t_end));
    }
    let engine = ParticleEngine::new(force, method, config.dt)?;
    engine.check(initial)?;
    let total = (config.t_end / config.dt).round() as u64;
    let mut marks: Vec<u64> = config.schedule.iter().map(|t| (t / config.dt).round() as u64).collect();
    marks.sort_unstable();
    marks.dedup();
    let mut ens = initial.clone();
    let mut snapshots = Vec::with_capacity(marks.len());
    let mut previous: Option<BinnedBias> = None;
    let start = ens.steps();
    loop {
        let done = ens.steps() - start;
        let forces = engine.forces(&ens);
        let bias = engine.bias_from_forces(&ens, &forces, previous.as_ref())?;
        if marks.binary_search(&done).is_ok() {
            snapshots.push(snapshot(&ens, &bias));
        }
        if done >= total {
            return Ok(ParticleRun {
                snapshots,
                ensemble: ens,
                final_bias: bias,
            });
        }
        engine.move_particles(&mut ens, &forces, &bias)?;
        previous = Some(bias);
    }
}

/// Root-mean-square `|B_hat* - B_hat|_2` over bootstrap resamples of the ensemble.
pub fn bootstrap_bias_se(
    ens: &ParticleEnsemble,
    force: &ForceField,
    method: Method,
    previous: Option<&BinnedBias>,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    if resamples == 0 {
        return contract("bootstrap needs at least one resample");
    }
    let engine = ParticleEngine::new(force, method, 1.0)?;
    engine.check(ens)?;
    let forces = engine.forces(ens);
    let base = engine.bias_from_forces(ens, &forces, previous)?;
    let fallback = previous.unwrap_or(&base);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = ens.len();
    let mut acc = 0.0;
    let mut select = vec![0u32; n];
    for _ in 0..resamples {
        select.iter_mut().for_each(|s| *s = rng.random_range(0..n as u32));
        let (sums, counts) = engine.accumulate(ens, &forces, Some(&select));
        let star = engine.finish(sums, counts, Some(fallback))?;
        acc += star.b_hat.sub(&base.b_hat)?.l2_norm().powi(2);
    }
    Ok((acc / resamples as f64).sqrt())
}

/// Total-variation distance of a bin histogram (fractions) to the uniform one.
pub fn histogram_tv_to_uniform(histogram: &[f64]) -> f64 {
    let u = 1.0 / histogram.len() as f64;
    0.5 * histogram.iter().map(|h| (h - u).abs()).sum::<f64>()
}

pub fn manifest_line(config: &ParticleConfig, method: Method) -> String {
    format!(
        "# seed={} particles={} dt={:e} t_end={:e} method={method}",
        config.seed, config.particles, config.dt, config.t_end
    )
}

/// Manifest comment line, then one row per snapshot and bin:
/// `t, bin, center, count/N, G_hat, B_hat` (coordinates and components
/// suffixed by axis when `m > 1`).
pub fn write_particle_csv<W: Write>(run: &ParticleRun, config: &ParticleConfig, method: Method, mut out: W) -> Result<()> {
    writeln!(out, "{}", manifest_line(config, method))?;
    let Some(first) = run.snapshots.first() else {
        return Ok(());
    };
    let bins = &first.bias.bins;
    let m = bins.n();
    let names = |base: &str| -> Vec<String> {
        if m == 1 {
            vec![base.to_string()]
        } else {
            (0..m).map(|a| format!("{base}_{a}")).collect()
        }
    };
    let mut header = vec!["t".to_string(), "bin".to_string()];
    header.extend(names("center"));
    header.push("count_frac".to_string());
    header.extend(names("g_hat"));
    header.extend(names("b_hat"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header)?;
    for s in &run.snapshots {
        for b in 0..bins.len() {
            let mut row = vec![format!("{:.17e}", s.t), b.to_string()];
            row.extend(bins.coords(b).iter().map(|c| format!("{c:.17e}")));
            row.push(format!("{:.17e}", s.histogram[b]));
            row.extend((0..m).map(|c| format!("{:.17e}", s.bias.g_hat.component(c)[b])));
            row.extend((0..m).map(|c| format!("{:.17e}", s.bias.b_hat.component(c)[b])));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}
