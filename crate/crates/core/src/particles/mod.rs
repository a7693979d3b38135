//! Interacting-particle ABF and PABF: Euler-Maruyama on `T^n` with the mean
//! force estimated by binning in `x`.

mod run;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{contract, Error, Result};
use crate::fokker_planck::Method;
use crate::forces::ForceField;
use crate::helmholtz::project_lebesgue;
use crate::torus::{DensityField, ScalarField, SparseSpectrum, TorusGrid, VectorField};

pub use run::{
    bootstrap_bias_se, histogram_tv_to_uniform, manifest_line, run_particles, write_particle_csv, ParticleConfig,
    ParticleRun, ParticleSnapshot,
};

/// Particles per parallel work unit; partial bin sums are merged in chunk order.
const CHUNK: usize = 4096;

fn wrap(x: f64) -> f64 {
    let w = x - x.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    n: usize,
    positions: Vec<f64>,
    /// One ChaCha stream per particle, keyed by the seed, positioned by the step.
    streams: Vec<ChaCha8Rng>,
    time: f64,
    steps: u64,
    seed: u64,
}

impl ParticleEnsemble {
    /// Particles at the given flat coordinates (`dim` per particle), wrapped to `[0, 1)`.
    pub fn new(dim: usize, positions: Vec<f64>, seed: u64) -> Result<Self> {
        if dim == 0 || dim > 8 || positions.is_empty() || positions.len() % dim != 0 {
            return contract(format!("{} coordinates do not form particles in dimension {dim}", positions.len()));
        }
        if positions.iter().any(|x| !x.is_finite()) {
            return contract("particle positions must be finite");
        }
        let key = ChaCha8Rng::seed_from_u64(seed).get_seed();
        let streams = (0..positions.len() / dim)
            .map(|id| {
                let mut rng = ChaCha8Rng::from_seed(key);
                rng.set_stream(id as u64);
                rng
            })
            .collect();
        Ok(Self {
            n: dim,
            positions: positions.into_iter().map(wrap).collect(),
            streams,
            time: 0.0,
            steps: 0,
            seed,
        })
    }

    pub fn uniform(dim: usize, count: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let pos = (0..dim * count).map(|_| rng.random::<f64>()).collect();
        Self::new(dim, pos, seed)
    }

    /// I.i.d. draws from the piecewise-constant density on grid cells.
    pub fn from_density(pi: &DensityField, count: usize, seed: u64) -> Result<Self> {
        let grid = pi.grid();
        let mut cdf = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        for v in pi.values() {
            acc += v;
            cdf.push(acc);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut pos = Vec::with_capacity(count * grid.n());
        for _ in 0..count {
            let u = rng.random::<f64>() * acc;
            let cell = cdf.partition_point(|c| *c <= u).min(grid.len() - 1);
            for (axis, c) in grid.coords(cell).iter().enumerate() {
                pos.push(c + (rng.random::<f64>() - 0.5) * grid.spacing(axis));
            }
        }
        Self::new(grid.n(), pos, seed)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.positions[i * self.n..(i + 1) * self.n]
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Fills `out` with standard Gaussians; every call takes `2 ceil(len / 2)`
/// 64-bit draws from the stream, so step `s` always reads the same words.
fn gaussians(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    for pair in out.chunks_mut(2) {
        let u1 = 1.0 - (rng.next_u64() >> 11) as f64 * f64::EPSILON / 2.0;
        let u2 = (rng.next_u64() >> 11) as f64 * f64::EPSILON / 2.0;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        pair[0] = r * c;
        if pair.len() > 1 {
            pair[1] = r * s;
        }
    }
}

/// Binned estimate of the mean force and the bias applied by the particles.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedBias {
    pub bins: TorusGrid,
    /// Per-bin sums of `-F1`, one vector per component.
    pub sums: Vec<Vec<f64>>,
    pub counts: Vec<u64>,
    pub g_hat: VectorField,
    pub b_hat: VectorField,
    pub h_hat: Option<ScalarField>,
}

impl BinnedBias {
    pub fn zero(bins: &TorusGrid) -> Self {
        let m = bins.n();
        Self {
            bins: bins.clone(),
            sums: vec![vec![0.0; bins.len()]; m],
            counts: vec![0; bins.len()],
            g_hat: VectorField::zeros(bins, m),
            b_hat: VectorField::zeros(bins, m),
            h_hat: None,
        }
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Multilinear periodic interpolation of `B_hat` between bin centers.
    pub fn interpolate(&self, x: &[f64], out: &mut [f64]) {
        let bins = &self.bins;
        let m = bins.n();
        let mut base = [0usize; 8];
        let mut frac = [0f64; 8];
        for a in 0..m {
            let res = bins.resolution()[a];
            let s = x[a] * res as f64;
            let i0 = s.floor();
            frac[a] = s - i0;
            base[a] = (i0 as i64).rem_euclid(res as i64) as usize;
        }
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut idx = [0usize; 8];
        for corner in 0..(1usize << m) {
            let mut w = 1.0;
            for a in 0..m {
                let up = (corner >> a) & 1 == 1;
                let res = bins.resolution()[a];
                idx[a] = if up { (base[a] + 1) % res } else { base[a] };
                w *= if up { frac[a] } else { 1.0 - frac[a] };
            }
            if w == 0.0 {
                continue;
            }
            let flat = bins.flat_index(&idx[..m]);
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * self.b_hat.component(c)[flat];
            }
        }
    }
}

/// Bin of `x`: nearest bin center `i / N` on each axis.
fn bin_of(bins: &TorusGrid, x: &[f64]) -> usize {
    let mut flat = 0;
    for (a, &res) in bins.resolution().iter().enumerate() {
        let i = ((x[a] * res as f64 + 0.5).floor() as i64).rem_euclid(res as i64) as usize;
        flat = flat * res + i;
    }
    flat
}

/// Precomputed force interpolant and step parameters.
#[derive(Debug, Clone)]
pub struct ParticleEngine {
    interp: SparseSpectrum,
    n: usize,
    m: usize,
    bins: TorusGrid,
    method: Method,
    dt: f64,
    inv_beta: f64,
}

impl ParticleEngine {
    pub fn new(force: &ForceField, method: Method, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return contract(format!("time step must be positive, got {dt}"));
        }
        let grid = force.grid();
        Ok(Self {
            interp: SparseSpectrum::from_vector(force.values()),
            n: grid.n(),
            m: grid.m(),
            bins: grid.xi_grid(),
            method,
            dt,
            inv_beta: 1.0 / force.beta(),
        })
    }

    /// Switches the noise off (`1/beta = 0`).
    pub fn noiseless(mut self) -> Self {
        self.inv_beta = 0.0;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn bins(&self) -> &TorusGrid {
        &self.bins
    }

    fn check(&self, ens: &ParticleEnsemble) -> Result<()> {
        if ens.dim() != self.n {
            return contract(format!("ensemble lives in dimension {}, force in {}", ens.dim(), self.n));
        }
        Ok(())
    }

    /// `F` at every particle, flat with `n` entries per particle.
    pub fn forces(&self, ens: &ParticleEnsemble) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; ens.positions.len()];
        out.par_chunks_mut(CHUNK * n)
            .zip(ens.positions.par_chunks(CHUNK * n))
            .for_each(|(f, p)| {
                let mut scratch = Vec::new();
                for (fi, pi) in f.chunks_exact_mut(n).zip(p.chunks_exact(n)) {
                    self.interp.eval_into(pi, &mut scratch, fi);
                }
            });
        out
    }

    /// Per-bin sums of `-F1` and counts, merged in chunk order.
    fn accumulate(&self, ens: &ParticleEnsemble, forces: &[f64], select: Option<&[u32]>) -> (Vec<Vec<f64>>, Vec<u64>) {
        let (n, m) = (self.n, self.m);
        let bins = self.bins.len();
        let count = select.map_or(ens.len(), |s| s.len());
        let partials: Vec<(Vec<f64>, Vec<u64>)> = (0..count.div_ceil(CHUNK))
            .into_par_iter()
            .map(|chunk| {
                let mut sums = vec![0.0; m * bins];
                let mut counts = vec![0u64; bins];
                for j in chunk * CHUNK..((chunk + 1) * CHUNK).min(count) {
                    let i = select.map_or(j, |s| s[j] as usize);
                    let b = bin_of(&self.bins, &ens.positions[i * n..i * n + m]);
                    counts[b] += 1;
                    for c in 0..m {
                        sums[c * bins + b] -= forces[i * n + c];
                    }
                }
                (sums, counts)
            })
            .collect();
        let mut sums = vec![vec![0.0; bins]; m];
        let mut counts = vec![0u64; bins];
        for (s, k) in partials {
            for c in 0..m {
                sums[c].iter_mut().zip(&s[c * bins..(c + 1) * bins]).for_each(|(a, b)| *a += b);
            }
            counts.iter_mut().zip(&k).for_each(|(a, b)| *a += b);
        }
        (sums, counts)
    }

    fn finish(&self, sums: Vec<Vec<f64>>, counts: Vec<u64>, previous: Option<&BinnedBias>) -> Result<BinnedBias> {
        let m = self.m;
        let mut g = vec![vec![0.0; self.bins.len()]; m];
        for b in 0..self.bins.len() {
            for c in 0..m {
                g[c][b] = if counts[b] > 0 {
                    sums[c][b] / counts[b] as f64
                } else {
                    previous.map_or(0.0, |p| p.g_hat.component(c)[b])
                };
            }
        }
        let g_hat = VectorField::new(self.bins.clone(), g)?;
        let (b_hat, h_hat) = match self.method {
            Method::Abf => (g_hat.clone(), None),
            Method::Pabf => {
                let p = project_lebesgue(&g_hat)?;
                (p.projected, Some(p.potential))
            }
            Method::Unbiased => (VectorField::zeros(&self.bins, m), None),
        };
        Ok(BinnedBias {
            bins: self.bins.clone(),
            sums,
            counts,
            g_hat,
            b_hat,
            h_hat,
        })
    }

    pub(crate) fn bias_from_forces(
        &self,
        ens: &ParticleEnsemble,
        forces: &[f64],
        previous: Option<&BinnedBias>,
    ) -> Result<BinnedBias> {
        let (sums, counts) = self.accumulate(ens, forces, None);
        self.finish(sums, counts, previous)
    }

    pub fn bias(&self, ens: &ParticleEnsemble, previous: Option<&BinnedBias>) -> Result<BinnedBias> {
        self.check(ens)?;
        self.bias_from_forces(ens, &self.forces(ens), previous)
    }

    pub(crate) fn move_particles(&self, ens: &mut ParticleEnsemble, forces: &[f64], bias: &BinnedBias) -> Result<()> {
        let (n, m) = (self.n, self.m);
        let amp = (2.0 * self.inv_beta * self.dt).sqrt();
        let dt = self.dt;
        ens.positions
            .par_chunks_mut(CHUNK * n)
            .zip(ens.streams.par_chunks_mut(CHUNK))
            .zip(forces.par_chunks(CHUNK * n))
            .for_each(|((pos, rngs), f)| {
                let mut g = [0f64; 8];
                let mut b = [0f64; 8];
                for ((p, rng), fi) in pos.chunks_exact_mut(n).zip(rngs.iter_mut()).zip(f.chunks_exact(n)) {
                    bias.interpolate(&p[..m], &mut b[..m]);
                    if amp > 0.0 {
                        gaussians(rng, &mut g[..n]);
                    }
                    for a in 0..n {
                        let drift = fi[a] + if a < m { b[a] } else { 0.0 };
                        p[a] = wrap(p[a] + drift * dt + amp * g[a]);
                    }
                }
            });
        ens.steps += 1;
        ens.time = ens.steps as f64 * dt;
        if let Some(i) = ens.positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::SolverFailure {
                message: format!("particle {} became non-finite at step {}", i / n, ens.steps),
                residual: f64::NAN,
            });
        }
        Ok(())
    }

    pub fn step(&self, ens: &mut ParticleEnsemble, bias: &BinnedBias) -> Result<()> {
        self.check(ens)?;
        if bias.bins != self.bins {
            return contract("bias bins do not match the force's xi-grid");
        }
        let forces = self.forces(ens);
        self.move_particles(ens, &forces, bias)
    }
}

/// One Euler-Maruyama step under `F + B_hat(x) e_x`.
pub fn particle_step(ens: &ParticleEnsemble, force: &ForceField, bias: &BinnedBias, dt: f64) -> Result<ParticleEnsemble> {
    let engine = ParticleEngine::new(force, Method::Abf, dt)?;
    let mut next = ens.clone();
    engine.step(&mut next, bias)?;
    Ok(next)
}

/// Binned `G_hat` and the bias it induces for `method`; empty bins keep the
/// value from `previous` (or zero).
pub fn update_bias(
    ens: &ParticleEnsemble,
    force: &ForceField,
    method: Method,
    previous: Option<&BinnedBias>,
) -> Result<BinnedBias> {
    ParticleEngine::new(force, method, 1.0)?.bias(ens, previous)
}
