//! Experiment configuration.
//!
//! A TOML file with one section per concern. Every key is optional; the
//! defaults below reproduce a 64x64 conservative ABF run.
//!
//! ```toml
//! [experiment]
//! method = "abf"        # abf | pabf | unbiased
//! engine = "pde"        # pde | particles | stationary | sweep | diagnose
//! seed = 0              # particle noise and random perturbations
//!
//! [force]
//! potential = "v1"      # zero | v1 | v2 | v3
//! perturbation = "none" # none | rotational | random
//! epsilon = 0.0         # perturbation size (Delta is normalized to sup 1)
//! beta = 1.0
//!
//! [grid]
//! n = 2                 # torus dimension
//! m = 1                 # number of reaction-coordinate axes
//! points = 64           # points per axis, unless `resolution` is given
//! # resolution = [64, 32]
//!
//! [initial]
//! profile = "skewed"    # uniform | cosine | skewed
//! amplitude = 0.5       # cosine profile: 1 + a cos(2 pi x) times 1 + 0.6 a sin(2 pi y)
//!
//! [run]
//! dt = 5e-4
//! t_end = 1.0
//! stride = 10           # record every `stride` steps
//! particles = 100000
//! bias_stride = 1       # PDE: refresh the bias every k steps
//!
//! [stationary]
//! max_iters = 200
//! tol = 1e-9
//!
//! [sweep]
//! epsilons = [0.01, 0.02, 0.04]
//! p = 2.0
//!
//! [diagnostics]
//! reference = "auto"    # auto | free-energy | stationary
//! fit_windows = [[0.1, 1.0]]
//! observables = ["cos:1"] # cos|sin : wave vector, e.g. "sin:1,2"
//! trials = 200          # inequality verifier samples (diagnose engine)
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;

use abf_core::fokker_planck::{max_stable_dt, Method};
use abf_core::forces::library::{build_force, PerturbationId, PotentialId};
use abf_core::forces::ForceField;
use abf_core::torus::{DensityField, ScalarField, TorusGrid};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Pde,
    Particles,
    Stationary,
    Sweep,
    Diagnose,
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pde => "pde",
            Self::Particles => "particles",
            Self::Stationary => "stationary",
            Self::Sweep => "sweep",
            Self::Diagnose => "diagnose",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub method: Method,
    pub engine: Engine,
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            method: Method::Abf,
            engine: Engine::Pde,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceSection {
    pub potential: PotentialId,
    pub perturbation: PerturbationId,
    pub epsilon: f64,
    pub beta: f64,
}

impl Default for ForceSection {
    fn default() -> Self {
        Self {
            potential: PotentialId::V1,
            perturbation: PerturbationId::None,
            epsilon: 0.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub m: usize,
    pub points: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Vec<usize>>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            n: 2,
            m: 1,
            points: 64,
            resolution: None,
        }
    }
}

impl GridSection {
    pub fn resolution(&self) -> Vec<usize> {
        self.resolution.clone().unwrap_or_else(|| vec![self.points; self.n])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Uniform,
    Cosine,
    Skewed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    pub profile: Profile,
    pub amplitude: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            profile: Profile::Skewed,
            amplitude: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub dt: f64,
    pub t_end: f64,
    pub stride: u64,
    pub particles: usize,
    pub bias_stride: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dt: 5e-4,
            t_end: 1.0,
            stride: 10,
            particles: 100_000,
            bias_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationarySection {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for StationarySection {
    fn default() -> Self {
        Self {
            max_iters: 200,
            tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub epsilons: Vec<f64>,
    pub p: f64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            epsilons: vec![0.01, 0.02, 0.04],
            p: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reference {
    /// Free energy for conservative forces, fixed point otherwise.
    Auto,
    FreeEnergy,
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub reference: Reference,
    pub fit_windows: Vec<[f64; 2]>,
    pub observables: Vec<String>,
    pub trials: usize,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            reference: Reference::Auto,
            fit_windows: vec![[0.1, 1.0]],
            observables: vec!["cos:1".to_string()],
            trials: 200,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub force: ForceSection,
    pub grid: GridSection,
    pub initial: InitialSection,
    pub run: RunSection,
    pub stationary: StationarySection,
    pub sweep: SweepSection,
    pub diagnostics: DiagnosticsSection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Trig observable `cos(2 pi k . z)` or `sin(2 pi k . z)` written `cos:k0,k1,..`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub name: String,
    pub cosine: bool,
    pub wave: Vec<i64>,
}

impl Observable {
    pub fn parse(spec: &str, n: usize) -> Result<Self, ConfigError> {
        let (kind, wave) = spec
            .split_once(':')
            .ok_or_else(|| ConfigError(format!("observable `{spec}` is not of the form cos:k or sin:k")))?;
        let cosine = match kind.trim() {
            "cos" => true,
            "sin" => false,
            other => return fail(format!("observable kind `{other}` must be cos or sin")),
        };
        let mut k = wave
            .split(',')
            .map(|s| s.trim().parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ConfigError(format!("observable `{spec}`: {e}")))?;
        if k.len() > n {
            return fail(format!("observable `{spec}` has more than {n} wave numbers"));
        }
        k.resize(n, 0);
        Ok(Self {
            name: spec.to_string(),
            cosine,
            wave: k,
        })
    }

    pub fn field(&self, grid: &TorusGrid) -> ScalarField {
        ScalarField::from_fn(grid, |p| {
            let phase: f64 = 2.0 * PI * p.iter().zip(&self.wave).map(|(z, k)| z * *k as f64).sum::<f64>();
            if self.cosine {
                phase.cos()
            } else {
                phase.sin()
            }
        })
    }
}

fn f1_sup(force: &ForceField) -> f64 {
    let f1 = force.f1();
    (0..f1[0].len())
        .map(|i| f1.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Everything derived from a validated configuration.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: TorusGrid,
    pub force: ForceField,
    pub observables: Vec<Observable>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let mut table: toml::Table = text.parse().map_err(|e| ConfigError(format!("{e}")))?;
        table.remove("provenance");
        table.try_into().map_err(|e: toml::de::Error| ConfigError(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn initial_density(&self, grid: &TorusGrid) -> abf_core::Result<DensityField> {
        let a = self.initial.amplitude;
        let ya = grid.m().min(grid.n() - 1);
        let values = match self.initial.profile {
            Profile::Uniform => return Ok(DensityField::uniform(grid)),
            Profile::Cosine => ScalarField::from_fn(grid, |p| {
                let fiber = if ya != 0 { 1.0 + 0.6 * a * (2.0 * PI * p[ya]).sin() } else { 1.0 };
                (1.0 + a * (2.0 * PI * p[0]).cos()) * fiber
            }),
            Profile::Skewed => ScalarField::from_fn(grid, |p| {
                let y = p[ya];
                (1.8 * a * (2.0 * PI * p[0]).cos()
                    + 1.2 * a * (2.0 * PI * (p[0] + y)).sin()
                    + 0.8 * a * (4.0 * PI * y).cos())
                .exp()
            }),
        };
        DensityField::normalized(grid.clone(), values.into_values())
    }

    /// Checks every setting that can be checked without running a solver.
    pub fn validate(&self) -> Result<Prepared, ConfigError> {
        let g = &self.grid;
        let res = g.resolution();
        if g.n == 0 || g.m == 0 || g.m > g.n {
            return fail(format!("need 1 <= m <= n, got n = {}, m = {}", g.n, g.m));
        }
        if res.len() != g.n {
            return fail(format!("resolution has {} entries for n = {}", res.len(), g.n));
        }
        if let Some(r) = res.iter().find(|r| **r < 4) {
            return fail(format!("every axis needs at least 4 points, got {r}"));
        }
        let grid = TorusGrid::new(&res, g.m).map_err(|e| ConfigError(e.to_string()))?;

        let f = &self.force;
        if !(f.beta > 0.0 && f.beta.is_finite()) {
            return fail(format!("beta must be positive, got {}", f.beta));
        }
        if !(f.epsilon >= 0.0 && f.epsilon.is_finite()) {
            return fail(format!("epsilon must be nonnegative, got {}", f.epsilon));
        }
        let force = build_force(&grid, f.potential, f.perturbation, f.epsilon, f.beta, self.experiment.seed)
            .map_err(|e| ConfigError(e.to_string()))?;

        let method = self.experiment.method;
        let r = &self.run;
        match self.experiment.engine {
            Engine::Pde | Engine::Particles => {
                if !(r.dt > 0.0 && r.dt.is_finite()) {
                    return fail(format!("dt must be positive, got {}", r.dt));
                }
                if !(r.t_end > 0.0 && r.t_end.is_finite()) {
                    return fail(format!("t_end must be positive, got {}", r.t_end));
                }
                let steps = (r.t_end / r.dt).round();
                if (steps * r.dt - r.t_end).abs() > 1e-9 * r.t_end.max(1.0) {
                    return fail(format!("t_end = {} is not a whole number of steps of {}", r.t_end, r.dt));
                }
                if r.stride == 0 {
                    return fail("stride must be at least 1");
                }
            }
            _ => {}
        }
        match self.experiment.engine {
            Engine::Pde => {
                // |G| <= sup |F1| bounds the bias before the run starts
                let bias_sup = if method == Method::Unbiased { 0.0 } else { f1_sup(&force) };
                let limit = max_stable_dt(&grid, force.sup_norm(), bias_sup);
                if r.dt > limit {
                    return fail(format!("dt = {} exceeds the stability bound {limit:.6e}", r.dt));
                }
                if r.bias_stride == 0 {
                    return fail("bias_stride must be at least 1");
                }
            }
            Engine::Particles => {
                if r.particles == 0 {
                    return fail("particle count must be positive");
                }
                if g.m > 8 {
                    return fail("particle binning supports at most 8 reaction-coordinate axes");
                }
            }
            Engine::Stationary | Engine::Sweep => {
                if method == Method::Unbiased {
                    return fail("stationary and sweep engines need abf or pabf");
                }
            }
            Engine::Diagnose => {
                if self.diagnostics.trials == 0 {
                    return fail("diagnostics trials must be positive");
                }
            }
        }
        let st = &self.stationary;
        if st.max_iters == 0 || !(st.tol > 0.0) {
            return fail("stationary needs max_iters >= 1 and tol > 0");
        }
        if self.experiment.engine == Engine::Sweep {
            let s = &self.sweep;
            if s.epsilons.is_empty() {
                return fail("sweep needs at least one epsilon");
            }
            if s.epsilons.windows(2).any(|w| w[0] >= w[1]) || s.epsilons.iter().any(|e| !(*e >= 0.0)) {
                return fail("sweep epsilons must be nonnegative and strictly increasing");
            }
            if f.perturbation == PerturbationId::None {
                return fail("sweep needs a perturbation");
            }
            // Delta is normalized to sup norm 1
            if let Some(e) = s.epsilons.iter().find(|e| **e > 1.0) {
                return fail(format!("sweep epsilon {e} violates eps |Delta|_inf <= 1"));
            }
            if !(s.p >= 1.0) {
                return fail(format!("sweep norm exponent must be >= 1, got {}", s.p));
            }
        }
        let d = &self.diagnostics;
        for w in &d.fit_windows {
            if !(w[0] >= 0.0 && w[1] > w[0]) {
                return fail(format!("fit window [{}, {}] is empty", w[0], w[1]));
            }
        }
        if d.reference == Reference::FreeEnergy && !force.is_conservative() {
            return fail("free-energy reference needs a conservative force");
        }
        let observables = d
            .observables
            .iter()
            .map(|s| Observable::parse(s, g.n))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Prepared {
            grid,
            force,
            observables,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        let p = cfg.validate().unwrap();
        assert_eq!(p.grid.resolution(), &[64, 64]);
    }

    #[test]
    fn sections_are_optional_and_unknown_keys_rejected() {
        let cfg = ExperimentConfig::from_toml("[run]\ndt = 1e-4\n").unwrap();
        assert_eq!(cfg.run.dt, 1e-4);
        assert_eq!(cfg.run.t_end, 1.0);
        assert!(ExperimentConfig::from_toml("[run]\ndtt = 1e-4\n").is_err());
        assert!(ExperimentConfig::from_toml("[experiment]\nmethod = \"abc\"\n").is_err());
    }

    #[test]
    fn provenance_section_is_ignored() {
        let text = format!("{}\n[provenance]\nwall_time_s = 3.0\n", ExperimentConfig::default().to_toml());
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn validation_catches_bad_settings() {
        let mut cfg = ExperimentConfig::default();
        cfg.run.dt = 1e-2;
        assert!(cfg.validate().unwrap_err().0.contains("stability bound"));

        let mut cfg = ExperimentConfig::default();
        cfg.grid.m = 3;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.run.t_end = 1.00001;
        assert!(cfg.validate().is_err());

        let mut cfg = ExperimentConfig::default();
        cfg.experiment.engine = Engine::Sweep;
        cfg.force.perturbation = PerturbationId::Rotational;
        cfg.sweep.epsilons = vec![0.5, 1.5];
        assert!(cfg.validate().unwrap_err().0.contains("<= 1"));

        let mut cfg = ExperimentConfig::default();
        cfg.force.perturbation = PerturbationId::Rotational;
        cfg.force.epsilon = 0.1;
        cfg.diagnostics.reference = Reference::FreeEnergy;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn particle_runs_skip_the_pde_stability_bound() {
        let mut cfg = ExperimentConfig::default();
        cfg.experiment.engine = Engine::Particles;
        cfg.run.dt = 1e-3;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn observables_parse() {
        let o = Observable::parse("sin:1,2", 2).unwrap();
        assert!(!o.cosine);
        assert_eq!(o.wave, vec![1, 2]);
        assert_eq!(Observable::parse("cos:1", 2).unwrap().wave, vec![1, 0]);
        assert!(Observable::parse("tan:1", 2).is_err());
        assert!(Observable::parse("cos:1,2,3", 2).is_err());
        let g = TorusGrid::uniform(2, 1, 8).unwrap();
        let f = Observable::parse("cos:1", 2).unwrap().field(&g);
        assert!((f.values()[0] - 1.0).abs() < 1e-15);
    }
}
