//! Experiment configuration: TOML file, environment and flag overrides.

use std::path::{Path, PathBuf};

use anderson_core::ensemble::ModelSpec;
use anderson_core::{DistributionKind, Interval, Mode, PeriodicPotential, SingleSiteProfile, SiteDistribution};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Failure;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub experiment: Experiment,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub mode: Mode,
    #[serde(rename = "d")]
    pub dim: usize,
    /// Box side, or a grid of sides for the scaling experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sides: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<f64>,
    #[serde(default)]
    pub v_per: PeriodicPotential,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<SingleSiteProfile>,
    pub distribution: DistributionKind,
    /// Coupling `λ` multiplying every sampled `ω_j`.
    #[serde(default = "one")]
    pub lambda: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

/// `(a, b]` written as a two-element array.
pub type Span = [f64; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyGrid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl EnergyGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points < 2 {
            return vec![self.from];
        }
        let step = (self.to - self.from) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.from + step * k as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    Wegner {
        intervals: Vec<Span>,
    },
    Minami {
        intervals: Vec<Span>,
    },
    SpectralAveraging {
        intervals: Vec<Span>,
        #[serde(default)]
        site: usize,
    },
    FixedSiteWegner {
        intervals: Vec<Span>,
        #[serde(default)]
        site: usize,
        tau: f64,
    },
    SpectralShift {
        #[serde(default)]
        site: usize,
        b: f64,
        delta: f64,
        tau: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k_w_hat: Option<f64>,
    },
    Simplicity {
        interval: Span,
        q: f64,
        #[serde(default = "default_gap_sample")]
        gap_sample: usize,
    },
    Poisson {
        /// Fixed energy; without it the stability scan over `scan` picks one.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        energy: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scan: Option<EnergyGrid>,
        /// Rescaled window half-width `W`; defaults to `5/n̂`.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        window: Option<f64>,
        #[serde(default = "default_sets")]
        sets: Vec<Span>,
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        density_trials: Option<usize>,
        /// Sub-box exponent for the superposition comparison.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        superposition: Option<f64>,
        #[serde(default)]
        gate: GateConfig,
    },
    Conditions {
        energy: f64,
        interval: Span,
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
        #[serde(default)]
        gate: GateConfig,
    },
    Dos {
        grid: EnergyGrid,
        /// Energies at which to report `n̂`.
        #[serde(default)]
        density_at: Vec<f64>,
        #[serde(default = "default_bandwidth")]
        bandwidth: f64,
    },
    Localize {
        energy: f64,
        #[serde(default)]
        gate: GateConfig,
    },
    Selftest {},
}

fn default_gap_sample() -> usize {
    100
}

fn default_sets() -> Vec<Span> {
    vec![[-2.0, 2.0]]
}

fn default_bandwidth() -> f64 {
    0.2
}

fn default_a() -> f64 {
    0.5
}

/// Localization gate settings; `localize` runs take the trial count from `[run]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    pub side: usize,
    pub trials: usize,
    pub s: f64,
    pub eta: f64,
    pub separations: Vec<usize>,
    pub ipr_threshold: f64,
    pub half_width: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        let g = anderson_core::localization::GateOptions::default();
        Self {
            side: g.side,
            trials: g.trials,
            s: g.s,
            eta: g.eta,
            separations: g.separations,
            ipr_threshold: g.ipr_threshold,
            half_width: g.half_width,
        }
    }
}

impl GateConfig {
    pub fn options(&self, seed: u64) -> anderson_core::localization::GateOptions {
        anderson_core::localization::GateOptions {
            side: self.side,
            trials: self.trials,
            s: self.s,
            eta: self.eta,
            separations: self.separations.clone(),
            ipr_threshold: self.ipr_threshold,
            half_width: self.half_width,
            seed,
        }
    }
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Wegner { .. } => "wegner",
            Experiment::Minami { .. } => "minami",
            Experiment::SpectralAveraging { .. } => "spectral-averaging",
            Experiment::FixedSiteWegner { .. } => "fixed-site-wegner",
            Experiment::SpectralShift { .. } => "spectral-shift",
            Experiment::Simplicity { .. } => "simplicity",
            Experiment::Poisson { .. } => "poisson",
            Experiment::Conditions { .. } => "conditions",
            Experiment::Dos { .. } => "dos",
            Experiment::Localize { .. } => "localize",
            Experiment::Selftest {} => "selftest",
        }
    }
}

/// Values from flags and environment; `None` falls through to the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Run settings after every override has been applied.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub config: Config,
    pub trials: usize,
    pub seed: u64,
    pub workers: usize,
    pub out: PathBuf,
}

pub fn load(path: &Path) -> Result<Config, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::validation(format!("cli: cannot read config `{}`: {e}", path.display())))?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<Config, Failure> {
    toml::from_str(text).map_err(|e| Failure::validation(format!("cli: invalid config: {e}")))
}

impl Config {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(mut self, o: &Overrides) -> Result<Resolved, Failure> {
        if let Some(t) = o.trials {
            self.run.trials = Some(t);
        }
        if let Some(s) = o.seed {
            self.run.seed = Some(s);
        }
        if let Some(w) = o.workers {
            self.run.workers = Some(w);
        }
        if let Some(p) = &o.out {
            self.run.out = Some(p.clone());
        }
        let needs_trials = !matches!(self.experiment, Experiment::Selftest {});
        let trials = match self.run.trials {
            Some(0) => return Err(Failure::validation("cli: invalid parameter `run.trials`: must be at least 1")),
            Some(t) => t,
            None if needs_trials => {
                return Err(Failure::validation(
                    "cli: missing parameter `run.trials`: set it in the config, with --trials or ANDERSON_TRIALS",
                ))
            }
            None => 0,
        };
        let workers = match self.run.workers {
            Some(0) => return Err(Failure::validation("cli: invalid parameter `run.workers`: must be at least 1")),
            Some(w) => w,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        let seed = self.run.seed.unwrap_or(0);
        let out = self.run.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        let r = Resolved {
            config: self,
            trials,
            seed,
            workers,
            out,
        };
        r.validate()?;
        Ok(r)
    }

    /// SHA-256 over the settings that determine the numbers; worker count and
    /// output directory are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.workers = None;
        c.run.out = None;
        hex::encode(Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn model_spec(&self) -> Result<ModelSpec, Failure> {
        let m = &self.model;
        let dist = SiteDistribution {
            kind: m.distribution.clone(),
            coupling: m.lambda,
        };
        let spec = match m.mode {
            Mode::Lattice => {
                let mut s = ModelSpec::lattice(m.dim, dist);
                s.v_per = m.v_per.clone();
                s
            }
            Mode::Continuum => {
                let mesh = m.mesh.ok_or_else(|| Failure::validation("ensemble: invalid parameter `model.mesh`: continuum mode needs a mesh"))?;
                let profile = m
                    .profile
                    .clone()
                    .ok_or_else(|| Failure::validation("ensemble: invalid parameter `model.profile`: continuum mode needs a single-site profile"))?;
                ModelSpec::continuum(m.dim, mesh, m.v_per.clone(), profile, dist)
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Side grid: `model.sides` if given, else the single `model.side`.
    pub fn sides(&self) -> Result<Vec<usize>, Failure> {
        match (&self.model.side, &self.model.sides) {
            (_, Some(v)) if !v.is_empty() => Ok(v.clone()),
            (Some(l), _) => Ok(vec![*l]),
            _ => Err(Failure::validation("cli: missing parameter `model.side`: give model.side or model.sides")),
        }
    }

    pub fn side(&self) -> Result<usize, Failure> {
        match (&self.model.side, &self.model.sides) {
            (Some(l), _) => Ok(*l),
            (None, Some(v)) if !v.is_empty() => Ok(*v.last().unwrap()),
            _ => Err(Failure::validation("cli: missing parameter `model.side`")),
        }
    }
}

pub fn intervals(spans: &[Span], param: &str) -> Result<Vec<Interval>, Failure> {
    if spans.is_empty() {
        return Err(Failure::validation(format!("cli: invalid parameter `{param}`: need at least one interval")));
    }
    spans
        .iter()
        .map(|s| Interval::new(s[0], s[1]).map_err(|e| Failure::validation(format!("{e} (in `{param}`)"))))
        .collect()
}

fn check(ok: bool, param: &str, reason: &str) -> Result<(), Failure> {
    if ok {
        Ok(())
    } else {
        Err(Failure::validation(format!("cli: invalid parameter `{param}`: {reason}")))
    }
}

impl Resolved {
    /// Every cheap precondition, before any compute starts.
    fn validate(&self) -> Result<(), Failure> {
        let c = &self.config;
        if matches!(c.experiment, Experiment::Selftest {}) {
            return Ok(());
        }
        let spec = c.model_spec()?;
        let sides = c.sides()?;
        for &l in &sides {
            spec.geometry(l)?;
        }
        let n_sites = spec.geometry(sides[0])?.n_sites();
        let dim = c.model.dim as f64;
        match &c.experiment {
            Experiment::Wegner { intervals: iv } => {
                intervals(iv, "experiment.intervals")?;
                check(self.trials >= 100, "run.trials", "Wegner runs need at least 100 trials")?;
            }
            Experiment::Minami { intervals: iv } => {
                intervals(iv, "experiment.intervals")?;
                check(self.trials >= 1000, "run.trials", "Minami runs need at least 1000 trials")?;
            }
            Experiment::SpectralAveraging { intervals: iv, site } => {
                intervals(iv, "experiment.intervals")?;
                check(c.model.mode == Mode::Lattice, "model.mode", "spectral averaging needs the lattice")?;
                check(*site < n_sites, "experiment.site", "out of range")?;
            }
            Experiment::FixedSiteWegner { intervals: iv, site, tau } => {
                intervals(iv, "experiment.intervals")?;
                check(*site < n_sites, "experiment.site", "out of range")?;
                check(tau.is_finite(), "experiment.tau", "must be finite")?;
            }
            Experiment::SpectralShift { site, delta, tau, b, .. } => {
                check(*site < n_sites, "experiment.site", "out of range")?;
                check(*delta > 0.0, "experiment.delta", "must be positive")?;
                check(tau.is_finite() && b.is_finite(), "experiment.tau", "tau and b must be finite")?;
            }
            Experiment::Simplicity { interval, q, .. } => {
                intervals(&[*interval], "experiment.interval")?;
                check(*q > 2.0 * dim, "experiment.q", "must exceed 2d")?;
            }
            Experiment::Poisson {
                energy,
                scan,
                window,
                sets,
                bandwidth,
                superposition,
                gate,
                ..
            } => {
                check(energy.is_some() || scan.is_some(), "experiment.energy", "give an energy or a scan grid")?;
                if let Some(g) = scan {
                    check(g.points >= 1 && g.from <= g.to, "experiment.scan", "need from ≤ to and at least one point")?;
                }
                if let Some(w) = window {
                    check(*w > 0.0, "experiment.window", "must be positive")?;
                }
                let b = intervals(sets, "experiment.sets")?;
                if let Some(w) = window {
                    check(b.iter().all(|i| -w <= i.a() && i.b() <= *w), "experiment.sets", "must lie inside the window")?;
                }
                check(*bandwidth > 0.0, "experiment.bandwidth", "must be positive")?;
                if let Some(a) = superposition {
                    check(*a > 0.0 && *a < 1.0, "experiment.superposition", "exponent must lie in (0, 1)")?;
                }
                check_gate(gate)?;
            }
            Experiment::Conditions { interval, a, bandwidth, gate, .. } => {
                intervals(&[*interval], "experiment.interval")?;
                check(*a > 0.0 && *a < 1.0, "experiment.a", "must lie in (0, 1)")?;
                check(*bandwidth > 0.0, "experiment.bandwidth", "must be positive")?;
                check_gate(gate)?;
            }
            Experiment::Dos { grid, bandwidth, .. } => {
                check(grid.points >= 1 && grid.from <= grid.to, "experiment.grid", "need from ≤ to and at least one point")?;
                check(*bandwidth > 0.0, "experiment.bandwidth", "must be positive")?;
            }
            Experiment::Localize { gate, .. } => check_gate(gate)?,
            Experiment::Selftest {} => {}
        }
        Ok(())
    }
}

fn check_gate(g: &GateConfig) -> Result<(), Failure> {
    check(g.s > 0.0 && g.s < 0.25, "experiment.gate.s", "must lie in (0, 1/4)")?;
    check(g.eta > 0.0, "experiment.gate.eta", "must be positive")?;
    check(g.separations.len() >= 3, "experiment.gate.separations", "need at least three separations")?;
    check(
        g.separations.iter().all(|&r| 2 * r <= g.side),
        "experiment.gate.separations",
        "must not exceed half the gate side",
    )?;
    check(g.trials >= 1, "experiment.gate.trials", "must be at least 1")
}

#[cfg(test)]
mod tests {
    use super::*;

    const WEGNER: &str = r#"
[model]
mode = "lattice"
d = 1
side = 100
lambda = 1.0
distribution = { kind = "uniform", m_rho = 1.0 }

[experiment]
kind = "wegner"
intervals = [[1.995, 2.005], [1.975, 2.025]]

[run]
trials = 2000
seed = 1
"#;

    #[test]
    fn round_trip() {
        let c = parse(WEGNER).unwrap();
        let again = parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn flags_win_over_file() {
        let c = parse(WEGNER).unwrap();
        let r = c
            .resolve(&Overrides {
                trials: Some(300),
                ..Default::default()
            })
            .unwrap();
        assert_eq!((r.trials, r.seed), (300, 1));
    }

    #[test]
    fn hash_ignores_workers() {
        let mut a = parse(WEGNER).unwrap();
        let h = a.hash();
        a.run.workers = Some(7);
        assert_eq!(a.hash(), h);
        a.run.seed = Some(2);
        assert_ne!(a.hash(), h);
    }

    #[test]
    fn missing_trials_names_the_key() {
        let text = WEGNER.replace("trials = 2000\n", "");
        let e = parse(&text).unwrap().resolve(&Overrides::default()).unwrap_err();
        assert_eq!(e.code, 2);
        assert!(e.message.contains("run.trials"), "{}", e.message);
    }
}
