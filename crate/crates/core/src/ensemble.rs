//! Model descriptions and ordered parallel trial execution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_disorder_at, DisorderRealization, Mode, SiteDistribution, TorusGeometry};
use crate::operators::{build_continuum, build_lattice, AssembledOperator, PeriodicPotential, SingleSiteProfile};

const MODULE: &str = "ensemble";

/// Everything that defines a random operator family except the box side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub mode: Mode,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<f64>,
    #[serde(default)]
    pub v_per: PeriodicPotential,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<SingleSiteProfile>,
    pub distribution: SiteDistribution,
}

impl ModelSpec {
    pub fn lattice(dim: usize, distribution: SiteDistribution) -> Self {
        Self {
            mode: Mode::Lattice,
            dim,
            mesh: None,
            v_per: PeriodicPotential::Zero,
            profile: None,
            distribution,
        }
    }

    pub fn continuum(dim: usize, mesh: f64, v_per: PeriodicPotential, profile: SingleSiteProfile, distribution: SiteDistribution) -> Self {
        Self {
            mode: Mode::Continuum,
            dim,
            mesh: Some(mesh),
            v_per,
            profile: Some(profile),
            distribution,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        if self.mode == Mode::Continuum {
            let p = self
                .profile
                .as_ref()
                .ok_or_else(|| Error::param(MODULE, "model.profile", "continuum mode needs a single-site profile"))?;
            p.validate()?;
            if self.mesh.is_none() {
                return Err(Error::param(MODULE, "model.mesh", "continuum mode needs a mesh"));
            }
        }
        Ok(())
    }

    pub fn is_lattice(&self) -> bool {
        self.mode == Mode::Lattice
    }

    pub fn geometry(&self, side: usize) -> Result<TorusGeometry> {
        match self.mode {
            Mode::Lattice => TorusGeometry::lattice(self.dim, side),
            Mode::Continuum => TorusGeometry::continuum(
                self.dim,
                side,
                self.mesh.ok_or_else(|| Error::param(MODULE, "model.mesh", "missing"))?,
            ),
        }
    }

    /// Disorder on the box of side `side` anchored at global site 0.
    pub fn sample(&self, side: usize, seed: u64, trial: u64) -> Result<DisorderRealization> {
        let g = self.geometry(side)?;
        sample_disorder_at(&self.distribution, &g, seed, trial, &vec![0; self.dim])
    }

    pub fn assemble(&self, disorder: &DisorderRealization) -> Result<AssembledOperator> {
        let g = disorder.geometry();
        match self.mode {
            Mode::Lattice => build_lattice(g, disorder),
            Mode::Continuum => build_continuum(g, &self.v_per, self.profile.as_ref().unwrap(), disorder),
        }
    }

    pub fn realize(&self, side: usize, seed: u64, trial: u64) -> Result<AssembledOperator> {
        self.assemble(&self.sample(side, seed, trial)?)
    }

    /// `H + t·(single-site term at j)`.
    pub fn add_site_term(&self, h: &AssembledOperator, site: usize, t: f64) -> Result<AssembledOperator> {
        match self.mode {
            Mode::Lattice => h.add_rank_one(site, t),
            Mode::Continuum => h.add_scaled_profile(site, t),
        }
    }

    /// Density bound of the coupled single-site variable.
    pub fn rho_plus(&self) -> Option<f64> {
        self.distribution.coupled_rho_plus()
    }

    /// Density floor of the coupled single-site variable.
    pub fn rho_minus(&self) -> Option<f64> {
        let c = self.distribution.coupling;
        (c > 0.0).then(|| self.distribution.rho_minus() / c)
    }

    /// `U₊ = sup_x Σ_j u(x − j)` (1 on the lattice).
    pub fn u_plus(&self) -> Result<f64> {
        match self.mode {
            Mode::Lattice => Ok(1.0),
            Mode::Continuum => {
                let p = self.profile.as_ref().unwrap();
                let mut side = (p.delta_plus.ceil() as usize + 2).max(2);
                side += side % 2;
                let g = self.geometry(side)?;
                let d = DisorderRealization::from_values(g.clone(), vec![1.0; g.n_sites()])?;
                let h = build_continuum(&g, &PeriodicPotential::Zero, p, &d)?;
                let lap = 2.0 * self.dim as f64 / (g.mesh() * g.mesh());
                Ok(h.diagonal().iter().map(|v| v - lap).fold(0.0, f64::max))
            }
        }
    }
}

/// Run `f(trial)` for `trial in 0..trials` in parallel, returning results in trial order.
pub fn run_trials<T, F>(trials: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..trials as u64).into_par_iter().map(f).collect()
}

/// Like [`run_trials`] but keeps per-trial failures instead of aborting.
pub fn run_trials_fallible<T, F>(trials: usize, f: F) -> Vec<Result<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..trials as u64).into_par_iter().map(f).collect()
}
