//! Localization diagnostics: fractional moments of resolvent blocks and the
//! shape of eigenfunctions.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ensemble::{run_trials, run_trials_fallible, ModelSpec};
use crate::error::{Error, Result};
use crate::estimates::box_seed;
use crate::report::fmt;
use crate::spectral::{eigenpairs_in, unit_block, Interval, Resolvent};
use crate::stats::{linear_fit, LinearFit, Summary};

const MODULE: &str = "localization";

/// Base sites per realization used for translation averaging.
const BASE_SITES: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub energy: f64,
    pub eta: f64,
    pub s: f64,
    pub side: usize,
    pub separations: Vec<usize>,
    pub moments: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Fit of `log moment = intercept − rate·separation`.
    pub fit: LinearFit,
    pub rate: f64,
    pub rate_se: f64,
    pub trials: usize,
    pub failures: usize,
    pub localized: bool,
}

impl DecayCurve {
    /// `(separation, moment, stderr)` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["separation", "moment", "stderr"])?;
        for i in 0..self.separations.len() {
            wr.write_record([self.separations[i].to_string(), fmt(self.moments[i]), fmt(self.stderr[i])])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Fits `log m(r)` against `r`, weighting by the propagated Monte Carlo error.
pub fn fit_decay(separations: &[usize], moments: &[f64], stderr: &[f64]) -> Result<LinearFit> {
    if moments.iter().any(|&m| !(m > 0.0)) {
        return Err(Error::numeric(MODULE, "non-positive moment estimate"));
    }
    let x: Vec<f64> = separations.iter().map(|&r| r as f64).collect();
    let y: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
    let sig: Vec<f64> = stderr.iter().zip(moments).map(|(s, m)| s / m).collect();
    linear_fit(&x, &y, Some(&sig))
}

/// Trial-averaged `E‖χ_x R(z) χ_y‖^s` at each separation along the first axis.
#[allow(clippy::too_many_arguments)]
pub fn fractional_moment_decay(
    spec: &ModelSpec,
    z: Complex64,
    s: f64,
    separations: &[usize],
    side: usize,
    trials: usize,
    seed: u64,
) -> Result<DecayCurve> {
    spec.validate()?;
    if !(s > 0.0 && s < 0.25) {
        return Err(Error::param(MODULE, "s", format!("must lie in (0, 1/4), got {s}")));
    }
    if !(z.im > 0.0) {
        return Err(Error::param(MODULE, "eta", "imaginary part must be positive"));
    }
    if separations.len() < 3 || separations.iter().any(|&r| r == 0 || 2 * r > side) {
        return Err(Error::param(MODULE, "separations", format!("need at least three separations in 1..={}", side / 2)));
    }
    let g = spec.geometry(side)?;
    let n_base = BASE_SITES.min(side);
    let stride = side / n_base;
    let bases: Vec<usize> = (0..n_base)
        .map(|k| {
            let mut c = vec![0; spec.dim];
            c[0] = k * stride;
            g.site_index(&c)
        })
        .collect();
    let ss = box_seed(seed, side);
    let rows = run_trials_fallible(trials, |t| {
        let h = spec.realize(side, ss, t)?;
        let r = Resolvent::new(&h, z)?;
        let mut acc = vec![0.0; separations.len()];
        for &y in &bases {
            let xs: Vec<Vec<usize>> = separations
                .iter()
                .map(|&d| {
                    let mut shift = vec![0; spec.dim];
                    shift[0] = d;
                    unit_block(&h, g.translate_site(y, &shift))
                })
                .collect();
            for (a, n) in acc.iter_mut().zip(r.block_norms_from(&unit_block(&h, y), &xs)?) {
                *a += n.powf(s) / bases.len() as f64;
            }
        }
        Ok(acc)
    });
    let mut ok = Vec::new();
    let mut failures = 0;
    for r in rows {
        match r {
            Ok(v) => ok.push(v),
            Err(e) if e.is_numeric() => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if failures as f64 > 0.01 * trials as f64 {
        return Err(Error::numeric(MODULE, format!("{failures} of {trials} resolvent solves failed")));
    }
    let mut moments = Vec::new();
    let mut stderr = Vec::new();
    for k in 0..separations.len() {
        let xs: Vec<f64> = ok.iter().map(|v| v[k]).collect();
        let sm = Summary::of(&xs);
        moments.push(sm.mean);
        stderr.push(sm.stderr);
    }
    let fit = fit_decay(separations, &moments, &stderr)?;
    let rate = -fit.slope;
    Ok(DecayCurve {
        energy: z.re,
        eta: z.im,
        s,
        side,
        separations: separations.to_vec(),
        moments,
        stderr,
        rate,
        rate_se: fit.slope_se,
        localized: rate > 3.0 * fit.slope_se && fit.r2 >= 0.9,
        fit,
        trials: ok.len(),
        failures,
    })
}

/// `Σ_j p_j²` for site weights `p_j` summing to one.
pub fn inverse_participation(weights: &[f64]) -> f64 {
    weights.iter().map(|p| p * p).sum()
}

/// Per-site weights `Σ_{x ∈ Λ_1(j)} |v(x)|²` of a grid vector.
pub fn site_weights(h: &crate::operators::AssembledOperator, v: &[f64]) -> Vec<f64> {
    match h.geometry() {
        Some(g) => (0..g.n_sites()).map(|j| g.unit_block(j).iter().map(|&i| v[i] * v[i]).sum()).collect(),
        None => v.iter().map(|x| x * x).collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenDecayReport {
    pub interval: Interval,
    pub side: usize,
    pub trials: usize,
    pub eigenvectors: usize,
    pub ipr: Vec<f64>,
    pub median_ipr: f64,
    /// Decay rates of `max_{|j − j*| = r} √p_j` around the maximizing site.
    pub envelope_rates: Vec<f64>,
    pub median_envelope_rate: f64,
}

fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut s = xs.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

/// Envelope decay rate of site weights on a torus geometry.
fn envelope_rate(g: &crate::model::TorusGeometry, p: &[f64]) -> Option<f64> {
    let (peak, &pmax) = p.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1))?;
    let rmax = g.side() / 2;
    let mut env = vec![0.0f64; rmax + 1];
    for (j, &w) in p.iter().enumerate() {
        let r = g.site_distance(peak, j).round() as usize;
        if r <= rmax {
            env[r] = env[r].max(w.sqrt());
        }
    }
    // stop at the rounding floor of the eigensolver
    let floor = 1e-7 * pmax.sqrt();
    let (x, y): (Vec<f64>, Vec<f64>) = env
        .iter()
        .enumerate()
        .take_while(|(_, &e)| e > floor)
        .map(|(r, &e)| (r as f64, e.ln()))
        .unzip();
    linear_fit(&x, &y, None).ok().map(|f| -f.slope)
}

/// IPR and envelope decay of the eigenvectors with eigenvalue in `interval`.
pub fn eigenfunction_decay(spec: &ModelSpec, interval: &Interval, side: usize, trials: usize, seed: u64) -> Result<EigenDecayReport> {
    spec.validate()?;
    let g = spec.geometry(side)?;
    let ss = box_seed(seed, side);
    let rows = run_trials(trials, |t| {
        let h = spec.realize(side, ss, t)?;
        let (_, vecs) = eigenpairs_in(&h, interval)?;
        Ok(vecs
            .iter()
            .map(|v| {
                let p = site_weights(&h, v);
                (inverse_participation(&p), envelope_rate(&g, &p))
            })
            .collect::<Vec<_>>())
    })?;
    let all: Vec<(f64, Option<f64>)> = rows.into_iter().flatten().collect();
    let ipr: Vec<f64> = all.iter().map(|a| a.0).collect();
    let rates: Vec<f64> = all.iter().filter_map(|a| a.1).collect();
    Ok(EigenDecayReport {
        interval: *interval,
        side,
        trials,
        eigenvectors: ipr.len(),
        median_ipr: median(&ipr),
        median_envelope_rate: median(&rates),
        ipr,
        envelope_rates: rates,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateOptions {
    pub side: usize,
    pub trials: usize,
    pub s: f64,
    pub eta: f64,
    pub separations: Vec<usize>,
    pub ipr_threshold: f64,
    /// Half-width of the energy window for eigenvectors.
    pub half_width: f64,
    pub seed: u64,
}

impl Default for GateOptions {
    fn default() -> Self {
        Self {
            side: 256,
            trials: 200,
            s: 0.2,
            eta: 1e-3,
            separations: vec![4, 8, 16, 32],
            ipr_threshold: 0.1,
            half_width: 0.1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub energy: f64,
    pub pass: bool,
    pub reason: String,
    pub decay: DecayCurve,
    pub eigen: EigenDecayReport,
}

/// Empirical stand-in for complete localization at `energy`.
pub fn localization_gate(spec: &ModelSpec, energy: f64, opts: &GateOptions) -> Result<GateResult> {
    let decay = fractional_moment_decay(spec, Complex64::new(energy, opts.eta), opts.s, &opts.separations, opts.side, opts.trials, opts.seed)?;
    let iv = Interval::centered(energy, 2.0 * opts.half_width)?;
    let eigen = eigenfunction_decay(spec, &iv, opts.side, opts.trials.min(50), opts.seed)?;
    let ipr_ok = eigen.eigenvectors > 0 && eigen.median_ipr >= opts.ipr_threshold;
    let pass = decay.localized && ipr_ok;
    let reason = format!(
        "fractional-moment rate {:.3e} ± {:.2e} (R² {:.3}, {}); median IPR {:.4} over {} eigenvectors (threshold {})",
        decay.rate,
        decay.rate_se,
        decay.fit.r2,
        if decay.localized { "decaying" } else { "not decaying" },
        eigen.median_ipr,
        eigen.eigenvectors,
        opts.ipr_threshold
    );
    Ok(GateResult {
        energy,
        pass,
        reason,
        decay,
        eigen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SiteDistribution;

    #[test]
    fn ipr_fixtures() {
        assert_eq!(inverse_participation(&[0.0, 1.0, 0.0]), 1.0);
        assert!((inverse_participation(&[0.25; 4]) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn strong_disorder_decays() {
        let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(8.0));
        let c = fractional_moment_decay(&spec, Complex64::new(6.0, 1e-3), 0.2, &[2, 4, 6, 8], 32, 30, 1).unwrap();
        assert!(c.localized, "{c:?}");
        assert!(fractional_moment_decay(&spec, Complex64::new(6.0, 1e-3), 0.3, &[2, 4, 6], 32, 3, 1).is_err());
    }

    #[test]
    fn smaller_power_is_larger_on_unit_norms() {
        // the s-monotonicity on a single realization with norms ≤ 1
        let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(8.0));
        let a = fractional_moment_decay(&spec, Complex64::new(6.0, 1e-3), 0.1, &[4, 6, 8], 32, 1, 2).unwrap();
        let b = fractional_moment_decay(&spec, Complex64::new(6.0, 1e-3), 0.2, &[4, 6, 8], 32, 1, 2).unwrap();
        for (x, y) in a.moments.iter().zip(&b.moments) {
            if *x <= 1.0 {
                assert!(x >= y);
            }
        }
    }
}
