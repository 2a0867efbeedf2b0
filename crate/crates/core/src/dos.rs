//! Integrated density of states, its derivative, and energies where the
//! derivative is numerically stable.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::ensemble::{run_trials, ModelSpec};
use crate::error::{Error, Result};
use crate::estimates::box_seed;
use crate::report::fmt;
use crate::spectral::count_many;
use crate::stats::Summary;

const MODULE: &str = "dos";

/// Fewest eigenvalues a density window must contain before it is trusted.
pub const MIN_WINDOW_COUNT: usize = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdsCurve {
    pub energies: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub side: usize,
    pub volume: f64,
    pub trials: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
}

impl IdsCurve {
    /// Linear interpolation, clamped to the end values outside the grid.
    pub fn value_at(&self, e: f64) -> f64 {
        interpolate(&self.energies, &self.values, e)
    }

    /// `(E, N, stderr)` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["E", "N", "stderr"])?;
        for i in 0..self.energies.len() {
            wr.write_record([fmt(self.energies[i]), fmt(self.values[i]), fmt(self.stderr[i])])?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let k = xs.partition_point(|&v| v <= x);
    if k == 0 {
        return ys[0];
    }
    if k == xs.len() {
        return ys[k - 1];
    }
    let (x0, x1) = (xs[k - 1], xs[k]);
    let t = (x - x0) / (x1 - x0);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

fn check_sorted(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|e| !e.is_finite()) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::param(MODULE, "energies", "grid must be non-empty, finite and sorted"));
    }
    Ok(())
}

/// Per-trial `N_ω(−∞, E]` at every grid energy.
fn grid_counts(spec: &ModelSpec, grid: &[f64], side: usize, trials: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let s = box_seed(seed, side);
    run_trials(trials, |t| count_many(&spec.realize(side, s, t)?, grid))
}

/// `Ê[N_ω(−∞, E]]/|Λ|` on a sorted grid.
pub fn estimate_ids(spec: &ModelSpec, grid: &[f64], side: usize, trials: usize, seed: u64) -> Result<IdsCurve> {
    spec.validate()?;
    check_sorted(grid)?;
    if trials == 0 {
        return Err(Error::param(MODULE, "trials", "must be positive"));
    }
    let vol = spec.geometry(side)?.volume();
    let rows = grid_counts(spec, grid, side, trials, seed)?;
    let mut values = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let xs: Vec<f64> = rows.iter().map(|r| r[k] as f64 / vol).collect();
        let s = Summary::of(&xs);
        values.push(s.mean);
        stderr.push(s.stderr);
    }
    Ok(IdsCurve {
        energies: grid.to_vec(),
        values,
        stderr,
        side,
        volume: vol,
        trials,
        model: Some(spec.clone()),
    })
}

/// `max(0.01, 4/√(trials·|Λ|))`.
pub fn default_bandwidth(trials: usize, volume: f64) -> f64 {
    (4.0 / (trials as f64 * volume).sqrt()).max(0.01)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub energy: f64,
    pub bandwidth: f64,
    pub n_hat: f64,
    pub stderr: f64,
    /// Eigenvalues counted in the window, summed over trials.
    pub window_count: usize,
    pub notice: Option<String>,
}

fn check_bandwidth(bandwidth: f64) -> Result<()> {
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::param(MODULE, "bandwidth", format!("must be positive, got {bandwidth}")));
    }
    Ok(())
}

/// Central difference of an IDS curve.
pub fn density_from_curve(ids: &IdsCurve, energy: f64, bandwidth: f64) -> Result<DensityEstimate> {
    check_bandwidth(bandwidth)?;
    let hi = ids.value_at(energy + bandwidth / 2.0);
    let lo = ids.value_at(energy - bandwidth / 2.0);
    let se_hi = interpolate(&ids.energies, &ids.stderr, energy + bandwidth / 2.0);
    let se_lo = interpolate(&ids.energies, &ids.stderr, energy - bandwidth / 2.0);
    let n = ((hi - lo) / bandwidth).max(0.0);
    let count = ((hi - lo) * ids.volume * ids.trials as f64).round().max(0.0) as usize;
    Ok(DensityEstimate {
        energy,
        bandwidth,
        n_hat: n,
        // conservative: the two ends are positively correlated
        stderr: (se_hi + se_lo) / bandwidth,
        window_count: count,
        notice: None,
    })
}

/// `n̂(ℰ) = Ê[N(ℰ + ΔE/2) − N(ℰ − ΔE/2)]/(ΔE|Λ|)`, widening `ΔE` until the window
/// holds at least [`MIN_WINDOW_COUNT`] eigenvalues in total.
pub fn estimate_density(spec: &ModelSpec, energy: f64, bandwidth: f64, side: usize, trials: usize, seed: u64) -> Result<DensityEstimate> {
    spec.validate()?;
    check_bandwidth(bandwidth)?;
    if trials == 0 {
        return Err(Error::param(MODULE, "trials", "must be positive"));
    }
    let vol = spec.geometry(side)?.volume();
    let mut bw = bandwidth;
    let mut notice = None;
    for _ in 0..64 {
        let rows = grid_counts(spec, &[energy - bw / 2.0, energy + bw / 2.0], side, trials, seed)?;
        let total: usize = rows.iter().map(|r| r[1] - r[0]).sum();
        if total >= MIN_WINDOW_COUNT || bw >= 1e3 {
            let xs: Vec<f64> = rows.iter().map(|r| (r[1] - r[0]) as f64 / (vol * bw)).collect();
            let s = Summary::of(&xs);
            return Ok(DensityEstimate {
                energy,
                bandwidth: bw,
                n_hat: s.mean,
                stderr: s.stderr,
                window_count: total,
                notice,
            });
        }
        bw *= 2.0;
        notice = Some(format!("bandwidth {bandwidth} below Monte Carlo resolution, widened to {bw}"));
    }
    Err(Error::insufficient(MODULE, format!("fewer than {MIN_WINDOW_COUNT} eigenvalues near E = {energy} even at bandwidth {bw}")))
}

/// Options of the stability scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub bandwidths: Vec<f64>,
    pub min_density: f64,
    /// Accepted `max/min − 1` over the bandwidths.
    pub tolerance: f64,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            bandwidths: vec![0.1, 0.2, 0.4],
            min_density: 0.05,
            tolerance: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LebesgueCandidate {
    pub energy: f64,
    /// `n̂` at each bandwidth of the scan.
    pub densities: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `max/min − 1` of the densities.
    pub spread: f64,
}

fn rank(mut cands: Vec<LebesgueCandidate>, opts: &ScanOptions) -> Vec<LebesgueCandidate> {
    cands.retain(|c| c.densities.iter().all(|&n| n >= opts.min_density) && c.spread <= opts.tolerance);
    cands.sort_by(|a, b| a.spread.total_cmp(&b.spread).then(a.energy.total_cmp(&b.energy)));
    cands
}

fn spread(ns: &[f64]) -> f64 {
    let lo = ns.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ns.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo > 0.0 {
        hi / lo - 1.0
    } else {
        f64::INFINITY
    }
}

/// Stability scan on a known IDS function.
pub fn lebesgue_scan_fn<F: Fn(f64) -> f64>(ids: F, energies: &[f64], opts: &ScanOptions) -> Vec<LebesgueCandidate> {
    let cands = energies
        .iter()
        .map(|&e| {
            let ns: Vec<f64> = opts.bandwidths.iter().map(|&b| (ids(e + b / 2.0) - ids(e - b / 2.0)) / b).collect();
            LebesgueCandidate {
                energy: e,
                spread: spread(&ns),
                stderr: vec![0.0; ns.len()],
                densities: ns,
            }
        })
        .collect();
    rank(cands, opts)
}

/// Stability scan by Monte Carlo; candidates ranked by spread, unstable ones dropped.
pub fn lebesgue_point_scan(
    spec: &ModelSpec,
    energies: &[f64],
    side: usize,
    trials: usize,
    seed: u64,
    opts: &ScanOptions,
) -> Result<Vec<LebesgueCandidate>> {
    spec.validate()?;
    check_sorted(energies)?;
    if opts.bandwidths.is_empty() {
        return Err(Error::param(MODULE, "bandwidths", "need at least one bandwidth"));
    }
    for &b in &opts.bandwidths {
        check_bandwidth(b)?;
    }
    let vol = spec.geometry(side)?.volume();
    let mut grid: Vec<f64> = energies
        .iter()
        .flat_map(|&e| opts.bandwidths.iter().flat_map(move |&b| [e - b / 2.0, e + b / 2.0]))
        .collect();
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    let rows = grid_counts(spec, &grid, side, trials, seed)?;
    let at = |e: f64| grid.partition_point(|&g| g < e);
    let cands = energies
        .iter()
        .map(|&e| {
            let mut ns = Vec::new();
            let mut ses = Vec::new();
            for &b in &opts.bandwidths {
                let (i, j) = (at(e - b / 2.0), at(e + b / 2.0));
                let xs: Vec<f64> = rows.iter().map(|r| (r[j] - r[i]) as f64 / (vol * b)).collect();
                let s = Summary::of(&xs);
                ns.push(s.mean);
                ses.push(s.stderr);
            }
            LebesgueCandidate {
                energy: e,
                spread: spread(&ns),
                densities: ns,
                stderr: ses,
            }
        })
        .collect();
    Ok(rank(cands, opts))
}

/// Free-lattice IDS `#{k : 2d − 2Σcos(2πk_i/L) ≤ E}/L^d` by direct enumeration.
pub fn free_lattice_ids(dim: usize, side: usize, e: f64) -> f64 {
    let ev = free_lattice_eigenvalues(dim, side);
    ev.iter().filter(|&&x| x <= e).count() as f64 / ev.len() as f64
}

pub fn free_lattice_eigenvalues(dim: usize, side: usize) -> Vec<f64> {
    let one: Vec<f64> = (0..side)
        .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / side as f64).cos())
        .collect();
    let mut ev = vec![0.0];
    for _ in 0..dim {
        ev = ev.iter().flat_map(|&a| one.iter().map(move |&b| a + b)).collect();
    }
    ev
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SiteDistribution;

    fn free(dim: usize) -> ModelSpec {
        ModelSpec::lattice(dim, SiteDistribution::uniform(1.0).with_coupling(0.0))
    }

    #[test]
    fn free_ids_enumeration() {
        let grid: Vec<f64> = (0..20).map(|k| -0.5 + 0.26 * k as f64 + 0.013).collect();
        let c = estimate_ids(&free(1), &grid, 102, 2, 0).unwrap();
        for (e, v) in grid.iter().zip(&c.values) {
            assert!((v - free_lattice_ids(1, 102, *e)).abs() < 1e-12);
        }
        let half = estimate_ids(&free(1), &[2.0], 102, 1, 0).unwrap();
        assert_eq!(half.values[0], 0.5);
        assert_eq!(c.values[0], 0.0);
    }

    #[test]
    fn constant_shift() {
        let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0));
        let d = spec.sample(30, 1, 0).unwrap();
        let shifted = crate::model::DisorderRealization::from_values(d.geometry().clone(), d.values().iter().map(|v| v + 0.3).collect()).unwrap();
        let h0 = spec.assemble(&d).unwrap();
        let h1 = spec.assemble(&shifted).unwrap();
        for e in [0.5, 1.7, 3.1] {
            assert_eq!(count_many(&h0, &[e]).unwrap(), count_many(&h1, &[e + 0.3]).unwrap());
        }
    }

    #[test]
    fn density_widening_and_normalization() {
        let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(2.0));
        let d = estimate_density(&spec, 3.0, 1e-4, 50, 10, 4).unwrap();
        assert!(d.notice.is_some() && d.bandwidth > 1e-4 && d.window_count >= MIN_WINDOW_COUNT);
        let grid: Vec<f64> = (0..=80).map(|k| -0.5 + 0.1 * k as f64).collect();
        let c = estimate_ids(&spec, &grid, 50, 20, 4).unwrap();
        let total: f64 = grid.windows(2).map(|w| density_from_curve(&c, 0.5 * (w[0] + w[1]), 0.1).unwrap().n_hat * 0.1).sum();
        assert!((total - 1.0).abs() < 0.01);
        assert!(c.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn free_density_matches_difference() {
        let ex = |e: f64| free_lattice_ids(1, 1000, e);
        let d = estimate_density(&free(1), 2.0, 0.2, 1000, 1, 0).unwrap();
        let fd = (ex(2.1) - ex(1.9)) / 0.2;
        assert!((d.n_hat - fd).abs() <= 0.01 * fd);
    }

    #[test]
    fn scan_fixtures() {
        let semicircle = |e: f64| {
            let x = (e / 2.0).clamp(-1.0, 1.0);
            0.5 + (x * (1.0 - x * x).sqrt() + x.asin()) / std::f64::consts::PI
        };
        let es: Vec<f64> = (0..=30).map(|k| -1.5 + 0.1 * k as f64).collect();
        assert_eq!(lebesgue_scan_fn(semicircle, &es, &ScanOptions::default()).len(), es.len());
        // inside the gap of a two-band fixture
        let gapped = |e: f64| 0.5 * ((e + 3.0).clamp(0.0, 2.0) + (e - 1.0).clamp(0.0, 2.0)) / 2.0;
        assert!(lebesgue_scan_fn(gapped, &[0.0], &ScanOptions::default()).is_empty());
        // free band edge, via the exact arccos law
        let edge = |e: f64| (1.0 - e.clamp(0.0, 4.0) / 2.0).acos() / std::f64::consts::PI;
        assert!(lebesgue_scan_fn(edge, &[0.1, 0.2, 3.9], &ScanOptions::default()).is_empty());
    }
}
