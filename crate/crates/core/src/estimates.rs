//! Monte Carlo checks of the eigenvalue-counting inequalities.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::ensemble::{run_trials, ModelSpec};
use crate::error::{Error, Result};
use crate::model::derive_seed;
use crate::operators::AssembledOperator;
use crate::report::{Cell, EstimateReport};
use crate::spectral::{count_at_most, count_in_many, eigenpairs_in, eigenvalues_in, has_close_pair, Interval};
use crate::stats::{compensated_sum, linear_fit, Summary};

const MODULE: &str = "estimates";

/// Master seed of the box of a given side within an experiment.
pub fn box_seed(seed: u64, side: usize) -> u64 {
    derive_seed(seed, "box", side as u64)
}

/// Counts `N(I)` for each interval in one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalCountSample {
    pub trial: u64,
    pub counts: Vec<usize>,
}

impl IntervalCountSample {
    /// `N(N − 1)` per interval.
    pub fn factorial2(&self) -> Vec<usize> {
        self.counts.iter().map(|&n| n * n.saturating_sub(1)).collect()
    }
}

/// Per-trial interval counts on the box of side `side`.
pub fn interval_counts(spec: &ModelSpec, intervals: &[Interval], side: usize, trials: usize, seed: u64) -> Result<Vec<IntervalCountSample>> {
    spec.validate()?;
    let s = box_seed(seed, side);
    run_trials(trials, |t| {
        let h = spec.realize(side, s, t)?;
        Ok(IntervalCountSample {
            trial: t,
            counts: count_in_many(&h, intervals)?,
        })
    })
}

/// Counts for every side of a volume grid, computed once and shared by the
/// Wegner and Minami reports.
#[derive(Clone, Debug)]
pub struct CountTable {
    pub intervals: Vec<Interval>,
    pub sides: Vec<usize>,
    pub volumes: Vec<f64>,
    pub samples: Vec<Vec<IntervalCountSample>>,
    pub seconds: f64,
}

pub fn count_table(spec: &ModelSpec, intervals: &[Interval], sides: &[usize], trials: usize, seed: u64) -> Result<CountTable> {
    let start = Instant::now();
    let mut samples = Vec::new();
    let mut volumes = Vec::new();
    for &l in sides {
        volumes.push(spec.geometry(l)?.volume());
        samples.push(interval_counts(spec, intervals, l, trials, seed)?);
    }
    Ok(CountTable {
        intervals: intervals.to_vec(),
        sides: sides.to_vec(),
        volumes,
        samples,
        seconds: start.elapsed().as_secs_f64(),
    })
}

fn common_params(r: &mut EstimateReport, spec: &ModelSpec, trials: usize, seed: u64) {
    r.set("model", spec);
    r.set("trials", trials);
    r.set("seed", seed);
}

/// `Ê[N(I)]` against `ρ₊|I||Λ|` (the lattice bound has constant 1).
pub fn wegner_report(spec: &ModelSpec, table: &CountTable, seed: u64) -> EstimateReport {
    let mut r = EstimateReport::new("wegner");
    let trials = table.samples.first().map_or(0, |s| s.len());
    common_params(&mut r, spec, trials, seed);
    let rho = spec.rho_plus();
    let mut ratios = Vec::new();
    let (mut sxy, mut sxx) = (Vec::new(), Vec::new());
    for (vi, samples) in table.samples.iter().enumerate() {
        let vol = table.volumes[vi];
        for (ii, iv) in table.intervals.iter().enumerate() {
            let xs: Vec<f64> = samples.iter().map(|s| s.counts[ii] as f64).collect();
            let sm = Summary::of(&xs);
            let scale = rho.map(|p| p * iv.width() * vol);
            let bound = if spec.is_lattice() { scale } else { None };
            r.per_cell.push(Cell::new(Some(iv), vol, sm.n, sm.mean, sm.stderr, bound));
            if let Some(x) = scale {
                ratios.push(sm.mean / x);
                sxy.push(sm.mean * x);
                sxx.push(x * x);
            }
        }
    }
    if !ratios.is_empty() {
        r.set("k_w_hat_max", ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        r.set("k_w_hat_per_cell", &ratios);
        r.set("k_w_fit", compensated_sum(sxy) / compensated_sum(sxx));
    }
    // slope of Ê[N] in |Λ| per interval
    if table.volumes.len() >= 3 {
        let slopes: Vec<Option<f64>> = (0..table.intervals.len())
            .map(|ii| {
                let ys: Vec<f64> = r.per_cell.iter().skip(ii).step_by(table.intervals.len()).map(|c| c.estimate).collect();
                linear_fit(&table.volumes, &ys, None).ok().map(|f| f.slope)
            })
            .collect();
        r.set("volume_slope", slopes);
    }
    r.set("seconds", table.seconds);
    r
}

pub fn wegner_experiment(spec: &ModelSpec, intervals: &[Interval], sides: &[usize], trials: usize, seed: u64) -> Result<EstimateReport> {
    if trials < 100 {
        return Err(Error::param(MODULE, "trials", format!("Wegner runs need at least 100 trials, got {trials}")));
    }
    let t = count_table(spec, intervals, sides, trials, seed)?;
    Ok(wegner_report(spec, &t, seed))
}

/// Slope of `log y` against `log x` with a delta-method standard error.
pub fn loglog_slope(x: &[f64], y: &[f64], se: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64, f64)> = x
        .iter()
        .zip(y)
        .zip(se)
        .filter(|((_, &y), _)| y > 0.0)
        .map(|((&x, &y), &s)| (x.ln(), y.ln(), s / y))
        .collect();
    match pts.len() {
        0 | 1 => None,
        2 => {
            let dx = pts[1].0 - pts[0].0;
            let slope = (pts[1].1 - pts[0].1) / dx;
            let se = (pts[0].2.powi(2) + pts[1].2.powi(2)).sqrt() / dx.abs();
            Some((slope, se))
        }
        _ => {
            let lx: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ly: Vec<f64> = pts.iter().map(|p| p.1).collect();
            let ls: Vec<f64> = pts.iter().map(|p| p.2).collect();
            linear_fit(&lx, &ly, Some(&ls)).ok().map(|f| (f.slope, f.slope_se))
        }
    }
}

/// `Ê[N(N−1)]` against `(Q_μ(|I|)|Λ|)²`, with `P̂{N ≥ 2}` and the width scaling.
pub fn minami_report(spec: &ModelSpec, table: &CountTable, seed: u64) -> EstimateReport {
    let mut r = EstimateReport::new("minami");
    let trials = table.samples.first().map_or(0, |s| s.len());
    common_params(&mut r, spec, trials, seed);
    let rho = spec.rho_plus();
    let mut p2 = Vec::new();
    let mut p2_ok = true;
    let (mut sxy, mut sxx) = (Vec::new(), Vec::new());
    let mut slopes = Vec::new();
    for (vi, samples) in table.samples.iter().enumerate() {
        let vol = table.volumes[vi];
        let (mut ws, mut es, mut ss) = (Vec::new(), Vec::new(), Vec::new());
        for (ii, iv) in table.intervals.iter().enumerate() {
            let xs: Vec<f64> = samples.iter().map(|s| (s.counts[ii] * s.counts[ii].saturating_sub(1)) as f64).collect();
            let sm = Summary::of(&xs);
            let scale = rho.map(|p| (p * iv.width() * vol).powi(2));
            let bound = if spec.is_lattice() { scale } else { None };
            r.per_cell.push(Cell::new(Some(iv), vol, sm.n, sm.mean, sm.stderr, bound));
            let ind: Vec<f64> = samples.iter().map(|s| (s.counts[ii] >= 2) as u8 as f64).collect();
            let ps = Summary::of(&ind);
            p2_ok &= ps.mean <= 0.5 * sm.mean + 3.0 * (ps.stderr + 0.5 * sm.stderr) + 1e-15;
            p2.push(ps.mean);
            if let Some(x) = scale {
                sxy.push(sm.mean * x);
                sxx.push(x * x);
            }
            ws.push(iv.width());
            es.push(sm.mean);
            ss.push(sm.stderr);
        }
        slopes.push(loglog_slope(&ws, &es, &ss));
    }
    r.set("p_two_or_more", &p2);
    r.set("p_two_bound_holds", p2_ok);
    if !sxx.is_empty() {
        r.set("k_m_fit", compensated_sum(sxy) / compensated_sum(sxx));
    }
    r.set(
        "width_slope",
        slopes.iter().map(|s| s.map(|v| v.0)).collect::<Vec<_>>(),
    );
    r.set(
        "width_slope_se",
        slopes.iter().map(|s| s.map(|v| v.1)).collect::<Vec<_>>(),
    );
    r.set("seconds", table.seconds);
    r
}

pub fn minami_experiment(spec: &ModelSpec, intervals: &[Interval], sides: &[usize], trials: usize, seed: u64) -> Result<EstimateReport> {
    if trials < 1000 {
        return Err(Error::param(MODULE, "trials", format!("Minami runs need at least 1000 trials, got {trials}")));
    }
    let t = count_table(spec, intervals, sides, trials, seed)?;
    Ok(minami_report(spec, &t, seed))
}

/// `Ê⟨δ_j, P(I) δ_j⟩` against `Q_μ(|I|) = ρ₊|I|`.
pub fn spectral_averaging_check(
    spec: &ModelSpec,
    site: usize,
    intervals: &[Interval],
    side: usize,
    trials: usize,
    seed: u64,
) -> Result<EstimateReport> {
    spec.validate()?;
    if !spec.is_lattice() {
        return Err(Error::param(MODULE, "model.mode", "spectral averaging needs the lattice"));
    }
    if intervals.is_empty() {
        return Err(Error::param(MODULE, "intervals", "need at least one interval"));
    }
    let g = spec.geometry(side)?;
    if site >= g.n_sites() {
        return Err(Error::param(MODULE, "site", "out of range"));
    }
    let start = Instant::now();
    let lo = intervals.iter().map(|i| i.a()).fold(f64::INFINITY, f64::min);
    let hi = intervals.iter().map(|i| i.b()).fold(f64::NEG_INFINITY, f64::max);
    let hull = Interval::new(lo, hi)?;
    let s = box_seed(seed, side);
    // per trial: (diagonal elements per interval, worst identity mismatch)
    let rows = run_trials(trials, |t| {
        let h = spec.realize(side, s, t)?;
        let (vals, vecs) = eigenpairs_in(&h, &hull)?;
        let counts = count_in_many(&h, intervals)?;
        let mut diag = Vec::with_capacity(intervals.len());
        let mut mismatch: f64 = 0.0;
        for (iv, &n) in intervals.iter().zip(&counts) {
            let sel: Vec<&Vec<f64>> = vals.iter().zip(&vecs).filter(|(l, _)| iv.contains(**l)).map(|(_, v)| v).collect();
            diag.push(compensated_sum(sel.iter().map(|v| v[site] * v[site])));
            let total = compensated_sum(sel.iter().map(|v| compensated_sum(v.iter().map(|x| x * x))));
            mismatch = mismatch.max((total - n as f64).abs());
        }
        Ok((diag, mismatch))
    })?;
    let mut r = EstimateReport::new("spectral-averaging");
    common_params(&mut r, spec, trials, seed);
    r.set("site", site);
    let vol = g.volume();
    for (ii, iv) in intervals.iter().enumerate() {
        let xs: Vec<f64> = rows.iter().map(|row| row.0[ii]).collect();
        let sm = Summary::of(&xs);
        let bound = spec.distribution.concentration(iv.width());
        r.per_cell.push(Cell::new(Some(iv), vol, sm.n, sm.mean, sm.stderr, bound));
    }
    r.set("volume_sum_max_mismatch", rows.iter().map(|row| row.1).fold(0.0, f64::max));
    r.set("seconds", start.elapsed().as_secs_f64());
    Ok(r)
}

/// Wegner counts with `ω_site` pinned to `tau`.
pub fn fixed_site_wegner(
    spec: &ModelSpec,
    site: usize,
    tau: f64,
    intervals: &[Interval],
    sides: &[usize],
    trials: usize,
    seed: u64,
) -> Result<EstimateReport> {
    spec.validate()?;
    if !tau.is_finite() {
        return Err(Error::param(MODULE, "tau", "must be finite"));
    }
    let start = Instant::now();
    let mut r = EstimateReport::new("fixed-site-wegner");
    common_params(&mut r, spec, trials, seed);
    r.set("site", site);
    r.set("tau", tau);
    let rho = spec.rho_plus();
    let mut ratios = Vec::new();
    for &l in sides {
        let g = spec.geometry(l)?;
        if site >= g.n_sites() {
            return Err(Error::param(MODULE, "site", "out of range"));
        }
        let s = box_seed(seed, l);
        let rows = run_trials(trials, |t| {
            let d = spec.sample(l, s, t)?.pinned(site, tau);
            count_in_many(&spec.assemble(&d)?, intervals)
        })?;
        let vol = g.volume();
        for (ii, iv) in intervals.iter().enumerate() {
            let xs: Vec<f64> = rows.iter().map(|c| c[ii] as f64).collect();
            let sm = Summary::of(&xs);
            // other sites average to at most Q_μ(|I|) each, the pinned one contributes at most 1
            let bound = if spec.is_lattice() {
                rho.map(|p| p * iv.width() * (vol - 1.0) + 1.0)
            } else {
                None
            };
            r.per_cell.push(Cell::new(Some(iv), vol, sm.n, sm.mean, sm.stderr, bound));
            if let Some(p) = rho {
                ratios.push((sm.mean / (p * iv.width() * vol), sm.stderr / (p * iv.width() * vol)));
            }
        }
    }
    r.set("k_tilde_per_cell", ratios.iter().map(|x| x.0).collect::<Vec<_>>());
    r.set("k_tilde_stderr_per_cell", ratios.iter().map(|x| x.1).collect::<Vec<_>>());
    r.set("seconds", start.elapsed().as_secs_f64());
    Ok(r)
}

/// `h(t) = 1 − 10s³ + 15s⁴ − 6s⁵`, `s = t/δ` clamped to `[0, 1]`.
pub fn smooth_switch(t: f64, delta: f64) -> f64 {
    let s = (t / delta).clamp(0.0, 1.0);
    1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

/// `h′(t)`; its maximum magnitude is `15/(8δ)`, attained at `t = δ/2`.
pub fn smooth_switch_derivative(t: f64, delta: f64) -> f64 {
    let s = t / delta;
    if !(0.0..=1.0).contains(&s) {
        return 0.0;
    }
    -30.0 * s * s * (1.0 - s) * (1.0 - s) / delta
}

/// `tr h_b(H)` with `h_b(x) = h(x − b)`, from a count and the eigenvalues in `(b, b + δ)`.
pub fn switch_trace(h: &AssembledOperator, b: f64, delta: f64) -> Result<f64> {
    let below = count_at_most(h, b)? as f64;
    let ev = eigenvalues_in(h, &Interval::new(b, b + delta)?)?;
    Ok(below + compensated_sum(ev.iter().map(|&l| smooth_switch(l - b, delta))))
}

/// `ξ_{b,τ} = tr h_b(H_{ω_site = 0}) − tr h_b(H_{ω_site = τ})` per realization.
#[allow(clippy::too_many_arguments)]
pub fn spectral_shift_experiment(
    spec: &ModelSpec,
    site: usize,
    b: f64,
    delta: f64,
    tau: f64,
    side: usize,
    trials: usize,
    seed: u64,
    k_w_hat: Option<f64>,
) -> Result<EstimateReport> {
    spec.validate()?;
    if !(delta > 0.0) {
        return Err(Error::param(MODULE, "delta", format!("must be positive, got {delta}")));
    }
    let start = Instant::now();
    let s = box_seed(seed, side);
    let a = b - delta;
    let rows = run_trials(trials, |t| {
        let d = spec.sample(side, s, t)?;
        let h0 = spec.assemble(&d.pinned(site, 0.0))?;
        let ht = spec.assemble(&d.pinned(site, tau))?;
        let xi = switch_trace(&h0, b, delta)? - switch_trace(&ht, b, delta)?;
        // count_in((a, b]) ≤ tr h_b − tr h_{a−δ} ≤ count_in((a − δ, b + δ])
        let diff = switch_trace(&h0, b, delta)? - switch_trace(&h0, a - delta, delta)?;
        let c = count_in_many(&h0, &[Interval::new(a, b)?, Interval::new(a - delta, b + delta)?])?;
        let chain_ok = c[0] as f64 <= diff + 1e-9 && diff <= c[1] as f64 + 1e-9;
        Ok((xi, chain_ok))
    })?;
    let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let sm = Summary::of(&xs);
    let mut r = EstimateReport::new("spectral-shift");
    common_params(&mut r, spec, trials, seed);
    r.set("site", site);
    r.set("b", b);
    r.set("delta", delta);
    r.set("tau", tau);
    let vol = spec.geometry(side)?.volume();
    let bound = if spec.is_lattice() {
        Some(1.0)
    } else {
        let u = spec.u_plus()?;
        let ratio = spec.rho_plus().zip(spec.rho_minus()).map(|(p, m)| p / m);
        let b = k_w_hat.zip(ratio).map(|(k, q)| 2.0 * k * u * q);
        r.set("u_plus", u);
        if let Some(v) = b {
            r.set("empirical_analogue_condition", v <= 1.0);
        }
        b
    };
    let iv = Interval::new(b, b + delta)?;
    r.per_cell.push(Cell::new(Some(&iv), vol, sm.n, sm.mean, sm.stderr, bound));
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    r.set("xi_min", lo);
    r.set("xi_max", hi);
    if spec.is_lattice() {
        r.set("xi_outside_unit_interval", xs.iter().filter(|&&x| !(-1e-9..=1.0 + 1e-9).contains(&x)).count());
    }
    r.set("chain_violations", rows.iter().filter(|r| !r.1).count());
    r.set("max_switch_slope_times_delta", 15.0 / 8.0);
    r.set("seconds", start.elapsed().as_secs_f64());
    Ok(r)
}

/// Probability of two eigenvalues in `I` closer than `L^{−q}`, per side.
pub fn simplicity_experiment(
    spec: &ModelSpec,
    interval: &Interval,
    q: f64,
    sides: &[usize],
    trials: usize,
    seed: u64,
    gap_sample: usize,
) -> Result<EstimateReport> {
    spec.validate()?;
    let d = spec.dim as f64;
    if !(q > 2.0 * d) {
        return Err(Error::param(MODULE, "q", format!("must exceed 2d = {}, got {q}", 2.0 * d)));
    }
    let start = Instant::now();
    let mut r = EstimateReport::new("simplicity");
    common_params(&mut r, spec, trials, seed);
    r.set("q", q);
    r.set("theory_slope", -q + 2.0 * d);
    let mut ps = Vec::new();
    let mut ls = Vec::new();
    let mut gap_hist = Vec::new();
    let mut simple_fraction = Vec::new();
    for &l in sides {
        let s = box_seed(seed, l);
        let eps = (l as f64).powf(-q);
        let hits = run_trials(trials, |t| {
            let h = spec.realize(l, s, t)?;
            let hit = has_close_pair(&h, interval, eps)?;
            let extra = if (t as usize) < gap_sample {
                let ev = eigenvalues_in(&h, interval)?;
                let tol = 1e-10 * h.norm_bound();
                let gap = ev.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                let mult = ev.windows(2).filter(|w| w[1] - w[0] <= tol).count();
                Some((gap, mult))
            } else {
                None
            };
            Ok((hit, extra))
        })?;
        let xs: Vec<f64> = hits.iter().map(|h| h.0 as u8 as f64).collect();
        let sm = Summary::of(&xs);
        let vol = spec.geometry(l)?.volume();
        r.per_cell.push(Cell::new(Some(interval), vol, sm.n, sm.mean, sm.stderr, None));
        ps.push(sm.mean);
        ls.push(l as f64);
        let extras: Vec<(f64, usize)> = hits.iter().filter_map(|h| h.1).collect();
        let mut hist = vec![0usize; 17];
        for &(g, _) in &extras {
            if g.is_finite() && g > 0.0 {
                let b = (-g.log10()).floor().clamp(0.0, 16.0) as usize;
                hist[b] += 1;
            } else if g == 0.0 {
                hist[16] += 1;
            }
        }
        gap_hist.push(hist);
        if !extras.is_empty() {
            simple_fraction.push(extras.iter().filter(|e| e.1 == 0).count() as f64 / extras.len() as f64);
        }
    }
    let decreasing = ps.windows(2).all(|w| w[1] < w[0]);
    r.set("strictly_decreasing", decreasing);
    if ps.iter().all(|&p| p > 0.0) && ps.len() >= 2 {
        let lx: Vec<f64> = ls.iter().map(|x| x.ln()).collect();
        let ly: Vec<f64> = ps.iter().map(|x| x.ln()).collect();
        let slope = if lx.len() == 2 {
            (ly[1] - ly[0]) / (lx[1] - lx[0])
        } else {
            linear_fit(&lx, &ly, None)?.slope
        };
        r.set("loglog_slope", slope);
    }
    r.set("min_gap_histogram_neg_log10_bins", gap_hist);
    r.set("multiplicity_free_fraction", simple_fraction);
    r.set("seconds", start.elapsed().as_secs_f64());
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn switch_shape() {
        assert_eq!(smooth_switch(0.0, 0.1), 1.0);
        assert_eq!(smooth_switch(0.1, 0.1), 0.0);
        assert_eq!(smooth_switch(-1.0, 0.1), 1.0);
        let max = (0..=1000)
            .map(|k| smooth_switch_derivative(0.1 * k as f64 / 1000.0, 0.1).abs())
            .fold(0.0, f64::max);
        assert!((max - 1.875 / 0.1).abs() < 1e-9 && max <= 2.0 / 0.1);
    }

    #[test]
    fn loglog_two_points() {
        let (s, _) = loglog_slope(&[0.01, 0.05], &[1.0, 25.0], &[0.1, 0.1]).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }
}
