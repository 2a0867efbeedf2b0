//! Rescaled eigenvalue point processes near a reference energy and the
//! statistics used to compare them with a Poisson process.

use std::io::Write;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{run_trials, ModelSpec};
use crate::error::{Error, Result};
use crate::estimates::box_seed;
use crate::model::DisorderRealization;
use crate::report::fmt;
use crate::spectral::{count_in_many, eigenpairs_in, eigenvalues_in, Interval};
use crate::stats::{chi_square_poisson, ks_critical_5, ks_exponential, poisson_pmf, tv_distance_poisson, ChiSquareResult, Summary};

const MODULE: &str = "pointprocess";

/// Successors are searched this many window widths beyond the window.
const SUCCESSOR_REACH: f64 = 3.0;

/// Rescaled points `x = |Λ|(λ − ℰ)` with `|x| ≤ W` for one realization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessSample {
    pub trial: u64,
    pub energy: f64,
    pub volume: f64,
    pub window: f64,
    pub points: Vec<f64>,
    /// Rescaled distance from each point to the next point of the same
    /// process, which may lie outside the window.
    pub successors: Vec<Option<f64>>,
}

impl ProcessSample {
    /// Builds a sample from the sorted unscaled eigenvalues covering
    /// `(ℰ − W/|Λ|, ℰ + (1 + reach)W/|Λ|]`.
    fn from_eigenvalues(trial: u64, energy: f64, volume: f64, window: f64, ev: &[f64]) -> Self {
        let xs: Vec<f64> = ev.iter().map(|&l| volume * (l - energy)).collect();
        let mut points = Vec::new();
        let mut successors = Vec::new();
        for (i, &x) in xs.iter().enumerate() {
            if x.abs() <= window {
                points.push(x);
                successors.push(xs.get(i + 1).map(|&y| y - x));
            }
        }
        Self {
            trial,
            energy,
            volume,
            window,
            points,
            successors,
        }
    }

    /// Number of points in the union of rescaled intervals `B`.
    pub fn count(&self, b: &[Interval]) -> usize {
        self.points.iter().filter(|&&x| b.iter().any(|i| i.contains(x))).count()
    }
}

/// An ensemble of process samples plus any notice raised while building it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProcessEnsemble {
    pub kind: String,
    pub samples: Vec<ProcessSample>,
    pub notice: Option<String>,
}

impl ProcessEnsemble {
    fn new(kind: &str, samples: Vec<ProcessSample>) -> Self {
        let empty = samples.iter().filter(|s| s.points.is_empty()).count();
        let notice = (!samples.is_empty() && empty as f64 > 0.99 * samples.len() as f64)
            .then(|| format!("window empty in {empty} of {} trials; the density of states is near zero here", samples.len()));
        Self {
            kind: kind.to_string(),
            samples,
            notice,
        }
    }

    pub fn counts(&self, b: &[Interval]) -> Vec<usize> {
        self.samples.iter().map(|s| s.count(b)).collect()
    }

    /// `(trial, point)` rows.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["trial", "point"])?;
        for s in &self.samples {
            for &x in &s.points {
                wr.write_record([s.trial.to_string(), fmt(x)])?;
            }
        }
        wr.flush()?;
        Ok(())
    }
}

fn check_window(energy: f64, window: f64) -> Result<()> {
    if !energy.is_finite() {
        return Err(Error::param(MODULE, "energy", "must be finite"));
    }
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::param(MODULE, "window", format!("must be positive, got {window}")));
    }
    Ok(())
}

fn extended_window(energy: f64, window: f64, volume: f64) -> Result<Interval> {
    Interval::new(energy - window / volume, energy + (1.0 + SUCCESSOR_REACH) * window / volume)
}

/// `ξ` for the box of side `side`.
pub fn local_process(spec: &ModelSpec, energy: f64, window: f64, side: usize, trials: usize, seed: u64) -> Result<ProcessEnsemble> {
    spec.validate()?;
    check_window(energy, window)?;
    let vol = spec.geometry(side)?.volume();
    let ext = extended_window(energy, window, vol)?;
    let s = box_seed(seed, side);
    let samples = run_trials(trials, |t| {
        let h = spec.realize(side, s, t)?;
        Ok(ProcessSample::from_eigenvalues(t, energy, vol, window, &eigenvalues_in(&h, &ext)?))
    })?;
    Ok(ProcessEnsemble::new("local", samples))
}

/// The largest even divisor `ℓ` of `L` with `ℓ ≤ L^a`.
pub fn sub_box_side(side: usize, a: f64) -> Result<usize> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::param(MODULE, "a", format!("must lie in (0, 1), got {a}")));
    }
    let cap = (side as f64).powf(a) + 1e-9;
    (2..=side)
        .step_by(2)
        .filter(|&l| side % l == 0 && l as f64 <= cap)
        .last()
        .ok_or_else(|| Error::geometry(MODULE, format!("no even divisor of {side} is at most {side}^{a}")))
}

/// Anchors (local coordinates) of the `(L/ℓ)^d` sub-boxes of side `ℓ`.
pub fn sub_box_starts(dim: usize, side: usize, ell: usize) -> Result<Vec<Vec<usize>>> {
    if ell == 0 || side % ell != 0 {
        return Err(Error::geometry(MODULE, format!("sub-box side {ell} does not divide {side}")));
    }
    let m = side / ell;
    let total = m.pow(dim as u32);
    Ok((0..total)
        .map(|k| {
            let mut r = k;
            (0..dim)
                .map(|_| {
                    let c = (r % m) * ell;
                    r /= m;
                    c
                })
                .collect()
        })
        .collect())
}

/// Disorder of the big box, split into its sub-boxes.
fn sub_boxes(spec: &ModelSpec, side: usize, ell: usize, seed: u64, trial: u64) -> Result<Vec<DisorderRealization>> {
    let d = spec.sample(side, box_seed(seed, side), trial)?;
    sub_box_starts(spec.dim, side, ell)?
        .iter()
        .map(|st| d.restrict(st, ell))
        .collect()
}

/// `ξ̃`: pooled spectra of the sub-boxes of side `ell`, rescaled by the big volume.
pub fn superposition_process_with_box(
    spec: &ModelSpec,
    energy: f64,
    window: f64,
    side: usize,
    ell: usize,
    trials: usize,
    seed: u64,
) -> Result<ProcessEnsemble> {
    spec.validate()?;
    check_window(energy, window)?;
    let vol = spec.geometry(side)?.volume();
    let ext = extended_window(energy, window, vol)?;
    sub_box_starts(spec.dim, side, ell)?;
    let samples = run_trials(trials, |t| {
        let mut ev = Vec::new();
        for d in sub_boxes(spec, side, ell, seed, t)? {
            ev.extend(eigenvalues_in(&spec.assemble(&d)?, &ext)?);
        }
        ev.sort_by(|a, b| a.total_cmp(b));
        Ok(ProcessSample::from_eigenvalues(t, energy, vol, window, &ev))
    })?;
    Ok(ProcessEnsemble::new("superposition", samples))
}

pub fn superposition_process(spec: &ModelSpec, energy: f64, window: f64, side: usize, a: f64, trials: usize, seed: u64) -> Result<ProcessEnsemble> {
    let ell = sub_box_side(side, a)?;
    superposition_process_with_box(spec, energy, window, side, ell, trials, seed)
}

/// Weighted rescaled points of `θ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedSample {
    pub trial: u64,
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl WeightedSample {
    pub fn weight(&self, b: &[Interval]) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .filter(|(x, _)| b.iter().any(|i| i.contains(**x)))
            .map(|(_, w)| w)
            .sum()
    }

    pub fn count(&self, b: &[Interval]) -> usize {
        self.points.iter().filter(|&&x| b.iter().any(|i| i.contains(x))).count()
    }
}

/// `‖χ_mask v‖²` for a normalized vector.
pub fn mask_weight(v: &[f64], mask: &[usize]) -> f64 {
    mask.iter().map(|&i| v[i] * v[i]).sum()
}

/// Grid points of the box of side `inner` placed at offset `offset` inside `outer`.
fn inner_box_points(spec: &ModelSpec, outer: usize, inner: usize, offset: usize) -> Result<Vec<usize>> {
    let g = spec.geometry(outer)?;
    let sub = spec.geometry(inner)?;
    let mut pts = Vec::new();
    for s in 0..sub.n_sites() {
        let c: Vec<usize> = sub.site_coords(s).iter().map(|&x| x + offset).collect();
        pts.extend(g.unit_block(g.site_index(&c)));
    }
    pts.sort_unstable();
    Ok(pts)
}

/// `θ(B) = tr χ_Λ P(ℰ + |Λ|⁻¹B) χ_Λ` with the infinite-volume operator replaced by
/// the box of side `κL` and `Λ` centred inside it.
pub fn restricted_process(
    spec: &ModelSpec,
    energy: f64,
    window: f64,
    side: usize,
    kappa: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<WeightedSample>> {
    spec.validate()?;
    check_window(energy, window)?;
    if kappa < 2 {
        return Err(Error::param(MODULE, "kappa", format!("super-box factor must be at least 2, got {kappa}")));
    }
    let big = kappa * side;
    let vol = spec.geometry(side)?.volume();
    let offset = (kappa - 1) * side / 2;
    let mask = inner_box_points(spec, big, side, offset)?;
    let iv = Interval::new(energy - window / vol, energy + window / vol)?;
    let s = box_seed(seed, big);
    run_trials(trials, |t| {
        let h = spec.realize(big, s, t)?;
        let (vals, vecs) = eigenpairs_in(&h, &iv)?;
        Ok(WeightedSample {
            trial: t,
            points: vals.iter().map(|&l| vol * (l - energy)).collect(),
            weights: vecs.iter().map(|v| mask_weight(v, &mask).min(1.0)).collect(),
        })
    })
}

/// Homogeneous Poisson process of the given rate on `[−W, W]`, with successors.
pub fn synthetic_poisson(rate: f64, window: f64, trials: usize, seed: u64) -> Result<ProcessEnsemble> {
    if !(rate > 0.0) {
        return Err(Error::param(MODULE, "rate", "must be positive"));
    }
    check_window(0.0, window)?;
    let samples = (0..trials as u64)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let mut pts = Vec::new();
            let mut x = -window;
            let end = window * (1.0 + 2.0 * SUCCESSOR_REACH);
            loop {
                let u = ((rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64);
                x += -u.ln() / rate;
                if x > end {
                    break;
                }
                pts.push(x);
            }
            ProcessSample::from_eigenvalues(t, 0.0, 1.0, window, &pts)
        })
        .collect();
    Ok(ProcessEnsemble::new("synthetic-poisson", samples))
}

/// Goodness of fit of the counts `ξ(B)` against `Poisson(n̂|B|)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonTestReport {
    pub trials: usize,
    pub set_measure: f64,
    pub nu: f64,
    pub mean_count: f64,
    pub mean_count_stderr: f64,
    pub pmf: Vec<f64>,
    pub reference_pmf: Vec<f64>,
    pub tv_distance: f64,
    pub chi_square: ChiSquareResult,
    pub reject: bool,
    pub verdict: String,
}

/// Total length of a union of disjoint intervals.
pub fn union_measure(b: &[Interval]) -> f64 {
    b.iter().map(|i| i.width()).sum()
}

pub fn poisson_counts_test(ensemble: &ProcessEnsemble, b: &[Interval], n_hat: f64) -> Result<PoissonTestReport> {
    let counts = ensemble.counts(b);
    poisson_test_from_counts(&counts, union_measure(b), n_hat)
}

pub fn poisson_test_from_counts(counts: &[usize], measure: f64, n_hat: f64) -> Result<PoissonTestReport> {
    if !(n_hat > 0.0) {
        return Err(Error::param(MODULE, "n_hat", format!("density must be positive, got {n_hat}")));
    }
    if counts.len() < 200 {
        return Err(Error::insufficient(MODULE, format!("Poisson count test needs at least 200 trials, got {}", counts.len())));
    }
    let nu = n_hat * measure;
    let kmax = counts.iter().copied().max().unwrap_or(0);
    let mut obs = vec![0u64; kmax + 1];
    for &c in counts {
        obs[c] += 1;
    }
    let n = counts.len() as f64;
    let pmf: Vec<f64> = obs.iter().map(|&o| o as f64 / n).collect();
    let reference_pmf: Vec<f64> = (0..=kmax).map(|k| poisson_pmf(k as u64, nu)).collect();
    let tv = tv_distance_poisson(&pmf, nu);
    let chi = chi_square_poisson(&obs, nu)?;
    let reject = chi.p_value < 0.05;
    let xs: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let sm = Summary::of(&xs);
    let verdict = format!(
        "{} Poisson({nu:.4}) at 5%: chi2 = {:.3} on {} dof, p = {:.4}, TV = {tv:.4}",
        if reject { "reject" } else { "consistent with" },
        chi.statistic,
        chi.dof,
        chi.p_value
    );
    Ok(PoissonTestReport {
        trials: counts.len(),
        set_measure: measure,
        nu,
        mean_count: sm.mean,
        mean_count_stderr: sm.stderr,
        pmf,
        reference_pmf,
        tv_distance: tv,
        chi_square: chi,
        reject,
        verdict,
    })
}

/// KS test of pooled successor gaps against `Exp(n̂)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacingTestReport {
    pub gaps: usize,
    pub rate: f64,
    pub ks: f64,
    pub critical_5: f64,
    pub reject: bool,
    /// Median of `n̂·gap`; `ln 2` for exponential gaps.
    pub scaled_median: f64,
    pub reference_median: f64,
}

pub fn pooled_gaps(ensemble: &ProcessEnsemble) -> Vec<f64> {
    ensemble
        .samples
        .iter()
        .flat_map(|s| s.successors.iter().flatten().copied())
        .collect()
}

pub fn spacing_test(ensemble: &ProcessEnsemble, n_hat: f64) -> Result<SpacingTestReport> {
    spacing_test_from_gaps(&pooled_gaps(ensemble), n_hat)
}

pub fn spacing_test_from_gaps(gaps: &[f64], n_hat: f64) -> Result<SpacingTestReport> {
    if !(n_hat > 0.0) {
        return Err(Error::param(MODULE, "n_hat", format!("density must be positive, got {n_hat}")));
    }
    if gaps.len() < 500 {
        return Err(Error::insufficient(MODULE, format!("spacing test needs at least 500 gaps, got {}", gaps.len())));
    }
    let ks = ks_exponential(gaps, n_hat);
    let crit = ks_critical_5(gaps.len());
    let mut scaled: Vec<f64> = gaps.iter().map(|g| g * n_hat).collect();
    scaled.sort_by(|a, b| a.total_cmp(b));
    let m = scaled.len();
    let median = if m % 2 == 1 { scaled[m / 2] } else { 0.5 * (scaled[m / 2 - 1] + scaled[m / 2]) };
    Ok(SpacingTestReport {
        gaps: gaps.len(),
        rate: n_hat,
        ks,
        critical_5: crit,
        reject: ks > crit,
        scaled_median: median,
        reference_median: std::f64::consts::LN_2,
    })
}

/// The three sub-box conditions at one side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionsRow {
    pub side: usize,
    pub sub_side: usize,
    pub boxes: usize,
    pub trials: usize,
    /// `max_m P{ξ^(m)(I) ≥ 1}` and the standard error of the maximizing box.
    pub cond1: f64,
    pub cond1_stderr: f64,
    /// `Σ_m P{ξ^(m)(I) ≥ 1}`.
    pub cond2: f64,
    pub cond2_stderr: f64,
    /// `Σ_m P{ξ^(m)(I) ≥ 2}`.
    pub cond3: f64,
    pub cond3_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionsReport {
    pub energy: f64,
    pub interval: Interval,
    pub a: f64,
    pub n_hat: f64,
    pub target: f64,
    pub rows: Vec<ConditionsRow>,
    pub cond1_decreasing: bool,
    pub cond3_decreasing: bool,
    pub cond2_close: bool,
}

/// Per-cell `(trials × boxes)` count matrix for one side.
pub fn sub_box_counts(spec: &ModelSpec, energy: f64, iv: &Interval, side: usize, ell: usize, trials: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let vol = spec.geometry(side)?.volume();
    let e = Interval::new(energy + iv.a() / vol, energy + iv.b() / vol)?;
    run_trials(trials, |t| {
        sub_boxes(spec, side, ell, seed, t)?
            .iter()
            .map(|d| Ok(count_in_many(&spec.assemble(d)?, &[e])?[0]))
            .collect()
    })
}

pub fn conditions_row(side: usize, ell: usize, counts: &[Vec<usize>]) -> ConditionsRow {
    let trials = counts.len();
    let boxes = counts.first().map_or(0, |c| c.len());
    let mut cond1 = 0.0;
    let mut cond1_se = 0.0;
    for m in 0..boxes {
        let ind: Vec<f64> = counts.iter().map(|c| (c[m] >= 1) as u8 as f64).collect();
        let s = Summary::of(&ind);
        if s.mean > cond1 || m == 0 {
            cond1 = s.mean;
            cond1_se = s.stderr;
        }
    }
    let per_trial = |k: usize| -> Summary {
        let xs: Vec<f64> = counts.iter().map(|c| c.iter().filter(|&&n| n >= k).count() as f64).collect();
        Summary::of(&xs)
    };
    let (s2, s3) = (per_trial(1), per_trial(2));
    ConditionsRow {
        side,
        sub_side: ell,
        boxes,
        trials,
        cond1,
        cond1_stderr: cond1_se,
        cond2: s2.mean,
        cond2_stderr: s2.stderr,
        cond3: s3.mean,
        cond3_stderr: s3.stderr,
    }
}

#[allow(clippy::too_many_arguments)]
pub fn limit_conditions_check(
    spec: &ModelSpec,
    energy: f64,
    iv: &Interval,
    sides: &[usize],
    a: f64,
    trials: usize,
    seed: u64,
    n_hat: f64,
) -> Result<ConditionsReport> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &l in sides {
        let ell = sub_box_side(l, a)?;
        let counts = sub_box_counts(spec, energy, iv, l, ell, trials, seed)?;
        rows.push(conditions_row(l, ell, &counts));
    }
    let target = n_hat * iv.width();
    let cond2_close = rows.last().is_some_and(|r| (r.cond2 - target).abs() <= 3.0 * r.cond2_stderr);
    Ok(ConditionsReport {
        energy,
        interval: *iv,
        a,
        n_hat,
        target,
        cond1_decreasing: rows.windows(2).all(|w| w[1].cond1 <= w[0].cond1 + w[1].cond1_stderr),
        cond3_decreasing: rows.windows(2).all(|w| w[1].cond3 <= w[0].cond3 + w[1].cond3_stderr),
        cond2_close,
        rows,
    })
}

/// Two-column `x y` text for external plotting.
pub fn write_two_column<W: Write>(mut w: W, header: &str, xs: &[f64], ys: &[f64]) -> Result<()> {
    writeln!(w, "# {header}")?;
    for (x, y) in xs.iter().zip(ys) {
        writeln!(w, "{} {}", fmt(*x), fmt(*y))?;
    }
    Ok(())
}

/// Empirical and reference count pmfs as two separate two-column blocks.
pub fn write_count_histogram<W: Write>(mut w: W, r: &PoissonTestReport) -> Result<()> {
    let ks: Vec<f64> = (0..r.pmf.len()).map(|k| k as f64).collect();
    write_two_column(&mut w, "k empirical_pmf", &ks, &r.pmf)?;
    writeln!(w)?;
    writeln!(w)?;
    write_two_column(&mut w, &format!("k poisson_pmf nu={}", fmt(r.nu)), &ks, &r.reference_pmf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SiteDistribution;

    #[test]
    fn rescaling_arithmetic() {
        let s = ProcessSample::from_eigenvalues(0, 0.5, 100.0, 5.0, &[0.5, 0.51, 0.6]);
        assert_eq!(s.points[0], 0.0);
        assert!((s.points[1] - 1.0).abs() < 1e-12);
        assert_eq!(s.points.len(), 2);
        assert!((s.successors[1].unwrap() - 9.0).abs() < 1e-9);
    }

    #[test]
    fn sub_box_rule() {
        assert_eq!(sub_box_side(400, 0.5).unwrap(), 20);
        assert_eq!(sub_box_side(128, 0.5).unwrap(), 8);
        assert_eq!(sub_box_side(256, 0.5).unwrap(), 16);
        assert_eq!(sub_box_side(512, 0.5).unwrap(), 16);
        assert!(sub_box_side(7, 0.5).is_err());
        assert!(sub_box_starts(1, 10, 3).is_err());
        assert_eq!(sub_box_starts(2, 4, 2).unwrap().len(), 4);
    }

    #[test]
    fn single_box_superposition_is_local() {
        let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(4.0));
        let a = local_process(&spec, 3.0, 5.0, 40, 20, 3).unwrap();
        let b = superposition_process_with_box(&spec, 3.0, 5.0, 40, 40, 20, 3).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn weights_bounded_and_paired() {
        let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(8.0));
        let th = restricted_process(&spec, 6.0, 5.0, 32, 2, 10, 1).unwrap();
        for s in &th {
            assert!(s.weights.iter().all(|&w| (0.0..=1.0).contains(&w)));
            assert!(s.weight(&[Interval::new(-5.0, 5.0).unwrap()]) <= s.points.len() as f64 + 1e-12);
        }
        assert!(restricted_process(&spec, 6.0, 5.0, 32, 1, 10, 1).is_err());
    }

    #[test]
    fn poisson_reference() {
        assert!((poisson_pmf(0, 1.0) - 0.36788).abs() < 1e-5);
        let e = synthetic_poisson(1.0, 2.0, 2000, 9).unwrap();
        let r = poisson_counts_test(&e, &[Interval::new(-0.5, 0.5).unwrap()], 1.0).unwrap();
        assert!(r.tv_distance < 0.05, "{}", r.verdict);
        assert!(poisson_counts_test(&e, &[], 0.0).is_err());
        let short = ProcessEnsemble::new("x", e.samples[..100].to_vec());
        assert!(matches!(poisson_counts_test(&short, &[Interval::new(0.0, 1.0).unwrap()], 1.0), Err(Error::InsufficientData { .. })));
    }

    #[test]
    fn empty_interval_conditions() {
        let counts = vec![vec![0usize; 4]; 10];
        let r = conditions_row(16, 4, &counts);
        assert_eq!((r.cond1, r.cond2, r.cond3), (0.0, 0.0, 0.0));
    }
}
