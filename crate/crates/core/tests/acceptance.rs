//! Desk-scale acceptance run: one PASS/FAIL line per criterion.
//!
//! `ANDERSON_ACCEPTANCE_ONLY=8,9` restricts the run to the listed criteria.
//! `ANDERSON_ACCEPTANCE_STRICT=1` turns any FAIL into a nonzero exit status.

use anderson_core::dos::{estimate_density, lebesgue_point_scan, ScanOptions};
use anderson_core::ensemble::ModelSpec;
use anderson_core::estimates::{minami_report, simplicity_experiment, spectral_averaging_check, count_table, wegner_report};
use anderson_core::localization::{fractional_moment_decay, localization_gate, GateOptions};
use anderson_core::pointprocess::{
    limit_conditions_check, local_process, poisson_counts_test, spacing_test, superposition_process, sub_box_side,
};
use anderson_core::selftest::{
    convexity_suite, counting_oracle_suite, determinism_suite, ids_oracle_suite, interlacing_suite, key_lemma_suite, Fault,
    SuiteResult,
};
use anderson_core::stats::Summary;
use anderson_core::{Interval, SiteDistribution};
use num_complex::Complex64;
use std::time::{Duration, Instant};

const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn suite(r: anderson_core::Result<SuiteResult>) -> Outcome {
    match r {
        Ok(s) => {
            let mut d = format!("{} cases, {} checks, {} violations", s.cases, s.checks, s.violations);
            if let Some(v) = s.examples.first() {
                d.push_str(&format!("; first: {} (case seed {})", v.detail, v.case_seed));
            }
            outcome(s.pass(), d)
        }
        Err(e) => outcome(false, format!("error: {e}")),
    }
}

fn lattice(lambda: f64) -> ModelSpec {
    ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(lambda))
}

/// State shared by the point-process criteria.
struct Poisson {
    energy: f64,
    n_hat: f64,
    window: f64,
}

fn wegner_minami(minami: bool) -> Outcome {
    let r = (|| -> anderson_core::Result<Outcome> {
        let spec = lattice(1.0);
        let ivs = [Interval::centered(2.0, 0.01)?, Interval::centered(2.0, 0.05)?];
        let table = count_table(&spec, &ivs, &[100], 2000, SEED)?;
        if !minami {
            let w = wegner_report(&spec, &table, SEED);
            let cells: Vec<String> = w
                .per_cell
                .iter()
                .map(|c| format!("{:.4}±{:.4} ≤ {:.4}", c.estimate, c.stderr, c.bound.unwrap_or(f64::NAN)))
                .collect();
            return Ok(outcome(w.all_pass(), format!("E[N(I)]: {}", cells.join(", "))));
        }
        let m = minami_report(&spec, &table, SEED);
        // one volume, so the first entry of the per-volume slopes
        let first = |k: &str| m.params.get(k).and_then(|v| v.get(0)).and_then(|v| v.as_f64());
        let slope = first("width_slope");
        let se = first("width_slope_se").unwrap_or(f64::NAN);
        let slope_ok = slope.is_some_and(|s| (s - 2.0).abs() <= 0.3);
        let cells: Vec<String> = m
            .per_cell
            .iter()
            .map(|c| format!("{:.5}±{:.5} ≤ {:.5}", c.estimate, c.stderr, c.bound.unwrap_or(f64::NAN)))
            .collect();
        Ok(outcome(
            m.all_pass() && slope_ok,
            format!(
                "E[N(N-1)]: {}; width slope {:.3} ± {:.3} (accepted 2 ± 0.3)",
                cells.join(", "),
                slope.unwrap_or(f64::NAN),
                se
            ),
        ))
    })();
    r.unwrap_or_else(|e| outcome(false, format!("error: {e}")))
}

fn spectral_averaging() -> Outcome {
    let r = (|| -> anderson_core::Result<Outcome> {
        let spec = lattice(1.0);
        let ivs = [Interval::centered(2.0, 0.05)?, Interval::centered(2.0, 0.1)?];
        let rep = spectral_averaging_check(&spec, 0, &ivs, 64, 2000, SEED)?;
        let cells: Vec<String> = rep
            .per_cell
            .iter()
            .map(|c| format!("{:.5}±{:.5} ≤ {:.3}", c.estimate, c.stderr, c.bound.unwrap_or(f64::NAN)))
            .collect();
        Ok(outcome(rep.all_pass(), cells.join(", ")))
    })();
    r.unwrap_or_else(|e| outcome(false, format!("error: {e}")))
}

fn choose_energy() -> anderson_core::Result<(Poisson, String)> {
    let spec = lattice(8.0);
    let energies: Vec<f64> = (0..17).map(|k| 2.0 + 0.5 * k as f64).collect();
    let cands = lebesgue_point_scan(&spec, &energies, 512, 400, SEED, &ScanOptions::default())?;
    let best = cands.first().ok_or_else(|| anderson_core::Error::Io("no stable energy in the scan".into()))?;
    let energy = best.energy;
    let d = estimate_density(&spec, energy, 0.2, 512, 4000, SEED)?;
    let poisson = Poisson {
        energy,
        n_hat: d.n_hat,
        window: 5.0 / d.n_hat,
    };
    let note = format!("ℰ = {energy} (spread {:.3}), n̂ = {:.4} ± {:.4}", best.spread, d.n_hat, d.stderr);
    Ok((poisson, note))
}

fn poisson_statistics(p: &Poisson, note: &str) -> Outcome {
    let r = (|| -> anderson_core::Result<Outcome> {
        let spec = lattice(8.0);
        let b = [Interval::new(-2.0, 2.0)?];
        let gate = localization_gate(&spec, p.energy, &GateOptions { seed: SEED, ..Default::default() })?;
        let ens = local_process(&spec, p.energy, p.window, 512, 500, SEED)?;
        let counts = poisson_counts_test(&ens, &b, p.n_hat)?;
        let gaps = spacing_test(&ens, p.n_hat)?;
        let ok = gate.pass && p.n_hat >= 0.05 && counts.tv_distance < 0.1 && gaps.ks < gaps.critical_5;

        // free model at the middle of its band
        let free = lattice(0.0);
        let e0 = 2.0;
        let d0 = estimate_density(&free, e0, 0.2, 512, 1, SEED)?;
        let ens0 = local_process(&free, e0, 5.0 / d0.n_hat, 512, 500, SEED)?;
        let counts0 = poisson_counts_test(&ens0, &b, d0.n_hat)?;
        let gaps0 = spacing_test(&ens0, d0.n_hat)?;
        let free_rejected = counts0.tv_distance >= 0.1 && gaps0.ks >= gaps0.critical_5;
        Ok(outcome(
            ok && free_rejected,
            format!(
                "{note}; gate {}; TV {:.4} (< 0.1), χ² p {:.3}; KS {:.4} vs {:.4} over {} gaps; free model: TV {:.3}, KS {:.3} vs {:.3} ({})",
                gate.pass,
                counts.tv_distance,
                counts.chi_square.p_value,
                gaps.ks,
                gaps.critical_5,
                gaps.gaps,
                counts0.tv_distance,
                gaps0.ks,
                gaps0.critical_5,
                if free_rejected { "rejected" } else { "NOT rejected" }
            ),
        ))
    })();
    r.unwrap_or_else(|e| outcome(false, format!("error: {e}")))
}

fn superposition(p: &Poisson) -> Outcome {
    let r = (|| -> anderson_core::Result<Outcome> {
        let spec = lattice(8.0);
        let b = [Interval::new(-2.0, 2.0)?];
        let mut rows = Vec::new();
        for side in [128usize, 256, 512] {
            let local = local_process(&spec, p.energy, p.window, side, 500, SEED)?.counts(&b);
            let sup = superposition_process(&spec, p.energy, p.window, side, 0.5, 500, SEED)?.counts(&b);
            let diff: Vec<f64> = local.iter().zip(&sup).map(|(&x, &y)| x as f64 - y as f64).collect();
            let xs: Vec<f64> = local.iter().map(|&x| x as f64).collect();
            let d = Summary::of(&diff);
            rows.push((side, sub_box_side(side, 0.5)?, d.mean.abs(), d.stderr, Summary::of(&xs).mean));
        }
        let nonincreasing = rows.windows(2).all(|w| w[1].2 <= w[0].2 + (w[0].3.powi(2) + w[1].3.powi(2)).sqrt());
        let last = rows.last().unwrap();
        let small = last.2 < 0.1 * last.4;
        let text: Vec<String> =
            rows.iter().map(|r| format!("L={} ℓ={}: |Δ| {:.4}±{:.4} (E ξ {:.3})", r.0, r.1, r.2, r.3, r.4)).collect();
        Ok(outcome(nonincreasing && small, text.join("; ")))
    })();
    r.unwrap_or_else(|e| outcome(false, format!("error: {e}")))
}

fn three_conditions(p: &Poisson) -> Outcome {
    let r = (|| -> anderson_core::Result<Outcome> {
        let spec = lattice(8.0);
        let iv = Interval::new(-2.0, 2.0)?;
        let rep = limit_conditions_check(&spec, p.energy, &iv, &[128, 256, 512], 0.5, 500, SEED, p.n_hat)?;
        let last = rep.rows.last().unwrap();
        let ok = last.cond1 < 0.05 && last.cond3 < 0.02 && rep.cond2_close;
        Ok(outcome(
            ok,
            format!(
                "L={}: cond1 {:.4} (< 0.05), cond3 {:.4}±{:.4} (< 0.02), cond2 {:.3}±{:.3} vs n̂|I| {:.3}",
                last.side, last.cond1, last.cond3, last.cond3_stderr, last.cond2, last.cond2_stderr, rep.target
            ),
        ))
    })();
    r.unwrap_or_else(|e| outcome(false, format!("error: {e}")))
}

fn simplicity() -> Outcome {
    let r = (|| -> anderson_core::Result<Outcome> {
        let spec = lattice(16.0);
        let iv = Interval::new(4.0, 16.0)?;
        let rep = simplicity_experiment(&spec, &iv, 3.0, &[128, 256, 512], 300_000, SEED, 1000)?;
        let dec = rep.params.get("strictly_decreasing").and_then(|v| v.as_bool()).unwrap_or(false);
        let slope = rep.get_f64("loglog_slope");
        let ok = dec && slope.is_some_and(|s| s <= -0.5);
        let ps: Vec<String> = rep.per_cell.iter().map(|c| format!("{:.3e}±{:.1e}", c.estimate, c.stderr)).collect();
        Ok(outcome(
            ok,
            format!("P(min gap < L^-3) = {}; slope {:.3} (≤ -0.5)", ps.join(", "), slope.unwrap_or(f64::NAN)),
        ))
    })();
    r.unwrap_or_else(|e| outcome(false, format!("error: {e}")))
}

fn localization() -> Outcome {
    let r = (|| -> anderson_core::Result<Outcome> {
        let seps = [4usize, 8, 16, 32];
        let strong = fractional_moment_decay(&lattice(8.0), Complex64::new(6.0, 1e-3), 0.2, &seps, 256, 200, SEED)?;
        let control = fractional_moment_decay(&lattice(0.0), Complex64::new(2.0, 1e-3), 0.2, &seps, 256, 200, SEED)?;
        let strong_ok = strong.rate > 3.0 * strong.rate_se && strong.fit.r2 >= 0.9;
        let control_ok = control.rate.abs() < 3.0 * control.rate_se;
        Ok(outcome(
            strong_ok && control_ok,
            format!(
                "λ=8: rate {:.4} ± {:.4}, R² {:.4}; λ=0: rate {:.3e} ± {:.3e} (|rate| < 3σ: {})",
                strong.rate, strong.rate_se, strong.fit.r2, control.rate, control.rate_se, control_ok
            ),
        ))
    })();
    r.unwrap_or_else(|e| outcome(false, format!("error: {e}")))
}

fn main() {
    let only: Option<Vec<usize>> = std::env::var("ANDERSON_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let strict = std::env::var("ANDERSON_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let want = |k: usize| only.as_ref().is_none_or(|o| o.contains(&k));
    let mut failures = 0usize;
    let mut report = |k: usize, name: &str, limit: Duration, started: Instant, o: Outcome| {
        let took = started.elapsed();
        let pass = o.pass && took <= limit;
        if !pass {
            failures += 1;
        }
        println!(
            "{} #{k} {name}: {} [{:.1} s, limit {} s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    };
    let min = |m: u64| Duration::from_secs(60 * m);
    if want(1) {
        let t = Instant::now();
        report(1, "rank-one interlacing", Duration::from_secs(30), t, suite(interlacing_suite(1000, 40, 20, SEED, Fault::None)));
    }
    if want(2) {
        let t = Instant::now();
        report(2, "key lemma", Duration::from_secs(30), t, suite(key_lemma_suite(500, SEED, Fault::None)));
    }
    if want(3) {
        let t = Instant::now();
        report(3, "trace convexity", Duration::from_secs(10), t, suite(convexity_suite(1000, 10, SEED, 1e-10)));
    }
    if want(4) {
        let t = Instant::now();
        report(4, "counting oracle", Duration::from_secs(60), t, suite(counting_oracle_suite(500, 64, SEED, Fault::None)));
    }
    if want(5) {
        let t = Instant::now();
        report(5, "lattice Wegner", min(5), t, wegner_minami(false));
    }
    if want(6) {
        let t = Instant::now();
        report(6, "lattice Minami", min(10), t, wegner_minami(true));
    }
    if want(7) {
        let t = Instant::now();
        report(7, "spectral averaging", min(5), t, spectral_averaging());
    }
    if want(8) || want(9) || want(10) {
        // #8 to #10 share one energy choice and one time budget
        let t = Instant::now();
        match choose_energy() {
            Ok((p, note)) => {
                if want(8) {
                    report(8, "Poisson statistics", min(30), t, poisson_statistics(&p, &note));
                }
                if want(9) {
                    report(9, "superposition closeness", min(30), t, superposition(&p));
                }
                if want(10) {
                    report(10, "three conditions", min(30), t, three_conditions(&p));
                }
            }
            Err(e) => {
                for (k, name) in [(8, "Poisson statistics"), (9, "superposition closeness"), (10, "three conditions")] {
                    if want(k) {
                        report(k, name, min(30), t, outcome(false, format!("energy choice failed: {e}")));
                    }
                }
            }
        }
    }
    if want(11) {
        let t = Instant::now();
        report(11, "simplicity scaling", min(20), t, simplicity());
    }
    if want(12) {
        let t = Instant::now();
        report(12, "localization diagnostic", min(10), t, localization());
    }
    if want(13) {
        let t = Instant::now();
        let grid: Vec<f64> = (0..20).map(|k| -0.25 + 0.2237 * k as f64).collect();
        let mut o = suite(ids_oracle_suite(102, &grid, Fault::None));
        o.detail.push_str(", including N(2) = 1/2 at L = 102");
        report(13, "free IDS exactness", Duration::from_secs(10), t, o);
    }
    if want(14) {
        let t = Instant::now();
        report(14, "worker-count determinism", min(5), t, suite(determinism_suite(SEED, &[1, 2, 3])));
    }
    println!("{failures} criteria failed");
    if strict && failures > 0 {
        std::process::exit(1);
    }
}
