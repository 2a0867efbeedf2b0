//! One function per experiment kind.

use anderson_core::dos::{density_from_curve, estimate_ids, lebesgue_point_scan, ScanOptions};
use anderson_core::ensemble::ModelSpec;
use anderson_core::estimates::{
    fixed_site_wegner, minami_experiment, simplicity_experiment, spectral_averaging_check, spectral_shift_experiment,
    wegner_experiment,
};
use anderson_core::localization::{localization_gate, GateResult};
use anderson_core::pointprocess::{
    limit_conditions_check, local_process, poisson_counts_test, spacing_test, superposition_process, write_count_histogram,
};
use anderson_core::report::EstimateReport;
use anderson_core::selftest::{run_selftest, Fault};
use anderson_core::Error;
use serde_json::{json, Value};

use crate::config::{intervals, Experiment, GateConfig, Resolved};
use crate::output::{cell_lines, selftest_summary, Artifacts};
use crate::Failure;

fn to_value<T: serde::Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("serializable")
}

fn estimate(out: &mut Artifacts, rep: EstimateReport) -> Result<(), Failure> {
    out.line(format!("{}: all bounded cells within 3 stderr: {}", rep.kind, rep.all_pass()));
    for l in cell_lines(&rep) {
        out.line(l);
    }
    for (k, v) in &rep.params {
        if v.is_number() || v.is_boolean() {
            out.line(format!("  {k} = {v}"));
        }
    }
    out.table("cells.csv", |b| rep.write_csv(b))?;
    out.result = to_value(&rep);
    Ok(())
}

/// Gate evidence, and whether the run has to stop here.
fn gate(out: &mut Artifacts, spec: &ModelSpec, energy: f64, g: &GateConfig, seed: u64, force: bool) -> Result<(GateResult, bool), Failure> {
    let res = localization_gate(spec, energy, &g.options(seed))?;
    out.line(format!("localization gate at ℰ = {energy}: {} ({})", res.pass, res.reason));
    out.table("gate_decay.csv", |b| res.decay.write_csv(b))?;
    let blocked = !res.pass && !force;
    if !res.pass {
        if force {
            out.notice("localization gate is false; continuing because of --force, the Poisson comparison has no localization backing");
        } else {
            out.notice("localization gate is false at this energy; Poisson run blocked (use --force to run anyway)");
        }
    }
    Ok((res, blocked))
}

pub fn execute(r: &Resolved, force: bool) -> Result<u8, Failure> {
    let c = &r.config;
    let mut out = Artifacts::new();
    let (trials, seed) = (r.trials, r.seed);
    if let Experiment::Selftest {} = c.experiment {
        let rep = run_selftest(seed, Fault::None)?;
        for l in selftest_summary(&rep).lines() {
            out.line(l);
        }
        out.result = to_value(&rep);
        let status = if rep.pass() { "pass" } else { "violations" };
        out.write(r, status)?;
        return Ok(if rep.pass() { 0 } else { 1 });
    }
    let spec = c.model_spec()?;
    let sides = c.sides()?;
    let side = c.side()?;
    match &c.experiment {
        Experiment::Wegner { intervals: iv } => {
            estimate(&mut out, wegner_experiment(&spec, &intervals(iv, "experiment.intervals")?, &sides, trials, seed)?)?
        }
        Experiment::Minami { intervals: iv } => {
            estimate(&mut out, minami_experiment(&spec, &intervals(iv, "experiment.intervals")?, &sides, trials, seed)?)?
        }
        Experiment::SpectralAveraging { intervals: iv, site } => estimate(
            &mut out,
            spectral_averaging_check(&spec, *site, &intervals(iv, "experiment.intervals")?, side, trials, seed)?,
        )?,
        Experiment::FixedSiteWegner { intervals: iv, site, tau } => estimate(
            &mut out,
            fixed_site_wegner(&spec, *site, *tau, &intervals(iv, "experiment.intervals")?, &sides, trials, seed)?,
        )?,
        Experiment::SpectralShift {
            site,
            b,
            delta,
            tau,
            k_w_hat,
        } => estimate(
            &mut out,
            spectral_shift_experiment(&spec, *site, *b, *delta, *tau, side, trials, seed, *k_w_hat)?,
        )?,
        Experiment::Simplicity { interval, q, gap_sample } => {
            let iv = intervals(&[*interval], "experiment.interval")?[0];
            estimate(&mut out, simplicity_experiment(&spec, &iv, *q, &sides, trials, seed, *gap_sample)?)?
        }
        Experiment::Poisson {
            energy,
            scan,
            window,
            sets,
            bandwidth,
            density_trials,
            superposition,
            gate: g,
        } => {
            let dt = density_trials.unwrap_or(trials);
            let mut scan_result = Value::Null;
            let e = match (energy, scan) {
                (Some(e), _) => *e,
                (None, Some(grid)) => {
                    let cands = lebesgue_point_scan(&spec, &grid.values(), side, dt, seed, &ScanOptions::default())?;
                    scan_result = to_value(&cands);
                    let best = cands.first().ok_or_else(|| {
                        Failure::runtime("dos: no energy of the scan grid has a stable density above the threshold (experiment.scan)")
                    })?;
                    out.line(format!("scan picked ℰ = {} (density spread {:.4})", best.energy, best.spread));
                    best.energy
                }
                (None, None) => unreachable!("validated"),
            };
            let (gres, blocked) = gate(&mut out, &spec, e, g, seed, force)?;
            if blocked {
                out.result = json!({ "energy": e, "scan": scan_result, "gate": gres });
                out.write(r, "gate-blocked")?;
                return Ok(4);
            }
            let d = anderson_core::dos::estimate_density(&spec, e, *bandwidth, side, dt, seed)?;
            if let Some(n) = &d.notice {
                out.notice(n.clone());
            }
            let w = window.unwrap_or(5.0 / d.n_hat);
            let b = intervals(sets, "experiment.sets")?;
            if b.iter().any(|i| i.a() < -w || i.b() > w) {
                return Err(Failure::validation(format!(
                    "pointprocess: invalid parameter `experiment.sets`: must lie inside the window [-{w}, {w}]"
                )));
            }
            let ens = local_process(&spec, e, w, side, trials, seed)?;
            if let Some(n) = &ens.notice {
                out.notice(n.clone());
            }
            let counts = poisson_counts_test(&ens, &b, d.n_hat)?;
            let gaps = match spacing_test(&ens, d.n_hat) {
                Ok(g) => Some(g),
                Err(Error::InsufficientData { reason, .. }) => {
                    out.notice(format!("spacing test skipped: {reason}"));
                    None
                }
                Err(e) => return Err(e.into()),
            };
            out.line(format!("ℰ = {e}, n̂ = {:.5} ± {:.5} (bandwidth {}), window W = {w:.4}", d.n_hat, d.stderr, d.bandwidth));
            out.line(format!(
                "counts in B: mean {:.4} ± {:.4} vs n̂|B| = {:.4}; TV {:.4}; χ² {:.3} on {} dof, p = {:.4}; {}",
                counts.mean_count, counts.mean_count_stderr, counts.nu, counts.tv_distance, counts.chi_square.statistic,
                counts.chi_square.dof, counts.chi_square.p_value, counts.verdict
            ));
            if let Some(g) = &gaps {
                out.line(format!(
                    "spacings: KS {:.4} vs 5% critical {:.4} over {} gaps; scaled median {:.4} (exponential {:.4})",
                    g.ks, g.critical_5, g.gaps, g.scaled_median, g.reference_median
                ));
            }
            let mut sup = Value::Null;
            if let Some(a) = superposition {
                let st = superposition_process(&spec, e, w, side, *a, trials, seed)?;
                let x: Vec<f64> = ens.counts(&b).iter().map(|&k| k as f64).collect();
                let y: Vec<f64> = st.counts(&b).iter().map(|&k| k as f64).collect();
                let diff: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p - q).collect();
                let s = anderson_core::stats::Summary::of(&diff);
                out.line(format!("superposition (a = {a}): E ξ(B) − E ξ̃(B) = {:.4} ± {:.4}", s.mean, s.stderr));
                sup = json!({ "a": a, "difference": s.mean, "stderr": s.stderr });
                out.table("superposition_points.csv", |buf| st.write_csv(buf))?;
            }
            out.table("points.csv", |buf| ens.write_csv(buf))?;
            out.table("count_histogram.dat", |buf| write_count_histogram(buf, &counts))?;
            out.result = json!({
                "energy": e,
                "density": d,
                "window": w,
                "scan": scan_result,
                "gate": gres,
                "counts": counts,
                "spacings": gaps,
                "superposition": sup,
            });
        }
        Experiment::Conditions {
            energy,
            interval,
            a,
            bandwidth,
            gate: g,
        } => {
            let (gres, blocked) = gate(&mut out, &spec, *energy, g, seed, force)?;
            if blocked {
                out.result = json!({ "energy": energy, "gate": gres });
                out.write(r, "gate-blocked")?;
                return Ok(4);
            }
            let d = anderson_core::dos::estimate_density(&spec, *energy, *bandwidth, side, trials, seed)?;
            let iv = intervals(&[*interval], "experiment.interval")?[0];
            let rep = limit_conditions_check(&spec, *energy, &iv, &sides, *a, trials, seed, d.n_hat)?;
            for row in &rep.rows {
                out.line(format!(
                    "L {} ℓ {} ({} boxes): cond1 {:.4} ± {:.4}  cond2 {:.4} ± {:.4}  cond3 {:.4} ± {:.4}",
                    row.side, row.sub_side, row.boxes, row.cond1, row.cond1_stderr, row.cond2, row.cond2_stderr, row.cond3,
                    row.cond3_stderr
                ));
            }
            out.line(format!(
                "n̂|I| = {:.4}; cond1 decreasing {}, cond3 decreasing {}, cond2 within 3 stderr {}",
                rep.target, rep.cond1_decreasing, rep.cond3_decreasing, rep.cond2_close
            ));
            let mut buf = Vec::new();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(["side", "sub_side", "boxes", "trials", "cond1", "cond1_stderr", "cond2", "cond2_stderr", "cond3", "cond3_stderr"])
                    .map_err(|e| Failure::runtime(format!("csv: {e}")))?;
                for row in &rep.rows {
                    w.write_record([
                        row.side.to_string(),
                        row.sub_side.to_string(),
                        row.boxes.to_string(),
                        row.trials.to_string(),
                        anderson_core::report::fmt(row.cond1),
                        anderson_core::report::fmt(row.cond1_stderr),
                        anderson_core::report::fmt(row.cond2),
                        anderson_core::report::fmt(row.cond2_stderr),
                        anderson_core::report::fmt(row.cond3),
                        anderson_core::report::fmt(row.cond3_stderr),
                    ])
                    .map_err(|e| Failure::runtime(format!("csv: {e}")))?;
                }
                w.flush()?;
            }
            out.tables.push(("conditions.csv".into(), buf));
            out.result = json!({ "density": d, "gate": gres, "conditions": rep });
        }
        Experiment::Dos {
            grid,
            density_at,
            bandwidth,
        } => {
            let mut energies = grid.values();
            for &e in density_at {
                energies.push(e - bandwidth / 2.0);
                energies.push(e + bandwidth / 2.0);
            }
            energies.sort_by(|a, b| a.total_cmp(b));
            energies.dedup();
            let curve = estimate_ids(&spec, &energies, side, trials, seed)?;
            let mut dens = Vec::new();
            for &e in density_at {
                let d = density_from_curve(&curve, e, *bandwidth)?;
                out.line(format!("n̂({e}) = {:.5} ± {:.5} (bandwidth {})", d.n_hat, d.stderr, d.bandwidth));
                dens.push(d);
            }
            out.line(format!("IDS on {} energies, L = {side}, {trials} trials", energies.len()));
            out.table("ids.csv", |b| curve.write_csv(b))?;
            out.result = json!({ "ids": curve, "densities": dens });
        }
        Experiment::Localize { energy, gate: g } => {
            let mut opts = g.options(seed);
            opts.trials = trials;
            let res = localization_gate(&spec, *energy, &opts)?;
            out.line(format!("localization gate at ℰ = {energy}: {}", res.pass));
            out.line(format!("  {}", res.reason));
            out.table("decay.csv", |b| res.decay.write_csv(b))?;
            out.result = to_value(&res);
        }
        Experiment::Selftest {} => unreachable!(),
    }
    out.write(r, "ok")?;
    Ok(0)
}
