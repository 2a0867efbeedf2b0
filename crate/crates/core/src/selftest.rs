//! Deterministic property suites: rank-one interlacing, the counting
//! inequality under positive perturbations, trace convexity, counting and
//! IDS oracles, and worker-count independence of tabular output.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dos::{estimate_ids, free_lattice_ids};
use crate::ensemble::ModelSpec;
use crate::error::{Error, Result};
use crate::estimates::wegner_experiment;
use crate::model::{derive_seed, SiteDistribution};
use crate::operators::AssembledOperator;
use crate::pointprocess::local_process;
use crate::spectral::{count_many, eigen_full, Interval};

const MODULE: &str = "selftest";

/// Deliberate defects for checking that the suites notice them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    #[default]
    None,
    /// Report positive instead of negative inertia.
    InertiaSignFlip,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Seed that regenerates the failing case.
    pub case_seed: u64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub checks: usize,
    pub violations: usize,
    /// The first few violations.
    pub examples: Vec<Violation>,
    pub seconds: f64,
}

impl SuiteResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            cases: 0,
            checks: 0,
            violations: 0,
            examples: Vec::new(),
            seconds: 0.0,
        }
    }

    fn check(&mut self, ok: bool, case_seed: u64, detail: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.violations += 1;
            if self.examples.len() < 5 {
                self.examples.push(Violation {
                    case_seed,
                    detail: detail(),
                });
            }
        }
    }

    pub fn pass(&self) -> bool {
        self.violations == 0
    }
}

struct Rng(ChaCha8Rng);

impl Rng {
    fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    fn int(&mut self, lo: usize, hi_inclusive: usize) -> usize {
        lo + (self.0.next_u64() % (hi_inclusive - lo + 1) as u64) as usize
    }

    fn vector(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.range(-1.0, 1.0)).collect()
    }
}

fn counts(h: &AssembledOperator, es: &[f64], fault: Fault) -> Result<Vec<usize>> {
    let c = count_many(h, es)?;
    Ok(match fault {
        Fault::None => c,
        Fault::InertiaSignFlip => c.into_iter().map(|k| h.dim() - k).collect(),
    })
}

fn random_lattice(rng: &mut Rng, dim: usize, side: usize) -> Result<AssembledOperator> {
    let lambda = rng.range(0.5, 8.0);
    let spec = ModelSpec::lattice(dim, SiteDistribution::uniform(1.0).with_coupling(lambda));
    spec.realize(side, rng.0.next_u64(), 0)
}

/// `0 ≤ N(H ≤ c) − N(H + tφφᵀ ≤ c) ≤ 1` on random 1D lattice instances.
pub fn interlacing_suite(instances: usize, side: usize, thresholds: usize, seed: u64, fault: Fault) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut r = SuiteResult::new("rank-one interlacing");
    for k in 0..instances {
        let cs = derive_seed(seed, "interlacing", k as u64);
        let mut rng = Rng::new(cs);
        let h = random_lattice(&mut rng, 1, side)?;
        let mut phi = rng.vector(h.dim());
        let norm = phi.iter().map(|x| x * x).sum::<f64>().sqrt();
        phi.iter_mut().for_each(|x| *x /= norm);
        let t = rng.range(0.0, 10.0);
        let hp = h.add_rank_one_vector(&phi, t)?;
        let top = h.norm_bound() + 1.0;
        let es: Vec<f64> = (0..thresholds).map(|_| rng.range(-1.0, top)).collect();
        let c0 = counts(&h, &es, fault)?;
        let c1 = counts(&hp, &es, fault)?;
        for ((e, a), b) in es.iter().zip(c0).zip(c1) {
            let drop = a as i64 - b as i64;
            r.check((0..=1).contains(&drop), cs, || format!("t = {t}, c = {e}: drop {drop}"));
        }
        r.cases += 1;
    }
    r.seconds = start.elapsed().as_secs_f64();
    Ok(r)
}

fn random_psd(rng: &mut Rng, n: usize) -> DMatrix<f64> {
    let rank = rng.int(1, 3);
    let mut w = DMatrix::zeros(n, n);
    for _ in 0..rank {
        let v = nalgebra::DVector::from_vec(rng.vector(n));
        w += &v * v.transpose() * rng.range(0.0, 2.0) / n as f64;
    }
    w
}

/// `N(H + sW; (a, b]) ≤ [N(H ≤ b) − N(H + tW ≤ b)] + N(H + tW; (a, b])` for `W ⪰ 0`, `0 ≤ s ≤ t`.
pub fn key_lemma_suite(instances: usize, seed: u64, fault: Fault) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut r = SuiteResult::new("counting inequality under positive perturbation");
    for k in 0..instances {
        let cs = derive_seed(seed, "key-lemma", k as u64);
        let mut rng = Rng::new(cs);
        let side = rng.int(8, 40);
        let h = random_lattice(&mut rng, 1, side)?;
        let w = random_psd(&mut rng, h.dim());
        let t = rng.range(0.0, 10.0);
        let s = rng.range(0.0, t);
        let top = h.norm_bound() + 1.0;
        let (x, y) = (rng.range(-1.0, top), rng.range(-1.0, top));
        let (a, b) = (x.min(y), x.max(y));
        let hs = h.add_dense(&(&w * s), format!("sW s={s}"))?;
        let ht = h.add_dense(&(&w * t), format!("tW t={t}"))?;
        let n_hb = counts(&h, &[b], fault)?[0] as i64;
        let cs_ = counts(&hs, &[a, b], fault)?;
        let ct = counts(&ht, &[a, b], fault)?;
        let lhs = cs_[1] as i64 - cs_[0] as i64;
        let rhs = (n_hb - ct[1] as i64) + (ct[1] as i64 - ct[0] as i64);
        r.check(lhs <= rhs, cs, || format!("(a, b] = ({a}, {b}], s = {s}, t = {t}: {lhs} > {rhs}"));
        r.cases += 1;
    }
    r.seconds = start.elapsed().as_secs_f64();
    Ok(r)
}

/// `tr f(H₁)g(H₁)f(H₁) ≤ tr f(H₁)g(H₂)f(H₁)` for `H₂ = H₁ − W`, `W ⪰ 0`, `g = e^{−x}`.
pub fn convexity_suite(instances: usize, n: usize, seed: u64, tol: f64) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut r = SuiteResult::new("trace convexity");
    for k in 0..instances {
        let cs = derive_seed(seed, "convexity", k as u64);
        let mut rng = Rng::new(cs);
        let mut h1 = DMatrix::from_fn(n, n, |_, _| rng.range(-1.0, 1.0));
        h1 = (&h1 + h1.transpose()) * 0.5;
        let h2 = &h1 - random_psd(&mut rng, n) * (n as f64);
        let e1 = SymmetricEigen::new(h1);
        let e2 = SymmetricEigen::new(h2);
        let fv: Vec<f64> = rng.vector(n);
        let f = &e1.eigenvectors * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(fv.clone())) * e1.eigenvectors.transpose();
        let g2 = &e2.eigenvectors * DMatrix::from_diagonal(&e2.eigenvalues.map(|x| (-x).exp())) * e2.eigenvectors.transpose();
        let lhs: f64 = fv.iter().zip(e1.eigenvalues.iter()).map(|(f, l)| f * f * (-l).exp()).sum();
        let rhs = (&f * g2 * &f).trace();
        r.check(lhs <= rhs + tol, cs, || format!("{lhs} > {rhs}"));
        r.cases += 1;
    }
    r.seconds = start.elapsed().as_secs_f64();
    Ok(r)
}

/// Inertia counts against dense eigenvalues on random operators of dimension ≤ `max_dim`.
pub fn counting_oracle_suite(instances: usize, max_dim: usize, seed: u64, fault: Fault) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut r = SuiteResult::new("counting oracle");
    for k in 0..instances {
        let cs = derive_seed(seed, "count-oracle", k as u64);
        let mut rng = Rng::new(cs);
        let h = match k % 3 {
            0 | 1 => {
                let dim = k % 3 + 1;
                let side = rng_side(&mut rng, max_dim, dim);
                random_lattice(&mut rng, dim, side)?
            }
            _ => {
                let mesh = [0.5, 0.25, 0.125][rng.int(0, 2)];
                let max_side = ((max_dim as f64 * mesh) as usize).max(2);
                let side = 2 * rng.int(1, (max_side / 2).max(1));
                let spec = ModelSpec::continuum(
                    1,
                    mesh,
                    crate::operators::PeriodicPotential::Zero,
                    crate::operators::SingleSiteProfile::plateau(0.5, 0.5, 1.0),
                    SiteDistribution::uniform(1.0).with_coupling(rng.range(0.5, 4.0)),
                );
                spec.realize(side, rng.0.next_u64(), 0)?
            }
        };
        let ev = eigen_full(&h, false)?.values;
        let top = ev.last().copied().unwrap_or(0.0) + 1.0;
        let bottom = ev.first().copied().unwrap_or(0.0) - 1.0;
        for _ in 0..10 {
            let (x, y) = (rng.range(bottom, top), rng.range(bottom, top));
            let iv = Interval::new(x.min(y), x.max(y) + 1e-9)?;
            let c = counts(&h, &[iv.a(), iv.b()], fault)?;
            let got = c[1] as i64 - c[0] as i64;
            let want = ev.iter().filter(|&&l| iv.contains(l)).count() as i64;
            r.check(got == want, cs, || format!("dim {} on ({}, {}]: inertia {got}, dense {want}", h.dim(), iv.a(), iv.b()));
        }
        r.cases += 1;
    }
    r.seconds = start.elapsed().as_secs_f64();
    Ok(r)
}

fn rng_side(rng: &mut Rng, max_dim: usize, dim: usize) -> usize {
    let max_side = (max_dim as f64).powf(1.0 / dim as f64).floor() as usize;
    rng.int(2, max_side.max(2))
}

/// Free-lattice IDS against Fourier enumeration on `energies`, and `N(2) = 1/2`.
pub fn ids_oracle_suite(side: usize, energies: &[f64], fault: Fault) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut r = SuiteResult::new("free IDS oracle");
    let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(0.0));
    let curve = estimate_ids(&spec, energies, side, 1, 0)?;
    let h = spec.realize(side, 0, 0)?;
    for (e, v) in energies.iter().zip(&curve.values) {
        let v = match fault {
            Fault::None => *v,
            Fault::InertiaSignFlip => counts(&h, &[*e], fault)?[0] as f64 / side as f64,
        };
        let exact = free_lattice_ids(1, side, *e);
        r.check((v - exact).abs() <= 1e-12, 0, || format!("N({e}) = {v}, enumeration {exact}"));
    }
    if side % 4 == 2 {
        let half = counts(&h, &[2.0], fault)?[0] as f64 / side as f64;
        r.check(half == 0.5, 0, || format!("N(2) = {half}"));
    }
    r.cases = 1;
    r.seconds = start.elapsed().as_secs_f64();
    Ok(r)
}

fn with_workers<T: Send, F: FnOnce() -> T + Send>(workers: usize, f: F) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::state(MODULE, format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Tabular output of a few experiments at several worker counts, compared byte for byte.
pub fn determinism_suite(seed: u64, workers: &[usize]) -> Result<SuiteResult> {
    let start = Instant::now();
    let mut r = SuiteResult::new("worker-count determinism");
    let spec = ModelSpec::lattice(1, SiteDistribution::uniform(1.0).with_coupling(3.0));
    let ivs = [Interval::centered(2.5, 0.1)?, Interval::centered(3.0, 0.3)?];
    let run = || -> Result<Vec<Vec<u8>>> {
        let mut out = Vec::new();
        let mut a = Vec::new();
        wegner_experiment(&spec, &ivs, &[24, 40], 200, seed)?.write_csv(&mut a)?;
        out.push(a);
        let mut b = Vec::new();
        estimate_ids(&spec, &[0.5, 2.0, 3.5], 32, 64, seed)?.write_csv(&mut b)?;
        out.push(b);
        let mut c = Vec::new();
        local_process(&spec, 2.5, 5.0, 48, 64, seed)?.write_csv(&mut c)?;
        out.push(c);
        Ok(out)
    };
    let mut reference: Option<Vec<Vec<u8>>> = None;
    for &w in workers {
        let got = with_workers(w, run)??;
        if let Some(want) = &reference {
            for (k, (g, x)) in got.iter().zip(want).enumerate() {
                r.check(g == x, seed, || format!("output {k} differs with {w} workers"));
            }
        } else {
            reference = Some(got);
        }
        r.cases += 1;
    }
    r.seconds = start.elapsed().as_secs_f64();
    Ok(r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub suites: Vec<SuiteResult>,
    pub seconds: f64,
}

impl SelftestReport {
    pub fn pass(&self) -> bool {
        self.suites.iter().all(SuiteResult::pass)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.suites.iter().filter(|s| !s.pass()).map(|s| s.name.as_str()).collect()
    }
}

/// Every suite at its release size.
pub fn run_selftest(seed: u64, fault: Fault) -> Result<SelftestReport> {
    let start = Instant::now();
    let grid: Vec<f64> = (0..20).map(|k| -0.25 + 0.2237 * k as f64).collect();
    let suites = vec![
        interlacing_suite(1000, 40, 20, seed, fault)?,
        key_lemma_suite(500, seed, fault)?,
        convexity_suite(1000, 10, seed, 1e-10)?,
        counting_oracle_suite(500, 64, seed, fault)?,
        ids_oracle_suite(102, &grid, fault)?,
        determinism_suite(seed, &[1, 2])?,
    ];
    Ok(SelftestReport {
        suites,
        seconds: start.elapsed().as_secs_f64(),
    })
}
