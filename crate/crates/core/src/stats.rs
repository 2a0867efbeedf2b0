//! Small statistics toolkit: compensated sums, summaries, regressions and
//! goodness-of-fit statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::error::{Error, Result};

const MODULE: &str = "stats";

/// Neumaier-compensated sum in iteration order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut s = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Mean, sample standard deviation and standard error of the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub stderr: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                n,
                mean: f64::NAN,
                std: f64::NAN,
                stderr: f64::NAN,
            };
        }
        let mean = compensated_sum(xs.iter().cloned()) / n as f64;
        let var = if n > 1 {
            compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64
        } else {
            0.0
        };
        let std = var.sqrt();
        Self {
            n,
            mean,
            std,
            stderr: std / (n as f64).sqrt(),
        }
    }
}

/// Straight-line fit `y = intercept + slope x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r2: f64,
    /// Weighted residual sum of squares divided by `n − 2` (1 when unweighted).
    pub reduced_chi2: f64,
}

/// Least-squares line through `(x, y)`, weighted by `1/σ²` when `sigma` is
/// given. With weights, parameter errors are scaled by `max(1, χ²_red)` so
/// that an under-dispersed model never looks more certain than its scatter.
/// Zero or missing σ fall back to ordinary least squares with residual-based
/// errors.
pub fn linear_fit(x: &[f64], y: &[f64], sigma: Option<&[f64]>) -> Result<LinearFit> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return Err(Error::insufficient(MODULE, "linear fit needs at least 3 points"));
    }
    let weighted = match sigma {
        Some(s) if s.len() == n && s.iter().all(|&v| v > 0.0 && v.is_finite()) => Some(s),
        _ => None,
    };
    let w: Vec<f64> = match weighted {
        Some(s) => s.iter().map(|v| 1.0 / (v * v)).collect(),
        None => vec![1.0; n],
    };
    let sw = compensated_sum(w.iter().cloned());
    let xm = compensated_sum(w.iter().zip(x).map(|(w, x)| w * x)) / sw;
    let ym = compensated_sum(w.iter().zip(y).map(|(w, y)| w * y)) / sw;
    let sxx = compensated_sum(w.iter().zip(x).map(|(w, x)| w * (x - xm) * (x - xm)));
    let sxy = compensated_sum(w.iter().zip(x).zip(y).map(|((w, x), y)| w * (x - xm) * (y - ym)));
    let syy = compensated_sum(w.iter().zip(y).map(|(w, y)| w * (y - ym) * (y - ym)));
    if sxx <= 0.0 {
        return Err(Error::insufficient(MODULE, "abscissae are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss = compensated_sum(
        w.iter()
            .zip(x)
            .zip(y)
            .map(|((w, x), y)| w * (y - intercept - slope * x).powi(2)),
    );
    let dof = (n - 2) as f64;
    let reduced = rss / dof;
    let scale = if weighted.is_some() { reduced.max(1.0) } else { reduced };
    let slope_var = scale / sxx;
    let intercept_var = scale * (1.0 / sw + xm * xm / sxx);
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        slope_se: slope_var.sqrt(),
        intercept_se: intercept_var.sqrt(),
        r2,
        reduced_chi2: if weighted.is_some() { reduced } else { 1.0 },
    })
}

pub fn poisson_pmf(k: u64, nu: f64) -> f64 {
    if nu <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    Poisson::new(nu).map(|p| p.pmf(k)).unwrap_or(0.0)
}

/// Kolmogorov–Smirnov distance between the sample and `Exp(rate)`.
pub fn ks_exponential(samples: &[f64], rate: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = 1.0 - (-rate * x.max(0.0)).exp();
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic 5% critical value of the one-sample KS statistic.
pub fn ks_critical_5(n: usize) -> f64 {
    1.358 / (n as f64).sqrt()
}

/// Total-variation distance between an empirical pmf and `Poisson(ν)`.
pub fn tv_distance_poisson(pmf: &[f64], nu: f64) -> f64 {
    let mut acc = 0.0;
    let mut ref_mass = 0.0;
    for (k, &p) in pmf.iter().enumerate() {
        let q = poisson_pmf(k as u64, nu);
        ref_mass += q;
        acc += (p - q).abs();
    }
    // reference mass beyond the observed support
    acc += (1.0 - ref_mass).max(0.0);
    0.5 * acc
}

/// Pearson χ² of observed counts `obs[k]` (over `n` trials) against
/// `Poisson(ν)`, pooling cells from both tails until every expected count is
/// at least 5.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    pub cells: usize,
}

pub fn chi_square_poisson(obs: &[u64], nu: f64) -> Result<ChiSquareResult> {
    let n: u64 = obs.iter().sum();
    if n == 0 {
        return Err(Error::insufficient(MODULE, "no observations"));
    }
    let nf = n as f64;
    // cells: [0], [1], ..., the last one absorbing the upper tail
    let kmax = obs.len().max((nu + 10.0 * nu.sqrt() + 10.0) as usize);
    let mut exp: Vec<f64> = (0..kmax).map(|k| nf * poisson_pmf(k as u64, nu)).collect();
    let tail = nf - compensated_sum(exp.iter().cloned());
    *exp.last_mut().unwrap() += tail.max(0.0);
    let mut o: Vec<f64> = (0..kmax).map(|k| obs.get(k).copied().unwrap_or(0) as f64).collect();
    let extra: u64 = obs.iter().skip(kmax).sum();
    *o.last_mut().unwrap() += extra as f64;
    // pool from the upper tail downwards, then the lower tail upwards
    let mut cells: Vec<(f64, f64)> = o.into_iter().zip(exp).collect();
    while cells.len() > 1 && cells.last().unwrap().1 < 5.0 {
        let (lo, le) = cells.pop().unwrap();
        let last = cells.last_mut().unwrap();
        last.0 += lo;
        last.1 += le;
    }
    while cells.len() > 1 && cells[0].1 < 5.0 {
        let (fo, fe) = cells.remove(0);
        cells[0].0 += fo;
        cells[0].1 += fe;
    }
    let statistic = compensated_sum(cells.iter().map(|(o, e)| (o - e) * (o - e) / e));
    let dof = cells.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).map(|c| c.cdf(statistic)).unwrap_or(0.0)
    };
    Ok(ChiSquareResult {
        statistic,
        dof,
        p_value,
        cells: cells.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(compensated_sum(xs), 2.0);
    }

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = linear_fit(&x, &y, None).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14 && (f.intercept + 1.0).abs() < 1e-14);
        assert!(f.r2 > 0.999_999);
    }

    #[test]
    fn poisson_reference() {
        assert!((poisson_pmf(0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((poisson_pmf(0, 1.0) - 0.36788).abs() < 1e-5);
    }

    #[test]
    fn ks_of_exact_quantiles_is_small() {
        let n = 1000;
        let s: Vec<f64> = (0..n).map(|i| -((1.0 - (i as f64 + 0.5) / n as f64) as f64).ln()).collect();
        assert!(ks_exponential(&s, 1.0) < 0.001);
        assert!((2f64.ln() - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn chi_square_perfect_fit() {
        let nu = 2.0;
        let obs: Vec<u64> = (0..12).map(|k| (1e5 * poisson_pmf(k, nu)).round() as u64).collect();
        let r = chi_square_poisson(&obs, nu).unwrap();
        assert!(r.p_value > 0.5, "{r:?}");
    }
}
