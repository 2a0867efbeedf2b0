//! Eigenvalues, inertia counts, spectral projections and resolvent blocks.
//!
//! Counting uses Sylvester inertia of `H − E`: banded `LDLᵀ` for assembled
//! torus operators (reordered so periodic wrap stays inside the band) and a
//! Bunch–Kaufman factorization for dense operators. Interior eigenvalues are
//! obtained by spectrum slicing on top of the same counts.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dense_inertia, BandSym, Inertia};
use crate::operators::{AssembledOperator, OperatorMatrix};
use crate::stats::compensated_sum;

const MODULE: &str = "spectral";

pub const DEFAULT_DENSE_LIMIT: usize = 4096;

/// Half-open interval `(a, b]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    a: f64,
    b: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a < b) || a.is_nan() || b.is_nan() {
            return Err(Error::param(MODULE, "interval", format!("need a < b, got ({a}, {b}]")));
        }
        Ok(Self { a, b })
    }

    /// `(centre − width/2, centre + width/2]`.
    pub fn centered(centre: f64, width: f64) -> Result<Self> {
        Self::new(centre - width / 2.0, centre + width / 2.0)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    pub fn contains(&self, x: f64) -> bool {
        self.a < x && x <= self.b
    }

    pub fn is_subset_of(&self, other: &Interval) -> bool {
        other.a <= self.a && self.b <= other.b
    }
}

/// Sorted eigenvalues, optionally with orthonormal eigenvectors as columns.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
    pub source_hash: String,
}

impl Spectrum {
    pub fn count_in(&self, i: &Interval) -> usize {
        self.values.iter().filter(|&&v| i.contains(v)).count()
    }

    /// One eigenvalue per line.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["eigenvalue"])?;
        for v in &self.values {
            wr.write_record([format!("{v:.17e}")])?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Full eigendecomposition with the default dense limit.
pub fn eigen_full(h: &AssembledOperator, vectors: bool) -> Result<Spectrum> {
    eigen_full_limited(h, vectors, DEFAULT_DENSE_LIMIT)
}

pub fn eigen_full_limited(h: &AssembledOperator, vectors: bool, limit: usize) -> Result<Spectrum> {
    let n = h.dim();
    if n > limit {
        return Err(Error::Size { dim: n, limit });
    }
    let m = h.to_dense();
    let (values, vecs) = if vectors {
        let e = SymmetricEigen::new(m);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
        let values: Vec<f64> = idx.iter().map(|&i| e.eigenvalues[i]).collect();
        let cols: Vec<DVector<f64>> = idx.iter().map(|&i| e.eigenvectors.column(i).into_owned()).collect();
        (values, Some(DMatrix::from_columns(&cols)))
    } else {
        let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().cloned().collect();
        v.sort_by(|a, b| a.total_cmp(b));
        (v, None)
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric(MODULE, "eigensolver produced non-finite values"));
    }
    Ok(Spectrum {
        values,
        vectors: vecs,
        source_hash: h.hash(),
    })
}

fn dense_count(m: &DMatrix<f64>, e: f64, nudge: f64) -> Inertia {
    let r = dense_inertia(m, e);
    if r.tiny_pivot {
        dense_inertia(m, e + nudge)
    } else {
        r
    }
}

/// Numbers of eigenvalues `≤ E` for every `E` in `es`.
///
/// Band counts whose elimination met a pivot small enough to spoil the rest
/// are recomputed under a second ordering, then by a Sturm count on a cached
/// orthogonally similar tridiagonal form. Dense operators use Bunch–Kaufman;
/// an exactly zero dense pivot triggers one retry at `E + 10⁻¹²‖H‖`. A pivot
/// that is still zero is counted as negative, which attributes an eigenvalue
/// sitting on `E` to `(−∞, E]`.
pub fn count_many(h: &AssembledOperator, es: &[f64]) -> Result<Vec<usize>> {
    if es.iter().any(|e| !e.is_finite()) {
        return Err(Error::param(MODULE, "E", "energies must be finite"));
    }
    let nudge = 1e-12 * h.norm_bound().max(1.0);
    let out: Vec<Inertia> = match h.matrix() {
        OperatorMatrix::Dense(m) => es.iter().map(|&e| dense_count(m, e, nudge)).collect(),
        OperatorMatrix::Sparse(s) => {
            let mut out = s.band().inertia_many(es);
            let bad: Vec<usize> = (0..es.len()).filter(|&k| out[k].tiny_pivot || out[k].non_finite).collect();
            if !bad.is_empty() {
                let shifted: Vec<f64> = bad.iter().map(|&k| es[k]).collect();
                let alt = s.alternate_band().inertia_many(&shifted);
                let mut still = Vec::new();
                for (&k, r) in bad.iter().zip(alt) {
                    if r.tiny_pivot || r.non_finite {
                        still.push((k, r));
                    } else {
                        out[k] = r;
                    }
                }
                if !still.is_empty() {
                    if h.dim() <= DEFAULT_DENSE_LIMIT {
                        let t = s.tridiagonal();
                        for (k, _) in still {
                            out[k] = t.negative_count(es[k]);
                        }
                    } else {
                        for (k, r) in still {
                            out[k] = r;
                        }
                    }
                }
            }
            out
        }
    };
    out.iter()
        .zip(es)
        .map(|(r, e)| {
            if r.non_finite {
                Err(Error::numeric(MODULE, format!("non-finite pivot in the inertia count at E = {e}")))
            } else {
                Ok(r.negative)
            }
        })
        .collect()
}

/// Number of eigenvalues `≤ E`.
pub fn count_at_most(h: &AssembledOperator, e: f64) -> Result<usize> {
    Ok(count_many(h, &[e])?[0])
}

/// `N(I) = #{eigenvalues in (a, b]}`.
pub fn count_in(h: &AssembledOperator, i: &Interval) -> Result<usize> {
    let c = count_many(h, &[i.a, i.b])?;
    Ok(c[1].saturating_sub(c[0]))
}

/// Counts for several intervals in one batch.
pub fn count_in_many(h: &AssembledOperator, is: &[Interval]) -> Result<Vec<usize>> {
    let es: Vec<f64> = is.iter().flat_map(|i| [i.a, i.b]).collect();
    let c = count_many(h, &es)?;
    Ok(c.chunks(2).map(|p| p[1].saturating_sub(p[0])).collect())
}

/// `Σ_k f(λ_k)` over the full spectrum.
pub fn trace_function<F: Fn(f64) -> f64>(h: &AssembledOperator, f: F) -> Result<f64> {
    let s = eigen_full(h, false)?;
    Ok(compensated_sum(s.values.iter().map(|&v| f(v))))
}

/// `tr{χ P(I) χ} = Σ_{λ_k ∈ I} ‖χ_mask v_k‖²`.
pub fn local_projection_trace(spec: &Spectrum, i: &Interval, mask: &[usize]) -> Result<f64> {
    let v = spec
        .vectors
        .as_ref()
        .ok_or_else(|| Error::state(MODULE, "local_projection_trace needs eigenvectors"))?;
    let mut terms = Vec::new();
    for (k, &lam) in spec.values.iter().enumerate() {
        if i.contains(lam) {
            let col = v.column(k);
            terms.push(compensated_sum(mask.iter().map(|&j| col[j] * col[j])));
        }
    }
    Ok(compensated_sum(terms))
}

fn slice_tolerance(h: &AssembledOperator) -> f64 {
    4.0 * f64::EPSILON * h.norm_bound().max(1.0)
}

/// Eigenvalues in `(a, b]` by breadth-first bisection on inertia counts.
pub fn eigenvalues_in(h: &AssembledOperator, i: &Interval) -> Result<Vec<f64>> {
    let c = count_many(h, &[i.a, i.b])?;
    slice(h, i.a, i.b, c[0], c[1], slice_tolerance(h))
}

fn slice(h: &AssembledOperator, a: f64, b: f64, ca: usize, cb: usize, tol: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(cb.saturating_sub(ca));
    // (lo, hi, count(lo), count(hi)); eigenvalues live in (lo, hi]
    let mut nodes = vec![(a, b, ca, cb)];
    while !nodes.is_empty() {
        let mut split = Vec::with_capacity(nodes.len());
        for &(lo, hi, cl, ch) in &nodes {
            if ch <= cl {
                continue;
            }
            let mid = lo + 0.5 * (hi - lo);
            if hi - lo <= tol.max(2.0 * f64::EPSILON * hi.abs().max(lo.abs())) || mid <= lo || mid >= hi {
                for _ in cl..ch {
                    out.push(mid);
                }
            } else {
                split.push((lo, hi, cl, ch, mid));
            }
        }
        if split.is_empty() {
            break;
        }
        let mids: Vec<f64> = split.iter().map(|s| s.4).collect();
        let cm = count_many(h, &mids)?;
        nodes.clear();
        for (&(lo, hi, cl, ch, mid), c) in split.iter().zip(cm) {
            // guard against floating inconsistency (non-monotone counts)
            let c = c.clamp(cl, ch);
            nodes.push((lo, mid, cl, c));
            nodes.push((mid, hi, c, ch));
        }
    }
    out.sort_by(|x, y| x.total_cmp(y));
    Ok(out)
}

/// True iff two eigenvalues in `(a, b]` lie within `eps` of each other
/// (counting multiplicity).
///
/// Bisection first isolates every eigenvalue in its own node; neighbouring
/// nodes are then refined only while their distance bounds leave the
/// question open.
pub fn has_close_pair(h: &AssembledOperator, i: &Interval, eps: f64) -> Result<bool> {
    if !(eps > 0.0) {
        return Err(Error::param(MODULE, "eps", "must be positive"));
    }
    let tol = slice_tolerance(h);
    let c = count_many(h, &[i.a, i.b])?;
    // isolated nodes (lo, hi], one eigenvalue each
    let mut single: Vec<(f64, f64, usize)> = Vec::new();
    let mut nodes = vec![(i.a, i.b, c[0], c[1])];
    while !nodes.is_empty() {
        let mut split = Vec::new();
        for &(lo, hi, cl, ch) in &nodes {
            match ch.saturating_sub(cl) {
                0 => {}
                1 => single.push((lo, hi, cl)),
                _ if hi - lo <= eps => return Ok(true),
                _ if hi - lo <= 2.0 * eps => {
                    let ev = slice(h, lo, hi, cl, ch, tol)?;
                    if ev.windows(2).any(|w| w[1] - w[0] <= eps) {
                        return Ok(true);
                    }
                    // already resolved to the slicing tolerance
                    single.extend(ev.iter().map(|&e| (e, e, cl)));
                }
                _ => split.push((lo, hi, cl, ch, lo + 0.5 * (hi - lo))),
            }
        }
        if split.is_empty() {
            break;
        }
        let mids: Vec<f64> = split.iter().map(|s| s.4).collect();
        let cm = count_many(h, &mids)?;
        nodes.clear();
        for (&(lo, hi, cl, ch, mid), c) in split.iter().zip(cm) {
            let c = c.clamp(cl, ch);
            nodes.push((lo, mid, cl, c));
            nodes.push((mid, hi, c, ch));
        }
    }
    single.sort_by(|x, y| x.0.total_cmp(&y.0));
    loop {
        let mut refine = vec![false; single.len()];
        for k in 1..single.len() {
            let (p, q) = (single[k - 1], single[k]);
            if q.0 - p.1 > eps {
                continue;
            }
            if q.1 - p.0 <= eps {
                return Ok(true);
            }
            let (wp, wq) = (p.1 - p.0, q.1 - q.0);
            if wp <= tol && wq <= tol {
                if 0.5 * (q.0 + q.1) - 0.5 * (p.0 + p.1) <= eps {
                    return Ok(true);
                }
                continue;
            }
            refine[k - 1] |= wp > tol;
            refine[k] |= wq > tol;
        }
        let idx: Vec<usize> = (0..single.len()).filter(|&k| refine[k]).collect();
        if idx.is_empty() {
            return Ok(false);
        }
        let mids: Vec<f64> = idx.iter().map(|&k| single[k].0 + 0.5 * (single[k].1 - single[k].0)).collect();
        let cs = count_many(h, &mids)?;
        for (j, &k) in idx.iter().enumerate() {
            let (lo, hi, cl) = single[k];
            single[k] = if cs[j] > cl { (lo, mids[j], cl) } else { (mids[j], hi, cl) };
        }
    }
}

/// Eigenpairs with eigenvalues in `(a, b]`.
///
/// Sparse operators use slicing plus inverse iteration on the banded
/// factorization; dense operators (or any pair failing the residual check
/// when the dimension allows) fall back to the full dense solver.
pub fn eigenpairs_in(h: &AssembledOperator, i: &Interval) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let dense = || -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let s = eigen_full(h, true)?;
        let v = s.vectors.as_ref().unwrap();
        let mut vals = Vec::new();
        let mut vecs = Vec::new();
        for (k, &lam) in s.values.iter().enumerate() {
            if i.contains(lam) {
                vals.push(lam);
                vecs.push(v.column(k).iter().cloned().collect());
            }
        }
        Ok((vals, vecs))
    };
    let band = match h.matrix() {
        OperatorMatrix::Dense(_) => return dense(),
        OperatorMatrix::Sparse(s) => s.band(),
    };
    let values = eigenvalues_in(h, i)?;
    match inverse_iteration(h, band, &values) {
        Some(vecs) => Ok((values, vecs)),
        None if h.dim() <= DEFAULT_DENSE_LIMIT => dense(),
        None => Err(Error::numeric(MODULE, "inverse iteration failed the residual check")),
    }
}

fn inverse_iteration(h: &AssembledOperator, band: &BandSym, values: &[f64]) -> Option<Vec<Vec<f64>>> {
    let n = h.dim();
    let norm = h.norm_bound().max(1.0);
    let cluster = 1e-3 * norm;
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(values.len());
    let mut state: u64 = 0x9E37_79B9_7F4A_7C15;
    for (k, &lam) in values.iter().enumerate() {
        // a tiny offset keeps the factorization away from an exact zero pivot
        let sigma = lam + 8.0 * f64::EPSILON * norm;
        let f = band.factor(sigma);
        if f.pivots().iter().any(|p| !p.is_finite()) {
            return None;
        }
        let mut x: Vec<f64> = (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let first = (0..k).rev().take_while(|&j| lam - values[j] < cluster).last().unwrap_or(k);
        let mut ok = false;
        for _ in 0..6 {
            x = band.solve(&f, &x);
            for v in &vecs[first..k] {
                let dot = compensated_sum(v.iter().zip(&x).map(|(a, b)| a * b));
                for (xi, vi) in x.iter_mut().zip(v) {
                    *xi -= dot * vi;
                }
            }
            let nrm = compensated_sum(x.iter().map(|v| v * v)).sqrt();
            if !(nrm.is_finite() && nrm > 0.0) {
                return None;
            }
            for xi in x.iter_mut() {
                *xi /= nrm;
            }
            let hx = h.apply(&x);
            let res = hx.iter().zip(&x).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
            if res <= 1e-10 * norm {
                ok = true;
                break;
            }
        }
        if !ok {
            return None;
        }
        vecs.push(x);
    }
    Some(vecs)
}

/// Radius-1 block around a disorder site: the unit box `Λ_1(x)` in grid points.
pub fn unit_block(h: &AssembledOperator, site: usize) -> Vec<usize> {
    match h.geometry() {
        Some(g) => g.unit_block(site),
        None => vec![site],
    }
}

/// Cached factorization of `H − z` for repeated block queries.
pub struct Resolvent<'a> {
    h: &'a AssembledOperator,
    z: Complex64,
    kind: ResolventKind<'a>,
}

enum ResolventKind<'a> {
    Band(&'a BandSym, crate::linalg::BandLdlt<Complex64>),
    Dense(nalgebra::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>),
}

impl<'a> Resolvent<'a> {
    pub fn new(h: &'a AssembledOperator, z: Complex64) -> Result<Self> {
        if z.im == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
            return Err(Error::param(MODULE, "z", "needs a finite, nonzero imaginary part"));
        }
        let kind = match h.matrix() {
            OperatorMatrix::Sparse(s) => {
                let f = s.band().factor(z);
                if f.pivots().iter().any(|p| !(p.re.is_finite() && p.im.is_finite()) || p.norm() == 0.0) {
                    return Err(Error::numeric(MODULE, "singular complex factorization"));
                }
                ResolventKind::Band(s.band(), f)
            }
            OperatorMatrix::Dense(m) => {
                let n = m.nrows();
                let c = DMatrix::from_fn(n, n, |i, j| Complex64::new(m[(i, j)], 0.0) - if i == j { z } else { Complex64::new(0.0, 0.0) });
                ResolventKind::Dense(c.lu())
            }
        };
        Ok(Self { h, z, kind })
    }

    /// Column `(H − z)⁻¹ e_j`, verified by its residual.
    pub fn column(&self, j: usize) -> Result<Vec<Complex64>> {
        let n = self.h.dim();
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        e[j] = Complex64::new(1.0, 0.0);
        let x = match &self.kind {
            ResolventKind::Band(b, f) => b.solve(f, &e),
            ResolventKind::Dense(lu) => {
                let rhs = DVector::from_vec(e.clone());
                lu.solve(&rhs)
                    .ok_or_else(|| Error::numeric(MODULE, "singular dense resolvent"))?
                    .iter()
                    .cloned()
                    .collect()
            }
        };
        let re: Vec<f64> = x.iter().map(|c| c.re).collect();
        let im: Vec<f64> = x.iter().map(|c| c.im).collect();
        let (hr, hi) = (self.h.apply(&re), self.h.apply(&im));
        let mut res = 0.0;
        for k in 0..n {
            let r = Complex64::new(hr[k], hi[k]) - self.z * x[k] - e[k];
            res += r.norm_sqr();
        }
        let res = res.sqrt();
        if !(res <= 1e-8) {
            return Err(Error::numeric(MODULE, format!("resolvent residual {res:e} exceeds 1e-8")));
        }
        Ok(x)
    }

    /// `‖χ_x R(z) χ_y‖` for explicit grid-point blocks.
    pub fn block_norm(&self, xs: &[usize], ys: &[usize]) -> Result<f64> {
        let mut g = DMatrix::<Complex64>::zeros(xs.len(), ys.len());
        for (c, &j) in ys.iter().enumerate() {
            let col = self.column(j)?;
            for (r, &i) in xs.iter().enumerate() {
                g[(r, c)] = col[i];
            }
        }
        if g.len() == 1 {
            return Ok(g[(0, 0)].norm());
        }
        let sv = g.singular_values();
        Ok(sv.iter().cloned().fold(0.0, f64::max))
    }

    /// Norms `‖χ_x R(z) χ_y‖` for one column block `y` and several row blocks `x`.
    pub fn block_norms_from(&self, y: &[usize], xs: &[Vec<usize>]) -> Result<Vec<f64>> {
        let cols: Vec<Vec<Complex64>> = y.iter().map(|&j| self.column(j)).collect::<Result<_>>()?;
        xs.iter()
            .map(|xb| {
                let mut g = DMatrix::<Complex64>::zeros(xb.len(), y.len());
                for (c, col) in cols.iter().enumerate() {
                    for (r, &i) in xb.iter().enumerate() {
                        g[(r, c)] = col[i];
                    }
                }
                Ok(if g.len() == 1 {
                    g[(0, 0)].norm()
                } else {
                    g.singular_values().iter().cloned().fold(0.0, f64::max)
                })
            })
            .collect()
    }
}

/// `‖χ_x^(1) (H − z)⁻¹ χ_y^(1)‖` for disorder sites `x`, `y`.
pub fn resolvent_block_norm(h: &AssembledOperator, z: Complex64, x: usize, y: usize) -> Result<f64> {
    let r = Resolvent::new(h, z)?;
    r.block_norm(&unit_block(h, x), &unit_block(h, y))
}
