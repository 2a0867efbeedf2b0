//! Finite-volume Hamiltonians on the torus.

use std::io::Write;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{torus_band_order, torus_band_order_rotated, BandSym, Tridiagonal};
use crate::model::{DisorderRealization, Mode, TorusGeometry};

const MODULE: &str = "operators";

/// Shape of the single-site bump `u`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum ProfileShape {
    /// 1 on `Λ_{δ₋}`, `u₋` on the rest of `Λ_{δ₊}`.
    Plateau,
    /// Linear in `‖x‖∞` from 1 at the centre to `u₋` at the edge of `Λ_{δ₊}`.
    Tent,
    /// Piecewise-linear radial table in `‖x‖∞`, held constant past the last knot.
    Table { radii: Vec<f64>, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleSiteProfile {
    pub delta_minus: f64,
    pub delta_plus: f64,
    pub u_minus: f64,
    #[serde(flatten)]
    pub shape: ProfileShape,
}

/// `x ∈ Λ_s(0) = [−s/2, s/2)^d`.
pub fn in_half_open_box(x: &[f64], s: f64) -> bool {
    x.iter().all(|&c| -s / 2.0 <= c && c < s / 2.0)
}

impl SingleSiteProfile {
    pub fn plateau(delta_minus: f64, delta_plus: f64, u_minus: f64) -> Self {
        Self {
            delta_minus,
            delta_plus,
            u_minus,
            shape: ProfileShape::Plateau,
        }
    }

    pub fn tent(delta_minus: f64, delta_plus: f64, u_minus: f64) -> Self {
        Self {
            delta_minus,
            delta_plus,
            u_minus,
            shape: ProfileShape::Tent,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (dm, dp, um) = (self.delta_minus, self.delta_plus, self.u_minus);
        if !(dm.is_finite() && dp.is_finite() && dm > 0.0 && dm <= dp) {
            return Err(Error::param(MODULE, "profile.delta", format!("need 0 < δ₋ ≤ δ₊, got {dm}, {dp}")));
        }
        if !(um > 0.0 && um <= 1.0) {
            return Err(Error::param(MODULE, "profile.u_minus", format!("must lie in (0, 1], got {um}")));
        }
        if let ProfileShape::Table { radii, values } = &self.shape {
            if radii.is_empty() || radii.len() != values.len() || radii[0] != 0.0 {
                return Err(Error::param(MODULE, "profile.table", "radii must start at 0 and match values"));
            }
            if radii.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::param(MODULE, "profile.table", "radii must be strictly increasing"));
            }
            if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::param(MODULE, "profile.table", "values must lie in [0, 1]"));
            }
            if values.iter().cloned().fold(0.0, f64::max) != 1.0 {
                return Err(Error::param(MODULE, "profile.table", "sup norm must be 1"));
            }
            let k = 1000;
            for i in 0..k {
                let r = dm / 2.0 * i as f64 / k as f64;
                if self.radial(r) < um {
                    return Err(Error::param(MODULE, "profile.table", format!("falls below u₋ at radius {r}")));
                }
            }
        }
        Ok(())
    }

    fn radial(&self, r: f64) -> f64 {
        match &self.shape {
            ProfileShape::Table { radii, values } => {
                let k = radii.partition_point(|&x| x <= r);
                if k >= radii.len() {
                    return *values.last().unwrap();
                }
                let (r0, r1) = (radii[k - 1], radii[k]);
                let t = (r - r0) / (r1 - r0);
                values[k - 1] + t * (values[k] - values[k - 1])
            }
            _ => unreachable!(),
        }
    }

    /// `u(x)` for a displacement `x` from the site centre.
    pub fn eval(&self, x: &[f64]) -> f64 {
        if !in_half_open_box(x, self.delta_plus) {
            return 0.0;
        }
        match &self.shape {
            ProfileShape::Plateau => {
                if in_half_open_box(x, self.delta_minus) {
                    1.0
                } else {
                    self.u_minus
                }
            }
            ProfileShape::Tent => {
                let r = x.iter().fold(0.0f64, |m, &c| m.max(c.abs())) * 2.0 / self.delta_plus;
                1.0 - (1.0 - self.u_minus) * r.min(1.0)
            }
            ProfileShape::Table { .. } => self.radial(x.iter().fold(0.0f64, |m, &c| m.max(c.abs()))),
        }
    }
}

/// Periodic background potential `V_per` with period 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PeriodicPotential {
    #[default]
    Zero,
    Constant { value: f64 },
    /// Values on the `per_axis^d` grid points of the unit cell, axis 0 fastest.
    Table { per_axis: usize, values: Vec<f64> },
}

impl PeriodicPotential {
    fn check(&self, geom: &TorusGeometry) -> Result<()> {
        match self {
            PeriodicPotential::Zero => Ok(()),
            PeriodicPotential::Constant { value } if value.is_finite() => Ok(()),
            PeriodicPotential::Constant { .. } => Err(Error::param(MODULE, "v_per", "non-finite constant")),
            PeriodicPotential::Table { per_axis, values } => {
                if *per_axis != geom.points_per_unit() {
                    return Err(Error::param(
                        MODULE,
                        "v_per.per_axis",
                        format!("table has {per_axis} points per period, grid has {}", geom.points_per_unit()),
                    ));
                }
                if values.len() != per_axis.pow(geom.dim() as u32) || values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param(MODULE, "v_per.values", "wrong length or non-finite entries"));
                }
                Ok(())
            }
        }
    }

    fn at(&self, coords: &[usize]) -> f64 {
        match self {
            PeriodicPotential::Zero => 0.0,
            PeriodicPotential::Constant { value } => *value,
            PeriodicPotential::Table { per_axis, values } => {
                let c: Vec<usize> = coords.iter().map(|&x| x % per_axis).collect();
                values[crate::model::ravel(&c, *per_axis)]
            }
        }
    }
}

/// Symmetric matrix with a cached band factorization layout.
#[derive(Clone, Debug)]
pub struct SparseSym {
    diag: Vec<f64>,
    /// Strict upper entries `(i, j, a_ij)`, `i < j`, sorted.
    upper: Vec<(usize, usize, f64)>,
    band: Arc<BandSym>,
    /// Torus grid shape `(per_axis, dim)` when the ordering is the zig-zag one.
    shape: Option<(usize, usize)>,
    alternate: OnceLock<Arc<BandSym>>,
    tridiagonal: OnceLock<Arc<Tridiagonal>>,
}

impl SparseSym {
    fn torus(diag: Vec<f64>, upper: Vec<(usize, usize, f64)>, per_axis: usize, dim: usize) -> Self {
        let mut s = Self::new(diag, upper, torus_band_order(per_axis, dim));
        s.shape = Some((per_axis, dim));
        s
    }

    fn new(diag: Vec<f64>, mut upper: Vec<(usize, usize, f64)>, perm: Vec<usize>) -> Self {
        upper.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        // merge duplicates (side 2 tori have double edges)
        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(upper.len());
        for e in upper {
            match merged.last_mut() {
                Some(last) if last.0 == e.0 && last.1 == e.1 => last.2 += e.2,
                _ => merged.push(e),
            }
        }
        let band = Arc::new(BandSym::new(&diag, &merged, perm));
        Self {
            diag,
            upper: merged,
            band,
            shape: None,
            alternate: OnceLock::new(),
            tridiagonal: OnceLock::new(),
        }
    }

    pub(crate) fn band(&self) -> &BandSym {
        &self.band
    }

    /// Same matrix under a different elimination order, built on first use.
    pub(crate) fn alternate_band(&self) -> &BandSym {
        self.alternate.get_or_init(|| {
            let n = self.diag.len();
            let perm = match self.shape {
                Some((p, d)) => torus_band_order_rotated(p, d, p / 3 + 1),
                None => (0..n).rev().collect(),
            };
            Arc::new(BandSym::new(&self.diag, &self.upper, perm))
        })
    }

    /// Orthogonally similar tridiagonal matrix, built on first use.
    pub(crate) fn tridiagonal(&self) -> &Tridiagonal {
        self.tridiagonal.get_or_init(|| {
            let n = self.diag.len();
            let mut m = DMatrix::zeros(n, n);
            for (i, &d) in self.diag.iter().enumerate() {
                m[(i, i)] = d;
            }
            for &(i, j, v) in &self.upper {
                m[(i, j)] += v;
                m[(j, i)] += v;
            }
            Arc::new(Tridiagonal::from_dense(m))
        })
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn upper_entries(&self) -> &[(usize, usize, f64)] {
        &self.upper
    }

    pub fn bandwidth(&self) -> usize {
        self.band.bandwidth()
    }

    fn with_diagonal(&self, diag: Vec<f64>) -> Self {
        let perm = (0..diag.len()).map(|p| self.band.to_original(p)).collect();
        let mut s = Self::new(diag, self.upper.clone(), perm);
        s.shape = self.shape;
        s
    }
}

#[derive(Clone, Debug)]
pub enum OperatorMatrix {
    Sparse(SparseSym),
    Dense(DMatrix<f64>),
}

/// Provenance recorded at assembly time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssemblyMeta {
    pub mode: Option<Mode>,
    pub v_per: Option<PeriodicPotential>,
    pub profile: Option<SingleSiteProfile>,
    pub disorder_hash: Option<String>,
    pub modifications: Vec<String>,
}

/// Real symmetric finite-volume Hamiltonian.
#[derive(Clone, Debug)]
pub struct AssembledOperator {
    geometry: Option<TorusGeometry>,
    matrix: OperatorMatrix,
    meta: AssemblyMeta,
}

/// Periodic second-difference operator `−Δ_h` on a `per_axis^dim` grid with spacing `h`.
pub fn periodic_laplacian(dim: usize, per_axis: usize, h: f64) -> Result<AssembledOperator> {
    if dim == 0 || per_axis == 0 || !(h > 0.0) {
        return Err(Error::param(MODULE, "laplacian", "need dim ≥ 1, per_axis ≥ 1, h > 0"));
    }
    let inv_h2 = 1.0 / (h * h);
    let n = per_axis.pow(dim as u32);
    let (diag, upper) = laplacian_entries(dim, per_axis, inv_h2, n);
    Ok(AssembledOperator {
        geometry: None,
        matrix: OperatorMatrix::Sparse(SparseSym::torus(diag, upper, per_axis, dim)),
        meta: AssemblyMeta {
            mode: None,
            v_per: None,
            profile: None,
            disorder_hash: None,
            modifications: vec![format!("laplacian h={h}")],
        },
    })
}

fn laplacian_entries(dim: usize, per_axis: usize, w: f64, n: usize) -> (Vec<f64>, Vec<(usize, usize, f64)>) {
    let mut diag = vec![2.0 * dim as f64 * w; n];
    let mut upper = Vec::with_capacity(n * dim);
    let mut stride = 1;
    for _ in 0..dim {
        for i in 0..n {
            let x = (i / stride) % per_axis;
            let j = i - x * stride + ((x + 1) % per_axis) * stride;
            if j == i {
                // side 1: the hop returns to the same point from both directions
                diag[i] -= 2.0 * w;
            } else {
                upper.push((i.min(j), i.max(j), -w));
            }
        }
        stride *= per_axis;
    }
    (diag, upper)
}

/// Discrete Anderson operator `−Δ + Σ ω_j Π_{δ_j}` on the lattice torus.
pub fn build_lattice(geom: &TorusGeometry, disorder: &DisorderRealization) -> Result<AssembledOperator> {
    if geom.mode() != Mode::Lattice {
        return Err(Error::geometry(MODULE, "build_lattice needs a lattice geometry"));
    }
    if disorder.geometry() != geom {
        return Err(Error::geometry(MODULE, "disorder realization does not match the geometry"));
    }
    let n = geom.n_points();
    let (mut diag, upper) = laplacian_entries(geom.dim(), geom.side(), 1.0, n);
    for (d, w) in diag.iter_mut().zip(disorder.values()) {
        *d += w;
    }
    Ok(AssembledOperator {
        geometry: Some(geom.clone()),
        matrix: OperatorMatrix::Sparse(SparseSym::torus(diag, upper, geom.side(), geom.dim())),
        meta: AssemblyMeta {
            mode: Some(Mode::Lattice),
            v_per: None,
            profile: None,
            disorder_hash: Some(disorder.hash()),
            modifications: Vec::new(),
        },
    })
}

/// Finite-difference continuum Anderson operator `−Δ_h + V_per + Σ ω_j u(· − j)`.
pub fn build_continuum(
    geom: &TorusGeometry,
    v_per: &PeriodicPotential,
    profile: &SingleSiteProfile,
    disorder: &DisorderRealization,
) -> Result<AssembledOperator> {
    if geom.mode() != Mode::Continuum {
        return Err(Error::geometry(MODULE, "build_continuum needs a continuum geometry"));
    }
    if disorder.geometry() != geom {
        return Err(Error::geometry(MODULE, "disorder realization does not match the geometry"));
    }
    profile.validate()?;
    if geom.side() as f64 <= profile.delta_plus {
        return Err(Error::geometry(
            MODULE,
            format!("L = {} must exceed δ₊ = {}", geom.side(), profile.delta_plus),
        ));
    }
    v_per.check(geom)?;
    let per_axis = geom.points_per_axis();
    let n = geom.n_points();
    let h = geom.mesh();
    let (mut diag, upper) = laplacian_entries(geom.dim(), per_axis, 1.0 / (h * h), n);
    for (i, d) in diag.iter_mut().enumerate() {
        *d += v_per.at(&geom.point_coords(i));
    }
    let pot = profile_potential(geom, profile, disorder.values());
    for (d, p) in diag.iter_mut().zip(&pot) {
        *d += p;
    }
    Ok(AssembledOperator {
        geometry: Some(geom.clone()),
        matrix: OperatorMatrix::Sparse(SparseSym::torus(diag, upper, per_axis, geom.dim())),
        meta: AssemblyMeta {
            mode: Some(Mode::Continuum),
            v_per: Some(v_per.clone()),
            profile: Some(profile.clone()),
            disorder_hash: Some(disorder.hash()),
            modifications: Vec::new(),
        },
    })
}

/// `Σ_j c_j u(x − j)` on the grid, displacements wrapped to `(−L/2, L/2]^d`.
fn profile_potential(geom: &TorusGeometry, profile: &SingleSiteProfile, coeffs: &[f64]) -> Vec<f64> {
    let dim = geom.dim();
    let n_axis = geom.points_per_axis() as i64;
    let m = geom.points_per_unit() as i64;
    // representatives k ∈ (−N/2, N/2] intersected with the support reach
    let reach = (profile.delta_plus * m as f64 / 2.0).ceil() as i64 + 1;
    let lo = (-reach).max(-n_axis / 2 + if n_axis % 2 == 0 { 1 } else { 0 });
    let hi = reach.min(n_axis / 2);
    let span = (hi - lo + 1) as usize;
    // u is evaluated once per offset pattern
    let total = span.pow(dim as u32);
    let mut offsets = Vec::new();
    for t in 0..total {
        let mut rest = t;
        let mut k = Vec::with_capacity(dim);
        for _ in 0..dim {
            k.push(lo + (rest % span) as i64);
            rest /= span;
        }
        let x: Vec<f64> = k.iter().map(|&ki| ki as f64 / m as f64).collect();
        let u = profile.eval(&x);
        if u != 0.0 {
            offsets.push((k, u));
        }
    }
    let mut pot = vec![0.0; geom.n_points()];
    for (site, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let centre: Vec<i64> = geom.site_coords(site).iter().map(|&x| x as i64 * m).collect();
        for (k, u) in &offsets {
            let p: Vec<usize> = centre
                .iter()
                .zip(k)
                .map(|(&c0, &ki)| (c0 + ki).rem_euclid(n_axis) as usize)
                .collect();
            pot[geom.point_index(&p)] += c * u;
        }
    }
    pot
}

impl AssembledOperator {
    /// Wrap a dense symmetric matrix (test fixtures, generic rank-one hooks).
    pub fn from_dense(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::geometry(MODULE, "matrix must be square and nonempty"));
        }
        for i in 0..m.nrows() {
            for j in 0..i {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::geometry(MODULE, format!("not symmetric at ({i}, {j})")));
                }
            }
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(MODULE, "non-finite matrix entry"));
        }
        Ok(Self {
            geometry: None,
            matrix: OperatorMatrix::Dense(m),
            meta: AssemblyMeta {
                mode: None,
                v_per: None,
                profile: None,
                disorder_hash: None,
                modifications: vec!["dense".into()],
            },
        })
    }

    /// Symmetric band matrix given by its diagonal and upper entries, in natural order.
    pub fn from_entries(diag: Vec<f64>, upper: Vec<(usize, usize, f64)>) -> Result<Self> {
        let n = diag.len();
        if upper.iter().any(|&(i, j, _)| i >= j || j >= n) {
            return Err(Error::geometry(MODULE, "upper entries must satisfy i < j < n"));
        }
        Ok(Self {
            geometry: None,
            matrix: OperatorMatrix::Sparse(SparseSym::new(diag, upper, (0..n).collect())),
            meta: AssemblyMeta {
                mode: None,
                v_per: None,
                profile: None,
                disorder_hash: None,
                modifications: vec!["entries".into()],
            },
        })
    }

    pub fn geometry(&self) -> Option<&TorusGeometry> {
        self.geometry.as_ref()
    }

    pub fn matrix(&self) -> &OperatorMatrix {
        &self.matrix
    }

    pub fn meta(&self) -> &AssemblyMeta {
        &self.meta
    }

    pub fn dim(&self) -> usize {
        match &self.matrix {
            OperatorMatrix::Sparse(s) => s.diag.len(),
            OperatorMatrix::Dense(m) => m.nrows(),
        }
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.matrix, OperatorMatrix::Dense(_))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.matrix {
            OperatorMatrix::Dense(m) => m.clone(),
            OperatorMatrix::Sparse(s) => {
                let n = s.diag.len();
                let mut m = DMatrix::from_diagonal(&DVector::from_vec(s.diag.clone()));
                for &(i, j, v) in &s.upper {
                    m[(i, j)] += v;
                    m[(j, i)] += v;
                }
                debug_assert_eq!(m.nrows(), n);
                m
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        match &self.matrix {
            OperatorMatrix::Sparse(s) => s.diag.clone(),
            OperatorMatrix::Dense(m) => m.diagonal().iter().cloned().collect(),
        }
    }

    /// Infinity-norm bound on ‖H‖ (max absolute row sum).
    pub fn norm_bound(&self) -> f64 {
        match &self.matrix {
            OperatorMatrix::Dense(m) => m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max),
            OperatorMatrix::Sparse(s) => {
                let mut rows: Vec<f64> = s.diag.iter().map(|d| d.abs()).collect();
                for &(i, j, v) in &s.upper {
                    rows[i] += v.abs();
                    rows[j] += v.abs();
                }
                rows.into_iter().fold(0.0, f64::max)
            }
        }
    }

    /// `max |H − Hᵀ|` over stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        let m = self.to_dense();
        (&m - m.transpose()).amax()
    }

    /// `H + t Π_{δ_j}` (for the lattice, site `j` is the grid point `j`).
    pub fn add_rank_one(&self, site: usize, t: f64) -> Result<Self> {
        let point = match &self.geometry {
            Some(g) if g.mode() == Mode::Lattice => {
                if site >= g.n_sites() {
                    return Err(Error::param(MODULE, "site", format!("{site} out of range")));
                }
                site
            }
            Some(_) => return Err(Error::state(MODULE, "use add_scaled_profile in continuum mode")),
            None => {
                if site >= self.dim() {
                    return Err(Error::param(MODULE, "site", format!("{site} out of range")));
                }
                site
            }
        };
        let mut e = vec![0.0; self.dim()];
        e[point] = t;
        self.add_diagonal(&e, format!("rank_one site={site} t={t}"))
    }

    /// `H + t u_j` on the grid (continuum analogue of a rank-one coupling change).
    pub fn add_scaled_profile(&self, site: usize, t: f64) -> Result<Self> {
        let (g, prof) = match (&self.geometry, &self.meta.profile) {
            (Some(g), Some(p)) if g.mode() == Mode::Continuum => (g, p),
            _ => return Err(Error::state(MODULE, "add_scaled_profile needs a continuum operator")),
        };
        if site >= g.n_sites() {
            return Err(Error::param(MODULE, "site", format!("{site} out of range")));
        }
        let mut c = vec![0.0; g.n_sites()];
        c[site] = t;
        let w = profile_potential(g, prof, &c);
        self.add_diagonal(&w, format!("profile site={site} t={t}"))
    }

    /// `H + diag(w)`.
    pub fn add_diagonal(&self, w: &[f64], note: String) -> Result<Self> {
        if w.len() != self.dim() {
            return Err(Error::geometry(MODULE, "diagonal length mismatch"));
        }
        let matrix = match &self.matrix {
            OperatorMatrix::Sparse(s) => {
                let diag = s.diag.iter().zip(w).map(|(a, b)| a + b).collect();
                OperatorMatrix::Sparse(s.with_diagonal(diag))
            }
            OperatorMatrix::Dense(m) => {
                let mut m = m.clone();
                for (i, v) in w.iter().enumerate() {
                    m[(i, i)] += v;
                }
                OperatorMatrix::Dense(m)
            }
        };
        let mut meta = self.meta.clone();
        meta.modifications.push(note);
        Ok(Self {
            geometry: self.geometry.clone(),
            matrix,
            meta,
        })
    }

    /// `H + t φφᵀ` for an arbitrary unit vector `φ` (dense result).
    pub fn add_rank_one_vector(&self, phi: &[f64], t: f64) -> Result<Self> {
        if phi.len() != self.dim() {
            return Err(Error::geometry(MODULE, "φ length mismatch"));
        }
        let v = DVector::from_column_slice(phi);
        let w = &v * v.transpose() * t;
        self.add_dense(&w, format!("rank_one_vector t={t}"))
    }

    /// `H + W` for a symmetric matrix `W` (dense result).
    pub fn add_dense(&self, w: &DMatrix<f64>, note: String) -> Result<Self> {
        if w.nrows() != self.dim() || w.ncols() != self.dim() {
            return Err(Error::geometry(MODULE, "perturbation size mismatch"));
        }
        let mut m = self.to_dense() + w;
        // enforce bitwise symmetry after the floating-point sum
        for i in 0..m.nrows() {
            for j in 0..i {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let mut meta = self.meta.clone();
        meta.modifications.push(note);
        Ok(Self {
            geometry: self.geometry.clone(),
            matrix: OperatorMatrix::Dense(m),
            meta,
        })
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match &self.matrix {
            OperatorMatrix::Sparse(s) => s.band().matvec(x),
            OperatorMatrix::Dense(m) => (m * DVector::from_column_slice(x)).iter().cloned().collect(),
        }
    }

    /// Content hash of the matrix entries.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        match &self.matrix {
            OperatorMatrix::Sparse(s) => {
                for d in &s.diag {
                    h.update(d.to_le_bytes());
                }
                for &(i, j, v) in &s.upper {
                    h.update((i as u64).to_le_bytes());
                    h.update((j as u64).to_le_bytes());
                    h.update(v.to_le_bytes());
                }
            }
            OperatorMatrix::Dense(m) => {
                for v in m.iter() {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(&h.finalize()[..8])
    }

    /// All nonzero entries `(row, col, value)`, both triangles, row-major.
    pub fn coordinate_list(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        match &self.matrix {
            OperatorMatrix::Sparse(s) => {
                for (i, &d) in s.diag.iter().enumerate() {
                    out.push((i, i, d));
                }
                for &(i, j, v) in &s.upper {
                    out.push((i, j, v));
                    out.push((j, i, v));
                }
            }
            OperatorMatrix::Dense(m) => {
                for i in 0..m.nrows() {
                    for j in 0..m.ncols() {
                        if m[(i, j)] != 0.0 {
                            out.push((i, j, m[(i, j)]));
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }

    /// Write the coordinate list as whitespace-separated text.
    pub fn write_coordinate_list<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# n={} hash={}", self.dim(), self.hash())?;
        for (i, j, v) in self.coordinate_list() {
            writeln!(w, "{i} {j} {v:e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_disorder, SiteDistribution};

    #[test]
    fn lattice_matrix_layout() {
        let g = TorusGeometry::lattice(1, 4).unwrap();
        let d = DisorderRealization::from_values(g.clone(), vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let h = build_lattice(&g, &d).unwrap().to_dense();
        let want = DMatrix::from_row_slice(
            4,
            4,
            &[3.0, -1.0, 0.0, -1.0, -1.0, 2.0, -1.0, 0.0, 0.0, -1.0, 2.0, -1.0, -1.0, 0.0, -1.0, 2.0],
        );
        assert_eq!(h, want);
    }

    #[test]
    fn plateau_cover_sums_to_two() {
        let g = TorusGeometry::continuum(1, 8, 0.125).unwrap();
        let d = DisorderRealization::from_values(g.clone(), vec![1.0; 8]).unwrap();
        let p = SingleSiteProfile::plateau(2.0, 2.0, 1.0);
        let h = build_continuum(&g, &PeriodicPotential::Zero, &p, &d).unwrap();
        let lap = 2.0 / (0.125 * 0.125);
        for v in h.diagonal() {
            assert_eq!(v - lap, 2.0);
        }
    }

    #[test]
    fn continuum_errors() {
        let g = TorusGeometry::continuum(1, 2, 0.5).unwrap();
        let d = DisorderRealization::from_values(g.clone(), vec![0.0; 2]).unwrap();
        let p = SingleSiteProfile::plateau(2.0, 2.0, 1.0);
        assert!(build_continuum(&g, &PeriodicPotential::Zero, &p, &d).is_err());
        let bad = PeriodicPotential::Table {
            per_axis: 3,
            values: vec![0.0; 3],
        };
        let g4 = TorusGeometry::continuum(1, 4, 0.5).unwrap();
        let d4 = DisorderRealization::from_values(g4.clone(), vec![0.0; 4]).unwrap();
        assert!(build_continuum(&g4, &bad, &SingleSiteProfile::tent(1.0, 2.0, 0.5), &d4).is_err());
    }

    #[test]
    fn covering_lower_bound() {
        let g = TorusGeometry::continuum(2, 6, 0.25).unwrap();
        let dist = SiteDistribution::uniform(1.0);
        let d = sample_disorder(&dist, &g, 4, 1).unwrap();
        let c = d.values().iter().cloned().fold(f64::INFINITY, f64::min);
        let p = SingleSiteProfile::tent(1.0, 3.0, 0.3);
        let h = build_continuum(&g, &PeriodicPotential::Zero, &p, &d).unwrap();
        let lap = 4.0 / 0.0625;
        for v in h.diagonal() {
            assert!(v - lap >= c * 0.3 - 1e-12);
        }
    }

    #[test]
    fn rank_one_linearity_and_identity() {
        let g = TorusGeometry::lattice(2, 4).unwrap();
        let d = sample_disorder(&SiteDistribution::uniform(1.0), &g, 1, 1).unwrap();
        let h = build_lattice(&g, &d).unwrap();
        assert_eq!(h.add_rank_one(3, 0.0).unwrap().to_dense(), h.to_dense());
        let a = h.add_rank_one(3, 0.5).unwrap().add_rank_one(3, 0.25).unwrap();
        let b = h.add_rank_one(3, 0.75).unwrap();
        assert_eq!(a.to_dense(), b.to_dense());
        assert_eq!(h.max_asymmetry(), 0.0);
    }

    #[test]
    fn coordinate_export() {
        let g = TorusGeometry::lattice(1, 3).unwrap();
        let d = DisorderRealization::from_values(g.clone(), vec![0.0; 3]).unwrap();
        let h = build_lattice(&g, &d).unwrap();
        let mut buf = Vec::new();
        h.write_coordinate_list(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 9);
    }

    #[test]
    fn side_two_has_double_edges() {
        let g = TorusGeometry::lattice(1, 2).unwrap();
        let d = DisorderRealization::from_values(g.clone(), vec![0.0; 2]).unwrap();
        let m = build_lattice(&g, &d).unwrap().to_dense();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[2.0, -2.0, -2.0, 2.0]));
    }
}
