//! Torus geometry, single-site distributions and reproducible disorder.
//!
//! Disorder values are drawn from a counter-based stream: the ChaCha key is
//! derived from `(master_seed, trial)` and the word position from the global
//! lattice coordinates of the site. A value therefore depends only on
//! `(master_seed, trial, site coordinates)`, which makes ensembles independent
//! of scheduling and lets sub-boxes and super-boxes share values on their
//! overlap.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

const MODULE: &str = "model";

/// Per-axis stride of the global site key. Sides and origins must stay below it.
pub const SITE_KEY_STRIDE: u64 = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Lattice,
    Continuum,
}

/// A periodic box `[0, L)^d` with either one grid point per integer site
/// (lattice) or `1/h` grid points per unit length (continuum).
#[derive(Clone, Debug, PartialEq)]
pub struct TorusGeometry {
    dim: usize,
    side: usize,
    mode: Mode,
    mesh: f64,
    per_axis: usize,
}

impl TorusGeometry {
    pub fn lattice(dim: usize, side: usize) -> Result<Self> {
        check_dim_side(dim, side)?;
        Ok(Self {
            dim,
            side,
            mode: Mode::Lattice,
            mesh: 1.0,
            per_axis: side,
        })
    }

    /// Continuum torus of even side `side` discretized with mesh `h`.
    ///
    /// `1/h` must be an integer so that disorder sites and periodic cells sit
    /// on grid points.
    pub fn continuum(dim: usize, side: usize, mesh: f64) -> Result<Self> {
        check_dim_side(dim, side)?;
        if side % 2 != 0 {
            return Err(Error::geometry(MODULE, format!("continuum side must be even, got {side}")));
        }
        if !(mesh.is_finite() && mesh > 0.0 && mesh <= 1.0) {
            return Err(Error::param(MODULE, "mesh", format!("must lie in (0, 1], got {mesh}")));
        }
        let inv = 1.0 / mesh;
        let m = inv.round();
        if (inv - m).abs() > 1e-9 * m {
            return Err(Error::geometry(MODULE, format!("1/h = {inv} is not an integer")));
        }
        let per_axis_f = side as f64 / mesh;
        let per_axis = per_axis_f.round();
        if (per_axis_f - per_axis).abs() > 1e-9 * per_axis {
            return Err(Error::geometry(MODULE, format!("L/h = {per_axis_f} is not an integer")));
        }
        Ok(Self {
            dim,
            side,
            mode: Mode::Continuum,
            mesh: 1.0 / m,
            per_axis: per_axis as usize,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn mesh(&self) -> f64 {
        self.mesh
    }

    /// Grid points per unit length (1 for the lattice).
    pub fn points_per_unit(&self) -> usize {
        self.per_axis / self.side
    }

    pub fn points_per_axis(&self) -> usize {
        self.per_axis
    }

    /// Matrix dimension: `L^d` (lattice) or `(L/h)^d` (continuum).
    pub fn n_points(&self) -> usize {
        self.per_axis.pow(self.dim as u32)
    }

    /// Number of disorder sites `|Λ ∩ ℤ^d| = L^d`.
    pub fn n_sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    /// `|Λ| = L^d`.
    pub fn volume(&self) -> f64 {
        (self.side as f64).powi(self.dim as i32)
    }

    /// Same mode and mesh, different side.
    pub fn with_side(&self, side: usize) -> Result<Self> {
        match self.mode {
            Mode::Lattice => Self::lattice(self.dim, side),
            Mode::Continuum => Self::continuum(self.dim, side, self.mesh),
        }
    }

    pub fn point_coords(&self, idx: usize) -> Vec<usize> {
        unravel(idx, self.per_axis, self.dim)
    }

    pub fn point_index(&self, coords: &[usize]) -> usize {
        ravel(coords, self.per_axis)
    }

    pub fn site_coords(&self, site: usize) -> Vec<usize> {
        unravel(site, self.side, self.dim)
    }

    pub fn site_index(&self, coords: &[usize]) -> usize {
        ravel(coords, self.side)
    }

    /// Grid point carrying the disorder site (the site itself on the lattice).
    pub fn site_point(&self, site: usize) -> usize {
        let m = self.points_per_unit();
        let c: Vec<usize> = self.site_coords(site).into_iter().map(|x| x * m).collect();
        self.point_index(&c)
    }

    /// Euclidean distance between two sites on the torus.
    pub fn site_distance(&self, a: usize, b: usize) -> f64 {
        let ca = self.site_coords(a);
        let cb = self.site_coords(b);
        let l = self.side;
        ca.iter()
            .zip(&cb)
            .map(|(&x, &y)| {
                let d = x.abs_diff(y);
                let d = d.min(l - d) as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Site obtained by translating `site` by `shift` (componentwise, modulo L).
    pub fn translate_site(&self, site: usize, shift: &[usize]) -> usize {
        let c: Vec<usize> = self
            .site_coords(site)
            .iter()
            .zip(shift)
            .map(|(&x, &s)| (x + s) % self.side)
            .collect();
        self.site_index(&c)
    }

    /// Grid points of the unit box `Λ_1(x)` around disorder site `x`.
    pub fn unit_block(&self, site: usize) -> Vec<usize> {
        let m = self.points_per_unit();
        if m == 1 {
            return vec![self.site_point(site)];
        }
        let n = self.per_axis;
        let center: Vec<usize> = self.site_coords(site).iter().map(|&x| x * m).collect();
        // half-open [-1/2, 1/2) in units of the mesh: offsets k with -m/2 <= k < m/2
        let lo = -((m / 2) as i64);
        let hi = lo + m as i64;
        let mut out = Vec::with_capacity(m.pow(self.dim as u32));
        let mut offs = vec![lo; self.dim];
        loop {
            let c: Vec<usize> = center
                .iter()
                .zip(&offs)
                .map(|(&x, &o)| (x as i64 + o).rem_euclid(n as i64) as usize)
                .collect();
            out.push(self.point_index(&c));
            let mut axis = 0;
            loop {
                if axis == self.dim {
                    out.sort_unstable();
                    return out;
                }
                offs[axis] += 1;
                if offs[axis] < hi {
                    break;
                }
                offs[axis] = lo;
                axis += 1;
            }
        }
    }
}

fn check_dim_side(dim: usize, side: usize) -> Result<()> {
    if dim == 0 || dim > 3 {
        return Err(Error::param(MODULE, "dim", format!("must be 1, 2 or 3, got {dim}")));
    }
    if side == 0 || side as u64 >= SITE_KEY_STRIDE {
        return Err(Error::param(MODULE, "side", format!("out of range: {side}")));
    }
    Ok(())
}

pub(crate) fn unravel(mut idx: usize, n: usize, dim: usize) -> Vec<usize> {
    let mut c = Vec::with_capacity(dim);
    for _ in 0..dim {
        c.push(idx % n);
        idx /= n;
    }
    c
}

pub(crate) fn ravel(coords: &[usize], n: usize) -> usize {
    coords.iter().rev().fold(0, |acc, &x| acc * n + x)
}

/// Shape of the single-site distribution before coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionKind {
    /// Uniform density `1/M` on `[0, M]`.
    Uniform { m_rho: f64 },
    /// Piecewise-constant density: `density[k]` on `(breaks[k], breaks[k+1]]`,
    /// with `breaks[0] = 0` and `breaks.last() = M`.
    UniformLike { breaks: Vec<f64>, density: Vec<f64> },
    /// Atomless distribution given by a piecewise-linear quantile table
    /// `F⁻¹(u[k]) = x[k]`, with `u` from 0 to 1 and `x` strictly increasing
    /// from 0. A repeated `u` value encodes a gap in the support.
    Quantile { u: Vec<f64>, x: Vec<f64> },
}

/// Single-site distribution `μ` together with the coupling `λ` applied after sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteDistribution {
    #[serde(flatten)]
    pub kind: DistributionKind,
    #[serde(default = "one")]
    pub coupling: f64,
}

fn one() -> f64 {
    1.0
}

impl SiteDistribution {
    pub fn uniform(m_rho: f64) -> Self {
        Self {
            kind: DistributionKind::Uniform { m_rho },
            coupling: 1.0,
        }
    }

    pub fn uniform_like(breaks: Vec<f64>, density: Vec<f64>) -> Self {
        Self {
            kind: DistributionKind::UniformLike { breaks, density },
            coupling: 1.0,
        }
    }

    pub fn quantile_table(u: Vec<f64>, x: Vec<f64>) -> Self {
        Self {
            kind: DistributionKind::Quantile { u, x },
            coupling: 1.0,
        }
    }

    pub fn with_coupling(mut self, coupling: f64) -> Self {
        self.coupling = coupling;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coupling.is_finite() && self.coupling >= 0.0) {
            return Err(Error::param(MODULE, "coupling", format!("must be finite and >= 0, got {}", self.coupling)));
        }
        match &self.kind {
            DistributionKind::Uniform { m_rho } => {
                if !(m_rho.is_finite() && *m_rho > 0.0) {
                    return Err(Error::param(MODULE, "m_rho", format!("must be > 0, got {m_rho}")));
                }
            }
            DistributionKind::UniformLike { breaks, density } => {
                if breaks.len() < 2 || density.len() + 1 != breaks.len() {
                    return Err(Error::param(MODULE, "breaks", "need k+1 breakpoints for k density pieces"));
                }
                if breaks[0] != 0.0 {
                    return Err(Error::param(MODULE, "breaks", "support must start at 0"));
                }
                if breaks.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
                    return Err(Error::param(MODULE, "breaks", "must be strictly increasing and finite"));
                }
                if density.iter().any(|&r| !(r.is_finite() && r > 0.0)) {
                    return Err(Error::param(MODULE, "density", "uniform-like densities must be positive"));
                }
                let mass: f64 = breaks.windows(2).zip(density).map(|(w, r)| (w[1] - w[0]) * r).sum();
                if (mass - 1.0).abs() > 1e-9 {
                    return Err(Error::param(MODULE, "density", format!("must integrate to 1, got {mass}")));
                }
            }
            DistributionKind::Quantile { u, x } => {
                if u.len() < 2 || u.len() != x.len() {
                    return Err(Error::param(MODULE, "quantile", "u and x tables must have equal length >= 2"));
                }
                if u[0] != 0.0 || *u.last().unwrap() != 1.0 || x[0] != 0.0 {
                    return Err(Error::param(MODULE, "quantile", "table must run from (0, 0) to (1, M)"));
                }
                if u.windows(2).any(|w| w[1] < w[0]) {
                    return Err(Error::param(MODULE, "quantile", "u must be nondecreasing"));
                }
                if x.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
                    return Err(Error::param(MODULE, "quantile", "x must be strictly increasing (no atoms)"));
                }
                if u.windows(3).any(|w| w[0] == w[1] && w[1] == w[2]) {
                    return Err(Error::param(MODULE, "quantile", "consecutive gaps must be merged"));
                }
            }
        }
        Ok(())
    }

    /// Right endpoint `M_ρ` of the support (before coupling).
    pub fn m_rho(&self) -> f64 {
        match &self.kind {
            DistributionKind::Uniform { m_rho } => *m_rho,
            DistributionKind::UniformLike { breaks, .. } => *breaks.last().unwrap(),
            DistributionKind::Quantile { x, .. } => *x.last().unwrap(),
        }
    }

    /// `ρ₊ = ‖ρ‖∞` of the uncoupled density.
    pub fn rho_plus(&self) -> f64 {
        match &self.kind {
            DistributionKind::Uniform { m_rho } => 1.0 / m_rho,
            DistributionKind::UniformLike { density, .. } => density.iter().cloned().fold(0.0, f64::max),
            DistributionKind::Quantile { u, x } => u
                .windows(2)
                .zip(x.windows(2))
                .map(|(du, dx)| (du[1] - du[0]) / (dx[1] - dx[0]))
                .fold(0.0, f64::max),
        }
    }

    /// `ρ₋ = ess inf ρ` on `[0, M_ρ]`; zero when the support has gaps.
    pub fn rho_minus(&self) -> f64 {
        match &self.kind {
            DistributionKind::Uniform { m_rho } => 1.0 / m_rho,
            DistributionKind::UniformLike { density, .. } => density.iter().cloned().fold(f64::INFINITY, f64::min),
            DistributionKind::Quantile { u, x } => u
                .windows(2)
                .zip(x.windows(2))
                .map(|(du, dx)| (du[1] - du[0]) / (dx[1] - dx[0]))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Density bound of the coupled variable `λω`, `ρ₊/λ`; `None` when `λ = 0`.
    pub fn coupled_rho_plus(&self) -> Option<f64> {
        (self.coupling > 0.0).then(|| self.rho_plus() / self.coupling)
    }

    /// Concentration function `Q_μ(s) = ρ₊ s` of the coupled variable.
    pub fn concentration(&self, s: f64) -> Option<f64> {
        self.coupled_rho_plus().map(|r| r * s)
    }

    /// Inverse CDF `F⁻¹(u)` of the uncoupled distribution.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::param(MODULE, "u", format!("must lie in [0, 1], got {u}")));
        }
        Ok(self.quantile_unchecked(u))
    }

    fn quantile_unchecked(&self, u: f64) -> f64 {
        match &self.kind {
            DistributionKind::Uniform { m_rho } => u * m_rho,
            DistributionKind::UniformLike { breaks, density } => {
                let mut cdf = 0.0;
                for (k, &r) in density.iter().enumerate() {
                    let mass = (breaks[k + 1] - breaks[k]) * r;
                    if u <= cdf + mass || k + 1 == density.len() {
                        let x = breaks[k] + (u - cdf) / r;
                        return x.clamp(breaks[k], breaks[k + 1]);
                    }
                    cdf += mass;
                }
                unreachable!("density table is nonempty")
            }
            DistributionKind::Quantile { u: us, x } => {
                // first segment whose right end reaches u; gaps resolve to the left point
                let k = us.partition_point(|&v| v < u);
                if k == 0 {
                    return x[0];
                }
                let (u0, u1) = (us[k - 1], us[k]);
                if u1 == u0 {
                    return x[k - 1];
                }
                let t = (u - u0) / (u1 - u0);
                x[k - 1] + t * (x[k] - x[k - 1])
            }
        }
    }

    /// Coupled sample `λ F⁻¹(u)`.
    pub fn sample_from_uniform(&self, u: f64) -> f64 {
        self.coupling * self.quantile_unchecked(u)
    }
}

/// Seed material identifying one member of an ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedKey {
    pub master: u64,
    pub trial: u64,
}

/// Derive an independent master seed for a labelled sub-experiment.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

/// Counter-based uniform stream keyed by `(master, trial)`.
struct SiteStream {
    rng: ChaCha8Rng,
}

impl SiteStream {
    fn new(key: SeedKey) -> Self {
        let mut seed = [0u8; 32];
        seed[..8].copy_from_slice(&key.master.to_le_bytes());
        seed[8..16].copy_from_slice(&key.trial.to_le_bytes());
        seed[16..].copy_from_slice(b"site-couplings/1");
        Self {
            rng: ChaCha8Rng::from_seed(seed),
        }
    }

    /// Uniform values in [0, 1) for `count` consecutive site keys starting at `first_key`.
    fn fill_row(&mut self, first_key: u64, out: &mut [f64]) {
        self.rng.set_word_pos(2 * first_key as u128);
        for v in out.iter_mut() {
            *v = (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        }
    }
}

pub(crate) fn site_key(coords: &[usize]) -> u64 {
    coords.iter().rev().fold(0u64, |acc, &x| acc * SITE_KEY_STRIDE + x as u64)
}

/// Coupling values `ω_j` (already multiplied by `λ`) on the disorder sites of a torus.
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderRealization {
    geometry: TorusGeometry,
    values: Vec<f64>,
    key: SeedKey,
    origin: Vec<usize>,
}

/// Sample i.i.d. couplings for every disorder site of `geom`.
pub fn sample_disorder(dist: &SiteDistribution, geom: &TorusGeometry, master_seed: u64, trial: u64) -> Result<DisorderRealization> {
    sample_disorder_at(dist, geom, master_seed, trial, &vec![0; geom.dim()])
}

/// Like [`sample_disorder`] for a box whose site `0` sits at global lattice
/// coordinates `origin`. Boxes sampled with the same key agree on overlapping sites.
pub fn sample_disorder_at(
    dist: &SiteDistribution,
    geom: &TorusGeometry,
    master_seed: u64,
    trial: u64,
    origin: &[usize],
) -> Result<DisorderRealization> {
    dist.validate()?;
    if origin.len() != geom.dim() {
        return Err(Error::param(MODULE, "origin", "dimension mismatch"));
    }
    if origin.iter().any(|&o| (o + geom.side()) as u64 >= SITE_KEY_STRIDE) {
        return Err(Error::param(MODULE, "origin", "exceeds the site key range"));
    }
    let key = SeedKey { master: master_seed, trial };
    let mut stream = SiteStream::new(key);
    let l = geom.side();
    let n = geom.n_sites();
    let mut values = vec![0.0; n];
    let rows = n / l;
    let mut coords = vec![0usize; geom.dim()];
    for row in 0..rows {
        let rc = unravel(row, l, geom.dim() - 1);
        coords[0] = origin[0];
        for (a, &c) in rc.iter().enumerate() {
            coords[a + 1] = origin[a + 1] + c;
        }
        let slot = &mut values[row * l..(row + 1) * l];
        stream.fill_row(site_key(&coords), slot);
        for v in slot.iter_mut() {
            *v = dist.sample_from_uniform(*v);
        }
    }
    Ok(DisorderRealization {
        geometry: geom.clone(),
        values,
        key,
        origin: origin.to_vec(),
    })
}

impl DisorderRealization {
    /// Realization with explicit values (test fixtures, pinned experiments).
    pub fn from_values(geometry: TorusGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.n_sites() {
            return Err(Error::geometry(
                MODULE,
                format!("{} values for {} disorder sites", values.len(), geometry.n_sites()),
            ));
        }
        let dim = geometry.dim();
        Ok(Self {
            geometry,
            values,
            key: SeedKey { master: 0, trial: 0 },
            origin: vec![0; dim],
        })
    }

    pub fn geometry(&self) -> &TorusGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn key(&self) -> SeedKey {
        self.key
    }

    pub fn origin(&self) -> &[usize] {
        &self.origin
    }

    /// Copy with `ω_site` replaced by `value`.
    pub fn pinned(&self, site: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.values[site] = value;
        out
    }

    /// The couplings of the periodic sub-box of side `side` whose first site is
    /// at local coordinates `start` (wrapping around the torus).
    pub fn restrict(&self, start: &[usize], side: usize) -> Result<Self> {
        let sub = self.geometry.with_side(side)?;
        if side > self.geometry.side() {
            return Err(Error::geometry(MODULE, "sub-box larger than the box"));
        }
        let l = self.geometry.side();
        let values = (0..sub.n_sites())
            .map(|s| {
                let c: Vec<usize> = sub
                    .site_coords(s)
                    .iter()
                    .zip(start)
                    .map(|(&x, &o)| (x + o) % l)
                    .collect();
                self.values[self.geometry.site_index(&c)]
            })
            .collect();
        let origin = self.origin.iter().zip(start).map(|(&a, &b)| a + b).collect();
        Ok(Self {
            geometry: sub,
            values,
            key: self.key,
            origin,
        })
    }

    /// Global stream keys of every site, in site order.
    pub fn site_keys(&self) -> Vec<u64> {
        (0..self.geometry.n_sites())
            .map(|s| {
                let c: Vec<usize> = self
                    .geometry
                    .site_coords(s)
                    .iter()
                    .zip(&self.origin)
                    .map(|(&x, &o)| x + o)
                    .collect();
                site_key(&c)
            })
            .collect()
    }

    /// Short content hash of the values.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.values {
            h.update(v.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }

    /// Cyclic shift of the disorder by `shift` sites along every axis.
    pub fn translated(&self, shift: &[usize]) -> Self {
        let g = &self.geometry;
        let mut values = vec![0.0; self.values.len()];
        for s in 0..g.n_sites() {
            values[g.translate_site(s, shift)] = self.values[s];
        }
        Self {
            values,
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_coupling_gives_zero_disorder() {
        let g = TorusGeometry::lattice(2, 6).unwrap();
        let d = sample_disorder(&SiteDistribution::uniform(1.0).with_coupling(0.0), &g, 3, 0).unwrap();
        assert!(d.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_sample_mean() {
        let g = TorusGeometry::lattice(1, 100_000).unwrap();
        let d = sample_disorder(&SiteDistribution::uniform(1.0), &g, 11, 0).unwrap();
        let mean = d.values().iter().sum::<f64>() / 1e5;
        // 3σ with σ = (1/√12)/√10⁵
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn determinism_and_trial_independence() {
        let g = TorusGeometry::lattice(1, 10_000).unwrap();
        let dist = SiteDistribution::uniform(1.0);
        let a = sample_disorder(&dist, &g, 5, 7).unwrap();
        let b = sample_disorder(&dist, &g, 5, 7).unwrap();
        assert_eq!(a.values(), b.values());
        let c = sample_disorder(&dist, &g, 5, 8).unwrap();
        let (x, y) = (a.values(), c.values());
        let mx = x.iter().sum::<f64>() / 1e4;
        let my = y.iter().sum::<f64>() / 1e4;
        let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>();
        let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
        assert!((cov / (vx * vy).sqrt()).abs() < 0.05);
    }

    #[test]
    fn support_respects_coupling() {
        let g = TorusGeometry::lattice(1, 5000).unwrap();
        let dist = SiteDistribution::uniform_like(vec![0.0, 0.25, 1.0], vec![2.0, 2.0 / 3.0]).with_coupling(3.0);
        let d = sample_disorder(&dist, &g, 1, 2).unwrap();
        assert!(d.values().iter().all(|&v| (0.0..=3.0).contains(&v)));
    }

    #[test]
    fn quantile_examples() {
        let u = SiteDistribution::uniform(1.0);
        assert_eq!(u.quantile(0.25).unwrap(), 0.25);
        let ul = SiteDistribution::uniform_like(vec![0.0, 0.25, 1.0], vec![2.0, 2.0 / 3.0]);
        ul.validate().unwrap();
        assert!((ul.quantile(0.5).unwrap() - 0.25).abs() < 1e-15);
        let q = SiteDistribution::quantile_table(vec![0.0, 0.5, 0.5, 1.0], vec![0.0, 1.0, 2.0, 3.0]);
        q.validate().unwrap();
        for d in [&u, &ul, &q] {
            assert_eq!(d.quantile(0.0).unwrap(), 0.0);
            assert!((d.quantile(1.0).unwrap() - d.m_rho()).abs() < 1e-12);
        }
        assert_eq!(q.quantile(0.5).unwrap(), 1.0);
        assert!((q.quantile(0.75).unwrap() - 2.5).abs() < 1e-12);
        assert!(u.quantile(1.5).is_err());
        assert!(u.quantile(-0.1).is_err());
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(SiteDistribution::uniform(0.0).validate().is_err());
        assert!(SiteDistribution::uniform(1.0).with_coupling(-1.0).validate().is_err());
        assert!(SiteDistribution::uniform_like(vec![0.0, 1.0], vec![0.5]).validate().is_err());
        assert!(SiteDistribution::quantile_table(vec![0.0, 0.5, 1.0], vec![0.0, 0.0, 1.0]).validate().is_err());
        let g = TorusGeometry::lattice(1, 4).unwrap();
        assert!(sample_disorder(&SiteDistribution::uniform(-2.0), &g, 0, 0).is_err());
    }

    #[test]
    fn geometry_counts() {
        let g = TorusGeometry::continuum(2, 4, 0.25).unwrap();
        assert_eq!(g.n_points(), 256);
        assert_eq!(g.n_sites(), 16);
        assert_eq!(g.unit_block(0).len(), 16);
        assert!(TorusGeometry::continuum(1, 3, 0.5).is_err());
        assert!(TorusGeometry::continuum(1, 4, 0.3).is_err());
        let l = TorusGeometry::lattice(3, 5).unwrap();
        for i in [0, 7, 124] {
            assert_eq!(l.point_index(&l.point_coords(i)), i);
        }
        assert_eq!(l.site_distance(0, 4), 1.0);
    }

    #[test]
    fn restriction_matches_embedded_sampling() {
        let dist = SiteDistribution::uniform(1.0);
        let big = TorusGeometry::lattice(1, 64).unwrap();
        let d = sample_disorder(&dist, &big, 9, 3).unwrap();
        let sub = d.restrict(&[16], 16).unwrap();
        let direct = sample_disorder_at(&dist, &big.with_side(16).unwrap(), 9, 3, &[16]).unwrap();
        assert_eq!(sub.values(), direct.values());
        assert_eq!(sub.site_keys(), direct.site_keys());
    }
}
