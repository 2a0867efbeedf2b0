//! Banded LDLᵀ kernels and a Bunch–Kaufman inertia count.

use nalgebra::DMatrix;
use num_traits::NumAssign;

/// Lanes processed together by the multi-shift inertia count.
const LANES: usize = 8;

/// Symmetric matrix stored as a lower band in a reordered basis.
#[derive(Clone, Debug)]
pub(crate) struct BandSym {
    n: usize,
    bw: usize,
    /// `perm[pos]` is the original index stored at band position `pos`.
    perm: Vec<usize>,
    /// Row-major, `bw + 1` slots per row; slot `bw` is the diagonal.
    band: Vec<f64>,
    pivmin: f64,
    /// Pivots below this magnitude make the count untrustworthy (element growth).
    /// The last pivot is exempt: nothing is eliminated after it.
    safe_pivot: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub(crate) struct Inertia {
    pub negative: usize,
    /// A pivot small enough that the rest of the elimination may have lost accuracy.
    pub tiny_pivot: bool,
    pub non_finite: bool,
}

/// Relative pivot size below which a band count is recomputed another way.
pub(crate) const SAFE_PIVOT_REL: f64 = 1e-9;

impl BandSym {
    /// Build from the diagonal and the strict upper entries `(i, j, a_ij)`, `i < j`.
    pub fn new(diag: &[f64], upper: &[(usize, usize, f64)], perm: Vec<usize>) -> Self {
        let n = diag.len();
        let mut inv = vec![0; n];
        for (p, &i) in perm.iter().enumerate() {
            inv[i] = p;
        }
        let bw = upper
            .iter()
            .map(|&(i, j, _)| inv[i].abs_diff(inv[j]))
            .max()
            .unwrap_or(0);
        let w = bw + 1;
        let mut band = vec![0.0; n * w];
        for (i, &d) in diag.iter().enumerate() {
            band[inv[i] * w + bw] += d;
        }
        let mut offmax: f64 = 0.0;
        let diagmax = diag.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        for &(i, j, v) in upper {
            let (pi, pj) = (inv[i], inv[j]);
            let (r, c) = if pi > pj { (pi, pj) } else { (pj, pi) };
            band[r * w + bw - (r - c)] += v;
            offmax = offmax.max(v.abs());
        }
        let pivmin = f64::MIN_POSITIVE / f64::EPSILON * offmax.powi(2).max(1.0);
        Self {
            n,
            bw,
            perm,
            band,
            pivmin,
            safe_pivot: SAFE_PIVOT_REL * diagmax.max(offmax).max(1.0),
        }
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn a(&self, r: usize, c: usize) -> f64 {
        self.band[r * (self.bw + 1) + self.bw - (r - c)]
    }

    /// Number of negative pivots of `A - s` for every shift `s`.
    pub fn inertia_many(&self, shifts: &[f64]) -> Vec<Inertia> {
        let mut out = Vec::with_capacity(shifts.len());
        for chunk in shifts.chunks(LANES) {
            let mut s = [chunk[0]; LANES];
            s[..chunk.len()].copy_from_slice(chunk);
            let r = self.inertia_lanes(&s);
            out.extend_from_slice(&r[..chunk.len()]);
        }
        out
    }

    fn inertia_lanes(&self, shifts: &[f64; LANES]) -> [Inertia; LANES] {
        if self.bw == 2 {
            return self.inertia_lanes_bw2(shifts);
        }
        let (n, bw) = (self.n, self.bw);
        let ring = bw + 1;
        // l[(row % ring) * bw + off][lane], off = col - (row - bw)
        let mut l = vec![[0.0f64; LANES]; ring * bw.max(1)];
        let mut w = vec![[0.0f64; LANES]; ring * bw.max(1)];
        let mut d = vec![[0.0f64; LANES]; ring];
        let mut res = [Inertia::default(); LANES];
        for i in 0..n {
            let ri = i % ring;
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                let rj = j % ring;
                let oi_j = j + bw - i;
                let mut s = [self.a(i, j); LANES];
                for k in j0..j {
                    let oi = k + bw - i;
                    let oj = k + bw - j;
                    let wik = &w[ri * bw + oi];
                    let ljk = &l[rj * bw + oj];
                    for q in 0..LANES {
                        s[q] -= wik[q] * ljk[q];
                    }
                }
                let dj = &d[rj];
                let mut lij = [0.0; LANES];
                for q in 0..LANES {
                    lij[q] = s[q] / dj[q];
                }
                w[ri * bw + oi_j] = s;
                l[ri * bw + oi_j] = lij;
            }
            let mut di = [self.a(i, i); LANES];
            for q in 0..LANES {
                di[q] -= shifts[q];
            }
            for k in j0..i {
                let o = k + bw - i;
                let wik = &w[ri * bw + o];
                let lik = &l[ri * bw + o];
                for q in 0..LANES {
                    di[q] -= wik[q] * lik[q];
                }
            }
            for q in 0..LANES {
                let v = di[q];
                if !v.is_finite() {
                    res[q].non_finite = true;
                    di[q] = -self.pivmin;
                    res[q].negative += 1;
                    continue;
                }
                if v.abs() < self.safe_pivot && i + 1 < n {
                    res[q].tiny_pivot = true;
                }
                if v.abs() < self.pivmin {
                    di[q] = -self.pivmin;
                    res[q].negative += 1;
                } else if v < 0.0 {
                    res[q].negative += 1;
                }
            }
            d[ri] = di;
        }
        res
    }

    fn inertia_lanes_bw2(&self, shifts: &[f64; LANES]) -> [Inertia; LANES] {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { self.inertia_lanes_bw2_avx(shifts) };
        }
        self.inertia_lanes_bw2_body(shifts)
    }

    /// Wider vectors, same rounding: no FMA contraction is enabled.
    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx")]
    unsafe fn inertia_lanes_bw2_avx(&self, shifts: &[f64; LANES]) -> [Inertia; LANES] {
        self.inertia_lanes_bw2_body(shifts)
    }

    /// Same recurrence as the general kernel, unrolled for bandwidth 2
    /// (every periodic chain in the zigzag order).
    #[inline(always)]
    fn inertia_lanes_bw2_body(&self, shifts: &[f64; LANES]) -> [Inertia; LANES] {
        // reciprocal pivots of the two previous rows and l_{i-1,i-2}
        let mut r1 = [1.0f64; LANES];
        let mut r2 = [1.0f64; LANES];
        let mut lp = [0.0f64; LANES];
        // branch-free bookkeeping so the lane loop vectorizes
        let mut neg = [0.0f64; LANES];
        let mut min_abs = [f64::INFINITY; LANES];
        let mut nan = [0.0f64; LANES];
        let pivmin = self.pivmin;
        let mut step = |row: &[f64], min_abs: &mut [f64; LANES]| {
            let (a2, a1, a0) = (row[0], row[1], row[2]);
            for q in 0..LANES {
                let l2 = a2 * r2[q];
                let s1 = a1 - a2 * lp[q];
                let l1 = s1 * r1[q];
                let v = a0 - shifts[q] - a2 * l2 - s1 * l1;
                // NaN iff v is not finite
                nan[q] += v * 0.0;
                min_abs[q] = min_abs[q].min(v.abs());
                let v = if v.abs() >= pivmin { v } else { -pivmin };
                neg[q] += if v < 0.0 { 1.0 } else { 0.0 };
                r2[q] = r1[q];
                r1[q] = 1.0 / v;
                lp[q] = l1;
            }
        };
        let rows = self.band.chunks_exact(3);
        let n = rows.len();
        let mut last_abs = [f64::INFINITY; LANES];
        for (i, row) in rows.enumerate() {
            if i + 1 < n {
                step(row, &mut min_abs);
            } else {
                step(row, &mut last_abs);
            }
        }
        std::array::from_fn(|q| Inertia {
            negative: neg[q] as usize,
            tiny_pivot: min_abs[q] < self.safe_pivot,
            non_finite: nan[q].is_nan(),
        })
    }

    /// Factor `A - shift` without pivoting.
    pub fn factor<T>(&self, shift: T) -> BandLdlt<T>
    where
        T: Copy + NumAssign + From<f64>,
    {
        let (n, bw) = (self.n, self.bw);
        let mut l = vec![T::zero(); n * bw.max(1)];
        let mut w = vec![T::zero(); n * bw.max(1)];
        let mut d = vec![T::zero(); n];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..i {
                let mut s: T = self.a(i, j).into();
                for k in j0..j {
                    s -= w[i * bw + (k + bw - i)] * l[j * bw + (k + bw - j)];
                }
                w[i * bw + (j + bw - i)] = s;
                l[i * bw + (j + bw - i)] = s / d[j];
            }
            let mut di: T = T::from(self.a(i, i)) - shift;
            for k in j0..i {
                let o = k + bw - i;
                di -= w[i * bw + o] * l[i * bw + o];
            }
            d[i] = di;
        }
        BandLdlt { n, bw, l, d }
    }

    pub fn to_original(&self, pos: usize) -> usize {
        self.perm[pos]
    }

    /// Solve `(A - shift) x = b` in the original basis.
    pub fn solve<T>(&self, f: &BandLdlt<T>, b: &[T]) -> Vec<T>
    where
        T: Copy + NumAssign + From<f64>,
    {
        let mut y: Vec<T> = (0..self.n).map(|p| b[self.perm[p]]).collect();
        f.solve_in_place(&mut y);
        let mut x = vec![T::zero(); self.n];
        for p in 0..self.n {
            x[self.perm[p]] = y[p];
        }
        x
    }

    /// Matrix-vector product in the original basis.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let (n, bw) = (self.n, self.bw);
        let xp: Vec<f64> = (0..n).map(|p| x[self.perm[p]]).collect();
        let mut yp = vec![0.0; n];
        for i in 0..n {
            yp[i] += self.a(i, i) * xp[i];
            for j in i.saturating_sub(bw)..i {
                let a = self.a(i, j);
                yp[i] += a * xp[j];
                yp[j] += a * xp[i];
            }
        }
        let mut y = vec![0.0; n];
        for p in 0..n {
            y[self.perm[p]] = yp[p];
        }
        y
    }
}

/// `LDLᵀ` factors of a banded matrix with unit lower-triangular `L`.
#[derive(Clone, Debug)]
pub(crate) struct BandLdlt<T> {
    n: usize,
    bw: usize,
    l: Vec<T>,
    d: Vec<T>,
}

impl<T: Copy + NumAssign> BandLdlt<T> {
    pub fn pivots(&self) -> &[T] {
        &self.d
    }

    pub fn solve_in_place(&self, y: &mut [T]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[i * bw + (k + bw - i)] * y[k];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.l[k * bw + (i + bw - k)] * y[k];
            }
            y[i] = s;
        }
    }
}

/// Symmetric tridiagonal matrix with the Sturm count.
#[derive(Clone, Debug)]
pub(crate) struct Tridiagonal {
    diag: Vec<f64>,
    /// Squared off-diagonal entries.
    off2: Vec<f64>,
    pivmin: f64,
}

impl Tridiagonal {
    /// Householder reduction of a dense symmetric matrix.
    pub fn from_dense(m: DMatrix<f64>) -> Self {
        let n = m.nrows();
        if n < 2 {
            return Self::new(m.diagonal().iter().copied().collect(), Vec::new());
        }
        let t = nalgebra::linalg::SymmetricTridiagonal::new(m);
        let (d, e) = t.unpack_tridiagonal();
        Self::new(d.iter().copied().collect(), e.iter().copied().collect())
    }

    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        let off2: Vec<f64> = off.iter().map(|x| x * x).collect();
        let m = off2.iter().fold(1.0f64, |a, &b| a.max(b));
        Self {
            diag,
            off2,
            pivmin: f64::MIN_POSITIVE / f64::EPSILON * m,
        }
    }

    /// Number of pivots of `T − shift` that are negative; a pivot below
    /// `pivmin` in magnitude is replaced by `−pivmin`.
    pub fn negative_count(&self, shift: f64) -> Inertia {
        let mut res = Inertia::default();
        let mut d = 1.0;
        for (i, &a) in self.diag.iter().enumerate() {
            let b2 = if i == 0 { 0.0 } else { self.off2[i - 1] };
            d = a - shift - b2 / d;
            if !d.is_finite() {
                res.non_finite = true;
            }
            if !(d.abs() >= self.pivmin) {
                d = -self.pivmin;
            }
            res.negative += (d < 0.0) as usize;
        }
        res
    }
}

/// Negative eigenvalue count of `A - shift` via Bunch–Kaufman symmetric
/// indefinite factorization. Returns `(negatives, zero pivot seen, non-finite seen)`.
pub(crate) fn dense_inertia(a: &DMatrix<f64>, shift: f64) -> Inertia {
    let n = a.nrows();
    let mut m: Vec<f64> = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            m.push(a[(i, j)] - if i == j { shift } else { 0.0 });
        }
    }
    let idx = |i: usize, j: usize| i * n + j;
    let alpha = (1.0 + 17f64.sqrt()) / 8.0;
    let mut res = Inertia::default();
    let mut k = 0;
    while k < n {
        let absakk = m[idx(k, k)].abs();
        let (mut imax, mut colmax) = (k, 0.0);
        for i in k + 1..n {
            let v = m[idx(i, k)].abs();
            if v > colmax {
                colmax = v;
                imax = i;
            }
        }
        if !absakk.is_finite() || !colmax.is_finite() {
            res.non_finite = true;
        }
        if absakk.max(colmax) == 0.0 {
            res.tiny_pivot = true;
            res.negative += 1;
            k += 1;
            continue;
        }
        let (kp, kstep) = if absakk >= alpha * colmax {
            (k, 1)
        } else {
            let mut rowmax: f64 = 0.0;
            for j in k..n {
                if j != imax {
                    rowmax = rowmax.max(m[idx(imax, j)].abs());
                }
            }
            if absakk * rowmax >= alpha * colmax * colmax {
                (k, 1)
            } else if m[idx(imax, imax)].abs() >= alpha * rowmax {
                (imax, 1)
            } else {
                (imax, 2)
            }
        };
        let kk = k + kstep - 1;
        if kp != kk {
            for j in 0..n {
                m.swap(idx(kk, j), idx(kp, j));
            }
            for i in 0..n {
                m.swap(idx(i, kk), idx(i, kp));
            }
        }
        if kstep == 1 {
            let d = m[idx(k, k)];
            if d < 0.0 {
                res.negative += 1;
            } else if d == 0.0 {
                res.tiny_pivot = true;
                res.negative += 1;
                k += 1;
                continue;
            }
            for i in k + 1..n {
                let f = m[idx(i, k)] / d;
                if f == 0.0 {
                    continue;
                }
                for j in k + 1..n {
                    m[idx(i, j)] -= f * m[idx(k, j)];
                }
            }
        } else {
            let (a, b, c) = (m[idx(k, k)], m[idx(k + 1, k)], m[idx(k + 1, k + 1)]);
            let det = a * c - b * b;
            if det < 0.0 {
                res.negative += 1;
            } else if a + c < 0.0 {
                res.negative += 2;
            }
            for i in k + 2..n {
                let (x, y) = (m[idx(i, k)], m[idx(i, k + 1)]);
                // [x y] D⁻¹
                let p = (c * x - b * y) / det;
                let q = (a * y - b * x) / det;
                for j in k + 2..n {
                    m[idx(i, j)] -= p * m[idx(k, j)] + q * m[idx(k + 1, j)];
                }
            }
        }
        k += kstep;
    }
    res
}

/// Zig-zag position of coordinate `x` on a cycle of length `n`:
/// the order `0, n-1, 1, n-2, ...` keeps cyclic neighbours within distance 2.
pub(crate) fn zigzag_position(x: usize, n: usize) -> usize {
    if 2 * x <= n - 1 {
        2 * x
    } else {
        2 * (n - 1 - x) + 1
    }
}

/// Band ordering of a `per_axis^dim` torus grid: `perm[pos] = index`.
pub(crate) fn torus_band_order(per_axis: usize, dim: usize) -> Vec<usize> {
    torus_band_order_rotated(per_axis, dim, 0)
}

/// Band ordering after cyclically relabelling every axis by `shift`.
pub(crate) fn torus_band_order_rotated(per_axis: usize, dim: usize, shift: usize) -> Vec<usize> {
    let total = per_axis.pow(dim as u32);
    let mut perm = vec![0; total];
    for idx in 0..total {
        let mut rest = idx;
        let mut pos = 0;
        let mut stride = 1;
        for _ in 0..dim {
            pos += zigzag_position((rest + shift) % per_axis, per_axis) * stride;
            rest /= per_axis;
            stride *= per_axis;
        }
        perm[pos] = idx;
    }
    perm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize, diag: f64) -> (Vec<f64>, Vec<(usize, usize, f64)>) {
        let d = vec![diag; n];
        let mut up = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            if i != j {
                up.push((i.min(j), i.max(j), -1.0));
            }
        }
        (d, up)
    }

    #[test]
    fn zigzag_gives_bandwidth_two() {
        for n in 3..12 {
            let (d, up) = cycle(n, 2.0);
            let b = BandSym::new(&d, &up, torus_band_order(n, 1));
            assert_eq!(b.bandwidth(), 2, "n = {n}");
        }
    }

    #[test]
    fn cycle_counts_match_closed_form() {
        let n = 40;
        let (d, up) = cycle(n, 2.0);
        let b = BandSym::new(&d, &up, torus_band_order(n, 1));
        let ev: Vec<f64> = (0..n)
            .map(|k| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos())
            .collect();
        let shifts = [0.05, 0.5, 1.0, 1.7, 2.3, 3.1, 3.99, 4.1, -0.2];
        let got = b.inertia_many(&shifts);
        for (s, g) in shifts.iter().zip(&got) {
            let want = ev.iter().filter(|&&e| e < *s).count();
            if !g.tiny_pivot {
                assert_eq!(g.negative, want, "shift {s}");
            }
        }
        // shift 1 meets an exactly singular leading block
        assert!(got[2].tiny_pivot);
    }

    #[test]
    fn dense_inertia_matches_eigenvalues() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 2.0, 0.0, 2.0, 0.0]);
        // eigenvalues 0, ±√5
        assert_eq!(dense_inertia(&m, 0.5).negative, 2);
        assert_eq!(dense_inertia(&m, -0.5).negative, 1);
        assert_eq!(dense_inertia(&m, 3.0).negative, 3);
    }

    #[test]
    fn band_solve_roundtrip() {
        let (d, up) = cycle(9, 3.0);
        let b = BandSym::new(&d, &up, torus_band_order(9, 1));
        let f = b.factor(0.0f64);
        let x: Vec<f64> = (0..9).map(|i| i as f64 - 2.0).collect();
        let rhs = b.matvec(&x);
        let y = b.solve(&f, &rhs);
        for (a, c) in x.iter().zip(&y) {
            assert!((a - c).abs() < 1e-12);
        }
    }
}
