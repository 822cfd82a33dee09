//! Symmetric banded storage and inertia counting.
//!
//! Inertia is computed from an `LDLᵀ` factorization through Sylvester's
//! law. Banded matrices are factored without pivoting so the band is
//! preserved; matrices whose band covers the whole matrix go through a
//! Bunch–Kaufman factorization with symmetric pivoting instead. When a
//! banded factorization produces a pivot below the zero tolerance, the
//! counts are taken from the two shifted matrices `A ± εI`.

use std::io::{self, Write};

/// Symmetric matrix with `kd` sub-diagonals stored row by row:
/// entry `(i, i - d)` lives at `data[i * (kd + 1) + d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBandMatrix {
    n: usize,
    kd: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, kd: usize) -> Self {
        Self { n, kd, data: vec![0.0; n * (kd + 1)] }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), 0);
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    /// Symmetric tridiagonal from its diagonal and sub-diagonal.
    pub fn tridiagonal(diag: &[f64], sub: &[f64]) -> Self {
        assert_eq!(sub.len() + 1, diag.len().max(1));
        let mut m = Self::zeros(diag.len(), 1);
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        for (i, &e) in sub.iter().enumerate() {
            m.set(i + 1, i, e);
        }
        m
    }

    /// Takes the lower triangle of a dense row-major matrix.
    pub fn from_dense(n: usize, a: &[f64]) -> Self {
        let kd = n.saturating_sub(1);
        let mut m = Self::zeros(n, kd);
        for i in 0..n {
            for j in 0..=i {
                m.set(i, j, a[i * n + j]);
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.kd
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let d = i - j;
        (d <= self.kd && i < self.n).then(|| i * (self.kd + 1) + d)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Panics when `(i, j)` lies outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] += v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self + s · other`; both operands must share dimension and band.
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        assert_eq!((self.n, self.kd), (other.n, other.kd));
        Self {
            n: self.n,
            kd: self.kd,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + s * b).collect(),
        }
    }

    pub fn shifted(&self, sigma: f64) -> Self {
        let mut m = self.clone();
        for i in 0..self.n {
            m.data[i * (self.kd + 1)] -= sigma;
        }
        m
    }

    /// Principal submatrix on the index range `[start, end)`.
    pub fn principal(&self, start: usize, end: usize) -> Self {
        let mut m = Self::zeros(end - start, self.kd);
        for i in start..end {
            for j in i.saturating_sub(self.kd).max(start)..=i {
                m.set(i - start, j - start, self.get(i, j));
            }
        }
        m
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = self.get(i, j);
            }
        }
        a
    }

    /// Coordinate dump, one `row col value` line per stored entry of the
    /// lower triangle (0-based indices).
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> io::Result<()> {
        for i in 0..self.n {
            for j in i.saturating_sub(self.kd)..=i {
                let v = self.get(i, j);
                if v != 0.0 {
                    writeln!(w, "{i} {j} {v}")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inertia {
    pub negative: usize,
    pub zero: usize,
    pub positive: usize,
}

impl Inertia {
    pub fn dim(&self) -> usize {
        self.negative + self.zero + self.positive
    }

    pub fn is_positive_definite(&self) -> bool {
        self.negative == 0 && self.zero == 0
    }
}

/// Counts obtained from `A + εI` and `A - εI` after a pivot breakdown.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftBracket {
    pub eps: f64,
    /// Eigenvalues below `-ε`.
    pub below: usize,
    /// Eigenvalues below `+ε`.
    pub above: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaReport {
    pub inertia: Inertia,
    /// Present when the direct factorization broke down.
    pub fallback: Option<ShiftBracket>,
}

/// Default relative zero-pivot tolerance.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-9;

/// Inertia with pivots `|d| ≤ tol · max|aᵢⱼ|` classified as zero.
pub fn inertia(m: &SymBandMatrix, tol: f64) -> Inertia {
    inertia_report(m, tol).inertia
}

pub fn inertia_report(m: &SymBandMatrix, tol: f64) -> InertiaReport {
    let n = m.dim();
    if n == 0 {
        return InertiaReport { inertia: Inertia { negative: 0, zero: 0, positive: 0 }, fallback: None };
    }
    let scale = match m.max_abs() {
        s if s > 0.0 => s,
        _ => 1.0,
    };
    let eps = tol * scale;
    if m.bandwidth() + 1 >= n {
        let inertia = bunch_kaufman_inertia(n, m.to_dense(), eps);
        return InertiaReport { inertia, fallback: None };
    }
    match band_ldlt_pivots(m) {
        Some(d) if d.iter().all(|p| p.abs() > eps) => {
            let negative = d.iter().filter(|&&p| p < 0.0).count();
            InertiaReport { inertia: Inertia { negative, zero: 0, positive: n - negative }, fallback: None }
        }
        _ => {
            let below = negative_count(&m.shifted(-eps));
            let above = negative_count(&m.shifted(eps)).max(below);
            InertiaReport {
                inertia: Inertia { negative: below, zero: above - below, positive: n - above },
                fallback: Some(ShiftBracket { eps, below, above }),
            }
        }
    }
}

/// Plain `LDLᵀ` pivots of a banded matrix, `None` on an exact zero pivot.
fn band_ldlt_pivots(m: &SymBandMatrix) -> Option<Vec<f64>> {
    let (n, kd) = (m.dim(), m.bandwidth());
    // l[i][d] = L(i, i - d) for d in 1..=kd
    let mut l = vec![0.0; n * (kd + 1)];
    let mut d = vec![0.0; n];
    for j in 0..n {
        let lo = j.saturating_sub(kd);
        let mut djj = m.get(j, j);
        for k in lo..j {
            let ljk = l[j * (kd + 1) + (j - k)];
            djj -= ljk * ljk * d[k];
        }
        if djj == 0.0 || !djj.is_finite() {
            return None;
        }
        d[j] = djj;
        for i in (j + 1)..n.min(j + kd + 1) {
            let mut v = m.get(i, j);
            for k in i.saturating_sub(kd)..j {
                v -= l[i * (kd + 1) + (i - k)] * l[j * (kd + 1) + (j - k)] * d[k];
            }
            l[i * (kd + 1) + (i - j)] = v / djj;
        }
    }
    Some(d)
}

/// Number of negative eigenvalues, from the signs of the `LDLᵀ` pivots.
/// Exact zero pivots are replaced by a tiny negative value, so the result
/// counts eigenvalues below a perturbation of order `f64::MIN_POSITIVE`.
pub fn negative_count(m: &SymBandMatrix) -> usize {
    let (n, kd) = (m.dim(), m.bandwidth());
    if kd == 1 {
        return tridiagonal_negative_count(m);
    }
    let pivmin = f64::MIN_POSITIVE.max(m.max_abs() * f64::EPSILON * f64::EPSILON);
    let mut l = vec![0.0; n * (kd + 1)];
    let mut d = vec![0.0; n];
    let mut count = 0;
    for j in 0..n {
        let mut djj = m.get(j, j);
        for k in j.saturating_sub(kd)..j {
            let ljk = l[j * (kd + 1) + (j - k)];
            djj -= ljk * ljk * d[k];
        }
        if djj.abs() < pivmin {
            djj = -pivmin;
        }
        if djj < 0.0 {
            count += 1;
        }
        d[j] = djj;
        for i in (j + 1)..n.min(j + kd + 1) {
            let mut v = m.get(i, j);
            for k in i.saturating_sub(kd)..j {
                v -= l[i * (kd + 1) + (i - k)] * l[j * (kd + 1) + (j - k)] * d[k];
            }
            l[i * (kd + 1) + (i - j)] = v / djj;
        }
    }
    count
}

fn tridiagonal_negative_count(m: &SymBandMatrix) -> usize {
    let n = m.dim();
    let pivmin = f64::MIN_POSITIVE.max(m.max_abs() * f64::EPSILON * f64::EPSILON);
    let mut count = 0;
    let mut d = 1.0;
    for i in 0..n {
        let e = if i > 0 { m.data[i * 2 + 1] } else { 0.0 };
        let mut di = m.data[i * 2] - if i > 0 { e * e / d } else { 0.0 };
        if di.abs() < pivmin {
            di = -pivmin;
        }
        if di < 0.0 {
            count += 1;
        }
        d = di;
    }
    count
}

/// Inertia of a dense symmetric matrix (row-major, full storage) by
/// Bunch–Kaufman `LDLᵀ` with 1×1 and 2×2 pivots.
pub fn bunch_kaufman_inertia(n: usize, mut a: Vec<f64>, eps: f64) -> Inertia {
    let alpha = (1.0 + 17f64.sqrt()) / 8.0;
    let mut neg = 0;
    let mut zero = 0;
    let mut pos = 0;
    let at = |i: usize, j: usize| i * n + j;
    let mut k = 0;
    while k < n {
        let absakk = a[at(k, k)].abs();
        let (imax, colmax) = ((k + 1)..n)
            .map(|i| (i, a[at(i, k)].abs()))
            .fold((k, 0.0), |best, c| if c.1 > best.1 { c } else { best });
        if absakk.max(colmax) <= eps {
            zero += 1;
            k += 1;
            continue;
        }
        let mut size = 1;
        if absakk < alpha * colmax {
            let rowmax = (k..n).filter(|&j| j != imax).map(|j| a[at(imax, j)].abs()).fold(0.0, f64::max);
            if absakk * rowmax >= alpha * colmax * colmax {
                // 1x1 at k
            } else if a[at(imax, imax)].abs() >= alpha * rowmax {
                swap_sym(&mut a, n, k, imax);
            } else {
                swap_sym(&mut a, n, k + 1, imax);
                size = 2;
            }
        }
        if size == 1 {
            let d = a[at(k, k)];
            match d {
                d if d.abs() <= eps => zero += 1,
                d if d < 0.0 => neg += 1,
                _ => pos += 1,
            }
            if d != 0.0 {
                for i in (k + 1)..n {
                    let f = a[at(i, k)] / d;
                    for j in (k + 1)..=i {
                        a[at(i, j)] -= f * a[at(j, k)];
                        a[at(j, i)] = a[at(i, j)];
                    }
                }
            }
            k += 1;
        } else {
            let (e11, e21, e22) = (a[at(k, k)], a[at(k + 1, k)], a[at(k + 1, k + 1)]);
            let tr = e11 + e22;
            let disc = ((e11 - e22) * (e11 - e22) + 4.0 * e21 * e21).sqrt();
            for ev in [0.5 * (tr - disc), 0.5 * (tr + disc)] {
                match ev {
                    ev if ev.abs() <= eps => zero += 1,
                    ev if ev < 0.0 => neg += 1,
                    _ => pos += 1,
                }
            }
            let det = e11 * e22 - e21 * e21;
            // E^{-1} = [e22, -e21; -e21, e11] / det
            for i in (k + 2)..n {
                let (ci1, ci2) = (a[at(i, k)], a[at(i, k + 1)]);
                let w1 = (e22 * ci1 - e21 * ci2) / det;
                let w2 = (-e21 * ci1 + e11 * ci2) / det;
                for j in (k + 2)..=i {
                    let (cj1, cj2) = (a[at(j, k)], a[at(j, k + 1)]);
                    a[at(i, j)] -= w1 * cj1 + w2 * cj2;
                    a[at(j, i)] = a[at(i, j)];
                }
            }
            k += 2;
        }
    }
    Inertia { negative: neg, zero, positive: pos }
}

fn swap_sym(a: &mut [f64], n: usize, p: usize, q: usize) {
    if p == q {
        return;
    }
    for j in 0..n {
        a.swap(p * n + j, q * n + j);
    }
    for i in 0..n {
        a.swap(i * n + p, i * n + q);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_inertia() {
        let m = SymBandMatrix::from_diagonal(&[1.0, -2.0, 3.0]);
        assert_eq!(inertia(&m, 1e-9), Inertia { negative: 1, zero: 0, positive: 2 });
    }

    #[test]
    fn zero_matrix_is_all_kernel() {
        let m = SymBandMatrix::zeros(2, 1);
        assert_eq!(inertia(&m, 1e-9), Inertia { negative: 0, zero: 2, positive: 0 });
        let m = SymBandMatrix::zeros(5, 1);
        let rep = inertia_report(&m, 1e-9);
        assert_eq!(rep.inertia, Inertia { negative: 0, zero: 5, positive: 0 });
        assert!(rep.fallback.is_some());
    }

    #[test]
    fn singular_tridiagonal_uses_shift_bracket() {
        // second-difference matrix shifted onto its smallest eigenvalue
        let n = 6;
        let h = std::f64::consts::PI / (n as f64 + 1.0);
        let mu = 2.0 - 2.0 * h.cos();
        let m = SymBandMatrix::tridiagonal(&vec![2.0 - mu; n], &vec![-1.0; n - 1]);
        let rep = inertia_report(&m, 1e-9);
        assert_eq!(rep.inertia, Inertia { negative: 0, zero: 1, positive: 5 });
    }

    #[test]
    fn tridiagonal_count_matches_known_spectrum() {
        // [[1,-1],[-1,3]] has eigenvalues 2 ± sqrt 2
        let m = SymBandMatrix::tridiagonal(&[1.0, 3.0], &[-1.0]);
        assert_eq!(negative_count(&m), 0);
        assert_eq!(negative_count(&m.shifted(1.0)), 1);
        assert_eq!(negative_count(&m.shifted(4.0)), 2);
    }

    #[test]
    fn band_and_dense_paths_agree() {
        let mut m = SymBandMatrix::zeros(6, 2);
        let vals = [4.0, -1.0, 0.5, -3.0, 2.0, 1.0];
        for i in 0..6 {
            m.set(i, i, vals[i]);
            if i >= 1 {
                m.set(i, i - 1, 0.7);
            }
            if i >= 2 {
                m.set(i, i - 2, -0.4);
            }
        }
        let banded = inertia(&m, 1e-12);
        let dense = bunch_kaufman_inertia(6, m.to_dense(), 1e-12 * m.max_abs());
        assert_eq!(banded, dense);
        assert_eq!(negative_count(&m), banded.negative);
    }

    #[test]
    fn two_by_two_pivot_block() {
        // zero diagonal forces a 2x2 pivot
        let a = vec![0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 2.0];
        let m = SymBandMatrix::from_dense(3, &a);
        assert_eq!(inertia(&m, 1e-12), Inertia { negative: 1, zero: 0, positive: 2 });
    }

    #[test]
    fn principal_submatrix() {
        let m = SymBandMatrix::tridiagonal(&[1.0, 2.0, 3.0, 4.0], &[0.1, 0.2, 0.3]);
        let s = m.principal(1, 3);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.get(0, 0), 2.0);
        assert_eq!(s.get(1, 0), 0.2);
        assert_eq!(s.get(1, 1), 3.0);
    }

    #[test]
    fn coordinate_dump() {
        let m = SymBandMatrix::tridiagonal(&[2.0, 2.0], &[-1.0]);
        let mut out = Vec::new();
        m.write_coordinate(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0 0 2\n1 0 -1\n1 1 2\n");
    }
}
