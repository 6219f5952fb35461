//! Dense complex vectors and matrices, sized for reflection groups on C^2
//! and C^3 but generic in the dimension.
//!
//! The Hermitian inner product is conjugate-linear in the second slot:
//! `inner(a, b) = sum_i a_i * conj(b_i)`.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use num_complex::Complex64;

use crate::tol;

pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// `sum_i a_i conj(b_i)`; panics on length mismatch.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    assert_eq!(a.len(), b.len());
    let mut s = Complex64::ZERO;
    for (x, y) in a.iter().zip(b) {
        s += x * y.conj();
    }
    s
}

pub fn vec_norm(a: &[Complex64]) -> f64 {
    let mut s = 0.0;
    for x in a {
        s += x.norm_sqr();
    }
    libm::sqrt(s)
}

pub fn vec_dist(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += (x - y).norm_sqr();
    }
    libm::sqrt(s)
}

/// Rotates a vector by a unit phase so its first coordinate of modulus
/// above the anchor threshold becomes real positive, then rescales to unit
/// norm. Returns `None` for the zero vector.
pub fn canonical_root(v: &[Complex64]) -> Option<Vec<Complex64>> {
    let n = vec_norm(v);
    if n == 0.0 {
        return None;
    }
    let mut out: Vec<Complex64> = v.iter().map(|x| x / n).collect();
    let anchor = out.iter().find(|x| x.norm() > tol::PHASE_ANCHOR)?;
    let phase = anchor.conj() / anchor.norm();
    for x in out.iter_mut() {
        *x *= phase;
    }
    Some(out)
}

fn quantize(x: f64) -> i64 {
    // 1e-10 resolution: finer than element matching, coarser than the
    // arithmetic noise of closure products.
    libm::round(x * 1e10) as i64
}

/// Deterministic lexicographic order on quantized (re, im) coordinate
/// sequences. Used to sort group elements and hyperplane roots.
pub fn lex_cmp_slices(a: &[Complex64], b: &[Complex64]) -> Ordering {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        match quantize(x.re).cmp(&quantize(y.re)) {
            Ordering::Equal => {}
            o => return o,
        }
        match quantize(x.im).cmp(&quantize(y.im)) {
            Ordering::Equal => {}
            o => return o,
        }
    }
    Ordering::Equal
}

/// Square complex matrix, row major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    n: usize,
    a: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix { n, a: vec![Complex64::ZERO; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i * n + i] = Complex64::ONE;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn diagonal(d: &[Complex64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, x) in d.iter().enumerate() {
            m.a[i * d.len() + i] = *x;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.a[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.a[i * self.n + j] = v;
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.a
    }

    pub fn mul(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self.a[i * n + k];
                if aik == Complex64::ZERO {
                    continue;
                }
                for j in 0..n {
                    out.a[i * n + j] += aik * rhs.a[k * n + j];
                }
            }
        }
        out
    }

    /// `out = M v`.
    pub fn apply(&self, v: &[Complex64], out: &mut [Complex64]) {
        assert_eq!(v.len(), self.n);
        assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let mut s = Complex64::ZERO;
            for j in 0..self.n {
                s += self.a[i * self.n + j] * v[j];
            }
            out[i] = s;
        }
    }

    pub fn apply_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::ZERO; self.n];
        self.apply(v, &mut out);
        out
    }

    /// Conjugate transpose; the inverse for unitary matrices.
    pub fn adjoint(&self) -> CMatrix {
        let n = self.n;
        CMatrix::from_fn(n, |i, j| self.a[j * n + i].conj())
    }

    pub fn frobenius_dist(&self, rhs: &CMatrix) -> f64 {
        assert_eq!(self.n, rhs.n);
        let mut s = 0.0;
        for (x, y) in self.a.iter().zip(&rhs.a) {
            s += (x - y).norm_sqr();
        }
        libm::sqrt(s)
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.frobenius_dist(&CMatrix::identity(self.n)) <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.mul(&self.adjoint()).is_identity(tol)
    }

    /// LU with partial pivoting; exact enough for the unit-modulus entries
    /// seen here.
    pub fn det(&self) -> Complex64 {
        let n = self.n;
        let mut a = self.a.clone();
        let mut det = Complex64::ONE;
        for col in 0..n {
            let (pivot_row, pivot_norm) = (col..n)
                .map(|r| (r, a[r * n + col].norm()))
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
                .unwrap();
            if pivot_norm == 0.0 {
                return Complex64::ZERO;
            }
            if pivot_row != col {
                for j in 0..n {
                    a.swap(pivot_row * n + j, col * n + j);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for r in (col + 1)..n {
                let f = a[r * n + col] / p;
                for j in col..n {
                    let v = a[col * n + j];
                    a[r * n + j] -= f * v;
                }
            }
        }
        det
    }

    /// Numerical rank by Gaussian elimination with full pivoting; entries
    /// below `threshold` never pivot.
    pub fn rank(&self, threshold: f64) -> usize {
        let n = self.n;
        let mut a = self.a.clone();
        let mut rank = 0;
        let mut rows: Vec<usize> = (0..n).collect();
        let mut cols: Vec<usize> = (0..n).collect();
        while rank < n {
            let mut best = (0usize, 0usize, 0.0f64);
            for (ri, &r) in rows.iter().enumerate().skip(rank) {
                for (ci, &c) in cols.iter().enumerate().skip(rank) {
                    let m = a[r * n + c].norm();
                    if m > best.2 {
                        best = (ri, ci, m);
                    }
                }
            }
            if best.2 <= threshold {
                break;
            }
            rows.swap(rank, best.0);
            cols.swap(rank, best.1);
            let pr = rows[rank];
            let pc = cols[rank];
            let p = a[pr * n + pc];
            for &r in rows.iter().skip(rank + 1) {
                let f = a[r * n + pc] / p;
                for &c in cols.iter().skip(rank) {
                    let v = a[pr * n + c];
                    a[r * n + c] -= f * v;
                }
            }
            rank += 1;
        }
        rank
    }

    /// Least k >= 1 with M^k = I (within element tolerance), or `None`
    /// past the cap.
    pub fn order(&self, cap: usize) -> Option<u32> {
        let mut m = self.clone();
        for k in 1..=cap {
            if m.is_identity(tol::ELEMENT_MATCH) {
                return Some(k as u32);
            }
            m = m.mul(self);
        }
        None
    }

    /// Column of largest norm, as a vector. For a rank-one matrix this
    /// spans the range.
    pub fn dominant_column(&self) -> Vec<Complex64> {
        let n = self.n;
        let best = (0..n)
            .max_by(|&i, &j| {
                let ni: f64 = (0..n).map(|r| self.a[r * n + i].norm_sqr()).sum();
                let nj: f64 = (0..n).map(|r| self.a[r * n + j].norm_sqr()).sum();
                ni.partial_cmp(&nj).unwrap()
            })
            .unwrap();
        (0..n).map(|r| self.a[r * n + best]).collect()
    }

    pub fn sub(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        CMatrix::from_fn(n, |i, j| self.a[i * n + j] - rhs.a[i * n + j])
    }

    pub fn lex_cmp(&self, rhs: &CMatrix) -> Ordering {
        lex_cmp_slices(&self.a, &rhs.a)
    }
}
