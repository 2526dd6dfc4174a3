//! Small dense helpers shared by the solvers.
//!
//! Complex vectors are laid out as real vectors block by block: a vector made
//! of `b` blocks of `n` complex entries becomes `[Re blk0, Im blk0, Re blk1, Im blk1, ...]`.
//! A chart point `z` becomes `(q, p)`, an ambient point `(z, u)` becomes
//! `(Re z, Im z, Re u, Im u)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type C64 = Complex64;

pub const I: C64 = C64::new(0.0, 1.0);

/// Real index of `Re w_k` for a block-real layout with block size `n`.
#[inline]
pub fn re_index(k: usize, n: usize) -> usize {
    2 * n * (k / n) + k % n
}

/// Real index of `Im w_k`.
#[inline]
pub fn im_index(k: usize, n: usize) -> usize {
    re_index(k, n) + n
}

pub fn to_real(w: &[C64], n: usize) -> DVector<f64> {
    let mut v = DVector::zeros(2 * w.len());
    for (k, c) in w.iter().enumerate() {
        v[re_index(k, n)] = c.re;
        v[im_index(k, n)] = c.im;
    }
    v
}

pub fn from_real(v: &[f64], n: usize) -> Vec<C64> {
    let m = v.len() / 2;
    (0..m)
        .map(|k| C64::new(v[re_index(k, n)], v[im_index(k, n)]))
        .collect()
}

/// Real matrix of the complex-linear map `a` in the block-real layout.
pub fn real_rep(a: &DMatrix<C64>, n: usize) -> DMatrix<f64> {
    let (r, c) = a.shape();
    let mut out = DMatrix::zeros(2 * r, 2 * c);
    for i in 0..r {
        for j in 0..c {
            let e = a[(i, j)];
            let (ri, ii) = (re_index(i, n), im_index(i, n));
            let (rj, ij) = (re_index(j, n), im_index(j, n));
            out[(ri, rj)] = e.re;
            out[(ri, ij)] = -e.im;
            out[(ii, rj)] = e.im;
            out[(ii, ij)] = e.re;
        }
    }
    out
}

/// Multiplication by `i` on `m` complex coordinates.
pub fn complex_structure(m: usize, n: usize) -> DMatrix<f64> {
    real_rep(&DMatrix::from_diagonal_element(m, m, I), n)
}

pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    m.clone().svd(false, false).singular_values
}

/// Spectral norm.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    singular_values(m).max()
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = singular_values(m);
    let (lo, hi) = (s.min(), s.max());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn complex_norm(w: &[C64]) -> f64 {
    w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

pub fn complex_dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

pub fn conj(w: &[C64]) -> Vec<C64> {
    w.iter().map(|c| c.conj()).collect()
}
