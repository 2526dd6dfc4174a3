//! Exact `φ_t` and `J_t` for quadratic hamiltonians on flat `ℂⁿ`.
//!
//! The holomorphic flow of `H = ½ wᵀAw + b·w + c`, `w = (z, u)`, is the
//! affine map `w ↦ E w + g` obtained from one exponential of the augmented
//! generator. Leaves stay affine, so both the intersection with the real
//! locus and the splitting that defines `J_t` reduce to real-linear solves.

use nalgebra::{DMatrix, DVector};

use super::expm::expm;
use crate::error::{Error, Result};
use crate::geometry::{KahlerPoint, Model};
use crate::hamiltonian::{PolynomialHamiltonian, Term};
use crate::linalg::{C64, I};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticSpec {
    pub n: usize,
    /// Symmetric `2n×2n`.
    pub a: DMatrix<C64>,
    pub b: DVector<C64>,
    pub c: C64,
}

fn zero() -> C64 {
    C64::new(0.0, 0.0)
}

impl QuadraticSpec {
    pub fn new(a: DMatrix<C64>, b: DVector<C64>, c: C64) -> Result<Self> {
        let m = a.nrows();
        if m == 0 || !m.is_multiple_of(2) || a.ncols() != m || b.len() != m {
            return Err(Error::Invalid("quadratic: A must be 2n×2n and b of length 2n".into()));
        }
        if (&a - a.transpose()).norm() > 1e-14 * (1.0 + a.norm()) {
            return Err(Error::Invalid("quadratic: A must be symmetric".into()));
        }
        Ok(Self { n: m / 2, a, b, c })
    }

    /// Reads the coefficients of a flat hamiltonian of degree at most two.
    pub fn from_hamiltonian(h: &PolynomialHamiltonian) -> Result<Self> {
        let n = match h.model {
            Model::Flat { n } => n,
            Model::Sphere => return Err(Error::Invalid("quadratic oracle needs a flat model".into())),
        };
        let m = 2 * n;
        let mut a = DMatrix::from_element(m, m, zero());
        let mut b = DVector::from_element(m, zero());
        let mut c = zero();
        for term in &h.terms {
            let exps: Vec<i32> = term.alpha.iter().chain(&term.beta).copied().collect();
            if exps.iter().any(|&e| e < 0) || exps.iter().sum::<i32>() > 2 {
                return Err(Error::Invalid("quadratic oracle: degree exceeds 2".into()));
            }
            let idx: Vec<usize> = exps
                .iter()
                .enumerate()
                .flat_map(|(i, &e)| std::iter::repeat_n(i, e as usize))
                .collect();
            match idx.as_slice() {
                [] => c += term.coeff,
                [i] => b[*i] += term.coeff,
                [i, j] if i == j => a[(*i, *i)] += 2.0 * term.coeff,
                [i, j] => {
                    a[(*i, *j)] += term.coeff;
                    a[(*j, *i)] += term.coeff;
                }
                _ => unreachable!(),
            }
        }
        Self::new(a, b, c)
    }

    pub fn to_hamiltonian(&self) -> PolynomialHamiltonian {
        let n = self.n;
        let exps = |idx: &[usize]| {
            let mut e = vec![0i32; 2 * n];
            for &i in idx {
                e[i] += 1;
            }
            (e[..n].to_vec(), e[n..].to_vec())
        };
        let mut terms = Vec::new();
        let mut push = |coeff: C64, idx: &[usize]| {
            if coeff != zero() {
                let (alpha, beta) = exps(idx);
                terms.push(Term::new(coeff, alpha, beta));
            }
        };
        for i in 0..2 * n {
            push(0.5 * self.a[(i, i)], &[i, i]);
            for j in i + 1..2 * n {
                push(self.a[(i, j)], &[i, j]);
            }
            push(self.b[i], &[i]);
        }
        push(self.c, &[]);
        PolynomialHamiltonian::new(Model::Flat { n }, 0, terms).expect("flat monomials are valid")
    }

    /// `(E, g)` with `w(t) = E w(0) + g`.
    pub fn propagator(&self, t: f64) -> (DMatrix<C64>, DVector<C64>) {
        let n = self.n;
        let m = 2 * n;
        let mut k = DMatrix::from_element(m, m, zero());
        for j in 0..n {
            k[(j, n + j)] = -2.0 * I;
            k[(n + j, j)] = 2.0 * I;
        }
        let s = &k * &self.a;
        let r = &k * &self.b;
        let mut aug = DMatrix::from_element(m + 1, m + 1, zero());
        aug.view_mut((0, 0), (m, m)).copy_from(&(s * C64::new(t, 0.0)));
        aug.view_mut((0, m), (m, 1)).copy_from(&(r * C64::new(t, 0.0)));
        let e = expm(&aug);
        (e.view((0, 0), (m, m)).into_owned(), e.view((0, m), (m, 1)).column(0).into_owned())
    }
}

/// Solves `P x − Q conj(x) = r` over `x ∈ ℂⁿ`.
fn solve_real_linear(p: &DMatrix<C64>, q: &DMatrix<C64>, rhs: &DVector<C64>) -> Result<DVector<C64>> {
    let n = p.nrows();
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let (pr, pi) = (p[(i, j)].re, p[(i, j)].im);
            let (qr, qi) = (q[(i, j)].re, q[(i, j)].im);
            m[(i, j)] = pr - qr;
            m[(i, n + j)] = -pi - qi;
            m[(n + i, j)] = pi - qi;
            m[(n + i, n + j)] = pr + qr;
        }
    }
    let mut r = DVector::zeros(2 * n);
    for i in 0..n {
        r[i] = rhs[i].re;
        r[n + i] = rhs[i].im;
    }
    let svd = m.clone().svd(false, false);
    if svd.singular_values.min() <= 1e-12 * svd.singular_values.max() {
        return Err(Error::Degeneracy {
            residual: f64::NAN,
            reason: "quadratic oracle: transported leaf is tangent to the real locus".into(),
        });
    }
    let x = m.lu().solve(&r).expect("checked nonsingular");
    Ok(DVector::from_fn(n, |i, _| C64::new(x[i], x[n + i])))
}

/// Exact `φ_t(x)` and `J_t` at `φ_t(x)` for a quadratic hamiltonian.
pub fn oracle_quadratic(spec: &QuadraticSpec, x: &KahlerPoint, t: f64) -> Result<(KahlerPoint, DMatrix<f64>)> {
    let n = spec.n;
    if x.dim() != n {
        return Err(Error::Invalid("quadratic oracle: dimension mismatch".into()));
    }
    let (e, g) = spec.propagator(t);
    let e11 = e.view((0, 0), (n, n)).into_owned();
    let e12 = e.view((0, n), (n, n)).into_owned();
    let e21 = e.view((n, 0), (n, n)).into_owned();
    let e22 = e.view((n, n), (n, n)).into_owned();
    let g1 = g.rows(0, n).into_owned();
    let g2 = g.rows(n, n).into_owned();
    let zx = DVector::from_column_slice(&x.z);
    let e12c = e12.map(|c| c.conj());

    let rhs = (&e11 * &zx + &g1).map(|c| c.conj()) - &e21 * &zx - &g2;
    let u = solve_real_linear(&e22, &e12c, &rhs)?;
    let y = &e11 * &zx + &e12 * &u + &g1;

    let mut jt = DMatrix::zeros(2 * n, 2 * n);
    for col in 0..2 * n {
        let mut v = DVector::from_element(n, zero());
        v[col % n] = if col < n { C64::new(1.0, 0.0) } else { I };
        let c = solve_real_linear(&e22, &e12c, &(v.map(|c| c.conj()) * (2.0 * I)))?;
        let w = v * I - &e12 * c;
        for j in 0..n {
            jt[(j, col)] = w[j].re;
            jt[(n + j, col)] = w[j].im;
        }
    }
    Ok((KahlerPoint::flat(y.iter().copied().collect()), jt))
}
