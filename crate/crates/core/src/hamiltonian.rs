//! Complex hamiltonians on `M` and their holomorphic extensions to `X`.
//!
//! A hamiltonian is a finite sum of terms
//! `c · z^α · z̄^β / (1 + z·z̄)^k` in one chart. Extension replaces `z̄` by the
//! independent fiber coordinate `u`, which is exact for this class. On the
//! sphere the extension is also re-expressed in the other chart through
//! `z ↦ 1/z`, `u ↦ 1/u`, where a term becomes `z^(k−α) u^(k−β) / (1 + z·u)^k`.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AmbientPoint, KahlerPoint, Model};
use crate::linalg::{C64, I};

/// Literal form of a term as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermRecord {
    pub re: f64,
    pub im: f64,
    pub alpha: Vec<i32>,
    pub beta: Vec<i32>,
    #[serde(default)]
    pub denom_pow: u32,
}

/// `coeff · z^alpha · z̄^beta / (1 + z·z̄)^denom_pow`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TermRecord", into = "TermRecord")]
pub struct Term {
    pub coeff: C64,
    pub alpha: Vec<i32>,
    pub beta: Vec<i32>,
    pub denom_pow: u32,
}

impl From<TermRecord> for Term {
    fn from(r: TermRecord) -> Self {
        Term {
            coeff: C64::new(r.re, r.im),
            alpha: r.alpha,
            beta: r.beta,
            denom_pow: r.denom_pow,
        }
    }
}

impl From<Term> for TermRecord {
    fn from(t: Term) -> Self {
        TermRecord {
            re: t.coeff.re,
            im: t.coeff.im,
            alpha: t.alpha,
            beta: t.beta,
            denom_pow: t.denom_pow,
        }
    }
}

impl Term {
    pub fn new(coeff: C64, alpha: Vec<i32>, beta: Vec<i32>) -> Self {
        Term {
            coeff,
            alpha,
            beta,
            denom_pow: 0,
        }
    }

    pub fn with_denominator(mut self, k: u32) -> Self {
        self.denom_pow = k;
        self
    }

    fn key(&self) -> (Vec<i32>, Vec<i32>, u32) {
        (self.alpha.clone(), self.beta.clone(), self.denom_pow)
    }

    fn exponents(&self) -> Vec<i32> {
        self.alpha.iter().chain(&self.beta).copied().collect()
    }
}

/// A hamiltonian `h: M → ℂ` given by a term list in one chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialHamiltonian {
    pub model: Model,
    pub chart: usize,
    pub terms: Vec<Term>,
}

impl PolynomialHamiltonian {
    pub fn new(model: Model, chart: usize, terms: Vec<Term>) -> Result<Self> {
        let n = model.dim();
        if chart >= model.chart_count() {
            return Err(Error::Invalid(format!("chart {chart} does not exist")));
        }
        for t in &terms {
            if t.alpha.len() != n || t.beta.len() != n {
                return Err(Error::Invalid(format!(
                    "term multi-indices must have length {n}, got {} and {}",
                    t.alpha.len(),
                    t.beta.len()
                )));
            }
            if matches!(model, Model::Flat { .. }) && t.denom_pow != 0 {
                return Err(Error::Invalid("flat hamiltonians cannot carry a denominator".into()));
            }
            if !t.coeff.re.is_finite() || !t.coeff.im.is_finite() {
                return Err(Error::Invalid("non-finite coefficient".into()));
            }
        }
        Ok(Self { model, chart, terms })
    }

    pub fn zero(model: Model) -> Self {
        Self {
            model,
            chart: 0,
            terms: Vec::new(),
        }
    }

    pub fn constant(model: Model, c: C64) -> Self {
        let n = model.dim();
        Self {
            model,
            chart: 0,
            terms: vec![Term::new(c, vec![0; n], vec![0; n])],
        }
    }

    pub fn monomial(model: Model, coeff: C64, alpha: Vec<i32>, beta: Vec<i32>) -> Result<Self> {
        Self::new(model, 0, vec![Term::new(coeff, alpha, beta)])
    }

    fn unit(n: usize, j: usize) -> Vec<i32> {
        let mut e = vec![0; n];
        e[j] = 1;
        e
    }

    /// `q_j = (z_j + z̄_j)/2` on flat `ℂⁿ`.
    pub fn flat_q(n: usize, j: usize) -> Self {
        let e = Self::unit(n, j);
        let z = vec![0; n];
        Self {
            model: Model::Flat { n },
            chart: 0,
            terms: vec![
                Term::new(C64::new(0.5, 0.0), e.clone(), z.clone()),
                Term::new(C64::new(0.5, 0.0), z, e),
            ],
        }
    }

    /// `p_j = (z_j − z̄_j)/2i` on flat `ℂⁿ`.
    pub fn flat_p(n: usize, j: usize) -> Self {
        let e = Self::unit(n, j);
        let z = vec![0; n];
        Self {
            model: Model::Flat { n },
            chart: 0,
            terms: vec![
                Term::new(-0.5 * I, e.clone(), z.clone()),
                Term::new(0.5 * I, z, e),
            ],
        }
    }

    /// `|z|² = Σ z_j z̄_j` on flat `ℂⁿ`.
    pub fn flat_norm_sqr(n: usize) -> Self {
        Self {
            model: Model::Flat { n },
            chart: 0,
            terms: (0..n)
                .map(|j| Term::new(C64::new(1.0, 0.0), Self::unit(n, j), Self::unit(n, j)))
                .collect(),
        }
    }

    /// Moment-map component `x_{axis+1}` of the unit sphere, in chart 0:
    /// `x₁ + i x₂ = 2z/(1+|z|²)`, `x₃ = (1−|z|²)/(1+|z|²)`.
    pub fn sphere_coordinate(axis: usize) -> Self {
        let one = C64::new(1.0, 0.0);
        let t = |c: C64, a: i32, b: i32| Term::new(c, vec![a], vec![b]).with_denominator(1);
        let terms = match axis {
            0 => vec![t(one, 1, 0), t(one, 0, 1)],
            1 => vec![t(-I, 1, 0), t(I, 0, 1)],
            2 => vec![t(one, 0, 0), t(-one, 1, 1)],
            _ => panic!("sphere has coordinates 0, 1, 2; got {axis}"),
        };
        Self {
            model: Model::Sphere,
            chart: 0,
            terms,
        }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            model: self.model,
            chart: self.chart,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff * c,
                    ..t.clone()
                })
                .collect(),
        }
    }

    /// Merges like terms and drops zeros.
    pub fn canonical(&self) -> Self {
        let mut map: BTreeMap<(Vec<i32>, Vec<i32>, u32), C64> = BTreeMap::new();
        for t in &self.terms {
            *map.entry(t.key()).or_default() += t.coeff;
        }
        Self {
            model: self.model,
            chart: self.chart,
            terms: map
                .into_iter()
                .filter(|(_, c)| *c != C64::new(0.0, 0.0))
                .map(|((alpha, beta, denom_pow), coeff)| Term {
                    coeff,
                    alpha,
                    beta,
                    denom_pow,
                })
                .collect(),
        }
    }

    /// `conj(h)`, as a term list.
    pub fn conj(&self) -> Self {
        Self {
            model: self.model,
            chart: self.chart,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    coeff: t.coeff.conj(),
                    alpha: t.beta.clone(),
                    beta: t.alpha.clone(),
                    denom_pow: t.denom_pow,
                })
                .collect(),
        }
    }

    /// Real-valuedness read off the coefficient map: `c(α,β) = conj c(β,α)`.
    pub fn is_real(&self) -> bool {
        let a = self.canonical();
        let b = self.conj().canonical();
        a.terms.len() == b.terms.len()
            && a.terms.iter().zip(&b.terms).all(|(s, t)| {
                s.key() == t.key() && (s.coeff - t.coeff).norm() <= 1e-14 * (1.0 + s.coeff.norm())
            })
    }

    pub fn real_part(&self) -> Self {
        (self.clone() + self.conj()).scale(C64::new(0.5, 0.0))
    }

    pub fn imag_part(&self) -> Self {
        (self.clone() - self.conj()).scale(-0.5 * I)
    }

    pub fn extend(&self) -> HolomorphicHamiltonian {
        extend(self)
    }

    /// `h(x)`; `x` may be given in either chart.
    pub fn eval(&self, x: &KahlerPoint) -> Result<C64> {
        self.extend().restrict(x)
    }

    fn check_compatible(&self, other: &Self) {
        assert_eq!(self.model, other.model, "hamiltonians live on different models");
        assert_eq!(self.chart, other.chart, "hamiltonians live in different charts");
    }
}

impl Add for PolynomialHamiltonian {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        if rhs.terms.is_empty() {
            return self;
        }
        if self.terms.is_empty() {
            return rhs;
        }
        self.check_compatible(&rhs);
        self.terms.extend(rhs.terms);
        self
    }
}

impl Neg for PolynomialHamiltonian {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl Sub for PolynomialHamiltonian {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for PolynomialHamiltonian {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        if self.terms.is_empty() || rhs.terms.is_empty() {
            return Self::zero(self.model);
        }
        self.check_compatible(&rhs);
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for a in &self.terms {
            for b in &rhs.terms {
                terms.push(Term {
                    coeff: a.coeff * b.coeff,
                    alpha: a.alpha.iter().zip(&b.alpha).map(|(x, y)| x + y).collect(),
                    beta: a.beta.iter().zip(&b.beta).map(|(x, y)| x + y).collect(),
                    denom_pow: a.denom_pow + b.denom_pow,
                });
            }
        }
        Self {
            model: self.model,
            chart: self.chart,
            terms,
        }
        .canonical()
    }
}

impl Mul<C64> for PolynomialHamiltonian {
    type Output = Self;
    fn mul(self, c: C64) -> Self {
        self.scale(c)
    }
}

/// Value and first partials of `H` at an ambient point.
#[derive(Debug, Clone, PartialEq)]
pub struct Partials {
    pub value: C64,
    pub dz: Vec<C64>,
    pub du: Vec<C64>,
}

/// Value, gradient and Hessian with respect to `w = (z, u)`.
#[derive(Debug, Clone)]
pub struct Jet {
    pub value: C64,
    pub grad: Vec<C64>,
    pub hess: DMatrix<C64>,
}

/// `H: X → ℂ`, stored per chart.
#[derive(Debug, Clone, PartialEq)]
pub struct HolomorphicHamiltonian {
    pub model: Model,
    charts: Vec<Vec<Term>>,
}

/// Holomorphic extension by `z̄ ↦ u`.
pub fn extend(h: &PolynomialHamiltonian) -> HolomorphicHamiltonian {
    let terms = h.canonical().terms;
    let charts = match h.model {
        Model::Flat { .. } => vec![terms],
        Model::Sphere => {
            let other: Vec<Term> = terms
                .iter()
                .map(|t| {
                    let k = t.denom_pow as i32;
                    Term {
                        coeff: t.coeff,
                        alpha: vec![k - t.alpha[0]],
                        beta: vec![k - t.beta[0]],
                        denom_pow: t.denom_pow,
                    }
                })
                .collect();
            if h.chart == 0 {
                vec![terms, other]
            } else {
                vec![other, terms]
            }
        }
    };
    HolomorphicHamiltonian {
        model: h.model,
        charts,
    }
}

fn ipow(c: C64, e: i32) -> C64 {
    if e == 0 {
        C64::new(1.0, 0.0)
    } else {
        c.powi(e)
    }
}

/// Product over `k` of `w_k^(e_k − shift_k)`, with the falling-factorial
/// prefactor of the differentiated exponents.
fn monomial_derivative(w: &[C64], e: &[i32], a: Option<usize>, b: Option<usize>) -> C64 {
    let mut factor = 1.0;
    let mut shifts = vec![0i32; e.len()];
    for idx in [a, b].into_iter().flatten() {
        let eff = e[idx] - shifts[idx];
        if eff == 0 {
            return C64::new(0.0, 0.0);
        }
        factor *= eff as f64;
        shifts[idx] += 1;
    }
    let mut acc = C64::new(factor, 0.0);
    for k in 0..e.len() {
        acc *= ipow(w[k], e[k] - shifts[k]);
    }
    acc
}

impl HolomorphicHamiltonian {
    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn terms(&self, chart: usize) -> &[Term] {
        &self.charts[chart]
    }

    fn check_finite(value: C64) -> Result<C64> {
        if value.re.is_finite() && value.im.is_finite() {
            Ok(value)
        } else {
            Err(Error::Domain("hamiltonian is singular at this point".into()))
        }
    }

    /// Value, gradient and Hessian in `w = (z, u)` in the given chart.
    pub fn jet(&self, chart: usize, w: &[C64]) -> Result<Jet> {
        let n = self.dim();
        let m = 2 * n;
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let d = one + (0..n).map(|j| w[j] * w[n + j]).sum::<C64>();
        let d_grad: Vec<C64> = (0..m).map(|a| if a < n { w[n + a] } else { w[a - n] }).collect();

        let mut value = zero;
        let mut grad = vec![zero; m];
        let mut hess = DMatrix::from_element(m, m, zero);
        for t in &self.charts[chart] {
            let e = t.exponents();
            let mv = monomial_derivative(w, &e, None, None);
            let mg: Vec<C64> = (0..m).map(|a| monomial_derivative(w, &e, Some(a), None)).collect();
            let k = t.denom_pow as f64;
            let (dv, dg, dh): (C64, Vec<C64>, DMatrix<C64>) = if t.denom_pow == 0 {
                (one, vec![zero; m], DMatrix::from_element(m, m, zero))
            } else {
                let ki = t.denom_pow as i32;
                let dk = d.powi(-ki);
                let dk1 = d.powi(-ki - 1);
                let dk2 = d.powi(-ki - 2);
                let g: Vec<C64> = d_grad.iter().map(|x| -k * dk1 * x).collect();
                let mut h = DMatrix::from_element(m, m, zero);
                for a in 0..m {
                    for b in 0..m {
                        h[(a, b)] = k * (k + 1.0) * dk2 * d_grad[a] * d_grad[b];
                    }
                }
                for j in 0..n {
                    h[(j, n + j)] -= k * dk1;
                    h[(n + j, j)] -= k * dk1;
                }
                (dk, g, h)
            };
            let c = t.coeff;
            value += c * mv * dv;
            for a in 0..m {
                grad[a] += c * (mg[a] * dv + mv * dg[a]);
                for b in 0..m {
                    let mab = monomial_derivative(w, &e, Some(a), Some(b));
                    hess[(a, b)] += c * (mab * dv + mg[a] * dg[b] + mg[b] * dg[a] + mv * dh[(a, b)]);
                }
            }
        }
        Self::check_finite(value)?;
        for g in &grad {
            Self::check_finite(*g)?;
        }
        for h in hess.iter() {
            Self::check_finite(*h)?;
        }
        Ok(Jet { value, grad, hess })
    }

    /// Value and first partials only.
    pub fn eval_with_partials(&self, p: &AmbientPoint) -> Result<Partials> {
        let n = self.dim();
        let w = p.coords();
        let zero = C64::new(0.0, 0.0);
        let one = C64::new(1.0, 0.0);
        let d = one + (0..n).map(|j| w[j] * w[n + j]).sum::<C64>();
        let mut value = zero;
        let mut grad = vec![zero; 2 * n];
        for t in &self.charts[p.chart] {
            let e = t.exponents();
            let mv = monomial_derivative(&w, &e, None, None);
            let k = t.denom_pow as f64;
            let (dv, dk1) = if t.denom_pow == 0 {
                (one, zero)
            } else {
                (d.powi(-(t.denom_pow as i32)), d.powi(-(t.denom_pow as i32) - 1))
            };
            value += t.coeff * mv * dv;
            for a in 0..2 * n {
                let dd = if a < n { w[n + a] } else { w[a - n] };
                grad[a] += t.coeff
                    * (monomial_derivative(&w, &e, Some(a), None) * dv - k * mv * dk1 * dd);
            }
        }
        Self::check_finite(value)?;
        for g in &grad {
            Self::check_finite(*g)?;
        }
        Ok(Partials {
            value,
            dz: grad[..n].to_vec(),
            du: grad[n..].to_vec(),
        })
    }

    pub fn eval(&self, p: &AmbientPoint) -> Result<C64> {
        Ok(self.eval_with_partials(p)?.value)
    }

    /// `h(x) = H(x, conj x)`.
    pub fn restrict(&self, x: &KahlerPoint) -> Result<C64> {
        self.eval(&crate::geometry::embed(x))
    }

    /// Real gradients `(∇ Re h, ∇ Im h)` at `x` in the chart's `(q, p)` basis.
    pub fn real_gradients(&self, x: &KahlerPoint) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dim();
        let pt = self.eval_with_partials(&crate::geometry::embed(x))?;
        let mut re = vec![0.0; 2 * n];
        let mut im = vec![0.0; 2 * n];
        for j in 0..n {
            // ∂/∂q = ∂/∂z + ∂/∂z̄, ∂/∂p = i(∂/∂z − ∂/∂z̄)
            let dq = pt.dz[j] + pt.du[j];
            let dp = I * (pt.dz[j] - pt.du[j]);
            re[j] = dq.re;
            re[n + j] = dp.re;
            im[j] = dq.im;
            im[n + j] = dp.im;
        }
        Ok((re, im))
    }
}
