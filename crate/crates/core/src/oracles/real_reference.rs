//! Ordinary Hamilton flow of a real hamiltonian on `M`, integrated in real
//! chart coordinates with an 8th-order Dormand–Prince method.
//!
//! Convention: `ω(Ξ_h, ·) = dh`, so `Ξ_h = (∂_p h, −∂_q h)/ρ` where `ρ` is the
//! density of `ω = ρ dq∧dp`.

use ode_solvers::{DVector as OdeVector, Dop853, OutputType, System};

use crate::error::{Error, Result};
use crate::geometry::{KahlerPoint, Model};
use crate::hamiltonian::{PolynomialHamiltonian, Term};
use crate::linalg::{C64, I};

pub const REFERENCE_TOL: f64 = 1e-12;

/// Longest stretch integrated in one chart before renormalizing.
const LEG: f64 = 0.05;

/// Terms of `h` rewritten in `chart`.
fn chart_terms(h: &PolynomialHamiltonian, chart: usize) -> Vec<Term> {
    if chart == h.chart {
        return h.terms.clone();
    }
    h.terms
        .iter()
        .map(|t| {
            let k = t.denom_pow as i32;
            Term {
                coeff: t.coeff,
                alpha: t.alpha.iter().map(|a| k - a).collect(),
                beta: t.beta.iter().map(|b| k - b).collect(),
                denom_pow: t.denom_pow,
            }
        })
        .collect()
}

/// Real gradient `(∂_q h, ∂_p h)` of `Σ c z^α z̄^β / (1+|z|²)^k`.
fn real_gradient(terms: &[Term], z: &[C64]) -> (Vec<f64>, Vec<f64>) {
    let n = z.len();
    let zb: Vec<C64> = z.iter().map(|c| c.conj()).collect();
    let d = 1.0 + z.iter().map(|c| c.norm_sqr()).sum::<f64>();
    let mut gq = vec![0.0; n];
    let mut gp = vec![0.0; n];
    for t in terms {
        let pow = |w: C64, e: i32| if e == 0 { C64::new(1.0, 0.0) } else { w.powi(e) };
        let factors: Vec<(C64, C64)> = (0..n).map(|j| (pow(z[j], t.alpha[j]), pow(zb[j], t.beta[j]))).collect();
        let mono: C64 = factors.iter().map(|(a, b)| a * b).product();
        let scale = d.powi(-(t.denom_pow as i32));
        for j in 0..n {
            let rest: C64 = factors
                .iter()
                .enumerate()
                .filter(|(k, _)| *k != j)
                .map(|(_, (a, b))| a * b)
                .product();
            let dz = if t.alpha[j] == 0 { C64::new(0.0, 0.0) } else { t.alpha[j] as f64 * pow(z[j], t.alpha[j] - 1) * factors[j].1 * rest };
            let dzb = if t.beta[j] == 0 { C64::new(0.0, 0.0) } else { t.beta[j] as f64 * pow(zb[j], t.beta[j] - 1) * factors[j].0 * rest };
            let dq_mono = dz + dzb;
            let dp_mono = I * (dz - dzb);
            let k = t.denom_pow as f64;
            let dq_d = 2.0 * z[j].re;
            let dp_d = 2.0 * z[j].im;
            let dq = t.coeff * (dq_mono * scale - mono * k * dq_d * scale / d);
            let dp = t.coeff * (dp_mono * scale - mono * k * dp_d * scale / d);
            gq[j] += dq.re;
            gp[j] += dp.re;
        }
    }
    (gq, gp)
}

struct Field {
    model: Model,
    terms: Vec<Term>,
    chart: usize,
}

impl System<f64, OdeVector<f64>> for Field {
    fn system(&self, _t: f64, y: &OdeVector<f64>, dy: &mut OdeVector<f64>) {
        let n = self.model.dim();
        let z: Vec<C64> = (0..n).map(|j| C64::new(y[j], y[n + j])).collect();
        let rho = self.model.density(&KahlerPoint::new(self.chart, z.clone()));
        let (gq, gp) = real_gradient(&self.terms, &z);
        for j in 0..n {
            dy[j] = gp[j] / rho;
            dy[n + j] = -gq[j] / rho;
        }
    }
}

/// Flow of the real hamiltonian `h` for time `t` starting at `x`.
pub fn real_reference(h: &PolynomialHamiltonian, x: &KahlerPoint, t: f64) -> Result<KahlerPoint> {
    if !h.is_real() {
        return Err(Error::Invalid("real reference needs a real-valued hamiltonian".into()));
    }
    let model = h.model;
    model.validate_point(x)?;
    let n = model.dim();
    let mut cur = model.normalize(x.clone());
    let legs = (t.abs() / LEG).ceil().max(1.0) as usize;
    let dt = t / legs as f64;
    if t == 0.0 {
        return Ok(x.clone());
    }
    for leg in 0..legs {
        let y0 = OdeVector::from_iterator(2 * n, cur.z.iter().map(|c| c.re).chain(cur.z.iter().map(|c| c.im)));
        let field = Field {
            model,
            terms: chart_terms(h, cur.chart),
            chart: cur.chart,
        };
        let mut solver = Dop853::new(field, 0.0, dt, dt, y0, REFERENCE_TOL, REFERENCE_TOL);
        solver.set_output(OutputType::Sparse);
        solver.integrate().map_err(|e| Error::FlowDivergence {
            last_good_time: leg as f64 * dt,
            reason: e.to_string(),
        })?;
        let y = solver.y_out().last().expect("integrator records the end point");
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::FlowDivergence {
                last_good_time: leg as f64 * dt,
                reason: "non-finite state".into(),
            });
        }
        cur = model.normalize(KahlerPoint::new(cur.chart, (0..n).map(|j| C64::new(y[j], y[n + j])).collect()));
    }
    Ok(cur)
}
