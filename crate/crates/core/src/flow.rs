//! The complexified Hamilton flow `Φ_t` on `X`.
//!
//! `Φ_t` is the flow of `ξ`, the `ω₁`-Hamilton field of `Re H`. Because
//! `ξ − iIξ` is the holomorphic Hamilton field of `2H` for `Ω`, the flow is
//! the real-time flow of the complex ODE `ẇ = P(w) ∇H(w)` with `P` the
//! Poisson tensor of `Ω`. For flat `ℂⁿ` this is `ż = −2i ∂H/∂u`,
//! `u̇ = 2i ∂H/∂z`.
//!
//! The Jacobian of `Φ_t` is carried as a real `4n×4n` matrix in the
//! `(Re z, Im z, Re u, Im u)` basis and integrated with the trajectory.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AmbientPoint, Model, CHART_HYSTERESIS};
use crate::hamiltonian::HolomorphicHamiltonian;
use crate::linalg::{complex_structure, from_real, op_norm, real_rep, to_real, C64};
use crate::ode::{self, System};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Rk4Fixed { step: f64 },
    Rk45Adaptive { abs_tol: f64, rel_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(flatten)]
    pub method: Method,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Largest `|t|` accepted by [`flow`].
    #[serde(default = "default_horizon")]
    pub horizon: f64,
}

fn default_max_steps() -> usize {
    100_000
}

fn default_horizon() -> f64 {
    2.0
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self::adaptive(1e-10, 1e-10)
    }
}

impl IntegratorConfig {
    pub fn adaptive(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            method: Method::Rk45Adaptive { abs_tol, rel_tol },
            max_steps: default_max_steps(),
            horizon: default_horizon(),
        }
    }

    pub fn fixed(step: f64) -> Self {
        Self {
            method: Method::Rk4Fixed { step },
            max_steps: default_max_steps(),
            horizon: default_horizon(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4Fixed { step } => step > 0.0 && step.is_finite(),
            Method::Rk45Adaptive { abs_tol, rel_tol } => abs_tol > 0.0 && rel_tol > 0.0,
        };
        if !ok {
            return Err(Error::Invalid("integrator tolerances and steps must be positive".into()));
        }
        if self.max_steps == 0 || !(self.horizon > 0.0) {
            return Err(Error::Invalid("max_steps and horizon must be positive".into()));
        }
        Ok(())
    }

    /// Nominal accuracy, used to scale tolerance contracts.
    pub fn nominal_tolerance(&self) -> f64 {
        match self.method {
            Method::Rk4Fixed { step } => step.powi(4),
            Method::Rk45Adaptive { abs_tol, rel_tol } => abs_tol.max(rel_tol),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub point: AmbientPoint,
    /// `dΦ_t` at the initial point; columns in the chart of the initial
    /// point, rows in the chart of `point`.
    pub jacobian: Option<DMatrix<f64>>,
    pub time: f64,
}

/// `ξ` at `p`, returned as the complex pair `(ż, u̇)`.
pub fn xi_field(h: &HolomorphicHamiltonian, p: &AmbientPoint) -> Result<(Vec<C64>, Vec<C64>)> {
    let n = h.dim();
    let w = p.coords();
    let (pm, _) = h.model.poisson(p.chart, &w)?;
    let pt = h.eval_with_partials(p)?;
    let grad: Vec<C64> = pt.dz.iter().chain(&pt.du).copied().collect();
    let f = pm * DVector::from_vec(grad);
    Ok((f.rows(0, n).iter().copied().collect(), f.rows(n, n).iter().copied().collect()))
}

/// Field `P∇H` and its complex derivative `D(P∇H)` at `w`.
fn field_and_derivative(h: &HolomorphicHamiltonian, chart: usize, w: &[C64]) -> Result<(DVector<C64>, DMatrix<C64>)> {
    let (pm, dp) = h.model.poisson(chart, w)?;
    let jet = h.jet(chart, w)?;
    let grad = DVector::from_vec(jet.grad);
    let f = &pm * &grad;
    let mut df = &pm * &jet.hess;
    for (c, dpc) in dp.iter().enumerate() {
        let col = dpc * &grad;
        for a in 0..df.nrows() {
            df[(a, c)] += col[a];
        }
    }
    Ok((f, df))
}

struct FlowSystem<'a> {
    h: &'a HolomorphicHamiltonian,
    chart: usize,
    with_jacobian: bool,
}

impl FlowSystem<'_> {
    fn n(&self) -> usize {
        self.h.dim()
    }
}

impl System for FlowSystem<'_> {
    fn rhs(&mut self, y: &[f64], dy: &mut [f64]) -> Result<()> {
        let n = self.n();
        let m = 4 * n;
        let w = from_real(&y[..m], n);
        if self.with_jacobian {
            let (f, df) = field_and_derivative(self.h, self.chart, &w)?;
            dy[..m].copy_from_slice(to_real(f.as_slice(), n).as_slice());
            let a = real_rep(&df, n);
            let jac = DMatrix::from_column_slice(m, m, &y[m..]);
            dy[m..].copy_from_slice((a * jac).as_slice());
        } else {
            let p = AmbientPoint::from_coords(self.chart, &w);
            let (zd, ud) = xi_field(self.h, &p)?;
            let f: Vec<C64> = zd.into_iter().chain(ud).collect();
            dy[..m].copy_from_slice(to_real(&f, n).as_slice());
        }
        Ok(())
    }

    fn after_step(&mut self, y: &mut [f64]) -> Result<bool> {
        if self.h.model != Model::Sphere {
            return Ok(false);
        }
        let w = from_real(&y[..4], 1);
        let big = w[0].norm().max(w[1].norm());
        if big <= 1.0 + CHART_HYSTERESIS || w[0].norm() == 0.0 || w[1].norm() == 0.0 {
            return Ok(false);
        }
        let other = w[0].norm().recip().max(w[1].norm().recip());
        if other >= big {
            return Ok(false);
        }
        let switched = switch_chart(self.h.model, self.chart, y, self.with_jacobian)?;
        y.copy_from_slice(&switched.1);
        self.chart = switched.0;
        Ok(true)
    }
}

/// Re-expresses a packed flow state in the other sphere chart.
fn switch_chart(model: Model, chart: usize, y: &[f64], with_jacobian: bool) -> Result<(usize, Vec<f64>)> {
    let w = from_real(&y[..4], 1);
    let p = model.ambient_to_chart(&AmbientPoint::from_coords(chart, &w), 1 - chart)?;
    let mut out = to_real(&p.coords(), 1).as_slice().to_vec();
    if with_jacobian {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![
            model.transition_derivative(w[0]),
            model.transition_derivative(w[1]),
        ]));
        let jac = DMatrix::from_column_slice(4, 4, &y[4..]);
        out.extend_from_slice((real_rep(&d, 1) * jac).as_slice());
    }
    Ok((p.chart, out))
}

/// Integrates `Φ_t(p0)`, optionally with its Jacobian.
pub fn flow(
    h: &HolomorphicHamiltonian,
    p0: &AmbientPoint,
    t: f64,
    cfg: &IntegratorConfig,
    with_jacobian: bool,
) -> Result<FlowState> {
    cfg.validate()?;
    if !(t.abs() <= cfg.horizon) {
        return Err(Error::Invalid(format!(
            "|t| = {} exceeds the configured horizon {}",
            t.abs(),
            cfg.horizon
        )));
    }
    h.model.check_ambient(p0)?;
    let n = h.dim();
    let m = 4 * n;
    let mut y = to_real(&p0.coords(), n).as_slice().to_vec();
    if with_jacobian {
        y.extend_from_slice(DMatrix::<f64>::identity(m, m).as_slice());
    }
    let mut sys = FlowSystem {
        h,
        chart: p0.chart,
        with_jacobian,
    };
    ode::integrate(&mut sys, &mut y, t, cfg)?;
    let point = AmbientPoint::from_coords(sys.chart, &from_real(&y[..m], n));
    h.model.check_ambient(&point).map_err(|e| Error::FlowDivergence {
        last_good_time: t,
        reason: e.to_string(),
    })?;
    Ok(FlowState {
        point,
        jacobian: with_jacobian.then(|| DMatrix::from_column_slice(m, m, &y[m..])),
        time: t,
    })
}

/// Expresses the end point (and Jacobian rows) of `state` in `chart`.
pub fn state_in_chart(model: Model, state: &FlowState, chart: usize) -> Result<FlowState> {
    if state.point.chart == chart {
        return Ok(state.clone());
    }
    let mut packed = to_real(&state.point.coords(), model.dim()).as_slice().to_vec();
    if let Some(j) = &state.jacobian {
        packed.extend_from_slice(j.as_slice());
    }
    let (c, out) = switch_chart(model, state.point.chart, &packed, state.jacobian.is_some())?;
    Ok(FlowState {
        point: AmbientPoint::from_coords(c, &from_real(&out[..4], 1)),
        jacobian: state
            .jacobian
            .as_ref()
            .map(|_| DMatrix::from_column_slice(4, 4, &out[4..])),
        time: state.time,
    })
}

/// `‖dΦ_t∘I − I∘dΦ_t‖`, spectral norm.
pub fn holomorphy_defect(jacobian: &DMatrix<f64>) -> f64 {
    let m = jacobian.nrows();
    let n = m / 4;
    let i = complex_structure(2 * n, n);
    op_norm(&(jacobian * &i - &i * jacobian))
}

/// `‖dΦ_tᵀ ω₁(Φ_t p) dΦ_t − ω₁(p)‖`, spectral norm.
pub fn symplecticity_defect(model: Model, p0: &AmbientPoint, state: &FlowState) -> Result<f64> {
    let jac = state
        .jacobian
        .as_ref()
        .ok_or_else(|| Error::Invalid("flow state carries no Jacobian".into()))?;
    let (w0, _) = model.omega_parts(p0)?;
    let (w1, _) = model.omega_parts(&state.point)?;
    Ok(op_norm(&(jac.transpose() * w1 * jac - w0)))
}
