//! Residuals for the identities satisfied by `φ_t`, `J_t`, `f_t` and `ω_t`,
//! plus structural checks on the ambient flow.
//!
//! Every residual is a real scalar; [`ResidualReport`] collects them per
//! identity with a pass/fail flag.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::flow::{flow, holomorphy_defect, symplecticity_defect, xi_field, IntegratorConfig};
use crate::geometry::{embed, involution, AmbientPoint, KahlerPoint, Model};
use crate::hamiltonian::HolomorphicHamiltonian;
use crate::leaf::{chart_distance, LeafSolver};
use crate::linalg::{complex_structure, from_real, op_norm, to_real, C64, I};

/// Step for the time and space difference quotients.
pub const FD_STEP: f64 = 1e-5;

/// One evaluation site: chart, coordinates (`z`, or `(z, u)` for ambient
/// checks) and time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualPoint {
    pub chart: usize,
    pub coords: Vec<C64>,
    pub t: f64,
}

impl ResidualPoint {
    pub fn real(x: &KahlerPoint, t: f64) -> Self {
        Self {
            chart: x.chart,
            coords: x.z.clone(),
            t,
        }
    }

    pub fn ambient(p: &AmbientPoint, t: f64) -> Self {
        Self {
            chart: p.chart,
            coords: p.coords(),
            t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub name: String,
    pub points: Vec<ResidualPoint>,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl ResidualReport {
    pub fn new(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            points: Vec::new(),
            residuals: Vec::new(),
            max_residual: 0.0,
            tolerance,
            passed: true,
        }
    }

    /// Records one residual. NaN counts as a failure.
    pub fn push(&mut self, point: ResidualPoint, residual: f64) {
        self.points.push(point);
        self.residuals.push(residual);
        if residual.is_nan() {
            self.max_residual = f64::NAN;
        } else if !self.max_residual.is_nan() {
            self.max_residual = self.max_residual.max(residual);
        }
        self.passed = self.max_residual <= self.tolerance;
    }

    /// Appends another report's entries (same identity).
    pub fn merge(&mut self, other: ResidualReport) {
        for (p, r) in other.points.into_iter().zip(other.residuals) {
            self.push(p, r);
        }
    }

    pub fn len(&self) -> usize {
        self.residuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residuals.is_empty()
    }

    pub fn summary(&self) -> String {
        format!(
            "{} {}: max {:.3e} (tol {:.1e}, {} points)",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_residual,
            self.tolerance,
            self.len()
        )
    }

    /// Flat CSV rows `name,chart,re0,im0,...,t,residual`.
    pub fn csv_rows(&self) -> Vec<String> {
        self.points
            .iter()
            .zip(&self.residuals)
            .map(|(p, r)| {
                let coords: Vec<String> = p
                    .coords
                    .iter()
                    .flat_map(|c| [format!("{:.16e}", c.re), format!("{:.16e}", c.im)])
                    .collect();
                format!("{},{},{},{:.16e},{:.16e}", self.name, p.chart, coords.join(","), p.t, r)
            })
            .collect()
    }
}

fn real_coords(model: Model, x: &KahlerPoint, chart: usize) -> Result<DVector<f64>> {
    Ok(to_real(&model.to_chart(x, chart)?.z, model.dim()))
}

/// `Ξ_f = −W⁻¹ ∇f` for a real gradient `∇f` and form matrix `W`.
pub fn hamilton_field(omega: &DMatrix<f64>, grad: &[f64]) -> DVector<f64> {
    let g = DVector::from_column_slice(grad);
    -omega.clone().try_inverse().expect("symplectic form is invertible") * g
}

/// Central difference of `φ_t(x)` in `t`, in the chart of `φ_t(x)`.
fn phi_time_derivative(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<(KahlerPoint, DVector<f64>)> {
    let sol = s.phi(x, t)?;
    let chart = sol.y.chart;
    let plus = s.phi_from(x, t + FD_STEP, &sol.u_star)?.y;
    let minus = s.phi_from(x, t - FD_STEP, &sol.u_star)?.y;
    let m = s.model();
    let d = (real_coords(m, &plus, chart)? - real_coords(m, &minus, chart)?) / (2.0 * FD_STEP);
    Ok((sol.y, d))
}

/// `‖φ̇_t(x) − (Ξ_{Re h} + J_t Ξ_{Im h})(φ_t(x))‖`.
pub fn generator_residual(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<f64> {
    let (y, lhs) = phi_time_derivative(s, x, t)?;
    let jt = s.j_t(x, t)?;
    let w = s.model().omega_matrix(&y);
    let (g_re, g_im) = s.ham.real_gradients(&y)?;
    let rhs = hamilton_field(&w, &g_re) + jt * hamilton_field(&w, &g_im);
    Ok((lhs - rhs).norm())
}

/// `‖φ̇_t(x) − dΠ_t(ξ)‖` at `y = φ_t(x)`: the generator read off the leaf
/// projection instead of `J_t`.
pub fn leaf_projection_residual(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<f64> {
    let (y, lhs) = phi_time_derivative(s, x, t)?;
    let n = s.model().dim();
    let (dz, du) = xi_field(&s.ham, &embed(&y))?;
    let xi: Vec<C64> = dz.into_iter().chain(du).collect();
    let v = DMatrix::from_column_slice(4 * n, 1, to_real(&xi, n).as_slice());
    let rhs = s.leaf_projection(x, t, &v)?;
    Ok((lhs - rhs.column(0)).norm())
}

/// `dφ_t` at `x` by central differences in each real coordinate, in the
/// chart of `φ_t(x)`.
pub fn phi_derivative_fd(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<DMatrix<f64>> {
    let m = s.model();
    let n = m.dim();
    let sol = s.phi(x, t)?;
    let chart = sol.y.chart;
    let base = to_real(&x.z, n);
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    for k in 0..2 * n {
        let shifted = |sign: f64| -> Result<DVector<f64>> {
            let mut v = base.clone();
            v[k] += sign * FD_STEP;
            let xs = KahlerPoint::new(x.chart, from_real(v.as_slice(), n));
            real_coords(m, &s.phi_from(&xs, t, &sol.u_star)?.y, chart)
        };
        let col = (shifted(1.0)? - shifted(-1.0)?) / (2.0 * FD_STEP);
        d.set_column(k, &col);
    }
    Ok(d)
}

/// `‖J_t dφ_t − dφ_t J‖` with `dφ_t` from finite differences.
pub fn holomorphy_residual(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<f64> {
    let d = phi_derivative_fd(s, x, t)?;
    let jt = s.j_t(x, t)?;
    let j0 = s.model().j0();
    Ok(op_norm(&(&jt * &d - &d * j0)))
}

/// `‖dφ_t(fd) − dφ_t(implicit)‖`: the two routes to the derivative of `φ_t`.
pub fn dphi_agreement(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<f64> {
    let fd = phi_derivative_fd(s, x, t)?;
    let (_, frame) = s.frame(x, t)?;
    Ok(op_norm(&(fd - frame.dphi)))
}

/// `‖J_t² + 1‖` at `φ_t(x)`.
pub fn j_squared_residual(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<f64> {
    let jt = s.j_t(x, t)?;
    let k = jt.nrows();
    Ok(op_norm(&(&jt * &jt + DMatrix::identity(k, k))))
}

/// `‖J_t − J‖` at `φ_t(x)`.
pub fn j_drift(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<f64> {
    Ok(op_norm(&(s.j_t(x, t)? - s.model().j0())))
}

/// `‖ḟ_t(x) − (Ξ^{ω_t}_{Re h∘f_t⁻¹} + J Ξ^{ω_t}_{Im h∘f_t⁻¹})(f_t(x))‖`.
pub fn corollary_residual(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<f64> {
    let m = s.model();
    let y = s.f(x, t)?;
    let chart = y.chart;
    let plus = s.f(x, t + FD_STEP)?;
    let minus = s.f(x, t - FD_STEP)?;
    let lhs = (real_coords(m, &plus, chart)? - real_coords(m, &minus, chart)?) / (2.0 * FD_STEP);

    let (omega_t, pre) = s.omega_t_with_preimage(&y, t)?;
    let (_, df) = s.f_with_derivative(&pre, t, chart)?;
    let df_inv_t = df
        .try_inverse()
        .ok_or_else(|| crate::error::Error::Degeneracy {
            residual: 0.0,
            reason: "df_t is singular".into(),
        })?
        .transpose();
    let (g_re, g_im) = s.ham.real_gradients(&pre)?;
    let pushed = |g: &[f64]| -> Vec<f64> { (&df_inv_t * DVector::from_column_slice(g)).iter().copied().collect() };
    let rhs = hamilton_field(&omega_t, &pushed(&g_re)) + m.j0() * hamilton_field(&omega_t, &pushed(&g_im));
    Ok((lhs - rhs).norm())
}

/// `‖f_t(φ_{−t}(x)) − x‖`.
pub fn inverse_residual(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<f64> {
    let back = s.phi(x, -t)?.y;
    let there = s.f(&back, t)?;
    chart_distance(s.model(), &there, x)
}

/// `‖ω(x) − df_tᵀ ω_t(f_t(x)) df_t‖`.
pub fn pullback_residual(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<f64> {
    let y = s.f(x, t)?;
    let omega_t = s.omega_t(&y, t)?;
    let (_, df) = s.f_with_derivative(x, t, y.chart)?;
    let w = s.model().omega_matrix(x);
    Ok(op_norm(&(w - df.transpose() * omega_t * df)))
}

/// `‖φ_{t+s}(x) − φ_t(φ_s(x))‖`; a diagnostic, zero only for group-like
/// cases.
pub fn group_defect(s: &LeafSolver, x: &KahlerPoint, t: f64, s2: f64) -> Result<f64> {
    let direct = s.phi(x, t + s2)?.y;
    let composed = s.phi(&s.phi(x, s2)?.y, t)?.y;
    chart_distance(s.model(), &composed, &direct)
}

/// `dH(Y)` for a real ambient vector in block-real layout.
fn dh_on(h: &HolomorphicHamiltonian, p: &AmbientPoint, y: &[f64]) -> Result<C64> {
    let n = h.dim();
    let pt = h.eval_with_partials(p)?;
    let yc = from_real(y, n);
    Ok((0..n).map(|j| pt.dz[j] * yc[j] + pt.du[j] * yc[n + j]).sum())
}

fn xi_real(h: &HolomorphicHamiltonian, p: &AmbientPoint) -> Result<DVector<f64>> {
    let (dz, du) = xi_field(h, p)?;
    let xi: Vec<C64> = dz.into_iter().chain(du).collect();
    Ok(to_real(&xi, h.dim()))
}

fn unit(m: usize, a: usize) -> Vec<f64> {
    let mut v = vec![0.0; m];
    v[a] = 1.0;
    v
}

/// `max_Y |Ω(ξ − iIξ, Y) − 2 dH(Y)|` over the coordinate basis.
pub fn holomorphic_field_residual(h: &HolomorphicHamiltonian, p: &AmbientPoint) -> Result<f64> {
    let m = 4 * h.dim();
    let xi = xi_real(h, p)?;
    let ixi = complex_structure(2 * h.dim(), h.dim()) * &xi;
    let mut worst: f64 = 0.0;
    for a in 0..m {
        let y = unit(m, a);
        let lhs = h.model.omega_on_vectors(p, xi.as_slice(), &y)? - I * h.model.omega_on_vectors(p, ixi.as_slice(), &y)?;
        worst = worst.max((lhs - 2.0 * dh_on(h, p, &y)?).norm());
    }
    Ok(worst)
}

/// `max_Y` of `|ω₁(ξ, Y) − d Re H(Y)|` and `|ω₁(Iξ, Y) + d Im H(Y)|`.
pub fn hamilton_equations_residual(h: &HolomorphicHamiltonian, p: &AmbientPoint) -> Result<f64> {
    let m = 4 * h.dim();
    let xi = xi_real(h, p)?;
    let ixi = complex_structure(2 * h.dim(), h.dim()) * &xi;
    let mut worst: f64 = 0.0;
    for a in 0..m {
        let y = unit(m, a);
        let dh = dh_on(h, p, &y)?;
        let w1_xi = h.model.omega_on_vectors(p, xi.as_slice(), &y)?.re;
        let w1_ixi = h.model.omega_on_vectors(p, ixi.as_slice(), &y)?.re;
        worst = worst.max((w1_xi - dh.re).abs()).max((w1_ixi + dh.im).abs());
    }
    Ok(worst)
}

/// `‖dΦ_tᵀ ω₁ dΦ_t − ω₁‖` along the flow from `p`.
pub fn symplecticity_residual(h: &HolomorphicHamiltonian, p: &AmbientPoint, t: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let state = flow(h, p, t, cfg, true)?;
    symplecticity_defect(h.model, p, &state)
}

/// `‖dΦ_t∘I − I∘dΦ_t‖` along the flow from `p`.
pub fn flow_holomorphy_residual(h: &HolomorphicHamiltonian, p: &AmbientPoint, t: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let state = flow(h, p, t, cfg, true)?;
    Ok(holomorphy_defect(state.jacobian.as_ref().expect("jacobian")))
}

/// Largest `|Ω|` on pairs of tangent vectors to the leaf `{z = z_p}`
/// transported to time `t` (zero for a lagrangian leaf).
pub fn leaf_isotropy_residual(h: &HolomorphicHamiltonian, p: &AmbientPoint, t: f64, cfg: &IntegratorConfig) -> Result<f64> {
    let n = h.dim();
    let state = flow(h, p, t, cfg, true)?;
    let jac = state.jacobian.as_ref().expect("jacobian");
    let leaf = jac.columns(2 * n, 2 * n);
    let mut worst: f64 = 0.0;
    for a in 0..2 * n {
        for b in 0..2 * n {
            let va: Vec<f64> = leaf.column(a).iter().copied().collect();
            let vb: Vec<f64> = leaf.column(b).iter().copied().collect();
            worst = worst.max(h.model.omega_on_vectors(&state.point, &va, &vb)?.norm());
        }
    }
    Ok(worst)
}

/// `τ∘τ = id` and `τ*Ω = conj Ω` at `p`.
pub fn involution_residual(model: Model, p: &AmbientPoint) -> Result<f64> {
    let n = model.dim();
    let twice = involution(&involution(p));
    let mut worst = twice
        .coords()
        .iter()
        .zip(p.coords())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    let q = involution(p);
    // dτ(δz, δu) = (conj δu, conj δz)
    let dtau = |v: &[f64]| -> Vec<f64> {
        let c = from_real(v, n);
        let swapped: Vec<C64> = c[n..].iter().chain(&c[..n]).map(|w| w.conj()).collect();
        to_real(&swapped, n).as_slice().to_vec()
    };
    let m = 4 * n;
    for a in 0..m {
        for b in 0..m {
            let (x, y) = (unit(m, a), unit(m, b));
            let pulled = model.omega_on_vectors(&q, &dtau(&x), &dtau(&y))?;
            let direct = model.omega_on_vectors(p, &x, &y)?.conj();
            worst = worst.max((pulled - direct).norm());
        }
    }
    Ok(worst)
}

/// Smallest eigenvalue of `sym(ω J_t)` at `φ_t(x)`; positive when the pair
/// is compatible.
pub fn compatibility_diagnostic(s: &LeafSolver, x: &KahlerPoint, t: f64) -> Result<f64> {
    let sol = s.phi(x, t)?;
    let jt = s.j_t(x, t)?;
    Ok(crate::leaf::compatibility_min_eigenvalue(&s.model().omega_matrix(&sol.y), &jt))
}
