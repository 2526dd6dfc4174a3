//! Transported leaves and the maps they define on `M`.
//!
//! The leaf of `𝓕₀` over `x` is `{(z_x, u) : u ∈ ℂⁿ}`. Flowing it by `Φ_t`
//! and intersecting with the real locus gives `φ_t(x)`: solve
//!
//! ```text
//! G(u) = U(t; z_x, u) − conj Z(t; z_x, u) = 0
//! ```
//!
//! for the fiber parameter `u*` and read off `y = Z(t; z_x, u*)`. `G` is only
//! real-differentiable (because of the conjugate), so Newton runs on its real
//! `2n`-dimensional form with the Jacobian taken from the variational
//! equations.
//!
//! The same Jacobian gives the transported leaf's tangent space, which is
//! all that is needed for `J_t`: a tangent vector `v` of `M` at `y` lifts to
//! `(v, conj v)`; decomposing `I·(v, conj v) = (w, conj w) + ℓ` with `ℓ`
//! tangent to the leaf defines `J_t v = w`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{flow, state_in_chart, FlowState, IntegratorConfig};
use crate::geometry::{embed, AmbientPoint, KahlerPoint, Model, CHART_HYSTERESIS};
use crate::hamiltonian::{HolomorphicHamiltonian, PolynomialHamiltonian};
use crate::linalg::{complex_norm, complex_structure, condition_number, from_real, to_real, C64};

/// Largest time increment between warm-started solves.
pub const CONTINUATION_STEP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_halvings")]
    pub max_halvings: usize,
    /// Linearizations worse than this are reported as leaving `E`.
    #[serde(default = "default_max_condition")]
    pub max_condition: f64,
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_iters() -> usize {
    25
}
fn default_halvings() -> usize {
    8
}
fn default_max_condition() -> f64 {
    1e10
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iters: default_max_iters(),
            max_halvings: default_halvings(),
            max_condition: default_max_condition(),
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 || !(self.max_condition > 1.0) {
            return Err(Error::Invalid("newton: tol > 0, max_iters ≥ 1 and max_condition > 1 required".into()));
        }
        Ok(())
    }
}

/// Result of intersecting a transported leaf with the real locus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafSolution {
    pub x: KahlerPoint,
    pub t: f64,
    /// Fiber parameter of the intersection point before the flow.
    pub u_star: Vec<C64>,
    /// `φ_t(x)`.
    pub y: KahlerPoint,
    pub newton_iters: usize,
    pub residual: f64,
}

/// Real `2n×2n` frames at `y = φ_t(x)`, in the chart of `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameData {
    pub jt: DMatrix<f64>,
    /// Chart derivative of `φ_t` at `x` (columns in the chart of `x`).
    pub dphi: DMatrix<f64>,
    /// `ω_t` at `y`.
    pub omega_t: DMatrix<f64>,
}

/// Everything needed to evaluate `φ_t`, `f_t` and their companions for one
/// hamiltonian.
#[derive(Debug, Clone)]
pub struct LeafSolver {
    pub h: PolynomialHamiltonian,
    pub ham: HolomorphicHamiltonian,
    pub integrator: IntegratorConfig,
    pub newton: NewtonConfig,
}

struct Shot {
    state: FlowState,
    /// `U − conj Z` in the block-real layout.
    g: DVector<f64>,
    /// `∂G/∂(Re u, Im u)`.
    dg_du: DMatrix<f64>,
    /// `∂G/∂(q_x, p_x)`.
    dg_dx: DMatrix<f64>,
}

impl Shot {
    fn residual(&self) -> f64 {
        self.g.norm()
    }
}

fn degeneracy(residual: f64, reason: impl Into<String>) -> Error {
    Error::Degeneracy {
        residual,
        reason: reason.into(),
    }
}

/// Chart in which `z` has modulus at most `1 + CHART_HYSTERESIS`.
fn preferred_chart(model: Model, p: &AmbientPoint) -> usize {
    match model {
        Model::Sphere if p.z[0].norm() > 1.0 + CHART_HYSTERESIS => 1 - p.chart,
        _ => p.chart,
    }
}

impl LeafSolver {
    pub fn new(h: &PolynomialHamiltonian) -> Self {
        Self {
            h: h.clone(),
            ham: h.extend(),
            integrator: IntegratorConfig::default(),
            newton: NewtonConfig::default(),
        }
    }

    pub fn with_integrator(mut self, cfg: IntegratorConfig) -> Self {
        self.integrator = cfg;
        self
    }

    pub fn with_newton(mut self, cfg: NewtonConfig) -> Self {
        self.newton = cfg;
        self
    }

    pub fn model(&self) -> Model {
        self.ham.model
    }

    fn n(&self) -> usize {
        self.ham.dim()
    }

    /// Flows `(z_x, u)` to time `t` and evaluates `G` with its derivatives,
    /// expressing the end point in `target` (or its preferred chart).
    fn shoot(&self, x: &KahlerPoint, u: &[C64], t: f64, target: Option<usize>) -> Result<Shot> {
        let n = self.n();
        let p0 = AmbientPoint::new(x.chart, x.z.clone(), u.to_vec());
        let raw = flow(&self.ham, &p0, t, &self.integrator, true)?;
        let chart = target.unwrap_or_else(|| preferred_chart(self.model(), &raw.point));
        let state = state_in_chart(self.model(), &raw, chart)?;
        let m = state.jacobian.as_ref().expect("flow was asked for a Jacobian");
        let g_c: Vec<C64> = state
            .point
            .u
            .iter()
            .zip(&state.point.z)
            .map(|(u, z)| u - z.conj())
            .collect();
        let g = to_real(&g_c, n);
        let rows = |cols: std::ops::Range<usize>| {
            let mut d = DMatrix::zeros(2 * n, cols.len());
            for (k, col) in cols.enumerate() {
                for j in 0..n {
                    d[(j, k)] = m[(2 * n + j, col)] - m[(j, col)];
                    d[(n + j, k)] = m[(3 * n + j, col)] + m[(n + j, col)];
                }
            }
            d
        };
        let dg_du = rows(2 * n..4 * n);
        let dg_dx = rows(0..2 * n);
        Ok(Shot {
            state,
            g,
            dg_du,
            dg_dx,
        })
    }

    /// Damped Newton on `G(u) = 0` starting from `guess`.
    fn solve_leaf(&self, x: &KahlerPoint, t: f64, guess: &[C64]) -> Result<(Vec<C64>, Shot, usize)> {
        self.newton.validate()?;
        let n = self.n();
        let mut u = guess.to_vec();
        let mut shot = self.shoot(x, &u, t, None)?;
        let target = shot.state.point.chart;
        let mut iters = 0;
        loop {
            let res = shot.residual();
            if res <= self.newton.tol {
                return Ok((u, shot, iters));
            }
            if iters >= self.newton.max_iters {
                return Err(degeneracy(res, format!("Newton did not converge in {iters} iterations")));
            }
            let cond = condition_number(&shot.dg_du);
            if !(cond <= self.newton.max_condition) {
                return Err(degeneracy(res, format!("leaf intersection is ill-conditioned (cond {cond:e})")));
            }
            let delta = shot
                .dg_du
                .clone()
                .lu()
                .solve(&(-&shot.g))
                .ok_or_else(|| degeneracy(res, "singular leaf intersection"))?;
            let step = from_real(delta.as_slice(), n);
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=self.newton.max_halvings {
                let trial: Vec<C64> = u.iter().zip(&step).map(|(a, d)| a + lambda * d).collect();
                if let Ok(s) = self.shoot(x, &trial, t, Some(target)) {
                    if s.residual() < res {
                        accepted = Some((trial, s));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            let (trial, s) = accepted.ok_or_else(|| degeneracy(res, "damped Newton step failed to reduce the residual"))?;
            u = trial;
            shot = s;
            iters += 1;
        }
    }

    fn solution(&self, x: &KahlerPoint, t: f64, u: Vec<C64>, shot: &Shot, iters: usize) -> LeafSolution {
        let y = self.model().normalize(KahlerPoint::new(shot.state.point.chart, shot.state.point.z.clone()));
        LeafSolution {
            x: x.clone(),
            t,
            u_star: u,
            y,
            newton_iters: iters,
            residual: shot.residual(),
        }
    }

    /// `φ_t(x)`, starting Newton from `u = conj(z_x)`. Longer times that
    /// fail from this cold start are retried by continuation from `t = 0`.
    pub fn phi(&self, x: &KahlerPoint, t: f64) -> Result<LeafSolution> {
        let guess: Vec<C64> = x.z.iter().map(|c| c.conj()).collect();
        match self.phi_from(x, t, &guess) {
            Err(e) if e.is_degeneracy() && t.abs() > CONTINUATION_STEP => {
                let steps = (t.abs() / CONTINUATION_STEP).ceil() as usize;
                let times: Vec<f64> = (1..=steps).map(|k| t * k as f64 / steps as f64).collect();
                let (mut sols, err) = self.phi_path(x, &times);
                match err {
                    Some(e) => Err(e),
                    None => Ok(sols.pop().expect("at least one step")),
                }
            }
            other => other,
        }
    }

    /// `φ_t(x)` with a warm-start fiber parameter.
    pub fn phi_from(&self, x: &KahlerPoint, t: f64, guess: &[C64]) -> Result<LeafSolution> {
        self.model().validate_point(x)?;
        if t == 0.0 {
            return Ok(LeafSolution {
                x: x.clone(),
                t,
                u_star: x.z.iter().map(|c| c.conj()).collect(),
                y: x.clone(),
                newton_iters: 0,
                residual: 0.0,
            });
        }
        let (u, shot, iters) = self.solve_leaf(x, t, guess)?;
        Ok(self.solution(x, t, u, &shot, iters))
    }

    /// `φ_t(x)` along increasing `times`, warm-starting each solve from the
    /// previous fiber parameter. Stops at the first failure and returns it
    /// alongside the solutions computed so far.
    pub fn phi_path(&self, x: &KahlerPoint, times: &[f64]) -> (Vec<LeafSolution>, Option<Error>) {
        let mut out = Vec::with_capacity(times.len());
        let mut guess: Vec<C64> = x.z.iter().map(|c| c.conj()).collect();
        for &t in times {
            match self.phi_from(x, t, &guess) {
                Ok(sol) => {
                    guess = sol.u_star.clone();
                    out.push(sol);
                }
                Err(e) => return (out, Some(e)),
            }
        }
        (out, None)
    }

    /// `Π_t(p)`: the real anchor of the `𝓕_t`-leaf through `p`.
    pub fn pi_t(&self, p: &AmbientPoint, t: f64) -> Result<KahlerPoint> {
        let q = flow(&self.ham, p, -t, &self.integrator, false)?.point;
        let label = KahlerPoint::new(q.chart, q.z.clone());
        Ok(self.phi_from(&label, t, &q.u)?.y)
    }

    /// `J_t` at `φ_t(x)`, in the chart of `φ_t(x)`.
    pub fn j_t(&self, x: &KahlerPoint, t: f64) -> Result<DMatrix<f64>> {
        let sol = self.phi(x, t)?;
        let shot = self.shoot(x, &sol.u_star, t, Some(sol.y.chart))?;
        self.split_complex_structure(&shot)
    }

    /// Solves `[lift | L] (w, c) = rhs` column by column and returns the
    /// `w` rows: the component along `M` of ambient vectors at `y`, split
    /// along the transported leaf `L`.
    fn split(&self, shot: &Shot, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let n = self.n();
        let m = shot.state.jacobian.as_ref().expect("jacobian");
        let mut a = DMatrix::zeros(4 * n, 4 * n);
        a.view_mut((0, 0), (4 * n, 2 * n)).copy_from(&real_lift(n));
        a.view_mut((0, 2 * n), (4 * n, 2 * n)).copy_from(&m.columns(2 * n, 2 * n));
        let cond = condition_number(&a);
        if !(cond <= self.newton.max_condition) {
            return Err(degeneracy(
                shot.residual(),
                format!("transported leaf is nearly tangent to M (cond {cond:e})"),
            ));
        }
        let sol = a
            .lu()
            .solve(rhs)
            .ok_or_else(|| degeneracy(shot.residual(), "singular splitting"))?;
        Ok(sol.rows(0, 2 * n).into_owned())
    }

    fn split_complex_structure(&self, shot: &Shot) -> Result<DMatrix<f64>> {
        let n = self.n();
        self.split(shot, &(complex_structure(2 * n, n) * real_lift(n)))
    }

    /// `dΠ_t` at `y = φ_t(x)` applied to ambient vectors (block-real columns
    /// in the chart of `y`).
    pub fn leaf_projection(&self, x: &KahlerPoint, t: f64, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let sol = self.phi(x, t)?;
        let shot = self.shoot(x, &sol.u_star, t, Some(sol.y.chart))?;
        self.split(&shot, v)
    }

    /// Solution, `J_t`, `dφ_t` (implicit-function route) and `ω_t` at `φ_t(x)`.
    pub fn frame(&self, x: &KahlerPoint, t: f64) -> Result<(LeafSolution, FrameData)> {
        let n = self.n();
        let sol = self.phi(x, t)?;
        let shot = if t == 0.0 {
            self.shoot(x, &sol.u_star, 0.0, Some(x.chart))?
        } else {
            self.shoot(x, &sol.u_star, t, Some(sol.y.chart))?
        };
        let jt = self.split_complex_structure(&shot)?;
        let m = shot.state.jacobian.as_ref().expect("jacobian");
        let du_dx = shot
            .dg_du
            .clone()
            .lu()
            .solve(&(-&shot.dg_dx))
            .ok_or_else(|| degeneracy(sol.residual, "singular leaf intersection"))?;
        let dz_dx = m.view((0, 0), (2 * n, 2 * n)).into_owned();
        let dz_du = m.view((0, 2 * n), (2 * n, 2 * n)).into_owned();
        let dphi = dz_dx + dz_du * du_dx;
        let omega_t = self.omega_t(&sol.y, t)?;
        Ok((sol, FrameData { jt, dphi, omega_t }))
    }

    /// `f_t(x) = Π₀ Φ_t ι(x)`.
    pub fn f(&self, x: &KahlerPoint, t: f64) -> Result<KahlerPoint> {
        self.model().validate_point(x)?;
        let s = flow(&self.ham, &embed(x), t, &self.integrator, false)?;
        Ok(self.model().normalize(KahlerPoint::new(s.point.chart, s.point.z)))
    }

    /// `f_t(x)` expressed in `chart`, with its real chart derivative.
    pub fn f_with_derivative(&self, x: &KahlerPoint, t: f64, chart: usize) -> Result<(KahlerPoint, DMatrix<f64>)> {
        let n = self.n();
        let raw = flow(&self.ham, &embed(x), t, &self.integrator, true)?;
        let s = state_in_chart(self.model(), &raw, chart)?;
        let m = s.jacobian.as_ref().expect("jacobian");
        let mut c = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            c[(j, j)] = 1.0;
            c[(n + j, n + j)] = -1.0;
        }
        let df = m.view((0, 0), (2 * n, 2 * n)) + m.view((0, 2 * n), (2 * n, 2 * n)) * c;
        Ok((KahlerPoint::new(s.point.chart, s.point.z), df))
    }

    /// Solves `f_t(x) = y` by damped Newton shooting, starting from
    /// `f_{−t}(y)`.
    pub fn f_inverse(&self, y: &KahlerPoint, t: f64) -> Result<KahlerPoint> {
        self.model().validate_point(y)?;
        if t == 0.0 {
            return Ok(y.clone());
        }
        let n = self.n();
        let guess = self.f(y, -t)?;
        let mut x = guess;
        let target = to_real(&y.z, n);
        let eval = |x: &KahlerPoint| -> Result<(DVector<f64>, DMatrix<f64>)> {
            let (fx, df) = self.f_with_derivative(x, t, y.chart)?;
            Ok((to_real(&fx.z, n) - &target, df))
        };
        let (mut r, mut df) = eval(&x)?;
        let mut iters = 0;
        loop {
            let res = r.norm();
            if res <= self.newton.tol {
                return Ok(x);
            }
            if iters >= self.newton.max_iters {
                return Err(degeneracy(res, "f_t inversion did not converge"));
            }
            let cond = condition_number(&df);
            if !(cond <= self.newton.max_condition) {
                return Err(degeneracy(res, format!("df_t is ill-conditioned (cond {cond:e})")));
            }
            let delta = df
                .clone()
                .lu()
                .solve(&(-&r))
                .ok_or_else(|| degeneracy(res, "singular df_t"))?;
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=self.newton.max_halvings {
                let cand = to_real(&x.z, n) + lambda * &delta;
                let xc = KahlerPoint::new(x.chart, from_real(cand.as_slice(), n));
                if let Ok((rc, dfc)) = eval(&xc) {
                    if rc.norm() < res {
                        accepted = Some((xc, rc, dfc));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            let (xc, rc, dfc) = accepted.ok_or_else(|| degeneracy(res, "f_t inversion step failed"))?;
            x = xc;
            r = rc;
            df = dfc;
            iters += 1;
        }
    }

    /// `ω_t` at `y`, defined by `ω = f_t^* ω_t`, together with `f_t⁻¹(y)`.
    pub fn omega_t_with_preimage(&self, y: &KahlerPoint, t: f64) -> Result<(DMatrix<f64>, KahlerPoint)> {
        let x = self.f_inverse(y, t)?;
        let (_, df) = self.f_with_derivative(&x, t, y.chart)?;
        let inv = df
            .clone()
            .try_inverse()
            .ok_or_else(|| degeneracy(0.0, "df_t is singular"))?;
        let w = self.model().omega_matrix(&x);
        Ok((inv.transpose() * w * inv, x))
    }

    pub fn omega_t(&self, y: &KahlerPoint, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.omega_t_with_preimage(y, t)?.0)
    }
}

/// Real `4n×2n` matrix of `v ↦ (v, conj v)` from `(q, p)` to the block-real
/// ambient layout.
pub fn real_lift(n: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(4 * n, 2 * n);
    for j in 0..n {
        a[(j, j)] = 1.0;
        a[(n + j, n + j)] = 1.0;
        a[(2 * n + j, j)] = 1.0;
        a[(3 * n + j, n + j)] = -1.0;
    }
    a
}

/// Smallest eigenvalue of the symmetric part of `ω(·, J_t ·)`; positive when
/// `(ω, J_t)` is a compatible pair.
pub fn compatibility_min_eigenvalue(omega: &DMatrix<f64>, jt: &DMatrix<f64>) -> f64 {
    let g = omega * jt;
    let sym = (&g + g.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// `‖U − conj Z‖` for a flowed leaf point; exposed for diagnostics.
pub fn leaf_residual(p: &AmbientPoint) -> f64 {
    p.reality_defect()
}

/// `‖a − b‖` for points that may sit in different charts; compared in the
/// chart of `b`.
pub fn chart_distance(model: Model, a: &KahlerPoint, b: &KahlerPoint) -> Result<f64> {
    let a = model.to_chart(a, b.chart)?;
    Ok(complex_norm(
        &a.z.iter().zip(&b.z).map(|(x, y)| x - y).collect::<Vec<_>>(),
    ))
}
