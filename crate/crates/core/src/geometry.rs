//! The two Kähler models and their complexification.
//!
//! `M` is either flat `ℂⁿ` with `ω = (i/2) Σ dz∧dz̄ = Σ dq∧dp`, or the unit
//! sphere in two stereographic charts with `ω = 2i dz∧dz̄ / (1+|z|²)²`
//! (area 4π). Chart 0 sends the `x₃ = +1` pole to `z = 0`; chart 1 is the
//! antipodal chart, with transition `z ↦ 1/z`.
//!
//! The complexification is the product model `X = M × conj(M)` with
//! holomorphic coordinates `(z, u)`. The real locus is `u = conj(z)`, the
//! involution is `τ(z, u) = (conj u, conj z)`, the projection `Π` drops `u`,
//! and `Ω` is `ω` with `z̄` replaced by `u`.
//!
//! Sign conventions, used everywhere in the crate:
//! - Hamilton fields satisfy `ω(Ξ_h, ·) = dh`;
//! - the metric is `g(X, Y) = ω(X, J₀ Y)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{from_real, C64, I};

/// Chart switching threshold is `1 + CHART_HYSTERESIS` in modulus.
pub const CHART_HYSTERESIS: f64 = 0.1;

/// Minimum `|1 + z·u|` for sphere ambient points.
pub const SPHERE_GUARD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    Flat { n: usize },
    Sphere,
}

/// A point of `M` in a chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KahlerPoint {
    pub chart: usize,
    pub z: Vec<C64>,
}

/// A point of `X` in holomorphic coordinates `(z, u)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientPoint {
    pub chart: usize,
    pub z: Vec<C64>,
    pub u: Vec<C64>,
}

/// Fixed structures at a point of `M`, as real matrices in the `(q, p)` basis.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticData {
    pub omega: DMatrix<f64>,
    pub j0: DMatrix<f64>,
    /// Coefficients `Ω_jk` of `Ω = Σ Ω_jk dz_j∧du_k` at `ι(x)`.
    pub big_omega: DMatrix<C64>,
}

impl KahlerPoint {
    pub fn new(chart: usize, z: Vec<C64>) -> Self {
        Self { chart, z }
    }

    /// A point of flat `ℂⁿ` (single chart).
    pub fn flat(z: Vec<C64>) -> Self {
        Self { chart: 0, z }
    }

    pub fn sphere(chart: usize, z: C64) -> Self {
        Self { chart, z: vec![z] }
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }
}

impl AmbientPoint {
    pub fn new(chart: usize, z: Vec<C64>, u: Vec<C64>) -> Self {
        Self { chart, z, u }
    }

    /// `(z, u)` concatenated.
    pub fn coords(&self) -> Vec<C64> {
        self.z.iter().chain(&self.u).copied().collect()
    }

    pub fn from_coords(chart: usize, w: &[C64]) -> Self {
        let n = w.len() / 2;
        Self {
            chart,
            z: w[..n].to_vec(),
            u: w[n..].to_vec(),
        }
    }

    /// Distance from the real locus, `‖u − conj z‖`.
    pub fn reality_defect(&self) -> f64 {
        self.u
            .iter()
            .zip(&self.z)
            .map(|(u, z)| (u - z.conj()).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// `ι`: the real locus point over `x`.
pub fn embed(x: &KahlerPoint) -> AmbientPoint {
    AmbientPoint {
        chart: x.chart,
        z: x.z.clone(),
        u: x.z.iter().map(|c| c.conj()).collect(),
    }
}

/// `τ(z, u) = (conj u, conj z)`.
pub fn involution(p: &AmbientPoint) -> AmbientPoint {
    AmbientPoint {
        chart: p.chart,
        z: p.u.iter().map(|c| c.conj()).collect(),
        u: p.z.iter().map(|c| c.conj()).collect(),
    }
}

/// `Π₀`: the real anchor of the leaf `{z = const}` through `p`.
pub fn project_pi0(p: &AmbientPoint) -> KahlerPoint {
    KahlerPoint {
        chart: p.chart,
        z: p.z.clone(),
    }
}

fn recip(c: C64, what: &str) -> Result<C64> {
    if c == C64::new(0.0, 0.0) {
        Err(Error::Domain(format!("{what} = 0 has no image in the other chart")))
    } else {
        Ok(c.inv())
    }
}

impl Model {
    /// Complex dimension `n` of `M`.
    pub fn dim(&self) -> usize {
        match self {
            Model::Flat { n } => *n,
            Model::Sphere => 1,
        }
    }

    pub fn chart_count(&self) -> usize {
        match self {
            Model::Flat { .. } => 1,
            Model::Sphere => 2,
        }
    }

    pub fn validate_point(&self, x: &KahlerPoint) -> Result<()> {
        if x.chart >= self.chart_count() {
            return Err(Error::Invalid(format!("chart {} does not exist", x.chart)));
        }
        if x.z.len() != self.dim() {
            return Err(Error::Invalid(format!(
                "point has dimension {}, model has {}",
                x.z.len(),
                self.dim()
            )));
        }
        if x.z.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::Invalid("non-finite coordinate".into()));
        }
        Ok(())
    }

    /// Checks that `Ω` is defined at `p`.
    pub fn check_ambient(&self, p: &AmbientPoint) -> Result<()> {
        if let Model::Sphere = self {
            let d = C64::new(1.0, 0.0) + p.z[0] * p.u[0];
            if d.norm() <= SPHERE_GUARD {
                return Err(Error::Domain(format!(
                    "|1 + z·u| = {:e} is inside the guard band of the antidiagonal",
                    d.norm()
                )));
            }
        }
        Ok(())
    }

    /// Re-expresses `x` in `chart`.
    pub fn to_chart(&self, x: &KahlerPoint, chart: usize) -> Result<KahlerPoint> {
        if x.chart == chart {
            return Ok(x.clone());
        }
        match self {
            Model::Flat { .. } => Err(Error::Invalid(format!("flat model has no chart {chart}"))),
            Model::Sphere => Ok(KahlerPoint::sphere(chart, recip(x.z[0], "z")?)),
        }
    }

    pub fn ambient_to_chart(&self, p: &AmbientPoint, chart: usize) -> Result<AmbientPoint> {
        if p.chart == chart {
            return Ok(p.clone());
        }
        match self {
            Model::Flat { .. } => Err(Error::Invalid(format!("flat model has no chart {chart}"))),
            Model::Sphere => Ok(AmbientPoint::new(
                chart,
                vec![recip(p.z[0], "z")?],
                vec![recip(p.u[0], "u")?],
            )),
        }
    }

    /// Puts a sphere point in the chart where `|z| ≤ 1 + CHART_HYSTERESIS`.
    pub fn normalize(&self, x: KahlerPoint) -> KahlerPoint {
        match self {
            Model::Sphere if x.z[0].norm() > 1.0 + CHART_HYSTERESIS => {
                KahlerPoint::sphere(1 - x.chart, x.z[0].inv())
            }
            _ => x,
        }
    }

    /// Complex derivative of the chart transition leaving `chart` at
    /// coordinate `c`, i.e. `d(1/c)/dc`.
    pub fn transition_derivative(&self, c: C64) -> C64 {
        -(c * c).inv()
    }

    /// Density `ρ` with `ω = ρ Σ dq∧dp`.
    pub fn density(&self, x: &KahlerPoint) -> f64 {
        match self {
            Model::Flat { .. } => 1.0,
            Model::Sphere => {
                let r2 = x.z[0].norm_sqr();
                4.0 / ((1.0 + r2) * (1.0 + r2))
            }
        }
    }

    /// `ω` at `x` as a real `2n×2n` matrix, `ω(X, Y) = Xᵀ W Y`.
    pub fn omega_matrix(&self, x: &KahlerPoint) -> DMatrix<f64> {
        let n = self.dim();
        let rho = self.density(x);
        let mut w = DMatrix::zeros(2 * n, 2 * n);
        for j in 0..n {
            w[(j, n + j)] = rho;
            w[(n + j, j)] = -rho;
        }
        w
    }

    /// Multiplication by `i` in the chart.
    pub fn j0(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut j = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..n {
            j[(k, n + k)] = -1.0;
            j[(n + k, k)] = 1.0;
        }
        j
    }

    /// Coefficients of `Ω` at an ambient point.
    pub fn holomorphic_form(&self, p: &AmbientPoint) -> Result<DMatrix<C64>> {
        self.check_ambient(p)?;
        Ok(match self {
            Model::Flat { n } => DMatrix::from_diagonal_element(*n, *n, 0.5 * I),
            Model::Sphere => {
                let d = C64::new(1.0, 0.0) + p.z[0] * p.u[0];
                DMatrix::from_element(1, 1, 2.0 * I / (d * d))
            }
        })
    }

    pub fn kahler_forms(&self, x: &KahlerPoint) -> Result<SymplecticData> {
        self.validate_point(x)?;
        Ok(SymplecticData {
            omega: self.omega_matrix(x),
            j0: self.j0(),
            big_omega: self.holomorphic_form(&embed(x))?,
        })
    }

    /// `Ω_p(X, Y)` for real tangent vectors given in the block-real layout.
    pub fn omega_on_vectors(&self, p: &AmbientPoint, x: &[f64], y: &[f64]) -> Result<C64> {
        let n = self.dim();
        let form = self.holomorphic_form(p)?;
        let (xc, yc) = (from_real(x, n), from_real(y, n));
        let mut acc = C64::new(0.0, 0.0);
        for j in 0..n {
            for k in 0..n {
                acc += form[(j, k)] * (xc[j] * yc[n + k] - yc[j] * xc[n + k]);
            }
        }
        Ok(acc)
    }

    /// Real `4n×4n` matrices of `ω₁ = Re Ω` and `ω₂ = Im Ω` at `p`.
    pub fn omega_parts(&self, p: &AmbientPoint) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let m = 4 * self.dim();
        let mut re = DMatrix::zeros(m, m);
        let mut im = DMatrix::zeros(m, m);
        let basis = |a: usize| {
            let mut v = vec![0.0; m];
            v[a] = 1.0;
            v
        };
        for a in 0..m {
            for b in 0..m {
                let val = self.omega_on_vectors(p, &basis(a), &basis(b))?;
                re[(a, b)] = val.re;
                im[(a, b)] = val.im;
            }
        }
        Ok((re, im))
    }

    /// Poisson tensor `P` of `Ω` in coordinates `w = (z, u)`, so that the
    /// holomorphic Hamilton field of `H` is `P ∇H`, together with `∂P/∂w_c`
    /// for every `c`. From `Ω⌋V = dH`: `ż = Ω⁻ᵀ ∂H/∂u`, `u̇ = −Ω⁻¹ ∂H/∂z`.
    pub fn poisson(&self, chart: usize, w: &[C64]) -> Result<(DMatrix<C64>, Vec<DMatrix<C64>>)> {
        let n = self.dim();
        let p = AmbientPoint::from_coords(chart, w);
        self.check_ambient(&p)?;
        match self {
            Model::Flat { .. } => {
                let mut pm = DMatrix::zeros(2 * n, 2 * n);
                for j in 0..n {
                    pm[(j, n + j)] = -2.0 * I;
                    pm[(n + j, j)] = 2.0 * I;
                }
                Ok((pm, vec![DMatrix::zeros(2 * n, 2 * n); 2 * n]))
            }
            Model::Sphere => {
                let (z, u) = (w[0], w[1]);
                let d = C64::new(1.0, 0.0) + z * u;
                let s = d * d;
                let build = |c: C64| DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), -0.5 * I * c, 0.5 * I * c, C64::new(0.0, 0.0)]);
                Ok((build(s), vec![build(2.0 * u * d), build(2.0 * z * d)]))
            }
        }
    }
}
