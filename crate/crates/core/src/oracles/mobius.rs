//! Exact `φ_t` for `h = a·x + i b·x` on the sphere, where `x = (x₁, x₂, x₃)`
//! is the moment map of the rotation action.
//!
//! The real part generates a rotation and the imaginary part its complexified
//! partner, so `φ_t` is a Möbius map `exp(tζ)` with `ζ ∈ sl(2, ℂ)`.

use nalgebra::{DMatrix, DVector};

use super::expm::expm;
use crate::error::{Error, Result};
use crate::geometry::{KahlerPoint, Model};
use crate::hamiltonian::PolynomialHamiltonian;
use crate::linalg::{C64, I};

#[derive(Debug, Clone, PartialEq)]
pub struct Sl2Generator {
    pub zeta: DMatrix<C64>,
    /// Complex weights of `x₁, x₂, x₃`.
    pub weights: [C64; 3],
}

/// Holomorphic vector field `β + 2αz − γz²` of `[[α, β], [γ, −α]]` for the
/// rotation generated by `Σ c_k x_k`.
fn rotation_generator(c: [C64; 3]) -> DMatrix<C64> {
    let half = 0.5;
    let alpha = I * c[2] * half;
    let beta = (-I * c[0] + c[1]) * half;
    let gamma = (-I * c[0] - c[1]) * half;
    DMatrix::from_row_slice(2, 2, &[alpha, beta, gamma, -alpha])
}

impl Sl2Generator {
    /// `h = a·x + i b·x`.
    pub fn from_axes(a: [f64; 3], b: [f64; 3]) -> Self {
        let w = [0, 1, 2].map(|k| C64::new(a[k], b[k]));
        Self::from_weights(w)
    }

    pub fn from_weights(weights: [C64; 3]) -> Self {
        Self {
            zeta: rotation_generator(weights),
            weights,
        }
    }

    /// Recovers the weights of a sphere hamiltonian lying in the span of
    /// `1, x₁, x₂, x₃`; the constant is dropped.
    pub fn from_hamiltonian(h: &PolynomialHamiltonian) -> Result<Self> {
        if h.model != Model::Sphere {
            return Err(Error::Invalid("Möbius oracle needs the sphere model".into()));
        }
        let sample = |z: C64| -> Result<C64> { h.eval(&KahlerPoint::sphere(0, z)) };
        let basis = |z: C64| -> [C64; 4] {
            let x = sphere_embedding(z);
            [C64::new(1.0, 0.0), C64::new(x[0], 0.0), C64::new(x[1], 0.0), C64::new(x[2], 0.0)]
        };
        let pts = [
            C64::new(0.0, 0.0),
            C64::new(0.7, 0.1),
            C64::new(-0.2, 0.9),
            C64::new(-1.3, -0.4),
            C64::new(0.4, -1.6),
            C64::new(2.5, 0.3),
        ];
        let mut m = DMatrix::from_element(pts.len(), 4, C64::new(0.0, 0.0));
        let mut r = DVector::from_element(pts.len(), C64::new(0.0, 0.0));
        for (i, &z) in pts.iter().enumerate() {
            for (j, v) in basis(z).into_iter().enumerate() {
                m[(i, j)] = v;
            }
            r[i] = sample(z)?;
        }
        let coef = m
            .clone()
            .svd(true, true)
            .solve(&r, 1e-14)
            .map_err(|e| Error::Invalid(e.to_string()))?;
        let fit = (&m * &coef - &r).norm();
        if fit > 1e-10 * (1.0 + r.norm()) {
            return Err(Error::Invalid(
                "Möbius oracle needs h in the span of the moment-map components".into(),
            ));
        }
        Ok(Self::from_weights([coef[1], coef[2], coef[3]]))
    }

    pub fn hamiltonian(&self) -> PolynomialHamiltonian {
        (0..3).fold(PolynomialHamiltonian::zero(Model::Sphere), |acc, k| {
            acc + PolynomialHamiltonian::sphere_coordinate(k).scale(self.weights[k])
        })
    }

    pub fn trace(&self) -> C64 {
        self.zeta[(0, 0)] + self.zeta[(1, 1)]
    }
}

/// Unit-sphere point of a chart-0 coordinate.
pub fn sphere_embedding(z: C64) -> [f64; 3] {
    let r2 = z.norm_sqr();
    let d = 1.0 + r2;
    [2.0 * z.re / d, 2.0 * z.im / d, (1.0 - r2) / d]
}

/// `exp(tζ)` applied to `x` in homogeneous coordinates.
pub fn oracle_mobius(gen: &Sl2Generator, x: &KahlerPoint, t: f64) -> Result<KahlerPoint> {
    Model::Sphere.validate_point(x)?;
    let one = C64::new(1.0, 0.0);
    let hom = if x.chart == 0 { [x.z[0], one] } else { [one, x.z[0]] };
    let m = expm(&(&gen.zeta * C64::new(t, 0.0)));
    let top = m[(0, 0)] * hom[0] + m[(0, 1)] * hom[1];
    let bottom = m[(1, 0)] * hom[0] + m[(1, 1)] * hom[1];
    if top.norm() == 0.0 && bottom.norm() == 0.0 {
        return Err(Error::Degeneracy {
            residual: f64::NAN,
            reason: "Möbius map sent the point to zero".into(),
        });
    }
    let y = if bottom.norm() >= top.norm() {
        KahlerPoint::sphere(0, top / bottom)
    } else {
        KahlerPoint::sphere(1, bottom / top)
    };
    Ok(Model::Sphere.normalize(y))
}
