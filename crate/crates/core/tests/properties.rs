use hamflow::flow::{flow, IntegratorConfig};
use hamflow::geometry::{embed, involution, project_pi0, AmbientPoint, KahlerPoint, Model};
use hamflow::hamiltonian::{PolynomialHamiltonian, Term};
use hamflow::leaf::{chart_distance, real_lift, LeafSolver};
use hamflow::linalg::{complex_dist, real_rep, C64};
use hamflow::oracles::{oracle_mobius, oracle_quadratic, real_reference, QuadraticSpec, Sl2Generator};
use hamflow::verify;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn c64() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| C64::new(a, b))
}

fn disc(r: f64) -> impl Strategy<Value = C64> {
    (0.0..r, 0.0..std::f64::consts::TAU).prop_map(|(m, a)| C64::from_polar(m, a))
}

fn flat_point(n: usize) -> impl Strategy<Value = KahlerPoint> {
    prop::collection::vec(disc(1.0), n).prop_map(KahlerPoint::flat)
}

fn ambient(n: usize) -> impl Strategy<Value = AmbientPoint> {
    (prop::collection::vec(disc(1.0), n), prop::collection::vec(disc(1.0), n))
        .prop_map(|(z, u)| AmbientPoint::new(0, z, u))
}

fn exponents(n: usize, deg: i32) -> impl Strategy<Value = (Vec<i32>, Vec<i32>)> {
    (prop::collection::vec(0..=deg, n), prop::collection::vec(0..=deg, n)).prop_filter(
        "total degree",
        move |(a, b)| a.iter().chain(b).sum::<i32>() <= deg,
    )
}

/// Random polynomial in `(z, z̄)` on `ℂⁿ` of degree at most `deg`.
fn flat_hamiltonian(n: usize, deg: i32, terms: usize) -> impl Strategy<Value = PolynomialHamiltonian> {
    prop::collection::vec((c64(), exponents(n, deg)), 1..=terms).prop_map(move |ts| {
        let terms = ts.into_iter().map(|(c, (a, b))| Term::new(c, a, b)).collect();
        PolynomialHamiltonian::new(Model::Flat { n }, 0, terms).unwrap()
    })
}

fn real_flat_hamiltonian(n: usize, deg: i32) -> impl Strategy<Value = PolynomialHamiltonian> {
    flat_hamiltonian(n, deg, 4).prop_map(|h| h.clone() + h.conj())
}

fn small_hamiltonian() -> impl Strategy<Value = PolynomialHamiltonian> {
    flat_hamiltonian(1, 3, 3).prop_map(|h| h.scale(C64::new(0.3, 0.0)))
}

fn sphere_hamiltonian() -> impl Strategy<Value = PolynomialHamiltonian> {
    prop::collection::vec(c64(), 3).prop_map(|w| {
        (0..3)
            .map(|k| PolynomialHamiltonian::sphere_coordinate(k).scale(w[k]))
            .fold(PolynomialHamiltonian::zero(Model::Sphere), |acc, h| acc + h)
    })
}

fn real_quadratic(n: usize) -> impl Strategy<Value = PolynomialHamiltonian> {
    prop::collection::vec((c64(), exponents(n, 2)), 1..=4).prop_map(move |ts| {
        let terms = ts
            .into_iter()
            .filter(|(_, (a, b))| a.iter().chain(b).sum::<i32>() == 2)
            .map(|(c, (a, b))| Term::new(c, a, b))
            .collect::<Vec<_>>();
        let h = PolynomialHamiltonian::new(Model::Flat { n }, 0, terms).unwrap();
        h.clone() + h.conj()
    })
}

fn tight() -> IntegratorConfig {
    IntegratorConfig::adaptive(1e-12, 1e-12)
}

proptest! {
    #[test]
    fn embed_then_project_is_identity(x in flat_point(2), z in disc(3.0)) {
        prop_assert_eq!(project_pi0(&embed(&x)), x);
        let s = KahlerPoint::sphere(0, z);
        prop_assert_eq!(project_pi0(&embed(&s)), s);
    }

    #[test]
    fn big_omega_restricts_to_omega(x in flat_point(2), z in disc(2.0), v in prop::collection::vec(-1.0..1.0f64, 8)) {
        for (model, x) in [(Model::Flat { n: 2 }, x), (Model::Sphere, KahlerPoint::sphere(0, z))] {
            let n = model.dim();
            let lift = real_lift(n);
            let (a, b) = (&v[..2 * n], &v[2 * n..4 * n]);
            let la = &lift * nalgebra::DVector::from_column_slice(a);
            let lb = &lift * nalgebra::DVector::from_column_slice(b);
            let big = model.omega_on_vectors(&embed(&x), la.as_slice(), lb.as_slice()).unwrap();
            let w = model.omega_matrix(&x);
            let small = (nalgebra::DVector::from_column_slice(a).transpose() * w * nalgebra::DVector::from_column_slice(b))[0];
            prop_assert!((big - C64::new(small, 0.0)).norm() <= 1e-12 * (1.0 + small.abs()));
        }
    }

    #[test]
    fn fibers_are_isotropic(p in ambient(2), e1 in prop::collection::vec(-1.0..1.0f64, 4), e2 in prop::collection::vec(-1.0..1.0f64, 4)) {
        let mut a = vec![0.0; 8];
        let mut b = vec![0.0; 8];
        a[4..].copy_from_slice(&e1);
        b[4..].copy_from_slice(&e2);
        let val = Model::Flat { n: 2 }.omega_on_vectors(&p, &a, &b).unwrap();
        prop_assert_eq!(val, C64::new(0.0, 0.0));
    }

    #[test]
    fn involution_conjugates_big_omega(p in ambient(2), q in ambient(1)) {
        let flat = Model::Flat { n: 2 };
        prop_assert!(verify::involution_residual(flat, &p).unwrap() <= 1e-12);
        let r = verify::involution_residual(Model::Sphere, &q).unwrap();
        prop_assert!(r <= 1e-12 * Model::Sphere.holomorphic_form(&q).unwrap()[(0, 0)].norm().max(1.0));
        prop_assert_eq!(involution(&involution(&p)), p);
    }

    #[test]
    fn sphere_chart_switch_preserves_omega(z in disc(3.0).prop_filter("off the pole", |z| z.norm() > 1e-2)) {
        let m = Model::Sphere;
        let x = KahlerPoint::sphere(0, z);
        let y = m.to_chart(&x, 1).unwrap();
        let d = real_rep(&DMatrix::from_element(1, 1, -1.0 / (z * z)), 1);
        let pulled = d.transpose() * m.omega_matrix(&y) * &d;
        let direct = m.omega_matrix(&x);
        prop_assert!((pulled - &direct).norm() <= 1e-10 * direct.norm());
    }

    #[test]
    fn extension_restricts_to_h(h in flat_hamiltonian(2, 4, 6), x in flat_point(2)) {
        let direct = h.eval(&x).unwrap();
        let ext = h.extend().restrict(&x).unwrap();
        prop_assert!((direct - ext).norm() <= 1e-12 * (1.0 + direct.norm()));
    }

    #[test]
    fn hermitian_coefficients_give_real_values(h in real_flat_hamiltonian(2, 4), x in flat_point(2)) {
        prop_assert!(h.is_real());
        let v = h.eval(&x).unwrap();
        prop_assert!(v.im.abs() <= 1e-12 * (1.0 + v.norm()));
    }

    #[test]
    fn extension_is_real_linear(
        h1 in flat_hamiltonian(1, 4, 4),
        h2 in flat_hamiltonian(1, 4, 4),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        p in ambient(1),
    ) {
        let combo = h1.scale(C64::new(a, 0.0)) + h2.scale(C64::new(b, 0.0));
        let lhs = combo.extend().eval(&p).unwrap();
        let rhs = h1.extend().eval(&p).unwrap() * a + h2.extend().eval(&p).unwrap() * b;
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
    }

    #[test]
    fn holomorphic_field_pairs_to_twice_dh(h in flat_hamiltonian(2, 4, 5), p in ambient(2), g in sphere_hamiltonian(), q in ambient(1)) {
        let hh = h.extend();
        let scale = 1.0 + hh.eval_with_partials(&p).unwrap().dz.iter().chain(&hh.eval_with_partials(&p).unwrap().du).map(|d| d.norm()).sum::<f64>();
        prop_assert!(verify::holomorphic_field_residual(&hh, &p).unwrap() <= 1e-12 * scale);
        prop_assert!(verify::hamilton_equations_residual(&hh, &p).unwrap() <= 1e-10 * scale);
        prop_assert!(verify::holomorphic_field_residual(&g.extend(), &q).unwrap() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn flow_is_symplectic_and_holomorphic(h in small_hamiltonian(), p in ambient(1), t in 0.0..0.5f64) {
        let hh = h.extend();
        let cfg = tight();
        if let Ok(state) = flow(&hh, &p, t, &cfg, true) {
            let scale = state.jacobian.as_ref().unwrap().norm().powi(2);
            prop_assert!(hamflow::flow::symplecticity_defect(hh.model, &p, &state).unwrap() <= 1e-8 * scale.max(1.0));
            prop_assert!(hamflow::flow::holomorphy_defect(state.jacobian.as_ref().unwrap()) <= 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn real_hamiltonians_keep_the_real_locus(h in real_flat_hamiltonian(1, 3), x in flat_point(1), t in 0.0..0.5f64) {
        let h = h.scale(C64::new(0.2, 0.0));
        if let Ok(state) = flow(&h.extend(), &embed(&x), t, &tight(), false) {
            prop_assert!(complex_dist(&state.point.u, &hamflow::linalg::conj(&state.point.z)) <= 1e-9);
        }
    }

    #[test]
    fn backward_flow_undoes_forward_flow(h in small_hamiltonian(), p in ambient(1), t in 0.0..0.5f64) {
        let hh = h.extend();
        let cfg = IntegratorConfig::default();
        if let Ok(fwd) = flow(&hh, &p, t, &cfg, false) {
            let back = flow(&hh, &fwd.point, -t, &cfg, false).unwrap();
            prop_assert!(complex_dist(&back.point.coords(), &p.coords()) <= 10.0 * cfg.nominal_tolerance() * (1.0 + fwd.point.coords().iter().map(|w| w.norm()).sum::<f64>()));
        }
    }

    #[test]
    fn leaf_solver_invariants(h in small_hamiltonian(), x in flat_point(1), t in 0.02..0.3f64) {
        let s = LeafSolver::new(&h);
        if let Ok(sol) = s.phi(&x, t) {
            prop_assert!(verify::j_squared_residual(&s, &x, t).unwrap() <= 1e-8);
            let back = s.pi_t(&embed(&sol.y), t).unwrap();
            prop_assert!(chart_distance(s.model(), &back, &sol.y).unwrap() <= 1e-9);
            prop_assert!(verify::inverse_residual(&s, &x, t).unwrap() <= 1e-6);
            prop_assert!(verify::holomorphy_residual(&s, &x, t).unwrap() <= 1e-5);
        }
    }

    #[test]
    fn quadratic_oracle_matches_real_flow(h in real_quadratic(1), x in flat_point(1), t in 0.0..0.5f64) {
        let spec = QuadraticSpec::from_hamiltonian(&h).unwrap();
        let (y, _) = oracle_quadratic(&spec, &x, t).unwrap();
        let r = real_reference(&h, &x, t).unwrap();
        prop_assert!(complex_dist(&y.z, &r.z) <= 1e-10 * (1.0 + r.z[0].norm()));
    }

    #[test]
    fn mobius_oracle_is_a_group(a in prop::collection::vec(-1.0..1.0f64, 3), b in prop::collection::vec(-1.0..1.0f64, 3), z in disc(2.0), t in -0.3..0.3f64, u in -0.3..0.3f64) {
        let g = Sl2Generator::from_axes([a[0], a[1], a[2]], [b[0], b[1], b[2]]);
        let x = KahlerPoint::sphere(0, z);
        let composed = oracle_mobius(&g, &oracle_mobius(&g, &x, u).unwrap(), t).unwrap();
        let direct = oracle_mobius(&g, &x, t + u).unwrap();
        prop_assert!(chart_distance(Model::Sphere, &composed, &direct).unwrap() <= 1e-10);
    }
}
