//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line.

use std::io::Write;
use std::process::Command;

use hamflow::flow::IntegratorConfig;
use hamflow::geometry::{AmbientPoint, KahlerPoint, Model};
use hamflow::hamiltonian::{PolynomialHamiltonian, Term};
use hamflow::leaf::{chart_distance, LeafSolver};
use hamflow::linalg::{op_norm, C64, I};
use hamflow::oracles::{oracle_mobius, oracle_quadratic, real_reference, QuadraticSpec, Sl2Generator};
use hamflow::verify;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn line(criterion: usize, title: &str, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "[acceptance] criterion {criterion} {verdict}: {title} ({detail})");
    let _ = out.flush();
}

/// Running maximum of named residuals against fixed tolerances.
struct Tally {
    entries: Vec<(&'static str, f64, f64, usize)>,
    errors: Vec<String>,
}

impl Tally {
    fn new(names: &[(&'static str, f64)]) -> Self {
        Self {
            entries: names.iter().map(|(n, tol)| (*n, 0.0, *tol, 0)).collect(),
            errors: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, r: hamflow::error::Result<f64>) {
        let e = self.entries.iter_mut().find(|e| e.0 == name).expect("known residual");
        match r {
            Ok(v) if v.is_finite() => {
                e.1 = f64::max(e.1, v);
                e.3 += 1;
            }
            Ok(v) => self.errors.push(format!("{name}: non-finite residual {v}")),
            Err(err) => self.errors.push(format!("{name}: {err}")),
        }
    }

    fn passed(&self) -> bool {
        self.errors.is_empty() && self.entries.iter().all(|e| e.1 <= e.2)
    }

    fn detail(&self) -> String {
        let mut parts: Vec<String> = self
            .entries
            .iter()
            .map(|(n, m, tol, k)| format!("{n} max {m:.2e} ≤ {tol:.0e} over {k}"))
            .collect();
        if !self.errors.is_empty() {
            parts.push(format!("{} errors, first: {}", self.errors.len(), self.errors[0]));
        }
        parts.join("; ")
    }

    fn finish(&self, criterion: usize, title: &str) {
        line(criterion, title, self.passed(), &self.detail());
        assert!(self.passed(), "criterion {criterion}: {}", self.detail());
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn rc(rng: &mut ChaCha8Rng, scale: f64) -> C64 {
    c(rng.gen_range(-scale..scale), rng.gen_range(-scale..scale))
}

fn flat_monomial(n: usize, coeff: C64, alpha: Vec<i32>, beta: Vec<i32>) -> PolynomialHamiltonian {
    PolynomialHamiltonian::monomial(Model::Flat { n }, coeff, alpha, beta).unwrap()
}

/// Random real polynomial on flat `ℂⁿ` of degree ≤ `deg`; coefficients
/// shrink with degree so real flows stay bounded on the seed disk.
fn random_real_flat(rng: &mut ChaCha8Rng, n: usize, deg: i32) -> PolynomialHamiltonian {
    let mut terms = Vec::new();
    let mut exps = vec![vec![0i32; 2 * n]];
    for _ in 0..deg {
        let mut next = exps.clone();
        for e in &exps {
            for k in 0..2 * n {
                let mut f = e.clone();
                f[k] += 1;
                if !next.contains(&f) {
                    next.push(f);
                }
            }
        }
        exps = next;
    }
    for e in exps {
        let d: i32 = e.iter().sum();
        if d == 0 {
            continue;
        }
        let scale = 0.6 / (d as f64).powi(2);
        terms.push(Term::new(rc(rng, scale), e[..n].to_vec(), e[n..].to_vec()));
    }
    PolynomialHamiltonian::new(Model::Flat { n }, 0, terms).unwrap().real_part()
}

fn sphere_x(k: usize) -> PolynomialHamiltonian {
    PolynomialHamiltonian::sphere_coordinate(k)
}

/// Random real quadratic polynomial in the moment-map coordinates.
fn random_real_sphere(rng: &mut ChaCha8Rng) -> PolynomialHamiltonian {
    let mut h = PolynomialHamiltonian::zero(Model::Sphere);
    for j in 0..3 {
        h = h + sphere_x(j).scale(c(rng.gen_range(-1.0..1.0), 0.0));
        for k in j..3 {
            h = h + (sphere_x(j) * sphere_x(k)).scale(c(rng.gen_range(-0.7..0.7), 0.0));
        }
    }
    h
}

fn random_flat_point(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> KahlerPoint {
    KahlerPoint::flat(
        (0..n)
            .map(|_| C64::from_polar(radius * rng.gen::<f64>().sqrt(), rng.gen_range(0.0..std::f64::consts::TAU)))
            .collect(),
    )
}

fn random_sphere_point(rng: &mut ChaCha8Rng) -> KahlerPoint {
    let chart = rng.gen_range(0..2);
    Model::Sphere.normalize(KahlerPoint::sphere(chart, rc(rng, 1.5)))
}

fn tight() -> IntegratorConfig {
    IntegratorConfig::adaptive(1e-12, 1e-12)
}

#[test]
fn criterion_1_real_hamiltonians_reduce_to_hamilton_flow() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut tally = Tally::new(&[("phi vs real reference", 1e-6)]);
    let mut cases: Vec<PolynomialHamiltonian> = Vec::new();
    for (n, deg) in [(1, 2), (1, 3), (1, 4), (2, 2), (2, 4)] {
        cases.push(random_real_flat(&mut rng, n, deg));
    }
    for _ in 0..5 {
        cases.push(random_real_sphere(&mut rng));
    }
    let times: Vec<f64> = (0..=10).map(|k| 0.05 * k as f64).collect();
    for h in &cases {
        assert!(h.is_real());
        let s = LeafSolver::new(h);
        for _ in 0..20 {
            let x = match h.model {
                Model::Flat { n } => random_flat_point(&mut rng, n, 0.8),
                Model::Sphere => random_sphere_point(&mut rng),
            };
            let (sols, err) = s.phi_path(&x, &times);
            if let Some(e) = err {
                tally.add("phi vs real reference", Err(e));
                continue;
            }
            for sol in sols {
                let r = real_reference(h, &x, sol.t).and_then(|y| chart_distance(h.model, &sol.y, &y));
                tally.add("phi vs real reference", r);
            }
        }
    }
    tally.finish(1, "real h: phi equals the real Hamilton flow");
}

fn random_quadratic(rng: &mut ChaCha8Rng, n: usize) -> QuadraticSpec {
    let m = 2 * n;
    let mut a = DMatrix::from_element(m, m, c(0.0, 0.0));
    for i in 0..m {
        for j in i..m {
            let v = rc(rng, 0.5);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let b = DVector::from_fn(m, |_, _| rc(rng, 0.5));
    QuadraticSpec::new(a, b, rc(rng, 0.5)).unwrap()
}

#[test]
fn criterion_2_quadratic_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut tally = Tally::new(&[("phi vs oracle", 1e-7), ("J_t vs oracle", 1e-7)]);
    let times: Vec<f64> = (1..=5).map(|k| 0.1 * k as f64).collect();
    for n in [1, 2] {
        for _ in 0..10 {
            let spec = random_quadratic(&mut rng, n);
            let h = spec.to_hamiltonian();
            let s = LeafSolver::new(&h).with_integrator(tight());
            for _ in 0..3 {
                let x = random_flat_point(&mut rng, n, 0.8);
                let (sols, err) = s.phi_path(&x, &times);
                if let Some(e) = err {
                    tally.add("phi vs oracle", Err(e));
                    continue;
                }
                for sol in sols {
                    match oracle_quadratic(&spec, &x, sol.t) {
                        Ok((y, j_oracle)) => {
                            tally.add("phi vs oracle", chart_distance(h.model, &sol.y, &y));
                            tally.add("J_t vs oracle", s.j_t(&x, sol.t).map(|jt| op_norm(&(jt - j_oracle))));
                        }
                        Err(e) => tally.add("phi vs oracle", Err(e)),
                    }
                }
            }
        }
    }
    tally.finish(2, "quadratic H: phi and J_t equal the affine-algebra oracle");
}

/// Eight hamiltonians: real, imaginary, mixed and cubic, on both models.
fn corpus() -> Vec<(&'static str, PolynomialHamiltonian)> {
    let f = |coeff: C64, a: i32, b: i32| flat_monomial(1, coeff, vec![a], vec![b]);
    let f2 = |coeff: C64, a: [i32; 2], b: [i32; 2]| flat_monomial(2, coeff, a.to_vec(), b.to_vec());
    vec![
        ("flat real quartic", (f(c(1.0, 0.0), 1, 1) + f(c(0.1, 0.0), 2, 2) + f(c(0.2, 0.1), 3, 0) + f(c(0.2, -0.1), 0, 3))),
        ("flat imaginary", (f(c(0.0, 1.0), 1, 1) + f(c(0.0, 0.3), 2, 0) + f(c(0.0, 0.3), 0, 2))),
        ("flat mixed quadratic", (f(c(0.5, 0.2), 2, 0) + f(c(-0.3, 0.4), 0, 2) + f(c(1.0, 0.5), 1, 1) + f(c(0.0, 0.5), 1, 0))),
        ("flat complex cubic", (f(c(0.2, 0.1), 2, 1) + f(c(0.2, -0.1), 1, 2) + f(c(0.0, 0.3), 2, 1) + f(c(0.1, 0.2), 3, 0))),
        ("flat C2 mixed", (f2(c(1.0, 0.0), [1, 0], [1, 0]) + f2(c(0.5, 0.5), [0, 1], [0, 1]) + f2(c(0.2, 0.3), [1, 0], [0, 1]) + f2(c(0.1, -0.2), [1, 1], [0, 0]))),
        ("sphere real", (sphere_x(0) + sphere_x(2) * sphere_x(2).scale(c(0.5, 0.0)))),
        ("sphere imaginary", (sphere_x(2).scale(I) + (sphere_x(0) * sphere_x(1)).scale(c(0.0, 0.3)))),
        ("sphere mixed", (sphere_x(1) + sphere_x(0).scale(c(0.0, 0.5)) + (sphere_x(2) * sphere_x(2)).scale(c(0.0, 0.3)))),
    ]
}

fn corpus_seeds(rng: &mut ChaCha8Rng, model: Model) -> Vec<KahlerPoint> {
    (0..10)
        .map(|_| match model {
            Model::Flat { n } => random_flat_point(rng, n, 0.6),
            Model::Sphere => random_sphere_point(rng),
        })
        .collect()
}

const CORPUS_TIMES: [f64; 4] = [0.0, 0.1, 0.2, 0.3];

#[test]
fn criterion_3_generator_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut tally = Tally::new(&[("generator", 1e-5), ("generator via leaf projection", 1e-5)]);
    for (_, h) in corpus() {
        let s = LeafSolver::new(&h).with_integrator(tight());
        for x in corpus_seeds(&mut rng, h.model) {
            for t in CORPUS_TIMES {
                tally.add("generator", verify::generator_residual(&s, &x, t));
                tally.add("generator via leaf projection", verify::leaf_projection_residual(&s, &x, t));
            }
        }
    }
    tally.finish(3, "generator of phi_t is Xi_Re h + J_t Xi_Im h");
}

#[test]
fn criterion_4_holomorphy() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut tally = Tally::new(&[("holomorphy", 1e-5), ("J_t^2 + 1", 1e-8)]);
    for (_, h) in corpus() {
        let s = LeafSolver::new(&h).with_integrator(tight());
        for x in corpus_seeds(&mut rng, h.model) {
            for t in CORPUS_TIMES {
                tally.add("holomorphy", verify::holomorphy_residual(&s, &x, t));
                tally.add("J_t^2 + 1", verify::j_squared_residual(&s, &x, t));
            }
        }
    }
    tally.finish(4, "phi_t is (J, J_t)-holomorphic and J_t is a complex structure");
}

#[test]
fn criterion_5_group_action_case() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut tally = Tally::new(&[("J_t - J", 1e-6), ("Mobius agreement", 1e-6), ("group defect", 1e-6)]);
    let steps = [0.1, 0.2, 0.3];
    for _ in 0..5 {
        let a = [0; 3].map(|_| rng.gen_range(-1.0..1.0));
        let b = [0; 3].map(|_| rng.gen_range(-1.0..1.0));
        let gen = Sl2Generator::from_axes(a, b);
        let h = gen.hamiltonian();
        let s = LeafSolver::new(&h).with_integrator(tight());
        for _ in 0..4 {
            let x = random_sphere_point(&mut rng);
            for t in steps {
                tally.add("J_t - J", verify::j_drift(&s, &x, t));
                let m = s
                    .phi(&x, t)
                    .and_then(|sol| oracle_mobius(&gen, &x, t).and_then(|y| chart_distance(Model::Sphere, &sol.y, &y)));
                tally.add("Mobius agreement", m);
                for s2 in steps {
                    tally.add("group defect", verify::group_defect(&s, &x, t, s2));
                }
            }
        }
    }
    tally.finish(5, "moment-map hamiltonians: J_t = J and phi_t is the Mobius group");
}

#[test]
fn criterion_6_corollary() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut tally = Tally::new(&[("corollary", 1e-5), ("inverse relation", 1e-6), ("pullback", 1e-8)]);
    for (_, h) in corpus() {
        let s = LeafSolver::new(&h).with_integrator(tight());
        for x in corpus_seeds(&mut rng, h.model) {
            for t in CORPUS_TIMES {
                tally.add("corollary", verify::corollary_residual(&s, &x, t));
                tally.add("inverse relation", verify::inverse_residual(&s, &x, t));
                tally.add("pullback", verify::pullback_residual(&s, &x, t));
            }
        }
    }
    tally.finish(6, "f_t generator, f_t = phi_-t^-1 and omega = f_t^* omega_t");
}

#[test]
fn criterion_7_structural_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let cfg = IntegratorConfig::default();
    let tol = cfg.nominal_tolerance();
    let mut tally = Tally::new(&[
        ("symplecticity", 10.0 * tol),
        ("flow holomorphy", 10.0 * tol),
        ("fiber isotropy", 0.0),
        ("transported leaf isotropy", 10.0 * tol),
        ("involution", 1e-12),
        ("Omega(xi - iI xi) = 2dH", 1e-12),
        ("Hamilton equations", 1e-10),
    ]);
    let hs: Vec<_> = corpus().into_iter().map(|(_, h)| h.extend()).collect();
    for k in 0..100 {
        let h = &hs[k % hs.len()];
        let n = h.dim();
        let x = match h.model {
            Model::Flat { n } => random_flat_point(&mut rng, n, 0.6),
            Model::Sphere => Model::Sphere.normalize(KahlerPoint::sphere(0, rc(&mut rng, 0.9))),
        };
        let u: Vec<C64> = x.z.iter().map(|z| z.conj() + rc(&mut rng, 0.1)).collect();
        let p = AmbientPoint::new(x.chart, x.z.clone(), u);
        let t = rng.gen_range(0.05..0.3);
        tally.add("symplecticity", verify::symplecticity_residual(h, &p, t, &cfg));
        tally.add("flow holomorphy", verify::flow_holomorphy_residual(h, &p, t, &cfg));
        tally.add("fiber isotropy", verify::leaf_isotropy_residual(h, &p, 0.0, &cfg));
        tally.add("transported leaf isotropy", verify::leaf_isotropy_residual(h, &p, t, &cfg));
        tally.add("involution", verify::involution_residual(h.model, &p));
        tally.add("Omega(xi - iI xi) = 2dH", verify::holomorphic_field_residual(h, &p));
        tally.add("Hamilton equations", verify::hamilton_equations_residual(h, &p));
        let _ = n;
    }
    tally.finish(7, "structural invariants of the complexified flow");
}

fn write_config(dir: &std::path::Path, name: &str, terms: &str, seeds: &str, t_max: f64, steps: usize) -> std::path::PathBuf {
    let path = dir.join(format!("{name}.cfg"));
    let text = format!(
        r#"{{
  "model": {{"kind": "flat", "n": 1}},
  "hamiltonian": {terms},
  "seeds": {seeds},
  "times": {{"t_max": {t_max}, "steps": {steps}}},
  "output": "{}"
}}"#,
        dir.join(name).display()
    );
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn criterion_8_degeneracy_handling() {
    let dir = std::env::temp_dir().join(format!("hamflow-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bin = env!("CARGO_BIN_EXE_hamflow");
    let mut problems: Vec<String> = Vec::new();

    // h = i q³ with q = (z + z̄)/2; for a seed with q = q₀, the transported
    // leaf meets M only while 12 t q₀ ≤ 1.
    let q0 = 10.0;
    let p0 = 0.5;
    let cubic = r#"[
      {"re": 0.0, "im": 0.125, "alpha": [3], "beta": [0]},
      {"re": 0.0, "im": 0.375, "alpha": [2], "beta": [1]},
      {"re": 0.0, "im": 0.375, "alpha": [1], "beta": [2]},
      {"re": 0.0, "im": 0.125, "alpha": [0], "beta": [3]}
    ]"#;
    let cfg = write_config(&dir, "stiff", cubic, &format!("[[[{q0}, {p0}]]]"), 0.05, 50);
    let out = Command::new(bin).args(["flow", "--config"]).arg(&cfg).output().unwrap();
    let code = out.status.code();
    if code != Some(2) {
        problems.push(format!("stiff case exited with {code:?}, expected 2"));
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("stiff.report.json")).unwrap()).unwrap();
    let seed = &report["seeds"][0];
    let last_good = seed["last_good_time"].as_f64();
    let blowup = 1.0 / (12.0 * q0);
    match last_good {
        Some(t) if t.is_finite() && t > 0.0 && t <= blowup => {}
        other => problems.push(format!("last_good_time {other:?} not in (0, {blowup}]")),
    }
    if seed["status"] != "degenerate" {
        problems.push(format!("seed status {}", seed["status"]));
    }
    // Every point reported as converged matches the closed form.
    let mut worst: f64 = 0.0;
    for p in report["points"].as_array().unwrap() {
        if p["status"] != "ok" {
            continue;
        }
        let t = p["t"].as_f64().unwrap();
        let re = p["y"][0][0].as_f64().unwrap();
        let im = p["y"][0][1].as_f64().unwrap();
        let expect = if t == 0.0 { q0 } else { (1.0 - (1.0 - 12.0 * t * q0).sqrt()) / (6.0 * t) };
        worst = worst.max((re - expect).abs()).max((im - p0).abs());
    }
    if !(worst <= 1e-6) {
        problems.push(format!("converged points deviate from the closed form by {worst:e}"));
    }
    let csv = std::fs::read_to_string(dir.join("stiff.trajectories.csv")).unwrap();
    if !csv.lines().last().unwrap_or("").ends_with(",degenerate") {
        problems.push("trajectory CSV does not end with a degenerate row".into());
    }

    // The literal h = i z³ has a holomorphic field tangent to the leaves, so
    // φ_t is the identity and nothing degenerates.
    let literal = r#"[{"re": 0.0, "im": 1.0, "alpha": [3], "beta": [0]}]"#;
    let cfg = write_config(&dir, "literal", literal, &format!("[[[{q0}, {p0}]]]"), 0.05, 5);
    let out = Command::new(bin).args(["flow", "--config"]).arg(&cfg).output().unwrap();
    if out.status.code() != Some(0) {
        problems.push(format!("h = i z^3 exited with {:?}", out.status.code()));
    } else {
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("literal.report.json")).unwrap()).unwrap();
        for p in report["points"].as_array().unwrap() {
            let d = (p["y"][0][0].as_f64().unwrap() - q0).abs() + (p["y"][0][1].as_f64().unwrap() - p0).abs();
            if d > 1e-9 {
                problems.push(format!("h = i z^3 moved the seed by {d:e}"));
            }
        }
    }

    let passed = problems.is_empty();
    let detail = if passed {
        format!("exit 2, last good t = {:.4} ≤ {blowup:.4}, converged points within {worst:.1e}", last_good.unwrap())
    } else {
        problems.join("; ")
    };
    line(8, "stiff case reports leaving E", passed, &detail);
    let _ = std::fs::remove_dir_all(&dir);
    assert!(passed, "{detail}");
}
