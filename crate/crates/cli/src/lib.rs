//! Runner behind the `hamflow` binary: reads a [`RunConfig`], evaluates the
//! requested job over every seed and time, and writes the trajectory CSV,
//! residual CSV and JSON report.

pub mod config;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use hamflow::error::Error;
use hamflow::geometry::{KahlerPoint, Model};
use hamflow::hamiltonian::PolynomialHamiltonian;
use hamflow::leaf::{chart_distance, LeafSolution, LeafSolver};
use hamflow::linalg::{op_norm, C64};
use hamflow::oracles::{oracle_mobius, oracle_quadratic, real_reference, QuadraticSpec, Sl2Generator};
use hamflow::verify::{self, ResidualPoint, ResidualReport};
use rayon::prelude::*;
use serde::Serialize;

pub use config::{Grid, Job, RunConfig, Seeds, Times};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_DEGENERACY: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Io(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        EXIT_CONFIG
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the job named in the config.
    pub job: Option<Job>,
    pub threads: Option<usize>,
    pub seed_id: Option<usize>,
    /// Overrides the config's output prefix.
    pub output: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointRecord {
    pub seed_id: usize,
    pub t: f64,
    pub chart: usize,
    pub y: Vec<C64>,
    pub newton_iters: usize,
    pub residual: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedRecord {
    pub seed_id: usize,
    pub x: KahlerPoint,
    pub status: String,
    pub last_good_time: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub name: String,
    pub seed_id: usize,
    pub t: f64,
    pub value: f64,
    /// Set when the value is outside its expected range; never fails a run.
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub hamflow: &'static str,
    pub hamflow_cli: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub job: &'static str,
    pub exit_code: i32,
    pub versions: Versions,
    pub config: RunConfig,
    pub reports: Vec<ResidualReport>,
    pub diagnostics: Vec<Diagnostic>,
    pub seeds: Vec<SeedRecord>,
    pub points: Vec<PointRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub report: RunReport,
    pub trajectories: PathBuf,
    pub report_path: PathBuf,
    pub residuals: PathBuf,
}

/// Residual identities with their pass/fail tolerances.
const TOLERANCES: &[(&str, f64)] = &[
    ("generator", 1e-5),
    ("leaf_projection", 1e-5),
    ("holomorphy", 1e-5),
    ("j_squared", 1e-8),
    ("corollary", 1e-5),
    ("inverse", 1e-6),
    ("pullback", 1e-8),
    ("oracle_phi", 1e-6),
    ("oracle_jt", 1e-6),
    ("real_reference", 1e-6),
];

fn tolerance(name: &str) -> f64 {
    TOLERANCES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .expect("every residual has a tolerance")
}

enum Oracle {
    Quadratic(QuadraticSpec),
    Mobius(Sl2Generator),
    RealOnly,
}

struct Context {
    job: Job,
    solver: LeafSolver,
    h: PolynomialHamiltonian,
    oracle: Option<Oracle>,
    times: Vec<f64>,
}

#[derive(Default)]
struct SeedOutcome {
    points: Vec<PointRecord>,
    residuals: Vec<(&'static str, ResidualPoint, f64)>,
    diagnostics: Vec<Diagnostic>,
    record: Option<SeedRecord>,
}

fn choose_oracle(h: &PolynomialHamiltonian) -> Result<Oracle, CliError> {
    let specific = match h.model {
        Model::Flat { .. } => QuadraticSpec::from_hamiltonian(h).ok().map(Oracle::Quadratic),
        Model::Sphere => Sl2Generator::from_hamiltonian(h).ok().map(Oracle::Mobius),
    };
    match specific {
        Some(o) => Ok(o),
        None if h.is_real() => Ok(Oracle::RealOnly),
        None => Err(CliError::Config(
            "oracle-compare: no oracle covers this hamiltonian (need a flat quadratic, a sphere moment-map combination, or a real h)".into(),
        )),
    }
}

impl Context {
    fn point_checks(&self, x: &KahlerPoint, sol: &LeafSolution, out: &mut SeedOutcome, seed_id: usize) -> hamflow::error::Result<()> {
        let s = &self.solver;
        let t = sol.t;
        let at = ResidualPoint::real(x, t);
        let mut push = |name: &'static str, r: f64| out.residuals.push((name, at.clone(), r));
        match self.job {
            Job::Flow => {}
            Job::Verify => {
                push("generator", verify::generator_residual(s, x, t)?);
                push("leaf_projection", verify::leaf_projection_residual(s, x, t)?);
                push("holomorphy", verify::holomorphy_residual(s, x, t)?);
                push("j_squared", verify::j_squared_residual(s, x, t)?);
                push("corollary", verify::corollary_residual(s, x, t)?);
                push("inverse", verify::inverse_residual(s, x, t)?);
                push("pullback", verify::pullback_residual(s, x, t)?);
                let c = verify::compatibility_diagnostic(s, x, t)?;
                out.diagnostics.push(Diagnostic {
                    name: "compatibility_min_eigenvalue".into(),
                    seed_id,
                    t,
                    value: c,
                    flagged: !(c > 0.0),
                });
            }
            Job::OracleCompare => {
                let jt = s.j_t(x, t)?;
                match self.oracle.as_ref().expect("oracle chosen for oracle-compare") {
                    Oracle::Quadratic(spec) => {
                        let (y, j_oracle) = oracle_quadratic(spec, x, t)?;
                        push("oracle_phi", chart_distance(s.model(), &sol.y, &y)?);
                        push("oracle_jt", op_norm(&(jt - j_oracle)));
                    }
                    Oracle::Mobius(g) => {
                        let y = oracle_mobius(g, x, t)?;
                        push("oracle_phi", chart_distance(s.model(), &sol.y, &y)?);
                        push("oracle_jt", op_norm(&(jt - s.model().j0())));
                    }
                    Oracle::RealOnly => {}
                }
                if self.h.is_real() {
                    let y = real_reference(&self.h, x, t)?;
                    push("real_reference", chart_distance(s.model(), &sol.y, &y)?);
                }
            }
            Job::Sweep => {
                let mut diag = |name: &str, value: f64, flagged: bool| {
                    out.diagnostics.push(Diagnostic {
                        name: name.into(),
                        seed_id,
                        t,
                        value,
                        flagged,
                    })
                };
                diag("newton_iters", sol.newton_iters as f64, sol.newton_iters > 10);
                diag("j_drift", verify::j_drift(s, x, t)?, false);
                let c = verify::compatibility_diagnostic(s, x, t)?;
                diag("compatibility_min_eigenvalue", c, !(c > 0.0));
                diag("group_defect", verify::group_defect(s, x, t / 2.0, t / 2.0)?, false);
            }
        }
        Ok(())
    }

    fn run_seed(&self, seed_id: usize, x: &KahlerPoint) -> SeedOutcome {
        let mut out = SeedOutcome::default();
        let mut guess: Vec<C64> = x.z.iter().map(|c| c.conj()).collect();
        let mut last_good = 0.0;
        let mut failure: Option<(f64, Error)> = None;
        for &t in &self.times {
            let step = self
                .solver
                .phi_from(x, t, &guess)
                .and_then(|sol| self.point_checks(x, &sol, &mut out, seed_id).map(|_| sol));
            match step {
                Ok(sol) => {
                    guess = sol.u_star.clone();
                    last_good = t;
                    out.points.push(PointRecord {
                        seed_id,
                        t,
                        chart: sol.y.chart,
                        y: sol.y.z.clone(),
                        newton_iters: sol.newton_iters,
                        residual: sol.residual,
                        status: "ok".into(),
                    });
                }
                Err(e) => {
                    // Drop residuals already recorded for the failed time.
                    out.residuals.retain(|(_, p, _)| p.t != t);
                    out.diagnostics.retain(|d| d.t != t);
                    failure = Some((t, e));
                    break;
                }
            }
        }
        let (status, error) = match &failure {
            None => ("ok".to_string(), None),
            Some((t, e)) => {
                out.points.push(PointRecord {
                    seed_id,
                    t: *t,
                    chart: x.chart,
                    y: vec![C64::new(f64::NAN, f64::NAN); x.dim()],
                    newton_iters: 0,
                    residual: f64::NAN,
                    status: "degenerate".into(),
                });
                ("degenerate".to_string(), Some(e.to_string()))
            }
        };
        out.record = Some(SeedRecord {
            seed_id,
            x: x.clone(),
            status,
            last_good_time: last_good,
            error,
        });
        out
    }
}

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn timestamp_line(job: Job) -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("# hamflow {} {} generated at unix time {secs}", job.name(), hamflow::VERSION)
}

/// Trajectory CSV body (without the timestamp line).
pub fn trajectory_csv(points: &[PointRecord], n: usize) -> String {
    let mut s = String::from("seed_id,t,chart");
    for j in 0..n {
        s.push_str(&format!(",re_y{j},im_y{j}"));
    }
    s.push_str(",newton_iters,residual,status\n");
    for p in points {
        s.push_str(&format!("{},{},{}", p.seed_id, fmt_f(p.t), p.chart));
        for c in &p.y {
            s.push_str(&format!(",{},{}", fmt_f(c.re), fmt_f(c.im)));
        }
        s.push_str(&format!(",{},{},{}\n", p.newton_iters, fmt_f(p.residual), p.status));
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Runs one job and writes `<prefix>.trajectories.csv`,
/// `<prefix>.residuals.csv` and `<prefix>.report.json`.
pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let job = opts
        .job
        .or(cfg.job)
        .ok_or_else(|| CliError::Config("job: none given on the command line or in the config".into()))?;
    let h = cfg.hamiltonian_polynomial()?;
    let oracle = match job {
        Job::OracleCompare => Some(choose_oracle(&h)?),
        _ => None,
    };
    let solver = LeafSolver::new(&h)
        .with_integrator(cfg.integrator)
        .with_newton(cfg.newton);
    let ctx = Context {
        job,
        solver,
        h,
        oracle,
        times: cfg.times.grid(),
    };
    let seeds = cfg.seed_points();
    let selected: Vec<(usize, KahlerPoint)> = match opts.seed_id {
        Some(k) if k >= seeds.len() => {
            return Err(CliError::Config(format!("--seed-id {k}: only {} seeds configured", seeds.len())))
        }
        Some(k) => vec![(k, seeds[k].clone())],
        None => seeds.into_iter().enumerate().collect(),
    };

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = opts.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    let outcomes: Vec<SeedOutcome> = pool.install(|| selected.par_iter().map(|(k, x)| ctx.run_seed(*k, x)).collect());

    let mut reports: Vec<ResidualReport> = Vec::new();
    let mut points = Vec::new();
    let mut diagnostics = Vec::new();
    let mut seed_records = Vec::new();
    for o in outcomes {
        for (name, p, r) in o.residuals {
            match reports.iter_mut().find(|rep| rep.name == name) {
                Some(rep) => rep.push(p, r),
                None => {
                    let mut rep = ResidualReport::new(name, tolerance(name));
                    rep.push(p, r);
                    reports.push(rep);
                }
            }
        }
        points.extend(o.points);
        diagnostics.extend(o.diagnostics);
        seed_records.extend(o.record);
    }
    reports.sort_by(|a, b| a.name.cmp(&b.name));

    let degenerate = seed_records.iter().any(|s| s.status != "ok");
    let failed = reports.iter().any(|r| !r.passed);
    let exit_code = if degenerate {
        EXIT_DEGENERACY
    } else if failed {
        EXIT_FAILED
    } else {
        EXIT_OK
    };

    let prefix = opts.output.clone().unwrap_or_else(|| cfg.output.clone());
    let trajectories = PathBuf::from(format!("{prefix}.trajectories.csv"));
    let residuals = PathBuf::from(format!("{prefix}.residuals.csv"));
    let report_path = PathBuf::from(format!("{prefix}.report.json"));

    let n = cfg.model.dim();
    write_file(
        &trajectories,
        &format!("{}\n{}", timestamp_line(job), trajectory_csv(&points, n)),
    )?;
    let mut res_csv = String::from("name,chart,coords...,t,residual\n");
    for r in &reports {
        for row in r.csv_rows() {
            res_csv.push_str(&row);
            res_csv.push('\n');
        }
    }
    write_file(&residuals, &res_csv)?;

    let report = RunReport {
        job: job.name(),
        exit_code,
        versions: Versions {
            hamflow: hamflow::VERSION,
            hamflow_cli: env!("CARGO_PKG_VERSION"),
        },
        config: cfg.clone(),
        reports,
        diagnostics,
        seeds: seed_records,
        points,
    };
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&report_path, &json)?;

    Ok(RunOutcome {
        exit_code,
        report,
        trajectories,
        report_path,
        residuals,
    })
}
