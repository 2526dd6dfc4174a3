use std::path::Path;

use hamflow::flow::IntegratorConfig;
use hamflow::geometry::{KahlerPoint, Model};
use hamflow::hamiltonian::{PolynomialHamiltonian, Term};
use hamflow::leaf::NewtonConfig;
use hamflow::linalg::C64;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Job {
    Flow,
    Verify,
    OracleCompare,
    Sweep,
}

impl Job {
    pub fn name(self) -> &'static str {
        match self {
            Job::Flow => "flow",
            Job::Verify => "verify",
            Job::OracleCompare => "oracle-compare",
            Job::Sweep => "sweep",
        }
    }
}

/// Evenly spread seeds in a ball: `count` points on a sunflower spiral of
/// the given radius around `center`, one copy per coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub center: Vec<[f64; 2]>,
    pub radius: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<Vec<[f64; 2]>>),
    Grid(Grid),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Times {
    pub t_max: f64,
    pub steps: usize,
}

impl Times {
    pub fn grid(&self) -> Vec<f64> {
        (0..=self.steps)
            .map(|k| self.t_max * k as f64 / self.steps as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Model,
    /// Chart in which the hamiltonian terms and seeds are written.
    #[serde(default)]
    pub chart: usize,
    pub hamiltonian: Vec<Term>,
    pub seeds: Seeds,
    pub times: Times,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub job: Option<Job>,
    pub output: String,
}

fn golden_angle() -> f64 {
    std::f64::consts::PI * (3.0 - 5f64.sqrt())
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        match &self.seeds {
            Seeds::List(l) if l.is_empty() => return bad("seeds: at least one required".into()),
            Seeds::Grid(g) if g.count == 0 => return bad("seeds: at least one required".into()),
            Seeds::Grid(g) if !(g.radius >= 0.0) => return bad("seeds: grid radius must be non-negative".into()),
            _ => {}
        }
        if self.times.steps == 0 {
            return bad("times: steps must be at least 1".into());
        }
        if !(self.times.t_max.abs() <= self.integrator.horizon) {
            return bad(format!(
                "times: |t_max| = {} exceeds the integrator horizon {}",
                self.times.t_max.abs(),
                self.integrator.horizon
            ));
        }
        if self.chart >= self.model.chart_count() {
            return bad(format!("chart: {} is not a chart of this model", self.chart));
        }
        if self.output.is_empty() {
            return bad("output: prefix required".into());
        }
        self.integrator.validate().map_err(|e| CliError::Config(format!("integrator: {e}")))?;
        self.newton.validate().map_err(|e| CliError::Config(format!("newton: {e}")))?;
        self.hamiltonian_polynomial()?;
        for (k, s) in self.seed_points().iter().enumerate() {
            self.model
                .validate_point(s)
                .map_err(|e| CliError::Config(format!("seeds[{k}]: {e}")))?;
        }
        Ok(())
    }

    pub fn hamiltonian_polynomial(&self) -> Result<PolynomialHamiltonian, CliError> {
        PolynomialHamiltonian::new(self.model, self.chart, self.hamiltonian.clone())
            .map_err(|e| CliError::Config(format!("hamiltonian: {e}")))
    }

    pub fn seed_points(&self) -> Vec<KahlerPoint> {
        let n = self.model.dim();
        let point = |coords: Vec<C64>| KahlerPoint::new(self.chart, coords);
        match &self.seeds {
            Seeds::List(l) => l
                .iter()
                .map(|s| point(s.iter().map(|[re, im]| C64::new(*re, *im)).collect()))
                .collect(),
            Seeds::Grid(g) => (0..g.count)
                .map(|k| {
                    let r = g.radius * ((k as f64 + 0.5) / g.count as f64).sqrt();
                    point(
                        (0..n)
                            .map(|j| {
                                let c = g.center.get(j).copied().unwrap_or([0.0, 0.0]);
                                let angle = golden_angle() * k as f64 + j as f64;
                                C64::new(c[0], c[1]) + C64::from_polar(r, angle)
                            })
                            .collect(),
                    )
                })
                .collect(),
        }
    }
}
