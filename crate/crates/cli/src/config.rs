//! Experiment configuration: TOML schema, command-line overrides and hashing.

use std::path::{Path, PathBuf};

use kyleback_core::grid::{DEFAULT_EPSILON, DEFAULT_STEPS};
use kyleback_core::model::Clock;
use kyleback_core::signals::GaussianOracle;
use kyleback_core::{
    build_deterministic, build_quadratic, build_static, grid_with_steps, BatteryConfig,
    DensityGrid, DeterministicVolSpec, PricingRule, QuadraticVolSpec, Refinement, Scheme,
    SignalModel, StaticSpec, Surface, TestName, Thresholds, TimeGrid,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub sim: SimBlock,
    #[serde(default)]
    pub verify: VerifyBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    #[default]
    Deterministic,
    Quadratic,
    Static,
}

/// Parameters of one signal family; fields that do not belong to `kind`
/// are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    #[serde(default)]
    pub kind: FamilyName,
    #[serde(default = "one")]
    pub gamma: f64,
    /// Deterministic: variance of `Z_0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma1: Option<f64>,
    /// Quadratic family.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    /// Static: base volatility `1/(gamma t + offset)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    /// Static: linear time change replacing `V = 1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clock: Option<ClockSpec>,
    /// Replaces the equilibrium weighting function by a constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_w: Option<f64>,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            kind: FamilyName::Deterministic,
            gamma: 1.0,
            q: None,
            sigma0: None,
            sigma1: None,
            delta: None,
            b: None,
            d: None,
            offset: None,
            clock: None,
            constant_w: None,
        }
    }
}

/// `V(t) = v0 + slope t`; `v0 = 1, slope = 0` is the static clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClockSpec {
    pub v0: f64,
    pub slope: f64,
}

impl ClockSpec {
    pub fn to_clock(self) -> Clock {
        if self.v0 == 1.0 && self.slope == 0.0 {
            Clock::Static
        } else {
            Clock::Linear {
                v0: self.v0,
                slope: self.slope,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimBlock {
    pub n_paths: usize,
    /// Number of intervals of the time grid.
    pub n_steps: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub scheme: Scheme,
    pub refinement: Refinement,
}

impl Default for SimBlock {
    fn default() -> Self {
        Self {
            n_paths: 10_000,
            n_steps: DEFAULT_STEPS,
            epsilon: DEFAULT_EPSILON,
            seed: 1,
            scheme: Scheme::Transformed,
            refinement: Refinement::Geometric,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyBlock {
    /// Paths for the shared battery run; kept apart from `sim.n_paths`
    /// because the statistical tests need far more than a quick simulation.
    pub n_paths: usize,
    /// Intervals of the battery time grid.
    pub n_steps: usize,
    /// Empty runs every test that applies to the model.
    pub tests: Vec<TestName>,
    pub thresholds: Thresholds,
    pub bins: usize,
    pub windows: usize,
    pub pricing_times: Vec<f64>,
    pub bridge_paths: usize,
    pub bridge_steps: usize,
    pub bridge_epsilons: Vec<f64>,
    pub density_grid: DensityGrid,
    pub static_clocks: Vec<ClockSpec>,
    pub allow_small_samples: bool,
}

impl Default for VerifyBlock {
    fn default() -> Self {
        let grid = grid_with_steps(DEFAULT_EPSILON, 1, Refinement::Uniform).expect("valid grid");
        let base = BatteryConfig::new(1, grid, 0);
        Self {
            n_paths: 100_000,
            n_steps: 1 << 13,
            tests: Vec::new(),
            thresholds: base.thresholds,
            bins: base.bins,
            windows: base.windows,
            pricing_times: base.pricing_times,
            bridge_paths: base.bridge_paths,
            bridge_steps: base.bridge_steps,
            bridge_epsilons: base.bridge_epsilons,
            density_grid: base.density_grid,
            static_clocks: vec![
                ClockSpec { v0: 1.0, slope: 0.0 },
                ClockSpec { v0: 0.5, slope: 0.5 },
            ],
            allow_small_samples: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    #[serde(default = "gamma_name")]
    pub parameter: String,
    pub values: Vec<f64>,
    /// Paths per value; defaults to `verify.n_paths`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![Format::Json, Format::Table],
        }
    }
}

fn one() -> f64 {
    1.0
}

fn gamma_name() -> String {
    "gamma".into()
}

/// Values given on the command line; `None` keeps the config value.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub paths: Option<usize>,
    pub steps: Option<usize>,
    pub epsilon: Option<f64>,
    pub only: Vec<TestName>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config {}: {e}", p.display()))
                })?;
                Self::parse(&text)
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.sim.seed = s;
        }
        if let Some(d) = &o.out {
            self.output.dir = d.clone();
        }
        if let Some(n) = o.paths {
            self.sim.n_paths = n;
            self.verify.n_paths = n;
        }
        if let Some(n) = o.steps {
            self.sim.n_steps = n;
            self.verify.n_steps = n;
        }
        if let Some(e) = o.epsilon {
            self.sim.epsilon = e;
        }
        if !o.only.is_empty() {
            self.verify.tests = o.only.clone();
        }
    }

    /// SHA-256 of the effective experiment in canonical JSON form; where the
    /// results are written does not enter.
    pub fn hash(&self) -> String {
        let experiment = (&self.model, &self.sim, &self.verify, &self.sweep);
        let bytes = serde_json::to_vec(&experiment).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Checks that only the fields of the selected family are present.
    pub fn check(&self) -> Result<(), CliError> {
        let m = &self.model;
        let stray: Vec<&str> = [
            ("q", m.q.is_some(), FamilyName::Deterministic),
            ("sigma0", m.sigma0.is_some(), FamilyName::Deterministic),
            ("sigma1", m.sigma1.is_some(), FamilyName::Deterministic),
            ("delta", m.delta.is_some(), FamilyName::Quadratic),
            ("b", m.b.is_some(), FamilyName::Quadratic),
            ("d", m.d.is_some(), FamilyName::Quadratic),
            ("offset", m.offset.is_some(), FamilyName::Static),
            ("clock", m.clock.is_some(), FamilyName::Static),
        ]
        .into_iter()
        .filter(|&(_, set, family)| set && family != m.kind)
        .map(|(name, _, _)| name)
        .collect();
        if !stray.is_empty() {
            return Err(CliError::Usage(format!(
                "model.{} not used by the {:?} family",
                stray.join(", model."),
                m.kind
            )));
        }
        if self.sim.n_paths == 0 {
            return Err(CliError::Usage("sim.n_paths must be positive".into()));
        }
        if self.sim.n_steps == 0 {
            return Err(CliError::Usage("sim.n_steps must be positive".into()));
        }
        if self.verify.n_paths == 0 || self.verify.n_steps == 0 {
            return Err(CliError::Usage(
                "verify.n_paths and verify.n_steps must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid, CliError> {
        grid_with_steps(self.sim.epsilon, self.sim.n_steps, self.sim.refinement)
            .map_err(|e| CliError::Usage(format!("invalid grid: {e}")))
    }

    pub fn battery(&self, n_paths: usize) -> Result<BatteryConfig, CliError> {
        let v = &self.verify;
        let grid = grid_with_steps(self.sim.epsilon, v.n_steps, self.sim.refinement)
            .map_err(|e| CliError::Usage(format!("invalid battery grid: {e}")))?;
        let mut cfg = BatteryConfig::new(n_paths, grid, self.sim.seed);
        cfg.scheme = self.sim.scheme;
        cfg.bins = v.bins;
        cfg.windows = v.windows;
        cfg.pricing_times = v.pricing_times.clone();
        cfg.bridge_paths = v.bridge_paths;
        cfg.bridge_steps = v.bridge_steps;
        cfg.bridge_epsilons = v.bridge_epsilons.clone();
        cfg.density_grid = v.density_grid;
        cfg.static_clocks = v.static_clocks.iter().map(|c| c.to_clock()).collect();
        cfg.thresholds = v.thresholds;
        cfg.allow_small_samples = v.allow_small_samples;
        cfg.only = v.tests.clone();
        cfg.config_hash = Some(self.hash());
        Ok(cfg)
    }
}

/// A constructed model with its pricing rule and, for the Gaussian family,
/// the closed-form oracle.
pub struct Built {
    pub model: SignalModel,
    pub rule: PricingRule,
    pub oracle: Option<GaussianOracle>,
}

/// Builds the configured family with `gamma` in place of `model.gamma`.
/// Constructor rejections are assumption failures, not usage errors.
pub fn build_with_gamma(m: &ModelBlock, gamma: f64) -> kyleback_core::Result<Built> {
    let (model, mut rule, oracle) = match m.kind {
        FamilyName::Deterministic => {
            let base = DeterministicVolSpec::default();
            let spec = DeterministicVolSpec {
                gamma,
                q: m.q.unwrap_or(base.q),
                sigma0: m.sigma0.unwrap_or(base.sigma0),
                sigma1: m.sigma1.unwrap_or(base.sigma1),
            };
            let (model, rule, oracle) = build_deterministic(&spec)?;
            (model, rule, Some(oracle))
        }
        FamilyName::Quadratic => {
            let base = QuadraticVolSpec::default();
            let spec = QuadraticVolSpec {
                gamma,
                delta: m.delta.unwrap_or(base.delta),
                b: m.b.unwrap_or(base.b),
                d: m.d.unwrap_or(base.d),
            };
            let (model, rule) = build_quadratic(&spec)?;
            (model, rule, None)
        }
        FamilyName::Static => {
            let spec = StaticSpec::inverse_linear(gamma, m.offset.unwrap_or(1.0));
            let (model, rule) = build_static(&spec, m.clock.map(ClockSpec::to_clock))?;
            (model, rule, None)
        }
    };
    if let Some(w) = m.constant_w {
        rule.surface = Surface::Constant(w);
    }
    Ok(Built {
        model,
        rule,
        oracle,
    })
}

pub fn build(m: &ModelBlock) -> kyleback_core::Result<Built> {
    build_with_gamma(m, m.gamma)
}
