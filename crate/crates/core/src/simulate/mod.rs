//! Joint simulation of signal, order flow and price under a pricing rule,
//! for the equilibrium strategy and deviations from it.

mod bundle;
mod engine;
mod strategy;

pub use bundle::{wealth, JumpRecord, PathBundle, PathRecord, WealthPair};
pub use engine::{
    default_checkpoints, run_monte_carlo, MonteCarloRun, NodeState, PathError, PathErrorKind,
    PathSummary, Scheme, SimConfig, StrategyOutcome, WORKERS_ENV,
};
pub use strategy::{Drift, DriftFn, ScheduledJump, Strategy};

use crate::error::Result;
use crate::model::{PricingRule, SignalModel};

/// Signal paths `Z` on the grid plus the terminal value `Z_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPaths {
    pub z: Vec<Vec<f64>>,
    pub z_one: Vec<f64>,
    pub errors: Vec<PathError>,
}

/// Simulates the signal alone.
pub fn simulate_signal(model: &SignalModel, cfg: &SimConfig) -> Result<SignalPaths> {
    let rule = model.equilibrium_rule();
    let cfg = SimConfig {
        record_paths: true,
        ..cfg.clone()
    };
    let run = run_monte_carlo(model, &rule, &[Strategy::zero()], &cfg)?;
    let bundle = run
        .bundles
        .and_then(|mut b| b.pop())
        .expect("recording was requested");
    Ok(SignalPaths {
        z: bundle.paths.iter().map(|p| p.z.clone()).collect(),
        z_one: bundle.paths.iter().map(|p| p.z_one).collect(),
        errors: bundle.errors,
    })
}

/// Full trajectories of one strategy against a pricing rule.
pub fn simulate_equilibrium(
    model: &SignalModel,
    rule: &PricingRule,
    strategy: &Strategy,
    cfg: &SimConfig,
) -> Result<PathBundle> {
    let cfg = SimConfig {
        record_paths: true,
        ..cfg.clone()
    };
    let run = run_monte_carlo(model, rule, std::slice::from_ref(strategy), &cfg)?;
    Ok(run
        .bundles
        .and_then(|mut b| b.pop())
        .expect("recording was requested"))
}
