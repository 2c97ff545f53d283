//! Simulation and verification of the Kyle–Back insider-trading equilibrium
//! with an exponential-utility insider and a dynamic private signal.

pub mod error;
pub mod grid;
pub mod model;
pub mod numeric;
pub mod report;
pub mod rng;
pub mod signals;
pub mod simulate;
pub mod stats;
pub mod transforms;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{grid_with_steps, make_grid, Refinement, TimeGrid};
pub use model::{
    Clock, CustomSurface, ModelKind, PricingRule, SignalModel, StateInterval, Surface,
};
pub use report::{Check, CheckRole, Provenance, ReportEntry, VerificationReport};
pub use rng::{Channel, RngContract};
pub use signals::{
    build_deterministic, build_quadratic, build_static, validate_assumptions, AssumptionOptions,
    DeterministicVolSpec, GaussianOracle, QuadraticVolSpec, StaticSpec,
};
pub use transforms::{BridgeKernel, DensityKind, DensityTable, EvalMode};
pub use simulate::{
    run_monte_carlo, simulate_equilibrium, simulate_signal, MonteCarloRun, PathBundle, Scheme,
    SimConfig, Strategy,
};
pub use verify::{run_battery, BatteryConfig, DensityGrid, TestName, Thresholds};
