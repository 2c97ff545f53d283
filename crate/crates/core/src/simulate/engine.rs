use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::TimeGrid;
use crate::model::{PricingRule, SignalModel, Surface};
use crate::rng::{Channel, RngContract};
use crate::transforms::{equilibrium_drift, jump_update, BridgeKernel, UNDERFLOW_EXPONENT};

use super::bundle::{JumpRecord, PathBundle, PathRecord, WealthPair};
use super::strategy::{Drift, Strategy};

/// Environment variable holding the worker count for path simulation.
pub const WORKERS_ENV: &str = "KYLEBACK_WORKERS";

/// Deepest Brownian-bridge refinement tried before declaring an escape.
const MAX_REFINEMENT_DEPTH: u32 = 8;

/// Above this `dt / (V(t) - t)` the bridge pull is integrated exponentially.
const STIFF_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Euler steps directly on `Z` and `xi`.
    Euler,
    /// Steps on `U = v(V(t), Z)` and `R = v(t, xi)`; exact Gaussian signal
    /// steps when the volatility does not depend on the state.
    Transformed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n_paths: usize,
    pub grid: TimeGrid,
    pub seed: u64,
    pub scheme: Scheme,
    /// Times at which per-path states are kept (snapped to the nearest node).
    pub checkpoints: Vec<f64>,
    /// Euler sub-steps for the initial signal value when it is not Gaussian.
    pub initial_substeps: usize,
    /// `|R|` beyond this is reported as a suspected explosion.
    pub explosion_bound: f64,
    /// Keep full trajectories for every path.
    pub record_paths: bool,
}

impl SimConfig {
    pub fn new(n_paths: usize, grid: TimeGrid, seed: u64) -> Self {
        let checkpoints = default_checkpoints(&grid);
        Self {
            n_paths,
            grid,
            seed,
            scheme: Scheme::Transformed,
            checkpoints,
            initial_substeps: 256,
            explosion_bound: 1e6,
            record_paths: false,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_recording(mut self) -> Self {
        self.record_paths = true;
        self
    }
}

/// Quarter points plus eight equal windows of `[0, 1 - eps]`.
pub fn default_checkpoints(grid: &TimeGrid) -> Vec<f64> {
    let last = grid.last();
    let mut out = vec![0.0, 0.25, 0.5, 0.75];
    out.extend((0..=8).map(|j| j as f64 * last / 8.0));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathErrorKind {
    StateEscape,
    DensityUnderflow,
    SingularDrift,
    SuspectedExplosion,
    Numerical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathError {
    pub kind: PathErrorKind,
    pub strategy: Option<String>,
    pub t: f64,
    pub value: f64,
    pub message: String,
}

impl PathError {
    fn new(kind: PathErrorKind, t: f64, value: f64, message: impl Into<String>) -> Self {
        Self {
            kind,
            strategy: None,
            t,
            value,
            message: message.into(),
        }
    }

    fn from_error(e: Error, t: f64, value: f64) -> Self {
        let kind = match e {
            Error::DensityUnderflow { .. } => PathErrorKind::DensityUnderflow,
            Error::DomainViolation(_) | Error::OutOfRange { .. } | Error::NoConvergence { .. } => {
                PathErrorKind::StateEscape
            }
            _ => PathErrorKind::Numerical,
        };
        Self::new(kind, t, value, e.to_string())
    }
}

/// State at a checkpoint node, after any block trades at that node.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NodeState {
    pub z: f64,
    pub xi: f64,
    pub y: f64,
    pub theta: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    pub checkpoints: Vec<NodeState>,
    pub wealth: WealthPair,
    /// `sum(-gamma P dB - gamma^2 P^2 dt / 2)` over the grid.
    pub dde_log: f64,
    /// Bound on the same exponent over `[1 - eps, 1]`.
    pub dde_sliver: f64,
    pub terminal_xi: f64,
    pub terminal_theta: f64,
    pub jumps: Vec<JumpRecord>,
    pub min_xi: f64,
    pub max_xi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSummary {
    pub index: usize,
    pub z0: f64,
    /// `Z` at `1 - eps`.
    pub z_terminal: f64,
    pub z_one: f64,
    /// `ln u(V(1 - eps), U_{1 - eps})`, so `u(0,0)/u = exp(-log_u_terminal)`.
    pub log_u_terminal: f64,
    pub min_z: f64,
    pub max_z: f64,
    pub outcomes: Vec<StrategyOutcome>,
    pub error: Option<PathError>,
}

/// Streaming results of one Monte Carlo run over several strategies with
/// common random numbers.
#[derive(Debug, Clone)]
pub struct MonteCarloRun {
    pub strategies: Vec<String>,
    pub checkpoint_nodes: Vec<usize>,
    pub checkpoint_times: Vec<f64>,
    pub paths: Vec<PathSummary>,
    pub scheme: Scheme,
    pub grid: TimeGrid,
    pub seed: u64,
    pub gamma: f64,
    pub c: f64,
    pub warnings: Vec<String>,
    pub bundles: Option<Vec<PathBundle>>,
}

impl MonteCarloRun {
    pub fn valid_paths(&self) -> impl Iterator<Item = &PathSummary> {
        self.paths.iter().filter(|p| p.error.is_none())
    }

    pub fn n_valid(&self) -> usize {
        self.valid_paths().count()
    }

    pub fn errors(&self) -> impl Iterator<Item = &PathError> {
        self.paths.iter().filter_map(|p| p.error.as_ref())
    }

    pub fn exclusion_rate(&self) -> f64 {
        if self.paths.is_empty() {
            return 0.0;
        }
        (self.paths.len() - self.n_valid()) as f64 / self.paths.len() as f64
    }

    pub fn strategy_index(&self, label: &str) -> Option<usize> {
        self.strategies.iter().position(|s| s == label)
    }

    /// Checkpoint slot for the node nearest `t`.
    pub fn slot(&self, t: f64) -> Option<usize> {
        let node = self.grid.nearest_index(t);
        self.checkpoint_nodes.iter().position(|&n| n == node)
    }

    /// Checkpoint states of one strategy at one slot across valid paths.
    pub fn states(&self, strategy: usize, slot: usize) -> Vec<NodeState> {
        self.valid_paths()
            .map(|p| p.outcomes[strategy].checkpoints[slot])
            .collect()
    }
}

#[derive(Clone, Copy)]
enum SignalStep {
    /// Exact Gaussian increments of `eta`.
    ExactGaussian,
    Transformed,
    Euler,
}

struct Plan<'a> {
    model: &'a SignalModel,
    rule: &'a PricingRule,
    kernel: BridgeKernel,
    strategies: &'a [Strategy],
    scheme: Scheme,
    signal: SignalStep,
    gamma: f64,
    c: f64,
    t: Vec<f64>,
    dt: Vec<f64>,
    sqrt_dt: Vec<f64>,
    big_v: Vec<f64>,
    gap: Vec<f64>,
    inv_gap: Vec<f64>,
    /// `1 / (slope t + offset)` per node when the inverse transform is linear in `y`.
    lam_scale: Option<Vec<f64>>,
    /// Clock increments `V(t_{k+1}) - V(t_k)`; the last entry runs to `V(1)`.
    dv: Vec<f64>,
    /// Standard deviation of the exact `eta` increment over each clock step.
    eta_sd: Vec<f64>,
    eta0_sd: Option<f64>,
    v0: f64,
    checkpoint_nodes: Vec<usize>,
    jumps: Vec<Vec<(usize, f64)>>,
    initial_substeps: usize,
    explosion_bound: f64,
}

/// Variance of `eta_t - eta_s` when `a` depends on time only.
fn gaussian_variance(surface: &Surface, s: f64, t: f64) -> Option<f64> {
    match surface {
        Surface::InverseLinear { slope, offset } => {
            Some((t - s) / ((slope * s + offset) * (slope * t + offset)))
        }
        Surface::Constant(c) => Some(c * c * (t - s)),
        _ => None,
    }
}

impl<'a> Plan<'a> {
    fn new(
        model: &'a SignalModel,
        rule: &'a PricingRule,
        strategies: &'a [Strategy],
        cfg: &SimConfig,
        warnings: &mut Vec<String>,
    ) -> Result<Self> {
        let nodes = cfg.grid.nodes();
        let n = nodes.len();
        let mut scheme = cfg.scheme;
        if scheme == Scheme::Transformed && !rule.matches_model(model) {
            warnings.push(
                "pricing rule differs from the signal volatility; falling back to Euler steps"
                    .into(),
            );
            scheme = Scheme::Euler;
        }
        let exact = gaussian_variance(&model.surface, 0.0, 1.0).is_some();
        let signal = match scheme {
            Scheme::Transformed if exact => SignalStep::ExactGaussian,
            Scheme::Transformed => SignalStep::Transformed,
            Scheme::Euler => SignalStep::Euler,
        };
        let t = nodes.to_vec();
        let dt: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
        let sqrt_dt = dt.iter().map(|d| d.sqrt()).collect();
        let big_v: Vec<f64> = t.iter().map(|&s| model.v_clock(s)).collect();
        let gap: Vec<f64> = t.iter().map(|&s| model.clock.gap(s)).collect();
        let inv_gap = gap.iter().map(|g| 1.0 / g).collect();
        let lam_scale = match model.surface {
            Surface::InverseLinear { slope, offset } => {
                Some(t.iter().map(|&s| 1.0 / (slope * s + offset)).collect())
            }
            _ => None,
        };
        let mut dv: Vec<f64> = big_v.windows(2).map(|w| w[1] - w[0]).collect();
        dv.push(model.v_clock(1.0) - big_v[n - 1]);
        let mut clock_nodes = big_v.clone();
        clock_nodes.push(model.v_clock(1.0));
        let eta_sd = clock_nodes
            .windows(2)
            .map(|w| {
                gaussian_variance(&model.surface, w[0], w[1])
                    .unwrap_or(0.0)
                    .max(0.0)
                    .sqrt()
            })
            .collect();
        let v0 = big_v[0];
        let eta0_sd = gaussian_variance(&model.surface, 0.0, v0).map(|v| v.max(0.0).sqrt());

        let mut checkpoint_nodes: Vec<usize> =
            cfg.checkpoints.iter().map(|&s| cfg.grid.nearest_index(s)).collect();
        checkpoint_nodes.sort_unstable();
        checkpoint_nodes.dedup();

        let mut jumps = Vec::with_capacity(strategies.len());
        for s in strategies {
            let mut list = Vec::new();
            for j in &s.jumps {
                if !(0.0..=cfg.grid.last()).contains(&j.time) {
                    return Err(invalid(
                        "jump time",
                        format!("{} outside [0, {}]", j.time, cfg.grid.last()),
                    ));
                }
                list.push((cfg.grid.first_at_or_after(j.time), j.size));
            }
            jumps.push(list);
        }

        Ok(Self {
            model,
            rule,
            kernel: BridgeKernel::new(model.clone()),
            strategies,
            scheme,
            signal,
            gamma: model.gamma,
            c: rule.c,
            t,
            dt,
            sqrt_dt,
            big_v,
            gap,
            inv_gap,
            lam_scale,
            dv,
            eta_sd,
            eta0_sd,
            v0,
            checkpoint_nodes,
            jumps,
            initial_substeps: cfg.initial_substeps.max(1),
            explosion_bound: cfg.explosion_bound,
        })
    }

    fn steps(&self) -> usize {
        self.t.len() - 1
    }

    /// `v(t, x)` for the model, with cheap closed forms inlined.
    fn v(&self, t: f64, x: f64) -> Result<f64> {
        let s = &self.model.surface;
        if let (Some(a), Some(b)) = (s.inverse_integral(t, x), s.slope_integral(t)) {
            if self.model.interval.contains(x) {
                return Ok(a + b);
            }
        }
        self.kernel.v(t, x)
    }

    /// `lambda(t_k, y)` at a grid node.
    #[inline]
    fn lambda_at(&self, k: usize, y: f64) -> Result<f64> {
        match &self.lam_scale {
            Some(scale) => Ok(y * scale[k]),
            None => self.lambda(self.t[k], y),
        }
    }

    fn lambda(&self, t: f64, y: f64) -> Result<f64> {
        match self.model.surface.inverse_transform(t, y) {
            Some(x) => Ok(x),
            None => self.kernel.lambda(t, y),
        }
    }
}

/// Per-worker scratch buffers.
struct Workspace {
    z: Vec<f64>,
    u: Vec<f64>,
    db: Vec<f64>,
    beta: Vec<f64>,
    xi: Vec<f64>,
    theta: Vec<f64>,
    y: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            z: vec![0.0; n],
            u: vec![0.0; n],
            db: vec![0.0; n],
            beta: vec![0.0; n],
            xi: vec![0.0; n],
            theta: vec![0.0; n],
            y: vec![0.0; n],
        }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Splits a Brownian increment `total` over a step of length `len` into
/// `2^depth` conditionally exact sub-increments.
fn refine_increment(total: f64, len: f64, depth: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut parts = vec![total];
    let mut piece = len;
    for _ in 0..depth {
        let mut next = Vec::with_capacity(parts.len() * 2);
        for &w in &parts {
            let left = 0.5 * w + 0.5 * piece.sqrt() * normal(rng);
            next.push(left);
            next.push(w - left);
        }
        parts = next;
        piece *= 0.5;
    }
    parts
}

/// Initial signal value `eta_{V(0)}`.
fn initial_signal(plan: &Plan, rng: &mut ChaCha8Rng) -> std::result::Result<f64, PathError> {
    if plan.v0 <= 0.0 {
        return Ok(0.0);
    }
    if let Some(sd) = plan.eta0_sd {
        return Ok(sd * normal(rng));
    }
    // Euler on kappa = v(s, eta_s), which has unit noise and drift gamma * lambda
    let m = plan.initial_substeps;
    let ds = plan.v0 / m as f64;
    let sd = ds.sqrt();
    let mut kappa = 0.0;
    for j in 0..m {
        let s = j as f64 * ds;
        let x = plan
            .lambda(s, kappa)
            .map_err(|e| PathError::from_error(e, s, kappa))?;
        kappa += sd * normal(rng) + plan.gamma * x * ds;
    }
    plan.lambda(plan.v0, kappa)
        .map_err(|e| PathError::from_error(e, plan.v0, kappa))
}

/// One Euler step of `d eta = a(s, eta) dW` over clock time `[s, s + ds]`
/// given the increment `dw`, refined on escape.
fn euler_eta_step(
    plan: &Plan,
    s: f64,
    ds: f64,
    eta: f64,
    dw: f64,
    refine: &mut ChaCha8Rng,
) -> std::result::Result<f64, PathError> {
    let iv = plan.model.interval;
    let next = eta + plan.model.a(s, eta) * dw;
    if iv.contains(next) {
        return Ok(next);
    }
    for depth in 1..=MAX_REFINEMENT_DEPTH {
        let parts = refine_increment(dw, ds, depth, refine);
        let h = ds / parts.len() as f64;
        let mut x = eta;
        let mut ok = true;
        for (j, w) in parts.iter().enumerate() {
            x += plan.model.a(s + j as f64 * h, x) * w;
            if !iv.contains(x) {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(x);
        }
    }
    Err(PathError::new(
        PathErrorKind::StateEscape,
        s,
        next,
        format!("signal left the state interval at clock time {s}"),
    ))
}

fn simulate_signal_path(
    plan: &Plan,
    ws: &mut Workspace,
    sig: &mut ChaCha8Rng,
    refine: &mut ChaCha8Rng,
    init: &mut ChaCha8Rng,
) -> std::result::Result<f64, PathError> {
    let n = plan.steps();
    let z0 = initial_signal(plan, init)?;
    ws.z[0] = z0;
    ws.beta[0] = 0.0;
    if !matches!(plan.signal, SignalStep::Euler) {
        ws.u[0] = plan
            .v(plan.big_v[0], z0)
            .map_err(|e| PathError::from_error(e, 0.0, z0))?;
    }
    let mut z_one = 0.0;
    for k in 0..=n {
        let dv = plan.dv[k];
        let g = normal(sig);
        let dw = dv.max(0.0).sqrt() * g;
        let (z, s_next) = (ws.z[k], if k < n { plan.big_v[k + 1] } else { 1.0 });
        let s = plan.big_v[k];
        let t_next = if k < n { plan.t[k + 1] } else { 1.0 };
        let next_z = if dv == 0.0 {
            z
        } else {
            match plan.signal {
                SignalStep::ExactGaussian => z + plan.eta_sd[k] * g,
                SignalStep::Transformed => {
                    let u = ws.u[k] + dw + plan.gamma * z * dv;
                    if k < n {
                        ws.u[k + 1] = u;
                    }
                    plan.lambda(s_next, u)
                        .map_err(|e| PathError::from_error(e, t_next, u))?
                }
                SignalStep::Euler => euler_eta_step(plan, s, dv, z, dw, refine)?,
            }
        };
        if k < n {
            ws.z[k + 1] = next_z;
            ws.beta[k + 1] = ws.beta[k] + dw;
            if matches!(plan.signal, SignalStep::ExactGaussian) {
                ws.u[k + 1] = plan
                    .v(s_next, next_z)
                    .map_err(|e| PathError::from_error(e, t_next, next_z))?;
            }
        } else {
            z_one = next_z;
        }
    }
    Ok(z_one)
}

struct Accumulators {
    ito: f64,
    parts_sum: f64,
    dde: f64,
}

#[inline(never)]
fn drift_rate(
    plan: &Plan,
    strategy: &Strategy,
    k: usize,
    xi: f64,
    r: f64,
    z: f64,
    u: f64,
) -> std::result::Result<f64, PathError> {
    let t = plan.t[k];
    let eq = |plan: &Plan| -> std::result::Result<f64, PathError> {
        match plan.scheme {
            Scheme::Transformed => {
                let gap = plan.gap[k];
                if !(gap > 0.0) {
                    return Err(PathError::new(
                        PathErrorKind::SingularDrift,
                        t,
                        gap,
                        "V(t) - t is not positive",
                    ));
                }
                let diff = u - r;
                let inv = plan.inv_gap[k];
                if 0.5 * diff * diff * inv > UNDERFLOW_EXPONENT {
                    return Err(PathError::new(
                        PathErrorKind::DensityUnderflow,
                        t,
                        diff,
                        "price state far outside the bridge funnel",
                    ));
                }
                Ok(diff * inv - plan.gamma * xi)
            }
            Scheme::Euler => equilibrium_drift(&plan.kernel, plan.rule, t, xi, z)
                .map_err(|e| PathError::from_error(e, t, xi)),
        }
    };
    match &strategy.drift {
        Drift::Zero => Ok(0.0),
        Drift::Equilibrium => eq(plan),
        Drift::Scaled(kappa) => Ok(kappa * eq(plan)?),
        Drift::Custom(f) => Ok(f(t, xi, z)),
    }
}

/// `drift_rate` in transformed coordinates with the error path kept out of line.
#[inline(always)]
fn transformed_drift(
    plan: &Plan,
    strategy: &Strategy,
    k: usize,
    xi: f64,
    r: f64,
    z: f64,
    u: f64,
) -> std::result::Result<f64, PathError> {
    let eq = || {
        let diff = u - r;
        let inv = plan.inv_gap[k];
        if inv > 0.0 && 0.5 * diff * diff * inv <= UNDERFLOW_EXPONENT {
            Some(diff * inv - plan.gamma * xi)
        } else {
            None
        }
    };
    let fast = match &strategy.drift {
        Drift::Zero => Some(0.0),
        Drift::Equilibrium => eq(),
        Drift::Scaled(kappa) => eq().map(|a| kappa * a),
        Drift::Custom(_) => None,
    };
    match fast {
        Some(a) => Ok(a),
        None => drift_rate(plan, strategy, k, xi, r, z, u),
    }
}

#[inline(always)]
fn transformed_price(plan: &Plan, k: usize, r: f64) -> std::result::Result<f64, PathError> {
    if let Some(scale) = &plan.lam_scale {
        if r.abs() <= plan.explosion_bound {
            return Ok(r * scale[k]);
        }
    }
    transformed_price_slow(plan, k, r)
}

#[cold]
fn transformed_price_slow(plan: &Plan, k: usize, r: f64) -> std::result::Result<f64, PathError> {
    if !(r.abs() <= plan.explosion_bound) {
        return Err(PathError::new(
            PathErrorKind::SuspectedExplosion,
            plan.t[k],
            r,
            "transformed price state exceeded the explosion bound",
        ));
    }
    plan.lambda_at(k, r)
        .map_err(|e| PathError::from_error(e, plan.t[k], r))
}

#[allow(clippy::too_many_arguments)]
fn simulate_strategy(
    plan: &Plan,
    ws: &mut Workspace,
    si: usize,
    z_one: f64,
    refine: &mut ChaCha8Rng,
    record: bool,
    record_jumps: &mut Vec<JumpRecord>,
) -> std::result::Result<StrategyOutcome, PathError> {
    let strategy = &plan.strategies[si];
    let n = plan.steps();
    let gamma = plan.gamma;
    let c = plan.c;
    let iv = plan.model.interval;

    let mut xi = 0.0;
    let mut r = match plan.scheme {
        Scheme::Transformed => plan.v(0.0, 0.0).map_err(|e| PathError::from_error(e, 0.0, 0.0))?,
        Scheme::Euler => 0.0,
    };
    let mut theta = 0.0;
    let mut b = 0.0;
    let mut acc = Accumulators {
        ito: 0.0,
        parts_sum: 0.0,
        dde: 0.0,
    };
    let mut checkpoints = Vec::with_capacity(plan.checkpoint_nodes.len());
    let mut next_cp = 0;
    let mut jumps = Vec::new();
    let mut min_xi = 0.0f64;
    let mut max_xi = 0.0f64;
    let schedule = &plan.jumps[si];

    for k in 0..=n {
        let t = plan.t[k];
        for &(node, size) in schedule {
            if node != k || size == 0.0 {
                continue;
            }
            let before = xi;
            let after = match plan.scheme {
                Scheme::Transformed => {
                    r += size;
                    plan.lambda_at(k, r)
                        .map_err(|e| PathError::from_error(e, t, r))?
                }
                Scheme::Euler => jump_update(plan.rule, t, xi, size)
                    .map_err(|e| PathError::from_error(e, t, xi))?,
            };
            acc.ito += theta * (after - before);
            acc.parts_sum += (after + c) * size;
            jumps.push(JumpRecord {
                node: k,
                time: t,
                dtheta: size,
                theta_before: theta,
                xi_before: before,
                xi_after: after,
            });
            theta += size;
            xi = after;
            min_xi = min_xi.min(xi);
            max_xi = max_xi.max(xi);
        }
        if record {
            ws.xi[k] = xi;
            ws.theta[k] = theta;
            ws.y[k] = theta + b;
        }
        while next_cp < plan.checkpoint_nodes.len() && plan.checkpoint_nodes[next_cp] == k {
            checkpoints.push(NodeState {
                z: ws.z[k],
                xi,
                y: theta + b,
                theta,
                b,
            });
            next_cp += 1;
        }
        if k == n {
            break;
        }
        let z = ws.z[k];
        let db = ws.db[k];
        let dt = plan.dt[k];
        let p = xi + c;
        match plan.scheme {
            Scheme::Transformed => {
                let a0 = transformed_drift(plan, strategy, k, xi, r, z, ws.u[k])?;
                let stiff = dt * plan.inv_gap[k].max(plan.inv_gap[k + 1]) > STIFF_LIMIT;
                let dtheta = if stiff {
                    // left-point step with the linear pull toward U solved exactly
                    match strategy.drift {
                        Drift::Equilibrium | Drift::Scaled(_) => {
                            let kappa = match strategy.drift {
                                Drift::Scaled(kappa) => kappa,
                                _ => 1.0,
                            };
                            let pull = -(-kappa * dt * plan.inv_gap[k]).exp_m1();
                            (ws.u[k] - r) * pull - kappa * gamma * xi * dt
                        }
                        _ => a0 * dt,
                    }
                } else {
                    // Heun step: the drift is averaged over both ends of the step.
                    let r_pred = r + db + (a0 + gamma * xi) * dt;
                    let xi_pred = transformed_price(plan, k + 1, r_pred)?;
                    let a1 = transformed_drift(plan, strategy, k + 1, xi_pred, r_pred, ws.z[k + 1], ws.u[k + 1])?;
                    let alpha = 0.5 * (a0 + a1);
                    r += 0.5 * gamma * (xi_pred - xi) * dt;
                    alpha * dt
                };
                r += db + dtheta + gamma * xi * dt;
                let next = transformed_price(plan, k + 1, r)?;
                acc.ito += theta * (next - xi);
                acc.parts_sum += p * dtheta;
                acc.dde += -gamma * p * db - 0.5 * gamma * gamma * p * p * dt;
                theta += dtheta;
                xi = next;
            }
            Scheme::Euler => {
                let alpha = drift_rate(plan, strategy, k, xi, r, z, ws.u[k])?;
                let next = xi + plan.rule.w(t, xi) * (db + alpha * dt);
                if iv.contains(next) && next.abs() <= plan.explosion_bound {
                    let dtheta = alpha * dt;
                    acc.ito += theta * (next - xi);
                    acc.parts_sum += p * dtheta;
                    acc.dde += -gamma * p * db - 0.5 * gamma * gamma * p * p * dt;
                    theta += dtheta;
                    xi = next;
                } else {
                    let mut done = false;
                    for depth in 1..=MAX_REFINEMENT_DEPTH {
                        let parts = refine_increment(db, dt, depth, refine);
                        let h = dt / parts.len() as f64;
                        let (mut x, mut th) = (xi, theta);
                        let mut local = Accumulators {
                            ito: 0.0,
                            parts_sum: 0.0,
                            dde: 0.0,
                        };
                        let mut ok = true;
                        for (j, w) in parts.iter().enumerate() {
                            let s = t + j as f64 * h;
                            let a = match &strategy.drift {
                                Drift::Zero => 0.0,
                                Drift::Custom(f) => f(s, x, z),
                                Drift::Equilibrium | Drift::Scaled(_) => {
                                    let base = equilibrium_drift(&plan.kernel, plan.rule, s, x, z)
                                        .map_err(|e| PathError::from_error(e, s, x))?;
                                    match strategy.drift {
                                        Drift::Scaled(kappa) => kappa * base,
                                        _ => base,
                                    }
                                }
                            };
                            let nx = x + plan.rule.w(s, x) * (w + a * h);
                            if !iv.contains(nx) {
                                ok = false;
                                break;
                            }
                            let pj = x + c;
                            local.ito += th * (nx - x);
                            local.parts_sum += pj * a * h;
                            local.dde += -gamma * pj * w - 0.5 * gamma * gamma * pj * pj * h;
                            th += a * h;
                            x = nx;
                        }
                        if ok {
                            acc.ito += local.ito;
                            acc.parts_sum += local.parts_sum;
                            acc.dde += local.dde;
                            theta = th;
                            xi = x;
                            done = true;
                            break;
                        }
                    }
                    if !done {
                        return Err(PathError::new(
                            PathErrorKind::StateEscape,
                            t,
                            next,
                            "price state left the state interval",
                        ));
                    }
                }
            }
        }
        b += db;
        min_xi = min_xi.min(xi);
        max_xi = max_xi.max(xi);
    }

    let eps = 1.0 - plan.t[n];
    let p_last = xi + c;
    let sliver = gamma * p_last.abs() * 3.0 * eps.sqrt() + 0.5 * gamma * gamma * p_last * p_last * eps;
    let wealth = WealthPair {
        ito: acc.ito + (z_one - xi - c) * theta,
        by_parts: z_one * theta - acc.parts_sum,
    };
    if record {
        record_jumps.clone_from(&jumps);
    }
    Ok(StrategyOutcome {
        checkpoints,
        wealth,
        dde_log: acc.dde,
        dde_sliver: sliver,
        terminal_xi: xi,
        terminal_theta: theta,
        jumps,
        min_xi,
        max_xi,
    })
}

fn simulate_path(
    plan: &Plan,
    contract: &RngContract,
    ws: &mut Workspace,
    index: usize,
    mut records: Option<&mut Vec<PathRecord>>,
) -> PathSummary {
    let mut order = contract.stream(index as u64, Channel::OrderFlow);
    let mut sig = contract.stream(index as u64, Channel::Signal);
    let mut refine = contract.stream(index as u64, Channel::Refinement);
    let mut init = contract.stream(index as u64, Channel::Initial);
    let n = plan.steps();
    let mut summary = PathSummary {
        index,
        z0: f64::NAN,
        z_terminal: f64::NAN,
        z_one: f64::NAN,
        log_u_terminal: f64::NAN,
        min_z: f64::NAN,
        max_z: f64::NAN,
        outcomes: Vec::with_capacity(plan.strategies.len()),
        error: None,
    };
    let z_one = match simulate_signal_path(plan, ws, &mut sig, &mut refine, &mut init) {
        Ok(z) => z,
        Err(e) => {
            summary.error = Some(e);
            return summary;
        }
    };
    summary.z0 = ws.z[0];
    summary.z_terminal = ws.z[n];
    summary.z_one = z_one;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &z in &ws.z[..=n] {
        lo = lo.min(z);
        hi = hi.max(z);
    }
    summary.min_z = lo.min(z_one);
    summary.max_z = hi.max(z_one);
    let u_last = match plan.signal {
        SignalStep::Euler => plan.v(plan.big_v[n], ws.z[n]),
        _ => Ok(ws.u[n]),
    };
    summary.log_u_terminal = match u_last.and_then(|u| plan.kernel.log_u(plan.big_v[n].min(1.0), u)) {
        Ok(v) => v,
        Err(e) => {
            summary.error = Some(PathError::from_error(e, plan.t[n], ws.z[n]));
            return summary;
        }
    };
    for k in 0..n {
        ws.db[k] = plan.sqrt_dt[k] * normal(&mut order);
    }
    for si in 0..plan.strategies.len() {
        let record = records.is_some();
        let mut jumps = Vec::new();
        match simulate_strategy(plan, ws, si, z_one, &mut refine, record, &mut jumps) {
            Ok(out) => {
                if let Some(recs) = records.as_deref_mut() {
                    let mut b = vec![0.0; n + 1];
                    for k in 0..n {
                        b[k + 1] = b[k] + ws.db[k];
                    }
                    recs.push(PathRecord {
                        index,
                        b,
                        beta: ws.beta[..=n].to_vec(),
                        z: ws.z[..=n].to_vec(),
                        xi: ws.xi[..=n].to_vec(),
                        y: ws.y[..=n].to_vec(),
                        theta: ws.theta[..=n].to_vec(),
                        jumps,
                        z_one,
                        wealth: out.wealth,
                    });
                }
                summary.outcomes.push(out);
            }
            Err(mut e) => {
                e.strategy = Some(plan.strategies[si].label.clone());
                summary.error = Some(e);
                summary.outcomes.clear();
                if let Some(recs) = records.as_deref_mut() {
                    recs.clear();
                }
                return summary;
            }
        }
    }
    summary
}

fn worker_count() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Simulates every strategy on the same signal and noise paths.
pub fn run_monte_carlo(
    model: &SignalModel,
    rule: &PricingRule,
    strategies: &[Strategy],
    cfg: &SimConfig,
) -> Result<MonteCarloRun> {
    if cfg.n_paths == 0 {
        return Err(invalid("n_paths", "need at least one path"));
    }
    let mut warnings = Vec::new();
    let plan = Plan::new(model, rule, strategies, cfg, &mut warnings)?;
    let contract = RngContract::new(cfg.seed);
    let n_nodes = cfg.grid.len();
    let record = cfg.record_paths;

    let work = || -> Vec<(PathSummary, Vec<PathRecord>)> {
        (0..cfg.n_paths)
            .into_par_iter()
            .map_init(
                || Workspace::new(n_nodes),
                |ws, i| {
                    let mut recs = Vec::new();
                    let s = simulate_path(&plan, &contract, ws, i, record.then_some(&mut recs));
                    (s, recs)
                },
            )
            .collect()
    };
    let results = match worker_count() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| invalid("workers", e.to_string()))?
            .install(work),
        None => work(),
    };

    let mut paths = Vec::with_capacity(results.len());
    let mut bundles: Option<Vec<PathBundle>> = record.then(|| {
        strategies
            .iter()
            .map(|s| PathBundle {
                grid: cfg.grid.clone(),
                seed: cfg.seed,
                strategy: s.label.clone(),
                c: rule.c,
                paths: Vec::new(),
                errors: Vec::new(),
            })
            .collect()
    });
    for (summary, recs) in results {
        if let Some(bs) = bundles.as_mut() {
            if let Some(e) = &summary.error {
                for b in bs.iter_mut() {
                    b.errors.push(e.clone());
                }
            } else {
                for (b, r) in bs.iter_mut().zip(recs) {
                    b.paths.push(r);
                }
            }
        }
        paths.push(summary);
    }
    let checkpoint_times = plan.checkpoint_nodes.iter().map(|&k| plan.t[k]).collect();
    Ok(MonteCarloRun {
        strategies: strategies.iter().map(|s| s.label.clone()).collect(),
        checkpoint_nodes: plan.checkpoint_nodes.clone(),
        checkpoint_times,
        paths,
        scheme: plan.scheme,
        grid: cfg.grid.clone(),
        seed: cfg.seed,
        gamma: model.gamma,
        c: rule.c,
        warnings,
        bundles,
    })
}
