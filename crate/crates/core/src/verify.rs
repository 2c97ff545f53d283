//! Statistical and analytic battery certifying the equilibrium: rational
//! pricing, Brownian order flow, bridge convergence, optimality,
//! admissibility, density identities and the static clock invariance.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::{grid_with_steps, Refinement, TimeGrid};
use crate::model::{Clock, ModelKind, PricingRule, SignalModel};
use crate::numeric::{integrate, QuadOptions};
use crate::report::{Check, Provenance, ReportEntry, VerificationReport};
use crate::signals::GaussianOracle;
use crate::simulate::{
    run_monte_carlo, MonteCarloRun, NodeState, Scheme, SimConfig, Strategy, StrategyOutcome,
};
use crate::stats::{correlation, ks_normal, moments, paired_difference, Moments};
use crate::transforms::{jump_penalty, psi, BridgeKernel, EvalMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestName {
    RationalPricing,
    OrderFlow,
    Bridge,
    Optimality,
    Admissibility,
    Density,
    StaticInvariance,
}

impl TestName {
    pub const ALL: [TestName; 7] = [
        TestName::RationalPricing,
        TestName::OrderFlow,
        TestName::Bridge,
        TestName::Optimality,
        TestName::Admissibility,
        TestName::Density,
        TestName::StaticInvariance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TestName::RationalPricing => "rational_pricing",
            TestName::OrderFlow => "order_flow",
            TestName::Bridge => "bridge",
            TestName::Optimality => "optimality",
            TestName::Admissibility => "admissibility",
            TestName::Density => "density",
            TestName::StaticInvariance => "static_invariance",
        }
    }

    /// Fewest paths for a meaningful result.
    pub fn min_paths(self) -> usize {
        match self {
            TestName::RationalPricing | TestName::OrderFlow => 10_000,
            TestName::Optimality | TestName::Admissibility | TestName::StaticInvariance => 100_000,
            TestName::Bridge => 1_000,
            TestName::Density => 0,
        }
    }
}

impl fmt::Display for TestName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<_> = TestName::ALL.iter().map(|t| t.as_str()).collect();
                invalid("test", format!("unknown test `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Standard errors allowed for ordinary Monte Carlo checks.
    pub se_multiplier: f64,
    /// Standard errors allowed for exponential functionals and heavy tails.
    pub heavy_se_multiplier: f64,
    pub ks_p_value: f64,
    pub jump_penalty: f64,
    /// Sample kurtosis above which an estimator is flagged as heavy-tailed.
    pub kurtosis_warning: f64,
    pub bridge_ratio: f64,
    pub bridge_final_rms: f64,
    pub density_residual: f64,
    pub score_residual: f64,
    pub rho_normalization: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            se_multiplier: 3.0,
            heavy_se_multiplier: 5.0,
            ks_p_value: 0.01,
            jump_penalty: 1e-10,
            kurtosis_warning: 50.0,
            bridge_ratio: 1.5,
            bridge_final_rms: 0.05,
            density_residual: 1e-6,
            score_residual: 1e-8,
            rho_normalization: 1e-5,
        }
    }
}

/// Where the density checks tabulate `rho` against the Gaussian closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityGrid {
    pub s: f64,
    pub t: f64,
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Default for DensityGrid {
    fn default() -> Self {
        Self {
            s: 0.25,
            t: 0.75,
            lower: -0.5,
            upper: 0.5,
            points: 21,
        }
    }
}

impl DensityGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.lower];
        }
        let h = (self.upper - self.lower) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lower + i as f64 * h).collect()
    }
}

#[derive(Debug, Clone)]
pub struct BatteryConfig {
    pub n_paths: usize,
    pub grid: TimeGrid,
    pub seed: u64,
    pub scheme: Scheme,
    pub bins: usize,
    pub windows: usize,
    pub pricing_times: Vec<f64>,
    pub bridge_paths: usize,
    pub bridge_steps: usize,
    pub bridge_epsilons: Vec<f64>,
    pub density_grid: DensityGrid,
    /// Alternative clocks for the static invariance check.
    pub static_clocks: Vec<Clock>,
    pub thresholds: Thresholds,
    /// Run tests below their minimum path counts, with a warning.
    pub allow_small_samples: bool,
    /// Restrict the battery to these tests; empty means all that apply.
    pub only: Vec<TestName>,
    pub config_hash: Option<String>,
}

impl BatteryConfig {
    pub fn new(n_paths: usize, grid: TimeGrid, seed: u64) -> Self {
        Self {
            n_paths,
            grid,
            seed,
            scheme: Scheme::Transformed,
            bins: 20,
            windows: 8,
            pricing_times: vec![0.25, 0.5, 0.75],
            bridge_paths: 1_000,
            bridge_steps: 1 << 14,
            bridge_epsilons: vec![2f64.powi(-8), 2f64.powi(-12), 2f64.powi(-16)],
            density_grid: DensityGrid::default(),
            static_clocks: vec![
                Clock::Static,
                Clock::Linear {
                    v0: 0.5,
                    slope: 0.5,
                },
            ],
            thresholds: Thresholds::default(),
            allow_small_samples: false,
            only: Vec::new(),
            config_hash: None,
        }
    }

    fn provenance(&self, n_paths: usize, n_steps: usize) -> Provenance {
        Provenance {
            seed: Some(self.seed),
            config_hash: self.config_hash.clone(),
            n_paths: Some(n_paths),
            n_steps: Some(n_steps),
        }
    }

    fn selected(&self, test: TestName) -> bool {
        self.only.is_empty() || self.only.contains(&test)
    }
}

/// Fails with `InsufficientPaths` unless small samples are allowed, in which
/// case a warning is recorded instead.
fn require_paths(
    entry: &mut ReportEntry,
    test: TestName,
    have: usize,
    allow_small: bool,
) -> Result<()> {
    let needed = test.min_paths();
    if have >= needed {
        return Ok(());
    }
    if allow_small {
        entry.warn(format!(
            "only {have} paths (at least {needed} recommended); thresholds are not calibrated for this size"
        ));
        Ok(())
    } else {
        Err(Error::InsufficientPaths { needed, have })
    }
}

fn strategy_index(run: &MonteCarloRun, label: &str) -> Result<usize> {
    run.strategy_index(label)
        .ok_or_else(|| invalid("strategies", format!("run has no `{label}` strategy")))
}

fn slot(run: &MonteCarloRun, t: f64) -> Result<usize> {
    run.slot(t)
        .ok_or_else(|| invalid("checkpoints", format!("no checkpoint kept near t = {t}")))
}

fn label_time(t: f64) -> String {
    format!("{:.4}", t).trim_end_matches('0').trim_end_matches('.').to_string()
}

fn label_epsilon(eps: f64) -> String {
    let l = eps.log2();
    if (l - l.round()).abs() < 1e-12 {
        format!("2^{}", l.round() as i64)
    } else {
        format!("{eps:e}")
    }
}

/// Checkpoint times for the battery: pricing times, `0`, and the window edges.
pub fn battery_checkpoints(grid: &TimeGrid, pricing_times: &[f64], windows: usize) -> Vec<f64> {
    let last = grid.last();
    let mut out = vec![0.0];
    out.extend_from_slice(pricing_times);
    out.extend((0..=windows).map(|j| j as f64 * last / windows as f64));
    out
}

/// Conditional means of `Z - xi` in equal-mass bins of `xi`.
fn binned_checks(states: &[NodeState], bins: usize, k: f64, prefix: &str) -> Vec<Check> {
    let mut sorted: Vec<NodeState> = states.to_vec();
    sorted.sort_by(|a, b| a.xi.total_cmp(&b.xi));
    let n = sorted.len();
    let bins = bins.clamp(1, n.max(1));
    (0..bins)
        .map(|b| {
            let lo = b * n / bins;
            let hi = (b + 1) * n / bins;
            let m = moments(sorted[lo..hi].iter().map(|s| s.z - s.xi));
            Check::within_se(format!("{prefix} bin {}", b + 1), m.mean, 0.0, m.se, k)
        })
        .collect()
}

/// Binned rational-pricing test on the equilibrium paths, with the zero
/// strategy (when simulated) as a negative control.
pub fn verify_rational_pricing(
    run: &MonteCarloRun,
    times: &[f64],
    bins: usize,
    thresholds: &Thresholds,
) -> Result<ReportEntry> {
    let mut entry = ReportEntry::new(TestName::RationalPricing.as_str());
    let k = thresholds.se_multiplier;
    let eq = strategy_index(run, "equilibrium")?;

    let s0 = slot(run, 0.0)?;
    let m0 = moments(run.states(eq, s0).iter().map(|s| s.z - s.xi));
    entry.push(Check::within_se("t=0 mean", m0.mean, 0.0, m0.se, k));
    for &t in times {
        let states = run.states(eq, slot(run, t)?);
        let m = moments(states.iter().map(|s| s.z - s.xi));
        let tl = label_time(t);
        entry.push(Check::within_se(format!("t={tl} mean"), m.mean, 0.0, m.se, k));
        for c in binned_checks(&states, bins, k, &format!("t={tl}")) {
            entry.push(c);
        }
    }
    if let Some(zero) = run.strategy_index("zero") {
        let t = times.get(times.len() / 2).copied().unwrap_or(0.5);
        let states = run.states(zero, slot(run, t)?);
        for c in binned_checks(&states, bins, k, &format!("zero strategy t={}", label_time(t))) {
            entry.push(c.as_control());
        }
    }
    Ok(entry)
}

/// Standardized order-flow increments over `windows` equal windows of
/// `[0, 1 - eps]`, grouped by window.
fn standardized_increments(
    run: &MonteCarloRun,
    strategy: usize,
    windows: usize,
) -> Result<Vec<Vec<f64>>> {
    let last = run.grid.last();
    let slots: Vec<usize> = (0..=windows)
        .map(|j| slot(run, j as f64 * last / windows as f64))
        .collect::<Result<_>>()?;
    Ok((0..windows)
        .map(|w| {
            let (a, b) = (slots[w], slots[w + 1]);
            let scale = (run.checkpoint_times[b] - run.checkpoint_times[a]).sqrt();
            run.valid_paths()
                .map(|p| {
                    let c = &p.outcomes[strategy].checkpoints;
                    (c[b].y - c[a].y) / scale
                })
                .collect()
        })
        .collect())
}

fn brownian_checks(
    increments: &[Vec<f64>],
    thresholds: &Thresholds,
    prefix: &str,
) -> Vec<Check> {
    let k = thresholds.se_multiplier;
    let pooled: Vec<f64> = increments.iter().flatten().copied().collect();
    let m = moments(pooled.iter().copied());
    let (d, p) = ks_normal(&pooled);
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for pair in increments.windows(2) {
        left.extend_from_slice(&pair[0]);
        right.extend_from_slice(&pair[1]);
    }
    let mut checks = vec![
        Check::within_se(format!("{prefix}mean"), m.mean, 0.0, m.se, k),
        Check::within_se(format!("{prefix}variance"), m.variance, 1.0, m.variance_se, k),
        Check::above(format!("{prefix}ks p-value"), p, thresholds.ks_p_value).with_se(d),
    ];
    if !left.is_empty() {
        let r = correlation(&left, &right);
        let se = 1.0 / (left.len() as f64).sqrt();
        checks.push(Check::within_se(
            format!("{prefix}serial correlation"),
            r,
            0.0,
            se,
            k,
        ));
    }
    checks
}

/// Brownianity of the total order flow under the equilibrium strategy, with
/// the `scaled(2)` strategy (when simulated) as a negative control.
pub fn verify_order_flow_brownian(
    run: &MonteCarloRun,
    windows: usize,
    thresholds: &Thresholds,
) -> Result<ReportEntry> {
    if windows == 0 {
        return Err(invalid("windows", "need at least one window"));
    }
    let mut entry = ReportEntry::new(TestName::OrderFlow.as_str());
    let eq = strategy_index(run, "equilibrium")?;
    for c in brownian_checks(&standardized_increments(run, eq, windows)?, thresholds, "") {
        entry.push(c);
    }
    if let Some(ctl) = run.strategy_index(&Strategy::scaled(2.0).label) {
        let incs = standardized_increments(run, ctl, windows)?;
        for c in brownian_checks(&incs, thresholds, "scaled(2) ") {
            entry.push(c.as_control());
        }
    }
    Ok(entry)
}

/// Bridge pinning: RMS of `xi - Z` at `1 - eps` for each cutoff, from
/// equilibrium runs on geometric grids of `n_steps` steps.
#[allow(clippy::too_many_arguments)]
pub fn verify_bridge_convergence(
    model: &SignalModel,
    rule: &PricingRule,
    epsilons: &[f64],
    n_paths: usize,
    n_steps: usize,
    seed: u64,
    scheme: Scheme,
    thresholds: &Thresholds,
) -> Result<ReportEntry> {
    let mut entry = ReportEntry::new(TestName::Bridge.as_str());
    if epsilons.is_empty() {
        return Err(invalid("epsilons", "need at least one cutoff"));
    }
    let mut levels: Vec<f64> = epsilons.to_vec();
    levels.sort_by(|a, b| b.total_cmp(a));
    let mut rms = Vec::with_capacity(levels.len());
    for &eps in &levels {
        let grid = grid_with_steps(eps, n_steps, Refinement::Geometric)?;
        let n = grid.len();
        let final_step = grid.nodes()[n - 1] - grid.nodes()[n - 2];
        if final_step > eps {
            return Err(Error::StepResolution(format!(
                "{n_steps} steps leave a final step of {final_step:e}, longer than the cutoff {eps:e}"
            )));
        }
        let cfg = SimConfig {
            checkpoints: vec![0.0],
            ..SimConfig::new(n_paths, grid, seed).with_scheme(scheme)
        };
        let run = run_monte_carlo(model, rule, &[Strategy::equilibrium()], &cfg)?;
        for w in &run.warnings {
            entry.warn(w.clone());
        }
        let gap = moments(
            run.valid_paths()
                .map(|p| (p.outcomes[0].terminal_xi - p.z_terminal).powi(2)),
        );
        rms.push(gap.mean.sqrt());
    }
    for (i, pair) in rms.windows(2).enumerate() {
        let (a, b) = (label_epsilon(levels[i]), label_epsilon(levels[i + 1]));
        entry.push(Check::below(format!("rms at {b} below rms at {a}"), pair[1], pair[0]));
        entry.push(Check::at_least(
            format!("rms ratio {a} / {b}"),
            pair[0] / pair[1],
            thresholds.bridge_ratio,
        ));
    }
    if levels.len() < 2 {
        entry.warn("insufficient levels: the ratio test is vacuous with a single cutoff");
    }
    let last = *levels.last().expect("non-empty");
    entry.push(Check::below(
        format!("rms at {}", label_epsilon(last)),
        *rms.last().expect("non-empty"),
        thresholds.bridge_final_rms,
    ));
    Ok(entry.with_provenance(Provenance {
        seed: Some(seed),
        config_hash: None,
        n_paths: Some(n_paths),
        n_steps: Some(n_steps),
    }))
}

/// Terminal wealth used for utilities: the by-parts form `int (Z_1 - P_-) d theta`.
/// The left-point form carries a spurious `sum dP d theta` term of order `dt`
/// once the trading rate looks at the end of its step.
pub fn terminal_wealth(outcome: &StrategyOutcome) -> f64 {
    outcome.wealth.by_parts
}

/// CARA utility `-exp(-gamma W) / gamma`.
pub fn utility(gamma: f64, wealth: f64) -> f64 {
    -(-gamma * wealth).exp() / gamma
}

fn heavy_tail_multiplier(
    entry: &mut ReportEntry,
    what: &str,
    m: &Moments,
    thresholds: &Thresholds,
) -> f64 {
    if m.kurtosis > thresholds.kurtosis_warning {
        entry.warn(format!(
            "{what}: kurtosis {:.1} exceeds {}; interval widened to {} se",
            m.kurtosis, thresholds.kurtosis_warning, thresholds.heavy_se_multiplier
        ));
        thresholds.heavy_se_multiplier
    } else {
        thresholds.se_multiplier
    }
}

/// Equilibrium utility against each simulated deviation, the value identity
/// through `Psi`, and pathwise jump penalties.
pub fn verify_optimality(
    run: &MonteCarloRun,
    rule: &PricingRule,
    thresholds: &Thresholds,
) -> Result<ReportEntry> {
    let mut entry = ReportEntry::new(TestName::Optimality.as_str());
    let eq = strategy_index(run, "equilibrium")?;
    let gamma = run.gamma;
    let u_eq: Vec<f64> = run
        .valid_paths()
        .map(|p| utility(gamma, terminal_wealth(&p.outcomes[eq])))
        .collect();
    let m_eq = moments(u_eq.iter().copied());
    let k_eq = heavy_tail_multiplier(&mut entry, "equilibrium utility", &m_eq, thresholds);

    for (i, label) in run.strategies.iter().enumerate() {
        if i == eq {
            continue;
        }
        let u_dev: Vec<f64> = run
            .valid_paths()
            .map(|p| utility(gamma, terminal_wealth(&p.outcomes[i])))
            .collect();
        let d = paired_difference(&u_eq, &u_dev);
        let k = heavy_tail_multiplier(&mut entry, &format!("utility gap to {label}"), &d, thresholds);
        entry.push(Check::at_least(format!("equilibrium minus {label}"), d.mean, -k * d.se).with_se(d.se));
    }

    let u_psi: Vec<f64> = run
        .valid_paths()
        .map(|p| Ok(utility(gamma, psi(rule, p.z_one, 0.0, 0.0)?)))
        .collect::<Result<_>>()?;
    let d = paired_difference(&u_eq, &u_psi);
    entry.push(Check::within_se(
        "equilibrium minus value function",
        d.mean,
        0.0,
        d.se,
        k_eq.max(thresholds.se_multiplier),
    ));

    let mut worst = f64::NEG_INFINITY;
    let mut count = 0usize;
    for (i, _) in run.strategies.iter().enumerate() {
        for p in run.valid_paths() {
            for j in &p.outcomes[i].jumps {
                let d = jump_penalty(rule, p.z_one, j.time, j.xi_before, j.xi_after, j.dtheta)?;
                worst = worst.max(d);
                count += 1;
            }
        }
    }
    if count > 0 {
        entry.push(Check::at_most("max jump penalty", worst, thresholds.jump_penalty));
    }
    Ok(entry)
}

/// `exp(sum(-gamma P dB - gamma^2 P^2 dt / 2))` along one discretized path.
pub fn stochastic_exponential(gamma: f64, prices: &[f64], db: &[f64], dt: &[f64]) -> f64 {
    let exponent: f64 = prices
        .iter()
        .zip(db)
        .zip(dt)
        .map(|((&p, &b), &h)| -gamma * p * b - 0.5 * gamma * gamma * p * p * h)
        .sum();
    exponent.exp()
}

/// Unit expectation of the Doléans-Dade exponential of `-gamma P` and of
/// `u(0,0) / u(V(1-eps), U)`, plus the degenerate zero-price case.
pub fn verify_admissibility(run: &MonteCarloRun, thresholds: &Thresholds) -> Result<ReportEntry> {
    let mut entry = ReportEntry::new(TestName::Admissibility.as_str());
    let eq = strategy_index(run, "equilibrium")?;
    let samples: Vec<f64> = run
        .valid_paths()
        .map(|p| p.outcomes[eq].dde_log.exp())
        .collect();
    let m = moments(samples.iter().copied());
    let k = thresholds.heavy_se_multiplier;
    if m.kurtosis > thresholds.kurtosis_warning {
        entry.warn(format!(
            "stochastic exponential: kurtosis {:.1} exceeds {}",
            m.kurtosis, thresholds.kurtosis_warning
        ));
    }
    let sliver = moments(
        run.valid_paths()
            .map(|p| p.outcomes[eq].dde_log.exp() * p.outcomes[eq].dde_sliver.exp_m1()),
    )
    .mean;
    entry.push(
        Check::within("stochastic exponential mean", m.mean, 1.0, k * m.se + sliver).with_se(m.se),
    );
    entry.warn(format!("terminal sliver bound {sliver:.3e} added to the interval"));

    let um = moments(run.valid_paths().map(|p| (-p.log_u_terminal).exp()));
    entry.push(Check::within_se("h-function ratio mean", um.mean, 1.0, um.se, k));

    let nodes = run.grid.nodes();
    let dt: Vec<f64> = nodes.windows(2).map(|w| w[1] - w[0]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let db: Vec<f64> = dt
        .iter()
        .map(|h| {
            let g: f64 = StandardNormal.sample(&mut rng);
            h.sqrt() * g
        })
        .collect();
    let flat = stochastic_exponential(run.gamma, &vec![0.0; dt.len()], &db, &dt);
    entry.push(Check::within("zero price exponential", flat, 1.0, 0.0));
    Ok(entry)
}

/// Integral of `f` over `(lower, upper)` split around a peak at `center` of
/// width `width`.
fn integrate_peaked<F: FnMut(f64) -> f64>(
    mut f: F,
    center: f64,
    width: f64,
    lower: f64,
    upper: f64,
) -> Result<f64> {
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-12,
        ..QuadOptions::default()
    };
    let a = (center - 10.0 * width).max(lower);
    let b = (center + 10.0 * width).min(upper);
    let mut total = integrate(&mut f, a, b, opts)?.value;
    if a > lower {
        total += integrate(&mut f, lower, a, opts)?.value;
    }
    if b < upper {
        total += integrate(&mut f, b, upper, opts)?.value;
    }
    Ok(total)
}

/// Normalization, Chapman–Kolmogorov and zero-mean score of `p`,
/// normalization of `rho` over the state interval and, when a Gaussian
/// oracle is supplied, `rho` computed by quadrature against it.
pub fn verify_density_identities(
    kernel: &BridgeKernel,
    oracle: Option<&GaussianOracle>,
    grid: &DensityGrid,
    thresholds: &Thresholds,
) -> Result<ReportEntry> {
    let mut entry = ReportEntry::new(TestName::Density.as_str());
    let pairs: [(f64, f64); 3] = [(0.0, 0.5), (0.5, 1.0), (0.0, 1.0)];
    let starts = [-1.0, 0.0, 1.0];
    let inf = f64::INFINITY;
    let (mut norm, mut ck, mut score) = (0.0f64, 0.0f64, 0.0f64);
    for &(s, t) in &pairs {
        let width = (t - s).sqrt();
        for &x in &starts {
            let mass = integrate_peaked(
                |y| kernel.density_p(s, x, t, y).unwrap_or(f64::NAN),
                x,
                width,
                -inf,
                inf,
            )?;
            norm = norm.max((mass - 1.0).abs());
            let slope = integrate_peaked(
                |y| kernel.density_p_dx(s, x, t, y).unwrap_or(f64::NAN),
                x,
                width,
                -inf,
                inf,
            )?;
            score = score.max(slope.abs());
            let mid = 0.5 * (s + t);
            for &y in &starts {
                let direct = kernel.density_p(s, x, t, y)?;
                let composed = integrate_peaked(
                    |z| {
                        let a = kernel.density_p(s, x, mid, z).unwrap_or(f64::NAN);
                        let b = kernel.density_p(mid, z, t, y).unwrap_or(f64::NAN);
                        a * b
                    },
                    0.5 * (x + y),
                    width,
                    -inf,
                    inf,
                )?;
                ck = ck.max((composed - direct).abs());
            }
        }
    }
    entry.push(Check::below("p normalization residual", norm, thresholds.density_residual));
    entry.push(Check::below("chapman-kolmogorov residual", ck, thresholds.density_residual));
    entry.push(Check::below("zero-mean score residual", score, thresholds.score_residual));

    let iv = kernel.model().interval;
    let mut rho_norm = 0.0f64;
    for &(s, t) in &pairs {
        for y in [-0.5, 0.0, 0.5] {
            if !iv.contains(y) {
                continue;
            }
            let width = (kernel.model().a(s, y) * (t - s).sqrt()).max(1e-3);
            let mass = integrate_peaked(
                |z| kernel.density_rho(s, y, t, z).unwrap_or(f64::NAN),
                y,
                width,
                iv.lower,
                iv.upper,
            )?;
            rho_norm = rho_norm.max((mass - 1.0).abs());
        }
    }
    entry.push(Check::below(
        "rho normalization residual",
        rho_norm,
        thresholds.rho_normalization,
    ));

    if let Some(oracle) = oracle {
        let quad = kernel.clone().with_mode(EvalMode::Quadrature);
        let values = grid.values();
        let table = quad.tabulate(
            crate::transforms::DensityKind::Rho,
            grid.s,
            grid.t,
            &values,
            &values,
        )?;
        let worst = table
            .rows
            .iter()
            .map(|r| {
                let exact = oracle.rho(r.s, r.x, r.t, r.y);
                ((r.value - exact) / exact).abs()
            })
            .fold(0.0f64, f64::max);
        entry.push(Check::below(
            "rho relative error against gaussian",
            worst,
            thresholds.density_residual,
        ));
    }
    Ok(entry)
}

/// Equilibrium utility under each alternative clock for a static model,
/// compared pairwise with common random numbers.
pub fn verify_static_v_invariance(
    model: &SignalModel,
    rule: &PricingRule,
    clocks: &[Clock],
    cfg: &SimConfig,
    thresholds: &Thresholds,
) -> Result<ReportEntry> {
    if model.kind != ModelKind::Static {
        return Err(invalid("model", "clock invariance applies to static models only"));
    }
    if clocks.len() < 2 {
        return Err(invalid("clocks", "need at least two clock choices"));
    }
    let mut entry = ReportEntry::new(TestName::StaticInvariance.as_str());
    let mut utilities = Vec::with_capacity(clocks.len());
    let mut labels = Vec::with_capacity(clocks.len());
    for (i, clock) in clocks.iter().enumerate() {
        let m = model.with_clock(clock.clone());
        let run = run_monte_carlo(&m, rule, &[Strategy::equilibrium()], cfg)?;
        if run.exclusion_rate() > 0.0 {
            entry.warn(format!(
                "clock {}: {} paths excluded",
                i + 1,
                run.paths.len() - run.n_valid()
            ));
        }
        let per_path: Vec<(usize, f64)> = run
            .valid_paths()
            .map(|p| (p.index, utility(run.gamma, terminal_wealth(&p.outcomes[0]))))
            .collect();
        utilities.push(per_path);
        labels.push(clock_label(clock));
        // the pricing rule is the same object for every clock
        entry.push(Check::flag(
            format!("{} keeps the weighting function", labels[i]),
            rule.matches_model(&m),
        ));
    }
    let k = thresholds.se_multiplier;
    for i in 0..clocks.len() {
        for j in i + 1..clocks.len() {
            // pair only paths valid under both clocks
            let (mut a, mut b) = (Vec::new(), Vec::new());
            let mut q = utilities[j].iter().peekable();
            for &(idx, u) in &utilities[i] {
                while q.peek().is_some_and(|&&(jdx, _)| jdx < idx) {
                    q.next();
                }
                if let Some(&&(jdx, v)) = q.peek() {
                    if jdx == idx {
                        a.push(u);
                        b.push(v);
                    }
                }
            }
            let d = paired_difference(&a, &b);
            let se = if d.se > 0.0 { d.se } else { 0.0 };
            entry.push(Check::within(
                format!("utility {} minus {}", labels[i], labels[j]),
                d.mean,
                0.0,
                k * se,
            ).with_se(se));
        }
    }
    Ok(entry)
}

fn clock_label(clock: &Clock) -> String {
    match clock {
        Clock::Static => "V=1".into(),
        Clock::Linear { v0, slope } => format!("V={v0}+{slope}t"),
        Clock::Deterministic { .. } => "V=deterministic".into(),
        Clock::Custom { label, .. } => format!("V={label}"),
    }
}

/// Simulates the equilibrium, the standard deviations and the controls once
/// and runs every selected test on the shared paths.
pub fn run_battery(
    model: &SignalModel,
    rule: &PricingRule,
    oracle: Option<&GaussianOracle>,
    cfg: &BatteryConfig,
) -> Result<VerificationReport> {
    let th = &cfg.thresholds;
    let mut report = VerificationReport::default();
    let needs_run = [
        TestName::RationalPricing,
        TestName::OrderFlow,
        TestName::Optimality,
        TestName::Admissibility,
    ]
    .into_iter()
    .any(|t| cfg.selected(t));

    let run = if needs_run {
        let mut strategies = vec![Strategy::equilibrium()];
        strategies.extend(Strategy::standard_deviations());
        let sim = SimConfig {
            checkpoints: battery_checkpoints(&cfg.grid, &cfg.pricing_times, cfg.windows),
            ..SimConfig::new(cfg.n_paths, cfg.grid.clone(), cfg.seed).with_scheme(cfg.scheme)
        };
        Some(run_monte_carlo(model, rule, &strategies, &sim)?)
    } else {
        None
    };
    let provenance = cfg.provenance(cfg.n_paths, cfg.grid.steps());
    let finish = |mut entry: ReportEntry, run: &MonteCarloRun| {
        for w in &run.warnings {
            entry.warn(w.clone());
        }
        let rate = run.exclusion_rate();
        if rate > 0.0 {
            entry.warn(format!("{:.4}% of paths excluded after path errors", 100.0 * rate));
        }
        entry.push(Check::below("path exclusion rate", rate, 1e-3));
        entry.with_provenance(provenance.clone())
    };

    for test in TestName::ALL {
        if !cfg.selected(test) {
            continue;
        }
        let entry = match test {
            TestName::RationalPricing | TestName::OrderFlow | TestName::Optimality | TestName::Admissibility => {
                let run = run.as_ref().expect("simulated above");
                let mut head = ReportEntry::new(test.as_str());
                require_paths(&mut head, test, run.n_valid(), cfg.allow_small_samples)?;
                let mut entry = match test {
                    TestName::RationalPricing => {
                        verify_rational_pricing(run, &cfg.pricing_times, cfg.bins, th)?
                    }
                    TestName::OrderFlow => verify_order_flow_brownian(run, cfg.windows, th)?,
                    TestName::Optimality => verify_optimality(run, rule, th)?,
                    _ => verify_admissibility(run, th)?,
                };
                for w in head.warnings {
                    entry.warn(w);
                }
                finish(entry, run)
            }
            TestName::Bridge => {
                let mut head = ReportEntry::new(test.as_str());
                require_paths(&mut head, test, cfg.bridge_paths, cfg.allow_small_samples)?;
                let mut entry = verify_bridge_convergence(
                    model,
                    rule,
                    &cfg.bridge_epsilons,
                    cfg.bridge_paths,
                    cfg.bridge_steps,
                    cfg.seed,
                    cfg.scheme,
                    th,
                )?;
                for w in head.warnings {
                    entry.warn(w);
                }
                entry.with_provenance(cfg.provenance(cfg.bridge_paths, cfg.bridge_steps))
            }
            TestName::Density => {
                let kernel = BridgeKernel::new(model.clone());
                verify_density_identities(&kernel, oracle, &cfg.density_grid, th)?
                    .with_provenance(Provenance {
                        config_hash: cfg.config_hash.clone(),
                        ..Provenance::default()
                    })
            }
            TestName::StaticInvariance => {
                if model.kind != ModelKind::Static {
                    if cfg.only.contains(&test) {
                        return Err(invalid(
                            "only",
                            "static_invariance needs a static model",
                        ));
                    }
                    continue;
                }
                let mut head = ReportEntry::new(test.as_str());
                require_paths(&mut head, test, cfg.n_paths, cfg.allow_small_samples)?;
                let sim = SimConfig {
                    checkpoints: vec![0.0],
                    ..SimConfig::new(cfg.n_paths, cfg.grid.clone(), cfg.seed).with_scheme(cfg.scheme)
                };
                let mut entry = verify_static_v_invariance(model, rule, &cfg.static_clocks, &sim, th)?;
                for w in head.warnings {
                    entry.warn(w);
                }
                entry.with_provenance(provenance.clone())
            }
        };
        report.push(entry);
    }
    Ok(report)
}
