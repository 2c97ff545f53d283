//! Example signal families and the assumption validator.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{linear_sigma_energy, Clock, ModelKind, PricingRule, SignalModel, Surface};
use crate::report::{Check, ReportEntry, VerificationReport};
use crate::transforms::BridgeKernel;

/// Gaussian signal `dZ = Sigma(t) d beta`, `Z_0 ~ N(0, q)`, with
/// `Sigma(t) = sigma0 + sigma1 t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeterministicVolSpec {
    pub gamma: f64,
    pub q: f64,
    pub sigma0: f64,
    #[serde(default)]
    pub sigma1: f64,
}

impl Default for DeterministicVolSpec {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            q: 0.01,
            sigma0: 0.1,
            sigma1: 0.0,
        }
    }
}

impl DeterministicVolSpec {
    pub fn big_sigma(&self, t: f64) -> f64 {
        self.sigma0 + self.sigma1 * t
    }

    /// `int_0^t Sigma^2`.
    pub fn energy(&self, t: f64) -> f64 {
        linear_sigma_energy(self.sigma0, self.sigma1, t)
    }

    /// `C = (-gamma + sqrt(gamma^2 + 4 / (q + int_0^1 Sigma^2))) / 2`.
    pub fn c(&self) -> f64 {
        let s = self.q + self.energy(1.0);
        0.5 * (-self.gamma + (self.gamma * self.gamma + 4.0 / s).sqrt())
    }
}

/// Closed forms available for the Gaussian family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOracle {
    pub gamma: f64,
    pub c: f64,
}

impl GaussianOracle {
    fn d(&self, t: f64) -> f64 {
        self.gamma * t + self.c
    }

    /// Variance of `eta_t - eta_s`.
    pub fn g(&self, s: f64, t: f64) -> f64 {
        (t - s) / (self.d(s) * self.d(t))
    }

    pub fn rho(&self, s: f64, y: f64, t: f64, z: f64) -> f64 {
        let var = self.g(s, t);
        (-(z - y).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
    }

    pub fn v(&self, t: f64, x: f64) -> f64 {
        self.d(t) * x
    }

    pub fn lambda(&self, t: f64, y: f64) -> f64 {
        y / self.d(t)
    }

    pub fn u(&self, t: f64, x: f64) -> f64 {
        (self.gamma * x * x / (2.0 * self.d(t)) - 0.5 * (self.d(t) / self.c).ln()).exp()
    }

    /// `Psi^a(t, x)` for `c = 0`.
    pub fn psi(&self, a: f64, t: f64, x: f64) -> f64 {
        self.d(t) * (x - a).powi(2) / 2.0
            + ((self.gamma + self.c) / self.d(t)).ln() / (2.0 * self.gamma)
    }

    /// Equilibrium trading rate given the clock value `big_v = V(t)`.
    pub fn drift(&self, t: f64, big_v: f64, xi: f64, z: f64) -> f64 {
        (z - xi) * self.d(big_v) / (big_v - t)
    }
}

/// `t` grid used for the standing inequality.
const STANDING_GRID: usize = 1000;
/// Margin for the excluded terminal value of `Sigma`.
const SIGMA_EXCLUSION_MARGIN: f64 = 1e-9;

pub fn build_deterministic(
    spec: &DeterministicVolSpec,
) -> Result<(SignalModel, PricingRule, GaussianOracle)> {
    let DeterministicVolSpec {
        gamma,
        q,
        sigma0,
        sigma1,
    } = *spec;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    if !(q >= 0.0) {
        return Err(invalid(
            "q",
            format!("initial variance must be >= 0, got {q}"),
        ));
    }
    if !(sigma0 > 0.0 && sigma0 + sigma1 > 0.0) {
        return Err(Error::AssumptionViolation(format!(
            "Sigma(t) = {sigma0} + {sigma1} t must stay positive on [0, 1]"
        )));
    }
    let c = spec.c();
    if !(c > 0.0) {
        return Err(Error::AssumptionViolation(format!(
            "C = {c} must be positive"
        )));
    }
    for i in 0..STANDING_GRID {
        let t = i as f64 / STANDING_GRID as f64;
        let lhs = q + spec.energy(t);
        let rhs = t / (c * (c + gamma * t));
        if !(lhs > rhs) {
            return Err(Error::AssumptionViolation(format!(
                "standing inequality q + int Sigma^2 > t/(C(C + gamma t)) fails at t = {t}: {lhs} <= {rhs}"
            )));
        }
    }
    if !(1.0 - gamma * q * c > 0.0) {
        return Err(Error::AssumptionViolation(format!(
            "1 - gamma q C = {} must be positive",
            1.0 - gamma * q * c
        )));
    }
    let excluded = 1.0 / c - gamma * q - gamma * spec.energy(1.0);
    if (spec.big_sigma(1.0) - excluded).abs() <= SIGMA_EXCLUSION_MARGIN {
        return Err(Error::AssumptionViolation(format!(
            "Sigma(1) = {} coincides with 1/C - gamma q - gamma int Sigma^2 = {excluded}",
            spec.big_sigma(1.0)
        )));
    }
    let surface = Surface::InverseLinear {
        slope: gamma,
        offset: c,
    };
    let model = SignalModel {
        gamma,
        kind: ModelKind::DeterministicVol,
        interval: surface.interval(),
        surface,
        clock: Clock::Deterministic {
            gamma,
            c,
            q,
            sigma0,
            sigma1,
        },
    };
    let rule = model.equilibrium_rule();
    Ok((model, rule, GaussianOracle { gamma, c }))
}

/// Signal with base volatility `-gamma x^2 + (gamma b / delta) x + gamma d / delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticVolSpec {
    pub gamma: f64,
    pub delta: f64,
    pub b: f64,
    pub d: f64,
}

impl Default for QuadraticVolSpec {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            delta: 0.5,
            b: 0.0,
            d: 0.5,
        }
    }
}

impl QuadraticVolSpec {
    /// `t0 = 1 - delta^2 / gamma^2`, the clock value at time 0.
    pub fn t0(&self) -> f64 {
        1.0 - self.delta * self.delta / (self.gamma * self.gamma)
    }
}

pub fn build_quadratic(spec: &QuadraticVolSpec) -> Result<(SignalModel, PricingRule)> {
    let QuadraticVolSpec { gamma, delta, b, d } = *spec;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    if !(delta != 0.0 && delta.abs() < gamma) {
        return Err(Error::AssumptionViolation(format!(
            "need 0 < |delta| < gamma, got delta = {delta}, gamma = {gamma}"
        )));
    }
    if !(d / delta > 0.0) {
        return Err(Error::AssumptionViolation(format!(
            "need d / delta > 0, got {}",
            d / delta
        )));
    }
    let surface = Surface::Quadratic {
        curvature: gamma,
        linear: gamma * b / delta,
        constant: gamma * d / delta,
    };
    let ratio = delta * delta / (gamma * gamma);
    let model = SignalModel {
        gamma,
        kind: ModelKind::Quadratic,
        interval: surface.interval(),
        surface,
        clock: Clock::Linear {
            v0: 1.0 - ratio,
            slope: ratio,
        },
    };
    let rule = model.equilibrium_rule();
    Ok((model, rule))
}

/// Static signal: the insider learns `eta_1` at time 0.
#[derive(Debug, Clone)]
pub struct StaticSpec {
    pub gamma: f64,
    pub base: Surface,
}

impl StaticSpec {
    /// Base volatility `1/(gamma t + offset)`.
    pub fn inverse_linear(gamma: f64, offset: f64) -> Self {
        Self {
            gamma,
            base: Surface::InverseLinear {
                slope: gamma,
                offset,
            },
        }
    }
}

/// Builds the static model; `clock` replaces the default `V = 1` by another
/// admissible time change with `V(1) = 1`.
pub fn build_static(spec: &StaticSpec, clock: Option<Clock>) -> Result<(SignalModel, PricingRule)> {
    let gamma = spec.gamma;
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    let interval = spec.base.interval();
    // base surface must solve the equilibrium PDE
    for i in 0..=20 {
        let t = i as f64 / 20.0;
        for x in sample_states(interval, 9) {
            let a = spec.base.value(t, x);
            let r = spec.base.pde_residual(gamma, t, x);
            if !(a > 0.0) || !(r.abs() < 1e-6) {
                return Err(Error::AssumptionViolation(format!(
                    "base volatility fails at (t, x) = ({t}, {x}): a = {a}, PDE residual = {r}"
                )));
            }
        }
    }
    let model = SignalModel {
        gamma,
        kind: ModelKind::Static,
        surface: spec.base.clone(),
        clock: clock.unwrap_or(Clock::Static),
        interval,
    };
    let rule = model.equilibrium_rule();
    Ok((model, rule))
}

/// Evenly spread interior states; `[-4, 4]` stands in for an unbounded side.
pub(crate) fn sample_states(iv: crate::model::StateInterval, n: usize) -> Vec<f64> {
    let lo = if iv.lower.is_finite() { iv.lower } else { -4.0 };
    let hi = if iv.upper.is_finite() { iv.upper } else { 4.0 };
    (0..n)
        .map(|j| lo + (hi - lo) * (j as f64 + 0.5) / n as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionOptions {
    /// Points per axis of the validation grid.
    pub resolution: usize,
    /// PDE residual tolerance; defaults to `1e-10` for closed-form surfaces and
    /// `1e-5` for finite-difference ones.
    pub pde_tol: Option<f64>,
    /// `|v|` beyond this counts as "unbounded range".
    pub range_bound: f64,
    pub epsilon: f64,
}

impl Default for AssumptionOptions {
    fn default() -> Self {
        Self {
            resolution: 50,
            pde_tol: None,
            range_bound: 1e6,
            epsilon: crate::grid::DEFAULT_EPSILON,
        }
    }
}

fn pde_entry(
    name: &str,
    surface: &Surface,
    gamma: f64,
    iv: crate::model::StateInterval,
    opts: &AssumptionOptions,
) -> ReportEntry {
    let tol = opts.pde_tol.unwrap_or(if surface.has_closed_forms() {
        1e-10
    } else {
        1e-5
    });
    let n = opts.resolution.max(2);
    let mut min_value = f64::INFINITY;
    let mut max_residual: f64 = 0.0;
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        for x in sample_states(iv, n) {
            min_value = min_value.min(surface.value(t, x));
            let r = surface.pde_residual(gamma, t, x);
            max_residual = max_residual.max(if r.is_nan() { f64::INFINITY } else { r.abs() });
        }
    }
    let mut e = ReportEntry::new(name);
    e.push(Check::above("min value", min_value, 0.0));
    e.push(Check::below("max |f_t/f^2 + f_xx/2 + gamma|", max_residual, tol).with_se(max_residual));
    e
}

/// `D^2 Lambda ln Lambda` at `t = 1 - 2^-k`, `k = 4..=24`.
pub fn limit_sequence(clock: &Clock) -> Result<Vec<(u32, f64)>> {
    (4..=24)
        .map(|k| {
            let t = 1.0 - 2f64.powi(-(k as i32));
            let (d, lam) = clock.limit_terms(t)?;
            Ok((k, d * d * lam * lam.ln()))
        })
        .collect()
}

/// Runs the model and pricing-rule conditions; failures become report
/// entries rather than errors.
pub fn validate_assumptions(
    model: &SignalModel,
    rule: &PricingRule,
    opts: &AssumptionOptions,
) -> VerificationReport {
    let mut report = VerificationReport::default();
    let n = opts.resolution.max(2);
    let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();

    report.push(pde_entry(
        "signal_volatility",
        &model.surface,
        model.gamma,
        model.interval,
        opts,
    ));

    // the range of v(t, .) must be all of R
    let kernel = BridgeKernel::new(model.clone());
    let mut range = ReportEntry::new("state_range");
    let analytic = model.surface.has_closed_forms();
    let mut smallest: f64 = f64::INFINITY;
    let mut failure = None;
    for &t in &[0.0, 0.5, 1.0] {
        for side in [-1.0f64, 1.0] {
            let end = if side < 0.0 {
                model.interval.lower
            } else {
                model.interval.upper
            };
            let mut best: f64 = 0.0;
            for k in 0..60 {
                let x = if end.is_finite() {
                    end * (1.0 - 2f64.powi(-(k + 1)))
                } else {
                    side * 2f64.powi(k)
                };
                match kernel.v(t, x) {
                    Ok(v) => best = best.max(v.abs() * (v.signum() * side).max(0.0)),
                    Err(e) => {
                        failure.get_or_insert(e.to_string());
                        break;
                    }
                }
                if best > opts.range_bound {
                    break;
                }
            }
            smallest = smallest.min(best);
        }
    }
    if let Some(f) = failure {
        range.warn(format!("v evaluation failed near the boundary: {f}"));
    }
    if analytic {
        range.push(Check::flag("v diverges at both ends (closed form)", true));
        range.warn(format!("smallest |v| reached numerically: {smallest:.3e}"));
    } else {
        range.push(Check::above(
            "smallest |v| near the boundary",
            smallest,
            opts.range_bound,
        ));
    }
    report.push(range);

    let mut sep = ReportEntry::new("signal_speed");
    if model.clock.is_static() {
        sep.warn("skipped: static signal has zero speed by construction");
    } else {
        let min_sigma = times
            .iter()
            .map(|&t| model.sigma(t))
            .fold(f64::INFINITY, f64::min);
        sep.push(Check::above("min sigma(t)", min_sigma, 0.0));
    }
    report.push(sep);

    let mut clock = ReportEntry::new("time_change");
    clock.push(Check::below(
        "|V(1) - 1|",
        (model.v_clock(1.0) - 1.0).abs(),
        1e-9,
    ));
    let last = 1.0 - opts.epsilon;
    let min_gap = times
        .iter()
        .map(|&t| t.min(last))
        .chain(std::iter::once(last))
        .map(|t| model.clock.gap(t))
        .fold(f64::INFINITY, f64::min);
    clock.push(Check::above("min V(t) - t on [0, 1 - eps]", min_gap, 0.0));
    let v0 = model.v_clock(0.0);
    clock.push(Check::at_least("V(0)", v0, 0.0));
    report.push(clock);

    let mut limit = ReportEntry::new("limit_condition");
    match limit_sequence(&model.clock) {
        Ok(seq) => {
            let values: Vec<f64> = seq.iter().map(|p| p.1.abs()).collect();
            let decreasing = values.windows(2).all(|w| w[1] < w[0]);
            limit.push(Check::flag(
                "|D^2 Lambda ln Lambda| decreasing over k = 4..24",
                decreasing,
            ));
            let final_value = seq.last().map(|p| p.1.abs()).unwrap_or(f64::NAN);
            limit.push(Check::below(
                "|D^2 Lambda ln Lambda| at k = 24",
                final_value,
                1e-3,
            ));
        }
        Err(e) => {
            limit.push(Check::flag("limit terms computable", false));
            limit.warn(e.to_string());
        }
    }
    report.push(limit);

    report.push(pde_entry(
        "pricing_rule",
        &rule.surface,
        model.gamma,
        model.interval,
        opts,
    ));
    report
}
