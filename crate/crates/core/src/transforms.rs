//! Transform stack `v`, `lambda`, `u`, the conditioned densities `p` and `rho`,
//! the price-impact map `K_w` and the insider's value function `Psi`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{PricingRule, SignalModel, StateInterval, Surface};
use crate::numeric::{integrate, integrate_fallible, invert_increasing, QuadOptions, RootOptions};

/// Log-density exponent beyond which a density is treated as underflowed
/// (`exp(-690) ~ 1e-300`).
pub const UNDERFLOW_EXPONENT: f64 = 690.0;

/// Whether transforms use the surface's elementary antiderivatives or
/// generic quadrature and root-finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    ClosedForm,
    Quadrature,
}

/// `x -> int_0^x dy/f(t,y) + int_0^t f_x(s,0)/2 ds` and its inverse for one surface.
#[derive(Debug, Clone, Copy)]
struct Coordinates<'a> {
    surface: &'a Surface,
    interval: StateInterval,
    mode: EvalMode,
}

impl<'a> Coordinates<'a> {
    fn closed(&self) -> bool {
        self.mode == EvalMode::ClosedForm && self.surface.has_closed_forms()
    }

    fn check(&self, t: f64, x: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::DomainViolation(format!("time {t} outside [0, 1]")));
        }
        if !self.interval.contains(x) {
            return Err(Error::DomainViolation(format!(
                "state {x} outside ({}, {})",
                self.interval.lower, self.interval.upper
            )));
        }
        Ok(())
    }

    fn forward(&self, t: f64, x: f64) -> Result<f64> {
        self.check(t, x)?;
        if self.closed() {
            if let (Some(a), Some(b)) = (
                self.surface.inverse_integral(t, x),
                self.surface.slope_integral(t),
            ) {
                return Ok(a + b);
            }
        }
        let s = self.surface;
        let space = integrate(|y| 1.0 / s.value(t, y), 0.0, x, QuadOptions::tight())?.value;
        let time = integrate(|r| 0.5 * s.dx(r, 0.0), 0.0, t, QuadOptions::tight())?.value;
        Ok(space + time)
    }

    fn inverse(&self, t: f64, y: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::DomainViolation(format!("time {t} outside [0, 1]")));
        }
        if self.closed() {
            if let Some(x) = self.surface.inverse_transform(t, y) {
                return Ok(x);
            }
        }
        let offset = if self.closed() {
            self.surface.slope_integral(t)
        } else {
            None
        };
        let s = self.surface;
        let time = match offset {
            Some(o) => o,
            None => integrate(|r| 0.5 * s.dx(r, 0.0), 0.0, t, QuadOptions::tight())?.value,
        };
        let iv = self.interval;
        invert_increasing(
            |x| Ok(integrate(|u| 1.0 / s.value(t, u), 0.0, x, QuadOptions::tight())?.value),
            |x| Ok(1.0 / s.value(t, x)),
            y - time,
            iv.lower,
            iv.upper,
            RootOptions::default(),
        )
    }
}

/// Standard Brownian transition density from `(s, x)` to `(t, y)`.
pub fn heat_kernel(s: f64, x: f64, t: f64, y: f64) -> f64 {
    let var = t - s;
    (-(y - x).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
}

/// The transform stack built from a signal model.
#[derive(Debug, Clone)]
pub struct BridgeKernel {
    model: SignalModel,
    mode: EvalMode,
    flat_h: bool,
}

impl BridgeKernel {
    /// Kernel using closed forms whenever the model's surface has them.
    pub fn new(model: SignalModel) -> Self {
        Self {
            model,
            mode: EvalMode::ClosedForm,
            flat_h: false,
        }
    }

    pub fn with_mode(mut self, mode: EvalMode) -> Self {
        self.mode = mode;
        self
    }

    /// Replaces the h-function by `u = 1`, so `p` reduces to the heat kernel.
    pub fn with_flat_h(mut self) -> Self {
        self.flat_h = true;
        self
    }

    pub fn model(&self) -> &SignalModel {
        &self.model
    }

    pub fn mode(&self) -> EvalMode {
        self.mode
    }

    fn coords(&self) -> Coordinates<'_> {
        Coordinates {
            surface: &self.model.surface,
            interval: self.model.interval,
            mode: self.mode,
        }
    }

    fn closed(&self) -> bool {
        self.coords().closed()
    }

    /// `v(t, x)`.
    pub fn v(&self, t: f64, x: f64) -> Result<f64> {
        self.coords().forward(t, x)
    }

    /// `lambda(t, y)`, the inverse of `v(t, .)`.
    pub fn lambda(&self, t: f64, y: f64) -> Result<f64> {
        self.coords().inverse(t, y)
    }

    fn h_time_integral(&self, t: f64) -> Result<f64> {
        let gamma = self.model.gamma;
        if self.closed() {
            if let Some(v) = self.model.surface.h_time_integral(gamma, t) {
                return Ok(v);
            }
        }
        let f = |s: f64| -> Result<f64> {
            let l0 = self.lambda(s, 0.0)?;
            let lx = self.model.a(s, l0);
            Ok(0.5 * gamma * lx + 0.5 * gamma * gamma * l0 * l0)
        };
        Ok(integrate_fallible(f, 0.0, t, QuadOptions::default())?.value)
    }

    /// `ln u(t, x)` with normalisation `u(0, 0) = 1`.
    pub fn log_u(&self, t: f64, x: f64) -> Result<f64> {
        if self.flat_h {
            return Ok(0.0);
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::DomainViolation(format!("time {t} outside [0, 1]")));
        }
        let gamma = self.model.gamma;
        let space = match self
            .closed()
            .then(|| self.model.surface.inverse_transform_integral(t, x))
            .flatten()
        {
            Some(v) => v,
            None => {
                integrate_fallible(|y| self.lambda(t, y), 0.0, x, QuadOptions::default())?.value
            }
        };
        Ok(gamma * space - self.h_time_integral(t)?)
    }

    pub fn u(&self, t: f64, x: f64) -> Result<f64> {
        Ok(self.log_u(t, x)?.exp())
    }

    /// `u_x / u = gamma * lambda(t, x)`.
    pub fn score_h(&self, t: f64, x: f64) -> Result<f64> {
        if self.flat_h {
            return Ok(0.0);
        }
        Ok(self.model.gamma * self.lambda(t, x)?)
    }

    /// `p(s, x; t, y) = u(t, y) Gamma(s, x, t, y) / u(s, x)`.
    pub fn density_p(&self, s: f64, x: f64, t: f64, y: f64) -> Result<f64> {
        if !(s < t) {
            return Err(invalid("s", format!("need s < t, got s = {s}, t = {t}")));
        }
        let log_g = -(y - x).powi(2) / (2.0 * (t - s)) - 0.5 * (2.0 * PI * (t - s)).ln();
        Ok((self.log_u(t, y)? - self.log_u(s, x)? + log_g).exp())
    }

    /// `x`-derivative of `p(s, x; t, y)`.
    pub fn density_p_dx(&self, s: f64, x: f64, t: f64, y: f64) -> Result<f64> {
        let p = self.density_p(s, x, t, y)?;
        Ok(p * ((y - x) / (t - s) - self.score_h(s, x)?))
    }

    /// Transition density of the base signal diffusion from `(s, y)` to `(t, z)`.
    pub fn density_rho(&self, s: f64, y: f64, t: f64, z: f64) -> Result<f64> {
        if !(s < t) {
            return Err(invalid("s", format!("need s < t, got s = {s}, t = {t}")));
        }
        let x0 = self.v(s, y)?;
        let x1 = self.v(t, z)?;
        Ok(self.density_p(s, x0, t, x1)? / self.model.a(t, z))
    }

    /// Tabulates `p` or `rho` on the product grid `xs x ys` for fixed `s < t`.
    pub fn tabulate(
        &self,
        kind: DensityKind,
        s: f64,
        t: f64,
        xs: &[f64],
        ys: &[f64],
    ) -> Result<DensityTable> {
        let mut rows = Vec::with_capacity(xs.len() * ys.len());
        for &x in xs {
            for &y in ys {
                let value = match kind {
                    DensityKind::P => self.density_p(s, x, t, y)?,
                    DensityKind::Rho => self.density_rho(s, x, t, y)?,
                };
                rows.push(DensityRow { s, x, t, y, value });
            }
        }
        Ok(DensityTable {
            kind,
            mode: self.mode,
            rows,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    P,
    Rho,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub s: f64,
    pub x: f64,
    pub t: f64,
    pub y: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub kind: DensityKind,
    pub mode: EvalMode,
    pub rows: Vec<DensityRow>,
}

/// Insider trading rate `w(t, xi) d/dy log rho(t, y, V(t), z)` at `y = xi`,
/// evaluated through the transformed coordinates.
pub fn equilibrium_drift(
    kernel: &BridgeKernel,
    rule: &PricingRule,
    t: f64,
    xi: f64,
    z: f64,
) -> Result<f64> {
    let model = kernel.model();
    let big_v = model.v_clock(t);
    let gap = model.clock.gap(t);
    if !(gap > 0.0) {
        return Err(Error::DomainViolation(format!(
            "drift needs V(t) > t, got V({t}) = {big_v}"
        )));
    }
    let r = kernel.v(t, xi)?;
    let target = kernel.v(big_v.min(1.0), z)?;
    let exponent = (target - r).powi(2) / (2.0 * gap);
    if exponent > UNDERFLOW_EXPONENT {
        return Err(Error::DensityUnderflow {
            t,
            log_density: -exponent,
        });
    }
    let score = (target - r) / gap - kernel.score_h(t, r)?;
    Ok(rule.w(t, xi) / model.a(t, xi) * score)
}

/// Same quantity as [`equilibrium_drift`] but by central differences of
/// `log rho` in its first state argument.
pub fn equilibrium_drift_via_density(
    kernel: &BridgeKernel,
    rule: &PricingRule,
    t: f64,
    xi: f64,
    z: f64,
    h: f64,
) -> Result<f64> {
    let big_v = kernel.model().v_clock(t);
    let lr = |y: f64| -> Result<f64> { Ok(kernel.density_rho(t, y, big_v, z)?.ln()) };
    let d = (lr(xi + h)? - lr(xi - h)?) / (2.0 * h);
    Ok(rule.w(t, xi) * d)
}

fn rule_coords(rule: &PricingRule) -> Coordinates<'_> {
    Coordinates {
        surface: &rule.surface,
        interval: rule.surface.interval(),
        mode: EvalMode::ClosedForm,
    }
}

/// `K_w(t, x) = int_0^x dy/w(t,y) + int_0^t w_x(s,0)/2 ds`.
pub fn kw_map(rule: &PricingRule, t: f64, x: f64) -> Result<f64> {
    rule_coords(rule).forward(t, x)
}

/// Inverse of [`kw_map`] in `x`.
pub fn kw_inverse(rule: &PricingRule, t: f64, k: f64) -> Result<f64> {
    let x = rule_coords(rule).inverse(t, k).map_err(|e| match e {
        Error::NoConvergence { .. } => Error::OutOfRange { t, value: k },
        other => other,
    })?;
    let iv = rule.surface.interval();
    if !iv.contains(x) {
        return Err(Error::OutOfRange { t, value: k });
    }
    Ok(x)
}

/// Price state after a block trade `dtheta` at time `t`.
pub fn jump_update(rule: &PricingRule, t: f64, xi: f64, dtheta: f64) -> Result<f64> {
    if dtheta == 0.0 {
        return Ok(xi);
    }
    kw_inverse(rule, t, kw_map(rule, t, xi)? + dtheta)
}

/// `int_{x0}^{x1} (u - m)/w(t, u) du`.
fn moment_integral(rule: &PricingRule, t: f64, m: f64, x0: f64, x1: f64) -> Result<f64> {
    if let Some(v) = rule.surface.moment_integral(t, m, x0, x1) {
        return Ok(v);
    }
    Ok(integrate(|u| (u - m) / rule.w(t, u), x0, x1, QuadOptions::tight())?.value)
}

/// `Psi^a(t, x) = int_{a-c}^x (u-(a-c))/w(t,u) du + 1/2 int_t^1 w(s, a-c) ds`.
pub fn psi(rule: &PricingRule, a: f64, t: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::DomainViolation(format!("time {t} outside [0, 1]")));
    }
    let m = a - rule.c;
    let iv = rule.surface.interval();
    if !iv.contains(m) || !iv.contains(x) {
        return Err(Error::DomainViolation(format!(
            "psi needs x = {x} and a - c = {m} inside ({}, {})",
            iv.lower, iv.upper
        )));
    }
    let space = moment_integral(rule, t, m, m, x)?;
    let time = match rule.surface.remaining_time_integral(t, m) {
        Some(v) => v,
        None => integrate(|s| rule.w(s, m), t, 1.0, QuadOptions::tight())?.value,
    };
    Ok(space + 0.5 * time)
}

/// Loss from a block trade relative to trading the same quantity continuously:
/// `int_{xi-}^{xi} (u + c - z1)/w du - (xi + c - z1) dtheta`; never positive.
pub fn jump_penalty(
    rule: &PricingRule,
    z1: f64,
    t: f64,
    xi_before: f64,
    xi_after: f64,
    dtheta: f64,
) -> Result<f64> {
    let m = z1 - rule.c;
    Ok(moment_integral(rule, t, m, xi_before, xi_after)? - (xi_after - m) * dtheta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Clock, ModelKind, StateInterval};

    fn golden() -> SignalModel {
        let c = (5f64.sqrt() - 1.0) / 2.0;
        SignalModel {
            gamma: 1.0,
            kind: ModelKind::DeterministicVol,
            surface: Surface::InverseLinear {
                slope: 1.0,
                offset: c,
            },
            clock: Clock::Deterministic {
                gamma: 1.0,
                c,
                q: 0.0,
                sigma0: 1.0,
                sigma1: 0.0,
            },
            interval: StateInterval::REAL_LINE,
        }
    }

    #[test]
    fn v_and_lambda_closed_forms() {
        let k = BridgeKernel::new(golden());
        assert!((k.v(0.0, 1.0).unwrap() - 0.618_034).abs() < 1e-6);
        assert!((k.lambda(1.0, 1.618_034).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(k.v(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(k.log_u(0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn quadrature_mode_matches_closed_forms() {
        let closed = BridgeKernel::new(golden());
        let quad = BridgeKernel::new(golden()).with_mode(EvalMode::Quadrature);
        for &(t, x) in &[(0.2, 0.7), (0.9, -1.3), (0.5, 0.0)] {
            assert!((closed.v(t, x).unwrap() - quad.v(t, x).unwrap()).abs() < 1e-12);
            let y = closed.v(t, x).unwrap();
            assert!((quad.lambda(t, y).unwrap() - x).abs() < 1e-11);
            let (a, b) = (closed.log_u(t, x).unwrap(), quad.log_u(t, x).unwrap());
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn flat_h_reduces_to_heat_kernel() {
        let k = BridgeKernel::new(golden()).with_flat_h();
        let p = k.density_p(0.0, 0.0, 1.0, 0.0).unwrap();
        assert!((p - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn density_rejects_reversed_times() {
        let k = BridgeKernel::new(golden());
        assert!(matches!(
            k.density_p(0.5, 0.0, 0.5, 0.0),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn drift_vanishes_at_the_signal() {
        let (m, _, _) =
            crate::signals::build_deterministic(&crate::signals::DeterministicVolSpec::default())
                .unwrap();
        let rule = m.equilibrium_rule();
        let k = BridgeKernel::new(m);
        assert!(equilibrium_drift(&k, &rule, 0.3, 0.4, 0.4).unwrap().abs() < 1e-14);
    }

    #[test]
    fn kw_round_trip_and_additivity() {
        let rule = golden().equilibrium_rule();
        let k = kw_map(&rule, 0.3, 0.5).unwrap();
        assert!((kw_inverse(&rule, 0.3, k).unwrap() - 0.5).abs() < 1e-14);
        assert_eq!(jump_update(&rule, 0.3, 0.5, 0.0).unwrap(), 0.5);
        let two = jump_update(&rule, 0.3, jump_update(&rule, 0.3, 0.1, 0.2).unwrap(), 0.7).unwrap();
        let one = jump_update(&rule, 0.3, 0.1, 0.9).unwrap();
        assert!((two - one).abs() < 1e-14);
    }

    #[test]
    fn kw_inverse_out_of_range_on_bounded_interval() {
        // atan-like K_w: w = 1 + x^2 is not a surface we ship, so use a custom one
        let rule = PricingRule {
            surface: Surface::Custom(crate::model::CustomSurface {
                label: "1+x^2".into(),
                value: std::sync::Arc::new(|_, x| 1.0 + x * x),
                dx: Some(std::sync::Arc::new(|_, x| 2.0 * x)),
                dxx: None,
                dt: None,
                interval: StateInterval::REAL_LINE,
            }),
            c: 0.0,
        };
        assert!(matches!(
            kw_inverse(&rule, 0.0, 5.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn psi_closed_form_value() {
        let rule = golden().equilibrium_rule();
        let v = psi(&rule, 0.3, 0.0, 0.3).unwrap();
        assert!((v - 0.481_212).abs() < 1e-6, "{v}");
    }

    #[test]
    fn penalty_is_zero_without_a_jump() {
        let rule = golden().equilibrium_rule();
        assert_eq!(jump_penalty(&rule, 0.2, 0.5, 0.1, 0.1, 0.0).unwrap(), 0.0);
    }
}
