//! Signal models, time changes and pricing rules.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{derivative_in_window, integrate, QuadOptions};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type FieldFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Open state interval `(lower, upper)`; bounds may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateInterval {
    pub lower: f64,
    pub upper: f64,
}

impl StateInterval {
    pub const REAL_LINE: StateInterval = StateInterval {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < 0.0 && upper > 0.0) {
            return Err(invalid(
                "interval",
                format!("({lower}, {upper}) must contain 0 in its interior"),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x < self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.is_finite() && self.upper.is_finite()
    }
}

/// User-supplied surface `f(t, x)`. Missing derivatives are taken by central
/// differences with step `1e-5 (1 + |x|)`.
#[derive(Clone)]
pub struct CustomSurface {
    pub label: String,
    pub value: FieldFn,
    pub dx: Option<FieldFn>,
    pub dxx: Option<FieldFn>,
    pub dt: Option<FieldFn>,
    pub interval: StateInterval,
}

/// A positive function on `[0, 1] x I`, used both as the signal volatility `a`
/// and as the price-impact weighting `w`.
#[derive(Clone)]
pub enum Surface {
    /// `1 / (slope * t + offset)`.
    InverseLinear {
        slope: f64,
        offset: f64,
    },
    /// `-curvature * x^2 + linear * x + constant`, on the open interval between its roots.
    Quadratic {
        curvature: f64,
        linear: f64,
        constant: f64,
    },
    Constant(f64),
    Custom(CustomSurface),
}

impl fmt::Debug for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Surface::InverseLinear { slope, offset } => f
                .debug_struct("InverseLinear")
                .field("slope", slope)
                .field("offset", offset)
                .finish(),
            Surface::Quadratic {
                curvature,
                linear,
                constant,
            } => f
                .debug_struct("Quadratic")
                .field("curvature", curvature)
                .field("linear", linear)
                .field("constant", constant)
                .finish(),
            Surface::Constant(c) => f.debug_tuple("Constant").field(c).finish(),
            Surface::Custom(c) => f.debug_tuple("Custom").field(&c.label).finish(),
        }
    }
}

impl PartialEq for Surface {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                Surface::InverseLinear { slope, offset },
                Surface::InverseLinear {
                    slope: s2,
                    offset: o2,
                },
            ) => slope == s2 && offset == o2,
            (
                Surface::Quadratic {
                    curvature,
                    linear,
                    constant,
                },
                Surface::Quadratic {
                    curvature: c2,
                    linear: l2,
                    constant: k2,
                },
            ) => curvature == c2 && linear == l2 && constant == k2,
            (Surface::Constant(a), Surface::Constant(b)) => a == b,
            (Surface::Custom(a), Surface::Custom(b)) => Arc::ptr_eq(&a.value, &b.value),
            _ => false,
        }
    }
}

/// Roots `r1 < 0 < r2` of a quadratic surface, and `k = sqrt(disc)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QuadraticRoots {
    pub r1: f64,
    pub r2: f64,
    pub k: f64,
}

fn fd_step(x: f64) -> f64 {
    1e-5 * (1.0 + x.abs())
}

impl Surface {
    pub fn value(&self, t: f64, x: f64) -> f64 {
        match self {
            Surface::InverseLinear { slope, offset } => 1.0 / (slope * t + offset),
            Surface::Quadratic {
                curvature,
                linear,
                constant,
            } => (-curvature * x + linear) * x + constant,
            Surface::Constant(c) => *c,
            Surface::Custom(c) => (c.value)(t, x),
        }
    }

    pub fn dx(&self, t: f64, x: f64) -> f64 {
        match self {
            Surface::InverseLinear { .. } | Surface::Constant(_) => 0.0,
            Surface::Quadratic {
                curvature, linear, ..
            } => -2.0 * curvature * x + linear,
            Surface::Custom(c) => match &c.dx {
                Some(d) => d(t, x),
                None => {
                    let h = fd_step(x);
                    ((c.value)(t, x + h) - (c.value)(t, x - h)) / (2.0 * h)
                }
            },
        }
    }

    pub fn dxx(&self, t: f64, x: f64) -> f64 {
        match self {
            Surface::InverseLinear { .. } | Surface::Constant(_) => 0.0,
            Surface::Quadratic { curvature, .. } => -2.0 * curvature,
            Surface::Custom(c) => match &c.dxx {
                Some(d) => d(t, x),
                None => {
                    let h = fd_step(x).max(1e-4);
                    ((c.value)(t, x + h) - 2.0 * (c.value)(t, x) + (c.value)(t, x - h)) / (h * h)
                }
            },
        }
    }

    pub fn dt(&self, t: f64, x: f64) -> f64 {
        match self {
            Surface::InverseLinear { slope, offset } => {
                let d = slope * t + offset;
                -slope / (d * d)
            }
            Surface::Quadratic { .. } | Surface::Constant(_) => 0.0,
            Surface::Custom(c) => match &c.dt {
                Some(d) => d(t, x),
                None => derivative_in_window(|s| (c.value)(s, x), t, 1e-5, 0.0, 1.0),
            },
        }
    }

    /// `a_t / a^2 + a_xx / 2 + gamma`; zero when the surface solves the
    /// equilibrium PDE for risk aversion `gamma`.
    pub fn pde_residual(&self, gamma: f64, t: f64, x: f64) -> f64 {
        let a = self.value(t, x);
        self.dt(t, x) / (a * a) + 0.5 * self.dxx(t, x) + gamma
    }

    /// Natural state interval of the surface.
    pub fn interval(&self) -> StateInterval {
        match self {
            Surface::InverseLinear { .. } | Surface::Constant(_) => StateInterval::REAL_LINE,
            Surface::Quadratic { .. } => {
                let r = self.quadratic_roots().expect("validated quadratic surface");
                StateInterval {
                    lower: r.r1,
                    upper: r.r2,
                }
            }
            Surface::Custom(c) => c.interval,
        }
    }

    pub(crate) fn quadratic_roots(&self) -> Option<QuadraticRoots> {
        match self {
            Surface::Quadratic {
                curvature,
                linear,
                constant,
            } => {
                let disc = linear * linear + 4.0 * curvature * constant;
                if !(disc > 0.0) || *curvature <= 0.0 {
                    return None;
                }
                let k = disc.sqrt();
                Some(QuadraticRoots {
                    r1: (linear - k) / (2.0 * curvature),
                    r2: (linear + k) / (2.0 * curvature),
                    k,
                })
            }
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Surface::InverseLinear { slope, offset } => format!("1/({slope} t + {offset})"),
            Surface::Quadratic {
                curvature,
                linear,
                constant,
            } => format!("-{curvature} x^2 + {linear} x + {constant}"),
            Surface::Constant(c) => format!("{c}"),
            Surface::Custom(c) => c.label.clone(),
        }
    }

    pub fn has_closed_forms(&self) -> bool {
        !matches!(self, Surface::Custom(_))
    }

    // ---- closed-form building blocks; `None` means "use quadrature" ----

    /// `int_0^x dy / f(t, y)`.
    pub(crate) fn inverse_integral(&self, t: f64, x: f64) -> Option<f64> {
        match self {
            Surface::InverseLinear { slope, offset } => Some((slope * t + offset) * x),
            Surface::Constant(c) => Some(x / c),
            Surface::Quadratic { curvature, .. } => {
                let r = self.quadratic_roots()?;
                // 1/f = 1/(c (x - r1)(r2 - x)) and c (r2 - r1) = k
                let _ = curvature;
                Some(((x - r.r1) * r.r2 / ((-r.r1) * (r.r2 - x))).ln() / r.k)
            }
            Surface::Custom(_) => None,
        }
    }

    /// `int_0^t f_x(s, 0) / 2 ds`.
    pub(crate) fn slope_integral(&self, t: f64) -> Option<f64> {
        match self {
            Surface::InverseLinear { .. } | Surface::Constant(_) => Some(0.0),
            Surface::Quadratic { linear, .. } => Some(0.5 * linear * t),
            Surface::Custom(_) => None,
        }
    }

    /// Inverse in `x` of `inverse_integral(t, x) + slope_integral(t)`.
    pub(crate) fn inverse_transform(&self, t: f64, y: f64) -> Option<f64> {
        match self {
            Surface::InverseLinear { slope, offset } => Some(y / (slope * t + offset)),
            Surface::Constant(c) => Some(c * y),
            Surface::Quadratic { linear, .. } => {
                let r = self.quadratic_roots()?;
                let s = r.k * (y - 0.5 * linear * t);
                // x = r1 r2 (1 - e^s) / (r2 - r1 e^s), rearranged for large |s|
                Some(if s > 0.0 {
                    let e = (-s).exp();
                    r.r1 * r.r2 * (e - 1.0) / (r.r2 * e - r.r1)
                } else {
                    let e = s.exp();
                    r.r1 * r.r2 * (1.0 - e) / (r.r2 - r.r1 * e)
                })
            }
            Surface::Custom(_) => None,
        }
    }

    /// `int_0^x lambda(t, y) dy` where `lambda` is `inverse_transform`.
    pub(crate) fn inverse_transform_integral(&self, t: f64, x: f64) -> Option<f64> {
        match self {
            Surface::InverseLinear { slope, offset } => Some(0.5 * x * x / (slope * t + offset)),
            Surface::Constant(c) => Some(0.5 * c * x * x),
            Surface::Quadratic {
                curvature, linear, ..
            } => {
                let r = self.quadratic_roots()?;
                let m = 0.5 * linear * t;
                // L(y) = ln(r2 - r1 e^{k (y - m)}); integral = r1 x + (L(x) - L(0)) / curvature
                let big_l = |y: f64| {
                    let s = r.k * (y - m);
                    if s > 0.0 {
                        s + (r.r2 * (-s).exp() - r.r1).ln()
                    } else {
                        (r.r2 - r.r1 * s.exp()).ln()
                    }
                };
                Some(r.r1 * x + (big_l(x) - big_l(0.0)) / curvature)
            }
            Surface::Custom(_) => None,
        }
    }

    /// `int_0^t (gamma lambda_x(s, 0) / 2 + gamma^2 lambda(s, 0)^2 / 2) ds` when
    /// it has an elementary form.
    pub(crate) fn h_time_integral(&self, gamma: f64, t: f64) -> Option<f64> {
        match self {
            Surface::InverseLinear { slope, offset } => {
                // lambda(s, 0) = 0, lambda_x(s, 0) = 1 / (slope s + offset)
                Some(0.5 * gamma * ((slope * t + offset) / offset).ln() / slope)
            }
            Surface::Constant(c) => Some(0.5 * gamma * c * t),
            Surface::Quadratic {
                linear, constant, ..
            } if *linear == 0.0 => Some(0.5 * gamma * constant * t),
            _ => None,
        }
    }

    /// `int_{x0}^{x1} (u - m) / f(t, u) du`.
    pub(crate) fn moment_integral(&self, t: f64, m: f64, x0: f64, x1: f64) -> Option<f64> {
        match self {
            Surface::InverseLinear { slope, offset } => {
                let d = slope * t + offset;
                Some(0.5 * d * ((x1 - m).powi(2) - (x0 - m).powi(2)))
            }
            Surface::Constant(c) => Some(0.5 * ((x1 - m).powi(2) - (x0 - m).powi(2)) / c),
            Surface::Quadratic { curvature, .. } => {
                let r = self.quadratic_roots()?;
                let width = r.r2 - r.r1;
                let a = (r.r1 - m) / width;
                let b = (r.r2 - m) / width;
                let prim = |u: f64| (a * (u - r.r1).ln() - b * (r.r2 - u).ln()) / curvature;
                Some(prim(x1) - prim(x0))
            }
            Surface::Custom(_) => None,
        }
    }

    /// `int_t^1 f(s, x) ds`.
    pub(crate) fn remaining_time_integral(&self, t: f64, x: f64) -> Option<f64> {
        match self {
            Surface::InverseLinear { slope, offset } => {
                Some(((slope + offset) / (slope * t + offset)).ln() / slope)
            }
            Surface::Constant(c) => Some(c * (1.0 - t)),
            Surface::Quadratic { .. } => Some((1.0 - t) * self.value(t, x)),
            Surface::Custom(_) => None,
        }
    }
}

/// Time change `V(t)` and its speed `sigma(t) = sqrt(V'(t))`.
#[derive(Clone)]
pub enum Clock {
    /// Induced by a Gaussian signal `dZ = Sigma(t) d beta`, `Z_0 ~ N(0, q)` with
    /// `Sigma(t) = sigma0 + sigma1 t`.
    Deterministic {
        gamma: f64,
        c: f64,
        q: f64,
        sigma0: f64,
        sigma1: f64,
    },
    /// `V(t) = v0 + slope t`.
    Linear { v0: f64, slope: f64 },
    /// `V = 1`, `sigma = 0`: the whole signal is known at time 0.
    Static,
    Custom {
        label: String,
        v: ScalarFn,
        sigma: ScalarFn,
    },
}

impl fmt::Debug for Clock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clock::Deterministic {
                gamma,
                c,
                q,
                sigma0,
                sigma1,
            } => f
                .debug_struct("Deterministic")
                .field("gamma", gamma)
                .field("c", c)
                .field("q", q)
                .field("sigma0", sigma0)
                .field("sigma1", sigma1)
                .finish(),
            Clock::Linear { v0, slope } => f
                .debug_struct("Linear")
                .field("v0", v0)
                .field("slope", slope)
                .finish(),
            Clock::Static => f.write_str("Static"),
            Clock::Custom { label, .. } => f.debug_tuple("Custom").field(label).finish(),
        }
    }
}

/// `int_0^t (s0 + s1 s)^2 ds`.
pub(crate) fn linear_sigma_energy(sigma0: f64, sigma1: f64, t: f64) -> f64 {
    sigma0 * sigma0 * t + sigma0 * sigma1 * t * t + sigma1 * sigma1 * t * t * t / 3.0
}

impl Clock {
    fn deterministic_denominator(&self, t: f64) -> f64 {
        match self {
            Clock::Deterministic {
                gamma,
                c,
                q,
                sigma0,
                sigma1,
            } => 1.0 / c - gamma * q - gamma * linear_sigma_energy(*sigma0, *sigma1, t),
            _ => unreachable!("only defined for the deterministic clock"),
        }
    }

    pub fn v(&self, t: f64) -> f64 {
        match self {
            Clock::Deterministic { gamma, c, .. } => {
                1.0 / (gamma * self.deterministic_denominator(t)) - c / gamma
            }
            Clock::Linear { v0, slope } => v0 + slope * t,
            Clock::Static => 1.0,
            Clock::Custom { v, .. } => v(t),
        }
    }

    pub fn sigma(&self, t: f64) -> f64 {
        match self {
            Clock::Deterministic { sigma0, sigma1, .. } => {
                (sigma0 + sigma1 * t) / self.deterministic_denominator(t)
            }
            Clock::Linear { slope, .. } => slope.sqrt(),
            Clock::Static => 0.0,
            Clock::Custom { sigma, .. } => sigma(t),
        }
    }

    /// `V(t) - t`, arranged to keep relative accuracy as `t -> 1`.
    pub fn gap(&self, t: f64) -> f64 {
        let rest = 1.0 - t;
        match self {
            Clock::Deterministic {
                gamma,
                sigma0,
                sigma1,
                ..
            } => {
                // V(t) - 1 = -(int_t^1 Sigma^2) / (den(t) den(1))
                let tail = sigma0 * sigma0 * rest
                    + sigma0 * sigma1 * rest * (1.0 + t)
                    + sigma1 * sigma1 * rest * (1.0 + t + t * t) / 3.0;
                let d1 = self.deterministic_denominator(1.0);
                let dt = d1 + gamma * tail;
                rest - tail / (dt * d1)
            }
            Clock::Linear { v0, slope } => (v0 + slope - 1.0) + (1.0 - slope) * rest,
            Clock::Static => rest,
            Clock::Custom { v, .. } => v(t) - t,
        }
    }

    pub fn v0(&self) -> f64 {
        self.v(0.0)
    }

    pub fn is_static(&self) -> bool {
        matches!(self, Clock::Static)
    }

    /// `D(t) = exp(-int_0^t ds / (V(s) - s))` and
    /// `Lambda(t) = int_0^t (1 + sigma^2(s)) / D^2(s) ds`.
    pub fn limit_terms(&self, t: f64) -> Result<(f64, f64)> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::DomainViolation(format!(
                "limit terms need t in [0, 1), got {t}"
            )));
        }
        match self {
            Clock::Static => Ok((1.0 - t, t / (1.0 - t))),
            Clock::Linear { v0, slope } => {
                let b = slope - 1.0;
                if b.abs() < 1e-14 {
                    let d = (-t / v0).exp();
                    Ok((d, v0 * ((2.0 * t / v0).exp() - 1.0) * (1.0 + slope) / 2.0))
                } else {
                    let g = |s: f64| v0 + b * s;
                    let d = (g(t) / v0).powf(-1.0 / b);
                    let e = 2.0 / b;
                    let prim = |s: f64| g(s).powf(e + 1.0) / ((e + 1.0) * b);
                    let lam = (1.0 + slope) * v0.powf(-e) * (prim(t) - prim(0.0));
                    Ok((d, lam))
                }
            }
            _ => {
                // Panels [1 - 2^-j, 1 - 2^-(j+1)] keep both integrands well resolved
                // as t approaches 1.
                let opts = QuadOptions {
                    abs_tol: 0.0,
                    rel_tol: 1e-10,
                    ..QuadOptions::default()
                };
                let mut edges = vec![0.0];
                let mut j = 1;
                while 1.0 - 2f64.powi(-j) < t {
                    edges.push(1.0 - 2f64.powi(-j));
                    j += 1;
                }
                edges.push(t);
                let inv_gap = |r: f64| 1.0 / self.gap(r);
                let mut log_d = 0.0;
                let mut lam = 0.0;
                for w in edges.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    let base = log_d;
                    let mut inner_err = None;
                    let piece = integrate(
                        |s| match integrate(inv_gap, lo, s, opts) {
                            Ok(q) => (1.0 + self.sigma(s).powi(2)) * (2.0 * (q.value - base)).exp(),
                            Err(e) => {
                                inner_err.get_or_insert(e);
                                f64::NAN
                            }
                        },
                        lo,
                        hi,
                        QuadOptions {
                            rel_tol: 1e-9,
                            ..opts
                        },
                    );
                    if let Some(e) = inner_err {
                        return Err(e);
                    }
                    lam += piece?.value;
                    log_d -= integrate(inv_gap, lo, hi, opts)?.value;
                }
                Ok((log_d.exp(), lam))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DeterministicVol,
    Quadratic,
    Static,
    Custom,
}

/// The insider's signal: `Z_t = eta_{V(t)}` with `d eta = a(t, eta) d beta`.
#[derive(Debug, Clone)]
pub struct SignalModel {
    pub gamma: f64,
    pub kind: ModelKind,
    pub surface: Surface,
    pub clock: Clock,
    pub interval: StateInterval,
}

impl SignalModel {
    pub fn a(&self, t: f64, x: f64) -> f64 {
        self.surface.value(t, x)
    }

    pub fn v_clock(&self, t: f64) -> f64 {
        self.clock.v(t)
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.clock.sigma(t)
    }

    /// Equilibrium pricing rule `w = a`, `c = 0`.
    pub fn equilibrium_rule(&self) -> PricingRule {
        PricingRule {
            surface: self.surface.clone(),
            c: 0.0,
        }
    }

    /// Same base volatility with a different time change.
    pub fn with_clock(&self, clock: Clock) -> SignalModel {
        SignalModel {
            clock,
            ..self.clone()
        }
    }
}

/// Market maker's rule: `P = xi + c` with `d xi = w(t, xi) dY` between jumps.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingRule {
    pub surface: Surface,
    pub c: f64,
}

impl PricingRule {
    pub fn w(&self, t: f64, x: f64) -> f64 {
        self.surface.value(t, x)
    }

    /// True when `w` is the model's own volatility surface.
    pub fn matches_model(&self, model: &SignalModel) -> bool {
        self.surface == model.surface
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_diff, DiffOrder};

    fn quad() -> Surface {
        Surface::Quadratic {
            curvature: 1.0,
            linear: 0.3,
            constant: 1.2,
        }
    }

    #[test]
    fn closed_derivatives_match_differences() {
        let all = (f64::NEG_INFINITY, f64::INFINITY);
        for s in [
            Surface::InverseLinear {
                slope: 1.0,
                offset: 0.6,
            },
            quad(),
        ] {
            for &(t, x) in &[(0.2, 0.1), (0.7, -0.4)] {
                let dx = finite_diff(|y| s.value(t, y), x, DiffOrder::First, 1e-5, all).unwrap();
                let dxx = finite_diff(|y| s.value(t, y), x, DiffOrder::Second, 1e-4, all).unwrap();
                let dt = finite_diff(|r| s.value(r, x), t, DiffOrder::First, 1e-5, all).unwrap();
                assert!((dx - s.dx(t, x)).abs() < 1e-8);
                assert!((dxx - s.dxx(t, x)).abs() < 1e-5);
                assert!((dt - s.dt(t, x)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn custom_surface_falls_back_to_differences() {
        let s = Surface::Custom(CustomSurface {
            label: "1/(t+2)".into(),
            value: Arc::new(|t, _| 1.0 / (t + 2.0)),
            dx: None,
            dxx: None,
            dt: None,
            interval: StateInterval::REAL_LINE,
        });
        assert!((s.dt(0.5, 0.0) + 1.0 / 6.25).abs() < 1e-8);
        assert!((s.dt(0.0, 0.0) + 0.25).abs() < 1e-8);
        assert!(s.pde_residual(1.0, 0.3, 0.2).abs() < 1e-6);
    }

    #[test]
    fn quadratic_closed_forms_against_quadrature() {
        let s = quad();
        let r = s.quadratic_roots().unwrap();
        assert!(r.r1 < 0.0 && r.r2 > 0.0);
        let t = 0.4;
        for x in [-0.7, 0.0, 0.5, 1.1] {
            let q = integrate(|y| 1.0 / s.value(t, y), 0.0, x, QuadOptions::tight())
                .unwrap()
                .value;
            assert!((q - s.inverse_integral(t, x).unwrap()).abs() < 1e-12);
            let y = s.inverse_integral(t, x).unwrap() + s.slope_integral(t).unwrap();
            assert!((s.inverse_transform(t, y).unwrap() - x).abs() < 1e-12);
            let m = 0.2;
            let q = integrate(|u| (u - m) / s.value(t, u), 0.1, x, QuadOptions::tight())
                .unwrap()
                .value;
            assert!((q - s.moment_integral(t, m, 0.1, x).unwrap()).abs() < 1e-11);
        }
        for x in [-3.0, 0.4, 25.0] {
            let q = integrate(
                |y| s.inverse_transform(t, y).unwrap(),
                0.0,
                x,
                QuadOptions::tight(),
            )
            .unwrap()
            .value;
            assert!((q - s.inverse_transform_integral(t, x).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn deterministic_clock_values() {
        let gamma = 1.0;
        let c = (-1.0 + 201f64.sqrt()) / 2.0;
        let clock = Clock::Deterministic {
            gamma,
            c,
            q: 0.01,
            sigma0: 0.1,
            sigma1: 0.0,
        };
        assert!((clock.v(1.0) - 1.0).abs() < 1e-9);
        let v0 = 0.01 * c * c / (1.0 - gamma * 0.01 * c);
        assert!((clock.v0() - v0).abs() < 1e-12);
        // V' = sigma^2
        for t in [0.1, 0.5, 0.9] {
            let all = (0.0, 1.0);
            let d = finite_diff(|s| clock.v(s), t, DiffOrder::First, 1e-5, all).unwrap();
            assert!((d - clock.sigma(t).powi(2)).abs() < 1e-8);
        }
    }

    #[test]
    fn gap_matches_direct_difference() {
        let clock = Clock::Deterministic {
            gamma: 0.7,
            c: 0.0,
            q: 0.02,
            sigma0: 0.3,
            sigma1: -0.1,
        };
        // pick C so that V(1) = 1
        let s: f64 = 0.02 + linear_sigma_energy(0.3, -0.1, 1.0);
        let c = 0.5 * (-0.7 + (0.49 + 4.0 / s).sqrt());
        let clock = match clock {
            Clock::Deterministic {
                gamma,
                q,
                sigma0,
                sigma1,
                ..
            } => Clock::Deterministic {
                gamma,
                c,
                q,
                sigma0,
                sigma1,
            },
            _ => unreachable!(),
        };
        for t in [0.0, 0.3, 0.9] {
            assert!((clock.gap(t) - (clock.v(t) - t)).abs() < 1e-12);
        }
        let lin = Clock::Linear {
            v0: 0.75,
            slope: 0.25,
        };
        assert!((lin.gap(0.4) - 0.45).abs() < 1e-15);
    }

    #[test]
    fn limit_terms_closed_forms_match_numeric() {
        let lin = Clock::Linear {
            v0: 0.75,
            slope: 0.25,
        };
        let custom = Clock::Custom {
            label: "linear".into(),
            v: Arc::new(|t| 0.75 + 0.25 * t),
            sigma: Arc::new(|_| 0.5),
        };
        for t in [0.3, 0.9, 0.999] {
            let (d1, l1) = lin.limit_terms(t).unwrap();
            let (d2, l2) = custom.limit_terms(t).unwrap();
            assert!((d1 / d2 - 1.0).abs() < 1e-9, "{d1} {d2}");
            assert!((l1 / l2 - 1.0).abs() < 1e-8, "{l1} {l2}");
        }
        let (d, l) = Clock::Static.limit_terms(0.5).unwrap();
        assert_eq!((d, l), (0.5, 1.0));
    }
}
