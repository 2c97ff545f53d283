use std::fmt;
use std::sync::Arc;

pub type DriftFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Continuous trading rate `d theta / dt` as a function of `(t, xi, Z)`.
#[derive(Clone)]
pub enum Drift {
    Equilibrium,
    /// Equilibrium rate multiplied by a constant.
    Scaled(f64),
    Zero,
    Custom(DriftFn),
}

impl fmt::Debug for Drift {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drift::Equilibrium => f.write_str("Equilibrium"),
            Drift::Scaled(k) => f.debug_tuple("Scaled").field(k).finish(),
            Drift::Zero => f.write_str("Zero"),
            Drift::Custom(_) => f.write_str("Custom"),
        }
    }
}

/// Block trade of `size` executed at the first grid node at or after `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledJump {
    pub time: f64,
    pub size: f64,
}

#[derive(Debug, Clone)]
pub struct Strategy {
    pub label: String,
    pub drift: Drift,
    pub jumps: Vec<ScheduledJump>,
}

impl Strategy {
    pub fn equilibrium() -> Self {
        Self {
            label: "equilibrium".into(),
            drift: Drift::Equilibrium,
            jumps: Vec::new(),
        }
    }

    pub fn scaled(kappa: f64) -> Self {
        Self {
            label: format!("scaled({kappa})"),
            drift: Drift::Scaled(kappa),
            jumps: Vec::new(),
        }
    }

    pub fn zero() -> Self {
        Self {
            label: "zero".into(),
            drift: Drift::Zero,
            jumps: Vec::new(),
        }
    }

    pub fn custom(label: impl Into<String>, f: DriftFn) -> Self {
        Self {
            label: label.into(),
            drift: Drift::Custom(f),
            jumps: Vec::new(),
        }
    }

    /// `base` plus a block trade of `size` at `time`.
    pub fn jump(time: f64, size: f64, base: Strategy) -> Self {
        let mut jumps = base.jumps.clone();
        jumps.push(ScheduledJump { time, size });
        Self {
            label: format!("jump({time},{size},{})", base.label),
            drift: base.drift,
            jumps,
        }
    }

    /// Buy one unit at time 0 and hold it.
    pub fn buy_and_hold() -> Self {
        Self {
            label: "buy_and_hold".into(),
            drift: Drift::Zero,
            jumps: vec![ScheduledJump {
                time: 0.0,
                size: 1.0,
            }],
        }
    }

    pub fn is_equilibrium(&self) -> bool {
        matches!(self.drift, Drift::Equilibrium) && self.jumps.is_empty()
    }

    /// The deviation set used by the optimality check.
    pub fn standard_deviations() -> Vec<Strategy> {
        vec![
            Strategy::zero(),
            Strategy::scaled(0.5),
            Strategy::scaled(2.0),
            Strategy::jump(0.5, 0.5, Strategy::equilibrium()),
        ]
    }
}
