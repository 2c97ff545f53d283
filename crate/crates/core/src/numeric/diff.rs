use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffOrder {
    First,
    Second,
}

/// Central difference of order one or two with `O(h^2)` truncation error.
///
/// `domain` is the closed interval on which `f` may be evaluated; a stencil that
/// leaves it is an error.
pub fn finite_diff<F>(f: F, x: f64, order: DiffOrder, h: f64, domain: (f64, f64)) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter {
            name: "h",
            reason: format!("step {h} must be positive"),
        });
    }
    if x - h < domain.0 || x + h > domain.1 {
        return Err(Error::DomainViolation(format!(
            "stencil [{}, {}] leaves [{}, {}]",
            x - h,
            x + h,
            domain.0,
            domain.1
        )));
    }
    Ok(match order {
        DiffOrder::First => (f(x + h) - f(x - h)) / (2.0 * h),
        DiffOrder::Second => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
    })
}

/// First derivative on a closed window, switching to second-order one-sided
/// stencils near the window edges.
pub fn derivative_in_window<F>(f: F, x: f64, h: f64, lo: f64, hi: f64) -> f64
where
    F: Fn(f64) -> f64,
{
    if x - h >= lo && x + h <= hi {
        (f(x + h) - f(x - h)) / (2.0 * h)
    } else if x - h < lo {
        (-3.0 * f(x) + 4.0 * f(x + h) - f(x + 2.0 * h)) / (2.0 * h)
    } else {
        (3.0 * f(x) - 4.0 * f(x - h) + f(x - 2.0 * h)) / (2.0 * h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: (f64, f64) = (f64::NEG_INFINITY, f64::INFINITY);

    #[test]
    fn square_first_derivative() {
        let d = finite_diff(|x| x * x, 1.0, DiffOrder::First, 1e-4, ALL).unwrap();
        assert!((d - 2.0).abs() < 1e-8);
    }

    #[test]
    fn square_second_derivative() {
        let d = finite_diff(|x| x * x, 0.0, DiffOrder::Second, 1e-3, ALL).unwrap();
        assert!((d - 2.0).abs() < 1e-10);
    }

    #[test]
    fn sine_against_cosine() {
        let d = finite_diff(f64::sin, 0.3, DiffOrder::First, 1e-4, ALL).unwrap();
        assert!((d - 0.3f64.cos()).abs() < 1e-8);
    }

    #[test]
    fn stencil_outside_domain() {
        let r = finite_diff(|x: f64| x.sqrt(), 0.0, DiffOrder::First, 1e-3, (0.0, 1.0));
        assert!(matches!(r, Err(Error::DomainViolation(_))));
    }

    #[test]
    fn one_sided_window() {
        let f = |t: f64| t * t * t;
        let d0 = derivative_in_window(f, 0.0, 1e-4, 0.0, 1.0);
        let d1 = derivative_in_window(f, 1.0, 1e-4, 0.0, 1.0);
        assert!(d0.abs() < 1e-7);
        assert!((d1 - 3.0).abs() < 1e-7);
    }

    #[test]
    fn quadratics_exact_to_rounding() {
        for &(a, b, c) in &[(1.0, -2.0, 0.5), (-3.0, 0.25, 7.0)] {
            let f = |x: f64| a * x * x + b * x + c;
            let d1 = finite_diff(f, 0.7, DiffOrder::First, 1e-3, ALL).unwrap();
            let d2 = finite_diff(f, 0.7, DiffOrder::Second, 1e-2, ALL).unwrap();
            assert!((d1 - (2.0 * a * 0.7 + b)).abs() < 1e-10);
            assert!((d2 - 2.0 * a).abs() < 1e-9);
        }
    }
}
