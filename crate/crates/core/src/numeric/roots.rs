use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootOptions {
    /// Relative tolerance on the residual `|g(x) - y| <= rel_tol * max(1, |y|)`.
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Default for RootOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            max_iter: 200,
        }
    }
}

/// Solves `g(x) = y` for a strictly increasing `g` on the open interval
/// `(lower, upper)` containing 0.
///
/// A bracket is grown from `x = 0` toward the relevant endpoint (doubling on an
/// infinite side, halving the gap on a finite one) and then narrowed by Newton
/// steps that fall back to bisection whenever they leave the bracket.
pub fn invert_increasing<G, D>(
    mut g: G,
    mut dg: D,
    y: f64,
    lower: f64,
    upper: f64,
    opts: RootOptions,
) -> Result<f64>
where
    G: FnMut(f64) -> Result<f64>,
    D: FnMut(f64) -> Result<f64>,
{
    if !y.is_finite() {
        return Err(Error::DomainViolation(format!("cannot invert at y = {y}")));
    }
    let tol = opts.rel_tol * y.abs().max(1.0);
    let mut iterations = 0usize;
    let g0 = g(0.0)? - y;
    if g0.abs() <= tol {
        return Ok(0.0);
    }
    // (lo, f_lo) has f_lo < 0, (hi, f_hi) has f_hi > 0
    let (mut lo, mut hi);
    let (mut f_lo, mut f_hi);
    if g0 < 0.0 {
        lo = 0.0;
        f_lo = g0;
        let mut k = 0i32;
        loop {
            iterations += 1;
            if iterations > opts.max_iter {
                return Err(Error::NoConvergence {
                    iterations,
                    target: y,
                });
            }
            let cand = if upper.is_finite() {
                upper - upper * 2f64.powi(-(k + 1))
            } else {
                2f64.powi(k)
            };
            k += 1;
            if cand <= lo || cand >= upper {
                return Err(Error::NoConvergence {
                    iterations,
                    target: y,
                });
            }
            let fc = g(cand)? - y;
            if fc.abs() <= tol {
                return Ok(cand);
            }
            if fc > 0.0 {
                hi = cand;
                f_hi = fc;
                break;
            }
            lo = cand;
            f_lo = fc;
        }
    } else {
        hi = 0.0;
        f_hi = g0;
        let mut k = 0i32;
        loop {
            iterations += 1;
            if iterations > opts.max_iter {
                return Err(Error::NoConvergence {
                    iterations,
                    target: y,
                });
            }
            let cand = if lower.is_finite() {
                lower - lower * 2f64.powi(-(k + 1))
            } else {
                -(2f64.powi(k))
            };
            k += 1;
            if cand >= hi || cand <= lower {
                return Err(Error::NoConvergence {
                    iterations,
                    target: y,
                });
            }
            let fc = g(cand)? - y;
            if fc.abs() <= tol {
                return Ok(cand);
            }
            if fc < 0.0 {
                lo = cand;
                f_lo = fc;
                break;
            }
            hi = cand;
            f_hi = fc;
        }
    }

    // secant-ish starting point inside the bracket
    let mut x = lo - f_lo * (hi - lo) / (f_hi - f_lo);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    while iterations < opts.max_iter {
        iterations += 1;
        let fx = g(x)? - y;
        if fx.abs() <= tol {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        let d = dg(x)?;
        let newton = x - fx / d;
        x = if d > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NoConvergence {
        iterations,
        target: y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverts_cubic_on_real_line() {
        let g = |x: f64| Ok(x * x * x + x);
        let d = |x: f64| Ok(3.0 * x * x + 1.0);
        for y in [-1e6, -3.0, 0.0, 1e-9, 2.0, 1e8] {
            let x = invert_increasing(
                g,
                d,
                y,
                f64::NEG_INFINITY,
                f64::INFINITY,
                RootOptions::default(),
            )
            .unwrap();
            assert!((x * x * x + x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn inverts_atanh_on_bounded_interval() {
        for y in [-15.0, -0.5, 0.3, 8.0] {
            let x = invert_increasing(
                |x: f64| Ok(x.atanh()),
                |x: f64| Ok(1.0 / (1.0 - x * x)),
                y,
                -1.0,
                1.0,
                RootOptions::default(),
            )
            .unwrap();
            assert!((x - f64::tanh(y)).abs() < 1e-12, "y={y} x={x}");
        }
    }

    #[test]
    fn bounded_range_reports_no_convergence() {
        // range of atan is (-pi/2, pi/2), so y = 5 has no preimage
        let r = invert_increasing(
            |x: f64| Ok(x.atan()),
            |x: f64| Ok(1.0 / (1.0 + x * x)),
            5.0,
            f64::NEG_INFINITY,
            f64::INFINITY,
            RootOptions::default(),
        );
        assert!(matches!(r, Err(Error::NoConvergence { .. })));
    }
}
