use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

// Gauss weights for the odd-indexed Kronrod nodes (xgk[1], xgk[3], xgk[5], xgk[7]).
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_evals: 1_000_000,
        }
    }
}

impl QuadOptions {
    pub fn tight() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-13,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 {
            res_asc * scale
        } else {
            res_asc
        };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

fn gk15<F>(f: &mut F, a: f64, b: f64) -> Result<Panel>
where
    F: FnMut(f64) -> Result<f64>,
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx)?;
        let f2 = f(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let err = rescale_error(
        (res_k - res_g) * half,
        res_abs * half.abs(),
        res_asc * half.abs(),
    );
    if !value.is_finite() || !err.is_finite() {
        return Err(Error::DomainViolation(format!(
            "non-finite integrand on [{a}, {b}]"
        )));
    }
    Ok(Panel {
        a,
        b,
        value,
        error: err,
    })
}

fn adaptive<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Quadrature>
where
    F: FnMut(f64) -> Result<f64>,
{
    let first = gk15(&mut f, a, b)?;
    let mut evaluations = 15;
    let mut value = first.value;
    let mut error = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    loop {
        if error <= opts.abs_tol.max(opts.rel_tol * value.abs()) {
            break;
        }
        if evaluations + 30 > opts.max_evals {
            return Err(Error::QuadratureFailure {
                lower: a,
                upper: b,
                error,
                evaluations,
            });
        }
        let worst = heap.pop().expect("non-empty panel heap");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // panel cannot be split further in floating point
            heap.push(worst);
            return Err(Error::QuadratureFailure {
                lower: a,
                upper: b,
                error,
                evaluations,
            });
        }
        let left = gk15(&mut f, worst.a, mid)?;
        let right = gk15(&mut f, mid, worst.b)?;
        evaluations += 30;
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // re-sum occasionally to stop drift in the running totals
        if evaluations % 3000 == 15 {
            value = heap.iter().map(|p| p.value).sum();
            error = heap.iter().map(|p| p.error).sum();
        }
    }
    let mut panels: Vec<_> = heap.into_vec();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut acc = super::NeumaierSum::default();
    for p in &panels {
        acc.add(p.value);
    }
    Ok(Quadrature {
        value: acc.total(),
        error: panels.iter().map(|p| p.error).sum(),
        evaluations,
    })
}

/// Adaptive Gauss-Kronrod (7/15) integration of a fallible integrand over
/// `[a, b]`; either bound may be infinite.
pub fn integrate_fallible<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Quadrature>
where
    F: FnMut(f64) -> Result<f64>,
{
    if a.is_nan() || b.is_nan() {
        return Err(Error::DomainViolation("NaN integration bound".into()));
    }
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    if a > b {
        let q = integrate_fallible(f, b, a, opts)?;
        return Ok(Quadrature {
            value: -q.value,
            ..q
        });
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(f, a, b, opts),
        (false, false) => adaptive(
            |s: f64| {
                let d = 1.0 - s * s;
                let x = s / d;
                Ok(f(x)? * (1.0 + s * s) / (d * d))
            },
            -1.0,
            1.0,
            opts,
        ),
        (true, false) => adaptive(
            |s: f64| {
                let d = 1.0 - s;
                Ok(f(a + s / d)? / (d * d))
            },
            0.0,
            1.0,
            opts,
        ),
        (false, true) => adaptive(
            |s: f64| {
                let d = 1.0 - s;
                Ok(f(b - s / d)? / (d * d))
            },
            0.0,
            1.0,
            opts,
        ),
    }
}

pub fn integrate<F>(mut f: F, a: f64, b: f64, opts: QuadOptions) -> Result<Quadrature>
where
    F: FnMut(f64) -> f64,
{
    integrate_fallible(|x| Ok(f(x)), a, b, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_exact() {
        let q = integrate(|x| 3.0 * x * x + 1.0, 0.0, 2.0, QuadOptions::default()).unwrap();
        assert!((q.value - 10.0).abs() < 1e-14);
        assert_eq!(q.evaluations, 15);
    }

    #[test]
    fn gaussian_whole_line() {
        let q = integrate(
            |x| (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            f64::NEG_INFINITY,
            f64::INFINITY,
            QuadOptions::tight(),
        )
        .unwrap();
        assert!((q.value - 1.0).abs() < 1e-12, "{}", q.value);
    }

    #[test]
    fn half_lines_and_reversal() {
        let q = integrate(|x| (-x).exp(), 1.0, f64::INFINITY, QuadOptions::tight()).unwrap();
        assert!((q.value - (-1.0f64).exp()).abs() < 1e-13);
        let q = integrate(|x| x.exp(), f64::NEG_INFINITY, 0.0, QuadOptions::tight()).unwrap();
        assert!((q.value - 1.0).abs() < 1e-13);
        let q = integrate(|x| x, 1.0, 0.0, QuadOptions::default()).unwrap();
        assert!((q.value + 0.5).abs() < 1e-15);
    }

    #[test]
    fn endpoint_singularity() {
        // integrable log singularity at 0
        let q = integrate(|x| x.ln(), 0.0, 1.0, QuadOptions::default()).unwrap();
        assert!((q.value + 1.0).abs() < 1e-9, "{}", q.value);
    }

    #[test]
    fn budget_exhaustion_is_an_error() {
        let opts = QuadOptions {
            max_evals: 100,
            ..QuadOptions::default()
        };
        let r = integrate(|x| (1.0 / x).sin(), 1e-6, 1.0, opts);
        assert!(matches!(r, Err(Error::QuadratureFailure { .. })));
    }

    #[test]
    fn integrand_errors_propagate() {
        let r = integrate_fallible(
            |x| {
                if x > 0.5 {
                    Err(Error::DomainViolation("x".into()))
                } else {
                    Ok(x)
                }
            },
            0.0,
            1.0,
            QuadOptions::default(),
        );
        assert!(r.is_err());
    }
}
