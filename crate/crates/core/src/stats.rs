//! Sample statistics used by the verification battery.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::numeric::NeumaierSum;

/// Mean, standard error and higher moments of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standard error of the mean.
    pub se: f64,
    /// Excess-free kurtosis `m4 / m2^2` (3 for a Gaussian).
    pub kurtosis: f64,
    /// Standard error of the sample variance, `sqrt((m4 - m2^2 (n-3)/(n-1)) / n)`.
    pub variance_se: f64,
}

pub fn moments<I: IntoIterator<Item = f64>>(values: I) -> Moments {
    let data: Vec<f64> = values.into_iter().collect();
    let n = data.len();
    if n == 0 {
        return Moments {
            n,
            mean: f64::NAN,
            variance: f64::NAN,
            se: f64::NAN,
            kurtosis: f64::NAN,
            variance_se: f64::NAN,
        };
    }
    let mut s = NeumaierSum::default();
    for &x in &data {
        s.add(x);
    }
    let mean = s.total() / n as f64;
    let (mut m2, mut m4) = (NeumaierSum::default(), NeumaierSum::default());
    for &x in &data {
        let d = x - mean;
        m2.add(d * d);
        m4.add(d * d * d * d);
    }
    let nf = n as f64;
    let m2p = m2.total() / nf;
    let m4p = m4.total() / nf;
    let variance = if n > 1 { m2.total() / (nf - 1.0) } else { 0.0 };
    let var_of_var = if n > 3 {
        (m4p - m2p * m2p * (nf - 3.0) / (nf - 1.0)) / nf
    } else {
        f64::NAN
    };
    Moments {
        n,
        mean,
        variance,
        se: (variance / nf).sqrt(),
        kurtosis: if m2p > 0.0 { m4p / (m2p * m2p) } else { f64::NAN },
        variance_se: var_of_var.max(0.0).sqrt(),
    }
}

/// Mean and standard error of `x - y` for paired samples.
pub fn paired_difference(x: &[f64], y: &[f64]) -> Moments {
    moments(x.iter().zip(y).map(|(a, b)| a - b))
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Kolmogorov–Smirnov distance to the standard normal and its asymptotic
/// p-value with Stephens' small-sample correction.
pub fn ks_normal(values: &[f64]) -> (f64, f64) {
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = normal_cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    let sn = nf.sqrt();
    (d, kolmogorov_survival((sn + 0.12 + 0.11 / sn) * d))
}

/// `P(K > lambda)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * lambda * lambda).exp();
        sum += if j as i64 % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Pearson correlation of paired samples.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let mx = moments(x.iter().copied()).mean;
    let my = moments(y.iter().copied()).mean;
    let (mut sxy, mut sxx, mut syy) = (
        NeumaierSum::default(),
        NeumaierSum::default(),
        NeumaierSum::default(),
    );
    for (&a, &b) in x.iter().zip(y) {
        sxy.add((a - mx) * (b - my));
        sxx.add((a - mx) * (a - mx));
        syy.add((b - my) * (b - my));
    }
    sxy.total() / (sxx.total() * syy.total()).sqrt()
}
