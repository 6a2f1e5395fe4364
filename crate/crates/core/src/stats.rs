//! Small statistics helpers shared by the Monte Carlo estimators and the
//! convergence studies.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A counter-based generator positioned on its own stream.
///
/// Every `(seed, stream)` pair yields an independent, reproducible sequence,
/// regardless of which thread consumes it.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub variance: f64,
    pub count: usize,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                std_err: 0.0,
                variance: 0.0,
                count: 0,
            };
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let variance = if n > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std_err: (variance / n as f64).sqrt(),
            variance,
            count: n,
        }
    }

    /// Standard error of the sample variance, `sqrt((m4 - s^4 (n-3)/(n-1)) / n)`.
    pub fn variance_std_err(samples: &[f64]) -> f64 {
        let n = samples.len() as f64;
        if n < 4.0 {
            return f64::INFINITY;
        }
        let est = Self::from_samples(samples);
        let m4 = samples.iter().map(|x| (x - est.mean).powi(4)).sum::<f64>() / n;
        let s4 = est.variance * est.variance;
        ((m4 - s4 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
    }
}

/// Ordinary least squares fit `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (zero for exact fits or two points).
    pub slope_std_err: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len(), "linear_fit: length mismatch");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let slope_std_err = if x.len() > 2 && sxx > 0.0 {
        (ss_res / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    LinearFit {
        slope,
        intercept,
        slope_std_err,
        r_squared,
    }
}

/// Fits `log(err) = c + order * log(h)`; non-positive errors are rejected.
pub fn convergence_order(steps: &[f64], errors: &[f64]) -> Option<LinearFit> {
    if steps.len() < 2 || errors.iter().any(|e| *e <= 0.0 || !e.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = steps.iter().map(|h| h.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Some(linear_fit(&lx, &ly))
}
