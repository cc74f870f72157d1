use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};

pub const DEFAULT_RESAMPLES: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_resamples: usize,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// 95% percentile bootstrap interval for the mean. The interval is widened
/// to contain the sample mean if resampling noise excludes it.
pub fn bootstrap_ci(values: &[f64], n_resamples: usize, seed: u64) -> Result<BootstrapSummary> {
    if values.is_empty() {
        return Err(invalid("bootstrap needs at least one value"));
    }
    if n_resamples == 0 {
        return Err(invalid("n_resamples must be at least 1"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..n_resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    Ok(BootstrapSummary {
        mean,
        ci_low: quantile_sorted(&means, 0.025).min(mean),
        ci_high: quantile_sorted(&means, 0.975).max(mean),
        n_resamples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    /// Two-sided p-value of the t-test for zero correlation.
    pub p_value: f64,
    pub n: usize,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() {
        return Err(invalid("pearson: length mismatch"));
    }
    let n = x.len();
    if n < 3 {
        return Err(invalid("pearson: need at least 3 pairs"));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(Correlation { r: f64::NAN, p_value: f64::NAN, n });
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| invalid(e.to_string()))?;
        2.0 * dist.cdf(-t.abs())
    };
    Ok(Correlation { r, p_value, n })
}
