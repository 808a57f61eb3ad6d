//! Trapezoid quadrature and elementwise sequence utilities.

use crate::error::{domain, Result};

/// Default number of t-grid points for straight-path integrals.
pub const DEFAULT_PATH_STEPS: usize = 129;

/// ∫₀¹ f((1 − t)·start + t·end) dt by the trapezoid rule on `n_steps`
/// uniformly spaced t values (endpoints included).
pub fn trapezoid_path_integral(f: impl Fn(&[f64]) -> f64, start: &[f64], end: &[f64], n_steps: usize) -> Result<f64> {
    if n_steps < 2 {
        return domain(format!("path integral needs at least 2 steps, got {n_steps}"));
    }
    if start.len() != end.len() {
        return domain("path endpoints differ in dimension");
    }
    let intervals = (n_steps - 1) as f64;
    let mut point = vec![0.0; start.len()];
    let mut sum = 0.0;
    for k in 0..n_steps {
        let t = k as f64 / intervals;
        for ((p, &a), &b) in point.iter_mut().zip(start).zip(end) {
            *p = (1.0 - t) * a + t * b;
        }
        let w = if k == 0 || k == n_steps - 1 { 0.5 } else { 1.0 };
        sum += w * f(&point);
    }
    Ok(sum / intervals)
}

fn reject_nan(values: &[f64]) -> Result<()> {
    if values.iter().any(|v| v.is_nan()) {
        return domain("NaN in input sequence");
    }
    Ok(())
}

pub fn cumsum(values: &[f64]) -> Result<Vec<f64>> {
    reject_nan(values)?;
    Ok(values
        .iter()
        .scan(0.0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect())
}

pub fn sort_descending(values: &[f64]) -> Result<Vec<f64>> {
    reject_nan(values)?;
    let mut out = values.to_vec();
    out.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(out)
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return domain("mean of an empty sequence");
    }
    reject_nan(values)?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}
