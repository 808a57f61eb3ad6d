//! Monte-Carlo estimation of smoothed confidences with a Clopper–Pearson
//! lower bound.
//!
//! A draw counts for class c when the base classifier's confidence for c
//! exceeds ½ on the clamped perturbed image.

use serde::{Deserialize, Serialize};

use crate::density::{sample_y, SmoothingSpec};
use crate::error::{domain, Error, Result};
use crate::model::{argmax, Classifier};
use crate::numerics::beta_inv_cdf;
use crate::tensor::Image;

const BATCH: usize = 256;

/// Lower end of the two-sided Clopper–Pearson interval at level 1 − α*.
pub fn clopper_pearson_lower(n: usize, n_max: usize, alpha_star: f64) -> Result<f64> {
    if n > n_max || n_max == 0 {
        return domain(format!("{n} successes out of {n_max} draws"));
    }
    if !(alpha_star > 0.0 && alpha_star < 1.0) {
        return domain(format!("α* must lie in (0, 1), got {alpha_star}"));
    }
    if n == 0 {
        return Ok(0.0);
    }
    if n == n_max {
        return Ok((alpha_star / 2.0).powf(1.0 / n_max as f64));
    }
    beta_inv_cdf(alpha_star / 2.0, n as f64, (n_max - n + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedEstimate {
    pub class_id: usize,
    /// Draws counting for `class_id`.
    pub n: usize,
    pub n_max: usize,
    pub alpha_star: f64,
    pub h_lower: f64,
}

/// Per-class counts over `n_max` smoothing draws around `x`.
pub fn smoothed_counts<M: Classifier + ?Sized>(
    x: &Image<f64>,
    model: &M,
    spec: &SmoothingSpec,
    n_max: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    spec.validate()?;
    let mut counts = vec![0; model.num_classes()];
    let mut start = 0;
    while start < n_max {
        let end = (start + BATCH).min(n_max);
        let batch = (start..end)
            .map(|k| {
                let draw = spec.draw(seed, k as u64, x.len());
                Ok(sample_y(spec, x, &draw.alpha, &draw.noise)?.clamp_unit())
            })
            .collect::<Result<Vec<_>>>()?;
        for out in model.forward_batch(&batch)? {
            if out.len() != counts.len() || out.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Contract(format!(
                    "classifier output {out:?} is not a vector of [0, 1] confidences"
                )));
            }
            for (c, &v) in counts.iter_mut().zip(&out) {
                if v > 0.5 {
                    *c += 1;
                }
            }
        }
        start = end;
    }
    Ok(counts)
}

fn estimate(class_id: usize, n: usize, n_max: usize, alpha_star: f64) -> Result<SmoothedEstimate> {
    Ok(SmoothedEstimate {
        class_id,
        n,
        n_max,
        alpha_star,
        h_lower: clopper_pearson_lower(n, n_max, alpha_star)?,
    })
}

/// Lower confidence bound on the smoothed confidence of `class_id` at `x`.
pub fn smoothed_predict<M: Classifier + ?Sized>(
    x: &Image<f64>,
    model: &M,
    spec: &SmoothingSpec,
    class_id: usize,
    n_max: usize,
    alpha_star: f64,
    seed: u64,
) -> Result<SmoothedEstimate> {
    if class_id >= model.num_classes() {
        return domain(format!("class {class_id} out of range"));
    }
    let counts = smoothed_counts(x, model, spec, n_max, seed)?;
    estimate(class_id, counts[class_id], n_max, alpha_star)
}

/// Estimate for the class with the most counts.
pub fn smoothed_top<M: Classifier + ?Sized>(
    x: &Image<f64>,
    model: &M,
    spec: &SmoothingSpec,
    n_max: usize,
    alpha_star: f64,
    seed: u64,
) -> Result<SmoothedEstimate> {
    let counts = smoothed_counts(x, model, spec, n_max, seed)?;
    let counts_f: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let top = argmax(&counts_f);
    estimate(top, counts[top], n_max, alpha_star)
}
