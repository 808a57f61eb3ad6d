//! Normalized directional-derivative bounds: the confidence profile `p(h)` and
//! per-grid-point magnitudes `g_j`.
//!
//! For each grid point β_j the scores η = ∇_β log ρ are projected onto the ray
//! direction from β₀, centered, sorted in descending order and accumulated.
//! The accumulated sequence at index i is the largest derivative any
//! [0, 1]-valued classifier with smoothed confidence h = i/N_s can have along
//! the ray; its maximum times the ray length is g_j and its normalized shape
//! enters the envelope p.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{grad_log_rho_beta, SmoothingSpec};
use crate::error::{domain, Error, Result};
use crate::numerics::{cumsum, mean, sort_descending};
use crate::tensor::Image;
use crate::transforms::ResolvableTransform;

/// Serialization format version of [`BoundTable`].
pub const BOUND_TABLE_VERSION: u32 = 1;

/// Tensor-product grid of attack parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    axes: Vec<Vec<f64>>,
    beta0: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 || !lo.is_finite() || !hi.is_finite() || lo > hi {
        return domain(format!("invalid axis [{lo}, {hi}] with {n} points"));
    }
    if n == 1 || lo == hi {
        if lo != hi {
            return domain("a single-point axis needs lo == hi");
        }
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

impl ParameterGrid {
    pub fn new(axes: Vec<Vec<f64>>, beta0: Vec<f64>) -> Result<Self> {
        if axes.is_empty() || axes.len() != beta0.len() {
            return domain("grid axes and identity parameter differ in dimension");
        }
        for axis in &axes {
            if axis.is_empty() || axis.windows(2).any(|w| !(w[1] > w[0])) || axis.iter().any(|v| !v.is_finite()) {
                return domain("grid axes must be non-empty, finite and strictly increasing");
            }
        }
        Ok(Self { axes, beta0 })
    }

    /// `points[k]` evenly spaced values on `[lo[k], hi[k]]` per dimension.
    pub fn uniform(lo: &[f64], hi: &[f64], points: &[usize], beta0: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.len() != points.len() {
            return domain("grid bounds and point counts differ in dimension");
        }
        let axes = lo
            .iter()
            .zip(hi)
            .zip(points)
            .map(|((&l, &h), &n)| linspace(l, h, n))
            .collect::<Result<Vec<_>>>()?;
        Self::new(axes, beta0)
    }

    /// Uniform grid over the box widened to contain β₀, so every straight
    /// path from β₀ into the box stays inside the grid hull.
    pub fn spanning(lo: &[f64], hi: &[f64], points: &[usize], beta0: Vec<f64>) -> Result<Self> {
        if lo.len() != beta0.len() || hi.len() != beta0.len() {
            return domain("grid bounds and identity parameter differ in dimension");
        }
        let lo: Vec<f64> = lo.iter().zip(&beta0).map(|(&l, &b)| l.min(b)).collect();
        let hi: Vec<f64> = hi.iter().zip(&beta0).map(|(&h, &b)| h.max(b)).collect();
        Self::uniform(&lo, &hi, points, beta0)
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn beta0(&self) -> &[f64] {
        &self.beta0
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point with flat index `idx` (last axis fastest).
    pub fn point(&self, mut idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for k in (0..self.dim()).rev() {
            let n = self.axes[k].len();
            out[k] = self.axes[k][idx % n];
            idx /= n;
        }
        out
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub(crate) fn is_beta0(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(&self.beta0)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * b.abs().max(1.0))
    }
}

/// Output of the bound estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTable {
    pub version: u32,
    /// N_s.
    pub n_samples: usize,
    pub grid: ParameterGrid,
    /// Normalized envelope, `p[i]` at h = i/N_s (N_s + 1 values).
    pub p: Vec<f64>,
    /// Directional magnitude per grid point (0 at β₀).
    pub g: Vec<f64>,
    pub seed: u64,
    pub spec_digest: String,
}

impl BoundTable {
    /// g_j / ‖β_j − β₀‖, `None` at β₀.
    pub fn slopes(&self) -> Vec<Option<f64>> {
        self.grid
            .points()
            .iter()
            .zip(&self.g)
            .map(|(b, &g)| {
                let dist = distance(b, self.grid.beta0());
                if self.grid.is_beta0(b) {
                    None
                } else {
                    Some(g / dist)
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        if t.version != BOUND_TABLE_VERSION {
            return Err(Error::Format(format!(
                "bound table version {} (expected {BOUND_TABLE_VERSION})",
                t.version
            )));
        }
        if t.p.len() != t.n_samples + 1 || t.g.len() != t.grid.len() {
            return Err(Error::Consistency("bound table lengths do not match its grid".into()));
        }
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
}

/// Optimum of the finite-sample worst-classifier problem: `(1/N)·Σ` of the
/// ⌊h·N⌋ largest scores.
pub fn worst_classifier_bound(etas: &[f64], h: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&h) {
        return domain(format!("confidence level must lie in [0, 1], got {h}"));
    }
    let n = etas.len();
    if n == 0 {
        return Ok(0.0);
    }
    // Tolerate the rounding in `h = k / n` round trips.
    let k = ((h * n as f64 + 1e-9).floor() as usize).min(n);
    let sorted = sort_descending(etas)?;
    Ok(sorted[..k].iter().sum::<f64>() / n as f64)
}

/// Centered, descending cumulative profile `[0, c₁, …, c_N]/N` of the scores.
pub fn ray_profile(etas: &[f64]) -> Result<Vec<f64>> {
    let mu = mean(etas)?;
    let centered: Vec<f64> = etas.iter().map(|v| v - mu).collect();
    let sorted = sort_descending(&centered)?;
    let n = etas.len() as f64;
    let mut profile = Vec::with_capacity(etas.len() + 1);
    profile.push(0.0);
    profile.extend(cumsum(&sorted)?.into_iter().map(|v| v / n));
    Ok(profile)
}

/// Projected scores for grid point β along the ray from β₀.
pub fn ray_scores(x: &Image<f64>, spec: &SmoothingSpec, beta: &[f64], seed: u64) -> Result<Vec<f64>> {
    let beta0 = spec.beta0();
    let dist = distance(beta, &beta0);
    if dist == 0.0 {
        return domain("direction from β₀ to itself is undefined");
    }
    let dir: Vec<f64> = beta.iter().zip(&beta0).map(|(b, z)| (b - z) / dist).collect();
    (0..spec.n_samples as u64)
        .map(|k| {
            let draw = spec.draw(seed, k, x.len());
            let eta = grad_log_rho_beta(spec, x, &draw, beta)?;
            Ok(eta.iter().zip(&dir).map(|(e, t)| e * t).sum())
        })
        .collect()
}

/// Normalized profile and its maximum for one grid point.
fn point_bound(x: &Image<f64>, spec: &SmoothingSpec, beta: &[f64], seed: u64) -> Result<(f64, Vec<f64>)> {
    let profile = ray_profile(&ray_scores(x, spec, beta, seed)?)?;
    let top = profile.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) {
        return Err(Error::DegenerateTransform(format!(
            "score profile is identically zero at β = {beta:?}"
        )));
    }
    Ok((top, profile.iter().map(|v| v / top).collect()))
}

/// Minimum number of Monte-Carlo draws accepted for a bound table.
pub const MIN_SAMPLES: usize = 1000;

/// Estimate the envelope p and magnitudes g over `grid`.
///
/// All grid points reuse the same draws. β₀ itself is skipped (its ray
/// direction is undefined) and gets g = 0.
pub fn compute_normed_bounds(
    x: &Image<f64>,
    spec: &SmoothingSpec,
    grid: &ParameterGrid,
    seed: u64,
) -> Result<BoundTable> {
    spec.validate()?;
    if spec.n_samples < MIN_SAMPLES {
        return domain(format!("need at least {MIN_SAMPLES} samples, got {}", spec.n_samples));
    }
    if grid.dim() != spec.dim() || grid.beta0() != spec.transform.identity().as_slice() {
        return domain("grid does not match the transform's parameter space");
    }
    let n = spec.n_samples;
    let points = grid.points();
    let mut envelope = vec![0.0f64; n + 1];
    let mut g = vec![0.0; points.len()];
    let mut any = false;
    // Chunks bound the memory held in per-point profiles.
    let chunk = rayon::current_num_threads().max(1) * 4;
    for start in (0..points.len()).step_by(chunk) {
        let end = (start + chunk).min(points.len());
        let results: Vec<Option<(f64, Vec<f64>)>> = (start..end)
            .into_par_iter()
            .map(|j| {
                if grid.is_beta0(&points[j]) {
                    log::warn!("skipping grid point {:?}: it is the identity parameter", points[j]);
                    return Ok(None);
                }
                point_bound(x, spec, &points[j], seed).map(Some)
            })
            .collect::<Result<_>>()?;
        for (j, r) in (start..end).zip(results) {
            if let Some((top, normalized)) = r {
                any = true;
                g[j] = top * distance(&points[j], grid.beta0());
                for (e, v) in envelope.iter_mut().zip(&normalized) {
                    *e = (*e).max(*v);
                }
            }
        }
    }
    if !any {
        return domain("the grid has no point other than the identity parameter");
    }
    Ok(BoundTable {
        version: BOUND_TABLE_VERSION,
        n_samples: n,
        grid: grid.clone(),
        p: envelope,
        g,
        seed,
        spec_digest: spec.digest()?,
    })
}
