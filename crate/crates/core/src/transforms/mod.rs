//! Resolvable semantic transforms φ(x, β), their resolving functions γ,
//! parameter Jacobians, compositions and the ψ maps.
//!
//! Resolving functions follow the convention
//! `apply(apply(x, inner), outer) == apply(x, resolve(outer, inner))`.

mod composite;
pub mod pointwise;
mod psi;
pub mod spatial;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;
use crate::tensor::Image;

pub use composite::{compose, CompositeTransform};
pub use pointwise::{brightness, contrast, gamma_correct};
pub use psi::{psi_forward, ParamMap};
pub use spatial::{gaussian_blur, gaussian_kernel, translate, Padding};

use pointwise::Pointwise;

/// Relative central-difference step used when no analytic derivative exists.
pub const FD_STEP: f64 = 1e-4;

/// A parametric image transform with a resolving function.
pub trait ResolvableTransform {
    /// Parameter dimension d.
    fn dim(&self) -> usize;

    /// β₀ with φ(x, β₀) = x.
    fn identity(&self) -> Vec<f64>;

    fn apply<T: Scalar>(&self, x: &Image<T>, params: &[f64]) -> Result<Image<T>>;

    /// γ(outer, inner).
    fn resolve(&self, outer: &[f64], inner: &[f64]) -> Result<Vec<f64>>;

    /// False when φ is piecewise constant in its parameters (integer shifts).
    fn is_differentiable(&self) -> bool {
        true
    }

    /// ∂φ/∂β at (x, params), one row per intensity.
    fn jacobian(&self, x: &Image<f64>, params: &[f64]) -> Result<Matrix<f64>> {
        jacobian_fd(self, x, params, FD_STEP)
    }
}

/// Central-difference Jacobian with per-coordinate step `step·max(1, |β_j|)`.
pub fn jacobian_fd<R: ResolvableTransform + ?Sized>(
    transform: &R,
    x: &Image<f64>,
    params: &[f64],
    step: f64,
) -> Result<Matrix<f64>> {
    if !(step > 0.0) {
        return domain(format!("finite-difference step must be positive, got {step}"));
    }
    let mut columns = Vec::with_capacity(params.len());
    let mut p = params.to_vec();
    for j in 0..params.len() {
        let h = step * params[j].abs().max(1.0);
        p[j] = params[j] + h;
        let plus = transform.apply(x, &p)?;
        p[j] = params[j] - h;
        let minus = transform.apply(x, &p)?;
        p[j] = params[j];
        columns.push(
            plus.data()
                .iter()
                .zip(minus.data())
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect(),
        );
    }
    Matrix::from_columns(x.len(), &columns)
}

/// One registered transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum Transform {
    Brightness,
    Contrast,
    Gamma,
    /// Parameters `(tx, ty)`, rounded to whole pixels.
    Translate {
        #[serde(default = "wrap")]
        padding: Padding,
    },
    Blur {
        #[serde(default)]
        padding: Padding,
    },
}

fn wrap() -> Padding {
    Padding::Wrap
}

impl Transform {
    pub fn translate() -> Self {
        Transform::Translate { padding: Padding::Wrap }
    }

    pub fn blur() -> Self {
        Transform::Blur {
            padding: Padding::Reflect,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transform::Brightness => "brightness",
            Transform::Contrast => "contrast",
            Transform::Gamma => "gamma",
            Transform::Translate { .. } => "translate",
            Transform::Blur { .. } => "blur",
        }
    }

    pub(crate) fn pointwise(&self) -> Option<Pointwise> {
        match self {
            Transform::Brightness => Some(Pointwise::Brightness),
            Transform::Contrast => Some(Pointwise::Contrast),
            Transform::Gamma => Some(Pointwise::Gamma),
            _ => None,
        }
    }

    fn check_arity(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.dim() {
            return domain(format!(
                "{} takes {} parameter(s), got {}",
                self.name(),
                self.dim(),
                params.len()
            ));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return domain(format!("non-finite {} parameter", self.name()));
        }
        Ok(())
    }
}

impl ResolvableTransform for Transform {
    fn dim(&self) -> usize {
        match self {
            Transform::Translate { .. } => 2,
            _ => 1,
        }
    }

    fn identity(&self) -> Vec<f64> {
        match self {
            Transform::Brightness | Transform::Blur { .. } => vec![0.0],
            Transform::Contrast | Transform::Gamma => vec![1.0],
            Transform::Translate { .. } => vec![0.0, 0.0],
        }
    }

    fn apply<T: Scalar>(&self, x: &Image<T>, params: &[f64]) -> Result<Image<T>> {
        self.check_arity(params)?;
        match *self {
            Transform::Brightness => Ok(brightness(x, params[0])),
            Transform::Contrast => contrast(x, params[0]),
            Transform::Gamma => gamma_correct(x, params[0]),
            Transform::Translate { padding } => translate(x, (params[0], params[1]), padding),
            Transform::Blur { padding } => Ok(gaussian_blur(x, params[0], padding)),
        }
    }

    fn resolve(&self, outer: &[f64], inner: &[f64]) -> Result<Vec<f64>> {
        self.check_arity(outer)?;
        self.check_arity(inner)?;
        Ok(match self {
            Transform::Brightness => vec![outer[0] + inner[0]],
            Transform::Contrast | Transform::Gamma => vec![outer[0] * inner[0]],
            Transform::Translate { .. } => vec![outer[0] + inner[0], outer[1] + inner[1]],
            Transform::Blur { .. } => vec![outer[0].hypot(inner[0])],
        })
    }

    fn is_differentiable(&self) -> bool {
        !matches!(self, Transform::Translate { .. })
    }

    fn jacobian(&self, x: &Image<f64>, params: &[f64]) -> Result<Matrix<f64>> {
        self.check_arity(params)?;
        match self.pointwise() {
            Some(kind) => {
                // Validate the domain once through apply.
                self.apply(x, params)?;
                let col: Vec<f64> = x.data().iter().map(|&v| kind.d_param(v, params[0])).collect();
                Matrix::from_columns(x.len(), &[col])
            }
            None => jacobian_fd(self, x, params, FD_STEP),
        }
    }
}
