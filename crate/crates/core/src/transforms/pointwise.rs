//! Intensity transforms applied pixel by pixel. None of them clamp.

use crate::error::{domain, Result};
use crate::scalar::Scalar;
use crate::tensor::Image;

pub fn brightness<T: Scalar>(x: &Image<T>, b: f64) -> Image<T> {
    let b = T::of(b);
    x.map(|v| v + b)
}

pub fn contrast<T: Scalar>(x: &Image<T>, c: f64) -> Result<Image<T>> {
    if !(c > 0.0) {
        return domain(format!("contrast factor must be positive, got {c}"));
    }
    let c = T::of(c);
    Ok(x.map(|v| v * c))
}

/// x^g with 0^g = 0.
pub fn gamma_correct<T: Scalar>(x: &Image<T>, g: f64) -> Result<Image<T>> {
    if !(g > 0.0) {
        return domain(format!("gamma exponent must be positive, got {g}"));
    }
    if x.data().iter().any(|&v| v < T::zero()) {
        return domain("gamma correction of a negative intensity");
    }
    let g = T::of(g);
    Ok(x.map(|v| if v == T::zero() { T::zero() } else { v.powf(g) }))
}

/// Scalar form of a pointwise map together with its two partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Pointwise {
    Brightness,
    Contrast,
    Gamma,
}

impl Pointwise {
    #[inline]
    pub(crate) fn value(self, v: f64, p: f64) -> f64 {
        match self {
            Pointwise::Brightness => v + p,
            Pointwise::Contrast => v * p,
            Pointwise::Gamma => {
                if v == 0.0 {
                    0.0
                } else {
                    v.powf(p)
                }
            }
        }
    }

    /// ∂/∂v
    #[inline]
    pub(crate) fn d_input(self, v: f64, p: f64) -> f64 {
        match self {
            Pointwise::Brightness => 1.0,
            Pointwise::Contrast => p,
            Pointwise::Gamma => {
                if v == 0.0 {
                    if p == 1.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    p * v.powf(p - 1.0)
                }
            }
        }
    }

    /// ∂/∂p, with 0·ln 0 := 0 for gamma.
    #[inline]
    pub(crate) fn d_param(self, v: f64, p: f64) -> f64 {
        match self {
            Pointwise::Brightness => 1.0,
            Pointwise::Contrast => v,
            Pointwise::Gamma => {
                if v == 0.0 {
                    0.0
                } else {
                    v.powf(p) * v.ln()
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn im(v: &[f64]) -> Image<f64> {
        Image::new(1, v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn brightness_examples() {
        let x = im(&[0.5]);
        assert!((brightness(&x, 0.2).data()[0] - 0.7).abs() < 1e-15);
        assert_eq!(brightness(&x, 0.0), x);
        let y = im(&[0.1, 0.9, 0.4]);
        let two_step = brightness(&brightness(&y, 0.3), -0.45);
        assert!(two_step.max_abs_diff(&brightness(&y, -0.15)) < 1e-15);
    }

    #[test]
    fn brightness_does_not_clamp() {
        assert_eq!(brightness(&im(&[0.9]), 0.5).data(), &[1.4]);
    }

    #[test]
    fn contrast_examples() {
        let x = im(&[0.5]);
        assert_eq!(contrast(&x, 1.0).unwrap(), x);
        assert_eq!(contrast(&x, 2.0).unwrap().data(), &[1.0]);
        let y = im(&[0.13, 0.77]);
        assert!(contrast(&contrast(&y, 2.0).unwrap(), 0.5).unwrap().max_abs_diff(&y) < 1e-15);
        assert!(contrast(&x, 0.0).is_err());
        assert!(contrast(&x, -1.0).is_err());
    }

    #[test]
    fn gamma_examples() {
        let x = im(&[0.25]);
        assert_eq!(gamma_correct(&x, 1.0).unwrap(), x);
        assert!((gamma_correct(&x, 0.5).unwrap().data()[0] - 0.5).abs() < 1e-15);
        let y = im(&[0.0, 0.2, 0.6, 1.0]);
        let twice = gamma_correct(&gamma_correct(&y, 2.0).unwrap(), 3.0).unwrap();
        assert!(twice.max_abs_diff(&gamma_correct(&y, 6.0).unwrap()) < 1e-15);
        assert_eq!(gamma_correct(&im(&[0.0]), 0.3).unwrap().data(), &[0.0]);
        assert!(gamma_correct(&im(&[-0.1]), 2.0).is_err());
        assert!(gamma_correct(&x, 0.0).is_err());
    }

    #[test]
    fn works_for_f32() {
        let x = Image::<f32>::new(1, 2, 1, vec![0.25, 0.5]).unwrap();
        let y = gamma_correct(&contrast(&x, 2.0).unwrap(), 2.0).unwrap();
        assert!((y.data()[0] - 0.25).abs() < 1e-6 && (y.data()[1] - 1.0).abs() < 1e-6);
    }
}
