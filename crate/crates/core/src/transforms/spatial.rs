//! Integer translation and Gaussian blur.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::scalar::Scalar;
use crate::tensor::Image;

/// How samples outside the image are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Mirror about the edge pixel (`-1 → 1`).
    #[default]
    Reflect,
    /// Periodic continuation (`-1 → n-1`).
    Wrap,
}

impl Padding {
    #[inline]
    pub fn index(self, i: isize, n: usize) -> usize {
        let n_i = n as isize;
        match self {
            Padding::Wrap => i.rem_euclid(n_i) as usize,
            Padding::Reflect => {
                if n == 1 {
                    return 0;
                }
                let period = 2 * (n_i - 1);
                let k = i.rem_euclid(period);
                (if k < n_i { k } else { period - k }) as usize
            }
        }
    }
}

/// Shift by `(tx, ty)` pixels (columns, rows); real shifts round to the
/// nearest integer. Output pixel (r, c) reads input (r − ty, c − tx).
///
/// Reflect padding rejects shifts as large as the image; wrap padding is
/// periodic and accepts any shift.
pub fn translate<T: Scalar>(x: &Image<T>, shift: (f64, f64), padding: Padding) -> Result<Image<T>> {
    let (tx, ty) = (shift.0.round(), shift.1.round());
    if !tx.is_finite() || !ty.is_finite() {
        return domain("translation must be finite");
    }
    let (h, w, ch) = x.shape();
    if padding == Padding::Reflect && (tx.abs() >= w as f64 || ty.abs() >= h as f64) {
        return domain(format!("shift ({tx}, {ty}) reaches the {w}x{h} image extent"));
    }
    let (tx, ty) = (tx as isize, ty as isize);
    if tx == 0 && ty == 0 {
        return Ok(x.clone());
    }
    let src = x.data();
    let mut out = Vec::with_capacity(src.len());
    for r in 0..h {
        let sr = padding.index(r as isize - ty, h);
        for c in 0..w {
            let sc = padding.index(c as isize - tx, w);
            let base = (sr * w + sc) * ch;
            out.extend_from_slice(&src[base..base + ch]);
        }
    }
    Ok(x.with_data(out))
}

/// Normalized Gaussian taps for standard deviation `r`, truncated at 4r.
///
/// With `u = d²/2r²`, each tap is `e^{−u}` minus its tangent line at the
/// cutoff `u = 8`. A tap entering the support as `r` grows therefore starts
/// from zero weight and zero slope, keeping the blurred image continuously
/// differentiable in `r`, which finite-difference Jacobians need.
pub fn gaussian_kernel(r: f64) -> Vec<f64> {
    let r = r.abs();
    let cutoff = 4.0 * r;
    let radius = cutoff.ceil() as usize;
    if radius == 0 {
        return vec![1.0];
    }
    let edge = (-8.0f64).exp();
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            if d.abs() >= cutoff {
                0.0
            } else {
                let u = d * d / (2.0 * r * r);
                (-u).exp() - edge * (9.0 - u)
            }
        })
        .collect();
    if k.iter().all(|&v| v == 0.0) {
        return vec![1.0];
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with standard deviation |r| (r = 0 is the identity).
pub fn gaussian_blur<T: Scalar>(x: &Image<T>, r: f64, padding: Padding) -> Image<T> {
    let kernel = gaussian_kernel(r);
    if kernel.len() == 1 {
        return x.clone();
    }
    let radius = (kernel.len() / 2) as isize;
    let taps: Vec<T> = kernel.iter().map(|&v| T::of(v)).collect();
    let (h, w, ch) = x.shape();
    let src = x.data();

    let mut tmp = vec![T::zero(); src.len()];
    for r_ in 0..h {
        for c in 0..w {
            for k in 0..ch {
                let mut acc = T::zero();
                for (t, &wt) in taps.iter().enumerate() {
                    let sc = padding.index(c as isize + t as isize - radius, w);
                    acc += wt * src[(r_ * w + sc) * ch + k];
                }
                tmp[(r_ * w + c) * ch + k] = acc;
            }
        }
    }
    let mut out = vec![T::zero(); src.len()];
    for r_ in 0..h {
        for c in 0..w {
            for k in 0..ch {
                let mut acc = T::zero();
                for (t, &wt) in taps.iter().enumerate() {
                    let sr = padding.index(r_ as isize + t as isize - radius, h);
                    acc += wt * tmp[(sr * w + c) * ch + k];
                }
                out[(r_ * w + c) * ch + k] = acc;
            }
        }
    }
    x.with_data(out)
}
