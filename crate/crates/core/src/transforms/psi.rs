//! Coordinate maps ψ from standard normal draws to smoothing distributions.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::{log_std_normal_sf, std_normal_cdf, std_normal_pdf};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// ψ for one parameter coordinate: α ~ N(0, 1) ↦ θ with the target law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParamMap {
    Normal {
        mean: f64,
        std: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    /// `loc + Rayleigh(scale)`; `loc = 0` is the plain Rayleigh law.
    Rayleigh {
        loc: f64,
        scale: f64,
    },
}

/// ln(1 − Φ(α)), accurate in both tails.
fn log_sf(alpha: f64) -> f64 {
    if alpha < 0.0 {
        (-std_normal_cdf(alpha)).ln_1p()
    } else {
        log_std_normal_sf(alpha)
    }
}

impl ParamMap {
    pub fn normal(std: f64) -> Self {
        ParamMap::Normal { mean: 0.0, std }
    }

    pub fn validate(&self) -> Result<()> {
        let (loc, scale, what) = match *self {
            ParamMap::Normal { mean, std } => (mean, std, "normal std"),
            ParamMap::LogNormal { mu, sigma } => (mu, sigma, "lognormal sigma"),
            ParamMap::Rayleigh { loc, scale } => (loc, scale, "rayleigh scale"),
        };
        if !loc.is_finite() || !(scale > 0.0) || !scale.is_finite() {
            return domain(format!("{what} must be positive and finite, got {scale}"));
        }
        Ok(())
    }

    pub fn forward(&self, alpha: f64) -> f64 {
        match *self {
            ParamMap::Normal { mean, std } => mean + std * alpha,
            ParamMap::LogNormal { mu, sigma } => (mu + sigma * alpha).exp(),
            ParamMap::Rayleigh { loc, scale } => loc + scale * (-2.0 * log_sf(alpha)).max(0.0).sqrt(),
        }
    }

    /// dψ/dα.
    pub fn derivative(&self, alpha: f64) -> f64 {
        match *self {
            ParamMap::Normal { std, .. } => std,
            ParamMap::LogNormal { mu, sigma } => sigma * (mu + sigma * alpha).exp(),
            ParamMap::Rayleigh { scale, .. } => {
                let ls = log_sf(alpha);
                let u = -2.0 * ls;
                if u <= 0.0 {
                    return 0.0;
                }
                scale * (std_normal_pdf(alpha).ln() - ls).exp() / u.sqrt()
            }
        }
    }

    /// ψ(0), the median of the target law.
    pub fn median(&self) -> f64 {
        self.forward(0.0)
    }

    /// Log-density of the target law at θ (−∞ outside the support).
    pub fn log_density(&self, theta: f64) -> f64 {
        match *self {
            ParamMap::Normal { mean, std } => {
                let u = (theta - mean) / std;
                -0.5 * u * u - std.ln() - LN_SQRT_2PI
            }
            ParamMap::LogNormal { mu, sigma } => {
                if theta <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                let u = (theta.ln() - mu) / sigma;
                -0.5 * u * u - theta.ln() - sigma.ln() - LN_SQRT_2PI
            }
            ParamMap::Rayleigh { loc, scale } => {
                let r = theta - loc;
                if r <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                r.ln() - 2.0 * scale.ln() - r * r / (2.0 * scale * scale)
            }
        }
    }

    /// d/dθ of [`log_density`](Self::log_density).
    pub fn d_log_density(&self, theta: f64) -> f64 {
        match *self {
            ParamMap::Normal { mean, std } => -(theta - mean) / (std * std),
            ParamMap::LogNormal { mu, sigma } => -(1.0 + (theta.ln() - mu) / (sigma * sigma)) / theta,
            ParamMap::Rayleigh { loc, scale } => {
                let r = theta - loc;
                1.0 / r - r / (scale * scale)
            }
        }
    }

    /// CDF of the target law.
    pub fn cdf(&self, theta: f64) -> f64 {
        match *self {
            ParamMap::Normal { mean, std } => std_normal_cdf((theta - mean) / std),
            ParamMap::LogNormal { mu, sigma } => {
                if theta <= 0.0 {
                    0.0
                } else {
                    std_normal_cdf((theta.ln() - mu) / sigma)
                }
            }
            ParamMap::Rayleigh { loc, scale } => {
                let r = (theta - loc).max(0.0);
                -(-r * r / (2.0 * scale * scale)).exp_m1()
            }
        }
    }
}

/// Apply a list of coordinate maps to a standard normal vector.
pub fn psi_forward(maps: &[ParamMap], alpha: &[f64]) -> Result<Vec<f64>> {
    if maps.len() != alpha.len() {
        return domain(format!("{} maps for a {}-dimensional draw", maps.len(), alpha.len()));
    }
    Ok(maps.iter().zip(alpha).map(|(m, &a)| m.forward(a)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn all_maps() -> Vec<ParamMap> {
        vec![
            ParamMap::normal(0.6),
            ParamMap::Normal { mean: 1.0, std: 0.1 },
            ParamMap::LogNormal { mu: 0.0, sigma: 0.6 },
            ParamMap::Rayleigh { loc: 0.0, scale: 2.0 },
            ParamMap::Rayleigh { loc: 0.8, scale: 1.4 },
        ]
    }

    #[test]
    fn medians() {
        assert_eq!(ParamMap::normal(0.6).forward(0.0), 0.0);
        assert!((ParamMap::normal(0.6).forward(1.5) - 0.9).abs() < 1e-15);
        assert_eq!(ParamMap::LogNormal { mu: 0.0, sigma: 0.6 }.median(), 1.0);
        let ray = ParamMap::Rayleigh { loc: 0.0, scale: 2.0 }.median();
        assert!((ray - 2.0 * (2.0 * 2f64.ln()).sqrt()).abs() < 1e-12);
        assert!((ray - 2.3548).abs() < 1e-4);
    }

    #[test]
    fn strictly_increasing_on_a_grid() {
        for m in all_maps() {
            let vals: Vec<f64> = (0..1000).map(|i| m.forward(-6.0 + 12.0 * i as f64 / 999.0)).collect();
            assert!(vals.windows(2).all(|w| w[1] > w[0]), "{m:?}");
        }
    }

    #[test]
    fn forward_inverts_the_cdf() {
        for m in all_maps() {
            for &a in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
                assert!((m.cdf(m.forward(a)) - std_normal_cdf(a)).abs() < 1e-12, "{m:?} at {a}");
            }
        }
    }

    #[test]
    fn derivative_matches_finite_differences() {
        for m in all_maps() {
            for &a in &[-2.5, -0.3, 0.0, 1.1, 3.0] {
                let h = 1e-6;
                let fd = (m.forward(a + h) - m.forward(a - h)) / (2.0 * h);
                assert!((m.derivative(a) - fd).abs() <= 1e-6 * fd.abs().max(1.0), "{m:?} at {a}");
            }
        }
    }

    #[test]
    fn density_is_the_cdf_slope() {
        for m in all_maps() {
            for &a in &[-1.5, 0.2, 1.7] {
                let t = m.forward(a);
                let h = 1e-6;
                let pdf = (m.cdf(t + h) - m.cdf(t - h)) / (2.0 * h);
                assert!((m.log_density(t).exp() - pdf).abs() < 1e-6, "{m:?}");
                let dl = (m.log_density(t + h) - m.log_density(t - h)) / (2.0 * h);
                assert!((m.d_log_density(t) - dl).abs() < 1e-5 * dl.abs().max(1.0), "{m:?}");
            }
        }
    }

    #[test]
    fn pushforward_law_passes_ks() {
        let n = 100_000;
        for (k, m) in all_maps().into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
            let mut s: Vec<f64> = (0..n).map(|_| m.forward(StandardNormal.sample(&mut rng))).collect();
            s.sort_by(f64::total_cmp);
            let ks = s
                .iter()
                .enumerate()
                .map(|(i, &v)| {
                    let f = m.cdf(v);
                    (f - i as f64 / n as f64)
                        .abs()
                        .max(((i + 1) as f64 / n as f64 - f).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks <= 0.01, "{m:?}: KS {ks}");
        }
    }

    #[test]
    fn validation() {
        assert!(ParamMap::normal(0.0).validate().is_err());
        assert!(ParamMap::LogNormal { mu: 0.0, sigma: -1.0 }.validate().is_err());
        assert!(ParamMap::Rayleigh { loc: 0.0, scale: 2.0 }.validate().is_ok());
        assert!(psi_forward(&[ParamMap::normal(1.0)], &[0.0, 1.0]).is_err());
    }
}
