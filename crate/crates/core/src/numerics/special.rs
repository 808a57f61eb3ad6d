//! Normal and Beta distribution functions and their inverses.
//!
//! The forward functions (`erfc`, regularized incomplete beta) come from
//! `statrs`; the inverses are safeguarded Newton iterations inside a
//! bisection bracket so that every step keeps the root enclosed.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::beta::{checked_beta_reg, ln_beta};
use statrs::function::erf::erfc;

use crate::error::{domain, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// ln(1 − Φ(x)), accurate far into the upper tail.
pub fn log_std_normal_sf(x: f64) -> f64 {
    if x < 30.0 {
        (0.5 * erfc(x / SQRT_2)).ln()
    } else {
        // Asymptotic Mills ratio.
        let x2 = x * x;
        -0.5 * x2 - x.ln() - LN_SQRT_2PI + (1.0 - 1.0 / x2 + 3.0 / (x2 * x2)).ln()
    }
}

/// Acklam's rational approximation, relative error about 1e-9.
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -acklam(1.0 - p)
    }
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn std_normal_inv_cdf(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("normal quantile needs p in (0, 1), got {p}"));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return Ok(-std_normal_inv_cdf(1.0 - p)?);
    }
    // Lower half: solve ln Φ(x) = ln p, monotone increasing in x.
    let target = p.ln();
    let f = |x: f64| log_std_normal_sf(-x) - target;
    let mut x = acklam(p);
    let (mut lo, mut hi) = (x - 0.5, (x + 0.5).min(0.0));
    while f(lo) > 0.0 {
        lo -= 1.0;
    }
    while f(hi) < 0.0 {
        hi += 0.5;
    }
    for _ in 0..100 {
        let fx = f(x);
        if fx == 0.0 {
            break;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        // d/dx ln Φ(x) = φ(x)/Φ(x)
        let slope = (std_normal_pdf(x).ln() - log_std_normal_sf(-x)).exp();
        let mut next = x - fx / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1.0) {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Regularized incomplete beta I_x(a, b).
pub fn beta_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    checked_beta_reg(a, b, x.clamp(0.0, 1.0)).map_err(|e| crate::error::Error::Domain(format!("incomplete beta: {e}")))
}

/// x with I_x(a, b) = p.
pub fn beta_inv_cdf(p: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return domain(format!("beta shapes must be positive and finite, got a={a}, b={b}"));
    }
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("beta quantile needs p in [0, 1], got {p}"));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    if p == 1.0 {
        return Ok(1.0);
    }
    let ln_b = ln_beta(a, b);
    let log_pdf = |x: f64| (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln() - ln_b;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut x = 0.5;
    for _ in 0..400 {
        let fx = beta_reg(a, b, x)? - p;
        if fx == 0.0 {
            return Ok(x);
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - fx / log_pdf(x).exp();
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (hi - lo) < 1e-16 || (next - x).abs() < 1e-16 {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}
