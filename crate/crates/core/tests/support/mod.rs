//! Independent oracles shared by integration and acceptance tests.
#![allow(dead_code)]

use glcert::density::{grad_log_rho_beta, SmoothingSpec};
use glcert::transforms::{compose, CompositeTransform, ParamMap, ResolvableTransform, Transform};
use glcert::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_image(h: usize, w: usize, seed: u64) -> Image<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Image::from_fn(h, w, 1, |_, _, _| rng.random_range(0.1..0.9)).unwrap()
}

/// Smooth random image: a few Gaussian bumps on a ramp.
pub fn smooth_image(h: usize, w: usize, seed: u64) -> Image<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bumps: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.random_range(0.0..h as f64),
                rng.random_range(0.0..w as f64),
                rng.random_range(2.0..5.0),
                rng.random_range(-0.3..0.3),
            )
        })
        .collect();
    Image::from_fn(h, w, 1, |r, c, _| {
        let base = 0.3 + 0.3 * (r + c) as f64 / (h + w) as f64;
        let v: f64 = bumps
            .iter()
            .map(|&(br, bc, s, a)| a * (-((r as f64 - br).powi(2) + (c as f64 - bc).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        (base + v).clamp(0.0, 1.0)
    })
    .unwrap()
}

/// Worst composition error `‖φ(φ(x, β), α) − φ(x, γ(α, β))‖∞` over `cases`
/// random draws for one transform.
pub fn resolvability_error(name: &str, cases: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ cases);
    let mut worst: f64 = 0.0;
    for case in 0..cases {
        let (t, inner, outer, x) = match name {
            "brightness" => (
                Transform::Brightness,
                vec![rng.random_range(-0.5..0.5)],
                vec![rng.random_range(-0.5..0.5)],
                random_image(28, 28, case),
            ),
            "contrast" => (
                Transform::Contrast,
                vec![rng.random_range(0.3..3.0)],
                vec![rng.random_range(0.3..3.0)],
                random_image(28, 28, case),
            ),
            "gamma" => (
                Transform::Gamma,
                vec![rng.random_range(0.3..3.0)],
                vec![rng.random_range(0.3..3.0)],
                random_image(28, 28, case),
            ),
            "translate" => (
                Transform::translate(),
                vec![rng.random_range(-8..=8) as f64, rng.random_range(-8..=8) as f64],
                vec![rng.random_range(-8..=8) as f64, rng.random_range(-8..=8) as f64],
                random_image(28, 28, case),
            ),
            "blur" => (
                Transform::blur(),
                vec![rng.random_range(1.0..2.5)],
                vec![rng.random_range(1.0..2.5)],
                smooth_image(28, 28, case),
            ),
            other => panic!("unknown transform {other}"),
        };
        let lhs = t.apply(&t.apply(&x, &inner).unwrap(), &outer).unwrap();
        let rhs = t.apply(&x, &t.resolve(&outer, &inner).unwrap()).unwrap();
        worst = worst.max(lhs.max_abs_diff(&rhs));
    }
    worst
}

/// One transform configuration for the score check.
pub struct ScoreCase {
    pub name: &'static str,
    pub spec: SmoothingSpec,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

/// Pixel noise for the score checks. The Laplace estimate is accurate when
/// the likelihood pins the parameter down; see `score_cases` for blur.
pub const SCORE_SIGMA: f64 = 0.01;

/// Blur uses a lognormal radius: with a Rayleigh law, draws near zero extra
/// radius make the α-posterior one-sided and the Gaussian approximation
/// fails outright.
pub fn score_cases() -> Vec<ScoreCase> {
    let single = |t: Transform, map: ParamMap| {
        SmoothingSpec::new(CompositeTransform::single(t), vec![map], SCORE_SIGMA, 1).unwrap()
    };
    vec![
        ScoreCase {
            name: "brightness",
            spec: single(Transform::Brightness, ParamMap::normal(0.3)),
            lo: vec![-0.3],
            hi: vec![0.3],
        },
        ScoreCase {
            name: "contrast",
            spec: single(Transform::Contrast, ParamMap::LogNormal { mu: 0.0, sigma: 0.2 }),
            lo: vec![0.7],
            hi: vec![1.4],
        },
        ScoreCase {
            name: "gamma",
            spec: single(Transform::Gamma, ParamMap::LogNormal { mu: 0.0, sigma: 0.2 }),
            lo: vec![0.7],
            hi: vec![1.4],
        },
        ScoreCase {
            name: "blur",
            spec: single(Transform::blur(), ParamMap::LogNormal { mu: -0.223, sigma: 0.2 }),
            lo: vec![0.4],
            hi: vec![1.2],
        },
        ScoreCase {
            name: "contrast-brightness",
            spec: SmoothingSpec::new(
                compose(vec![Transform::Contrast, Transform::Brightness]).unwrap(),
                vec![ParamMap::LogNormal { mu: 0.0, sigma: 0.2 }, ParamMap::normal(0.2)],
                SCORE_SIGMA,
                1,
            )
            .unwrap(),
            lo: vec![0.8, -0.2],
            hi: vec![1.25, 0.2],
        },
    ]
}

/// log ∫ N(α; 0, I) · N(y; φ(x, γ(ψ(α), β)), σ²I) dα up to a β-independent
/// constant, by the trapezoid rule on `grid` (same grid for every β so
/// finite differences cancel the discretization).
struct AlphaGrid {
    points: Vec<Vec<f64>>,
}

impl AlphaGrid {
    fn line(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn new(center: &[f64], half: f64, n: usize) -> Self {
        let axes: Vec<Vec<f64>> = center.iter().map(|&c| Self::line(c - half, c + half, n)).collect();
        let mut points = vec![vec![]];
        for axis in &axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push(v);
                        q
                    })
                })
                .collect();
        }
        Self { points }
    }
}

fn log_integrand(spec: &SmoothingSpec, x: &Image<f64>, y: &Image<f64>, beta: &[f64], alpha: &[f64]) -> f64 {
    let t = &spec.transform;
    let prior: f64 = alpha.iter().map(|a| -0.5 * a * a).sum();
    let theta = match t.resolve(&spec.psi(alpha), beta) {
        Ok(v) => v,
        Err(_) => return f64::NEG_INFINITY,
    };
    let model = match t.apply(x, &theta) {
        Ok(m) => m,
        Err(_) => return f64::NEG_INFINITY,
    };
    let sq: f64 = y.data().iter().zip(model.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    prior - sq / (2.0 * spec.sigma * spec.sigma)
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let top = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    top + values.iter().map(|v| (v - top).exp()).sum::<f64>().ln()
}

fn brute_log_rho(spec: &SmoothingSpec, x: &Image<f64>, y: &Image<f64>, beta: &[f64], grid: &AlphaGrid) -> f64 {
    // Integrand is negligible at the window edges, so equal weights equal
    // the trapezoid rule up to a constant factor.
    let vals: Vec<f64> = grid.points.iter().map(|a| log_integrand(spec, x, y, beta, a)).collect();
    log_sum_exp(&vals)
}

/// Integration window around the posterior mode for `y` at β.
fn window(spec: &SmoothingSpec, x: &Image<f64>, y: &Image<f64>, beta: &[f64]) -> AlphaGrid {
    let d = spec.dim();
    if d == 1 {
        return AlphaGrid::new(&[0.0], 8.0, 32_001);
    }
    let coarse = AlphaGrid::new(&vec![0.0; d], 6.0, 241);
    let best = coarse
        .points
        .iter()
        .map(|a| (log_integrand(spec, x, y, beta, a), a))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap()
        .1
        .clone();
    AlphaGrid::new(&best, 0.5, 401)
}

/// Finite-difference score of the brute-force log-density.
pub fn brute_score(spec: &SmoothingSpec, x: &Image<f64>, y: &Image<f64>, beta: &[f64]) -> Vec<f64> {
    let grid = window(spec, x, y, beta);
    (0..beta.len())
        .map(|j| {
            let h = 1e-3 * beta[j].abs().max(1.0);
            let mut b = beta.to_vec();
            b[j] = beta[j] + h;
            let up = brute_log_rho(spec, x, y, &b, &grid);
            b[j] = beta[j] - h;
            let down = brute_log_rho(spec, x, y, &b, &grid);
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Relative errors `‖η − η_brute‖ / ‖η_brute‖` at `points` random
/// (β, draw) pairs on 8×8 images. The denominator is floored at the RMS
/// score size over the evaluation set: scores cross zero continuously, and
/// downstream they only matter relative to their spread.
pub fn score_relative_errors(case: &ScoreCase, points: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_image(8, 8, seed);
    let spec = &case.spec;
    let mut pairs = Vec::with_capacity(points);
    for k in 0..points {
        let beta: Vec<f64> = case
            .lo
            .iter()
            .zip(&case.hi)
            .map(|(&l, &h)| rng.random_range(l..h))
            .collect();
        let draw = spec.draw(seed, k as u64, x.len());
        let theta = spec.transform.resolve(&spec.psi(&draw.alpha), &beta).unwrap();
        let y = spec
            .transform
            .apply(&x, &theta)
            .unwrap()
            .add_scaled(&draw.noise, spec.sigma)
            .unwrap();
        let eta = grad_log_rho_beta(spec, &x, &draw, &beta).unwrap();
        let oracle = brute_score(spec, &x, &y, &beta);
        pairs.push((eta, oracle));
    }
    let floor = (pairs.iter().map(|(_, o)| norm(o).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt();
    pairs
        .iter()
        .map(|(e, o)| {
            let diff: Vec<f64> = e.iter().zip(o).map(|(a, b)| a - b).collect();
            norm(&diff) / norm(o).max(floor)
        })
        .collect()
}
