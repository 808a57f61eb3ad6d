//! The smoothing density ρ(y | x̂) and its score ∇_β log ρ.
//!
//! Samples are `y = φ(x̂, ψ(α)) + σε` with `x̂ = φ(x, β)`, `α ~ N(0, I_d)` and
//! `ε ~ N(0, I_n)`. Through the resolving function this is
//! `y = φ(x, γ(ψ(α), β)) + σε`, which is the form evaluated here; it coincides
//! with the two-step form for exactly resolvable transforms.
//!
//! Two evaluation paths exist:
//!
//! * **Laplace** (σ > 0): the Gaussian-linearized log-density in α-space,
//!   expanded at the Gauss-Newton point (iterated to the posterior mode),
//!   differentiated through the
//!   resolving function.
//! * **Parameter** (σ = 0, or on request): y is a fixed function of
//!   `θ = γ(a, β)`, `a = ψ(α)`, so the density of θ,
//!   `log τ(a) − ln|det ∂γ/∂a|`, carries the whole β-dependence. Because pixel
//!   noise can be folded into the base classifier, this score is also a valid
//!   basis for bounds when σ > 0.
//!
//! Additive normalization constants are dropped throughout.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::digest::json_digest;
use crate::error::{domain, Error, Result};
use crate::numerics::{gauss_newton_solve, log_det_spd, pinv, Matrix};
use crate::rng::stream_rng;
use crate::tensor::Image;
use crate::transforms::{CompositeTransform, ParamMap, ResolvableTransform, FD_STEP};

/// Which log-density is differentiated for the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityPath {
    /// Parameter path when σ = 0, Laplace otherwise.
    #[default]
    Auto,
    Parameter,
    Laplace,
}

/// Everything that defines the smoothing distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub sigma: f64,
    pub maps: Vec<ParamMap>,
    pub transform: CompositeTransform,
    /// N_s, Monte-Carlo draws used for bound estimation.
    pub n_samples: usize,
    #[serde(default)]
    pub path: DensityPath,
    /// Gauss-Newton iterations locating the Laplace expansion point; 1 is a
    /// single step from the evaluation parameter.
    #[serde(default = "default_laplace_iterations")]
    pub laplace_iterations: usize,
}

fn default_laplace_iterations() -> usize {
    50
}

/// One Monte-Carlo draw: parameter noise α and pixel noise ε (empty when σ = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub alpha: Vec<f64>,
    pub noise: Vec<f64>,
}

impl SmoothingSpec {
    pub fn new(transform: CompositeTransform, maps: Vec<ParamMap>, sigma: f64, n_samples: usize) -> Result<Self> {
        let spec = Self {
            sigma,
            maps,
            transform,
            n_samples,
            path: DensityPath::Auto,
            laplace_iterations: default_laplace_iterations(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_path(mut self, path: DensityPath) -> Result<Self> {
        self.path = path;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return domain(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        if self.maps.len() != self.transform.dim() {
            return domain(format!(
                "{} distributions for a {}-parameter transform chain",
                self.maps.len(),
                self.transform.dim()
            ));
        }
        for m in &self.maps {
            m.validate()?;
        }
        if self.n_samples == 0 {
            return domain("n_samples must be positive");
        }
        if self.laplace_iterations == 0 {
            return domain("laplace_iterations must be at least 1");
        }
        if self.path == DensityPath::Laplace && self.sigma == 0.0 {
            return domain("the Laplace path needs sigma > 0");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.transform.dim()
    }

    pub fn beta0(&self) -> Vec<f64> {
        self.transform.identity()
    }

    pub fn uses_parameter_path(&self) -> bool {
        match self.path {
            DensityPath::Auto => self.sigma == 0.0,
            DensityPath::Parameter => true,
            DensityPath::Laplace => false,
        }
    }

    pub fn psi(&self, alpha: &[f64]) -> Vec<f64> {
        self.maps.iter().zip(alpha).map(|(m, &a)| m.forward(a)).collect()
    }

    fn psi_derivative(&self, alpha: &[f64]) -> Vec<f64> {
        self.maps.iter().zip(alpha).map(|(m, &a)| m.derivative(a)).collect()
    }

    pub fn digest(&self) -> Result<String> {
        json_digest(self)
    }

    /// Draw `k` of the run seeded by `seed`: α first, then `n_pixels` noise
    /// values when σ > 0. Independent of any other draw.
    pub fn draw(&self, seed: u64, k: u64, n_pixels: usize) -> Draw {
        let mut rng = stream_rng(seed, k);
        let alpha = (0..self.dim()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let noise = if self.sigma > 0.0 {
            (0..n_pixels).map(|_| StandardNormal.sample(&mut rng)).collect()
        } else {
            Vec::new()
        };
        Draw { alpha, noise }
    }
}

/// `φ(x̂, ψ(α)) + σ·noise`, unclamped.
pub fn sample_y(spec: &SmoothingSpec, x_hat: &Image<f64>, alpha: &[f64], noise: &[f64]) -> Result<Image<f64>> {
    let y = spec.transform.apply(x_hat, &spec.psi(alpha))?;
    if spec.sigma == 0.0 {
        return Ok(y);
    }
    y.add_scaled(noise, spec.sigma)
}

/// Terms of the Laplace estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDensityEval {
    pub z: f64,
    pub alpha0: Vec<f64>,
    pub m: Matrix<f64>,
    pub mu: Vec<f64>,
}

fn fd_step(v: f64) -> f64 {
    FD_STEP * v.abs().max(1.0)
}

/// ∂γ/∂a and ∂γ/∂β at (a, β) by central differences on the resolving function.
pub fn resolve_jacobians<R: ResolvableTransform + ?Sized>(
    transform: &R,
    a: &[f64],
    beta: &[f64],
) -> Result<(Matrix<f64>, Matrix<f64>)> {
    let d = a.len();
    let partials = |wrt_a: bool| -> Result<Matrix<f64>> {
        let mut cols = Vec::with_capacity(d);
        let (mut aa, mut bb) = (a.to_vec(), beta.to_vec());
        for j in 0..d {
            let v = if wrt_a { a[j] } else { beta[j] };
            let h = fd_step(v);
            let slot = |aa: &mut Vec<f64>, bb: &mut Vec<f64>, val: f64| {
                if wrt_a {
                    aa[j] = val
                } else {
                    bb[j] = val
                }
            };
            slot(&mut aa, &mut bb, v + h);
            let plus = transform.resolve(&aa, &bb)?;
            slot(&mut aa, &mut bb, v - h);
            let minus = transform.resolve(&aa, &bb)?;
            slot(&mut aa, &mut bb, v);
            cols.push(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect());
        }
        Matrix::from_columns(d, &cols)
    };
    Ok((partials(true)?, partials(false)?))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Laplace estimate of log ρ(y | φ(x, β)) for the model
/// `a ↦ φ(x, γ(ψ(a), β))`, starting the Gauss-Newton iteration at α.
///
/// Each step linearizes at the current point and moves to the minimizer of
/// the linearized problem (halving the step until
/// `‖y − φ‖² + σ²‖a‖²` does not increase). The estimate is formed at the
/// last linearization point, which is the posterior mode once converged.
pub fn laplace_log_rho_at(
    spec: &SmoothingSpec,
    y: &Image<f64>,
    x: &Image<f64>,
    beta: &[f64],
    alpha: &[f64],
) -> Result<LogDensityEval> {
    let mut lin = alpha.to_vec();
    let mut eval = linearized(spec, y, x, beta, &lin)?;
    if spec.laplace_iterations == 1 {
        return Ok(eval);
    }
    let t = &spec.transform;
    let s2 = spec.sigma * spec.sigma;
    let objective = |a: &[f64]| -> f64 {
        let fit = t.resolve(&spec.psi(a), beta).and_then(|theta| t.apply(x, &theta));
        match fit {
            Ok(m) => {
                let r: f64 = y.data().iter().zip(m.data()).map(|(u, v)| (u - v) * (u - v)).sum();
                r + s2 * a.iter().map(|v| v * v).sum::<f64>()
            }
            Err(_) => f64::INFINITY,
        }
    };
    let mut current = objective(&lin);
    for _ in 1..spec.laplace_iterations {
        let step: Vec<f64> = eval.alpha0.iter().zip(&lin).map(|(a, l)| a - l).collect();
        if norm(&step) <= 1e-13 * (1.0 + norm(&lin)) {
            break;
        }
        let mut scale = 1.0;
        let mut accepted = None;
        while scale >= 1.0 / 1024.0 {
            let cand: Vec<f64> = lin.iter().zip(&step).map(|(l, s)| l + scale * s).collect();
            let f = objective(&cand);
            if f <= current {
                accepted = Some((cand, f));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, f)) = accepted else { break };
        lin = cand;
        current = f;
        eval = linearized(spec, y, x, beta, &lin)?;
    }
    Ok(eval)
}

/// Laplace terms for the model linearized at `alpha`.
fn linearized(
    spec: &SmoothingSpec,
    y: &Image<f64>,
    x: &Image<f64>,
    beta: &[f64],
    alpha: &[f64],
) -> Result<LogDensityEval> {
    if !(spec.sigma > 0.0) {
        return domain("the Laplace estimate needs sigma > 0");
    }
    if !spec.transform.is_differentiable() {
        return Err(Error::UnsupportedTransform(
            "pixel-space density of an integer translation is not differentiable; \
             use the parameter path (sigma = 0 or path = parameter)"
                .into(),
        ));
    }
    if y.shape() != x.shape() {
        return Err(Error::Contract("y and x differ in shape".into()));
    }
    let t = &spec.transform;
    let d = spec.dim();
    let a = spec.psi(alpha);
    let theta = t.resolve(&a, beta)?;
    let model = t.apply(x, &theta)?;
    let (ga, _) = resolve_jacobians(t, &a, beta)?;
    let dpsi = spec.psi_derivative(alpha);
    // ∂θ/∂α = ∂γ/∂a · diag(ψ'(α))
    let mut chain = ga;
    for j in 0..d {
        for i in 0..d {
            chain[(i, j)] *= dpsi[j];
        }
    }
    let jac = t.jacobian(x, &theta)?.matmul(&chain);
    let j_alpha = jac.matvec(alpha);
    let mu: Vec<f64> = y
        .data()
        .iter()
        .zip(model.data())
        .zip(&j_alpha)
        .map(|((yv, mv), ja)| yv - mv + ja)
        .collect();
    let s2 = spec.sigma * spec.sigma;
    let m = jac.gram_shifted(s2);
    let rhs = jac.tr_matvec(&mu);
    let alpha0 = gauss_newton_solve(&m, &rhs)?;
    let quad: f64 = m.matvec(&alpha0).iter().zip(&alpha0).map(|(u, v)| u * v).sum();
    let mu_sq: f64 = mu.iter().map(|v| v * v).sum();
    let z = (-mu_sq + quad) / (2.0 * s2) - 0.5 * log_det_spd(&m)?;
    Ok(LogDensityEval { z, alpha0, m, mu })
}

/// Laplace estimate of log ρ(y | x̂) linearized at α (x̂ taken as given).
pub fn laplace_log_rho(
    spec: &SmoothingSpec,
    y: &Image<f64>,
    x_hat: &Image<f64>,
    alpha: &[f64],
) -> Result<LogDensityEval> {
    laplace_log_rho_at(spec, y, x_hat, &spec.beta0(), alpha)
}

/// Parameter-space log-density `Σ log τᵢ(aᵢ) − ln|det ∂γ/∂a(a, β)|`.
pub fn param_log_rho(spec: &SmoothingSpec, a: &[f64], beta: &[f64]) -> Result<f64> {
    let (ga, _) = resolve_jacobians(&spec.transform, a, beta)?;
    let det = determinant(&ga);
    if det == 0.0 || !det.is_finite() {
        return Err(Error::DegenerateTransform(format!(
            "∂γ/∂a is singular at a={a:?}, β={beta:?}"
        )));
    }
    let log_tau: f64 = spec.maps.iter().zip(a).map(|(m, &v)| m.log_density(v)).sum();
    Ok(log_tau - det.abs().ln())
}

fn determinant(m: &Matrix<f64>) -> f64 {
    // LU with partial pivoting; d is tiny.
    let n = m.rows();
    let mut a: Vec<f64> = m.as_slice().to_vec();
    let mut det = 1.0;
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i * n + c].abs().total_cmp(&a[j * n + c].abs()))
            .unwrap();
        if a[p * n + c] == 0.0 {
            return 0.0;
        }
        if p != c {
            for k in 0..n {
                a.swap(p * n + k, c * n + k);
            }
            det = -det;
        }
        det *= a[c * n + c];
        for r in c + 1..n {
            let f = a[r * n + c] / a[c * n + c];
            for k in c..n {
                a[r * n + k] -= f * a[c * n + k];
            }
        }
    }
    det
}

fn central_diff(f: impl Fn(&[f64]) -> Result<f64>, at: &[f64]) -> Result<Vec<f64>> {
    let mut p = at.to_vec();
    let mut g = Vec::with_capacity(at.len());
    for j in 0..at.len() {
        let h = fd_step(at[j]);
        p[j] = at[j] + h;
        let plus = f(&p)?;
        p[j] = at[j] - h;
        let minus = f(&p)?;
        p[j] = at[j];
        g.push((plus - minus) / (2.0 * h));
    }
    Ok(g)
}

/// `∂z/∂β − ∂z/∂a · (∂γ/∂a)† · ∂γ/∂β` for row vectors `dz_da`, `dz_db`.
fn lemma_combine(dz_db: &[f64], dz_da: &[f64], ga: &Matrix<f64>, gb: &Matrix<f64>) -> Vec<f64> {
    let correction = gb.tr_matvec(&pinv(ga).tr_matvec(dz_da));
    dz_db.iter().zip(&correction).map(|(u, v)| u - v).collect()
}

/// Score ∇_β log ρ(y | φ(x, β)) at the sample `y` generated by `draw` at β.
pub fn grad_log_rho_beta(spec: &SmoothingSpec, x: &Image<f64>, draw: &Draw, beta: &[f64]) -> Result<Vec<f64>> {
    if beta.len() != spec.dim() || draw.alpha.len() != spec.dim() {
        return domain("parameter dimension mismatch");
    }
    if spec.uses_parameter_path() {
        return grad_param_path(spec, &spec.psi(&draw.alpha), beta);
    }
    if draw.noise.len() != x.len() {
        return domain("pixel noise length differs from the image size");
    }
    let t = &spec.transform;
    // y(α, β) = φ(x, γ(ψ(α), β)) + σε; z(α, β) = Laplace value at y(α, β), x̂(β).
    let z = |alpha: &[f64], beta: &[f64]| -> Result<f64> {
        let theta = t.resolve(&spec.psi(alpha), beta)?;
        let y = t.apply(x, &theta)?.add_scaled(&draw.noise, spec.sigma)?;
        Ok(laplace_log_rho_at(spec, &y, x, beta, alpha)?.z)
    };
    let dz_da = central_diff(|a| z(a, beta), &draw.alpha)?;
    let dz_db = central_diff(|b| z(&draw.alpha, b), beta)?;
    // γ̃(α, β) = γ(ψ(α), β)
    let (mut ga, gb) = resolve_jacobians(t, &spec.psi(&draw.alpha), beta)?;
    let dpsi = spec.psi_derivative(&draw.alpha);
    for j in 0..spec.dim() {
        for i in 0..spec.dim() {
            ga[(i, j)] *= dpsi[j];
        }
    }
    Ok(lemma_combine(&dz_db, &dz_da, &ga, &gb))
}

fn grad_param_path(spec: &SmoothingSpec, a: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    let t = &spec.transform;
    let log_det = |a: &[f64], b: &[f64]| -> Result<f64> {
        let (ga, _) = resolve_jacobians(t, a, b)?;
        Ok(determinant(&ga).abs().ln())
    };
    let ddet_da = central_diff(|v| log_det(v, beta), a)?;
    let ddet_db = central_diff(|v| log_det(a, v), beta)?;
    let dz_da: Vec<f64> = spec
        .maps
        .iter()
        .zip(a)
        .zip(&ddet_da)
        .map(|((m, &v), dd)| m.d_log_density(v) - dd)
        .collect();
    let dz_db: Vec<f64> = ddet_db.iter().map(|v| -v).collect();
    let (ga, gb) = resolve_jacobians(t, a, beta)?;
    let g = lemma_combine(&dz_db, &dz_da, &ga, &gb);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateTransform(format!(
            "non-finite score at a={a:?}, β={beta:?}"
        )));
    }
    Ok(g)
}
