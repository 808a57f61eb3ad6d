//! Ordered chains of transforms and their joint resolving function.
//!
//! Resolving a chain means rewriting `[β₁ … β_k, α₁ … α_k]` (applied left to
//! right) into `[θ₁ … θ_k]`. Each αᵢ is moved left past the β_j with j > i
//! using a pairwise exchange rule, after which it sits next to βᵢ and is
//! merged with that part's own γ.

use serde::{Deserialize, Serialize};

use super::{ResolvableTransform, Transform, FD_STEP};
use crate::error::{domain, Error, Result};
use crate::numerics::Matrix;
use crate::scalar::Scalar;
use crate::tensor::Image;

use super::Padding;

/// Rewrite `later(earlier(z, b), a)` as `earlier(later(z, a'), b')`,
/// returning `(a', b')`, or `None` when no such identity is registered.
fn exchange(later: Transform, a: &[f64], earlier: Transform, b: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    use Transform::*;
    let commute = || Some((a.to_vec(), b.to_vec()));
    match (later, earlier) {
        (x, y) if x == y => commute(),
        (Contrast, Brightness) => Some((a.to_vec(), vec![a[0] * b[0]])),
        (Brightness, Contrast) => Some((vec![a[0] / b[0]], b.to_vec())),
        (Gamma, Contrast) => Some((a.to_vec(), vec![b[0].powf(a[0])])),
        (Contrast, Gamma) => Some((vec![a[0].powf(1.0 / b[0])], b.to_vec())),
        (Brightness | Contrast | Gamma, Translate { .. }) | (Translate { .. }, Brightness | Contrast | Gamma) => {
            commute()
        }
        (Brightness | Contrast, Blur { .. }) | (Blur { .. }, Brightness | Contrast) => commute(),
        (Translate { padding: p }, Blur { padding: q }) | (Blur { padding: q }, Translate { padding: p })
            if p == q && p == Padding::Wrap =>
        {
            commute()
        }
        _ => None,
    }
}

fn has_exchange(later: Transform, earlier: Transform) -> bool {
    let a = later.identity();
    let b = earlier.identity();
    exchange(later, &a, earlier, &b).is_some()
}

/// An ordered chain of transforms applied first to last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Transform>", into = "Vec<Transform>")]
pub struct CompositeTransform {
    parts: Vec<Transform>,
    offsets: Vec<usize>,
    dim: usize,
}

/// Build a chain, checking that every pair has a registered exchange rule.
pub fn compose(parts: Vec<Transform>) -> Result<CompositeTransform> {
    if parts.is_empty() {
        return domain("a transform chain needs at least one part");
    }
    for i in 0..parts.len() {
        for j in i + 1..parts.len() {
            if !has_exchange(parts[i], parts[j]) {
                return Err(Error::UnsupportedComposition(format!(
                    "no joint resolve for {} applied before {}{}",
                    parts[j].name(),
                    parts[i].name(),
                    match (parts[i], parts[j]) {
                        (Transform::Translate { .. }, Transform::Blur { .. })
                        | (Transform::Blur { .. }, Transform::Translate { .. }) => {
                            " (translate and blur commute only with wrap padding on both)"
                        }
                        _ => "",
                    }
                )));
            }
        }
    }
    let mut offsets = Vec::with_capacity(parts.len() + 1);
    let mut acc = 0;
    for p in &parts {
        offsets.push(acc);
        acc += p.dim();
    }
    offsets.push(acc);
    Ok(CompositeTransform {
        parts,
        offsets,
        dim: acc,
    })
}

impl TryFrom<Vec<Transform>> for CompositeTransform {
    type Error = Error;
    fn try_from(parts: Vec<Transform>) -> Result<Self> {
        compose(parts)
    }
}

impl From<CompositeTransform> for Vec<Transform> {
    fn from(c: CompositeTransform) -> Self {
        c.parts
    }
}

impl CompositeTransform {
    pub fn single(t: Transform) -> Self {
        compose(vec![t]).expect("a single transform always composes")
    }

    pub fn parts(&self) -> &[Transform] {
        &self.parts
    }

    /// Parameters of part `i` within a joint vector.
    pub fn slice<'a>(&self, params: &'a [f64], i: usize) -> &'a [f64] {
        &params[self.offsets[i]..self.offsets[i + 1]]
    }

    fn check(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.dim {
            return domain(format!("chain takes {} parameters, got {}", self.dim, params.len()));
        }
        Ok(())
    }

    pub fn is_pointwise(&self) -> bool {
        self.parts.iter().all(|p| p.pointwise().is_some())
    }

    /// Per-pixel chain rule for all-pointwise chains.
    fn pointwise_jacobian(&self, x: &Image<f64>, params: &[f64]) -> Result<Matrix<f64>> {
        // Validates domains (e.g. gamma of a negative intermediate).
        self.apply(x, params)?;
        let kinds: Vec<_> = self.parts.iter().map(|p| p.pointwise().unwrap()).collect();
        let k = kinds.len();
        let mut cols = vec![vec![0.0; x.len()]; k];
        let mut inputs = vec![0.0; k];
        for (pix, &v0) in x.data().iter().enumerate() {
            let mut v = v0;
            for (m, kind) in kinds.iter().enumerate() {
                inputs[m] = v;
                v = kind.value(v, params[m]);
            }
            let mut downstream = 1.0;
            for m in (0..k).rev() {
                cols[m][pix] = kinds[m].d_param(inputs[m], params[m]) * downstream;
                downstream *= kinds[m].d_input(inputs[m], params[m]);
            }
        }
        Matrix::from_columns(x.len(), &cols)
    }
}

impl ResolvableTransform for CompositeTransform {
    fn dim(&self) -> usize {
        self.dim
    }

    fn identity(&self) -> Vec<f64> {
        self.parts.iter().flat_map(|p| p.identity()).collect()
    }

    fn apply<T: Scalar>(&self, x: &Image<T>, params: &[f64]) -> Result<Image<T>> {
        self.check(params)?;
        let mut y = self.parts[0].apply(x, self.slice(params, 0))?;
        for (i, part) in self.parts.iter().enumerate().skip(1) {
            y = part.apply(&y, self.slice(params, i))?;
        }
        Ok(y)
    }

    fn resolve(&self, outer: &[f64], inner: &[f64]) -> Result<Vec<f64>> {
        self.check(outer)?;
        self.check(inner)?;
        let k = self.parts.len();
        let mut ops: Vec<(usize, Vec<f64>)> = (0..k)
            .map(|i| (i, self.slice(inner, i).to_vec()))
            .chain((0..k).map(|i| (i, self.slice(outer, i).to_vec())))
            .collect();
        // After i merges the list is [θ₀ … θ_{i−1}, β_i … β_{k−1}, α_i … α_{k−1}].
        for i in 0..k {
            let mut pos = k;
            while ops[pos - 1].0 != i {
                let (j, ref b) = ops[pos - 1];
                let (a2, b2) = exchange(self.parts[i], &ops[pos].1, self.parts[j], b)
                    .ok_or_else(|| Error::UnsupportedComposition("missing exchange rule".into()))?;
                ops[pos - 1] = (i, a2);
                ops[pos] = (j, b2);
                pos -= 1;
            }
            let alpha = ops.remove(pos).1;
            let merged = self.parts[i].resolve(&alpha, &ops[pos - 1].1)?;
            ops[pos - 1].1 = merged;
        }
        Ok(ops.into_iter().flat_map(|(_, p)| p).collect())
    }

    fn is_differentiable(&self) -> bool {
        self.parts.iter().all(|p| p.is_differentiable())
    }

    fn jacobian(&self, x: &Image<f64>, params: &[f64]) -> Result<Matrix<f64>> {
        self.check(params)?;
        if self.is_pointwise() {
            self.pointwise_jacobian(x, params)
        } else {
            super::jacobian_fd(self, x, params, FD_STEP)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::jacobian_fd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64) -> Image<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(6, 6, 1, |_, _, _| rng.random_range(0.05..0.95)).unwrap()
    }

    #[test]
    fn contrast_brightness_resolve() {
        let c = compose(vec![Transform::Contrast, Transform::Brightness]).unwrap();
        assert_eq!(c.dim(), 2);
        assert_eq!(c.identity(), vec![1.0, 0.0]);
        let r = c.resolve(&[0.5, 0.0], &[2.0, 0.1]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-15 && (r[1] - 0.05).abs() < 1e-15);
        let x = random_image(1);
        assert!(c.apply(&x, &[1.0, 0.0]).unwrap().max_abs_diff(&x) <= 1e-15);
    }

    #[test]
    fn four_way_identity() {
        let c = compose(vec![
            Transform::translate(),
            Transform::Blur { padding: Padding::Wrap },
            Transform::Brightness,
            Transform::Contrast,
        ])
        .unwrap();
        assert_eq!(c.identity(), vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let x = random_image(2);
        assert_eq!(c.apply(&x, &c.identity()).unwrap(), x);
    }

    #[test]
    fn unsupported_pairs() {
        for parts in [
            vec![Transform::Brightness, Transform::Gamma],
            vec![Transform::Gamma, Transform::Brightness],
            vec![Transform::Gamma, Transform::blur()],
            vec![Transform::translate(), Transform::blur()],
        ] {
            assert!(matches!(compose(parts), Err(Error::UnsupportedComposition(_))));
        }
        assert!(compose(vec![]).is_err());
    }

    fn check_law(c: &CompositeTransform, sample: &mut dyn FnMut(&mut ChaCha8Rng) -> Vec<f64>, tol: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for case in 0..100 {
            let x = random_image(500 + case);
            let inner = sample(&mut rng);
            let outer = sample(&mut rng);
            let lhs = c.apply(&c.apply(&x, &inner).unwrap(), &outer).unwrap();
            let rhs = c.apply(&x, &c.resolve(&outer, &inner).unwrap()).unwrap();
            let err = lhs.max_abs_diff(&rhs);
            assert!(err <= tol, "{:?}: {err}", c.parts());
        }
    }

    #[test]
    fn composite_resolvability() {
        let cb = compose(vec![Transform::Contrast, Transform::Brightness]).unwrap();
        check_law(
            &cb,
            &mut |r| vec![r.random_range(0.3..3.0), r.random_range(-0.5..0.5)],
            1e-10,
        );
        let bc = compose(vec![Transform::Brightness, Transform::Contrast]).unwrap();
        check_law(
            &bc,
            &mut |r| vec![r.random_range(-0.5..0.5), r.random_range(0.3..3.0)],
            1e-10,
        );
        let gc = compose(vec![Transform::Gamma, Transform::Contrast]).unwrap();
        check_law(
            &gc,
            &mut |r| vec![r.random_range(0.3..3.0), r.random_range(0.3..3.0)],
            1e-10,
        );
        let cg = compose(vec![Transform::Contrast, Transform::Gamma]).unwrap();
        check_law(
            &cg,
            &mut |r| vec![r.random_range(0.3..3.0), r.random_range(0.3..3.0)],
            1e-10,
        );
        let tb = compose(vec![Transform::translate(), Transform::Brightness, Transform::Contrast]).unwrap();
        check_law(
            &tb,
            &mut |r| {
                vec![
                    r.random_range(-3..=3) as f64,
                    r.random_range(-3..=3) as f64,
                    r.random_range(-0.5..0.5),
                    r.random_range(0.3..3.0),
                ]
            },
            1e-10,
        );
    }

    #[test]
    fn chain_jacobian_matches_fd() {
        let x = random_image(9);
        for (parts, p) in [
            (vec![Transform::Contrast, Transform::Brightness], vec![1.3, 0.1]),
            (vec![Transform::Gamma, Transform::Contrast], vec![1.4, 0.8]),
            (vec![Transform::Contrast, Transform::Gamma], vec![0.9, 0.7]),
            (vec![Transform::Brightness, Transform::Contrast], vec![-0.2, 1.1]),
        ] {
            let c = compose(parts).unwrap();
            let a = c.jacobian(&x, &p).unwrap();
            let fd = jacobian_fd(&c, &x, &p, 1e-5).unwrap();
            assert!(a.sub(&fd).max_abs() < 1e-8, "{:?}", c.parts());
        }
    }

    #[test]
    fn serde_round_trip() {
        let c = compose(vec![Transform::Contrast, Transform::Brightness]).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(s, r#"[{"name":"contrast"},{"name":"brightness"}]"#);
        let back: CompositeTransform = serde_json::from_str(&s).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<CompositeTransform>(r#"[{"name":"gamma"},{"name":"brightness"}]"#).is_err());
    }
}
