//! Piecewise-linear interpolation in one dimension and multilinear
//! interpolation on tensor-product grids. Both clamp outside the knot range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpolant<T> {
    knots: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> Interpolant<T> {
    pub fn new(knots: Vec<T>, values: Vec<T>) -> Result<Self> {
        if knots.is_empty() || knots.len() != values.len() {
            return Err(Error::Consistency(format!(
                "{} knots and {} values",
                knots.len(),
                values.len()
            )));
        }
        if knots.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("interpolation knots must be strictly increasing".into()));
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::Domain("interpolation data must be finite".into()));
        }
        Ok(Self { knots, values })
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn domain(&self) -> (T, T) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    pub fn eval(&self, x: T) -> T {
        let n = self.knots.len();
        if x <= self.knots[0] {
            return self.values[0];
        }
        if x >= self.knots[n - 1] {
            return self.values[n - 1];
        }
        // First knot strictly greater than x.
        let hi = self.knots.partition_point(|&k| k <= x);
        let lo = hi - 1;
        if x == self.knots[lo] {
            return self.values[lo];
        }
        let w = (x - self.knots[lo]) / (self.knots[hi] - self.knots[lo]);
        self.values[lo] + w * (self.values[hi] - self.values[lo])
    }

    pub fn is_non_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] >= w[0])
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] > w[0])
    }
}

/// Values on the tensor product of per-dimension axes, last axis fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInterpolant {
    axes: Vec<Vec<f64>>,
    values: Vec<f64>,
}

impl GridInterpolant {
    pub fn new(axes: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::Domain("grid needs at least one axis".into()));
        }
        for axis in &axes {
            if axis.is_empty() || axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Domain(
                    "grid axes must be non-empty and strictly increasing".into(),
                ));
            }
        }
        let count: usize = axes.iter().map(Vec::len).product();
        if values.len() != count {
            return Err(Error::Consistency(format!(
                "{} values for a grid of {count} nodes",
                values.len()
            )));
        }
        Ok(Self { axes, values })
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Whether `x` lies inside the hull of the grid (tolerance 1e-12).
    pub fn contains(&self, x: &[f64]) -> bool {
        self.axes
            .iter()
            .zip(x)
            .all(|(axis, &v)| v >= axis[0] - 1e-12 && v <= axis[axis.len() - 1] + 1e-12)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.axes.len(), "query dimension mismatch");
        let d = self.axes.len();
        // Per-axis bracketing index and weight of the upper node.
        let mut lower = Vec::with_capacity(d);
        let mut weight = Vec::with_capacity(d);
        for (axis, &v) in self.axes.iter().zip(x) {
            let n = axis.len();
            if n == 1 || v <= axis[0] {
                lower.push(0);
                weight.push(0.0);
            } else if v >= axis[n - 1] {
                lower.push(n - 2);
                weight.push(1.0);
            } else {
                let hi = axis.partition_point(|&k| k <= v).min(n - 1);
                let lo = hi - 1;
                lower.push(lo);
                weight.push((v - axis[lo]) / (axis[hi] - axis[lo]));
            }
        }
        let mut total = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                let n = self.axes[k].len();
                let idx = if n == 1 { 0 } else { lower[k] + usize::from(up) };
                w *= if up { weight[k] } else { 1.0 - weight[k] };
                flat = flat * n + idx;
            }
            if w != 0.0 {
                total += w * self.values[flat];
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn knots_are_reproduced_exactly() {
        let f = Interpolant::<f64>::new(vec![0.0, 0.3, 1.0], vec![1.0, -2.0, 5.5]).unwrap();
        assert_eq!(f.eval(0.3), -2.0);
        assert_eq!(f.eval(1.0), 5.5);
        assert_eq!(f.eval(-4.0), 1.0);
        assert_eq!(f.eval(7.0), 5.5);
        assert!((f.eval(0.65) - 1.75).abs() < 1e-12);
    }

    #[test]
    fn rejects_unsorted_knots() {
        assert!(Interpolant::new(vec![0.0, 0.0], vec![1.0, 2.0]).is_err());
        assert!(Interpolant::new(vec![0.0], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn bilinear_reproduces_affine_functions() {
        let axes = vec![vec![0.0, 1.0, 3.0], vec![-1.0, 0.0, 2.0, 4.0]];
        let mut values = Vec::new();
        for &a in &axes[0] {
            for &b in &axes[1] {
                values.push(2.0 * a - 0.5 * b + 1.0);
            }
        }
        let g = GridInterpolant::new(axes, values).unwrap();
        for &(a, b) in &[(0.5, 1.0), (2.2, -0.3), (3.0, 4.0), (0.0, -1.0)] {
            assert!((g.eval(&[a, b]) - (2.0 * a - 0.5 * b + 1.0)).abs() < 1e-12);
        }
        // clamped outside
        assert!((g.eval(&[10.0, 0.0]) - 7.0).abs() < 1e-12);
        assert!(!g.contains(&[10.0, 0.0]));
    }

    #[test]
    fn singleton_axis() {
        let g = GridInterpolant::new(vec![vec![2.0], vec![0.0, 1.0]], vec![3.0, 5.0]).unwrap();
        assert_eq!(g.eval(&[7.0, 0.5]), 4.0);
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(
            steps in proptest::collection::vec(0.0f64..2.0, 2..20),
            queries in proptest::collection::vec(-1.0f64..25.0, 2..30),
        ) {
            let knots: Vec<f64> = (0..steps.len()).map(|i| i as f64).collect();
            let values: Vec<f64> = steps.iter().scan(0.0, |acc, s| { *acc += s; Some(*acc) }).collect();
            let f = Interpolant::new(knots, values).unwrap();
            let mut q = queries.clone();
            q.sort_by(f64::total_cmp);
            for w in q.windows(2) {
                prop_assert!(f.eval(w[0]) <= f.eval(w[1]) + 1e-12);
            }
        }
    }
}
