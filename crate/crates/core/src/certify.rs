//! Certification from a bound table: the confidence-scale function ξ, the
//! path bound ĝ and the decision rule
//! `h > ½ ∧ ξ(½) − ξ(1 − h) − ĝ(β) > 0`.
//!
//! ξ and ĝ are both divided by the largest per-ray maximum of the table, so
//! the decision is invariant to how the envelope p was normalized.

use serde::{Deserialize, Serialize};

use crate::bounds::{distance, BoundTable, ParameterGrid};
use crate::error::{domain, Error, Result};
use crate::numerics::{trapezoid_path_integral, GridInterpolant, Interpolant, DEFAULT_PATH_STEPS};

/// Lower clip on p before inverting it.
pub const P_FLOOR: f64 = 1e-4;

/// Largest per-ray maximum `max_j g_j / ‖β_j − β₀‖`.
pub fn reference_scale(table: &BoundTable) -> Result<f64> {
    let m = table.slopes().into_iter().flatten().fold(0.0, f64::max);
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::DegenerateTransform("bound table has no positive slope".into()));
    }
    Ok(m)
}

/// ξ(h) = ∫₀ʰ dt / max(p(t), P_FLOOR), scaled by the reference slope.
pub fn build_xi(table: &BoundTable) -> Result<Interpolant<f64>> {
    let n = table.n_samples;
    if table.p.len() != n + 1 || n == 0 {
        return Err(Error::Consistency(
            "envelope length does not match the sample count".into(),
        ));
    }
    let scale = reference_scale(table)?;
    let inv: Vec<f64> = table.p.iter().map(|&p| 1.0 / p.max(P_FLOOR)).collect();
    let mut values = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    values.push(0.0);
    for w in inv.windows(2) {
        acc += 0.5 * (w[0] + w[1]) / n as f64;
        values.push(acc / scale);
    }
    let knots = (0..=n).map(|i| i as f64 / n as f64).collect();
    let xi = Interpolant::new(knots, values)?;
    if !xi.is_strictly_increasing() {
        return Err(Error::Consistency("ξ is not strictly increasing".into()));
    }
    Ok(xi)
}

/// Path bound ĝ(β) = ‖β − β₀‖ · ∫₀¹ m(β₀ + t(β − β₀)) dt / m_ref, with the
/// per-ray slope m interpolated multilinearly over the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ghat {
    slopes: GridInterpolant,
    beta0: Vec<f64>,
    scale: f64,
}

impl Ghat {
    /// `(value, extrapolated)`; extrapolated is set when β lies outside the
    /// grid hull, where slopes are held at the boundary.
    pub fn eval(&self, beta: &[f64]) -> (f64, bool) {
        let extrapolated = !self.slopes.contains(beta);
        let dist = distance(beta, &self.beta0);
        if dist == 0.0 {
            return (0.0, extrapolated);
        }
        let integral = trapezoid_path_integral(|p| self.slopes.eval(p), &self.beta0, beta, DEFAULT_PATH_STEPS)
            .expect("path endpoints share the grid dimension");
        (dist * integral / self.scale, extrapolated)
    }

    pub fn dim(&self) -> usize {
        self.beta0.len()
    }
}

/// Slope field over the grid. A node at β₀ has no ray and takes the largest
/// slope among its neighbours.
fn slope_field(grid: &ParameterGrid, table: &BoundTable) -> Result<Vec<f64>> {
    let slopes = table.slopes();
    let dims: Vec<usize> = grid.axes().iter().map(Vec::len).collect();
    let unravel = |mut idx: usize| {
        let mut out = vec![0usize; dims.len()];
        for k in (0..dims.len()).rev() {
            out[k] = idx % dims[k];
            idx /= dims[k];
        }
        out
    };
    let ravel = |ix: &[usize]| ix.iter().zip(&dims).fold(0, |acc, (&i, &n)| acc * n + i);
    let mut field = Vec::with_capacity(slopes.len());
    for (j, s) in slopes.iter().enumerate() {
        if let Some(v) = s {
            field.push(*v);
            continue;
        }
        let center = unravel(j);
        let mut best: f64 = 0.0;
        for offset in 0..3usize.pow(dims.len() as u32) {
            let mut o = offset;
            let mut ix = center.clone();
            let mut valid = true;
            for k in 0..dims.len() {
                let step = (o % 3) as isize - 1;
                o /= 3;
                let v = ix[k] as isize + step;
                if v < 0 || v >= dims[k] as isize {
                    valid = false;
                    break;
                }
                ix[k] = v as usize;
            }
            if valid {
                if let Some(v) = slopes[ravel(&ix)] {
                    best = best.max(v);
                }
            }
        }
        field.push(best);
    }
    Ok(field)
}

pub fn build_ghat(table: &BoundTable) -> Result<Ghat> {
    let grid = &table.grid;
    let slopes = GridInterpolant::new(grid.axes().to_vec(), slope_field(grid, table)?)?;
    Ok(Ghat {
        slopes,
        beta0: grid.beta0().to_vec(),
        scale: reference_scale(table)?,
    })
}

/// ξ and ĝ ready for repeated queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certifier {
    xi: Interpolant<f64>,
    ghat: Ghat,
    seed: u64,
    spec_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationResult {
    pub certified: bool,
    pub margin: f64,
    pub h_lower: f64,
    pub beta: Vec<f64>,
    pub extrapolated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionResult {
    /// Every probed point certified.
    pub certified: bool,
    pub fraction: f64,
    pub n_points: usize,
    /// Smallest margin over the probed points.
    pub worst_margin: f64,
    /// Probed points that failed.
    pub witnesses: Vec<CertificationResult>,
}

impl Certifier {
    pub fn from_table(table: &BoundTable) -> Result<Self> {
        Ok(Self {
            xi: build_xi(table)?,
            ghat: build_ghat(table)?,
            seed: table.seed,
            spec_digest: table.spec_digest.clone(),
        })
    }

    pub fn xi(&self) -> &Interpolant<f64> {
        &self.xi
    }

    pub fn ghat(&self) -> &Ghat {
        &self.ghat
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn spec_digest(&self) -> &str {
        &self.spec_digest
    }

    /// Budget ξ(½) − ξ(1 − h) available for the path bound.
    pub fn budget(&self, h_lower: f64) -> f64 {
        self.xi.eval(0.5) - self.xi.eval(1.0 - h_lower)
    }

    pub fn certify_point(&self, h_lower: f64, beta: &[f64]) -> Result<CertificationResult> {
        if !(0.0..=1.0).contains(&h_lower) {
            return domain(format!("confidence bound must lie in [0, 1], got {h_lower}"));
        }
        if beta.len() != self.ghat.dim() {
            return domain(format!(
                "β has {} coordinates, expected {}",
                beta.len(),
                self.ghat.dim()
            ));
        }
        let (g, extrapolated) = self.ghat.eval(beta);
        let margin = self.budget(h_lower) - g;
        Ok(CertificationResult {
            certified: h_lower > 0.5 && margin > 0.0,
            margin,
            h_lower,
            beta: beta.to_vec(),
            extrapolated,
        })
    }

    /// Check every point of a `resolution`-per-axis tensor grid over the box.
    pub fn certify_region(&self, h_lower: f64, lo: &[f64], hi: &[f64], resolution: usize) -> Result<RegionResult> {
        let d = self.ghat.dim();
        if lo.len() != d || hi.len() != d {
            return domain("region bounds do not match the parameter dimension");
        }
        let points: Vec<usize> = lo
            .iter()
            .zip(hi)
            .map(|(l, h)| if l == h { 1 } else { resolution })
            .collect();
        let grid = ParameterGrid::uniform(lo, hi, &points, vec![0.0; d])?;
        let mut witnesses = Vec::new();
        let mut worst_margin = f64::INFINITY;
        for p in grid.points() {
            let r = self.certify_point(h_lower, &p)?;
            worst_margin = worst_margin.min(r.margin);
            if !r.certified {
                witnesses.push(r);
            }
        }
        let n = grid.len();
        Ok(RegionResult {
            certified: witnesses.is_empty(),
            fraction: (n - witnesses.len()) as f64 / n as f64,
            n_points: n,
            worst_margin,
            witnesses,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{compute_normed_bounds, BOUND_TABLE_VERSION};
    use crate::density::SmoothingSpec;
    use crate::numerics::std_normal_inv_cdf;
    use crate::tensor::Image;
    use crate::transforms::{CompositeTransform, ParamMap, Transform};

    fn table(p: Vec<f64>, axis: Vec<f64>, g: Vec<f64>) -> BoundTable {
        let n = p.len() - 1;
        BoundTable {
            version: BOUND_TABLE_VERSION,
            n_samples: n,
            grid: ParameterGrid::new(vec![axis], vec![0.0]).unwrap(),
            p,
            g,
            seed: 0,
            spec_digest: String::new(),
        }
    }

    #[test]
    fn constant_envelope_gives_identity_xi() {
        let t = table(vec![1.0; 101], vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0]);
        let xi = build_xi(&t).unwrap();
        for h in [0.0, 0.1, 0.37, 0.5, 1.0] {
            assert!((xi.eval(h) - h).abs() < 1e-12);
        }
    }

    #[test]
    fn xi_floor_keeps_it_finite() {
        let mut p = vec![1.0; 11];
        p[0] = 0.0;
        p[10] = 0.0;
        let xi = build_xi(&table(p, vec![0.0, 1.0], vec![0.0, 1.0])).unwrap();
        assert!(xi.eval(1.0).is_finite());
        assert!(xi.is_strictly_increasing());
    }

    #[test]
    fn ghat_is_linear_for_constant_slope() {
        let t = table(
            vec![1.0; 11],
            vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            vec![2.0, 1.0, 0.0, 1.0, 2.0],
        );
        let g = build_ghat(&t).unwrap();
        assert_eq!(g.eval(&[0.0]), (0.0, false));
        assert!((g.eval(&[0.3]).0 - 0.3).abs() < 1e-12);
        assert!((g.eval(&[-0.8]).0 - 0.8).abs() < 1e-12);
        assert!(g.eval(&[1.5]).1);
    }

    fn brightness_certifier() -> Certifier {
        let spec = SmoothingSpec::new(
            CompositeTransform::single(Transform::Brightness),
            vec![ParamMap::normal(0.6)],
            0.0,
            100_000,
        )
        .unwrap();
        let grid = ParameterGrid::uniform(&[-1.0], &[1.0], &[17], vec![0.0]).unwrap();
        let x = Image::new(1, 1, 1, vec![0.5]).unwrap();
        Certifier::from_table(&compute_normed_bounds(&x, &spec, &grid, 21).unwrap()).unwrap()
    }

    #[test]
    fn gaussian_radius_and_region_decisions() {
        let c = brightness_certifier();
        // Largest certified |β| on a fine scan.
        let radius = (0..=2000)
            .map(|i| i as f64 / 2000.0)
            .take_while(|&b| c.certify_point(0.9, &[b]).unwrap().certified)
            .last()
            .unwrap();
        let cohen = 0.6 * std_normal_inv_cdf(0.9).unwrap();
        assert!((radius - cohen).abs() <= 0.05, "{radius} vs {cohen}");

        let inside = c.certify_region(0.9, &[-0.4], &[0.4], 17).unwrap();
        assert!(inside.certified && inside.fraction == 1.0);
        let weak = c.certify_region(0.55, &[-0.4], &[0.4], 17).unwrap();
        assert!(!weak.certified && !weak.witnesses.is_empty());
        assert!(!c.certify_point(0.5, &[0.0]).unwrap().certified);
    }

    #[test]
    fn margin_monotone_in_confidence_and_distance() {
        let c = brightness_certifier();
        let mut last = f64::NEG_INFINITY;
        for i in 51..100 {
            let m = c.certify_point(i as f64 / 100.0, &[0.3]).unwrap().margin;
            assert!(m >= last);
            last = m;
        }
        let mut last = f64::INFINITY;
        for i in 0..=20 {
            let m = c.certify_point(0.8, &[i as f64 / 20.0]).unwrap().margin;
            assert!(m <= last);
            last = m;
        }
    }

    #[test]
    fn certifier_round_trips_through_json() {
        let t = table(vec![1.0; 11], vec![-1.0, 0.0, 1.0], vec![1.0, 0.0, 1.0]);
        let c = Certifier::from_table(&t).unwrap();
        let back: Certifier = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(c.certify_point(0.9, &[0.1, 0.2]).is_err());
        assert!(c.certify_point(1.5, &[0.1]).is_err());
    }
}
