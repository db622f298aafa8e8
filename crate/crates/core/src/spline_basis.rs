//! Equally spaced B-spline bases on [0, 1] and their empirically centered
//! counterparts.
//!
//! A [`KnotVector`] with `N` interior knots and degree `q` spans a raw space
//! of dimension `N + q + 1`. The centered basis drops the constant direction:
//! every raw function after the first is combined with the first one so that
//! its empirical mean over a training sample vanishes, giving `N + q`
//! functions scaled by `sqrt(N)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GeeError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotVector {
    degree: usize,
    interior: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    /// Equally spaced interior knots `s / (N + 1)` with `q + 1`-fold
    /// boundary knots at 0 and 1.
    pub fn new(interior: usize, degree: usize) -> Result<Self> {
        if interior < 1 {
            return Err(GeeError::ParameterDomain(format!(
                "interior knot count must be >= 1, got {interior}"
            )));
        }
        if degree < 1 {
            return Err(GeeError::ParameterDomain(format!(
                "spline degree must be >= 1, got {degree}"
            )));
        }
        let mut knots = Vec::with_capacity(interior + 2 * (degree + 1));
        knots.extend(std::iter::repeat(0.0).take(degree + 1));
        let h = (interior + 1) as f64;
        knots.extend((1..=interior).map(|s| s as f64 / h));
        knots.extend(std::iter::repeat(1.0).take(degree + 1));
        Ok(Self {
            degree,
            interior,
            knots,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior_count(&self) -> usize {
        self.interior
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Number of raw B-spline functions, `N + q + 1`.
    pub fn raw_dim(&self) -> usize {
        self.interior + self.degree + 1
    }

    /// Index `i` with `t_i <= z < t_{i+1}`; the last non-empty interval is
    /// closed on the right so that `z = 1` belongs to it.
    fn span(&self, z: f64) -> usize {
        let last = self.raw_dim() - 1;
        if z >= self.knots[last + 1] {
            return last;
        }
        // interior knots are equally spaced, so the span is direct
        let cell = (z * (self.interior + 1) as f64).floor() as usize;
        let mut i = (cell + self.degree).clamp(self.degree, last);
        while i > self.degree && z < self.knots[i] {
            i -= 1;
        }
        while i < last && z >= self.knots[i + 1] {
            i += 1;
        }
        i
    }

    /// Values of all raw basis functions at `z`.
    pub fn eval_raw(&self, z: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.raw_dim()];
        self.eval_raw_into(z, &mut out)?;
        Ok(out)
    }

    pub(crate) fn eval_raw_into(&self, z: f64, out: &mut [f64]) -> Result<()> {
        if !(0.0..=1.0).contains(&z) {
            return Err(GeeError::Domain { what: "z", value: z });
        }
        let q = self.degree;
        let t = &self.knots;
        let span = self.span(z);
        // triangular recursion over the q + 1 functions alive on this span
        let mut n = vec![0.0; q + 1];
        let mut left = vec![0.0; q + 1];
        let mut right = vec![0.0; q + 1];
        n[0] = 1.0;
        for j in 1..=q {
            left[j] = z - t[span + 1 - j];
            right[j] = t[span + j] - z;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, v) in n.into_iter().enumerate() {
            out[span - q + r] = v;
        }
        Ok(())
    }
}

/// Centered basis `B_s(z) = sqrt(N) * (b_{s+1}(z) - r_s b_1(z))` with
/// `r_s = mean(b_{s+1}) / mean(b_1)` over the training sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteredSplineBasis {
    knots: KnotVector,
    centering_ratios: Vec<f64>,
    scale: f64,
}

impl CenteredSplineBasis {
    pub fn fit(knots: KnotVector, training_z: &[f64]) -> Result<Self> {
        if training_z.is_empty() {
            return Err(GeeError::DegenerateDesign(
                "no training values to center the spline basis".into(),
            ));
        }
        let dim = knots.raw_dim();
        let mut sums = vec![0.0; dim];
        let mut row = vec![0.0; dim];
        for &z in training_z {
            knots.eval_raw_into(z, &mut row)?;
            for (s, v) in sums.iter_mut().zip(&row) {
                *s += v;
            }
        }
        let count = training_z.len() as f64;
        let means: Vec<f64> = sums.iter().map(|s| s / count).collect();
        if means[0] <= 0.0 {
            return Err(GeeError::DegenerateDesign(
                "first B-spline has zero empirical mean (no data near the left boundary)".into(),
            ));
        }
        let centering_ratios = means[1..].iter().map(|m| m / means[0]).collect();
        let scale = (knots.interior_count() as f64).sqrt();
        Ok(Self {
            knots,
            centering_ratios,
            scale,
        })
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn degree(&self) -> usize {
        self.knots.degree()
    }

    pub fn interior_count(&self) -> usize {
        self.knots.interior_count()
    }

    pub fn centering_ratios(&self) -> &[f64] {
        &self.centering_ratios
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Number of centered functions, `N + q`.
    pub fn dim(&self) -> usize {
        self.centering_ratios.len()
    }

    pub fn eval(&self, z: f64) -> Result<Vec<f64>> {
        let mut raw = vec![0.0; self.knots.raw_dim()];
        let mut out = vec![0.0; self.dim()];
        self.eval_into(z, &mut raw, &mut out)?;
        Ok(out)
    }

    fn eval_into(&self, z: f64, raw: &mut [f64], out: &mut [f64]) -> Result<()> {
        self.knots.eval_raw_into(z, raw)?;
        let b1 = raw[0];
        for ((o, r), b) in out.iter_mut().zip(&self.centering_ratios).zip(&raw[1..]) {
            *o = self.scale * (b - r * b1);
        }
        Ok(())
    }

    /// One row per value of `zs`.
    pub fn design(&self, zs: &[f64]) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        let mut m = DMatrix::zeros(zs.len(), dim);
        let mut raw = vec![0.0; self.knots.raw_dim()];
        let mut row = vec![0.0; dim];
        for (i, &z) in zs.iter().enumerate() {
            self.eval_into(z, &mut raw, &mut row)?;
            for (k, v) in row.iter().enumerate() {
                m[(i, k)] = *v;
            }
        }
        Ok(m)
    }

    /// `sum_s coef_s B_s(z)`.
    pub fn evaluate_function(&self, coef: &[f64], z: f64) -> Result<f64> {
        if coef.len() != self.dim() {
            return Err(GeeError::DimensionMismatch(format!(
                "{} coefficients for a basis of dimension {}",
                coef.len(),
                self.dim()
            )));
        }
        Ok(self.eval(z)?.iter().zip(coef).map(|(b, c)| b * c).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn linear_two_interior_knots() {
        let kv = KnotVector::new(2, 1).unwrap();
        let expected = [0.0, 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.0];
        assert_eq!(kv.knots().len(), 6);
        for (a, b) in kv.knots().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_eq!(kv.raw_dim(), 4);
    }

    #[test]
    fn cubic_single_knot() {
        let kv = KnotVector::new(1, 3).unwrap();
        assert_eq!(
            kv.knots(),
            &[0.0, 0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0, 1.0]
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            KnotVector::new(0, 1),
            Err(GeeError::ParameterDomain(_))
        ));
        assert!(matches!(
            KnotVector::new(3, 0),
            Err(GeeError::ParameterDomain(_))
        ));
    }

    #[test]
    fn hat_functions_at_midpoint_and_right_end() {
        let kv = KnotVector::new(2, 1).unwrap();
        let v = kv.eval_raw(0.5).unwrap();
        for (a, b) in v.iter().zip([0.0, 0.5, 0.5, 0.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        assert_eq!(kv.eval_raw(1.0).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(kv.eval_raw(0.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn out_of_range_is_domain_error() {
        let kv = KnotVector::new(3, 3).unwrap();
        assert!(matches!(kv.eval_raw(1.0001), Err(GeeError::Domain { .. })));
        assert!(matches!(kv.eval_raw(-0.1), Err(GeeError::Domain { .. })));
        assert!(kv.eval_raw(f64::NAN).is_err());
    }

    #[test]
    fn centered_dimension_and_zero_mean() {
        let grid: Vec<f64> = (0..1000).map(|i| i as f64 / 999.0).collect();
        let basis = CenteredSplineBasis::fit(KnotVector::new(2, 1).unwrap(), &grid).unwrap();
        assert_eq!(basis.dim(), 3);
        let d = basis.design(&grid).unwrap();
        for k in 0..d.ncols() {
            assert!(d.column(k).mean().abs() < 1e-10);
        }
    }

    #[test]
    fn centered_value_where_first_function_vanishes() {
        let grid: Vec<f64> = (0..500).map(|i| i as f64 / 499.0).collect();
        let kv = KnotVector::new(4, 3).unwrap();
        let basis = CenteredSplineBasis::fit(kv.clone(), &grid).unwrap();
        let z = 0.8;
        let raw = kv.eval_raw(z).unwrap();
        assert_eq!(raw[0], 0.0);
        let c = basis.eval(z).unwrap();
        for s in 0..basis.dim() {
            assert_abs_diff_eq!(c[s], 2.0 * raw[s + 1], epsilon = 1e-14);
        }
    }

    #[test]
    fn centering_requires_mass_near_left_boundary() {
        let zs = [0.7, 0.8, 0.9];
        let r = CenteredSplineBasis::fit(KnotVector::new(3, 1).unwrap(), &zs);
        assert!(matches!(r, Err(GeeError::DegenerateDesign(_))));
        assert!(CenteredSplineBasis::fit(KnotVector::new(3, 1).unwrap(), &[]).is_err());
    }

    #[test]
    fn zero_coefficients_give_zero_function() {
        let grid: Vec<f64> = (0..100).map(|i| i as f64 / 99.0).collect();
        let basis = CenteredSplineBasis::fit(KnotVector::new(5, 3).unwrap(), &grid).unwrap();
        let coef = vec![0.0; basis.dim()];
        for z in [0.0, 0.3, 1.0] {
            assert_eq!(basis.evaluate_function(&coef, z).unwrap(), 0.0);
        }
        assert_eq!(basis.eval(0.37).unwrap(), basis.eval(0.37).unwrap());
    }
}
