use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// B-spline basis on a clamped, equidistant knot grid over `[lo, hi]`.
///
/// The boundary knots are repeated `degree + 1` times, so the first and last
/// basis functions equal one at the respective boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    pub lo: f64,
    pub hi: f64,
    pub n_basis: usize,
    pub degree: usize,
}

impl BSplineBasis {
    pub fn new(lo: f64, hi: f64, n_basis: usize, degree: usize) -> Result<Self> {
        if n_basis < degree + 1 {
            return Err(Error::Config(format!(
                "B-spline basis needs at least degree + 1 = {} functions, got {n_basis}",
                degree + 1
            )));
        }
        if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
            return Err(Error::Degenerate(format!("empty knot range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi, n_basis, degree })
    }

    /// Basis spanning the observed range of `x`.
    pub fn from_data(x: &[f64], n_basis: usize, degree: usize) -> Result<Self> {
        if let Some(bad) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite covariate value {bad}")));
        }
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(Error::Degenerate(
                "B-spline basis needs at least two distinct values".into(),
            ));
        }
        Self::new(lo, hi, n_basis, degree)
    }

    fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.n_basis - self.degree) as f64
    }

    fn knot(&self, i: usize) -> f64 {
        let p = self.degree;
        let k = i.saturating_sub(p).min(self.n_basis - p);
        if k == self.n_basis - p {
            self.hi
        } else {
            self.lo + k as f64 * self.spacing()
        }
    }

    /// Index of the first nonzero function at `x` and the `degree + 1`
    /// nonzero values. `x` is clamped into `[lo, hi]`.
    pub fn eval_nonzero(&self, x: f64, values: &mut [f64]) -> usize {
        let p = self.degree;
        let x = x.clamp(self.lo, self.hi);
        let cell = ((x - self.lo) / self.spacing()).floor();
        let span = p + (cell.max(0.0) as usize).min(self.n_basis - p - 1);

        values[0] = 1.0;
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        for j in 1..=p {
            left[j] = x - self.knot(span + 1 - j);
            right[j] = self.knot(span + j) - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom != 0.0 { values[r] / denom } else { 0.0 };
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        span - p
    }

    pub fn eval_into(&self, x: f64, row: &mut [f64]) {
        row.iter_mut().for_each(|v| *v = 0.0);
        let mut vals = vec![0.0; self.degree + 1];
        let first = self.eval_nonzero(x, &mut vals);
        row[first..first + vals.len()].copy_from_slice(&vals);
    }

    pub fn design<S: Scalar>(&self, x: &[f64]) -> Array2<S> {
        let mut out = Array2::zeros((x.len(), self.n_basis));
        let mut row = vec![0.0; self.n_basis];
        for (i, &xi) in x.iter().enumerate() {
            self.eval_into(xi, &mut row);
            for (o, &v) in out.row_mut(i).iter_mut().zip(&row) {
                *o = S::lit(v);
            }
        }
        out
    }
}

/// Evaluate a `d`-function B-spline basis of the given degree, with knots
/// spanning the range of `x`.
pub fn bspline_basis<S: Scalar>(x: &[f64], d: usize, degree: usize) -> Result<Array2<S>> {
    Ok(BSplineBasis::from_data(x, d, degree)?.design(x))
}
