//! Dense symmetric positive-definite solves for the small per-term systems.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Absolute ridge added to the diagonal when a penalized normal matrix does
/// not factor.
pub const RIDGE: f64 = 1e-8;

/// Lower-triangular Cholesky factor `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky<S> {
    lower: Array2<S>,
}

impl<S: Scalar> Cholesky<S> {
    /// Factor a symmetric matrix. Returns `None` when a pivot falls below
    /// `S::PIVOT_TOL` times the largest diagonal entry.
    pub fn factor(a: &Array2<S>) -> Option<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return None;
        }
        let max_diag = (0..n).map(|i| a[[i, i]]).fold(S::zero(), S::max);
        let tol = if max_diag > S::zero() {
            S::PIVOT_TOL * max_diag
        } else {
            S::min_positive_value()
        };
        let mut lower = Array2::<S>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= lower[[j, k]] * lower[[j, k]];
            }
            if !(d > tol) {
                return None;
            }
            let d = d.sqrt();
            lower[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= lower[[i, k]] * lower[[j, k]];
                }
                lower[[i, j]] = s / d;
            }
        }
        Some(Self { lower })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn solve(&self, b: &Array1<S>) -> Array1<S> {
        let n = self.dim();
        let l = &self.lower;
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[[i, k]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * x[k];
            }
            x[i] = s / l[[i, i]];
        }
        x
    }

    /// `trace(A⁻¹ B)` for a square `B` of matching size.
    pub fn trace_solve(&self, b: &Array2<S>) -> S {
        let n = self.dim();
        let mut tr = S::zero();
        for c in 0..n {
            let col = self.solve(&b.column(c).to_owned());
            tr += col[c];
        }
        tr
    }
}

/// Factor `a`, retrying once with a diagonal ridge. The flag reports whether
/// the ridge was needed.
pub fn factor_with_ridge<S: Scalar>(a: &Array2<S>) -> Result<(Cholesky<S>, bool)> {
    if let Some(f) = Cholesky::factor(a) {
        return Ok((f, false));
    }
    let n = a.nrows();
    let max_diag = (0..n).map(|i| a[[i, i]].abs()).fold(S::zero(), S::max);
    // f32 cannot resolve 1e-8 against typical diagonals, so the ridge scales
    // with the working precision.
    let ridge = S::lit(RIDGE).max(S::lit(10.0) * S::PIVOT_TOL * max_diag);
    let mut ridged = a.clone();
    for i in 0..n {
        ridged[[i, i]] += ridge;
    }
    Cholesky::factor(&ridged)
        .map(|f| (f, true))
        .ok_or_else(|| Error::Factorization(format!("{n}x{n} system not positive definite after ridge")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let b = array![1.0, -2.0, 0.5];
        let f = Cholesky::factor(&a).unwrap();
        let x = f.solve(&b);
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v: &f64| v.abs() < 1e-12));
    }

    #[test]
    fn trace_of_identity_solve() {
        let a = array![[2.0, 0.3], [0.3, 1.0]];
        let f = Cholesky::factor(&a).unwrap();
        assert!((f.trace_solve(&a) - 2.0_f64).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_needs_ridge() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(Cholesky::<f64>::factor(&a).is_none());
        let (_, ridged) = factor_with_ridge(&a).unwrap();
        assert!(ridged);
    }

    #[test]
    fn zero_matrix_ridges_to_zero_solution() {
        let a = Array2::<f64>::zeros((3, 3));
        let (f, ridged) = factor_with_ridge(&a).unwrap();
        assert!(ridged);
        assert_eq!(f.solve(&Array1::zeros(3)), Array1::<f64>::zeros(3));
    }
}
