use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `(d - q) x d` matrix of `q`-th order differences.
pub fn difference_matrix<S: Scalar>(d: usize, q: usize) -> Result<Array2<S>> {
    if d <= q {
        return Err(Error::Dimension(format!(
            "difference penalty of order {q} needs more than {q} coefficients, got {d}"
        )));
    }
    // binomial coefficients with alternating sign, highest index positive
    let mut coef = vec![0i64; q + 1];
    coef[0] = 1;
    for k in 1..=q {
        for j in (1..=k).rev() {
            coef[j] -= coef[j - 1];
        }
    }
    coef.reverse();
    let mut m = Array2::zeros((d - q, d));
    for i in 0..d - q {
        for (k, &c) in coef.iter().enumerate() {
            m[[i, i + k]] = S::lit(c as f64);
        }
    }
    Ok(m)
}

/// Difference penalty `K = Dᵀ D`.
pub fn difference_penalty<S: Scalar>(d: usize, q: usize) -> Result<Array2<S>> {
    let dm = difference_matrix::<S>(d, q)?;
    Ok(dm.t().dot(&dm))
}
