use ndarray::Array2;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Design and the two anisotropic penalty components of a tensor product
/// smooth. Column `a * dy + b` pairs margin functions `a` and `b`.
#[derive(Debug, Clone)]
pub struct TensorParts<S> {
    pub design: Array2<S>,
    /// `[Kx ⊗ I, I ⊗ Ky]`, each weighted by its own smoothing parameter.
    pub penalties: [Array2<S>; 2],
}

/// Row-wise Kronecker product of two marginal designs.
pub fn row_kronecker<S: Scalar>(bx: &Array2<S>, by: &Array2<S>) -> Result<Array2<S>> {
    if bx.nrows() != by.nrows() {
        return Err(Error::Dimension(format!(
            "tensor margins have {} and {} rows",
            bx.nrows(),
            by.nrows()
        )));
    }
    let (dx, dy) = (bx.ncols(), by.ncols());
    let mut out = Array2::zeros((bx.nrows(), dx * dy));
    for (mut o, (rx, ry)) in out.rows_mut().into_iter().zip(bx.rows().into_iter().zip(by.rows())) {
        for a in 0..dx {
            let xa = rx[a];
            if xa == S::zero() {
                continue;
            }
            for b in 0..dy {
                o[a * dy + b] = xa * ry[b];
            }
        }
    }
    Ok(out)
}

pub fn kronecker<S: Scalar>(a: &Array2<S>, b: &Array2<S>) -> Array2<S> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let v = a[[i, j]];
            if v == S::zero() {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = v * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Penalty components `(Kx ⊗ I_dy, I_dx ⊗ Ky)`.
pub fn tensor_penalties<S: Scalar>(kx: &Array2<S>, ky: &Array2<S>) -> [Array2<S>; 2] {
    let ix = Array2::eye(kx.nrows());
    let iy = Array2::eye(ky.nrows());
    [kronecker(kx, &iy), kronecker(&ix, ky)]
}

pub fn tensor_product<S: Scalar>(
    bx: &Array2<S>,
    by: &Array2<S>,
    kx: &Array2<S>,
    ky: &Array2<S>,
) -> Result<TensorParts<S>> {
    if kx.nrows() != bx.ncols() || ky.nrows() != by.ncols() {
        return Err(Error::Dimension("penalty size does not match margin basis".into()));
    }
    Ok(TensorParts {
        design: row_kronecker(bx, by)?,
        penalties: tensor_penalties(kx, ky),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::penalty::difference_penalty;
    use ndarray::{array, Array1};

    #[test]
    fn hand_kronecker_row() {
        let bx = array![[1.0, 2.0]];
        let by = array![[3.0, 4.0, 5.0]];
        let k = row_kronecker(&bx, &by).unwrap();
        assert_eq!(k.row(0).to_vec(), vec![3.0, 4.0, 5.0, 6.0, 8.0, 10.0]);
    }

    #[test]
    fn unit_margin_copies_other_margin() {
        let bx = array![[0.0, 1.0, 0.0]];
        let by = array![[0.2, 0.5, 0.3]];
        let k = row_kronecker(&bx, &by).unwrap();
        assert_eq!(k.row(0).to_vec(), vec![0.0, 0.0, 0.0, 0.2, 0.5, 0.3, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn row_mismatch() {
        let bx = Array2::<f64>::zeros((2, 3));
        let by = Array2::<f64>::zeros((3, 3));
        assert!(matches!(row_kronecker(&bx, &by), Err(Error::Dimension(_))));
    }

    #[test]
    fn constant_surface_is_unpenalized() {
        let kx: Array2<f64> = difference_penalty(5, 2).unwrap();
        let ky: Array2<f64> = difference_penalty(4, 2).unwrap();
        let [px, py] = tensor_penalties(&kx, &ky);
        let c = Array1::from_elem(20, 1.7);
        assert!(px.dot(&c).iter().chain(py.dot(&c).iter()).all(|v| v.abs() < 1e-12));
        // bilinear surfaces are also in the joint null space for q = 2
        let bil = Array1::from_iter((0..5).flat_map(|a| (0..4).map(move |b| (a * b) as f64)));
        assert!(px.dot(&bil).iter().chain(py.dot(&bil).iter()).all(|v| v.abs() < 1e-12));
    }
}
