use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::DesignBlock;
use crate::scalar::Scalar;

/// Identifiability constraint applied on top of a raw basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar", rename_all = "snake_case", tag = "type")]
pub enum Centering<S> {
    None,
    /// Reparameterization `X Z` with `Z` spanning the complement of the
    /// column-sum constraint; drops one column.
    SumToZero { z: Array2<S> },
    /// Column means subtracted; used for unpenalized terms.
    Means { means: Array1<S> },
}

impl<S: Scalar> Centering<S> {
    pub fn dim(&self, raw_dim: usize) -> usize {
        match self {
            Centering::SumToZero { z } => z.ncols(),
            _ => raw_dim,
        }
    }

    pub fn apply_row(&self, raw: ArrayView1<'_, S>) -> Array1<S> {
        match self {
            Centering::None => raw.to_owned(),
            Centering::SumToZero { z } => raw.dot(z),
            Centering::Means { means } => &raw - means,
        }
    }

    pub fn apply(&self, raw: &Array2<S>) -> Array2<S> {
        match self {
            Centering::None => raw.clone(),
            Centering::SumToZero { z } => raw.dot(z),
            Centering::Means { means } => raw - means,
        }
    }

    fn then(self, next: Centering<S>) -> Centering<S> {
        match (self, next) {
            (s, Centering::None) => s,
            (Centering::SumToZero { z: a }, Centering::SumToZero { z: b }) => Centering::SumToZero { z: a.dot(&b) },
            (Centering::Means { means: a }, Centering::Means { means: b }) => Centering::Means { means: a + b },
            (_, n) => n,
        }
    }
}

/// Householder-based null-space basis of the single constraint `cᵀβ = 0`.
fn constraint_null_space<S: Scalar>(c: &Array1<S>) -> Array2<S> {
    let d = c.len();
    let norm = c.dot(c).sqrt();
    let sign = if c[0] >= S::zero() { S::one() } else { -S::one() };
    let mut v = c.clone();
    v[0] += sign * norm;
    let vv = v.dot(&v);
    let two = S::lit(2.0);
    let mut z = Array2::zeros((d, d - 1));
    for i in 0..d {
        for k in 1..d {
            let h = if i == k { S::one() } else { S::zero() } - two * v[i] * v[k] / vv;
            z[[i, k - 1]] = h;
        }
    }
    z
}

/// Reparameterize a block so every fitted term value sums to zero over the
/// training person-period rows. Penalized blocks are transformed with a
/// constraint null-space basis (the penalty follows as `Zᵀ K Z`);
/// unpenalized blocks have their column means removed. A block whose
/// columns already sum to zero is returned unchanged.
pub fn center_block<S: Scalar>(block: &DesignBlock<S>) -> DesignBlock<S> {
    let sums = block.column_sums();
    let scale: S = block
        .matrix
        .rows()
        .into_iter()
        .zip(&block.key_weights)
        .map(|(r, &w)| w * r.iter().map(|v| v.abs()).sum::<S>())
        .sum();
    let tol = S::PIVOT_TOL * S::lit(100.0) * scale.max(S::one());
    if sums.iter().all(|s| s.abs() <= tol) || block.dim() == 0 {
        return block.clone();
    }
    let mut out = block.clone();
    if block.basis.is_penalized() {
        if block.dim() < 2 {
            return block.clone();
        }
        let z = constraint_null_space(&sums);
        out.matrix = block.matrix.dot(&z);
        out.basis.penalties = block
            .basis
            .penalties
            .iter()
            .map(|k| {
                let kz = k.dot(&z);
                let p = z.t().dot(&kz);
                // restore exact symmetry lost to rounding
                (&p + &p.t()) * S::lit(0.5)
            })
            .collect();
        out.basis.centering = std::mem::replace(&mut out.basis.centering, Centering::None).then(Centering::SumToZero { z });
    } else {
        let total: S = block.key_weights.iter().copied().sum();
        let means = sums / total;
        out.matrix = &block.matrix - &means;
        out.basis.centering = std::mem::replace(&mut out.basis.centering, Centering::None).then(Centering::Means { means });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{Design, TermSpec};
    use crate::data::{augment, Covariate, CovariateSchema, IndividualRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn data() -> crate::data::AugmentedDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let recs: Vec<_> = (0..60)
            .map(|i| {
                IndividualRecord::new(
                    i.to_string(),
                    rng.random_range(1..=8),
                    rng.random_range(0..=1),
                    vec![Covariate::Num(rng.random_range(-2.0..3.0)), Covariate::Num(rng.random_range(0.0..1.0))],
                )
            })
            .collect();
        augment(&recs, &CovariateSchema::continuous(["x", "z"]), 8).unwrap()
    }

    #[test]
    fn null_space_is_orthonormal_and_orthogonal_to_constraint() {
        let c = Array1::from(vec![3.0, -1.0, 0.5, 2.0]);
        let z = constraint_null_space(&c);
        assert!(c.dot(&z).iter().all(|v: &f64| v.abs() < 1e-12));
        let g = z.t().dot(&z);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((g[[i, j]] - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn centered_columns_have_zero_mean_and_centering_is_idempotent() {
        let data = data();
        let specs = [TermSpec::smooth("fx", "x"), TermSpec::tensor("t", "x", "z"), TermSpec::linear("l", "z")];
        let d: Design<f64> = Design::build(&specs, &data).unwrap();
        for b in &d.blocks {
            let total: f64 = b.key_weights.iter().sum();
            assert!(b.column_sums().iter().all(|s| (s / total).abs() < 1e-10));
            let again = center_block(b);
            assert_eq!(again.matrix, b.matrix);
            assert_eq!(again.basis.centering, b.basis.centering);
        }
    }

    #[test]
    fn penalty_stays_symmetric_psd() {
        let data = data();
        let d: Design<f64> = Design::build(&[TermSpec::smooth("fx", "x")], &data).unwrap();
        let k = &d.blocks[0].basis.penalties[0];
        assert_eq!(k, &k.t().to_owned());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let b = Array1::from_iter((0..k.nrows()).map(|_| rng.random_range(-5.0..5.0)));
            assert!(b.dot(&k.dot(&b)) >= -1e-9);
        }
    }
}
