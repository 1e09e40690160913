use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Lower bound on working weights before forming the working response.
pub const WEIGHT_FLOOR: f64 = 1e-8;

/// Response function mapping the predictor to a hazard, together with the
/// Bernoulli log-likelihood derivatives the backfitting step needs.
pub trait Link<S: Scalar> {
    fn inverse(&self, eta: S) -> S;
    /// Log-likelihood of one binary observation.
    fn loglik(&self, y: S, eta: S) -> S;
    /// `(∂ℓ/∂η, -∂²ℓ/∂η²)` of one binary observation.
    fn score_weight(&self, y: S, eta: S) -> (S, S);
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Logit;

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus<S: Scalar>(x: S) -> S {
    x.max(S::zero()) + (-x.abs()).exp().ln_1p()
}

impl<S: Scalar> Link<S> for Logit {
    #[inline]
    fn inverse(&self, eta: S) -> S {
        if eta >= S::zero() {
            S::one() / (S::one() + (-eta).exp())
        } else {
            let e = eta.exp();
            e / (S::one() + e)
        }
    }

    #[inline]
    fn loglik(&self, y: S, eta: S) -> S {
        y * eta - softplus(eta)
    }

    #[inline]
    fn score_weight(&self, y: S, eta: S) -> (S, S) {
        let p = self.inverse(eta);
        (y - p, p * (S::one() - p))
    }
}

/// Logistic response `exp(η) / (1 + exp(η))`.
pub fn inverse_link<S: Scalar>(eta: S) -> S {
    Logit.inverse(eta)
}

/// Bernoulli log-likelihood of binary responses under the logit link.
pub fn loglik<S: Scalar>(y: &[S], eta: &[S]) -> Result<S> {
    if y.len() != eta.len() {
        return Err(Error::Dimension(format!(
            "{} responses vs {} predictor values",
            y.len(),
            eta.len()
        )));
    }
    Ok(y.iter().zip(eta).map(|(&y, &e)| Logit.loglik(y, e)).sum())
}

/// Score `u`, weights `w` (diagonal of `W`) and working response `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingQuantities<S> {
    pub u: Vec<S>,
    pub w: Vec<S>,
    pub z: Vec<S>,
}

/// Working quantities at `eta`. Weights are floored at [`WEIGHT_FLOOR`]
/// before `z = η + u / w` is formed.
pub fn score_weights<S: Scalar>(y: &[S], eta: &[S]) -> WorkingQuantities<S> {
    let floor = S::lit(WEIGHT_FLOOR);
    let n = y.len();
    let mut wq = WorkingQuantities {
        u: Vec::with_capacity(n),
        w: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
    };
    for (&y, &e) in y.iter().zip(eta) {
        let (u, w) = Logit.score_weight(y, e);
        let w = w.max(floor);
        wq.u.push(u);
        wq.w.push(w);
        wq.z.push(e + u / w);
    }
    wq
}

/// Survival probabilities `S(t) = Π_{r ≤ t} (1 - λ_r)`.
pub fn survival_curve<S: Scalar>(hazard: &[S]) -> Result<Vec<S>> {
    let mut s = S::one();
    hazard
        .iter()
        .map(|&l| {
            if !(l >= S::zero() && l <= S::one()) {
                return Err(Error::Domain(format!("hazard {l} outside [0, 1]")));
            }
            s = s * (S::one() - l);
            Ok(s)
        })
        .collect()
}
