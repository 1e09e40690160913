//! Likelihood layer: logit link, Bernoulli log-likelihood, working
//! quantities and the penalized single-term backfitting update.

mod backfit;
mod frame;
mod link;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::basis::Design;
use crate::scalar::Scalar;

pub use self::backfit::{aic, backfit_update, edf, BackfitOutcome, NormalSystem, PenalizedSolution};
pub use self::frame::Frame;
pub use self::link::{
    inverse_link, loglik, score_weights, softplus, survival_curve, Link, Logit, WorkingQuantities, WEIGHT_FLOOR,
};

/// Coefficients and smoothing parameters of every term.
///
/// `tau[j]` holds one value per penalty component of term `j` and is empty
/// for unpenalized terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ModelState<S> {
    pub beta: Vec<Array1<S>>,
    pub tau: Vec<Vec<S>>,
}

impl<S: Scalar> ModelState<S> {
    /// All coefficients zero, every penalty component at `tau`.
    pub fn zeros(design: &Design<S>, tau: S) -> Self {
        Self {
            beta: design.blocks.iter().map(|b| Array1::zeros(b.dim())).collect(),
            tau: design.blocks.iter().map(|b| vec![tau; b.n_penalties()]).collect(),
        }
    }

    pub fn n_terms(&self) -> usize {
        self.beta.len()
    }

    /// Largest absolute coefficient over all terms.
    pub fn max_abs(&self) -> S {
        self.beta
            .iter()
            .flat_map(|b| b.iter())
            .fold(S::zero(), |m, &v| m.max(v.abs()))
    }
}
