use ndarray::{Array1, Array2};

use super::frame::Frame;
use super::link::{score_weights, WorkingQuantities};
use super::ModelState;
use crate::basis::{Design, DesignBlock};
use crate::error::{Error, Result};
use crate::linalg::factor_with_ridge;
use crate::scalar::Scalar;

/// Normal equations of the penalized weighted least-squares problem for one
/// term: `X_jᵀ W X_j` and `X_jᵀ W (z - η_{-j})`.
///
/// Neither depends on the smoothing parameter, so a search over `τ` reuses
/// one assembly.
#[derive(Debug, Clone)]
pub struct NormalSystem<S> {
    pub xtwx: Array2<S>,
    pub xtwr: Array1<S>,
}

#[derive(Debug, Clone)]
pub struct PenalizedSolution<S> {
    pub beta: Array1<S>,
    /// `trace((XᵀWX + P)⁻¹ XᵀWX)`.
    pub edf: S,
    /// The factorization needed the diagonal ridge.
    pub ridged: bool,
}

impl<S: Scalar> NormalSystem<S> {
    /// Assemble at the working quantities of `frame`, with `beta_j` the
    /// coefficients term `j` currently contributes to `frame.eta()`.
    pub fn assemble(block: &DesignBlock<S>, frame: &Frame<'_, S>, wq: &WorkingQuantities<S>, beta_j: &Array1<S>) -> Self {
        let own = frame.term_values(block, beta_j.view());
        let partial: Vec<S> = wq
            .z
            .iter()
            .zip(frame.eta())
            .zip(&own)
            .map(|((&z, &eta), &f)| z - (eta - f))
            .collect();
        let (xtwx, xtwr) = frame.weighted_cross_products(block, &wq.w, &partial);
        Self { xtwx, xtwr }
    }

    pub fn dim(&self) -> usize {
        self.xtwr.len()
    }

    pub fn solve(&self, penalty: &Array2<S>) -> Result<PenalizedSolution<S>> {
        if penalty.dim() != self.xtwx.dim() {
            return Err(Error::Dimension(format!(
                "penalty {:?} vs normal matrix {:?}",
                penalty.dim(),
                self.xtwx.dim()
            )));
        }
        let a = &self.xtwx + penalty;
        let (chol, ridged) = factor_with_ridge(&a)?;
        let beta = chol.solve(&self.xtwr);
        let edf = chol.trace_solve(&self.xtwx);
        Ok(PenalizedSolution { beta, edf, ridged })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackfitOutcome<S> {
    pub edf: S,
    pub ridged: bool,
}

/// One backfitting step for term `j`:
/// `β_j ← (X_jᵀWX_j + P_j(τ))⁻¹ X_jᵀW(z - η_{-j})`, with `W` and `z`
/// evaluated at the current predictor. Updates `state` and the frame's
/// predictor in place.
pub fn backfit_update<S: Scalar>(
    design: &Design<S>,
    j: usize,
    state: &mut ModelState<S>,
    frame: &mut Frame<'_, S>,
    tau: &[S],
) -> Result<BackfitOutcome<S>> {
    let block = &design.blocks[j];
    if tau.len() != block.n_penalties() {
        return Err(Error::Dimension(format!(
            "term `{}` has {} penalty components, got {} smoothing parameters",
            block.name(),
            block.n_penalties(),
            tau.len()
        )));
    }
    if tau.iter().any(|&t| !(t >= S::zero())) {
        return Err(Error::Domain("smoothing parameters must be nonnegative".into()));
    }
    let wq = score_weights(frame.y(), frame.eta());
    let system = NormalSystem::assemble(block, frame, &wq, &state.beta[j]);
    let sol = system.solve(&block.basis.penalty(tau))?;
    let delta = &sol.beta - &state.beta[j];
    frame.shift_term(block, delta.view());
    state.beta[j] = sol.beta;
    state.tau[j] = tau.to_vec();
    Ok(BackfitOutcome {
        edf: sol.edf,
        ridged: sol.ridged,
    })
}

/// Effective degrees of freedom of term `j` at the frame's current weights.
pub fn edf<S: Scalar>(design: &Design<S>, j: usize, state: &ModelState<S>, frame: &Frame<'_, S>) -> Result<S> {
    let block = &design.blocks[j];
    let wq = score_weights(frame.y(), frame.eta());
    let system = NormalSystem::assemble(block, frame, &wq, &state.beta[j]);
    Ok(system.solve(&block.basis.penalty(&state.tau[j]))?.edf)
}

/// `-2ℓ + 2·edf`.
pub fn aic<S: Scalar>(loglik: S, total_edf: S) -> S {
    S::lit(-2.0) * loglik + S::lit(2.0) * total_edf
}
