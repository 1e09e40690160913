use ndarray::Array1;
use serde::{Deserialize, Serialize};

use super::{stream_rng, tau_search, EngineConfig, REFIT_STREAM};
use crate::basis::Design;
use crate::data::{AugmentedDataset, BatchSampler};
use crate::error::{Error, Result};
use crate::model::{score_weights, Frame, ModelState, NormalSystem};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct RefitReport<S> {
    pub iterations: usize,
    pub burn_in: usize,
    /// Indices of the refit terms.
    pub terms: Vec<usize>,
    /// Coefficients of `terms` after every iteration.
    pub trajectories: Vec<Vec<Array1<S>>>,
    /// Smoothing parameters of `terms` after every iteration.
    pub tau_trajectories: Vec<Vec<Vec<S>>>,
    /// Mean per-row log-likelihood on each iteration's batch after the sweep.
    pub batch_loglik: Vec<S>,
    pub ridge_fallbacks: usize,
}

/// Refit `terms` by full-step backfitting on a fresh batch per iteration,
/// starting from `start`, and return the average of the post-burn-in
/// iterates. Terms outside `terms` are zeroed.
pub fn run_refit<S: Scalar>(
    design: &Design<S>,
    data: &AugmentedDataset,
    terms: &[usize],
    start: &ModelState<S>,
    config: &EngineConfig,
) -> Result<(ModelState<S>, RefitReport<S>)> {
    config.validate()?;
    if terms.is_empty() {
        return Err(Error::EmptySelection);
    }
    if let Some(&j) = terms.iter().find(|&&j| j >= design.len()) {
        return Err(Error::Dimension(format!("term index {j} out of range for {} terms", design.len())));
    }
    let mut state = start.clone();
    for j in 0..design.len() {
        if !terms.contains(&j) {
            state.beta[j].fill(S::zero());
        }
    }
    let mut report = RefitReport {
        iterations: config.refit_iterations,
        burn_in: config.burn_in,
        terms: terms.to_vec(),
        trajectories: Vec::with_capacity(config.refit_iterations),
        tau_trajectories: Vec::with_capacity(config.refit_iterations),
        batch_loglik: Vec::with_capacity(config.refit_iterations),
        ridge_fallbacks: 0,
    };
    if config.refit_iterations == 0 {
        return Ok((state, report));
    }

    let mut sampler = BatchSampler::new(data, config.batch_rows)?;
    let mut rng = stream_rng(config.seed, REFIT_STREAM);
    let mut sum: Vec<Array1<S>> = state.beta.iter().map(|b| Array1::zeros(b.len())).collect();
    for it in 0..config.refit_iterations {
        let (mut fit, mut eval) = if config.optimize_tau {
            let (b, e) = sampler.sample_disjoint(data, &mut rng);
            (Frame::from_batch(data, &b, design, &state), Some(Frame::from_batch(data, &e, design, &state)))
        } else {
            (Frame::from_batch(data, &sampler.sample(data, &mut rng), design, &state), None)
        };
        for &j in terms {
            let block = &design.blocks[j];
            let wq = score_weights(fit.y(), fit.eta());
            let system = NormalSystem::assemble(block, &fit, &wq, &state.beta[j]);
            let (tau, sol) = match eval.as_ref() {
                Some(ev) if block.basis.is_penalized() => {
                    let same_batch = fit.rows() == ev.rows();
                    let c = tau_search(
                        block,
                        &state.beta[j],
                        &state.tau[j],
                        &system,
                        ev,
                        same_batch,
                        &config.tau,
                        config.tau_criterion,
                    )?;
                    (c.tau, c.solution)
                }
                _ => {
                    let sol = system.solve(&block.basis.penalty(&state.tau[j]))?;
                    (state.tau[j].clone(), sol)
                }
            };
            report.ridge_fallbacks += usize::from(sol.ridged);
            let delta = &sol.beta - &state.beta[j];
            fit.shift_term(block, delta.view());
            if let Some(ev) = eval.as_mut() {
                ev.shift_term(block, delta.view());
            }
            state.beta[j] = sol.beta;
            state.tau[j] = tau;
        }
        report.batch_loglik.push(fit.loglik() / S::from_usize_lossy(fit.len().max(1)));
        report.trajectories.push(terms.iter().map(|&j| state.beta[j].clone()).collect());
        report.tau_trajectories.push(terms.iter().map(|&j| state.tau[j].clone()).collect());
        if it >= config.burn_in {
            for &j in terms {
                sum[j] += &state.beta[j];
            }
        }
    }
    let kept = S::from_usize_lossy(config.refit_iterations - config.burn_in);
    for &j in terms {
        state.beta[j] = &sum[j] / kept;
    }
    Ok((state, report))
}
