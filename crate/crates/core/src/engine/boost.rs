use ndarray::Array1;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stochastic_update, stream_rng, tau_search, Acceptance, EngineConfig, BOOSTING_STREAM};
use crate::basis::Design;
use crate::data::{AugmentedDataset, BatchSampler};
use crate::error::Result;
use crate::model::{score_weights, Frame, ModelState, NormalSystem};
use crate::scalar::Scalar;

/// One boosting iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct IterationRecord<S> {
    /// Term whose update was applied, if any.
    pub winner: Option<usize>,
    /// Change in mean per-row out-of-batch log-likelihood of the applied
    /// update (zero when nothing was applied).
    pub improvement: S,
    /// Largest candidate score (per-row log-likelihood change, less
    /// `ν·edf_j` per row under [`Acceptance::Aic`]), applied or not.
    pub best_candidate: S,
    /// Mean per-row out-of-batch log-likelihood after the iteration.
    pub oob_loglik: S,
    pub fit_rows: usize,
    pub eval_rows: usize,
    /// Candidates whose normal equations needed the ridge fallback.
    pub ridged: usize,
    /// Candidates dropped because their system could not be solved.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct BoostingReport<S> {
    pub iterations_run: usize,
    pub update_counts: Vec<usize>,
    /// `update_counts / iterations_run`.
    pub update_frequencies: Vec<f64>,
    /// Cumulative accepted out-of-batch improvement per term.
    pub contributions: Vec<S>,
    pub oob_trace: Vec<S>,
    pub winners: Vec<Option<usize>>,
    pub early_stopped: bool,
    pub ridge_fallbacks: usize,
    pub failed_candidates: usize,
}

impl<S: Scalar> BoostingReport<S> {
    pub fn empty(n_terms: usize) -> Self {
        Self {
            iterations_run: 0,
            update_counts: vec![0; n_terms],
            update_frequencies: vec![0.0; n_terms],
            contributions: vec![S::zero(); n_terms],
            oob_trace: Vec::new(),
            winners: Vec::new(),
            early_stopped: false,
            ridge_fallbacks: 0,
            failed_candidates: 0,
        }
    }
}

struct Candidate<S> {
    beta: Array1<S>,
    gain: S,
    score: S,
    ridged: bool,
    system: NormalSystem<S>,
}

/// Draw disjoint fitting and evaluation batches, form the ν-step candidate
/// of every term on the fitting batch, and apply the best-scoring
/// candidate if its score is positive. The score is the change in mean
/// out-of-batch log-likelihood, less `ν·edf_j` per row under
/// [`Acceptance::Aic`]. The winner's smoothing parameters are re-tuned by
/// [`tau_search`] before it is applied; if the retuned update no longer
/// scores positive, the original candidate is applied.
pub fn boosting_iteration<S: Scalar, R: Rng + ?Sized>(
    design: &Design<S>,
    data: &AugmentedDataset,
    state: &mut ModelState<S>,
    config: &EngineConfig,
    sampler: &mut BatchSampler,
    rng: &mut R,
) -> Result<IterationRecord<S>> {
    let (fit_batch, eval_batch) = sampler.sample_disjoint(data, rng);
    let fit = Frame::from_batch(data, &fit_batch, design, state);
    let eval = Frame::from_batch(data, &eval_batch, design, state);
    let wq = score_weights(fit.y(), fit.eta());
    let base = eval.loglik();
    let n_eval = S::from_usize_lossy(eval.len().max(1));
    let step = S::lit(config.step_length);
    let same_batch = fit.rows() == eval.rows();
    let score_of = |gain: S, edf: S| match config.acceptance {
        Acceptance::Aic => gain - step * edf / n_eval,
        Acceptance::Loglik => gain,
    };

    let candidates: Vec<Option<Candidate<S>>> = (0..design.len())
        .into_par_iter()
        .map(|j| {
            let block = &design.blocks[j];
            let system = NormalSystem::assemble(block, &fit, &wq, &state.beta[j]);
            let sol = system.solve(&block.basis.penalty(&state.tau[j])).ok()?;
            let beta = stochastic_update(&state.beta[j], &sol.beta, step);
            let delta = &beta - &state.beta[j];
            let gain = (eval.loglik_shifted(block, delta.view()) - base) / n_eval;
            Some(Candidate {
                beta,
                gain,
                score: score_of(gain, sol.edf),
                ridged: sol.ridged,
                system,
            })
        })
        .collect();

    let failed = candidates.iter().filter(|c| c.is_none()).count();
    let mut ridged = candidates.iter().flatten().filter(|c| c.ridged).count();
    let mut best: Option<(usize, &Candidate<S>)> = None;
    for (j, c) in candidates.iter().enumerate() {
        let Some(c) = c else { continue };
        // strict comparison keeps the lowest index among ties
        if c.score.is_finite() && best.is_none_or(|(_, b)| c.score > b.score) {
            best = Some((j, c));
        }
    }

    let mut record = IterationRecord {
        winner: None,
        improvement: S::zero(),
        best_candidate: best.map_or(S::neg_infinity(), |(_, c)| c.score),
        oob_loglik: base / n_eval,
        fit_rows: fit.len(),
        eval_rows: eval.len(),
        ridged,
        failed,
    };
    let Some((j, cand)) = best else { return Ok(record) };
    if !(cand.score > S::zero()) {
        return Ok(record);
    }

    let block = &design.blocks[j];
    let mut beta = cand.beta.clone();
    let mut gain = cand.gain;
    let mut tau = state.tau[j].clone();
    if config.optimize_tau && block.basis.is_penalized() {
        let choice = tau_search(
            block,
            &state.beta[j],
            &state.tau[j],
            &cand.system,
            &eval,
            same_batch,
            &config.tau,
            config.tau_criterion,
        )?;
        let tuned = stochastic_update(&state.beta[j], &choice.solution.beta, step);
        let delta = &tuned - &state.beta[j];
        let tuned_gain = (eval.loglik_shifted(block, delta.view()) - base) / n_eval;
        if score_of(tuned_gain, choice.solution.edf) > S::zero() {
            beta = tuned;
            gain = tuned_gain;
            tau = choice.tau;
            ridged += usize::from(choice.solution.ridged);
        }
    }
    state.beta[j] = beta;
    state.tau[j] = tau;
    record.winner = Some(j);
    record.improvement = gain;
    record.oob_loglik = base / n_eval + gain;
    record.ridged = ridged;
    Ok(record)
}

/// Run the boosting pass from a zero state. Selected terms are those
/// updated at least once.
pub fn run_boosting<S: Scalar>(
    design: &Design<S>,
    data: &AugmentedDataset,
    config: &EngineConfig,
) -> Result<(ModelState<S>, BoostingReport<S>)> {
    config.validate()?;
    let mut state = ModelState::zeros(design, S::lit(config.tau.initial));
    let mut report = BoostingReport::empty(design.len());
    if config.boost_iterations == 0 {
        return Ok((state, report));
    }
    let mut sampler = BatchSampler::new(data, config.batch_rows)?;
    let mut rng = stream_rng(config.seed, BOOSTING_STREAM);
    let tol = S::lit(config.early_stop_tol);
    let mut stale = 0usize;
    for _ in 0..config.boost_iterations {
        let rec = boosting_iteration(design, data, &mut state, config, &mut sampler, &mut rng)?;
        report.iterations_run += 1;
        report.ridge_fallbacks += rec.ridged;
        report.failed_candidates += rec.failed;
        if let Some(j) = rec.winner {
            report.update_counts[j] += 1;
            report.contributions[j] += rec.improvement;
        }
        report.oob_trace.push(rec.oob_loglik);
        report.winners.push(rec.winner);
        if rec.best_candidate < tol || !rec.best_candidate.is_finite() {
            stale += 1;
            if stale >= config.early_stop_patience {
                report.early_stopped = true;
                break;
            }
        } else {
            stale = 0;
        }
    }
    let n = report.iterations_run as f64;
    report.update_frequencies = report.update_counts.iter().map(|&c| c as f64 / n).collect();
    Ok((state, report))
}
