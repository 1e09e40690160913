//! Batchwise backfitting: a boosting pass that updates only the term with
//! the best out-of-batch log-likelihood gain (and tunes its smoothing
//! parameters on out-of-batch AIC), followed by a resampling refit of the
//! selected terms with step length one.

mod boost;
mod refit;
mod tau;

use std::io::Write;
use std::time::Instant;

use ndarray::Array1;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::Design;
use crate::data::AugmentedDataset;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::scalar::Scalar;

pub use self::boost::{boosting_iteration, run_boosting, BoostingReport, IterationRecord};
pub use self::refit::{run_refit, RefitReport};
pub use self::tau::{tau_search, TauChoice};

/// Log-spaced smoothing parameter search around the current value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TauGrid {
    /// Starting value of every penalty component.
    pub initial: f64,
    pub log10_min: f64,
    pub log10_max: f64,
    /// Half-width (in decades) of the first pass.
    pub log10_width: f64,
    pub points: usize,
    pub passes: usize,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self {
            initial: 10.0,
            log10_min: -4.0,
            log10_max: 8.0,
            log10_width: 2.0,
            points: 5,
            passes: 2,
        }
    }
}

/// How boosting candidates are scored on the evaluation batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceptance {
    /// Change in out-of-batch AIC, `Δℓ - ν·edf_j`: a step must pay for the
    /// degrees of freedom it adds.
    #[default]
    Aic,
    /// Plain change in out-of-batch log-likelihood.
    Loglik,
}

/// Criterion minimized by the smoothing parameter search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauCriterion {
    /// `-2ℓ_eval`, plus `2·edf_j` only when the evaluation batch is the
    /// fitting batch (data within one batch).
    #[default]
    HeldOut,
    /// `-2ℓ_eval + 2·edf_j` always.
    Aic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Boosting iterations.
    pub boost_iterations: usize,
    /// Refit iterations, including burn-in.
    pub refit_iterations: usize,
    pub burn_in: usize,
    /// Step length ν of the boosting updates.
    pub step_length: f64,
    /// Target rows per batch `M`.
    pub batch_rows: usize,
    pub tau: TauGrid,
    pub tau_criterion: TauCriterion,
    pub acceptance: Acceptance,
    /// Tune smoothing parameters on out-of-batch AIC; when false they stay
    /// at their current values.
    pub optimize_tau: bool,
    /// Run the boosting pass for term selection; when false every term is
    /// refit.
    pub select: bool,
    pub seed: u64,
    /// Stop boosting once the best improvement stays below this value...
    pub early_stop_tol: f64,
    /// ...for this many consecutive iterations.
    pub early_stop_patience: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            boost_iterations: 200,
            refit_iterations: 200,
            burn_in: 100,
            step_length: 0.1,
            batch_rows: 20_000,
            tau: TauGrid::default(),
            tau_criterion: TauCriterion::default(),
            acceptance: Acceptance::default(),
            optimize_tau: true,
            select: true,
            seed: 1,
            early_stop_tol: 1e-8,
            early_stop_patience: 20,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.step_length > 0.0 && self.step_length <= 1.0) {
            return bad("step_length must lie in (0, 1]");
        }
        if self.refit_iterations > 0 && self.burn_in >= self.refit_iterations {
            return bad("burn_in must be smaller than refit_iterations");
        }
        if self.batch_rows == 0 {
            return bad("batch_rows must be positive");
        }
        let g = &self.tau;
        if !(g.initial > 0.0 && g.initial.is_finite()) {
            return bad("tau.initial must be positive");
        }
        if !(g.log10_min <= g.log10_max) || !g.log10_min.is_finite() || !g.log10_max.is_finite() {
            return bad("tau.log10_min must not exceed tau.log10_max");
        }
        if g.points == 0 || g.passes == 0 || !(g.log10_width >= 0.0) {
            return bad("tau grid needs at least one point, one pass and a nonnegative width");
        }
        Ok(())
    }
}

/// Eq. `(1 - ν) β_old + ν β_batch`.
pub fn stochastic_update<S: Scalar>(old: &Array1<S>, batch: &Array1<S>, step: S) -> Array1<S> {
    if step == S::one() {
        return batch.clone();
    }
    old * (S::one() - step) + batch * step
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const BOOSTING_STREAM: u64 = 0;
pub(crate) const REFIT_STREAM: u64 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub boosting_secs: f64,
    pub refit_secs: f64,
}

/// Outcome of [`fit`]: selection diagnostics of the boosting pass and the
/// averaged refit estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct FitReport<S> {
    pub terms: Vec<String>,
    pub selected: Vec<bool>,
    pub boosting: BoostingReport<S>,
    pub refit: Option<RefitReport<S>>,
    /// Final coefficients (post-burn-in refit means).
    pub beta: Vec<Array1<S>>,
    pub tau: Vec<Vec<S>>,
    pub seed: u64,
    pub config: EngineConfig,
    pub timing: Timing,
}

impl<S: Scalar> FitReport<S> {
    pub fn selected_names(&self) -> Vec<&str> {
        self.terms
            .iter()
            .zip(&self.selected)
            .filter(|(_, &s)| s)
            .map(|(n, _)| n.as_str())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Refit coefficient trajectories as CSV: `iteration,term,index,value`.
    pub fn write_trajectories_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "term", "index", "value"])?;
        if let Some(refit) = &self.refit {
            for (it, coefs) in refit.trajectories.iter().enumerate() {
                for (&j, beta) in refit.terms.iter().zip(coefs) {
                    for (k, v) in beta.iter().enumerate() {
                        w.write_record([
                            it.to_string(),
                            self.terms[j].clone(),
                            k.to_string(),
                            v.to_f64_lossy().to_string(),
                        ])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Select terms by boosting, then refit the selected terms and average the
/// post-burn-in iterates.
pub fn fit<S: Scalar>(
    design: &Design<S>,
    data: &AugmentedDataset,
    config: &EngineConfig,
) -> Result<(ModelState<S>, FitReport<S>)> {
    config.validate()?;
    let start = Instant::now();
    let (boost_state, boosting) = if config.select {
        run_boosting(design, data, config)?
    } else {
        let state = ModelState::zeros(design, S::lit(config.tau.initial));
        (state, BoostingReport::empty(design.len()))
    };
    let boosting_secs = start.elapsed().as_secs_f64();

    let selected: Vec<bool> = if config.select {
        boosting.update_counts.iter().map(|&c| c > 0).collect()
    } else {
        vec![true; design.len()]
    };
    let chosen: Vec<usize> = (0..design.len()).filter(|&j| selected[j]).collect();
    if chosen.is_empty() {
        return Err(Error::EmptySelection);
    }

    let start = Instant::now();
    let (state, refit) = run_refit(design, data, &chosen, &boost_state, config)?;
    let refit_secs = start.elapsed().as_secs_f64();

    let report = FitReport {
        terms: design.names(),
        selected,
        boosting,
        refit: Some(refit),
        beta: state.beta.clone(),
        tau: state.tau.clone(),
        seed: config.seed,
        config: config.clone(),
        timing: Timing {
            boosting_secs,
            refit_secs,
        },
    };
    Ok((state, report))
}
