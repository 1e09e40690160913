use ndarray::Array1;

use super::{TauCriterion, TauGrid};
use crate::basis::DesignBlock;
use crate::error::Result;
use crate::model::{aic, Frame, NormalSystem, PenalizedSolution};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct TauChoice<S> {
    pub tau: Vec<S>,
    pub solution: PenalizedSolution<S>,
    /// Criterion value of the chosen `τ` (term `j`'s edf only; the other
    /// terms contribute a constant).
    pub score: S,
}

struct Scored<S> {
    log_tau: f64,
    aic: S,
    solution: PenalizedSolution<S>,
}

/// Out-of-batch AIC search for the smoothing parameters of one term.
///
/// `system` holds the normal equations on the fitting batch; `beta_j` is
/// the coefficient vector the term currently contributes to `eval`. Each
/// candidate `τ` is solved on the fitting batch, plugged into the
/// evaluation batch predictor and scored by `-2ℓ_eval + 2·edf_j`; under
/// [`TauCriterion::HeldOut`] the edf term is dropped unless `same_batch`
/// says the evaluation rows are the fitting rows. Per pass,
/// `points` log-spaced values within `±width` decades of the current best
/// are tried; the width doubles when the optimum sits on the edge of the
/// pass and halves otherwise. Multi-component penalties are searched one
/// coordinate at a time. Ties go to the larger value.
pub fn tau_search<S: Scalar>(
    block: &DesignBlock<S>,
    beta_j: &Array1<S>,
    current: &[S],
    system: &NormalSystem<S>,
    eval: &Frame<'_, S>,
    same_batch: bool,
    grid: &TauGrid,
    criterion: TauCriterion,
) -> Result<TauChoice<S>> {
    let with_edf = same_batch || criterion == TauCriterion::Aic;
    let score = |tau: &[S]| -> Result<(S, PenalizedSolution<S>)> {
        let sol = system.solve(&block.basis.penalty(tau))?;
        let delta = &sol.beta - beta_j;
        let ll = eval.loglik_shifted(block, delta.view());
        let edf = if with_edf { sol.edf } else { S::zero() };
        Ok((aic(ll, edf), sol))
    };

    let mut tau: Vec<S> = current.to_vec();
    let (lo, hi) = (grid.log10_min, grid.log10_max);
    let (mut best_aic, mut best_sol) = score(&tau)?;
    for c in 0..tau.len() {
        let mut center = tau[c].to_f64_lossy().log10().clamp(lo, hi);
        let mut width = grid.log10_width;
        let mut best: Option<Scored<S>> = None;
        for _ in 0..grid.passes {
            let pts = grid_points(center, width, grid.points, lo, hi);
            let mut pass_best: Option<Scored<S>> = None;
            for &lt in &pts {
                let mut trial = tau.clone();
                trial[c] = S::lit(10f64.powf(lt));
                let (a, solution) = score(&trial)?;
                let cand = Scored { log_tau: lt, aic: a, solution };
                if better(&cand, pass_best.as_ref()) {
                    pass_best = Some(cand);
                }
            }
            let Some(pb) = pass_best else { break };
            let at_edge = pts.len() > 1
                && ((pb.log_tau == pts[0] && pts[0] > lo) || (pb.log_tau == pts[pts.len() - 1] && pts[pts.len() - 1] < hi));
            width = if at_edge { width * 2.0 } else { width / 2.0 };
            center = pb.log_tau;
            if better(&pb, best.as_ref()) {
                best = Some(pb);
            }
        }
        if let Some(b) = best {
            tau[c] = S::lit(10f64.powf(b.log_tau));
            best_aic = b.aic;
            best_sol = b.solution;
        }
    }
    Ok(TauChoice {
        tau,
        solution: best_sol,
        score: best_aic,
    })
}

fn better<S: Scalar>(cand: &Scored<S>, incumbent: Option<&Scored<S>>) -> bool {
    let Some(inc) = incumbent else { return true };
    let tol = S::lit(1e-12) * (S::one() + inc.aic.abs());
    if cand.aic < inc.aic - tol {
        true
    } else if cand.aic <= inc.aic + tol {
        cand.log_tau > inc.log_tau
    } else {
        false
    }
}

/// `n` equidistant points on `[center - width, center + width]`, clipped to
/// `[lo, hi]` and deduplicated.
fn grid_points(center: f64, width: f64, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    if n == 1 {
        return vec![center.clamp(lo, hi)];
    }
    let mut pts: Vec<f64> = (0..n)
        .map(|i| (center - width + 2.0 * width * i as f64 / (n - 1) as f64).clamp(lo, hi))
        .collect();
    pts.dedup();
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_clipped_and_deduplicated() {
        assert_eq!(grid_points(1.0, 2.0, 5, -4.0, 8.0), vec![-1.0, 0.0, 1.0, 2.0, 3.0]);
        assert_eq!(grid_points(7.5, 2.0, 5, -4.0, 8.0), vec![5.5, 6.5, 7.5, 8.0]);
        assert_eq!(grid_points(3.0, 2.0, 1, -4.0, 8.0), vec![3.0]);
    }
}
