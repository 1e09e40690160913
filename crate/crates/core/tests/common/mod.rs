//! Test-only oracles: dense joint penalized IRLS in nalgebra, independent
//! of the engine's keyed frames and single-term normal equations.
#![allow(dead_code)]

use bbhazard::data::{augment, AugmentedDataset, IndividualRecord};
use bbhazard::sim::{gen_covariates, gen_events, SimConfig, TrueModel};
use bbhazard::basis::TermSpec;
use bbhazard::model::backfit_update;
use bbhazard::{Design, Frame, ModelState};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Person-level data from the simulation model.
pub fn sim_records(n: usize, a: f64, spatial: bool, seed: u64) -> (SimConfig, Vec<IndividualRecord>) {
    let cfg = SimConfig {
        n,
        a,
        spatial,
        ..SimConfig::default()
    };
    let truth = TrueModel::new(&cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gen_covariates(n, spatial, &mut rng);
    (cfg.clone(), gen_events(&x, &truth, cfg.horizon, &mut rng))
}

pub fn sim_data(n: usize, seed: u64) -> AugmentedDataset {
    let (cfg, recs) = sim_records(n, -3.0, false, seed);
    augment(&recs, &cfg.schema(), cfg.horizon).unwrap()
}

pub fn y_vec(data: &AugmentedDataset) -> DVector<f64> {
    DVector::from_iterator(data.n_rows(), data.y().iter().map(|&v| f64::from(v)))
}

/// Stacked design `[X_0 … X_p]` over every person-period row, and the
/// column offset of each term.
pub fn stacked(design: &Design, data: &AugmentedDataset) -> (DMatrix<f64>, Vec<usize>) {
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let mut offsets = vec![0];
    for b in &design.blocks {
        offsets.push(offsets.last().unwrap() + b.dim());
    }
    let mut x = DMatrix::zeros(rows.len(), *offsets.last().unwrap());
    for (j, b) in design.blocks.iter().enumerate() {
        let d = b.dense(data, &rows);
        for r in 0..rows.len() {
            for c in 0..b.dim() {
                x[(r, offsets[j] + c)] = d[[r, c]];
            }
        }
    }
    (x, offsets)
}

/// Block-diagonal penalty `diag(P_j(τ_j))`.
pub fn block_penalty(design: &Design, tau: &[Vec<f64>], offsets: &[usize]) -> DMatrix<f64> {
    let p = *offsets.last().unwrap();
    let mut out = DMatrix::zeros(p, p);
    for (j, b) in design.blocks.iter().enumerate() {
        let pj = b.basis.penalty(&tau[j]);
        for r in 0..b.dim() {
            for c in 0..b.dim() {
                out[(offsets[j] + r, offsets[j] + c)] = pj[[r, c]];
            }
        }
    }
    out
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub struct OracleFit {
    pub beta: DVector<f64>,
    pub eta: DVector<f64>,
    pub iterations: usize,
}

/// Maximize `ℓ(β) - ½ βᵀPβ` by full Newton steps on the stacked design.
/// Rank-deficient systems are solved by SVD pseudo-inverse, so `η` is
/// well defined even when `β` is not.
pub fn joint_irls(x: &DMatrix<f64>, y: &DVector<f64>, penalty: &DMatrix<f64>) -> OracleFit {
    let mut beta = DVector::zeros(x.ncols());
    let mut eta = DVector::zeros(x.nrows());
    for it in 1..=200 {
        let mu = eta.map(sigmoid);
        let w = mu.map(|m| m * (1.0 - m));
        let z = &eta + (y - &mu).component_div(&w);
        let mut xtw = x.transpose();
        for (c, &wi) in w.iter().enumerate() {
            xtw.column_mut(c).scale_mut(wi);
        }
        let a = &xtw * x + penalty;
        let b = &xtw * z;
        let next = a.svd(true, true).solve(&b, 1e-12).unwrap();
        let next_eta = x * &next;
        let change = (&next_eta - &eta).amax();
        beta = next;
        eta = next_eta;
        if change < 1e-13 {
            return OracleFit { beta, eta, iterations: it };
        }
    }
    OracleFit { beta, eta, iterations: 200 }
}

/// Weighted least squares of `r` on the columns of `x`.
pub fn wls(x: &DMatrix<f64>, w: &[f64], r: &[f64]) -> DVector<f64> {
    let mut xtw = x.transpose();
    for (c, &wi) in w.iter().enumerate() {
        xtw.column_mut(c).scale_mut(wi);
    }
    let a = &xtw * x;
    let b = &xtw * DVector::from_column_slice(r);
    a.svd(true, true).solve(&b, 1e-14).unwrap()
}

pub fn three_terms(data: &AugmentedDataset) -> Design {
    let specs = [
        TermSpec::baseline("f0"),
        TermSpec::smooth("f1", "x1"),
        TermSpec::smooth("f2", "x2"),
    ];
    Design::build(&specs, data).unwrap()
}

pub fn flat(state: &ModelState) -> Vec<f64> {
    state.beta.iter().flat_map(|b| b.iter().copied()).collect()
}

/// Cyclic full-data backfitting until the largest relative coefficient
/// change drops below `tol`.
pub fn backfit_to_convergence(design: &Design, data: &AugmentedDataset, tau: f64, tol: f64) -> (ModelState, usize) {
    let mut state = ModelState::zeros(design, tau);
    let mut frame = Frame::full(data, design, &state);
    for sweep in 1..=5000 {
        let before = flat(&state);
        for j in 0..design.len() {
            let t = state.tau[j].clone();
            backfit_update(design, j, &mut state, &mut frame, &t).unwrap();
        }
        let change = before
            .iter()
            .zip(flat(&state))
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max);
        if change < tol {
            return (state, sweep);
        }
    }
    panic!("backfitting did not converge");
}

pub fn oracle_beta(design: &Design, data: &AugmentedDataset, tau: &[Vec<f64>]) -> DVector<f64> {
    let (x, offsets) = stacked(design, data);
    let p = block_penalty(design, tau, &offsets);
    joint_irls(&x, &y_vec(data), &p).beta
}
