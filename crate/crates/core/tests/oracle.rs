mod common;

use bbhazard::basis::difference_penalty;
use bbhazard::data::AugmentedDataset;
use bbhazard::engine::run_refit;
use bbhazard::model::{backfit_update, score_weights, NormalSystem};
use bbhazard::{Design, EngineConfig, Frame, ModelState};
use common::{backfit_to_convergence, block_penalty, flat, joint_irls, oracle_beta, sim_data, stacked, three_terms, wls, y_vec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn backfitting_fixed_point_is_the_joint_penalized_fit(seed in 0u64..1000, n in 80usize..180, log_tau in -1.0f64..2.0) {
        let data = sim_data(n, seed);
        prop_assume!(data.n_rows() <= 2000);
        let design = three_terms(&data);
        let tau = 10f64.powf(log_tau);
        let (state, _) = backfit_to_convergence(&design, &data, tau, 1e-8);
        let want = oracle_beta(&design, &data, &state.tau);
        for (a, b) in flat(&state).iter().zip(want.iter()) {
            prop_assert!((a - b).abs() < 1e-6, "{} vs {}", a, b);
        }
    }
}

#[test]
fn centering_leaves_the_fitted_predictor_unchanged() {
    let data = sim_data(150, 3);
    let design = three_terms(&data);
    let tau = vec![vec![2.0]; 3];

    // centered parameterization, as the engine stores it
    let (xc, offc) = stacked(&design, &data);
    let centered = joint_irls(&xc, &y_vec(&data), &block_penalty(&design, &tau, &offc));

    // raw B-spline columns and plain difference penalties
    let dims: Vec<usize> = design.blocks.iter().map(|b| b.basis.recipe.raw_dim()).collect();
    let p: usize = dims.iter().sum();
    let mut xr = DMatrix::zeros(data.n_rows(), p);
    let mut pen = DMatrix::zeros(p, p);
    let mut off = 0;
    for (b, &d) in design.blocks.iter().zip(&dims) {
        let mut raw = vec![0.0; d];
        for r in 0..data.n_rows() {
            let row = data.row(r);
            b.basis.recipe.raw_row(row.t, row.covariates, &mut raw);
            for (c, v) in raw.iter().enumerate() {
                xr[(r, off + c)] = *v;
            }
        }
        let k = difference_penalty::<f64>(d, 2).unwrap();
        for i in 0..d {
            for c in 0..d {
                pen[(off + i, off + c)] = 2.0 * k[[i, c]];
            }
        }
        off += d;
    }
    let raw = joint_irls(&xr, &y_vec(&data), &pen);
    let diff = (&centered.eta - &raw.eta).amax();
    assert!(diff < 1e-8, "max |Δη| = {diff:e}");

    // the engine's own fit sees the same predictor
    let (state, _) = backfit_to_convergence(&design, &data, 2.0, 1e-10);
    let frame = Frame::full(&data, &design, &state);
    let diff = frame
        .eta()
        .iter()
        .zip(raw.eta.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-6, "engine vs raw oracle {diff:e}");
}

/// Working quantities at a state with a fitted baseline, for term `j`.
fn smooth_system(design: &Design, data: &AugmentedDataset, j: usize) -> (ModelState, Vec<f64>, Vec<f64>, NormalSystem<f64>) {
    let mut state = ModelState::zeros(design, 1.0);
    let mut frame = Frame::full(data, design, &state);
    for _ in 0..5 {
        backfit_update(design, 0, &mut state, &mut frame, &[1.0]).unwrap();
    }
    let wq = score_weights(frame.y(), frame.eta());
    let system = NormalSystem::assemble(&design.blocks[j], &frame, &wq, &state.beta[j]);
    let partial: Vec<f64> = wq.z.iter().zip(frame.eta()).map(|(z, e)| z - e).collect();
    (state, wq.w, partial, system)
}

#[test]
fn heavy_smoothing_tends_to_the_constrained_affine_fit() {
    let data = sim_data(300, 8);
    let design = three_terms(&data);
    let j = 1;
    let block = &design.blocks[j];
    let (_, w, r, system) = smooth_system(&design, &data, j);

    let unpenalized = system.solve(&block.basis.penalty(&[0.0])).unwrap();
    assert!((unpenalized.edf - block.dim() as f64).abs() < 1e-8);

    // oracle: coefficients affine in the index, fitted values summing to zero
    let d = block.basis.recipe.raw_dim();
    let mut raw = vec![0.0; d];
    let mut xr = DMatrix::zeros(data.n_rows(), d);
    for row in 0..data.n_rows() {
        let pr = data.row(row);
        block.basis.recipe.raw_row(pr.t, pr.covariates, &mut raw);
        for c in 0..d {
            xr[(row, c)] = raw[c];
        }
    }
    let ones = DVector::from_element(d, 1.0);
    let idx = DVector::from_iterator(d, (0..d).map(|m| m as f64));
    let col_sums = xr.row_sum().transpose();
    let v = &ones * col_sums.dot(&idx) - &idx * col_sums.dot(&ones);
    let g = &xr * v;
    let coef = wls(&DMatrix::from_column_slice(g.len(), 1, g.as_slice()), &w, &r)[0];
    let want = g * coef;

    // edf and fitted values approach the limit as τ grows
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let x = block.dense(&data, &rows);
    let mut last = (f64::INFINITY, f64::INFINITY);
    for tau in [1e4, 1e6, 1e8] {
        let sol = system.solve(&block.basis.penalty(&[tau])).unwrap();
        let fit = x.dot(&sol.beta);
        let dev = fit.iter().zip(want.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let excess = sol.edf - 1.0;
        assert!(excess > -1e-9 && excess < last.0 && dev < last.1, "tau {tau}: edf - 1 = {excess:e}, dev {dev:e}");
        last = (excess, dev);
    }
    assert!(last.0 < 1e-6 && last.1 < 1e-6 * want.amax().max(1.0), "{last:?}");
}

#[test]
fn backfit_update_never_increases_the_working_criterion() {
    let data = sim_data(200, 4);
    let design = three_terms(&data);
    for j in 1..3 {
        for tau in [0.0, 0.3, 30.0] {
            let (state, w, r, system) = smooth_system(&design, &data, j);
            let block = &design.blocks[j];
            let rows: Vec<usize> = (0..data.n_rows()).collect();
            let x = block.dense(&data, &rows);
            let pen = block.basis.penalty(&[tau]);
            let crit = |beta: &ndarray::Array1<f64>| {
                let fit = x.dot(beta);
                let rss: f64 = fit.iter().zip(&r).zip(&w).map(|((f, r), w)| w * (r - f).powi(2)).sum();
                rss + beta.dot(&pen.dot(beta))
            };
            let new = system.solve(&pen).unwrap().beta;
            assert!(crit(&new) <= crit(&state.beta[j]) + 1e-9);
            // and it is the minimizer: nearby points are no better
            for k in 0..new.len() {
                let mut b = new.clone();
                b[k] += 1e-3;
                assert!(crit(&new) <= crit(&b) + 1e-12);
            }
        }
    }
}

fn full_batch_config(iterations: usize, burn_in: usize) -> EngineConfig {
    EngineConfig {
        refit_iterations: iterations,
        burn_in,
        batch_rows: 1_000_000,
        optimize_tau: false,
        ..EngineConfig::default()
    }
}

#[test]
fn full_batch_refit_is_deterministic_backfitting() {
    let data = sim_data(120, 6);
    let design = three_terms(&data);
    let start = ModelState::zeros(&design, 3.0);

    // one sweep of ν = 1 on the full data equals one backfitting sweep
    let (one, _) = run_refit(&design, &data, &[0, 1, 2], &start, &full_batch_config(1, 0)).unwrap();
    let mut manual = start.clone();
    let mut frame = Frame::full(&data, &design, &manual);
    for j in 0..3 {
        backfit_update(&design, j, &mut manual, &mut frame, &[3.0]).unwrap();
    }
    for (a, b) in flat(&one).iter().zip(flat(&manual)) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }

    // the post-burn-in mean sits on the joint penalized fit
    let (avg, report) = run_refit(&design, &data, &[0, 1, 2], &start, &full_batch_config(300, 200)).unwrap();
    let want = oracle_beta(&design, &data, &avg.tau);
    for (a, b) in flat(&avg).iter().zip(want.iter()) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
    assert_eq!(report.trajectories.len(), 300);
}

#[test]
fn burn_in_of_all_but_one_returns_the_last_iterate() {
    let data = sim_data(300, 2);
    let design = three_terms(&data);
    let start = ModelState::zeros(&design, 10.0);
    let config = EngineConfig {
        refit_iterations: 6,
        burn_in: 5,
        batch_rows: 800,
        ..EngineConfig::default()
    };
    let (state, report) = run_refit(&design, &data, &[0, 2], &start, &config).unwrap();
    let last = report.trajectories.last().unwrap();
    assert_eq!(state.beta[0], last[0]);
    assert_eq!(state.beta[2], last[1]);
    assert!(state.beta[1].iter().all(|&v| v == 0.0));

    let (again, _) = run_refit(&design, &data, &[0, 2], &start, &config).unwrap();
    assert_eq!(state, again);
}
