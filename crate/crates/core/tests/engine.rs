mod common;

use bbhazard::basis::TermSpec;
use bbhazard::data::{augment, AugmentedDataset, BatchSampler};
use bbhazard::engine::{boosting_iteration, fit, run_boosting, run_refit, tau_search, TauCriterion, TauGrid};
use bbhazard::model::{aic, backfit_update, score_weights, NormalSystem};
use bbhazard::sim::{gen_covariates, gen_events_with, replication_data, term_specs, SimConfig};
use bbhazard::{Design, Design32, EngineConfig, Error, Frame, ModelState};
use common::{sigmoid, sim_data};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn basic(n: usize, seed: u64) -> (SimConfig, AugmentedDataset) {
    let cfg = SimConfig {
        n,
        seed,
        ..SimConfig::default()
    };
    let recs = replication_data(&cfg, 0).unwrap();
    let data = augment(&recs, &cfg.schema(), cfg.horizon).unwrap();
    (cfg, data)
}

fn quick(boost: usize, refit: usize) -> EngineConfig {
    EngineConfig {
        boost_iterations: boost,
        refit_iterations: refit,
        burn_in: refit / 2,
        ..EngineConfig::default()
    }
}

#[test]
fn zero_iterations_select_nothing() {
    let data = sim_data(200, 1);
    let design = Design::build(&[TermSpec::baseline("f0"), TermSpec::smooth("f1", "x1")], &data).unwrap();
    let (state, report) = run_boosting(&design, &data, &quick(0, 10)).unwrap();
    assert_eq!(report.update_counts, vec![0, 0]);
    assert_eq!(state.max_abs(), 0.0);
    assert!(matches!(fit(&design, &data, &quick(0, 10)), Err(Error::EmptySelection)));
}

#[test]
fn a_lone_improving_term_is_updated() {
    let data = sim_data(300, 2);
    let design = Design::build(&[TermSpec::baseline("f0")], &data).unwrap();
    let (state, report) = run_boosting(&design, &data, &quick(1, 0)).unwrap();
    assert_eq!(report.update_counts, vec![1]);
    assert_eq!(report.winners, vec![Some(0)]);
    assert!(state.max_abs() > 0.0);
}

#[test]
fn no_update_when_no_candidate_pays_off() {
    let data = sim_data(300, 3);
    let design = Design::build(&[TermSpec::intercept("b")], &data).unwrap();
    let mean = data.event_count() as f64 / data.n_rows() as f64;
    let mut state = ModelState::zeros(&design, 1.0);
    state.beta[0][0] = (mean / (1.0 - mean)).ln();
    let before = state.clone();
    let config = EngineConfig {
        batch_rows: 1_000_000,
        ..EngineConfig::default()
    };
    let mut sampler = BatchSampler::new(&data, config.batch_rows).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let rec = boosting_iteration(&design, &data, &mut state, &config, &mut sampler, &mut rng).unwrap();
    assert_eq!(rec.winner, None);
    assert!(rec.best_candidate <= 0.0);
    assert_eq!(state, before);
}

#[test]
fn fits_are_reproducible_and_thread_count_invariant() {
    let (cfg, data) = basic(3000, 4);
    let design = Design::build(&term_specs(&cfg), &data).unwrap();
    let config = quick(60, 40);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let (state, mut report) = pool.install(|| fit(&design, &data, &config)).unwrap();
        report.timing = Default::default();
        (state, report)
    };
    let a = run(1);
    let b = run(1);
    let c = run(3);
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn boosting_invariants() {
    let (cfg, data) = basic(5000, 5);
    let design = Design::build(&term_specs(&cfg), &data).unwrap();
    let short = quick(100, 0);
    let long = quick(200, 0);
    let (_, a) = run_boosting(&design, &data, &short).unwrap();
    let (_, b) = run_boosting(&design, &data, &long).unwrap();

    // the first 100 iterations are shared, so selection can only grow
    for j in 0..design.len() {
        assert!(a.update_counts[j] == 0 || b.update_counts[j] > 0);
    }
    assert_eq!(a.winners[..], b.winners[..a.winners.len()]);

    assert!(b.update_frequencies.iter().sum::<f64>() <= 1.0 + 1e-12);
    // every accepted update raised the out-of-batch log-likelihood
    assert!(b.contributions.iter().all(|&c| c >= 0.0));
    for (j, (&c, &n)) in b.contributions.iter().zip(&b.update_counts).enumerate() {
        assert_eq!(c > 0.0, n > 0, "term {j}");
    }
}

fn noise_data(n: usize, seed: u64) -> AugmentedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gen_covariates(n, false, &mut rng);
    let recs = gen_events_with(&x, 20, &mut rng, |_, _| sigmoid(-2.5));
    augment(&recs, &SimConfig::default().schema(), 20).unwrap()
}

/// Repeated searches on a pure-noise covariate, refitting on one half of the
/// individuals and scoring on the other, as boosting does across iterations.
fn noise_tau_path(seed: u64) -> Vec<f64> {
    let data = noise_data(5000, seed);
    let design = Design::build(&[TermSpec::baseline("f0"), TermSpec::smooth("f1", "x1")], &data).unwrap();
    let mut state = ModelState::zeros(&design, 10.0);
    let (fit_rows, eval_rows): (Vec<usize>, Vec<usize>) =
        (0..data.n_rows()).partition(|&r| data.row_individual(r) % 2 == 0);
    let mut fit = Frame::new(&data, fit_rows, &design, &state);
    for _ in 0..10 {
        backfit_update(&design, 0, &mut state, &mut fit, &[10.0]).unwrap();
    }
    let mut eval = Frame::new(&data, eval_rows, &design, &state);
    let grid = TauGrid::default();
    let block = &design.blocks[1];
    let mut path = vec![state.tau[1][0]];
    for _ in 0..8 {
        let wq = score_weights(fit.y(), fit.eta());
        let system = NormalSystem::assemble(block, &fit, &wq, &state.beta[1]);
        let c = tau_search(block, &state.beta[1], &state.tau[1], &system, &eval, false, &grid, TauCriterion::HeldOut).unwrap();
        let delta = &c.solution.beta - &state.beta[1];
        fit.shift_term(block, delta.view());
        eval.shift_term(block, delta.view());
        state.beta[1] = c.solution.beta;
        state.tau[1] = c.tau;
        path.push(state.tau[1][0]);
    }
    path
}

#[test]
fn pure_noise_smoothing_drifts_to_the_upper_bound() {
    let top = 10f64.powf(TauGrid::default().log10_max);
    for seed in 0..3 {
        let path = noise_tau_path(60 + seed);
        assert!(path.windows(2).all(|w| w[1] >= w[0]), "{path:?}");
        assert_eq!(*path.last().unwrap(), top, "{path:?}");
    }
}

#[test]
fn a_wiggly_effect_wants_less_smoothing() {
    let (_, data) = basic(5000, 7);
    let specs = [TermSpec::baseline("f0").with_basis_dim(20), TermSpec::smooth("f4", "x4").with_basis_dim(20)];
    let design = Design::build(&specs, &data).unwrap();
    let mut state = ModelState::zeros(&design, 10.0);
    let mut frame = Frame::full(&data, &design, &state);
    // converge both terms at the default center first
    for _ in 0..30 {
        backfit_update(&design, 0, &mut state, &mut frame, &[10.0]).unwrap();
        backfit_update(&design, 1, &mut state, &mut frame, &[10.0]).unwrap();
    }
    let block = &design.blocks[1];
    let wq = score_weights(frame.y(), frame.eta());
    let system = NormalSystem::assemble(block, &frame, &wq, &state.beta[1]);
    let grid = TauGrid::default();
    let score_at = |tau: f64| {
        let sol = system.solve(&block.basis.penalty(&[tau])).unwrap();
        aic(frame.loglik_shifted(block, (&sol.beta - &state.beta[1]).view()), sol.edf)
    };
    let center = grid.initial;
    let lower = 10f64.powf(center.log10() - grid.log10_width);
    assert!(score_at(lower) < score_at(center));
    let c = tau_search(block, &state.beta[1], &[center], &system, &frame, true, &grid, TauCriterion::Aic).unwrap();
    assert!(c.tau[0] < center, "{:?}", c.tau);
}

#[test]
fn a_one_point_grid_keeps_the_current_value() {
    let (_, data) = basic(500, 8);
    let design = Design::build(&[TermSpec::baseline("f0"), TermSpec::smooth("f2", "x2")], &data).unwrap();
    let state = ModelState::zeros(&design, 3.0);
    let frame = Frame::full(&data, &design, &state);
    let block = &design.blocks[1];
    let wq = score_weights(frame.y(), frame.eta());
    let system = NormalSystem::assemble(block, &frame, &wq, &state.beta[1]);
    let grid = TauGrid {
        points: 1,
        passes: 1,
        log10_width: 0.0,
        ..TauGrid::default()
    };
    let c = tau_search(block, &state.beta[1], &[3.0], &system, &frame, true, &grid, TauCriterion::Aic).unwrap();
    assert!((c.tau[0] - 3.0).abs() < 1e-12);
}

#[test]
fn pure_intercept_truth_selects_only_the_baseline() {
    let config = EngineConfig {
        refit_iterations: 0,
        burn_in: 0,
        ..EngineConfig::default()
    };
    let specs = term_specs(&SimConfig::default());
    let mut clean = 0;
    for seed in 0..25 {
        let data = noise_data(5000, 100 + seed);
        let design = Design::build(&specs, &data).unwrap();
        let (_, report) = run_boosting(&design, &data, &EngineConfig { seed, ..config.clone() }).unwrap();
        let selected: Vec<usize> = (0..design.len()).filter(|&j| report.update_counts[j] > 0).collect();
        clean += usize::from(selected == [0]);
    }
    assert!(clean >= 23, "only {clean}/25 runs selected the baseline alone");
}

#[test]
fn refit_trajectories_stay_bounded() {
    for seed in 0..25 {
        let (cfg, data) = basic(1000, 200 + seed);
        let design = Design::build(&term_specs(&cfg), &data).unwrap();
        // every term, noise included, refitted from zero
        let all: Vec<usize> = (0..design.len()).collect();
        let start = ModelState::zeros(&design, 10.0);
        let (_, report) = run_refit(&design, &data, &all, &start, &EngineConfig { seed, ..EngineConfig::default() }).unwrap();
        let max = report
            .trajectories
            .iter()
            .flatten()
            .flat_map(|b| b.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 50.0, "seed {seed}: max |β| = {max}");
    }
}

#[test]
fn single_precision_matches_double_precision() {
    let (cfg, data) = basic(400, 9);
    let specs = term_specs(&cfg)[..4].to_vec();
    let config = EngineConfig {
        select: false,
        optimize_tau: false,
        batch_rows: 1_000_000,
        refit_iterations: 30,
        burn_in: 20,
        ..EngineConfig::default()
    };
    let d64 = Design::build(&specs, &data).unwrap();
    let d32 = Design32::build(&specs, &data).unwrap();
    let (s64, _) = fit(&d64, &data, &config).unwrap();
    let (s32, _) = fit(&d32, &data, &config).unwrap();
    let e64 = Frame::full(&data, &d64, &s64);
    let e32 = bbhazard::model::Frame::full(&data, &d32, &s32);
    let diff = e64
        .eta()
        .iter()
        .zip(e32.eta())
        .map(|(a, &b)| (a - f64::from(b)).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-3, "max |η64 - η32| = {diff}");
}

