use super::*;
use crate::model::{Dataset, SmoothLoss};

fn quadratic() -> Dataset {
    // TLS with huge α on a single unit row is ½x² to ~1e-12 relative
    Dataset::from_rows(vec![vec![(0, 1.0)]], vec![0.0], 1).unwrap()
}

fn quad_objective(ds: &Dataset) -> Objective<'_> {
    Objective::new(SmoothLoss::TruncatedLs { alpha: 1e12 }, Regularizer::l0(0.0).unwrap(), ds).unwrap()
}

fn small_classification() -> Dataset {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..12usize {
        let a = (i as f64 * 0.37).sin();
        let b = (i as f64 * 1.3).cos();
        let c = ((i * i) as f64 * 0.11).sin();
        rows.push(vec![(0, a), (1, b), (3, c)]);
        labels.push(if a + 0.5 * b > 0.0 { 1.0 } else { 0.0 });
    }
    Dataset::from_rows(rows, labels, 4).unwrap()
}

fn nlls(ds: &Dataset, reg: Regularizer) -> Objective<'_> {
    Objective::new(SmoothLoss::NllsSigmoid, reg, ds).unwrap()
}

#[test]
fn residual_hand_example() {
    // f = ½x², x_t = 1, x_next = 0.5, g_t = 1, η = 0.5
    let r = residual_from_grad(&[0.5], &[1.0], &[0.5], &[1.0], 0.5);
    assert_eq!(r, 0.5);
    let ds = quadratic();
    let obj = quad_objective(&ds);
    assert!((stationarity_residual(&obj, &[1.0], &[0.5], &[1.0], 0.5) - 0.5).abs() < 1e-10);
}

#[test]
fn pgd_on_quadratic_decays_geometrically() {
    let ds = quadratic();
    let obj = quad_objective(&ds);
    let mut cfg = SolverConfig::new(Algorithm::Pgd, Setting::FiniteSum).with_c(0.5).with_iterations(3);
    cfg.x0 = Some(vec![1.0]);
    let seen = std::cell::RefCell::new(Vec::new());
    let mut obs = |v: &StepView<'_>| seen.borrow_mut().push(v.x_next[0]);
    run_observed(&obj, &cfg, Some(&mut obs)).unwrap();
    let xs = seen.into_inner();
    for (x, want) in xs.iter().zip([0.5, 0.25, 0.125]) {
        assert!((x - want).abs() < 1e-11);
    }
}

#[test]
fn pgd_from_fixed_point_stays() {
    let ds = quadratic();
    let obj = quad_objective(&ds);
    let cfg = SolverConfig::new(Algorithm::Pgd, Setting::FiniteSum).with_iterations(5).with_residual_every(1);
    let tr = run_pgd(&obj, &cfg).unwrap();
    assert!(tr.records.iter().all(|r| r.objective == ExtReal::Finite(0.0)));
    assert!(tr.residuals().all(|(_, v)| v == 0.0));
    assert_eq!(tr.x_final, vec![0.0]);
}

#[test]
fn pgd_descends_on_nlls_l0() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::l0(1e-3).unwrap());
    let cfg = SolverConfig::new(Algorithm::Pgd, Setting::FiniteSum).with_iterations(50);
    let tr = run(&obj, &cfg).unwrap();
    for w in tr.records.windows(2) {
        assert!(w[1].objective.finite().unwrap() <= w[0].objective.finite().unwrap() + 1e-12);
    }
}

#[test]
fn observer_residual_uses_step_gradient() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::l_half(1e-3).unwrap());
    let cfg = SolverConfig::new(Algorithm::MbSpg, Setting::Online)
        .with_schedule(BatchSchedule::Fixed(3))
        .with_iterations(20)
        .with_residual_every(1);
    let mut checked = 0;
    let mut obs = |v: &StepView<'_>| {
        let r = stationarity_residual(&obj, v.x_t, v.x_next, v.g_t, v.eta);
        assert_eq!(Some(r), v.residual);
        checked += 1;
    };
    run_observed(&obj, &cfg, Some(&mut obs)).unwrap();
    assert_eq!(checked, 20);
}

#[test]
fn full_batch_without_replacement_matches_pgd() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::l0(1e-3).unwrap());
    let pgd = run(&obj, &SolverConfig::new(Algorithm::Pgd, Setting::FiniteSum).with_c(0.45).with_iterations(30)).unwrap();
    let mut cfg = SolverConfig::new(Algorithm::MbSpg, Setting::FiniteSum)
        .with_schedule(BatchSchedule::Fixed(ds.n()))
        .with_iterations(30)
        .with_seed(77);
    cfg.sampling = Sampling::WithoutReplacement;
    let mb = run(&obj, &cfg).unwrap();
    assert_eq!(mb.x_final, pgd.x_final);
    assert_eq!(mb.grad_evals(), pgd.grad_evals());
}

#[test]
fn identical_samples_make_minibatch_equal_pgd() {
    let rows = vec![vec![(0, 0.6), (1, -0.8)]; 5];
    let ds = Dataset::from_rows(rows, vec![1.0; 5], 2).unwrap();
    let obj = nlls(&ds, Regularizer::l0(1e-4).unwrap());
    let pgd = run(&obj, &SolverConfig::new(Algorithm::Pgd, Setting::Online).with_c(0.45).with_iterations(25)).unwrap();
    for m in [1, 3, 8] {
        let cfg = SolverConfig::new(Algorithm::MbSpg, Setting::Online).with_schedule(BatchSchedule::Fixed(m)).with_iterations(25);
        let mb = run(&obj, &cfg).unwrap();
        for (a, b) in mb.x_final.iter().zip(&pgd.x_final) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn increasing_batches_are_logged() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::l0(1e-4).unwrap());
    let cfg = SolverConfig::new(Algorithm::MbSpg, Setting::Online)
        .with_schedule(BatchSchedule::Increasing(1))
        .with_iterations(5);
    let tr = run(&obj, &cfg).unwrap();
    let batches: Vec<usize> = tr.records.iter().skip(1).map(|r| r.batch).collect();
    assert_eq!(batches, vec![1, 2, 3, 4, 5]);
    assert_eq!(tr.grad_evals(), 15);
}

#[test]
fn spgr_single_sample_finite_sum_is_pgd() {
    let ds = Dataset::from_rows(vec![vec![(0, 1.0), (1, 0.5)]], vec![1.0], 2).unwrap();
    let obj = nlls(&ds, Regularizer::l0(1e-4).unwrap());
    let pgd = run(&obj, &SolverConfig::new(Algorithm::Pgd, Setting::FiniteSum).with_c(0.3).with_iterations(15)).unwrap();
    let spgr = run(&obj, &SolverConfig::new(Algorithm::Spgr, Setting::FiniteSum).with_iterations(15)).unwrap();
    assert_eq!(spgr.anchor_iters, 15);
    assert!(pgd.same_path(&spgr));
}

#[test]
fn spgr_finite_sum_epoch_length() {
    let ds = Dataset::from_rows(vec![vec![(0, 1.0)]; 4], vec![1.0, 0.0, 1.0, 0.0], 1).unwrap();
    let obj = nlls(&ds, Regularizer::l0(1e-4).unwrap());
    let tr = run(&obj, &SolverConfig::new(Algorithm::Spgr, Setting::FiniteSum).with_iterations(6)).unwrap();
    let anchors: Vec<bool> = tr.records.iter().skip(1).map(|r| r.anchor).collect();
    assert_eq!(anchors, vec![true, false, true, false, true, false]);
    assert_eq!(tr.records[1].batch, 4);
    assert_eq!(tr.grad_evals(), 3 * 4 + 3 * 2 * 2);
}

#[test]
fn spgr_online_accounting() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::l0(1e-4).unwrap());
    let cfg = SolverConfig::new(Algorithm::Spgr, Setting::Online)
        .with_schedule(BatchSchedule::SpgrOnline { s1: 16, s2: 4, q: 4 })
        .with_iterations(10);
    let tr = run(&obj, &cfg).unwrap();
    assert_eq!(tr.grad_evals(), 3 * 16 + 7 * 2 * 4);
    assert_eq!((tr.anchor_iters, tr.inner_iters), (3, 7));
}

#[test]
fn imb_stage_sizes() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::l0(1e-4).unwrap());
    let cfg = SolverConfig::new(Algorithm::SpgrImb, Setting::Online).with_iterations(9);
    let tr = run(&obj, &cfg).unwrap();
    let batches: Vec<usize> = tr.records.iter().skip(1).map(|r| r.batch).collect();
    assert_eq!(batches, vec![1, 1, 4, 2, 2, 9, 3, 3, 3]);
    assert_eq!((tr.anchor_iters, tr.inner_iters), (3, 6));
    assert_eq!(tr.grad_evals(), 1 + 2 + 4 + 8 + 9 + 18);
}

#[test]
fn l0_ball_stays_feasible() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::l0_ball(1).unwrap());
    for alg in [Algorithm::Pgd, Algorithm::MbSpg, Algorithm::Spgr, Algorithm::SpgrImb] {
        let setting = if alg == Algorithm::Spgr { Setting::FiniteSum } else { Setting::Online };
        let tr = run(&obj, &SolverConfig::new(alg, setting).with_iterations(30)).unwrap();
        assert!(tr.records.iter().all(|r| r.nnz <= 1 && r.objective.is_finite()));
    }
}

#[test]
fn runs_are_reproducible() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::l_two_thirds(1e-3).unwrap());
    for alg in [Algorithm::MbSpg, Algorithm::Spgr, Algorithm::SpgrImb] {
        let cfg = SolverConfig::new(alg, Setting::Online).with_iterations(40).with_seed(5);
        let a = run(&obj, &cfg).unwrap();
        let b = run(&obj, &cfg).unwrap();
        assert!(a.same_path(&b));
        let c = run(&obj, &cfg.clone().with_seed(6)).unwrap();
        assert!(!a.same_path(&c));
    }
}

#[test]
fn c_ranges_are_enforced() {
    let cases = [(Algorithm::Pgd, 0.99, 1.0), (Algorithm::MbSpg, 0.49, 0.5), (Algorithm::Spgr, 0.33, 0.34)];
    for (alg, ok, bad) in cases {
        let setting = if alg == Algorithm::Spgr { Setting::FiniteSum } else { Setting::Online };
        assert!(SolverConfig::new(alg, setting).with_c(ok).validate().is_ok());
        assert!(SolverConfig::new(alg, setting).with_c(bad).validate().is_err());
    }
    let cfg = SolverConfig::new(Algorithm::Spgr, Setting::Online).with_schedule(BatchSchedule::SpgrFiniteSum);
    assert!(cfg.validate().is_err());
}

#[test]
fn output_index_is_uniform() {
    assert_eq!(draw_output_index(1, 3), 1);
    assert_eq!(draw_output_index(10, 3), draw_output_index(10, 3));
    let mut counts = [0usize; 10];
    let draws = 100_000u64;
    for seed in 0..draws {
        counts[draw_output_index(10, seed) - 1] += 1;
    }
    let expect = draws as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expect).powi(2) / expect).sum();
    // χ²₉ upper 1% point
    assert!(chi2 < 21.666, "chi2 = {chi2}");
}

#[test]
fn output_snapshot_matches_iterate() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::l0(1e-3).unwrap());
    let cfg = SolverConfig::new(Algorithm::MbSpg, Setting::Online).with_iterations(12).with_seed(2);
    let mut iterates = vec![vec![0.0; 4]];
    let mut obs = |v: &StepView<'_>| iterates.push(v.x_next.to_vec());
    let tr = run_observed(&obj, &cfg, Some(&mut obs)).unwrap();
    let (x_r, r) = select_output(&tr);
    assert!((1..=12).contains(&r));
    assert_eq!(x_r, iterates[r].as_slice());
}

#[test]
fn divergence_returns_partial_trace() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::l1(1e-6).unwrap()).with_lipschitz(1e-300).unwrap();
    let cfg = SolverConfig::new(Algorithm::Pgd, Setting::FiniteSum).with_iterations(10);
    match run(&obj, &cfg) {
        Err(SolverError::Diverged { trace, .. }) => {
            assert!(trace.diverged);
            assert!(!trace.records.is_empty());
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn accuracy_mode_uses_corollary_sizes() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::l0(1e-4).unwrap()).with_sigma2(0.01).unwrap();
    let cfg = SolverConfig::new(Algorithm::MbSpg, Setting::Online).with_accuracy(0.05);
    let tr = run(&obj, &cfg).unwrap();
    let m = schedule_fixed_batch(0.45, 0.01, 0.05).unwrap();
    assert!(tr.records.iter().skip(1).all(|r| r.batch == m));
    let k = BoundConstants::from_c(obj.lipschitz, 0.45).unwrap();
    let t = (2.0 * k.c2 * obj.f_x0 / (k.eta * 0.05 * 0.05)).ceil() as usize;
    assert_eq!(tr.iterations(), t);
}

#[test]
fn quantized_sgd_halves_step_and_logs_quantized_model() {
    let ds = small_classification();
    let obj = nlls(&ds, Regularizer::quantization(1.0, vec![-1.0, 1.0]).unwrap());
    let grid = QuantGrid::new(vec![-1.0, 1.0]).unwrap();
    let mut cfg = SolverConfig::new(Algorithm::HeuristicQsgd, Setting::Online).with_iterations(8);
    cfg.step_decay = Some(2);
    let mut etas = Vec::new();
    let mut obs = |v: &StepView<'_>| etas.push(v.eta);
    let tr = run_observed(&obj, &cfg, Some(&mut obs)).unwrap();
    let eta0 = 0.9 / obj.lipschitz;
    assert_eq!(etas[0], eta0);
    assert_eq!(etas[2], eta0 / 2.0);
    assert_eq!(etas[7], eta0 / 8.0);
    assert!(tr.records.iter().skip(1).all(|r| r.residual.is_none() && r.nnz == 4));
    assert_eq!(run_heuristic_qsgd(&obj, &grid, &cfg).unwrap().x_final, tr.x_final);
}
