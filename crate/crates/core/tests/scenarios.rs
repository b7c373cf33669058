use bkt_core::scenario::{
    build_bank, exp1_transition_matrix, initial_state, simulate, Experiment, ScenarioConfig,
};
use bkt_core::ModelId;
use nalgebra::DVector;

fn exp1(horizon: usize, seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(Experiment::Exp1Linear);
    c.horizon = horizon;
    c.seed = seed;
    c
}

#[test]
fn exp1_noise_levels_follow_the_model_index() {
    let bank = build_bank(&exp1(1, 0)).unwrap();
    let (one, two, three) = (
        ModelId::from_index(0),
        ModelId::from_index(1),
        ModelId::from_index(2),
    );
    let q = bank.transition_kernel(one, two, &[0.0; 4]).unwrap();
    let want = [5e-5, 5e-5, 0.04 / 30.0, 0.04 / 30.0];
    for i in 0..4 {
        assert!((q.noise_cov()[(i, i)] - want[i]).abs() < 1e-15, "{i}");
    }
    assert!((q.noise_cov()[(2, 2)] - 1.3333e-3).abs() < 1e-7);
    let r = bank.measurement_kernel(three).noise_cov();
    assert_eq!(r[(0, 0)], 1.5);
    assert_eq!(r[(1, 1)], 1.5);
    assert_eq!(r[(0, 1)], 0.0);
}

#[test]
fn degenerate_settings_are_rejected() {
    for (key, v) in [("delta", 0.0), ("delta", -0.1), ("beta", 0.0), ("n_models", 0.0)] {
        assert!(
            build_bank(&exp1(5, 0).with_override(key, v)).is_err(),
            "{key}={v}"
        );
    }
    assert!(build_bank(&exp1(5, 0).with_override("not_a_key", 1.0)).is_err());
    assert!(build_bank(&exp1(0, 0)).is_err());
}

#[test]
fn first_model_is_uniform() {
    let bank = build_bank(&exp1(1, 0)).unwrap();
    let n = 10_000;
    let mut counts = [0.0f64; 3];
    for seed in 0..n {
        let t = simulate(&bank, &exp1(1, seed)).unwrap();
        counts[t.model_seq[0].index()] += 1.0;
    }
    let e = n as f64 / 3.0;
    let chi2: f64 = counts.iter().map(|c| (c - e).powi(2) / e).sum();
    // 0.999 quantile of chi-square with two degrees of freedom.
    assert!(chi2 < 13.816, "{chi2} {counts:?}");
}

#[test]
fn vanishing_noise_gives_noiseless_motion_and_exact_positions() {
    let cfg = exp1(30, 3)
        .with_override("alpha", 1e-20)
        .with_override("beta", 1e-20)
        .with_override("tau", 0.0);
    let bank = build_bank(&cfg).unwrap();
    let t = simulate(&bank, &cfg).unwrap();
    let a = exp1_transition_matrix(0.1);
    let mut x = DVector::from_vec(initial_state(&cfg));
    for k in 0..30 {
        x = &a * x;
        for i in 0..4 {
            assert!((t.states[k][i] - x[i]).abs() < 1e-8, "step {k}");
        }
        for y in &t.measurements[k] {
            assert!((y[0] - x[0]).abs() < 1e-8 && (y[1] - x[1]).abs() < 1e-8);
        }
    }
}

#[test]
fn same_seed_same_truth() {
    for exp in [Experiment::Exp1Linear, Experiment::Exp2Turn] {
        let mut cfg = ScenarioConfig::new(exp);
        cfg.horizon = 20;
        cfg.seed = 77;
        let bank = build_bank(&cfg).unwrap();
        let a = simulate(&bank, &cfg).unwrap();
        assert_eq!(a, simulate(&bank, &cfg).unwrap());
        cfg.seed = 78;
        assert_ne!(a, simulate(&bank, &cfg).unwrap());
        assert_eq!(a.horizon(), 20);
        assert!(a
            .measurements
            .iter()
            .all(|m| m.len() == cfg.measurements_per_step));
    }
}

#[test]
fn switches_match_the_jump_probabilities() {
    let cfg = exp1(20_000, 5).with_override("tau", 0.0);
    let bank = build_bank(&cfg).unwrap();
    let t = simulate(&bank, &cfg).unwrap();
    let mut counts = [[0.0f64; 3]; 3];
    let mut prev = t.initial_model;
    for m in &t.model_seq {
        counts[prev.index()][m.index()] += 1.0;
        prev = *m;
    }
    for (i, row) in counts.iter().enumerate() {
        let n: f64 = row.iter().sum();
        for (j, c) in row.iter().enumerate() {
            let p = bank
                .jump()
                .jump_prob(ModelId::from_index(i), ModelId::from_index(j));
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((c / n - p).abs() < 3.0 * se, "{i}->{j}: {}", c / n);
        }
    }
}

#[test]
fn turn_scenario_starts_on_the_diagonal() {
    let cfg = ScenarioConfig::new(Experiment::Exp2Turn);
    let bank = build_bank(&cfg).unwrap();
    let x0 = initial_state(&cfg);
    let y = bank.measurement_kernel(ModelId::from_index(0)).predict(&x0);
    assert!((y[0] - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    assert!((y[1] - 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(bank.n_models(), 10);
    assert_eq!(bank.state_dim(), 5);
}

#[test]
fn turn_measurements_stay_in_the_observation_domain() {
    let mut cfg = ScenarioConfig::new(Experiment::Exp2Turn);
    cfg.horizon = 60;
    let bank = build_bank(&cfg).unwrap();
    let domain = bank.obs_domain().unwrap().clone();
    for seed in 0..10 {
        cfg.seed = seed;
        let t = simulate(&bank, &cfg).unwrap();
        assert!(t.measurements.iter().flatten().all(|y| domain.contains(y)));
    }
}
