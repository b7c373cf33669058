use bkt_core::baseline::{ekf_bank_track, ekf_filter, kf_bank_track, kf_filter, KalmanModel};
use bkt_core::scenario::{build_bank, initial_cov, initial_state, simulate, Experiment, ScenarioConfig};
use bkt_core::{ModelId, ObsVec};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_spd(d: usize, scale: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| gauss(rng));
    (&a * a.transpose() + DMatrix::identity(d, d)) * scale
}

fn random_model(nx: usize, ny: usize, rng: &mut ChaCha8Rng) -> KalmanModel {
    KalmanModel::new(
        DMatrix::from_fn(nx, nx, |i, j| if i == j { 0.9 } else { 0.2 * gauss(rng) }),
        DMatrix::from_fn(ny, nx, |_, _| gauss(rng)),
        random_spd(nx, 0.1, rng),
        random_spd(ny, 0.5, rng),
        (0..nx).map(|_| gauss(rng)).collect(),
        random_spd(nx, 1.0, rng),
    )
    .unwrap()
}

fn random_measurements(ny: usize, k: usize, m: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<ObsVec>> {
    (0..k)
        .map(|_| {
            (0..m)
                .map(|_| ObsVec((0..ny).map(|_| 2.0 * gauss(rng)).collect()))
                .collect()
        })
        .collect()
}

/// Information-form update over all of a step's measurements at once, and
/// the joint log density of the stacked measurements.
fn information_filter(model: &KalmanModel, ys: &[Vec<ObsVec>]) -> Vec<(DVector<f64>, DMatrix<f64>, f64)> {
    let mut x = DVector::from_column_slice(&model.x0);
    let mut p = model.p0.clone();
    let rinv = model.r.clone().try_inverse().unwrap();
    let mut out = Vec::new();
    for yk in ys {
        x = &model.a * x;
        p = &model.a * &p * model.a.transpose() + &model.q;
        let (ny, m) = (model.c.nrows(), yk.len());
        let mut big_c = DMatrix::zeros(ny * m, x.len());
        let mut big_r = DMatrix::zeros(ny * m, ny * m);
        let mut stacked = DVector::zeros(ny * m);
        for (i, y) in yk.iter().enumerate() {
            big_c.view_mut((i * ny, 0), (ny, x.len())).copy_from(&model.c);
            big_r.view_mut((i * ny, i * ny), (ny, ny)).copy_from(&model.r);
            stacked.rows_mut(i * ny, ny).copy_from_slice(y);
        }
        let s = &big_c * &p * big_c.transpose() + big_r;
        let e = &stacked - &big_c * &x;
        let ll = -0.5 * (e.transpose() * s.clone().try_inverse().unwrap() * &e)[(0, 0)]
            - 0.5 * s.determinant().ln()
            - 0.5 * (ny * m) as f64 * (2.0 * std::f64::consts::PI).ln();
        let pinv = p.clone().try_inverse().unwrap();
        let mut info = pinv.clone();
        let mut vec = &pinv * &x;
        for y in yk {
            info += model.c.transpose() * &rinv * &model.c;
            vec += model.c.transpose() * &rinv * DVector::from_column_slice(y);
        }
        p = info.try_inverse().unwrap();
        x = &p * vec;
        out.push((x.clone(), p.clone(), ll));
    }
    out
}

#[test]
fn kalman_filter_matches_the_information_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..30 {
        let (nx, ny) = (1 + trial % 4, 1 + trial % 3);
        let model = random_model(nx, ny, &mut rng);
        let ys = random_measurements(ny, 8, 1 + trial % 4, &mut rng);
        let track = kf_filter(&model, &ys).unwrap();
        for (k, (x, p, ll)) in information_filter(&model, &ys).iter().enumerate() {
            let scale = x.amax().max(1.0);
            assert!(
                (DVector::from_column_slice(&track.means[k]) - x).amax() < 1e-8 * scale,
                "trial {trial} step {k}"
            );
            assert!((&track.covs[k] - p).amax() < 1e-8 * p.amax().max(1.0));
            assert!((track.loglik[k] - ll).abs() < 1e-8 * ll.abs().max(1.0));
        }
    }
}

#[test]
fn one_member_bank_is_the_plain_filter() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = random_model(3, 2, &mut rng);
    let ys = random_measurements(2, 20, 2, &mut rng);
    let bank = kf_bank_track(std::slice::from_ref(&model), &ys).unwrap();
    let plain = kf_filter(&model, &ys).unwrap();
    assert_eq!(bank.estimates, plain.means);
    assert!(bank.weights.iter().all(|w| w == &vec![1.0]));
}

#[test]
fn twin_members_reproduce_either_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = random_model(2, 2, &mut rng);
    let ys = random_measurements(2, 15, 3, &mut rng);
    let bank = kf_bank_track(&[model.clone(), model.clone()], &ys).unwrap();
    let plain = kf_filter(&model, &ys).unwrap();
    for (e, m) in bank.estimates.iter().zip(&plain.means) {
        for (a, b) in e.iter().zip(m.iter()) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }
    assert!(bank.weights.iter().all(|w| (w[0] - 0.5).abs() < 1e-12));
}

#[test]
fn generating_model_takes_the_weight() {
    let mut cfg = ScenarioConfig::new(Experiment::Exp1Linear)
        .with_override("n_models", 2.0)
        .with_override("tau", 0.0);
    cfg.horizon = 50;
    cfg.measurements_per_step = 5;
    let bank = build_bank(&cfg).unwrap();
    let x0 = initial_state(&cfg);
    let p0 = initial_cov(&cfg).unwrap();
    let models: Vec<KalmanModel> = bank
        .models()
        .map(|j| KalmanModel::from_bank(&bank, j, x0.clone(), p0.clone()).unwrap())
        .collect();
    // Measurements from model 1 alone.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let truth = &models[0];
    let mut x = DVector::from_column_slice(&x0);
    let lq = truth.q.clone().cholesky().unwrap().l();
    let lr = truth.r.clone().cholesky().unwrap().l();
    let ys: Vec<Vec<ObsVec>> = (0..50)
        .map(|_| {
            x = &truth.a * &x + &lq * DVector::from_fn(4, |_, _| gauss(&mut rng));
            (0..5)
                .map(|_| {
                    ObsVec(
                        (&truth.c * &x + &lr * DVector::from_fn(2, |_, _| gauss(&mut rng)))
                            .as_slice()
                            .to_vec(),
                    )
                })
                .collect()
        })
        .collect();
    let track = kf_bank_track(&models, &ys).unwrap();
    assert!(track.weights[49][0] > 0.99, "{:?}", track.weights[49]);
    assert_eq!(track.model_map()[49], ModelId::from_index(0));
}

#[test]
fn diffuse_prior_gives_the_running_mean() {
    let model = KalmanModel::new(
        DMatrix::identity(2, 2),
        DMatrix::identity(2, 2),
        DMatrix::zeros(2, 2),
        DMatrix::identity(2, 2) * 0.3,
        vec![5.0, -5.0],
        DMatrix::identity(2, 2) * 1e12,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let ys = random_measurements(2, 10, 4, &mut rng);
    let track = kf_filter(&model, &ys).unwrap();
    let mut sum = [0.0; 2];
    let mut n = 0.0;
    for (k, yk) in ys.iter().enumerate() {
        for y in yk {
            sum[0] += y[0];
            sum[1] += y[1];
            n += 1.0;
        }
        for d in 0..2 {
            assert!((track.means[k][d] - sum[d] / n).abs() < 1e-6);
        }
    }
}

#[test]
fn extended_filter_on_a_linear_bank_is_the_kalman_filter() {
    let mut cfg = ScenarioConfig::new(Experiment::Exp1Linear);
    cfg.horizon = 20;
    let bank = build_bank(&cfg).unwrap();
    let ys = simulate(&bank, &cfg).unwrap().measurements;
    let x0 = initial_state(&cfg);
    let p0 = initial_cov(&cfg).unwrap();
    for j in bank.models() {
        let ekf = ekf_filter(&bank, j, &x0, &p0, &ys).unwrap();
        let kf = kf_filter(
            &KalmanModel::from_bank(&bank, j, x0.clone(), p0.clone()).unwrap(),
            &ys,
        )
        .unwrap();
        for (a, b) in ekf.means.iter().zip(&kf.means) {
            for (u, v) in a.iter().zip(b.iter()) {
                assert!((u - v).abs() < 1e-10 * v.abs().max(1.0));
            }
        }
    }
}

#[test]
fn turn_bank_estimate_is_the_weighted_member_mean() {
    let mut cfg = ScenarioConfig::new(Experiment::Exp2Turn);
    cfg.horizon = 40;
    cfg.measurements_per_step = 20;
    let bank = build_bank(&cfg).unwrap();
    let truth = simulate(&bank, &cfg).unwrap();
    let track = ekf_bank_track(
        &bank,
        &initial_state(&cfg),
        &initial_cov(&cfg).unwrap(),
        &truth.measurements,
    )
    .unwrap();
    assert_eq!(track.tracks.len(), 10);
    for (k, e) in track.estimates.iter().enumerate() {
        for d in 0..5 {
            let mix: f64 = track.weights[k]
                .iter()
                .zip(&track.tracks)
                .map(|(w, t)| w * t.means[k][d])
                .sum();
            assert!((e[d] - mix).abs() < 1e-12 * mix.abs().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bank_weights_are_distributions(seed in 0u64..10_000, members in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let models: Vec<KalmanModel> = (0..members).map(|_| random_model(2, 1, &mut rng)).collect();
        let ys = random_measurements(1, 6, 2, &mut rng);
        let track = kf_bank_track(&models, &ys).unwrap();
        for w in &track.weights {
            prop_assert_eq!(w.len(), members);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|v| *v >= 0.0));
        }
    }
}
