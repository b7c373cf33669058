use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;

use super::config::{check_keys, count, nonnegative, positive, Experiment};
use crate::error::Result;
use crate::model::{
    BankParts, JumpMap, ModelBank, ModelId, MotionModel, NiwParams, NoiseBlock, ObsDomain, ObservationModel,
    ProcessNoise,
};
#[allow(unused_imports)]
use num_traits::Float;

pub const DEFAULT_MODELS: usize = 10;
pub const DEFAULT_ACCEL_COEFF: f64 = 15.0;
pub const DEFAULT_BEARING_STD_DEG: f64 = 1.0;
pub const DEFAULT_RANGE_STD_M: f64 = 5.0;
pub const DEFAULT_NOISE_FLOOR: f64 = 1e-6;
pub const DEFAULT_TAU: f64 = 0.1;
pub const DEFAULT_NIW_SCALE: f64 = 100.0;
pub const DEFAULT_NIW_DOF: f64 = 100.0;

const SERIES_CUTOFF: f64 = 1e-4;

/// Turn coefficients `(A, B, C, D)` at angle `phi` and their derivatives.
pub fn turn_coefficients(phi: f64) -> ([f64; 4], [f64; 4]) {
    let (s, c) = (phi.sin(), phi.cos());
    let (a, b, da, db) = if phi.abs() < SERIES_CUTOFF {
        let p2 = phi * phi;
        (
            1.0 - p2 / 6.0 + p2 * p2 / 120.0,
            phi / 2.0 - phi * p2 / 24.0,
            -phi / 3.0 + phi * p2 / 30.0,
            0.5 - p2 / 8.0 + p2 * p2 / 144.0,
        )
    } else {
        (
            s / phi,
            (1.0 - c) / phi,
            (phi * c - s) / (phi * phi),
            (phi * s - (1.0 - c)) / (phi * phi),
        )
    };
    ([a, b, c, s], [da, db, -s, c])
}

/// Coordinated turn on `(x, vx, y, vy, omega)` with unit sampling time.
///
/// A jump `j' -> j` turns the velocity by `|j' - j| * omega`, so staying
/// in the same model moves in a straight line.
#[derive(Debug, Clone)]
pub struct CoordinatedTurn {
    pub n_models: usize,
}

impl CoordinatedTurn {
    fn multiplier(from: ModelId, to: ModelId) -> f64 {
        (from.index() as f64 - to.index() as f64).abs()
    }

    pub fn matrix(&self, from: ModelId, to: ModelId, x: &[f64]) -> DMatrix<f64> {
        let ([a, b, c, d], _) = turn_coefficients(Self::multiplier(from, to) * x[4]);
        DMatrix::from_row_slice(
            5,
            5,
            &[
                1.0, a, 0.0, -b, 0.0, //
                0.0, c, 0.0, -d, 0.0, //
                0.0, b, 1.0, a, 0.0, //
                0.0, d, 0.0, c, 0.0, //
                0.0, 0.0, 0.0, 0.0, 1.0,
            ],
        )
    }
}

impl MotionModel for CoordinatedTurn {
    fn state_dim(&self) -> usize {
        5
    }

    fn mean(&self, from: ModelId, to: ModelId, x: &[f64], out: &mut [f64]) {
        let ([a, b, c, d], _) = turn_coefficients(Self::multiplier(from, to) * x[4]);
        let (vx, vy) = (x[1], x[3]);
        out[0] = x[0] + a * vx - b * vy;
        out[1] = c * vx - d * vy;
        out[2] = x[2] + b * vx + a * vy;
        out[3] = d * vx + c * vy;
        out[4] = x[4];
    }

    fn mean_vjp(&self, from: ModelId, to: ModelId, x: &[f64], cot: &[f64], out: &mut [f64]) {
        let n = Self::multiplier(from, to);
        let ([a, b, c, d], [da, db, dc, dd]) = turn_coefficients(n * x[4]);
        let (vx, vy) = (x[1], x[3]);
        out[0] += cot[0];
        out[2] += cot[2];
        out[1] += cot[0] * a + cot[1] * c + cot[2] * b + cot[3] * d;
        out[3] += -cot[0] * b - cot[1] * d + cot[2] * a + cot[3] * c;
        out[4] += cot[4]
            + n * (cot[0] * (da * vx - db * vy)
                + cot[1] * (dc * vx - dd * vy)
                + cot[2] * (db * vx + da * vy)
                + cot[3] * (dd * vx + dc * vy));
    }
}

/// Bearing in radians and range in kilometres from positions in metres.
#[derive(Debug, Clone, Copy)]
pub struct BearingRange;

impl ObservationModel for BearingRange {
    fn state_dim(&self) -> usize {
        5
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn predict(&self, x: &[f64], out: &mut [f64]) {
        out[0] = libm::atan2(x[2], x[0]);
        out[1] = libm::hypot(x[0], x[2]) / 1000.0;
    }

    fn vjp(&self, x: &[f64], cot: &[f64], out: &mut [f64]) {
        let (px, py) = (x[0], x[2]);
        let r2 = px * px + py * py;
        let r = r2.sqrt();
        out[0] += -cot[0] * py / r2 + cot[1] * px / (1000.0 * r);
        out[2] += cot[0] * px / r2 + cot[1] * py / (1000.0 * r);
    }
}

/// Coordinated-turn bank under range-bearing measurements.
///
/// The acceleration noise of a jump `j' -> j` has standard deviation
/// `accel_coeff * ln(1 + |j' - j|)` and the turn-rate noise
/// `turn_std_coeff * sqrt(j) * pi / 180`. A small isotropic floor keeps
/// every transition covariance positive definite. The two transition
/// parameters are log-variance deviations of the acceleration and
/// turn-rate noise.
pub fn build_exp2_bank(overrides: &BTreeMap<String, f64>) -> Result<ModelBank> {
    check_keys(Experiment::Exp2Turn, overrides)?;
    let l = count(overrides, "n_models", DEFAULT_MODELS)?;
    let accel = nonnegative(overrides, "accel_coeff", DEFAULT_ACCEL_COEFF)?;
    let turn = positive(overrides, "turn_std_coeff", 1.0)?;
    let bearing_sd = positive(overrides, "bearing_std_deg", DEFAULT_BEARING_STD_DEG)? * PI / 180.0;
    let range_sd = positive(overrides, "range_std_m", DEFAULT_RANGE_STD_M)? / 1000.0;
    let floor = positive(overrides, "noise_floor", DEFAULT_NOISE_FLOOR)?;
    let tau = nonnegative(overrides, "tau", DEFAULT_TAU)?;
    let lambda = positive(overrides, "niw_scale", DEFAULT_NIW_SCALE)?;
    let nu = positive(overrides, "niw_dof", DEFAULT_NIW_DOF)?;

    let mut accel_std = Vec::with_capacity(l * l);
    let mut turn_std = Vec::with_capacity(l * l);
    for from in 0..l {
        for to in 0..l {
            accel_std.push(accel * libm::log1p((from as f64 - to as f64).abs()));
            turn_std.push(turn * ((to + 1) as f64).sqrt() * PI / 180.0);
        }
    }
    let accel_factor = DMatrix::from_row_slice(5, 2, &[0.5, 0.0, 1.0, 0.0, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0]);
    let mut turn_factor = DMatrix::zeros(5, 1);
    turn_factor[(4, 0)] = 1.0;
    let noise = ProcessNoise::new(
        5,
        l,
        2,
        vec![
            NoiseBlock {
                factor: accel_factor,
                base_std: accel_std,
                theta_index: Some(0),
            },
            NoiseBlock {
                factor: turn_factor,
                base_std: turn_std,
                theta_index: Some(1),
            },
            NoiseBlock {
                factor: DMatrix::identity(5, 5),
                base_std: vec![floor.sqrt(); l * l],
                theta_index: None,
            },
        ],
    )?;

    let r = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        bearing_sd * bearing_sd,
        range_sd * range_sd,
    ]));
    let niw = NiwParams::new(vec![0.0; 2], lambda, &r * (nu - 3.0), nu)?;

    ModelBank::new(BankParts {
        description: format!(
            "exp2_turn: L={l}, accel_coeff={accel}, turn_std_coeff={turn}, \
             bearing_sd={bearing_sd} rad, range_sd={range_sd} km, floor={floor}, tau={tau}, \
             niw=(m=0, lambda={lambda}, nu={nu}, psi=(nu-3)R)"
        ),
        motion: Arc::new(CoordinatedTurn { n_models: l }),
        noise,
        observation: Arc::new(BearingRange),
        meas_noise: vec![r; l],
        niw: vec![niw; l],
        jump: JumpMap::uniform(l, 2, tau)?,
        initial_probs: vec![1.0 / l as f64; l],
        obs_domain: Some(ObsDomain {
            lower: vec![-FRAC_PI_2, 0.0],
            upper: vec![FRAC_PI_2, 2.0],
        }),
    })
}

pub fn exp2_initial_state(overrides: &BTreeMap<String, f64>) -> Vec<f64> {
    let g = |k: &str, d: f64| overrides.get(k).copied().unwrap_or(d);
    let speed = g("speed", 10.0);
    let heading = g("heading_deg", 45.0) * PI / 180.0;
    vec![
        g("x0", 1000.0),
        speed * heading.cos(),
        g("y0", 1000.0),
        speed * heading.sin(),
        g("omega0", PI / 36.0),
    ]
}

pub fn exp2_initial_cov(overrides: &BTreeMap<String, f64>) -> Result<DMatrix<f64>> {
    let pos = positive(overrides, "p0_pos", 100.0)?;
    let vel = positive(overrides, "p0_vel", 4.0)?;
    let om = positive(overrides, "p0_omega_deg", 1.0)? * PI / 180.0;
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![
        pos,
        vel,
        pos,
        vel,
        om * om,
    ])))
}
