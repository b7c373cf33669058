//! Hamiltonian Monte Carlo with a diagonal metric and burn-in tuning.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

/// Differentiable log density over an unconstrained vector.
pub trait Potential {
    fn dim(&self) -> usize;
    /// Returns `log p(q)` and writes its gradient into `grad`.
    fn log_density_grad(&mut self, q: &[f64], grad: &mut [f64]) -> f64;
}

/// Position together with its cached log density and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct HmcState {
    pub q: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

impl HmcState {
    pub fn new<P: Potential + ?Sized>(pot: &mut P, q: Vec<f64>) -> Self {
        let mut grad = vec![0.0; q.len()];
        let log_density = pot.log_density_grad(&q, &mut grad);
        HmcState { q, log_density, grad }
    }

    /// Re-evaluates the cache after the potential changed.
    pub fn refresh<P: Potential + ?Sized>(&mut self, pot: &mut P) {
        self.log_density = pot.log_density_grad(&self.q, &mut self.grad);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub accepted: bool,
    pub accept_prob: f64,
    /// `H(end) - H(start)`; infinite when the trajectory diverged.
    pub energy_error: f64,
}

/// Leapfrog integrator and Metropolis correction.
#[derive(Debug, Clone)]
pub struct Hmc {
    pub step_size: f64,
    pub leapfrog_steps: usize,
    /// Inverse of the diagonal mass.
    pub inv_mass: Vec<f64>,
    pub jitter: f64,
    p: Vec<f64>,
    q: Vec<f64>,
    g: Vec<f64>,
}

impl Hmc {
    pub fn new(dim: usize, step_size: f64, leapfrog_steps: usize) -> Self {
        Hmc {
            step_size,
            leapfrog_steps,
            inv_mass: vec![1.0; dim],
            jitter: 0.0,
            p: vec![0.0; dim],
            q: vec![0.0; dim],
            g: vec![0.0; dim],
        }
    }

    pub fn with_mass(mut self, mass: &[f64]) -> Self {
        self.inv_mass = mass.iter().map(|m| 1.0 / m).collect();
        self
    }

    pub fn dim(&self) -> usize {
        self.inv_mass.len()
    }

    fn kinetic(&self, p: &[f64]) -> f64 {
        0.5 * p.iter().zip(&self.inv_mass).map(|(p, m)| p * p * m).sum::<f64>()
    }

    /// One HMC transition. A non-finite Hamiltonian anywhere along the
    /// trajectory counts as a rejection.
    pub fn transition<P, R>(&mut self, pot: &mut P, state: &mut HmcState, rng: &mut R) -> Transition
    where
        P: Potential + ?Sized,
        R: Rng + ?Sized,
    {
        let d = self.dim();
        let eps = if self.jitter > 0.0 {
            self.step_size * (1.0 + self.jitter * rng.random_range(-1.0..1.0))
        } else {
            self.step_size
        };
        for i in 0..d {
            let z: f64 = rng.sample(StandardNormal);
            self.p[i] = z / self.inv_mass[i].sqrt();
        }
        let h0 = -state.log_density + self.kinetic(&self.p);
        self.q.copy_from_slice(&state.q);
        self.g.copy_from_slice(&state.grad);
        let mut p = core::mem::take(&mut self.p);
        let mut q = core::mem::take(&mut self.q);
        let mut g = core::mem::take(&mut self.g);
        let logp = leapfrog(
            pot,
            &mut q,
            &mut p,
            &mut g,
            &self.inv_mass,
            eps,
            self.leapfrog_steps,
        );
        let h1 = match logp {
            Some(lp) => -lp + self.kinetic(&p),
            None => f64::INFINITY,
        };
        let energy_error = h1 - h0;
        let accept_prob = if energy_error.is_finite() {
            (-energy_error).exp().min(1.0)
        } else {
            0.0
        };
        let accepted = accept_prob > 0.0 && rng.random::<f64>() < accept_prob;
        if accepted {
            state.q.copy_from_slice(&q);
            state.grad.copy_from_slice(&g);
            state.log_density = logp.expect("finite trajectory");
        }
        self.p = p;
        self.q = q;
        self.g = g;
        Transition {
            accepted,
            accept_prob,
            energy_error,
        }
    }
}

/// Runs `steps` leapfrog steps in place. `grad` must hold the gradient at
/// `q` on entry and holds the gradient at the end point on exit. Returns
/// the end log density, or `None` if it became non-finite.
pub fn leapfrog<P: Potential + ?Sized>(
    pot: &mut P,
    q: &mut [f64],
    p: &mut [f64],
    grad: &mut [f64],
    inv_mass: &[f64],
    eps: f64,
    steps: usize,
) -> Option<f64> {
    let d = q.len();
    let mut logp = f64::NAN;
    for i in 0..d {
        p[i] += 0.5 * eps * grad[i];
    }
    for s in 0..steps {
        for i in 0..d {
            q[i] += eps * inv_mass[i] * p[i];
        }
        logp = pot.log_density_grad(q, grad);
        if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        let w = if s + 1 == steps { 0.5 } else { 1.0 };
        for i in 0..d {
            p[i] += w * eps * grad[i];
        }
    }
    if steps == 0 {
        return None;
    }
    Some(logp)
}

/// Dual-averaging step-size tuning plus windowed diagonal-mass estimation
/// over the burn-in iterations.
#[derive(Debug, Clone)]
pub struct Adaptation {
    burn_in: usize,
    target: f64,
    mu: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
    windows: Vec<(usize, usize)>,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

const GAMMA: f64 = 0.05;
const T0: f64 = 10.0;
const KAPPA: f64 = 0.75;

impl Adaptation {
    pub fn new(hmc: &Hmc, burn_in: usize, target: f64) -> Self {
        Adaptation {
            burn_in,
            target,
            mu: (10.0 * hmc.step_size).ln(),
            log_eps_bar: hmc.step_size.ln(),
            h_bar: 0.0,
            t: 0.0,
            windows: mass_windows(burn_in),
            n: 0,
            mean: vec![0.0; hmc.dim()],
            m2: vec![0.0; hmc.dim()],
        }
    }

    /// Feeds burn-in iteration `iter` (zero-based). At the last burn-in
    /// iteration the averaged step size is installed.
    pub fn update(&mut self, hmc: &mut Hmc, iter: usize, accept_prob: f64, q: &[f64]) {
        if iter >= self.burn_in {
            return;
        }
        self.t += 1.0;
        let eta = 1.0 / (self.t + T0);
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_prob);
        let log_eps = self.mu - self.t.sqrt() / GAMMA * self.h_bar;
        let w = self.t.powf(-KAPPA);
        self.log_eps_bar = w * log_eps + (1.0 - w) * self.log_eps_bar;
        hmc.step_size = log_eps.exp();

        if let Some(&(start, end)) = self.windows.iter().find(|(s, e)| (*s..*e).contains(&iter)) {
            if iter == start {
                self.n = 0;
                self.mean.iter_mut().for_each(|v| *v = 0.0);
                self.m2.iter_mut().for_each(|v| *v = 0.0);
            }
            self.n += 1;
            for i in 0..q.len() {
                let delta = q[i] - self.mean[i];
                self.mean[i] += delta / self.n as f64;
                self.m2[i] += delta * (q[i] - self.mean[i]);
            }
            if iter + 1 == end && self.n > 2 {
                let n = self.n as f64;
                for i in 0..q.len() {
                    let var = self.m2[i] / (n - 1.0);
                    hmc.inv_mass[i] = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0));
                }
                self.mu = (10.0 * hmc.step_size).ln();
                self.h_bar = 0.0;
                self.t = 0.0;
                self.log_eps_bar = hmc.step_size.ln();
            }
        }
        if iter + 1 == self.burn_in {
            hmc.step_size = self.log_eps_bar.exp();
        }
    }
}

/// Doubling mass-estimation windows between an initial and a terminal
/// buffer, in the usual 75 / 25... / 50 layout.
fn mass_windows(burn_in: usize) -> Vec<(usize, usize)> {
    if burn_in < 20 {
        return Vec::new();
    }
    let (init, term, base) = if burn_in < 150 {
        let init = burn_in * 15 / 100;
        let term = burn_in / 10;
        (init, term, burn_in - init - term)
    } else {
        (75, 50, 25)
    };
    let last = burn_in - term;
    let mut windows = Vec::new();
    let mut start = init;
    let mut size = base;
    while start < last {
        let mut end = start + size;
        if end + 2 * size > last {
            end = last;
        }
        windows.push((start, end));
        start = end;
        size *= 2;
    }
    windows
}
