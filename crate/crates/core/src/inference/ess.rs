//! Effective sample size of a scalar chain.
/// Effective sample size by Geyer's initial monotone sequence.
///
/// Autocovariances are computed lag by lag and the sum stops at the first
/// non-positive pair, so well-mixing chains cost `O(n)` per lag used.
/// A constant chain reports `n`.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let autocov = |lag: usize| -> f64 {
        let mut acc = 0.0;
        for i in 0..n - lag {
            acc += (x[i] - mean) * (x[i + lag] - mean);
        }
        acc / n as f64
    };
    let c0 = autocov(0);
    if !(c0 > 0.0) {
        return n as f64;
    }
    // Gamma_m = rho(2m) + rho(2m + 1), kept positive and non-increasing.
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let rho0 = if m == 0 { 1.0 } else { autocov(2 * m) / c0 };
        let rho1 = autocov(2 * m + 1) / c0;
        let mut gamma = rho0 + rho1;
        if gamma <= 0.0 {
            break;
        }
        if gamma > prev {
            gamma = prev;
        }
        sum += gamma;
        prev = gamma;
        m += 1;
    }
    let tau = (2.0 * sum - 1.0).max(1.0 / libm::log10(n as f64));
    n as f64 / tau
}
