//! Shared test oracles, independent of the library's solver path.
//!
//! The Black–Scholes closed form prices constant-volatility claims; the
//! recombining trinomial lattice prices worst-case volatility claims by
//! maximizing over the endpoint volatilities nodewise. Both are kept free of
//! any code from `tgp::bsb` on purpose.

#![allow(dead_code)]

use statrs::distribution::{ContinuousCDF, Normal};

pub fn norm_cdf(z: f64) -> f64 {
    Normal::standard().cdf(z)
}

/// Zero-rate Black–Scholes call price.
pub fn bs_call(x: f64, strike: f64, sigma: f64, tau: f64) -> f64 {
    if tau <= 0.0 || sigma <= 0.0 {
        return (x - strike).max(0.0);
    }
    let sq = sigma * tau.sqrt();
    let d1 = ((x / strike).ln() + 0.5 * sigma * sigma * tau) / sq;
    let d2 = d1 - sq;
    x * norm_cdf(d1) - strike * norm_cdf(d2)
}

/// Zero-rate Black–Scholes call delta.
pub fn bs_call_delta(x: f64, strike: f64, sigma: f64, tau: f64) -> f64 {
    let sq = sigma * tau.sqrt();
    let d1 = ((x / strike).ln() + 0.5 * sigma * sigma * tau) / sq;
    norm_cdf(d1)
}

/// Unit-wing butterfly priced as a call combination (closed form, zero rate).
pub fn bs_butterfly(x: f64, k1: f64, k2: f64, k3: f64, sigma: f64, tau: f64) -> f64 {
    let w_left = (k2 - k1).recip();
    let w_right = (k3 - k2).recip();
    (k2 - k1)
        * (w_left * bs_call(x, k1, sigma, tau) - (w_left + w_right) * bs_call(x, k2, sigma, tau)
            + w_right * bs_call(x, k3, sigma, tau))
}

/// Worst-case price on a recombining trinomial log-lattice: at every node the
/// volatility is chosen from `{sigma_lo, sigma_hi}` to maximize the one-step
/// expectation. Probabilities match the exact log-increment mean and second
/// moment; the lattice spacing uses lambda^2 = 1.5 so they stay nonnegative.
pub fn tree_worst_case(
    x0: f64,
    payoff: impl Fn(f64) -> f64,
    sigma_lo: f64,
    sigma_hi: f64,
    horizon: f64,
    n_steps: usize,
) -> f64 {
    let dt = horizon / n_steps as f64;
    let h = (1.5_f64).sqrt() * sigma_hi * dt.sqrt();
    let probs = |sigma: f64| -> (f64, f64, f64) {
        let m = -0.5 * sigma * sigma * dt;
        let s2 = sigma * sigma * dt + m * m;
        let pu = 0.5 * (s2 / (h * h) + m / h);
        let pd = 0.5 * (s2 / (h * h) - m / h);
        let pm = 1.0 - s2 / (h * h);
        assert!(pu >= 0.0 && pd >= 0.0 && pm >= 0.0, "lattice probabilities");
        (pu, pm, pd)
    };
    let lo = probs(sigma_lo);
    let hi = probs(sigma_hi);
    let width = 2 * n_steps + 1;
    let mut values: Vec<f64> = (0..width)
        .map(|i| payoff(x0 * ((i as f64 - n_steps as f64) * h).exp()))
        .collect();
    for step in (0..n_steps).rev() {
        let w = 2 * step + 1;
        let offset = n_steps - step;
        let mut next = vec![0.0; w];
        for (i, slot) in next.iter_mut().enumerate() {
            let j = offset + i;
            let e_lo = lo.0 * values[j + 1] + lo.1 * values[j] + lo.2 * values[j - 1];
            let e_hi = hi.0 * values[j + 1] + hi.1 * values[j] + hi.2 * values[j - 1];
            *slot = e_lo.max(e_hi);
        }
        values = next;
        // re-center: after shrinking, index i corresponds to lattice offset
        // (offset-?) — keep the full-width convention instead
        let mut full = vec![0.0; width];
        full[offset..offset + w].copy_from_slice(&values);
        values = full;
    }
    values[n_steps]
}
