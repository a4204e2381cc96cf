//! Closed-form transport cost bounds.
//!
//! `talagrand_bound` bounds the offline p-cost between a product measure and
//! anything absolutely continuous w.r.t. it through the KL divergence;
//! `empirical_bound` bounds the expected transport cost between a
//! one-dimensional measure of bounded c-variance and its k-sample empirical
//! version. The additive overhead of the online transporter with k samples
//! per round is `delta = 2 * (n * empirical_bound(p, k))^(1/p)` for product
//! sources, which is how these enter the harness verdicts.

use crate::error::{Error, Result};

/// `n^(1 - p/2) * (2 * kl)^(p/2)` for `1 <= p <= 2`.
///
/// Bounds the p-th power of the transport p-cost from a product measure
/// `mu` on `R^n` (each factor with the transport-cost inequality, e.g.
/// standard Gaussian) to any `nu` with `KL(nu || mu) = kl`.
pub fn talagrand_bound(p: f64, n: usize, kl: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::config(format!("talagrand bound needs p in [1, 2], got {p}")));
    }
    if n == 0 {
        return Err(Error::config("dimension must be positive"));
    }
    if !kl.is_finite() || kl < 0.0 {
        return Err(Error::DivergenceUndefined(format!("kl must be finite and non-negative, got {kl}")));
    }
    Ok((n as f64).powf(1.0 - p / 2.0) * (2.0 * kl).powf(p / 2.0))
}

/// `C_p * 2^(1 + 3p/2) * Gamma(p + 1)^(p / (2p + 1)) * k^(-1/2)` with
/// `C_p = (2^p + 1) / ((2^p - 1) * (1 - 2^-p) * (1 - 2^(-p + 1/2)))`.
///
/// Upper bound on `E T_c(U_X, mu)` for `c = |a - b|^p` and `mu` with
/// sub-Gaussian tails in the normalization used here (standard Gaussian
/// qualifies), where `U_X` is the empirical measure of `k` iid samples.
pub fn empirical_bound(p: f64, k: usize) -> Result<f64> {
    if !p.is_finite() || p < 1.0 {
        return Err(Error::config(format!("empirical bound needs p >= 1, got {p}")));
    }
    if k == 0 {
        return Err(Error::config("sample count must be positive"));
    }
    let two_p = 2f64.powf(p);
    let c_p = (two_p + 1.0) / ((two_p - 1.0) * (1.0 - two_p.recip()) * (1.0 - 2f64.powf(0.5 - p)));
    let gamma_term = statrs::function::gamma::gamma(p + 1.0).powf(p / (2.0 * p + 1.0));
    Ok(c_p * 2f64.powf(1.0 + 1.5 * p) * gamma_term / (k as f64).sqrt())
}

/// The additive online overhead `2 * (sum_i bound_i)^(1/p)` for a product
/// source with `n` identical factors.
pub fn online_overhead(p: f64, n: usize, k: usize) -> Result<f64> {
    Ok(2.0 * (n as f64 * empirical_bound(p, k)?).powf(1.0 / p))
}

/// `sqrt(2 ln 1/epsilon)`: the concentration radius of a measure-`epsilon`
/// set under a 1-subgaussian product measure.
pub fn kappa(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::RejectedInput(format!("kappa needs epsilon in (0, 1], got {epsilon}")));
    }
    Ok((2.0 * (1.0 / epsilon).ln()).sqrt())
}

/// `n^(1/p - 1/2) * sqrt(2 ln 1/epsilon)`: the expected l_p set-transport
/// cost bound for the standard Gaussian product and a set of measure
/// `epsilon`, before the additive online overhead.
pub fn gaussian_set_bound(p: f64, n: usize, epsilon: f64) -> Result<f64> {
    if !(1.0..=2.0).contains(&p) {
        return Err(Error::config(format!("gaussian set bound needs p in [1, 2], got {p}")));
    }
    if n == 0 {
        return Err(Error::config("dimension must be positive"));
    }
    Ok((n as f64).powf(1.0 / p - 0.5) * kappa(epsilon)?)
}
