//! One-dimensional matching and transport.
//!
//! Per-round work of the online transporter reduces to one-dimensional
//! problems: match two k-point multisets optimally (sorting when the
//! coordinate cost is convex, an assignment solver otherwise), or couple a
//! point against a CDF. `ot_cost_1d` computes the exact quantile-coupling
//! cost between distributions, which is what the empirical-scaling
//! experiments integrate against.

use crate::cost::CoordCost;
use crate::dist1d::{norm_pdf, norm_ppf, Dist1D};
use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::solvers;

pub const HUNGARIAN_MAX_K: usize = 512;

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `(index into xs, index into ys)` pairs covering both sides exactly once.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    // ties broken by original position, so the order is total and stable
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap().then(a.cmp(&b)));
    idx
}

/// Rank-by-rank matching of two equal-size multisets; optimal for convex
/// coordinate costs.
pub fn monotone_match(xs: &[f64], ys: &[f64], cost: &CoordCost) -> Result<Matching> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.is_empty() {
        return Err(Error::config("cannot match empty multisets"));
    }
    if !cost.is_convex() {
        return Err(Error::config("monotone matching requires a convex coordinate cost"));
    }
    let xo = sorted_order(xs);
    let yo = sorted_order(ys);
    let mut pairs = Vec::with_capacity(xs.len());
    let mut total = 0.0;
    for r in 0..xs.len() {
        total += cost.eval(xs[xo[r]], ys[yo[r]])?;
        pairs.push((xo[r], yo[r]));
    }
    Ok(Matching { pairs, total_cost: total })
}

/// Optimal matching for arbitrary coordinate costs via the assignment
/// solver; O(k^3), capped at [`HUNGARIAN_MAX_K`].
pub fn hungarian_match(xs: &[f64], ys: &[f64], cost: &CoordCost) -> Result<Matching> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: ys.len() });
    }
    if xs.is_empty() {
        return Err(Error::config("cannot match empty multisets"));
    }
    if xs.len() > HUNGARIAN_MAX_K {
        return Err(Error::RejectedInput(format!(
            "assignment on k = {} exceeds the {HUNGARIAN_MAX_K} cap",
            xs.len()
        )));
    }
    let k = xs.len();
    let mut matrix = vec![vec![0.0f64; k]; k];
    for i in 0..k {
        for j in 0..k {
            matrix[i][j] = cost.eval(xs[i], ys[j])?;
        }
    }
    let (row_to_col, total) = solvers::assignment(&matrix);
    let pairs = row_to_col.into_iter().enumerate().collect();
    Ok(Matching { pairs, total_cost: total })
}

/// One step of the monotone coupling between `mu` and `nu` through CDF
/// level sets: `t` is drawn uniformly from `[F_mu(x^-), F_mu(x))` and mapped
/// through `nu`'s generalized inverse. At an atom of `mu` the uniform draw
/// plays the role of a uniformly random tie rank, which is what keeps the
/// output marginal exact.
///
/// Equal distributions short-circuit to the identity map (the monotone
/// coupling of a distribution with itself), with zero cost and no
/// randomness consumed.
pub fn cdf_transport(x: f64, mu: &Dist1D, nu: &Dist1D, rng: &mut RngStream) -> Result<f64> {
    if mu == nu {
        return Ok(x);
    }
    let p0 = mu.cdf_left(x);
    let p1 = mu.cdf(x);
    let t = p0 + (p1 - p0) * rng.unit();
    if t >= 1.0 {
        return Err(Error::RejectedInput(format!("input {x} sits above mu's support")));
    }
    nu.inv_cdf(t)
}

/// Optimal coupling between two discrete distributions as
/// `(x index, y index, mass)` triples plus its cost: quantile merge when the
/// cost is convex, the exact transportation solver otherwise.
pub(crate) fn optimal_coupling_discrete(
    mu: &Dist1D,
    nu: &Dist1D,
    cost: &CoordCost,
) -> Result<(Vec<(usize, usize, f64)>, f64)> {
    let (xv, xm) = mu
        .atoms()
        .ok_or_else(|| Error::UnsupportedCapability("discrete coupling needs discrete mu".into()))?;
    let (yv, ym) = nu
        .atoms()
        .ok_or_else(|| Error::UnsupportedCapability("discrete coupling needs discrete nu".into()))?;
    if cost.is_convex() {
        let cum = |m: &[f64]| {
            let mut acc = 0.0;
            m.iter()
                .map(|&x| {
                    acc += x;
                    acc
                })
                .collect::<Vec<f64>>()
        };
        let cx = cum(&xm);
        let cy = cum(&ym);
        let mut plan = Vec::new();
        let mut total = 0.0;
        let (mut i, mut j) = (0usize, 0usize);
        let mut lo = 0.0f64;
        while i < cx.len() && j < cy.len() {
            let hi = cx[i].min(cy[j]);
            let mass = hi - lo;
            if mass > 0.0 {
                total += mass * cost.eval(xv[i], yv[j])?;
                plan.push((i, j, mass));
            }
            if cx[i] == hi {
                i += 1;
            }
            if cy[j] == hi {
                j += 1;
            }
            lo = hi;
        }
        Ok((plan, total))
    } else {
        let mut matrix = vec![vec![0.0f64; yv.len()]; xv.len()];
        for (i, row) in matrix.iter_mut().enumerate() {
            for (j, e) in row.iter_mut().enumerate() {
                *e = cost.eval(xv[i], yv[j])?;
            }
        }
        solvers::transportation(&xm, &ym, |i, j| matrix[i][j])
    }
}

// exact \int_a^b z(t) dt and \int_a^b z(t)^2 dt for z the standard normal
// quantile; both extend continuously to a = 0, b = 1
fn z_integrals(a: f64, b: f64) -> Result<(f64, f64)> {
    let eval = |t: f64| -> Result<(f64, f64)> {
        if t <= 0.0 || t >= 1.0 {
            return Ok((0.0, 0.0)); // phi and z*phi both vanish in the limits
        }
        let z = norm_ppf(t)?;
        let pdf = norm_pdf(z);
        Ok((pdf, z * pdf))
    };
    let (pa, zpa) = eval(a)?;
    let (pb, zpb) = eval(b)?;
    Ok((pa - pb, (b - a) - (zpb - zpa)))
}

// exact squared-distance quantile cost of a discrete distribution against
// N(mean, stddev^2), one closed-form term per atom segment
fn discrete_vs_gaussian_sq(disc: &Dist1D, mean: f64, stddev: f64) -> Result<f64> {
    let (values, masses) = disc.atoms().unwrap();
    let mut total = 0.0;
    let mut lo = 0.0f64;
    for (v, m) in values.iter().zip(masses) {
        let hi = (lo + m).min(1.0);
        let (i1, i2) = z_integrals(lo, hi)?;
        let d = v - mean;
        total += d * d * (hi - lo) - 2.0 * d * stddev * i1 + stddev * stddev * i2;
        lo = hi;
    }
    Ok(total)
}

fn quantile_quadrature(mu: &Dist1D, nu: &Dist1D, cost: &CoordCost) -> Result<f64> {
    const EPS: f64 = 1e-9;
    const MAX_WIDTH: f64 = 1.0 / 20_000.0;
    // breakpoints: clamp window edges plus every discrete jump of either side
    let mut breaks = vec![EPS, 1.0 - EPS];
    for d in [mu, nu] {
        if let Some((_, masses)) = d.atoms() {
            let mut acc = 0.0;
            for m in &masses[..masses.len() - 1] {
                acc += m;
                if acc > EPS && acc < 1.0 - EPS {
                    breaks.push(acc);
                }
            }
        }
    }
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        let pieces = ((b - a) / MAX_WIDTH).ceil().max(1.0) as usize;
        let h = (b - a) / pieces as f64;
        for s in 0..pieces {
            let t = a + (s as f64 + 0.5) * h;
            total += h * cost.eval(mu.inv_cdf(t)?, nu.inv_cdf(t)?)?;
        }
    }
    Ok(total)
}

/// Exact (or high-accuracy) transport cost `E[c(F_mu^{-1}(T), F_nu^{-1}(T))]`
/// of the quantile coupling, which is the optimal coupling for convex `c`.
///
/// Discrete pairs are exact for any cost (transportation solver when the
/// cost is not convex). Mixed/continuous pairs require a convex cost;
/// squared distance against a Gaussian side uses closed-form segment
/// integrals, everything else midpoint quadrature on the clamped unit
/// interval.
pub fn ot_cost_1d(mu: &Dist1D, nu: &Dist1D, cost: &CoordCost) -> Result<f64> {
    if mu.is_discrete() && nu.is_discrete() {
        return Ok(optimal_coupling_discrete(mu, nu, cost)?.1);
    }
    if !cost.is_convex() {
        return Err(Error::UnsupportedCapability(
            "non-convex costs are only supported for discrete pairs".into(),
        ));
    }
    if let CoordCost::AbsPow { exponent } = cost {
        if *exponent == 2.0 {
            match (mu.as_gaussian(), nu.as_gaussian()) {
                (Some((m1, s1)), Some((m2, s2))) => {
                    return Ok((m1 - m2) * (m1 - m2) + (s1 - s2) * (s1 - s2));
                }
                (Some((m, s)), None) if nu.is_discrete() => {
                    return discrete_vs_gaussian_sq(nu, m, s);
                }
                (None, Some((m, s))) if mu.is_discrete() => {
                    return discrete_vs_gaussian_sq(mu, m, s);
                }
                _ => {}
            }
        }
    }
    quantile_quadrature(mu, nu, cost)
}

/// Monte Carlo estimate of the expected empirical transport cost
/// `E_X T_c(U_X, mu)` with `U_X` the empirical measure of `k` draws.
/// Returns `(mean, standard error)` over the replications.
pub fn empirical_transport_cost(
    mu: &Dist1D,
    k: usize,
    cost: &CoordCost,
    replications: usize,
    rng: &mut RngStream,
) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::config("empirical sample size must be positive"));
    }
    if replications < 2 {
        return Err(Error::config("need at least 2 replications for a standard error"));
    }
    let mut values = Vec::with_capacity(replications);
    for _ in 0..replications {
        let samples: Vec<f64> = (0..k).map(|_| mu.sample(rng)).collect();
        let emp = Dist1D::empirical(samples)?;
        values.push(ot_cost_1d(&emp, mu, cost)?);
    }
    let mean = values.iter().sum::<f64>() / replications as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (replications - 1) as f64;
    Ok((mean, (var / replications as f64).sqrt()))
}
