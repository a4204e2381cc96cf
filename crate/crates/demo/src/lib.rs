//! Interactive browser demo for the online transporter.
//!
//! Three operations, each returning a JSON string ready for a canvas:
//! one-dimensional quantile coupling at varying batch size, set transport
//! into a Gaussian tail with live membership queries, and the exact
//! offline-versus-online gap on the reference instance.
//!
//! The crate builds natively (that is what the tests run against); the
//! `wasm32-unknown-unknown` build exports the same functions through
//! `wasm-bindgen` for `www/index.html`.

use otx_core::bounds::{kappa, online_overhead};
use otx_core::cost::CostSpec;
use otx_core::dist1d::{norm_ppf, Dist1D};
use otx_core::oracle::{claim42_instance, delta_function, exact_ot};
use otx_core::seqsampler::HalfspaceOracle;
use otx_core::transporter::{set_transport, OnlineTransporter};
use otx_core::{Point, Result, RngStream};
use serde_json::json;

const MAX_POINTS: usize = 2000;
const MAX_BATCH: usize = 4096;

fn clamp_inputs(k: usize, count: usize) -> (usize, usize) {
    (k.clamp(1, MAX_BATCH), count.clamp(1, MAX_POINTS))
}

/// Transports `count` draws of N(0,1) to N(shift, 1) with batch size `k`
/// and reports the coupled pairs, the measured mean squared cost, and the
/// guarantee it converges to. As `k` grows the pairs tighten onto the
/// shifted quantile map `y = x + shift`.
pub fn transport_pairs(seed: u64, k: usize, shift: f64, count: usize) -> Result<String> {
    let (k, count) = clamp_inputs(k, count);
    let source = vec![Dist1D::standard_gaussian()];
    let target = vec![Dist1D::gaussian(shift, 1.0)?];
    let transporter =
        OnlineTransporter::product_to_product(source.clone(), target, CostSpec::lp(2.0), k)?;
    let mut rng = RngStream::new(seed, 0);
    let mut pairs = Vec::with_capacity(count);
    let mut total = 0.0;
    for _ in 0..count {
        let x = Point::new(vec![source[0].sample(&mut rng)])?;
        let record = transporter.transport(&x, &mut rng)?;
        total += record.cost_sample.total;
        pairs.push((x[0], record.y[0]));
    }
    let overhead = online_overhead(2.0, 1, k)?;
    Ok(json!({
        "pairs": pairs,
        "mean_sq_cost": total / count as f64,
        "w2": shift.abs(),
        "bound_sq": (shift.abs() + overhead).powi(2),
        "k": k,
    })
    .to_string())
}

/// Moves `count` standard-Gaussian points of the plane into the tail set
/// `{x : x_0 >= quantile(1 - epsilon)}` using only membership queries.
/// Reports each movement as `[x0, x1, y0, y1]`, the boundary line, the mean
/// squared distance with its closed-form guarantee, and the query budget.
pub fn set_transport_demo(seed: u64, epsilon: f64, k: usize, count: usize) -> Result<String> {
    let (k, count) = clamp_inputs(k, count);
    let epsilon = epsilon.clamp(0.01, 0.99);
    let n = 2;
    let threshold = norm_ppf(1.0 - epsilon)?;
    let marginals = vec![Dist1D::standard_gaussian(); n];
    let set = HalfspaceOracle::axis(n, 0, threshold)?;
    let transporter = set_transport(marginals.clone(), Box::new(set), CostSpec::lp(2.0), k, epsilon)?;
    let mut rng = RngStream::new(seed, 0);
    let mut moves = Vec::with_capacity(count);
    let mut total = 0.0;
    let mut queries = 0u64;
    for _ in 0..count {
        let x = Point::new(marginals.iter().map(|m| m.sample(&mut rng)).collect())?;
        let record = transporter.transport(&x, &mut rng)?;
        total += record.cost_sample.total;
        queries += record.ledger.membership_queries;
        moves.push([x[0], x[1], record.y[0], record.y[1]]);
    }
    let bound_root = kappa(epsilon)? + online_overhead(2.0, n, k)?;
    Ok(json!({
        "moves": moves,
        "threshold": threshold,
        "mean_sq_cost": total / count as f64,
        "bound_sq": bound_root * bound_root,
        "queries_mean": queries as f64 / count as f64,
        "queries_bound": k as f64 * n as f64 / epsilon,
        "k": k,
        "epsilon": epsilon,
    })
    .to_string())
}

/// Exact offline-versus-online transport gap on the `n`-bit reference
/// instance: the offline optimum is `epsilon` while every online algorithm
/// pays `n * epsilon`.
pub fn oracle_gap(n: usize, epsilon: f64) -> Result<String> {
    let (mu, nu) = claim42_instance(n, epsilon)?;
    let cost = CostSpec::hamming();
    let (offline, _) = exact_ot(&mu, &nu, &cost)?;
    let online = delta_function(&mu, &nu, &cost)?;
    Ok(json!({
        "n": n,
        "epsilon": epsilon,
        "offline": offline,
        "online": online,
        "ratio": if offline > 0.0 { online / offline } else { n as f64 },
    })
    .to_string())
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    fn surface(result: otx_core::Result<String>) -> Result<String, JsValue> {
        result.map_err(|e| JsValue::from_str(&e.to_string()))
    }

    #[wasm_bindgen]
    pub fn transport_pairs(seed: u64, k: usize, shift: f64, count: usize) -> Result<String, JsValue> {
        surface(super::transport_pairs(seed, k, shift, count))
    }

    #[wasm_bindgen]
    pub fn set_transport_demo(
        seed: u64,
        epsilon: f64,
        k: usize,
        count: usize,
    ) -> Result<String, JsValue> {
        surface(super::set_transport_demo(seed, epsilon, k, count))
    }

    #[wasm_bindgen]
    pub fn oracle_gap(n: usize, epsilon: f64) -> Result<String, JsValue> {
        surface(super::oracle_gap(n, epsilon))
    }
}
