//! Online optimal transport on product spaces.
//!
//! The library is organized around a single scenario: a source product
//! distribution `mu` over `R^n`, a target distribution `nu` reachable only
//! through a sequential (coordinate-by-coordinate) sampler, and a separable
//! cost `c^p(x, y) = sum_i c_i(x_i, y_i)`. The online transporter maps a
//! source point to a target point one coordinate at a time, never looking
//! ahead, with expected cost within an additive `delta` of the online
//! optimum `Delta`.
//!
//! Modules:
//! - [`rng`]: seeded, stream-splittable randomness (everything here is
//!   deterministic given `(seed, stream_id)`).
//! - [`cost`] and [`bounds`]: separable cost specs, Wasserstein p-costs, and
//!   the closed-form transport bounds.
//! - [`dist1d`]: one-dimensional distributions with CDF/quantile/sampling
//!   capabilities.
//! - [`ot1d`]: one-dimensional matchings and transport costs (sorting,
//!   assignment solver, CDF couplings).
//! - [`seqsampler`]: sequential samplers, membership oracles, rejection
//!   conditioning, query ledgers.
//! - [`transporter`]: the online transport algorithm, its inverse, stage
//!   composition, set transport and concentration helpers.
//! - [`reductions`]: cube-to-Gaussian and sphere-to-Gaussian reductions.
//! - [`oracle`]: exact small-instance oracles (optimal couplings, greedy and
//!   online optima, reference instances).
//! - [`harness`]: experiment configs, replicated runs, bound verdicts,
//!   CSV/JSON emission.

pub mod bounds;
pub mod cost;
pub mod dist1d;
pub mod error;
pub mod harness;
pub mod oracle;
pub mod ot1d;
pub mod point;
pub mod reductions;
pub mod rng;
pub mod seqsampler;
mod solvers;
pub mod transporter;

pub use error::{Error, Result};
pub use point::Point;
pub use rng::RngStream;
