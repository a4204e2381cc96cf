//! Experiment harness: seeded, replicated Monte Carlo runs of the
//! transporters and oracles, with confidence intervals, bound verdicts, and
//! CSV/JSON emission.
//!
//! Every experiment is a JSON-loadable [`ExperimentConfig`]. Replication
//! `r` of a run with seed `s` uses the random stream `(s, r)`, so results
//! are bit-reproducible regardless of worker count; statistics are reduced
//! in replication order.
//!
//! Recorded-value scale: `mean_cost` averages the per-replication values in
//! `totals`, and the result's `p` says what root puts that mean on the same
//! scale as the bound columns. Transport experiments record linearized
//! totals `sum_i c_i(x_i, y_i)` (so `p` is the cost exponent); concentration
//! and sphere-reduction experiments record realized distances (`p = 1`);
//! empirical-scaling records raw one-dimensional costs compared unrooted
//! (`p = 1`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::{empirical_bound, kappa, online_overhead};
use crate::cost::{eval_cost, CoordCost, CostSpec};
use crate::dist1d::{norm_ppf, Dist1D};
use crate::error::{Error, Result};
use crate::oracle::{
    claim42_instance, delta_function, exact_ot, greedy_coupling, online_coupling_optimum,
    online_transport_optimum, remark40_instance, remark41_instance, DiscreteSpace,
};
use crate::ot1d::ot_cost_1d;
use crate::point::Point;
use crate::reductions::{
    apply_reduction, conditioned_gaussian_inner, cube_gauss_reduction, gaussian_set_inner,
    sphere_gauss_reduction, sphere_set_transport_cost_bound, uniform_sphere_point,
};
use crate::rng::RngStream;
use crate::seqsampler::MembershipOracle;
use crate::transporter::{OracleSpec, TargetSpec, TransporterConfig};

/// The exact emitted CSV column list; tests compare against it byte for
/// byte.
pub const CSV_HEADER: &str = "experiment,n,k,p,epsilon,replications,seed,mean_cost,stderr,ci_lo,ci_hi,bound_delta,bound_small_delta,membership_queries_mean,sampler_calls_mean,wallclock_ms";

fn default_confidence() -> f64 {
    0.99
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionShape {
    Cube,
    Sphere,
}

/// Reference values for a bound verdict. `delta` is the online-optimum
/// reference on the rooted scale (a W_p distance); `small_delta` is the
/// k-sample overhead and defaults to `online_overhead(p, n, k)` when left
/// out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    pub delta: f64,
    #[serde(default)]
    pub small_delta: Option<f64>,
}

/// What to run. The serde tag is the experiment name that also lands in the
/// emitted `experiment` column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Draw a source point, transport it, record the linearized cost total.
    TransportCost {
        transporter: TransporterConfig,
        #[serde(default)]
        bounds: Option<BoundSpec>,
    },
    /// Transport into a conditioned target; outputs are re-checked against
    /// the membership oracle (the check is not charged to the ledger).
    SetTransport {
        transporter: TransporterConfig,
        #[serde(default)]
        bounds: Option<BoundSpec>,
    },
    /// Distance from each input to its image in the set; reports the
    /// fraction that landed within the budget radius `mean / delta`.
    Concentration {
        transporter: TransporterConfig,
        delta: f64,
    },
    /// Mean one-dimensional transport cost between `marginal` and the
    /// empirical measure of `k` of its own draws, under `|a - b|^exponent`.
    EmpiricalScaling {
        marginal: Dist1D,
        k: usize,
        exponent: f64,
    },
    /// Exact-oracle report on a named instance (`claim42`,
    /// `claim42:<n>:<epsilon>`, `remark40`, `remark41`) or a JSON fixture
    /// path.
    OracleSuite { fixture: String },
    /// Set transport for the uniform cube or sphere routed through the
    /// Gaussian reduction. `set` is interpreted in the source space and
    /// `epsilon` is its source measure.
    Reduction {
        shape: ReductionShape,
        n: usize,
        k: usize,
        epsilon: f64,
        set: OracleSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub kind: ExperimentKind,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub format: Option<OutputFormat>,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    /// Wall-clock is recorded only on request so that default emissions are
    /// byte-reproducible.
    #[serde(default)]
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub experiment: String,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub p: Option<f64>,
    pub epsilon: Option<f64>,
    pub replications: usize,
    pub seed: u64,
    pub mean_cost: f64,
    pub stderr: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub confidence: f64,
    pub bound_delta: Option<f64>,
    pub bound_small_delta: Option<f64>,
    pub membership_queries_mean: Option<f64>,
    pub sampler_calls_mean: Option<f64>,
    pub wallclock_ms: Option<f64>,
    /// Per-replication recorded values, in replication order.
    pub totals: Vec<f64>,
    /// Kind-specific extras (oracle values, in-set fractions, quantile
    /// budgets).
    #[serde(default)]
    pub details: BTreeMap<String, f64>,
}

/// Outcome of checking a result against its bound references.
#[derive(Debug, Clone, Serialize)]
pub struct BoundVerdict {
    pub pass: bool,
    /// `mean_cost^{1/p}`.
    pub measured: f64,
    /// `delta + small_delta`.
    pub reference: f64,
    /// Standard error mapped through the same root (delta method).
    pub stderr_propagated: f64,
    /// `reference + 3 stderr - measured`; negative exactly when the verdict
    /// fails.
    pub slack: f64,
}

struct Rep {
    value: f64,
    membership: u64,
    calls: u64,
    in_set: bool,
}

/// Everything a kind runner decides; `run` folds it into the result shell.
struct KindOutput {
    label: &'static str,
    n: Option<usize>,
    k: Option<usize>,
    p: Option<f64>,
    epsilon: Option<f64>,
    totals: Vec<f64>,
    bound_delta: Option<f64>,
    bound_small_delta: Option<f64>,
    membership_queries_mean: Option<f64>,
    sampler_calls_mean: Option<f64>,
    details: BTreeMap<String, f64>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every replication on its own stream and collects outcomes in
/// replication order. All replications are attempted even if one fails, so
/// the partial statistics reported on failure are scheduling-independent.
fn fan_out<F>(replications: usize, f: F) -> Vec<Result<Rep>>
where
    F: Fn(u64) -> Result<Rep> + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..replications as u64).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..replications as u64).map(f).collect()
    }
}

/// Splits replication outcomes into values and ledger summaries, or reports
/// the first error (in replication order) together with partial statistics
/// over the replications that did finish.
fn collect_reps(
    outcomes: Vec<Result<Rep>>,
    details: &mut BTreeMap<String, f64>,
) -> Result<(Vec<f64>, f64, f64, f64)> {
    let total = outcomes.len();
    let mut reps = Vec::with_capacity(total);
    let mut first_err = None;
    for outcome in outcomes {
        match outcome {
            Ok(rep) => reps.push(rep),
            Err(e) if first_err.is_none() => first_err = Some(e),
            Err(_) => {}
        }
    }
    if let Some(e) = first_err {
        let done = reps.len();
        let partial = if done == 0 {
            f64::NAN
        } else {
            reps.iter().map(|r| r.value).sum::<f64>() / done as f64
        };
        details.insert("partial_replications".into(), done as f64);
        details.insert("partial_mean".into(), partial);
        return Err(e);
    }
    let values: Vec<f64> = reps.iter().map(|r| r.value).collect();
    let membership = reps.iter().map(|r| r.membership as f64).sum::<f64>() / total as f64;
    let calls = reps.iter().map(|r| r.calls as f64).sum::<f64>() / total as f64;
    let in_set = reps.iter().filter(|r| r.in_set).count() as f64 / total as f64;
    Ok((values, membership, calls, in_set))
}

fn draw_source(marginals: &[Dist1D], rng: &mut RngStream) -> Result<Point> {
    Point::new(marginals.iter().map(|m| m.sample(rng)).collect())
}

fn verification_oracle(cfg: &TransporterConfig) -> Result<Box<dyn MembershipOracle>> {
    match &cfg.target {
        TargetSpec::Conditioned { oracle, .. } => oracle.build(cfg.n),
        _ => Err(Error::config(
            "this experiment needs a conditioned target (a base law plus a membership oracle)",
        )),
    }
}

/// `transport_cost` and `set_transport` share a runner; the latter verifies
/// membership of every output.
fn run_transport(
    cfg: &TransporterConfig,
    bounds: &Option<BoundSpec>,
    verify: bool,
    replications: usize,
    seed: u64,
) -> Result<KindOutput> {
    let transporter = cfg.build()?;
    let checker = if verify { Some(verification_oracle(cfg)?) } else { None };
    let outcomes = fan_out(replications, |rep| {
        let mut rng = RngStream::new(seed, rep);
        let x = draw_source(&cfg.source_marginals, &mut rng)?;
        let record = transporter.transport(&x, &mut rng)?;
        let in_set = match &checker {
            Some(oracle) => oracle.contains(record.y.coords())?,
            None => true,
        };
        Ok(Rep {
            value: record.cost_sample.total,
            membership: record.ledger.membership_queries,
            calls: record.ledger.total_calls(),
            in_set,
        })
    });
    let mut details = BTreeMap::new();
    let (totals, membership, calls, in_set) = collect_reps(outcomes, &mut details)?;
    if verify {
        details.insert("fraction_in_set".into(), in_set);
    }
    let (bound_delta, bound_small_delta) = match bounds {
        Some(b) => {
            let small = match b.small_delta {
                Some(s) => s,
                None => online_overhead(cfg.cost.p, cfg.n, cfg.k)?,
            };
            (Some(b.delta), Some(small))
        }
        None => (None, None),
    };
    Ok(KindOutput {
        label: if verify { "set_transport" } else { "transport_cost" },
        n: Some(cfg.n),
        k: Some(cfg.k),
        p: Some(cfg.cost.p),
        epsilon: cfg.epsilon_hint,
        totals,
        bound_delta,
        bound_small_delta,
        membership_queries_mean: Some(membership),
        sampler_calls_mean: Some(calls),
        details,
    })
}

fn run_concentration(
    cfg: &TransporterConfig,
    delta: f64,
    replications: usize,
    seed: u64,
) -> Result<KindOutput> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::RejectedInput(format!(
            "failure budget delta must lie in (0, 1), got {delta}"
        )));
    }
    let transporter = cfg.build()?;
    let checker = verification_oracle(cfg)?;
    let outcomes = fan_out(replications, |rep| {
        let mut rng = RngStream::new(seed, rep);
        let x = draw_source(&cfg.source_marginals, &mut rng)?;
        let record = transporter.transport(&x, &mut rng)?;
        Ok(Rep {
            value: record.cost_sample.p_cost(),
            membership: record.ledger.membership_queries,
            calls: record.ledger.total_calls(),
            in_set: checker.contains(record.y.coords())?,
        })
    });
    let mut details = BTreeMap::new();
    let (totals, membership, calls, in_set) = collect_reps(outcomes, &mut details)?;
    let (mean, _) = mean_se(&totals);
    let budget = mean / delta;
    let within = totals.iter().filter(|&&d| d <= budget).count() as f64 / totals.len() as f64;
    details.insert("fraction_in_set".into(), in_set);
    details.insert("delta".into(), delta);
    details.insert("radius_budget".into(), budget);
    details.insert("fraction_within_budget".into(), within);
    Ok(KindOutput {
        label: "concentration",
        n: Some(cfg.n),
        k: Some(cfg.k),
        p: Some(1.0),
        epsilon: cfg.epsilon_hint,
        totals,
        bound_delta: None,
        bound_small_delta: None,
        membership_queries_mean: Some(membership),
        sampler_calls_mean: Some(calls),
        details,
    })
}

fn run_empirical(
    marginal: &Dist1D,
    k: usize,
    exponent: f64,
    replications: usize,
    seed: u64,
) -> Result<KindOutput> {
    let cost = CoordCost::AbsPow { exponent };
    cost.validate()?;
    if k == 0 {
        return Err(Error::RejectedInput("empirical sample size must be positive".into()));
    }
    let outcomes = fan_out(replications, |rep| {
        let mut rng = RngStream::new(seed, rep);
        let samples: Vec<f64> = (0..k).map(|_| marginal.sample(&mut rng)).collect();
        let emp = Dist1D::empirical(samples)?;
        Ok(Rep { value: ot_cost_1d(&emp, marginal, &cost)?, membership: 0, calls: k as u64, in_set: true })
    });
    let mut details = BTreeMap::new();
    let (totals, _, calls, _) = collect_reps(outcomes, &mut details)?;
    details.insert("exponent".into(), exponent);
    Ok(KindOutput {
        label: "empirical_scaling",
        n: Some(1),
        k: Some(k),
        p: Some(1.0),
        epsilon: None,
        totals,
        bound_delta: Some(empirical_bound(exponent, k)?),
        bound_small_delta: Some(0.0),
        membership_queries_mean: None,
        sampler_calls_mean: Some(calls),
        details,
    })
}

/// Either a built-in reference instance or a JSON file with
/// `{mu, nu, p, cost}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFixture {
    pub mu: DiscreteSpace,
    pub nu: DiscreteSpace,
    #[serde(flatten)]
    pub cost: CostSpec,
}

/// Resolves a fixture reference: `claim42` (optionally `claim42:<n>:<eps>`),
/// `remark40`, `remark41`, or a path to a fixture JSON file.
pub fn resolve_fixture(reference: &str) -> Result<(OracleFixture, Option<f64>)> {
    let named = match reference {
        "claim42" => Some(("claim42", 3usize, 0.125f64)),
        "remark40" => {
            let (mu, nu, cost) = remark40_instance()?;
            return Ok((OracleFixture { mu, nu, cost }, None));
        }
        "remark41" => {
            let (mu, nu, cost) = remark41_instance()?;
            return Ok((OracleFixture { mu, nu, cost }, None));
        }
        other => {
            if let Some(rest) = other.strip_prefix("claim42:") {
                let mut parts = rest.splitn(2, ':');
                let n = parts
                    .next()
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| Error::RejectedInput(format!("bad claim42 reference {other}")))?;
                let eps = parts
                    .next()
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::RejectedInput(format!("bad claim42 reference {other}")))?;
                Some(("claim42", n, eps))
            } else {
                None
            }
        }
    };
    if let Some((_, n, eps)) = named {
        let (mu, nu) = claim42_instance(n, eps)?;
        return Ok((OracleFixture { mu, nu, cost: CostSpec::hamming() }, Some(eps)));
    }
    let path = Path::new(reference);
    if !path.exists() {
        return Err(Error::RejectedInput(format!(
            "fixture {reference} is neither a built-in name (claim42, claim42:<n>:<eps>, remark40, remark41) nor a file"
        )));
    }
    let text = std::fs::read_to_string(path)?;
    let fixture: OracleFixture = serde_json::from_str(&text)?;
    Ok((fixture, None))
}

/// Exact-oracle values for a fixture. Oracles that reject the instance
/// (non-product source, scale) are skipped; everything computed lands in
/// the details map.
pub fn oracle_report(fixture: &OracleFixture) -> Result<BTreeMap<String, f64>> {
    let OracleFixture { mu, nu, cost } = fixture;
    let mut details = BTreeMap::new();
    let (exact, _) = exact_ot(mu, nu, cost)?;
    details.insert("exact_ot".into(), exact);
    let mut optional = |name: &str, value: Result<f64>| -> Result<()> {
        match value {
            Ok(v) => {
                details.insert(name.into(), v);
                Ok(())
            }
            Err(Error::RejectedInput(_)) => Ok(()),
            Err(e) => Err(e),
        }
    };
    optional("delta", delta_function(mu, nu, cost))?;
    optional("greedy", greedy_coupling(mu, nu, cost).map(|(v, _)| v))?;
    optional("online_coupling", online_coupling_optimum(mu, nu, cost))?;
    // the monolithic online-transport program is reported only at truly
    // tiny scale: past 256 joint outcomes the dense simplex can cycle on
    // these highly degenerate programs instead of terminating
    if mu.outcomes().saturating_mul(nu.outcomes()) <= 256 {
        optional("online_transport", online_transport_optimum(mu, nu, cost))?;
        optional(
            "online_transport_reverse",
            online_transport_optimum(nu, mu, &cost.transposed()),
        )?;
    }
    Ok(details)
}

fn run_oracle_suite(reference: &str, replications: usize) -> Result<KindOutput> {
    let (fixture, epsilon) = resolve_fixture(reference)?;
    let details = oracle_report(&fixture)?;
    let exact = details["exact_ot"];
    Ok(KindOutput {
        label: "oracle_suite",
        n: Some(fixture.mu.n()),
        k: None,
        p: Some(fixture.cost.p),
        epsilon,
        totals: vec![exact; replications],
        bound_delta: details.get("delta").copied(),
        bound_small_delta: details.get("delta").map(|_| 0.0),
        membership_queries_mean: None,
        sampler_calls_mean: None,
        details,
    })
}

fn cube_point(n: usize, rng: &mut RngStream) -> Result<Point> {
    Point::new(
        (0..n)
            .map(|_| loop {
                let u = rng.unit();
                if u > 0.0 {
                    return u;
                }
            })
            .collect(),
    )
}

fn run_reduction(
    shape: ReductionShape,
    n: usize,
    k: usize,
    epsilon: f64,
    set_spec: &OracleSpec,
    replications: usize,
    seed: u64,
) -> Result<KindOutput> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::RejectedInput(format!(
            "set measure must lie in (0, 1], got {epsilon}"
        )));
    }
    let set: Arc<dyn MembershipOracle> = Arc::from(set_spec.build(n)?);
    let cost = CostSpec::lp(2.0);
    let reduction = match shape {
        ReductionShape::Cube => cube_gauss_reduction(n)?,
        ReductionShape::Sphere => sphere_gauss_reduction(n)?,
    };
    let outcomes = fan_out(replications, |rep| {
        let mut rng = RngStream::new(seed, rep);
        let (x, y) = match shape {
            ReductionShape::Cube => {
                let x = cube_point(n, &mut rng)?;
                let inner = gaussian_set_inner(cost.clone(), k, epsilon);
                let y = apply_reduction(&reduction, inner, set.clone(), &x, &mut rng)?;
                (x, y)
            }
            ReductionShape::Sphere => {
                let x = uniform_sphere_point(n, &mut rng)?;
                let inner = conditioned_gaussian_inner(cost.clone(), k, epsilon);
                let y = apply_reduction(&reduction, inner, set.clone(), &x, &mut rng)?;
                (x, y)
            }
        };
        let sample = eval_cost(&cost, &x, &y)?;
        let value = match shape {
            ReductionShape::Cube => sample.total,
            ReductionShape::Sphere => sample.p_cost(),
        };
        Ok(Rep { value, membership: 0, calls: 0, in_set: set.contains(y.coords())? })
    });
    let mut details = BTreeMap::new();
    let (totals, _, _, in_set) = collect_reps(outcomes, &mut details)?;
    details.insert("fraction_in_set".into(), in_set);
    details.insert("lipschitz_alpha".into(), reduction.lipschitz_alpha());
    details.insert("online".into(), if reduction.online() { 1.0 } else { 0.0 });
    let (p, bound_delta, bound_small_delta) = match shape {
        ReductionShape::Cube => (
            2.0,
            Some(kappa(epsilon)?),
            Some(online_overhead(2.0, n, k)?),
        ),
        ReductionShape::Sphere => (1.0, Some(sphere_set_transport_cost_bound(epsilon)?), Some(0.0)),
    };
    Ok(KindOutput {
        label: "reduction",
        n: Some(n),
        k: Some(k),
        p: Some(p),
        epsilon: Some(epsilon),
        totals,
        bound_delta,
        bound_small_delta,
        membership_queries_mean: None,
        sampler_calls_mean: None,
        details,
    })
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(Error::RejectedInput(format!(
                "need at least 2 replications for a standard error, got {}",
                self.replications
            )));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::RejectedInput(format!(
                "confidence must lie in (0, 1), got {}",
                self.confidence
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Runs the experiment. Deterministic given the config (and its seed); if
/// `out` is set the result is also emitted there. On a replication failure
/// the error propagates after partial statistics are recorded (and emitted
/// when `out` is set), so truncated runs are always flagged.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let start = Instant::now();
    let outcome = match &config.kind {
        ExperimentKind::TransportCost { transporter, bounds } => {
            run_transport(transporter, bounds, false, config.replications, config.seed)
        }
        ExperimentKind::SetTransport { transporter, bounds } => {
            run_transport(transporter, bounds, true, config.replications, config.seed)
        }
        ExperimentKind::Concentration { transporter, delta } => {
            run_concentration(transporter, *delta, config.replications, config.seed)
        }
        ExperimentKind::EmpiricalScaling { marginal, k, exponent } => {
            run_empirical(marginal, *k, *exponent, config.replications, config.seed)
        }
        ExperimentKind::OracleSuite { fixture } => run_oracle_suite(fixture, config.replications),
        ExperimentKind::Reduction { shape, n, k, epsilon, set } => {
            run_reduction(*shape, *n, *k, *epsilon, set, config.replications, config.seed)
        }
    }?;
    let (mean, se) = mean_se(&outcome.totals);
    let z = norm_ppf(0.5 + config.confidence / 2.0)?;
    let mut result = ExperimentResult {
        experiment: outcome.label.into(),
        n: outcome.n,
        k: outcome.k,
        p: outcome.p,
        epsilon: outcome.epsilon,
        replications: config.replications,
        seed: config.seed,
        mean_cost: mean,
        stderr: se,
        ci_lo: mean - z * se,
        ci_hi: mean + z * se,
        confidence: config.confidence,
        bound_delta: outcome.bound_delta,
        bound_small_delta: outcome.bound_small_delta,
        membership_queries_mean: outcome.membership_queries_mean,
        sampler_calls_mean: outcome.sampler_calls_mean,
        wallclock_ms: None,
        totals: outcome.totals,
        details: outcome.details,
    };
    if config.timing {
        result.wallclock_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    if let Some(out) = &config.out {
        emit(&result, config.format.unwrap_or(OutputFormat::Csv), Path::new(out))?;
    }
    Ok(result)
}

/// Checks `mean^{1/p}` against `delta + small_delta + 3 stderr`, the
/// triangle-bound shape every transport guarantee here takes. The standard
/// error is propagated through the root by the delta method.
pub fn compare_bounds(result: &ExperimentResult) -> Result<BoundVerdict> {
    let delta = result.bound_delta.ok_or_else(|| {
        Error::RejectedInput("result carries no bound references to compare against".into())
    })?;
    let small = result.bound_small_delta.unwrap_or(0.0);
    let p = result.p.unwrap_or(1.0);
    let mean = result.mean_cost;
    let (measured, se_prop) = if p == 1.0 {
        (mean, result.stderr)
    } else if mean > 0.0 {
        let rooted = mean.powf(1.0 / p);
        (rooted, result.stderr * rooted / (p * mean))
    } else {
        (0.0, 0.0)
    };
    let reference = delta + small;
    let allowance = reference + 3.0 * se_prop;
    Ok(BoundVerdict {
        pass: measured <= allowance,
        measured,
        reference,
        stderr_propagated: se_prop,
        slack: allowance - measured,
    })
}

fn push_cell<T: std::fmt::Display>(row: &mut String, value: &Option<T>) {
    row.push(',');
    if let Some(v) = value {
        let _ = write!(row, "{v}");
    }
}

/// Renders the result in the requested format: a two-line CSV (header and
/// one row, absent fields as empty cells) or pretty JSON mirroring every
/// field.
pub fn render(result: &ExperimentResult, format: OutputFormat) -> Result<String> {
    match format {
        OutputFormat::Csv => {
            let mut row = String::new();
            let _ = write!(row, "{}", result.experiment);
            push_cell(&mut row, &result.n);
            push_cell(&mut row, &result.k);
            push_cell(&mut row, &result.p);
            push_cell(&mut row, &result.epsilon);
            push_cell(&mut row, &Some(result.replications));
            push_cell(&mut row, &Some(result.seed));
            push_cell(&mut row, &Some(result.mean_cost));
            push_cell(&mut row, &Some(result.stderr));
            push_cell(&mut row, &Some(result.ci_lo));
            push_cell(&mut row, &Some(result.ci_hi));
            push_cell(&mut row, &result.bound_delta);
            push_cell(&mut row, &result.bound_small_delta);
            push_cell(&mut row, &result.membership_queries_mean);
            push_cell(&mut row, &result.sampler_calls_mean);
            push_cell(&mut row, &result.wallclock_ms);
            Ok(format!("{CSV_HEADER}\n{row}\n"))
        }
        OutputFormat::Json => Ok(format!("{}\n", serde_json::to_string_pretty(result)?)),
    }
}

/// Writes the rendered result to `path`.
pub fn emit(result: &ExperimentResult, format: OutputFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render(result, format)?)?;
    Ok(())
}
