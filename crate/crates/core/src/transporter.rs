//! Online empirical transport from a product source to a sequentially
//! samplable target.
//!
//! At round `i` the forward transporter holds the input coordinate `x_i` and
//! the output prefix `y_[i-1]`, and couples two k-point batches: `x_i` hidden
//! at a uniformly random slot among `k - 1` fresh draws of `source[i]`, and
//! `k` draws of the target conditioned on the prefix. The output coordinate
//! is the target-side element matched with `x_i`. Hiding the input among
//! exchangeable draws makes every round distribution-preserving for every
//! `k >= 1`, so outputs are exact conditional target draws; larger `k`
//! shrinks the realized cost toward the per-round optimum. A side that
//! exposes exact CDFs can skip its empirical batch entirely ([`Shortcut`]),
//! removing that side's share of the sampling noise.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cost::{eval_cost, CoordCost, CostSample, CostSpec};
use crate::dist1d::{norm_ppf, Dist1D};
use crate::error::{Error, Result};
use crate::oracle::DiscreteSpace;
use crate::ot1d::{cdf_transport, hungarian_match};
use crate::point::Point;
use crate::rng::RngStream;
use crate::seqsampler::{
    conditioned_sampler, default_trial_cap, finite_sampler, product_sampler, CostLedger,
    FullSpace, HalfspaceOracle, MembershipOracle, ProcessOracle, SequentialSampler,
};

/// Which way a transporter runs when used as a composition stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// Product source to target.
    Forward,
    /// Target back to the product source.
    Inverse,
}

/// Per-side opt-in to exact-CDF coupling, replacing that side's empirical
/// batch by the declared distribution itself.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortcut {
    #[serde(default)]
    pub source_cdf: bool,
    #[serde(default)]
    pub target_cdf: bool,
}

impl Shortcut {
    pub fn none() -> Self {
        Shortcut::default()
    }

    pub fn source() -> Self {
        Shortcut { source_cdf: true, target_cdf: false }
    }

    pub fn target() -> Self {
        Shortcut { source_cdf: false, target_cdf: true }
    }

    pub fn both() -> Self {
        Shortcut { source_cdf: true, target_cdf: true }
    }

    pub fn any(&self) -> bool {
        self.source_cdf || self.target_cdf
    }
}

/// Declared law of a transport endpoint. Composition junctions are checked
/// by descriptor equality, not by statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DistDescriptor {
    Product(Vec<Dist1D>),
    Finite(DiscreteSpace),
    Conditioned { base: Box<DistDescriptor>, oracle: String },
}

/// One transported point: the product-side point `x`, the target-side point
/// `y`, the realized cost between them, and the sampling ledger of the run.
#[derive(Debug, Clone, Serialize)]
pub struct TransportRecord {
    pub x: Point,
    pub y: Point,
    pub cost_sample: CostSample,
    pub ledger: CostLedger,
}

/// The k-sample online transporter between a product source and a
/// sequentially samplable target.
///
/// The construction is online: `y_i` depends only on `x_[i]`, `y_[i-1]` and
/// fresh randomness, which the step API enforces structurally. Sessions are
/// sequential; one immutable transporter value can serve concurrent sessions,
/// each with its own `RngStream` and ledger.
pub struct OnlineTransporter {
    source: Vec<Dist1D>,
    target: Box<dyn SequentialSampler>,
    target_desc: DistDescriptor,
    cost: CostSpec,
    k: usize,
    direction: Direction,
    shortcut: Shortcut,
}

impl std::fmt::Debug for OnlineTransporter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OnlineTransporter")
            .field("source", &self.source)
            .field("target", &self.target_desc)
            .field("cost", &self.cost)
            .field("k", &self.k)
            .field("direction", &self.direction)
            .field("shortcut", &self.shortcut)
            .finish()
    }
}

impl OnlineTransporter {
    /// Builds a forward transporter without shortcuts. The cost spec must
    /// declare `metric`: the transport guarantees are stated for p-th-root
    /// metrics and the composition triangle bound depends on it.
    pub fn new(
        source: Vec<Dist1D>,
        target: Box<dyn SequentialSampler>,
        target_desc: DistDescriptor,
        cost: CostSpec,
        k: usize,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::RejectedInput("batch size k must be at least 1".into()));
        }
        if source.is_empty() {
            return Err(Error::RejectedInput("transporter needs at least one source marginal".into()));
        }
        if target.dim() != source.len() {
            return Err(Error::DimensionMismatch { expected: source.len(), got: target.dim() });
        }
        cost.validate()?;
        cost.check_dim(source.len())?;
        if !cost.metric {
            return Err(Error::config(
                "transport requires a cost whose p-th root is a metric; the spec does not declare one",
            ));
        }
        for (i, m) in source.iter().enumerate() {
            if !m.capabilities().can_sample {
                return Err(Error::config(format!("source marginal {i} is not samplable")));
            }
        }
        Ok(OnlineTransporter {
            source,
            target,
            target_desc,
            cost,
            k,
            direction: Direction::Forward,
            shortcut: Shortcut::default(),
        })
    }

    pub fn product_to_product(
        source: Vec<Dist1D>,
        target: Vec<Dist1D>,
        cost: CostSpec,
        k: usize,
    ) -> Result<Self> {
        let desc = DistDescriptor::Product(target.clone());
        let sampler = product_sampler(target)?;
        OnlineTransporter::new(source, Box::new(sampler), desc, cost, k)
    }

    pub fn to_finite(source: Vec<Dist1D>, space: DiscreteSpace, cost: CostSpec, k: usize) -> Result<Self> {
        let desc = DistDescriptor::Finite(space.clone());
        OnlineTransporter::new(source, Box::new(finite_sampler(space)), desc, cost, k)
    }

    pub fn with_direction(mut self, direction: Direction) -> Self {
        self.direction = direction;
        self
    }

    /// Enables CDF shortcuts. Both flags need convex coordinate costs (the
    /// shortcut couples through CDFs, which matches the batch construction
    /// only when sorted matchings are optimal); the source flag additionally
    /// needs CDF and quantile access on every marginal, the target flag an
    /// exact conditional from the target sampler.
    pub fn with_shortcut(mut self, shortcut: Shortcut) -> Result<Self> {
        if shortcut.any() && !self.cost.all_convex(self.n()) {
            return Err(Error::config("CDF shortcuts require convex coordinate costs"));
        }
        if shortcut.source_cdf {
            for (i, m) in self.source.iter().enumerate() {
                let caps = m.capabilities();
                if !(caps.has_cdf && caps.has_inv_cdf) {
                    return Err(Error::config(format!(
                        "source marginal {i} does not expose a CDF / quantile pair"
                    )));
                }
            }
        }
        if shortcut.target_cdf {
            match self.target.conditional(&[])? {
                Some(d) => {
                    let caps = d.capabilities();
                    if !(caps.has_cdf && caps.has_inv_cdf) {
                        return Err(Error::config("target conditionals do not expose a CDF / quantile pair"));
                    }
                }
                None => return Err(Error::config("target sampler does not expose exact conditionals")),
            }
        }
        self.shortcut = shortcut;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.source.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn cost(&self) -> &CostSpec {
        &self.cost
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn shortcut(&self) -> Shortcut {
        self.shortcut
    }

    pub fn source_marginals(&self) -> &[Dist1D] {
        &self.source
    }

    pub fn source_descriptor(&self) -> DistDescriptor {
        DistDescriptor::Product(self.source.clone())
    }

    pub fn target_descriptor(&self) -> &DistDescriptor {
        &self.target_desc
    }

    /// Declared law of the points fed to [`apply`](Self::apply).
    pub fn input_descriptor(&self) -> DistDescriptor {
        match self.direction {
            Direction::Forward => self.source_descriptor(),
            Direction::Inverse => self.target_desc.clone(),
        }
    }

    /// Declared law of the points produced by [`apply`](Self::apply).
    pub fn output_descriptor(&self) -> DistDescriptor {
        match self.direction {
            Direction::Forward => self.target_desc.clone(),
            Direction::Inverse => self.source_descriptor(),
        }
    }

    fn check_round(&self, i: usize) -> Result<()> {
        if i >= self.n() {
            return Err(Error::RejectedInput(format!(
                "prefix of length {i} exhausts the {}-round transporter",
                self.n()
            )));
        }
        Ok(())
    }

    fn draw_target_batch(
        &self,
        prefix: &[f64],
        count: usize,
        rng: &mut RngStream,
        ledger: &mut CostLedger,
    ) -> Result<Vec<f64>> {
        let mut ys = Vec::with_capacity(count);
        for _ in 0..count {
            match self.target.next(prefix, rng, ledger)? {
                Some(v) => ys.push(v),
                None => {
                    return Err(Error::internal(format!(
                        "target sampler returned bottom on a prefix of length {}; the prefix left the declared support",
                        prefix.len()
                    )))
                }
            }
        }
        Ok(ys)
    }

    fn draw_source_batch(&self, i: usize, count: usize, rng: &mut RngStream) -> Vec<f64> {
        (0..count).map(|_| self.source[i].sample(rng)).collect()
    }

    fn exact_conditional(&self, prefix: &[f64]) -> Result<Dist1D> {
        self.target.conditional(prefix)?.ok_or_else(|| {
            Error::internal(format!(
                "target sampler stopped exposing conditionals at a prefix of length {}",
                prefix.len()
            ))
        })
    }

    /// One forward round: maps the input coordinate `x_i` to an exact draw
    /// from the target's round-`i` conditional given `y_prefix`.
    ///
    /// Randomness is consumed in a fixed order (target batch, source batch,
    /// tie/slot draw), so replaying a prefix under an equally seeded stream
    /// reproduces the output bitwise.
    pub fn transport_step(
        &self,
        x_i: f64,
        y_prefix: &[f64],
        rng: &mut RngStream,
        ledger: &mut CostLedger,
    ) -> Result<f64> {
        let i = y_prefix.len();
        self.check_round(i)?;
        if !x_i.is_finite() {
            return Err(Error::RejectedInput(format!("non-finite input coordinate {x_i}")));
        }
        let coord = self.cost.coord(i);
        if coord.is_convex() {
            let nu_side = if self.shortcut.target_cdf {
                self.exact_conditional(y_prefix)?
            } else {
                Dist1D::empirical(self.draw_target_batch(y_prefix, self.k, rng, ledger)?)?
            };
            let mu_side = if self.shortcut.source_cdf {
                self.source[i].clone()
            } else {
                let mut xs = self.draw_source_batch(i, self.k - 1, rng);
                xs.push(x_i);
                Dist1D::empirical(xs)?
            };
            cdf_transport(x_i, &mu_side, &nu_side, rng)
        } else {
            let ys = self.draw_target_batch(y_prefix, self.k, rng, ledger)?;
            let mut xs = self.draw_source_batch(i, self.k - 1, rng);
            let t = rng.index(self.k);
            xs.insert(t, x_i);
            let matching = hungarian_match(&xs, &ys, coord)?;
            let (_, j) = matching
                .pairs
                .iter()
                .copied()
                .find(|&(a, _)| a == t)
                .ok_or_else(|| Error::internal("matching does not cover the hidden slot"))?;
            Ok(ys[j])
        }
    }

    /// One inverse round: maps the target coordinate `y_i` (with its input
    /// prefix `y_prefix`) to an exact draw from `source[i]`.
    pub fn inverse_step(
        &self,
        y_i: f64,
        y_prefix: &[f64],
        rng: &mut RngStream,
        ledger: &mut CostLedger,
    ) -> Result<f64> {
        let i = y_prefix.len();
        self.check_round(i)?;
        if !y_i.is_finite() {
            return Err(Error::RejectedInput(format!("non-finite input coordinate {y_i}")));
        }
        let coord = self.cost.coord(i);
        if coord.is_convex() {
            let from_side = if self.shortcut.target_cdf {
                self.exact_conditional(y_prefix)?
            } else {
                let mut ys = self.draw_target_batch(y_prefix, self.k - 1, rng, ledger)?;
                ys.push(y_i);
                Dist1D::empirical(ys)?
            };
            let to_side = if self.shortcut.source_cdf {
                self.source[i].clone()
            } else {
                Dist1D::empirical(self.draw_source_batch(i, self.k, rng))?
            };
            cdf_transport(y_i, &from_side, &to_side, rng)
        } else {
            let mut ys = self.draw_target_batch(y_prefix, self.k - 1, rng, ledger)?;
            let xs = self.draw_source_batch(i, self.k, rng);
            let t = rng.index(self.k);
            ys.insert(t, y_i);
            let matching = hungarian_match(&xs, &ys, coord)?;
            let (a, _) = matching
                .pairs
                .iter()
                .copied()
                .find(|&(_, b)| b == t)
                .ok_or_else(|| Error::internal("matching does not cover the hidden slot"))?;
            Ok(xs[a])
        }
    }

    /// Transports a full source point; the output is an exact target draw
    /// for every `k >= 1`.
    pub fn transport(&self, x: &Point, rng: &mut RngStream) -> Result<TransportRecord> {
        x.check_dim(self.n())?;
        let mut ledger = CostLedger::new(self.n());
        let mut y = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            let yi = self.transport_step(x[i], &y, rng, &mut ledger)?;
            y.push(yi);
        }
        let y = Point::new(y)?;
        let cost_sample = eval_cost(&self.cost, x, &y)?;
        Ok(TransportRecord { x: x.clone(), y, cost_sample, ledger })
    }

    /// Transports a full target point back; the output is an exact product
    /// draw for every `k >= 1`.
    pub fn inverse_transport(&self, y: &Point, rng: &mut RngStream) -> Result<TransportRecord> {
        y.check_dim(self.n())?;
        let mut ledger = CostLedger::new(self.n());
        let mut x = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            let xi = self.inverse_step(y[i], y.prefix(i), rng, &mut ledger)?;
            x.push(xi);
        }
        let x = Point::new(x)?;
        let cost_sample = eval_cost(&self.cost, &x, y)?;
        Ok(TransportRecord { x, y: y.clone(), cost_sample, ledger })
    }

    /// Runs the transporter in its declared [`Direction`].
    pub fn apply(&self, input: &Point, rng: &mut RngStream) -> Result<TransportRecord> {
        match self.direction {
            Direction::Forward => self.transport(input, rng),
            Direction::Inverse => self.inverse_transport(input, rng),
        }
    }
}

/// Builds a transporter whose target is the product source conditioned on
/// membership in `set`, sampled by rejection. Every output lies in `set`.
pub fn set_transport(
    marginals: Vec<Dist1D>,
    set: Box<dyn MembershipOracle>,
    cost: CostSpec,
    k: usize,
    epsilon_hint: f64,
) -> Result<OnlineTransporter> {
    let cap = default_trial_cap(epsilon_hint.clamp(f64::MIN_POSITIVE, 1.0));
    set_transport_with_cap(marginals, set, cost, k, epsilon_hint, cap)
}

/// [`set_transport`] with an explicit per-round rejection trial cap. The
/// default cap is calibrated to the set's overall mass, which is not enough
/// for sets whose conditional mass at late rounds can be exponentially
/// smaller (the sphere-reduction stages): a wide cap keeps those draws
/// exact and costs nothing in expectation.
pub fn set_transport_with_cap(
    marginals: Vec<Dist1D>,
    set: Box<dyn MembershipOracle>,
    cost: CostSpec,
    k: usize,
    epsilon_hint: f64,
    trial_cap: usize,
) -> Result<OnlineTransporter> {
    let desc = DistDescriptor::Conditioned {
        base: Box::new(DistDescriptor::Product(marginals.clone())),
        oracle: set.describe(),
    };
    let base = product_sampler(marginals.clone())?;
    let target = conditioned_sampler(Box::new(base), set, epsilon_hint)?.with_trial_cap(trial_cap)?;
    OnlineTransporter::new(marginals, Box::new(target), desc, cost, k)
}

/// Moves `x` to a member of `set` and reports the realized p-cost between
/// them. One-shot wrapper over [`set_transport`].
pub fn concentrate(
    marginals: Vec<Dist1D>,
    set: Box<dyn MembershipOracle>,
    cost: CostSpec,
    k: usize,
    epsilon_hint: f64,
    x: &Point,
    rng: &mut RngStream,
) -> Result<(Point, f64)> {
    let transporter = set_transport(marginals, set, cost, k, epsilon_hint)?;
    let record = transporter.transport(x, rng)?;
    let distance = record.cost_sample.p_cost();
    Ok((record.y, distance))
}

/// A chain of transport stages whose junctions were checked to agree:
/// each stage's declared output law equals the next stage's declared input
/// law and all stages share one cost spec.
pub struct ComposedTransport {
    stages: Vec<Arc<OnlineTransporter>>,
}

impl std::fmt::Debug for ComposedTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ComposedTransport").field("stages", &self.stages).finish()
    }
}

/// Everything one composed run produced: the per-stage records plus the
/// end-to-end cost between the original input and the final output.
#[derive(Debug, Clone, Serialize)]
pub struct ComposedRecord {
    pub input: Point,
    pub output: Point,
    pub stages: Vec<TransportRecord>,
    pub end_to_end: CostSample,
}

pub fn compose(first: Arc<OnlineTransporter>, second: Arc<OnlineTransporter>) -> Result<ComposedTransport> {
    ComposedTransport::new(first).then(second)
}

impl ComposedTransport {
    pub fn new(stage: Arc<OnlineTransporter>) -> Self {
        ComposedTransport { stages: vec![stage] }
    }

    pub fn then(mut self, next: Arc<OnlineTransporter>) -> Result<Self> {
        let last = self.stages.last().expect("composition always has a stage");
        if last.cost != next.cost {
            return Err(Error::config("composed stages must share one cost spec"));
        }
        if last.output_descriptor() != next.input_descriptor() {
            return Err(Error::config(
                "stage junction mismatch: the declared output law of one stage must equal the declared input law of the next",
            ));
        }
        self.stages.push(next);
        Ok(self)
    }

    pub fn stages(&self) -> &[Arc<OnlineTransporter>] {
        &self.stages
    }

    pub fn input_descriptor(&self) -> DistDescriptor {
        self.stages.first().expect("composition always has a stage").input_descriptor()
    }

    pub fn output_descriptor(&self) -> DistDescriptor {
        self.stages.last().expect("composition always has a stage").output_descriptor()
    }

    pub fn apply(&self, input: &Point, rng: &mut RngStream) -> Result<ComposedRecord> {
        let mut current = input.clone();
        let mut records = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let record = stage.apply(&current, rng)?;
            current = match stage.direction() {
                Direction::Forward => record.y.clone(),
                Direction::Inverse => record.x.clone(),
            };
            records.push(record);
        }
        let end_to_end = eval_cost(self.stages[0].cost(), input, &current)?;
        Ok(ComposedRecord { input: input.clone(), output: current, stages: records, end_to_end })
    }
}

/// Declarative membership oracles for configs. `UpperTail` is the halfspace
/// `{x : x_axis >= Phi^{-1}(1 - epsilon)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleSpec {
    Full,
    Halfspace { normal: Vec<f64>, threshold: f64 },
    UpperTail { axis: usize, epsilon: f64 },
    Process { program: String, args: Vec<String> },
}

impl OracleSpec {
    pub fn build(&self, n: usize) -> Result<Box<dyn MembershipOracle>> {
        match self {
            OracleSpec::Full => Ok(Box::new(FullSpace)),
            OracleSpec::Halfspace { normal, threshold } => {
                if normal.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: normal.len() });
                }
                Ok(Box::new(HalfspaceOracle::new(normal.clone(), *threshold)?))
            }
            OracleSpec::UpperTail { axis, epsilon } => {
                let threshold = norm_ppf(1.0 - *epsilon)?;
                Ok(Box::new(HalfspaceOracle::axis(n, *axis, threshold)?))
            }
            OracleSpec::Process { program, args } => {
                let args: Vec<&str> = args.iter().map(String::as_str).collect();
                Ok(Box::new(ProcessOracle::spawn(program, &args)?))
            }
        }
    }
}

/// Declarative target distributions for configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSpec {
    Product { marginals: Vec<Dist1D> },
    Finite { space: DiscreteSpace },
    Conditioned { base: Box<TargetSpec>, oracle: OracleSpec },
}

fn build_target(
    spec: &TargetSpec,
    n: usize,
    epsilon_hint: Option<f64>,
) -> Result<(Box<dyn SequentialSampler>, DistDescriptor)> {
    match spec {
        TargetSpec::Product { marginals } => {
            if marginals.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: marginals.len() });
            }
            let desc = DistDescriptor::Product(marginals.clone());
            Ok((Box::new(product_sampler(marginals.clone())?), desc))
        }
        TargetSpec::Finite { space } => {
            if space.n() != n {
                return Err(Error::DimensionMismatch { expected: n, got: space.n() });
            }
            let desc = DistDescriptor::Finite(space.clone());
            Ok((Box::new(finite_sampler(space.clone())), desc))
        }
        TargetSpec::Conditioned { base, oracle } => {
            let (base_sampler, base_desc) = build_target(base, n, epsilon_hint)?;
            let oracle = oracle.build(n)?;
            let desc = DistDescriptor::Conditioned { base: Box::new(base_desc), oracle: oracle.describe() };
            let eps = epsilon_hint
                .ok_or_else(|| Error::config("a conditioned target requires epsilon_hint"))?;
            Ok((Box::new(conditioned_sampler(base_sampler, oracle, eps)?), desc))
        }
    }
}

/// JSON-facing transporter description:
/// `{n, k, p, cost, source_marginals, target, shortcut?, epsilon_hint?,
/// metric?}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransporterConfig {
    pub n: usize,
    pub k: usize,
    #[serde(flatten)]
    pub cost: CostSpec,
    pub source_marginals: Vec<Dist1D>,
    pub target: TargetSpec,
    #[serde(default)]
    pub shortcut: Shortcut,
    #[serde(default)]
    pub epsilon_hint: Option<f64>,
}

/// Whether every coordinate cost is from a family whose p-th-root total is
/// a metric without further attestation.
fn standard_metric(cost: &CostSpec, n: usize) -> bool {
    (0..n).all(|i| match cost.coord(i) {
        CoordCost::Hamming => true,
        CoordCost::AbsPow { exponent } => *exponent == cost.p,
        CoordCost::Tabulated { .. } => false,
    })
}

impl TransporterConfig {
    pub fn build(&self) -> Result<OnlineTransporter> {
        if self.n == 0 {
            return Err(Error::RejectedInput("dimension must be positive".into()));
        }
        if self.source_marginals.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: self.source_marginals.len() });
        }
        let mut cost = self.cost.clone();
        cost.validate()?;
        if !cost.metric {
            if standard_metric(&cost, self.n) {
                cost.metric = true;
            } else {
                return Err(Error::config(
                    "declared cost is not a recognized metric family; set \"metric\": true to attest that the p-th root of the total is a metric",
                ));
            }
        }
        let (target, desc) = build_target(&self.target, self.n, self.epsilon_hint)?;
        OnlineTransporter::new(self.source_marginals.clone(), target, desc, cost, self.k)?
            .with_shortcut(self.shortcut)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqsampler::full_sample;

    fn gaussians(n: usize) -> Vec<Dist1D> {
        (0..n).map(|_| Dist1D::standard_gaussian()).collect()
    }

    fn bit() -> Dist1D {
        Dist1D::finite(vec![(0.0, 0.5), (1.0, 0.5)]).unwrap()
    }

    fn corr_space() -> DiscreteSpace {
        DiscreteSpace::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]], vec![0.4, 0.1, 0.2, 0.3]).unwrap()
    }

    #[test]
    fn construction_gates() {
        let src = gaussians(1);
        let err = OnlineTransporter::product_to_product(src.clone(), src.clone(), CostSpec::lp(2.0), 0)
            .unwrap_err();
        assert!(matches!(err, Error::RejectedInput(_)));

        let nonmetric = CostSpec::uniform(2.0, CoordCost::abs_pow(1.0)).unwrap();
        let err = OnlineTransporter::product_to_product(src.clone(), src.clone(), nonmetric, 4).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));

        let err = OnlineTransporter::product_to_product(src, gaussians(2), CostSpec::lp(2.0), 4).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, got: 2 }));
    }

    #[test]
    fn shortcut_gates() {
        let src = vec![bit(), bit()];
        let t = OnlineTransporter::product_to_product(src.clone(), src.clone(), CostSpec::hamming(), 4)
            .unwrap();
        let err = t.with_shortcut(Shortcut::both()).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));

        let marginals = gaussians(2);
        let t = set_transport(marginals, Box::new(FullSpace), CostSpec::lp(2.0), 4, 1.0).unwrap();
        let err = t.with_shortcut(Shortcut::target()).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
    }

    #[test]
    fn both_cdf_shortcut_is_the_identity() {
        let src = vec![Dist1D::standard_gaussian(), Dist1D::uniform(0.0, 2.0).unwrap()];
        let t = OnlineTransporter::product_to_product(src.clone(), src, CostSpec::lp(2.0), 7)
            .unwrap()
            .with_shortcut(Shortcut::both())
            .unwrap();
        let mut rng = RngStream::new(11, 0);
        let x = Point::new(vec![0.3, 1.7]).unwrap();

        let rec = t.transport(&x, &mut rng).unwrap();
        assert_eq!(rec.y, x);
        assert_eq!(rec.cost_sample.total, 0.0);
        assert_eq!(rec.ledger.total_calls(), 0);

        let rec = t.inverse_transport(&x, &mut rng).unwrap();
        assert_eq!(rec.x, x);
        assert_eq!(rec.cost_sample.total, 0.0);

        // No randomness is consumed on the shortcut path.
        let mut replay = RngStream::new(11, 0);
        assert_eq!(rng.unit(), replay.unit());
    }

    #[test]
    fn k1_output_is_the_target_draw() {
        let tgt = vec![Dist1D::finite(vec![(7.0, 1.0)]).unwrap()];
        let t = OnlineTransporter::product_to_product(gaussians(1), tgt, CostSpec::lp(2.0), 1).unwrap();
        let mut rng = RngStream::new(3, 0);
        let mut ledger = CostLedger::new(1);
        let y = t.transport_step(-5.0, &[], &mut rng, &mut ledger).unwrap();
        assert_eq!(y, 7.0);
        assert_eq!(ledger.calls_per_round, vec![1]);

        // Continuous target, same stream, different inputs: same output.
        let step = |x: f64| {
            let t = OnlineTransporter::product_to_product(
                gaussians(1),
                vec![Dist1D::gaussian(3.0, 1.0).unwrap()],
                CostSpec::lp(2.0),
                1,
            )
            .unwrap();
            let mut rng = RngStream::new(9, 0);
            let mut ledger = CostLedger::new(1);
            t.transport_step(x, &[], &mut rng, &mut ledger).unwrap()
        };
        assert_eq!(step(-2.0), step(5.0));
    }

    #[test]
    fn query_budget_per_round() {
        let t = OnlineTransporter::product_to_product(gaussians(3), gaussians(3), CostSpec::lp(2.0), 6)
            .unwrap();
        let mut rng = RngStream::new(21, 0);
        let x = Point::new(vec![0.1, -0.4, 2.0]).unwrap();
        let rec = t.transport(&x, &mut rng).unwrap();
        assert_eq!(rec.ledger.calls_per_round, vec![6, 6, 6]);
        let rec = t.inverse_transport(&x, &mut rng).unwrap();
        assert_eq!(rec.ledger.calls_per_round, vec![5, 5, 5]);
    }

    #[test]
    fn mean_shift_between_unit_gaussians() {
        let t = OnlineTransporter::product_to_product(
            gaussians(1),
            vec![Dist1D::gaussian(1.0, 1.0).unwrap()],
            CostSpec::lp(2.0),
            1000,
        )
        .unwrap();
        let mut rng = RngStream::new(42, 0);
        let src = Dist1D::standard_gaussian();
        let mut sum = 0.0;
        let reps = 1000;
        for _ in 0..reps {
            let x = Point::new(vec![src.sample(&mut rng)]).unwrap();
            let rec = t.transport(&x, &mut rng).unwrap();
            sum += rec.y[0] - rec.x[0];
        }
        let mean = sum / reps as f64;
        assert!((mean - 1.0).abs() < 0.15, "mean shift {mean}");
    }

    fn chi_square_joint(counts: &[u64; 4], probs: &[f64; 4], reps: f64) -> f64 {
        counts
            .iter()
            .zip(probs)
            .map(|(&c, &p)| {
                let e = reps * p;
                (c as f64 - e).powi(2) / e
            })
            .sum()
    }

    fn joint_counts(t: &OnlineTransporter, seed: u64, reps: usize, inverse: bool) -> [u64; 4] {
        let mut rng = RngStream::new(seed, 0);
        let space = corr_space();
        let mut counts = [0u64; 4];
        for _ in 0..reps {
            let out = if inverse {
                let (y, _) = full_sample(&finite_sampler(space.clone()), &mut rng).unwrap();
                t.inverse_transport(&y, &mut rng).unwrap().x
            } else {
                let x = Point::new(vec![bit().sample(&mut rng), bit().sample(&mut rng)]).unwrap();
                t.transport(&x, &mut rng).unwrap().y
            };
            let idx = (out[0] as usize) * 2 + out[1] as usize;
            counts[idx] += 1;
        }
        counts
    }

    // 0.001 critical value of chi-square with 3 degrees of freedom.
    const CHI2_3_001: f64 = 16.266;

    #[test]
    fn forward_marginals_exact_on_finite_space() {
        let reps = 4000;
        let target_probs = [0.4, 0.1, 0.2, 0.3];
        for (seed, k, cost) in [
            (101u64, 1usize, CostSpec::lp(1.0)),
            (102, 2, CostSpec::lp(1.0)),
            (103, 5, CostSpec::lp(1.0)),
            (104, 2, CostSpec::hamming()),
        ] {
            let t = OnlineTransporter::to_finite(vec![bit(), bit()], corr_space(), cost, k).unwrap();
            let counts = joint_counts(&t, seed, reps, false);
            let stat = chi_square_joint(&counts, &target_probs, reps as f64);
            assert!(stat < CHI2_3_001, "k={k} seed={seed}: chi2={stat} counts={counts:?}");
        }
    }

    #[test]
    fn inverse_marginals_exact_on_finite_space() {
        let reps = 4000;
        let source_probs = [0.25; 4];
        for (seed, cost) in [(201u64, CostSpec::lp(1.0)), (202, CostSpec::hamming())] {
            let t = OnlineTransporter::to_finite(vec![bit(), bit()], corr_space(), cost, 3).unwrap();
            let counts = joint_counts(&t, seed, reps, true);
            let stat = chi_square_joint(&counts, &source_probs, reps as f64);
            assert!(stat < CHI2_3_001, "seed={seed}: chi2={stat} counts={counts:?}");
        }
    }

    #[test]
    fn onlineness_prefix_replay() {
        let t = OnlineTransporter::product_to_product(
            gaussians(3),
            vec![
                Dist1D::gaussian(1.0, 1.0).unwrap(),
                Dist1D::gaussian(-1.0, 2.0).unwrap(),
                Dist1D::gaussian(0.0, 0.5).unwrap(),
            ],
            CostSpec::lp(2.0),
            4,
        )
        .unwrap();
        let a = Point::new(vec![0.5, -0.2, 0.9]).unwrap();
        let b = Point::new(vec![0.5, -0.2, 123.0]).unwrap();
        let mut rng_a = RngStream::new(7, 0);
        let mut rng_b = RngStream::new(7, 0);
        let ya = t.transport(&a, &mut rng_a).unwrap().y;
        let yb = t.transport(&b, &mut rng_b).unwrap().y;
        assert_eq!(ya[0].to_bits(), yb[0].to_bits());
        assert_eq!(ya[1].to_bits(), yb[1].to_bits());
    }

    #[test]
    fn set_transport_membership_and_query_budget() {
        let n = 4;
        let eps = 0.2;
        let k = 10;
        let tau = norm_ppf(1.0 - eps).unwrap();
        let t = set_transport(
            gaussians(n),
            Box::new(HalfspaceOracle::axis(n, 0, tau).unwrap()),
            CostSpec::lp(2.0),
            k,
            eps,
        )
        .unwrap();
        let mut rng = RngStream::new(77, 0);
        let src = Dist1D::standard_gaussian();
        let reps = 200;
        let mut queries = 0.0;
        for _ in 0..reps {
            let x = Point::new((0..n).map(|_| src.sample(&mut rng)).collect()).unwrap();
            let rec = t.transport(&x, &mut rng).unwrap();
            assert!(rec.y[0] >= tau, "output {:?} escaped the halfspace", rec.y);
            queries += rec.ledger.membership_queries as f64;
        }
        let mean = queries / reps as f64;
        let budget = k as f64 * n as f64 / eps;
        assert!(mean <= budget, "mean queries {mean} over budget {budget}");
        // Sharper accounting: only the first round pays the 1/eps rejection
        // factor, later rounds keep the accepted coordinate in the prefix.
        let sharp = k as f64 * (1.0 / eps + (n - 1) as f64);
        assert!((mean - sharp).abs() < 10.0, "mean queries {mean}, sharp estimate {sharp}");
    }

    #[test]
    fn composition_junction_checks() {
        let identity_stage = || {
            OnlineTransporter::product_to_product(gaussians(2), gaussians(2), CostSpec::lp(2.0), 3)
                .unwrap()
                .with_shortcut(Shortcut::both())
                .unwrap()
        };
        let composed = compose(Arc::new(identity_stage()), Arc::new(identity_stage())).unwrap();
        let x = Point::new(vec![0.25, -1.5]).unwrap();
        let mut rng = RngStream::new(5, 0);
        let rec = composed.apply(&x, &mut rng).unwrap();
        assert_eq!(rec.output, x);
        assert_eq!(rec.end_to_end.total, 0.0);
        assert_eq!(rec.stages.len(), 2);

        let shifted = OnlineTransporter::product_to_product(
            vec![Dist1D::gaussian(1.0, 1.0).unwrap(); 2],
            gaussians(2),
            CostSpec::lp(2.0),
            3,
        )
        .unwrap();
        let err = compose(Arc::new(identity_stage()), Arc::new(shifted)).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));

        let other_cost = OnlineTransporter::product_to_product(gaussians(2), gaussians(2), CostSpec::lp(1.0), 3)
            .unwrap();
        let err = compose(Arc::new(identity_stage()), Arc::new(other_cost)).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
    }

    #[test]
    fn set_to_set_composition() {
        let n = 2;
        let marginals = gaussians(n);
        let tau_s = norm_ppf(0.6).unwrap();
        let tau_t = norm_ppf(0.7).unwrap();
        let b_s = set_transport(
            marginals.clone(),
            Box::new(HalfspaceOracle::axis(n, 0, tau_s).unwrap()),
            CostSpec::lp(2.0),
            8,
            0.4,
        )
        .unwrap()
        .with_direction(Direction::Inverse);
        let a_t = set_transport(
            marginals.clone(),
            Box::new(HalfspaceOracle::axis(n, 1, tau_t).unwrap()),
            CostSpec::lp(2.0),
            8,
            0.3,
        )
        .unwrap();
        let composed = compose(Arc::new(b_s), Arc::new(a_t)).unwrap();

        let sampler = conditioned_sampler(
            Box::new(product_sampler(marginals).unwrap()),
            Box::new(HalfspaceOracle::axis(n, 0, tau_s).unwrap()),
            0.4,
        )
        .unwrap();
        let mut rng = RngStream::new(55, 0);
        for _ in 0..50 {
            let (y, _) = full_sample(&sampler, &mut rng).unwrap();
            let rec = composed.apply(&y, &mut rng).unwrap();
            assert!(rec.output[1] >= tau_t);
            assert!(rec.end_to_end.total.is_finite());
        }
    }

    #[test]
    fn concentrate_full_space_stays_close() {
        let mut rng = RngStream::new(91, 0);
        let mut distances = Vec::new();
        for _ in 0..40 {
            let (y, d) = concentrate(
                gaussians(1),
                Box::new(FullSpace),
                CostSpec::lp(2.0),
                400,
                1.0,
                &Point::new(vec![0.3]).unwrap(),
                &mut rng,
            )
            .unwrap();
            assert_eq!(y.dim(), 1);
            assert!(d >= 0.0);
            distances.push(d);
        }
        distances.sort_by(f64::total_cmp);
        assert!(distances[20] < 0.5, "median distance {}", distances[20]);
    }

    #[test]
    fn concentrate_halfspace_membership() {
        let tau = norm_ppf(0.7).unwrap();
        let mut rng = RngStream::new(92, 0);
        let src = Dist1D::standard_gaussian();
        for _ in 0..30 {
            let x = Point::new(vec![src.sample(&mut rng), src.sample(&mut rng)]).unwrap();
            let (y, d) = concentrate(
                gaussians(2),
                Box::new(HalfspaceOracle::axis(2, 0, tau).unwrap()),
                CostSpec::lp(2.0),
                50,
                0.3,
                &x,
                &mut rng,
            )
            .unwrap();
            assert!(y[0] >= tau);
            assert!(d >= 0.0);
        }
    }

    #[test]
    fn budget_exhaustion_propagates() {
        struct Never;
        impl MembershipOracle for Never {
            fn contains(&self, _point: &[f64]) -> Result<bool> {
                Ok(false)
            }
        }
        let t = set_transport(gaussians(2), Box::new(Never), CostSpec::lp(2.0), 2, 0.5).unwrap();
        let mut rng = RngStream::new(8, 0);
        let err = t.transport(&Point::new(vec![0.0, 0.0]).unwrap(), &mut rng).unwrap_err();
        assert!(matches!(err, Error::BudgetExhausted { .. }));
    }

    #[test]
    fn config_build_and_roundtrip() {
        let json = r#"{
            "n": 2,
            "k": 3,
            "p": 2.0,
            "cost": {"kind": "abs_pow", "exponent": 2.0},
            "source_marginals": [
                {"kind": "gaussian", "mean": 0.0, "stddev": 1.0},
                {"kind": "gaussian", "mean": 0.0, "stddev": 1.0}
            ],
            "target": {
                "kind": "conditioned",
                "base": {"kind": "product", "marginals": [
                    {"kind": "gaussian", "mean": 0.0, "stddev": 1.0},
                    {"kind": "gaussian", "mean": 0.0, "stddev": 1.0}
                ]},
                "oracle": {"kind": "upper_tail", "axis": 0, "epsilon": 0.5}
            },
            "epsilon_hint": 0.5
        }"#;
        let cfg: TransporterConfig = serde_json::from_str(json).unwrap();
        let roundtrip: TransporterConfig =
            serde_json::from_value(serde_json::to_value(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, roundtrip);

        let t = cfg.build().unwrap();
        assert!(t.cost().metric, "standard family is attested automatically");
        let mut rng = RngStream::new(31, 0);
        let rec = t.transport(&Point::new(vec![0.4, -0.7]).unwrap(), &mut rng).unwrap();
        assert!(rec.y[0] >= 0.0, "upper-tail target at epsilon 0.5 keeps axis 0 non-negative");

        match t.target_descriptor() {
            DistDescriptor::Conditioned { oracle, .. } => assert!(oracle.contains("halfspace")),
            other => panic!("unexpected descriptor {other:?}"),
        }
    }

    #[test]
    fn config_metric_attestation_gate() {
        let base = r#"{
            "n": 1,
            "k": 2,
            "p": 2.0,
            "cost": {"kind": "abs_pow", "exponent": 1.0},
            "source_marginals": [{"kind": "gaussian", "mean": 0.0, "stddev": 1.0}],
            "target": {"kind": "product", "marginals": [{"kind": "gaussian", "mean": 0.0, "stddev": 1.0}]}
        }"#;
        let cfg: TransporterConfig = serde_json::from_str(base).unwrap();
        assert!(matches!(cfg.build().unwrap_err(), Error::Configuration(_)));

        let mut attested: serde_json::Value = serde_json::from_str(base).unwrap();
        attested["metric"] = serde_json::Value::Bool(true);
        let cfg: TransporterConfig = serde_json::from_value(attested).unwrap();
        assert!(cfg.build().is_ok());
    }

    #[test]
    fn config_dimension_checks() {
        let json = r#"{
            "n": 2,
            "k": 2,
            "p": 2.0,
            "cost": {"kind": "abs_pow", "exponent": 2.0},
            "source_marginals": [{"kind": "gaussian", "mean": 0.0, "stddev": 1.0}],
            "target": {"kind": "product", "marginals": [
                {"kind": "gaussian", "mean": 0.0, "stddev": 1.0},
                {"kind": "gaussian", "mean": 0.0, "stddev": 1.0}
            ]}
        }"#;
        let cfg: TransporterConfig = serde_json::from_str(json).unwrap();
        assert!(matches!(cfg.build().unwrap_err(), Error::DimensionMismatch { expected: 2, got: 1 }));
    }
}
