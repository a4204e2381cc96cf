//! Sequential samplers: coordinate-by-coordinate access to a target
//! distribution through conditional draws, with cost accounting.
//!
//! A sequential sampler answers "draw coordinate `i` given this length-`i`
//! prefix" queries, each answer independent of previous ones. The
//! conditioned sampler turns any base sampler plus a membership oracle into
//! a sampler for the conditional distribution by rejection: complete the
//! prefix, test the full point, keep the next coordinate on success.

use std::io::{BufRead, BufReader, Write as IoWrite};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::dist1d::Dist1D;
use crate::error::{Error, Result};
use crate::oracle::DiscreteSpace;
use crate::point::Point;
use crate::rng::RngStream;

/// Query and cost counters for one sampling session.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CostLedger {
    /// Accumulated declared sampling cost over all base-sampler calls.
    pub total_sampler_cost: f64,
    /// Base-sampler calls, indexed by the round they queried.
    pub calls_per_round: Vec<u64>,
    /// Membership-oracle invocations.
    pub membership_queries: u64,
}

impl CostLedger {
    pub fn new(n: usize) -> Self {
        CostLedger { total_sampler_cost: 0.0, calls_per_round: vec![0; n], membership_queries: 0 }
    }

    pub fn record_call(&mut self, round: usize, cost: f64) {
        if round >= self.calls_per_round.len() {
            self.calls_per_round.resize(round + 1, 0);
        }
        self.calls_per_round[round] += 1;
        self.total_sampler_cost += cost;
    }

    pub fn total_calls(&self) -> u64 {
        self.calls_per_round.iter().sum()
    }

    pub fn merge(&mut self, other: &CostLedger) {
        if other.calls_per_round.len() > self.calls_per_round.len() {
            self.calls_per_round.resize(other.calls_per_round.len(), 0);
        }
        for (mine, theirs) in self.calls_per_round.iter_mut().zip(&other.calls_per_round) {
            *mine += theirs;
        }
        self.total_sampler_cost += other.total_sampler_cost;
        self.membership_queries += other.membership_queries;
    }
}

/// Conditional coordinate-by-coordinate sampling access to a distribution.
///
/// `next` must return an independent draw from `nu_i | prefix` whenever the
/// prefix is in the support, and `None` (bottom) otherwise. Implementations
/// are immutable; all per-session state lives in the caller's rng and
/// ledger, so one sampler value can serve concurrent sessions.
pub trait SequentialSampler: Send + Sync {
    fn dim(&self) -> usize;

    /// Draw coordinate `prefix.len()` given the prefix, or `None` when the
    /// prefix is outside the support.
    fn next(&self, prefix: &[f64], rng: &mut RngStream, ledger: &mut CostLedger) -> Result<Option<f64>>;

    /// Declared cost of one round-`round` call; call counting by default.
    fn round_cost(&self, round: usize) -> f64 {
        let _ = round;
        1.0
    }

    /// The exact conditional distribution of coordinate `prefix.len()` given
    /// the prefix, when the sampler can produce it in closed form. `None`
    /// means callers must fall back on empirical draws via [`next`].
    ///
    /// [`next`]: SequentialSampler::next
    fn conditional(&self, prefix: &[f64]) -> Result<Option<Dist1D>> {
        let _ = prefix;
        Ok(None)
    }
}

/// Membership test for an event; deterministic per point.
pub trait MembershipOracle: Send + Sync {
    fn contains(&self, point: &[f64]) -> Result<bool>;

    /// Declarative label used when comparing declared distributions.
    fn describe(&self) -> String {
        "membership oracle".into()
    }
}

///// A sampler for a product distribution: round `i` draws `marginals[i]`,
/// whatever the prefix values are.
pub struct ProductSampler {
    marginals: Vec<Dist1D>,
    round_costs: Option<Vec<f64>>,
}

pub fn product_sampler(marginals: Vec<Dist1D>) -> Result<ProductSampler> {
    if marginals.is_empty() {
        return Err(Error::RejectedInput("product sampler needs at least one marginal".into()));
    }
    for (i, m) in marginals.iter().enumerate() {
        if !m.capabilities().can_sample {
            return Err(Error::UnsupportedCapability(format!("marginal {i} is not samplable")));
        }
    }
    Ok(ProductSampler { marginals, round_costs: None })
}

impl ProductSampler {
    /// Declares an explicit per-round cost model instead of call counting.
    pub fn with_round_costs(mut self, costs: Vec<f64>) -> Result<Self> {
        if costs.len() != self.marginals.len() {
            return Err(Error::RejectedInput("one round cost per marginal required".into()));
        }
        if costs.iter().any(|&c| !c.is_finite() || c < 0.0) {
            return Err(Error::RejectedInput("round costs must be finite and non-negative".into()));
        }
        self.round_costs = Some(costs);
        Ok(self)
    }

    pub fn marginal(&self, i: usize) -> &Dist1D {
        &self.marginals[i]
    }
}

impl SequentialSampler for ProductSampler {
    fn dim(&self) -> usize {
        self.marginals.len()
    }

    fn next(&self, prefix: &[f64], rng: &mut RngStream, ledger: &mut CostLedger) -> Result<Option<f64>> {
        let i = prefix.len();
        if i >= self.marginals.len() {
            return Err(Error::RejectedInput(format!(
                "prefix of length {i} exhausts the {}-dimensional sampler",
                self.marginals.len()
            )));
        }
        ledger.record_call(i, self.round_cost(i));
        Ok(Some(self.marginals[i].sample(rng)))
    }

    fn round_cost(&self, round: usize) -> f64 {
        self.round_costs.as_ref().map_or(1.0, |c| c[round])
    }

    fn conditional(&self, prefix: &[f64]) -> Result<Option<Dist1D>> {
        let i = prefix.len();
        if i >= self.marginals.len() {
            return Err(Error::RejectedInput(format!(
                "prefix of length {i} exhausts the {}-dimensional sampler",
                self.marginals.len()
            )));
        }
        Ok(Some(self.marginals[i].clone()))
    }
}

/// Exact conditional sampling from an explicit probability table.
pub struct FiniteSampler {
    space: DiscreteSpace,
}

pub fn finite_sampler(space: DiscreteSpace) -> FiniteSampler {
    FiniteSampler { space }
}

impl FiniteSampler {
    pub fn space(&self) -> &DiscreteSpace {
        &self.space
    }

    /// Translates prefix values to alphabet indices; `None` when a value is
    /// not a letter of its coordinate's alphabet.
    fn prefix_code(&self, prefix: &[f64]) -> Option<usize> {
        let mut code = 0usize;
        for (j, &v) in prefix.iter().enumerate() {
            let a = self.space.alphabet(j).iter().position(|&w| w == v)?;
            code = code * self.space.size(j) + a;
        }
        Some(code)
    }
}

impl SequentialSampler for FiniteSampler {
    fn dim(&self) -> usize {
        self.space.n()
    }

    fn next(&self, prefix: &[f64], rng: &mut RngStream, ledger: &mut CostLedger) -> Result<Option<f64>> {
        let i = prefix.len();
        if i >= self.space.n() {
            return Err(Error::RejectedInput(format!(
                "prefix of length {i} exhausts the {}-dimensional sampler",
                self.space.n()
            )));
        }
        ledger.record_call(i, self.round_cost(i));
        let code = match self.prefix_code(prefix) {
            Some(c) => c,
            None => return Ok(None),
        };
        let cond = match self.space.conditional(i, code) {
            Some(c) => c,
            None => return Ok(None),
        };
        let u = rng.unit();
        let mut acc = 0.0;
        let mut pick = cond.len() - 1;
        for (a, &m) in cond.iter().enumerate() {
            acc += m;
            if u < acc {
                pick = a;
                break;
            }
        }
        Ok(Some(self.space.alphabet(i)[pick]))
    }

    fn conditional(&self, prefix: &[f64]) -> Result<Option<Dist1D>> {
        let i = prefix.len();
        if i >= self.space.n() {
            return Err(Error::RejectedInput(format!(
                "prefix of length {i} exhausts the {}-dimensional sampler",
                self.space.n()
            )));
        }
        let code = match self.prefix_code(prefix) {
            Some(c) => c,
            None => return Ok(None),
        };
        let cond = match self.space.conditional(i, code) {
            Some(c) => c,
            None => return Ok(None),
        };
        let atoms = self
            .space
            .alphabet(i)
            .iter()
            .copied()
            .zip(cond.iter().copied())
            .filter(|&(_, m)| m > 0.0)
            .collect();
        Ok(Some(Dist1D::finite(atoms)?))
    }
}

/// Rejection-sampling conditioner: samples `base | S` by completing the
/// prefix with fresh base draws and testing the full point against the
/// membership oracle.
pub struct ConditionedSampler {
    base: Box<dyn SequentialSampler>,
    oracle: Box<dyn MembershipOracle>,
    trial_cap: usize,
}

/// Default per-round trial cap for an acceptance probability around
/// `epsilon_hint`: spurious exhaustion has probability about `e^{-50}`.
pub fn default_trial_cap(epsilon_hint: f64) -> usize {
    (50.0 / epsilon_hint).ceil() as usize
}

pub fn conditioned_sampler(
    base: Box<dyn SequentialSampler>,
    oracle: Box<dyn MembershipOracle>,
    epsilon_hint: f64,
) -> Result<ConditionedSampler> {
    if !(epsilon_hint > 0.0 && epsilon_hint <= 1.0) {
        return Err(Error::RejectedInput(format!(
            "epsilon hint must be a probability in (0, 1], got {epsilon_hint}"
        )));
    }
    Ok(ConditionedSampler { base, oracle, trial_cap: default_trial_cap(epsilon_hint) })
}

impl ConditionedSampler {
    pub fn with_trial_cap(mut self, cap: usize) -> Result<Self> {
        if cap == 0 {
            return Err(Error::RejectedInput("trial cap must be positive".into()));
        }
        self.trial_cap = cap;
        Ok(self)
    }

    pub fn trial_cap(&self) -> usize {
        self.trial_cap
    }
}

impl SequentialSampler for ConditionedSampler {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn next(&self, prefix: &[f64], rng: &mut RngStream, ledger: &mut CostLedger) -> Result<Option<f64>> {
        let n = self.base.dim();
        let i = prefix.len();
        if i >= n {
            return Err(Error::RejectedInput(format!(
                "prefix of length {i} exhausts the {n}-dimensional sampler"
            )));
        }
        let mut full = Vec::with_capacity(n);
        for trial in 1..=self.trial_cap {
            full.clear();
            full.extend_from_slice(prefix);
            for j in i..n {
                match self.base.next(&full, rng, ledger)? {
                    Some(v) => full.push(v),
                    None if j == i => return Ok(None),
                    None => {
                        return Err(Error::internal(format!(
                            "base sampler rejected its own round-{j} prefix"
                        )))
                    }
                }
            }
            ledger.membership_queries += 1;
            if self.oracle.contains(&full)? {
                return Ok(Some(full[i]));
            }
            let _ = trial;
        }
        Err(Error::BudgetExhausted { trials: self.trial_cap, round: i + 1 })
    }
}

/// Runs a sampler from the empty prefix to a full point.
pub fn full_sample(s: &dyn SequentialSampler, rng: &mut RngStream) -> Result<(Point, CostLedger)> {
    let n = s.dim();
    let mut ledger = CostLedger::new(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        match s.next(&y, rng, &mut ledger)? {
            Some(v) => y.push(v),
            None => {
                return Err(Error::internal(format!(
                    "sampler rejected its own length-{} prefix",
                    y.len()
                )))
            }
        }
    }
    Ok((Point::new(y)?, ledger))
}

/// The whole space; conditioning on it is a no-op.
pub struct FullSpace;

impl MembershipOracle for FullSpace {
    fn contains(&self, _point: &[f64]) -> Result<bool> {
        Ok(true)
    }

    fn describe(&self) -> String {
        "full-space".into()
    }
}

/// The halfspace `{x : <normal, x> >= threshold}`.
pub struct HalfspaceOracle {
    normal: Vec<f64>,
    threshold: f64,
}

impl HalfspaceOracle {
    pub fn new(normal: Vec<f64>, threshold: f64) -> Result<Self> {
        if normal.is_empty() || normal.iter().any(|v| !v.is_finite()) || !threshold.is_finite() {
            return Err(Error::RejectedInput("halfspace needs finite normal and threshold".into()));
        }
        if normal.iter().all(|&v| v == 0.0) {
            return Err(Error::RejectedInput("halfspace normal must be non-zero".into()));
        }
        Ok(HalfspaceOracle { normal, threshold })
    }

    /// `{x : x_axis >= threshold}` in `n` dimensions.
    pub fn axis(n: usize, axis: usize, threshold: f64) -> Result<Self> {
        if axis >= n {
            return Err(Error::RejectedInput(format!("axis {axis} out of range for dimension {n}")));
        }
        let mut normal = vec![0.0; n];
        normal[axis] = 1.0;
        Self::new(normal, threshold)
    }

    /// The diagonal halfspace `{x : sum_i x_i / sqrt(n) >= threshold}`.
    pub fn diagonal(n: usize, threshold: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::RejectedInput("dimension must be positive".into()));
        }
        let c = 1.0 / (n as f64).sqrt();
        Self::new(vec![c; n], threshold)
    }
}

impl MembershipOracle for HalfspaceOracle {
    fn contains(&self, point: &[f64]) -> Result<bool> {
        if point.len() != self.normal.len() {
            return Err(Error::DimensionMismatch { expected: self.normal.len(), got: point.len() });
        }
        let dot: f64 = self.normal.iter().zip(point).map(|(a, b)| a * b).sum();
        Ok(dot >= self.threshold)
    }

    fn describe(&self) -> String {
        format!("halfspace(normal={:?}, threshold={})", self.normal, self.threshold)
    }
}

/// Wrapper counting oracle invocations, for cross-checking ledgers.
pub struct CountingOracle<O> {
    inner: O,
    count: AtomicU64,
}

impl<O: MembershipOracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        CountingOracle { inner, count: AtomicU64::new(0) }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }
}

impl<O: MembershipOracle> MembershipOracle for CountingOracle<O> {
    fn contains(&self, point: &[f64]) -> Result<bool> {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.contains(point)
    }

    fn describe(&self) -> String {
        self.inner.describe()
    }
}

impl<O: MembershipOracle + ?Sized> MembershipOracle for std::sync::Arc<O> {
    fn contains(&self, point: &[f64]) -> Result<bool> {
        (**self).contains(point)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// Membership served by a child process: each query is one line of
/// space-separated coordinates on its stdin, each reply a line holding
/// `1` or `0`.
pub struct ProcessOracle {
    io: Mutex<ProcessIo>,
    label: String,
}

struct ProcessIo {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ProcessOracle {
    pub fn spawn(program: &str, args: &[&str]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child.stdin.take().ok_or_else(|| Error::internal("child stdin unavailable"))?;
        let stdout = child.stdout.take().ok_or_else(|| Error::internal("child stdout unavailable"))?;
        Ok(ProcessOracle {
            io: Mutex::new(ProcessIo { child, stdin, stdout: BufReader::new(stdout) }),
            label: format!("process({program} {})", args.join(" ")),
        })
    }
}

impl MembershipOracle for ProcessOracle {
    fn contains(&self, point: &[f64]) -> Result<bool> {
        let mut io = self.io.lock().map_err(|_| Error::internal("process oracle poisoned"))?;
        let mut line = String::new();
        for (i, v) in point.iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push_str(&format!("{v}"));
        }
        line.push('\n');
        io.stdin.write_all(line.as_bytes())?;
        io.stdin.flush()?;
        let mut reply = String::new();
        if io.stdout.read_line(&mut reply)? == 0 {
            return Err(Error::internal("membership process closed its output"));
        }
        match reply.trim() {
            "1" => Ok(true),
            "0" => Ok(false),
            other => Err(Error::internal(format!("membership process replied {other:?}"))),
        }
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

impl Drop for ProcessOracle {
    fn drop(&mut self) {
        if let Ok(io) = self.io.get_mut() {
            let _ = io.child.kill();
            let _ = io.child.wait();
        }
    }
}
