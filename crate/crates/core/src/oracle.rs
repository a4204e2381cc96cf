//! Exact oracles on small finite product spaces.
//!
//! Everything here is brute force: distributions are explicit probability
//! tables over a product alphabet, optimal transport is a transportation
//! network solve, and the online optima come from a layered linear program
//! over prefix-pair mass variables. These routines are the ground truth the
//! sampling-based transporter is tested against, so they favor exactness and
//! small scale over speed.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::cost::{CoordCost, CostSpec};
use crate::error::{Error, Result};
use crate::solvers;

/// Hard cap on explicit table sizes.
pub const MAX_OUTCOMES: usize = 1 << 20;
/// Cap on the product |X| * |Y| for the offline transport solve.
pub const MAX_JOINT_OUTCOMES: usize = 1_000_000;
/// Cap on |X| * |Y| for the online-coupling program.
pub const MAX_ONLINE_COUPLING: usize = 1 << 16;
/// Cap on |X| * |Y| for the dense online-transport LP.
pub const MAX_ONLINE_TRANSPORT: usize = 1 << 10;

const MASS_TOL: f64 = 1e-12;
const COUPLING_TOL: f64 = 1e-10;

/// A distribution over a finite product alphabet, stored as an explicit
/// probability table in row-major (lexicographic, last coordinate fastest)
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpaceRepr", into = "SpaceRepr")]
pub struct DiscreteSpace {
    alphabets: Vec<Vec<f64>>,
    table: Vec<f64>,
    strides: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SpaceRepr {
    alphabets: Vec<Vec<f64>>,
    table: Vec<f64>,
}

impl TryFrom<SpaceRepr> for DiscreteSpace {
    type Error = Error;
    fn try_from(r: SpaceRepr) -> Result<Self> {
        DiscreteSpace::new(r.alphabets, r.table)
    }
}

impl From<DiscreteSpace> for SpaceRepr {
    fn from(s: DiscreteSpace) -> Self {
        SpaceRepr { alphabets: s.alphabets, table: s.table }
    }
}

impl DiscreteSpace {
    pub fn new(alphabets: Vec<Vec<f64>>, table: Vec<f64>) -> Result<Self> {
        if alphabets.is_empty() {
            return Err(Error::RejectedInput("discrete space needs at least one coordinate".into()));
        }
        let mut outcomes = 1usize;
        for (i, alpha) in alphabets.iter().enumerate() {
            if alpha.is_empty() {
                return Err(Error::RejectedInput(format!("alphabet {i} is empty")));
            }
            if alpha.iter().any(|v| !v.is_finite()) {
                return Err(Error::RejectedInput(format!("alphabet {i} has a non-finite value")));
            }
            for (a, &v) in alpha.iter().enumerate() {
                if alpha[..a].contains(&v) {
                    return Err(Error::RejectedInput(format!("alphabet {i} repeats the value {v}")));
                }
            }
            outcomes = outcomes
                .checked_mul(alpha.len())
                .filter(|&o| o <= MAX_OUTCOMES)
                .ok_or_else(|| Error::RejectedInput(format!("product alphabet exceeds {MAX_OUTCOMES} outcomes")))?;
        }
        if table.len() != outcomes {
            return Err(Error::RejectedInput(format!(
                "table length {} does not match the {outcomes}-outcome product alphabet",
                table.len()
            )));
        }
        if table.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(Error::RejectedInput("probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = table.iter().sum();
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(Error::RejectedInput(format!("total mass {sum} is not 1 within {MASS_TOL}")));
        }
        let n = alphabets.len();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * alphabets[i + 1].len();
        }
        Ok(DiscreteSpace { alphabets, table, strides })
    }

    /// Uniform distribution over the given product alphabet.
    pub fn uniform(alphabets: Vec<Vec<f64>>) -> Result<Self> {
        let outcomes: usize = alphabets.iter().map(|a| a.len().max(1)).product();
        let mass = 1.0 / outcomes as f64;
        // dyadic sizes give an exactly-1 sum; otherwise we are within MASS_TOL
        Self::new(alphabets, vec![mass; outcomes])
    }

    /// Product distribution with the given per-coordinate alphabets and
    /// marginal masses.
    pub fn product(alphabets: Vec<Vec<f64>>, marginals: Vec<Vec<f64>>) -> Result<Self> {
        if marginals.len() != alphabets.len() {
            return Err(Error::RejectedInput("one marginal per coordinate required".into()));
        }
        for (alpha, marg) in alphabets.iter().zip(&marginals) {
            if alpha.len() != marg.len() {
                return Err(Error::RejectedInput("marginal length does not match its alphabet".into()));
            }
        }
        let outcomes: usize = alphabets.iter().map(|a| a.len()).product();
        let n = alphabets.len();
        let mut table = vec![0.0; outcomes];
        for (flat, entry) in table.iter_mut().enumerate() {
            let mut rest = flat;
            let mut m = 1.0;
            for i in (0..n).rev() {
                let size = alphabets[i].len();
                m *= marginals[i][rest % size];
                rest /= size;
            }
            *entry = m;
        }
        let sum: f64 = table.iter().sum();
        if sum > 0.0 {
            for entry in table.iter_mut() {
                *entry /= sum;
            }
        }
        Self::new(alphabets, table)
    }

    pub fn n(&self) -> usize {
        self.alphabets.len()
    }

    pub fn alphabet(&self, i: usize) -> &[f64] {
        &self.alphabets[i]
    }

    pub fn size(&self, i: usize) -> usize {
        self.alphabets[i].len()
    }

    pub fn outcomes(&self) -> usize {
        self.table.len()
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn mass(&self, flat: usize) -> f64 {
        self.table[flat]
    }

    /// Number of completions of a length-`len` prefix.
    fn tail(&self, len: usize) -> usize {
        if len == 0 {
            self.table.len()
        } else {
            self.strides[len - 1]
        }
    }

    /// Mixed-radix code of the length-`len` prefix of a flat outcome.
    fn prefix_of(&self, flat: usize, len: usize) -> usize {
        flat / self.tail(len)
    }

    /// Coordinate values of a flat outcome.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            out.push(self.alphabets[i][(flat / self.strides[i]) % self.size(i)]);
        }
        out
    }

    /// Total mass of outcomes extending the prefix with the given code.
    pub fn prefix_mass(&self, len: usize, code: usize) -> f64 {
        let tail = self.tail(len);
        let base = code * tail;
        self.table[base..base + tail].iter().sum()
    }

    /// Conditional distribution of coordinate `len` given a prefix, or
    /// `None` when the prefix has zero mass.
    pub fn conditional(&self, len: usize, code: usize) -> Option<Vec<f64>> {
        let total = self.prefix_mass(len, code);
        if total <= 0.0 {
            return None;
        }
        let size = self.size(len);
        let mut cond = Vec::with_capacity(size);
        for a in 0..size {
            cond.push(self.prefix_mass(len + 1, code * size + a) / total);
        }
        Some(cond)
    }

    /// Marginal of coordinate `i`.
    pub fn marginal(&self, i: usize) -> Vec<f64> {
        let size = self.size(i);
        let mut out = vec![0.0; size];
        for (flat, &m) in self.table.iter().enumerate() {
            out[(flat / self.strides[i]) % size] += m;
        }
        out
    }

    /// Whether the table factorizes into its per-coordinate marginals.
    pub fn is_product(&self, tol: f64) -> bool {
        let margs: Vec<Vec<f64>> = (0..self.n()).map(|i| self.marginal(i)).collect();
        self.table.iter().enumerate().all(|(flat, &m)| {
            let mut prod = 1.0;
            for (i, marg) in margs.iter().enumerate() {
                prod *= marg[(flat / self.strides[i]) % self.size(i)];
            }
            (m - prod).abs() <= tol
        })
    }

    /// Positive-mass prefix codes per prefix length `0..=n`.
    fn support_prefixes(&self) -> Vec<Vec<usize>> {
        let mut levels = Vec::with_capacity(self.n() + 1);
        levels.push(vec![0usize]);
        for len in 0..self.n() {
            let size = self.size(len);
            let mut next = Vec::new();
            for &code in &levels[len] {
                for a in 0..size {
                    let child = code * size + a;
                    if self.prefix_mass(len + 1, child) > 0.0 {
                        next.push(child);
                    }
                }
            }
            levels.push(next);
        }
        levels
    }
}

/// An explicit coupling between two discrete spaces; `mass[xf * |Y| + yf]`
/// is the joint probability of the flat outcome pair.
#[derive(Debug, Clone)]
pub struct DiscreteCoupling {
    x: DiscreteSpace,
    y: DiscreteSpace,
    mass: Vec<f64>,
}

impl DiscreteCoupling {
    pub fn new(x: DiscreteSpace, y: DiscreteSpace, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != x.outcomes() * y.outcomes() {
            return Err(Error::RejectedInput(format!(
                "joint table length {} does not match {} x {} outcomes",
                mass.len(),
                x.outcomes(),
                y.outcomes()
            )));
        }
        if mass.iter().any(|&m| !m.is_finite() || m < 0.0) {
            return Err(Error::RejectedInput("joint masses must be finite and non-negative".into()));
        }
        let ny = y.outcomes();
        for (xf, &target) in x.table().iter().enumerate() {
            let row: f64 = mass[xf * ny..(xf + 1) * ny].iter().sum();
            if (row - target).abs() > COUPLING_TOL {
                return Err(Error::RejectedInput(format!(
                    "row {xf} sums to {row}, source mass is {target}"
                )));
            }
        }
        for (yf, &target) in y.table().iter().enumerate() {
            let col: f64 = mass.iter().skip(yf).step_by(ny).sum();
            if (col - target).abs() > COUPLING_TOL {
                return Err(Error::RejectedInput(format!(
                    "column {yf} sums to {col}, target mass is {target}"
                )));
            }
        }
        Ok(DiscreteCoupling { x, y, mass })
    }

    pub fn source(&self) -> &DiscreteSpace {
        &self.x
    }

    pub fn target(&self) -> &DiscreteSpace {
        &self.y
    }

    pub fn mass(&self, xf: usize, yf: usize) -> f64 {
        self.mass[xf * self.y.outcomes() + yf]
    }

    /// Expected linearized cost `E[sum_i c_i(x_i, y_i)]` under the coupling.
    pub fn cost(&self, cost: &CostSpec) -> Result<f64> {
        check_pair_dims(&self.x, &self.y, cost)?;
        let n = self.x.n();
        let ny = self.y.outcomes();
        let mut total = 0.0;
        for (idx, &m) in self.mass.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let xp = self.x.point(idx / ny);
            let yp = self.y.point(idx % ny);
            for i in 0..n {
                total += m * cost.coord(i).eval(xp[i], yp[i])?;
            }
        }
        Ok(total)
    }
}

fn check_pair_dims(mu: &DiscreteSpace, nu: &DiscreteSpace, cost: &CostSpec) -> Result<()> {
    if mu.n() != nu.n() {
        return Err(Error::DimensionMismatch { expected: mu.n(), got: nu.n() });
    }
    cost.check_dim(mu.n())
}

/// Pairwise coordinate costs for two alphabets.
fn pair_costs(cost: &CoordCost, xs: &[f64], ys: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut m = vec![vec![0.0; ys.len()]; xs.len()];
    for (i, &a) in xs.iter().enumerate() {
        for (j, &b) in ys.iter().enumerate() {
            m[i][j] = cost.eval(a, b)?;
        }
    }
    Ok(m)
}

/// Exact (offline) optimal transport between two explicit distributions.
///
/// Returns the optimal expected cost and an optimal coupling. Solved as a
/// transportation network over the positive-mass atoms.
pub fn exact_ot(mu: &DiscreteSpace, nu: &DiscreteSpace, cost: &CostSpec) -> Result<(f64, DiscreteCoupling)> {
    check_pair_dims(mu, nu, cost)?;
    if mu.outcomes().saturating_mul(nu.outcomes()) > MAX_JOINT_OUTCOMES {
        return Err(Error::RejectedInput(format!(
            "joint outcome count {} x {} exceeds {MAX_JOINT_OUTCOMES}",
            mu.outcomes(),
            nu.outcomes()
        )));
    }
    let n = mu.n();
    let per_coord: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| pair_costs(cost.coord(i), mu.alphabet(i), nu.alphabet(i)))
        .collect::<Result<_>>()?;

    let sx: Vec<usize> = (0..mu.outcomes()).filter(|&f| mu.mass(f) > 0.0).collect();
    let sy: Vec<usize> = (0..nu.outcomes()).filter(|&f| nu.mass(f) > 0.0).collect();
    let a: Vec<f64> = sx.iter().map(|&f| mu.mass(f)).collect();
    let b: Vec<f64> = sy.iter().map(|&f| nu.mass(f)).collect();

    let pair_total = |xf: usize, yf: usize| -> f64 {
        let mut t = 0.0;
        for (i, table) in per_coord.iter().enumerate() {
            let xi = (xf / mu.strides[i]) % mu.size(i);
            let yi = (yf / nu.strides[i]) % nu.size(i);
            t += table[xi][yi];
        }
        t
    };

    let (plan, total) = solvers::transportation(&a, &b, |i, j| pair_total(sx[i], sy[j]))?;
    let mut joint = vec![0.0; mu.outcomes() * nu.outcomes()];
    for (i, j, f) in plan {
        joint[sx[i] * nu.outcomes() + sy[j]] += f;
    }
    let coupling = DiscreteCoupling::new(mu.clone(), nu.clone(), joint)?;
    Ok((total, coupling))
}

/// The Delta function: the online-transport optimum from a product source.
///
/// `Delta(mu, nu) = E_{y ~ nu} sum_i T_{c_i}(mu_i, nu_i | y_{[i-1]})`,
/// computed by enumerating every positive-mass target prefix and solving the
/// per-round one-dimensional transport exactly.
pub fn delta_function(mu: &DiscreteSpace, nu: &DiscreteSpace, cost: &CostSpec) -> Result<f64> {
    check_pair_dims(mu, nu, cost)?;
    if !mu.is_product(1e-10) {
        return Err(Error::RejectedInput(
            "delta requires a product source distribution".into(),
        ));
    }
    let n = mu.n();
    let prefixes = nu.support_prefixes();
    let mut total = 0.0;
    for i in 0..n {
        let costs = pair_costs(cost.coord(i), mu.alphabet(i), nu.alphabet(i))?;
        let marg = mu.marginal(i);
        let size = nu.size(i);
        for &code in &prefixes[i] {
            let w = nu.prefix_mass(i, code);
            // raw masses on both sides sum to w, so the solve returns
            // w * T(mu_i, nu_i | prefix) directly
            let a: Vec<f64> = marg.iter().map(|&m| m * w).collect();
            let b: Vec<f64> = (0..size).map(|v| nu.prefix_mass(i + 1, code * size + v)).collect();
            let (_, value) = solvers::transportation(&a, &b, |r, c| costs[r][c])?;
            total += value;
        }
    }
    Ok(total)
}

/// The Lambda function of a coupling: the sum over rounds of the expected
/// optimal cost between the prefix-conditional coordinate marginals,
/// `Lambda(pi) = E_{z ~ pi} sum_i T_{c_i}(x_i | z_{[i-1]}, y_i | z_{[i-1]})`.
/// A lower bound on the coupling's cost, tight exactly for locally optimal
/// couplings.
pub fn lambda_function(pi: &DiscreteCoupling, cost: &CostSpec) -> Result<f64> {
    let x = pi.source();
    let y = pi.target();
    check_pair_dims(x, y, cost)?;
    let n = x.n();
    let ny = y.outcomes();
    let mut total = 0.0;
    for i in 0..n {
        let costs = pair_costs(cost.coord(i), x.alphabet(i), y.alphabet(i))?;
        let (sx, sy) = (x.size(i), y.size(i));
        // aggregate the joint (x_i, y_i) block per prefix pair
        let mut blocks: HashMap<(usize, usize), Vec<f64>> = HashMap::new();
        for (idx, &m) in pi.mass.iter().enumerate() {
            if m <= 0.0 {
                continue;
            }
            let (xf, yf) = (idx / ny, idx % ny);
            let key = (x.prefix_of(xf, i), y.prefix_of(yf, i));
            let a = (xf / x.strides[i]) % sx;
            let b = (yf / y.strides[i]) % sy;
            blocks.entry(key).or_insert_with(|| vec![0.0; sx * sy])[a * sy + b] += m;
        }
        for block in blocks.values() {
            let mut rows = vec![0.0; sx];
            let mut cols = vec![0.0; sy];
            for a in 0..sx {
                for b in 0..sy {
                    rows[a] += block[a * sy + b];
                    cols[b] += block[a * sy + b];
                }
            }
            // both sides sum to the prefix-pair mass, giving the weighted term
            let (_, value) = solvers::transportation(&rows, &cols, |r, c| costs[r][c])?;
            total += value;
        }
    }
    Ok(total)
}

/// Builds a greedy coupling: round by round, each prefix pair's conditional
/// coordinate marginals are coupled optimally. Returns its expected cost and
/// the coupling itself. The source need not be a product distribution; when
/// it is, every greedy coupling attains the Delta value.
pub fn greedy_coupling(mu: &DiscreteSpace, nu: &DiscreteSpace, cost: &CostSpec) -> Result<(f64, DiscreteCoupling)> {
    check_pair_dims(mu, nu, cost)?;
    if mu.outcomes().saturating_mul(nu.outcomes()) > MAX_JOINT_OUTCOMES {
        return Err(Error::RejectedInput(format!(
            "joint outcome count {} x {} exceeds {MAX_JOINT_OUTCOMES}",
            mu.outcomes(),
            nu.outcomes()
        )));
    }
    let n = mu.n();
    let mut per_coord = Vec::with_capacity(n);
    for i in 0..n {
        per_coord.push(pair_costs(cost.coord(i), mu.alphabet(i), nu.alphabet(i))?);
    }
    let mut joint = vec![0.0; mu.outcomes() * nu.outcomes()];
    let mut total = 0.0;
    // (prefix length, x prefix code, y prefix code, joint mass)
    let mut stack = vec![(0usize, 0usize, 0usize, 1.0f64)];
    while let Some((i, xc, yc, w)) = stack.pop() {
        if i == n {
            joint[xc * nu.outcomes() + yc] += w;
            continue;
        }
        let costs = &per_coord[i];
        let xcond = mu.conditional(i, xc).ok_or_else(|| Error::internal("zero-mass prefix reached"))?;
        let ycond = nu.conditional(i, yc).ok_or_else(|| Error::internal("zero-mass prefix reached"))?;
        let a: Vec<f64> = xcond.iter().map(|&m| m * w).collect();
        let b: Vec<f64> = ycond.iter().map(|&m| m * w).collect();
        let (plan, value) = solvers::transportation(&a, &b, |r, c| costs[r][c])?;
        total += value;
        for (r, c, f) in plan {
            stack.push((i + 1, xc * mu.size(i) + r, yc * nu.size(i) + c, f));
        }
    }
    let coupling = DiscreteCoupling::new(mu.clone(), nu.clone(), joint)?;
    Ok((total, coupling))
}

/// The optimal online-coupling cost `T^OnC`.
///
/// An online coupling must, at every reachable prefix pair, couple the
/// conditional next-coordinate marginals of the two sides. That constraint
/// set is a layered linear program over prefix-pair masses; its block
/// structure decomposes by prefix pair, so it is solved exactly by backward
/// induction, each block being a small transportation problem whose cost
/// matrix adds the optimal continuation values.
pub fn online_coupling_optimum(mu: &DiscreteSpace, nu: &DiscreteSpace, cost: &CostSpec) -> Result<f64> {
    check_pair_dims(mu, nu, cost)?;
    if mu.outcomes().saturating_mul(nu.outcomes()) > MAX_ONLINE_COUPLING {
        return Err(Error::RejectedInput(format!(
            "online coupling program supports |X| * |Y| up to {MAX_ONLINE_COUPLING}, got {} x {}",
            mu.outcomes(),
            nu.outcomes()
        )));
    }
    let n = mu.n();
    let xlev = mu.support_prefixes();
    let ylev = nu.support_prefixes();
    // value of the optimal continuation from each prefix pair
    let mut value: HashMap<(usize, usize), f64> = HashMap::new();
    for i in (0..n).rev() {
        let costs = pair_costs(cost.coord(i), mu.alphabet(i), nu.alphabet(i))?;
        let (sx, sy) = (mu.size(i), nu.size(i));
        let mut level: HashMap<(usize, usize), f64> = HashMap::new();
        for &xc in &xlev[i] {
            let xcond = mu.conditional(i, xc).expect("support prefix has mass");
            for &yc in &ylev[i] {
                let ycond = nu.conditional(i, yc).expect("support prefix has mass");
                let (_, v) = solvers::transportation(&xcond, &ycond, |r, c| {
                    costs[r][c] + value.get(&(xc * sx + r, yc * sy + c)).copied().unwrap_or(0.0)
                })?;
                level.insert((xc, yc), v);
            }
        }
        value = level;
    }
    Ok(*value.get(&(0, 0)).expect("root prefix pair"))
}

/// The optimal online-transport cost `T^OnT` from `mu` to `nu`.
///
/// A coupling is an online transport exactly when, for every round,
/// the source coordinate is independent of the emitted prefix given the
/// source prefix. Those are linear constraints on the joint table (the
/// conditional factors are constants of `mu`), so the optimum is a dense
/// linear program; only tiny instances are supported.
pub fn online_transport_optimum(mu: &DiscreteSpace, nu: &DiscreteSpace, cost: &CostSpec) -> Result<f64> {
    check_pair_dims(mu, nu, cost)?;
    let vars = mu.outcomes().saturating_mul(nu.outcomes());
    if vars > MAX_ONLINE_TRANSPORT {
        return Err(Error::RejectedInput(format!(
            "online transport LP supports |X| * |Y| up to {MAX_ONLINE_TRANSPORT}, got {} x {}",
            mu.outcomes(),
            nu.outcomes()
        )));
    }
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    marginal_rows(mu, nu, &mut rows, &mut rhs);
    online_rows(mu, nu, false, &mut rows, &mut rhs);
    let objective = joint_costs(mu, nu, cost)?;
    let (_, total) = solvers::solve_lp(&rows, &rhs, &objective)?;
    Ok(total)
}

/// Linearized cost of every outcome pair, indexed `xf * |Y| + yf`.
fn joint_costs(mu: &DiscreteSpace, nu: &DiscreteSpace, cost: &CostSpec) -> Result<Vec<f64>> {
    let n = mu.n();
    let per_coord: Vec<Vec<Vec<f64>>> = (0..n)
        .map(|i| pair_costs(cost.coord(i), mu.alphabet(i), nu.alphabet(i)))
        .collect::<Result<_>>()?;
    let ny = nu.outcomes();
    let mut out = vec![0.0; mu.outcomes() * ny];
    for xf in 0..mu.outcomes() {
        for yf in 0..ny {
            let mut t = 0.0;
            for (i, table) in per_coord.iter().enumerate() {
                t += table[(xf / mu.strides[i]) % mu.size(i)][(yf / nu.strides[i]) % nu.size(i)];
            }
            out[xf * ny + yf] = t;
        }
    }
    Ok(out)
}

fn marginal_rows(mu: &DiscreteSpace, nu: &DiscreteSpace, rows: &mut Vec<Vec<f64>>, rhs: &mut Vec<f64>) {
    let (nx, ny) = (mu.outcomes(), nu.outcomes());
    for xf in 0..nx {
        let mut row = vec![0.0; nx * ny];
        row[xf * ny..(xf + 1) * ny].fill(1.0);
        rows.push(row);
        rhs.push(mu.mass(xf));
    }
    for yf in 0..ny {
        let mut row = vec![0.0; nx * ny];
        for xf in 0..nx {
            row[xf * ny + yf] = 1.0;
        }
        rows.push(row);
        rhs.push(nu.mass(yf));
    }
}

/// Constraint rows forcing `x_{i+1}` independent of `y_{[i]}` given `x_{[i]}`
/// (or the transposed condition when `flip` is set):
/// `P[x_{[i+1]} = ua, y_{[i]} = v] = mu(a | u) * P[x_{[i]} = u, y_{[i]} = v]`.
fn online_rows(
    mu: &DiscreteSpace,
    nu: &DiscreteSpace,
    flip: bool,
    rows: &mut Vec<Vec<f64>>,
    rhs: &mut Vec<f64>,
) {
    let (nx, ny) = (mu.outcomes(), nu.outcomes());
    let at = |xf: usize, yf: usize| if flip { yf * nx + xf } else { xf * ny + yf };
    let xlev = mu.support_prefixes();
    let ylev = nu.support_prefixes();
    for len in 1..mu.n() {
        let size = mu.size(len);
        let xtail_parent = mu.tail(len);
        let xtail_child = mu.tail(len + 1);
        let ytail = nu.tail(len);
        for &u in &xlev[len] {
            let pm = mu.prefix_mass(len, u);
            for a in 0..size {
                let ua = u * size + a;
                let r = mu.prefix_mass(len + 1, ua) / pm;
                for &v in &ylev[len] {
                    let mut row = vec![0.0; nx * ny];
                    for xf in ua * xtail_child..(ua + 1) * xtail_child {
                        for yf in v * ytail..(v + 1) * ytail {
                            row[at(xf, yf)] += 1.0;
                        }
                    }
                    for xf in u * xtail_parent..(u + 1) * xtail_parent {
                        for yf in v * ytail..(v + 1) * ytail {
                            row[at(xf, yf)] -= r;
                        }
                    }
                    rows.push(row);
                    rhs.push(0.0);
                }
            }
        }
    }
}

/// The `claim42` hard-instance pair: `mu` uniform over `{0,1}^n` and `nu`
/// the same table with `epsilon` mass moved from `10^{n-1}` onto `0^n`.
/// Under per-coordinate Hamming cost the offline optimum is `epsilon` while
/// the online optimum is `n * epsilon`.
pub fn claim42_instance(n: usize, epsilon: f64) -> Result<(DiscreteSpace, DiscreteSpace)> {
    if n == 0 || n > 10 {
        return Err(Error::RejectedInput(format!("claim42 instance needs 1 <= n <= 10, got {n}")));
    }
    let base = 0.5f64.powi(n as i32);
    if !epsilon.is_finite() || epsilon < 0.0 || epsilon > base {
        return Err(Error::RejectedInput(format!(
            "claim42 instance needs 0 <= epsilon <= 2^-{n}, got {epsilon}"
        )));
    }
    let alphabets = vec![vec![0.0, 1.0]; n];
    let outcomes = 1usize << n;
    let mu = DiscreteSpace::new(alphabets.clone(), vec![base; outcomes])?;
    let mut table = vec![base; outcomes];
    table[0] += epsilon;
    table[outcomes >> 1] -= epsilon;
    let nu = DiscreteSpace::new(alphabets, table)?;
    Ok((mu, nu))
}

/// The two-round instance where greedy is forced to pay 2 while a smarter
/// online coupling pays 1: both marginals are uniform over {(0,0), (1,1)},
/// round one is Hamming cost and round two pays 2 for agreement and 0 for
/// disagreement.
pub fn remark40_instance() -> Result<(DiscreteSpace, DiscreteSpace, CostSpec)> {
    let alphabets = vec![vec![0.0, 1.0]; 2];
    let table = vec![0.5, 0.0, 0.0, 0.5];
    let mu = DiscreteSpace::new(alphabets.clone(), table.clone())?;
    let nu = DiscreteSpace::new(alphabets, table)?;
    let agree2 = CoordCost::Tabulated {
        xs: vec![0.0, 1.0],
        ys: vec![0.0, 1.0],
        values: vec![vec![2.0, 0.0], vec![0.0, 2.0]],
    };
    let cost = CostSpec::per_coordinate(1.0, vec![CoordCost::Hamming, agree2])?;
    Ok((mu, nu, cost))
}

/// The asymmetric two-round instance: `mu` is two fair bits, `nu` reveals a
/// uniform bit pair as one four-letter symbol (encoded `2a + b`) and then
/// repeats its second bit. Round one charges for disagreeing with the pair's
/// first bit, round two is Hamming. Online transport from `mu` to `nu` costs
/// 1/2, while the reverse direction is free.
pub fn remark41_instance() -> Result<(DiscreteSpace, DiscreteSpace, CostSpec)> {
    let mu = DiscreteSpace::uniform(vec![vec![0.0, 1.0]; 2])?;
    let nu = DiscreteSpace::new(
        vec![vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0]],
        vec![0.25, 0.0, 0.0, 0.25, 0.25, 0.0, 0.0, 0.25],
    )?;
    let first_bit = CoordCost::Tabulated {
        xs: vec![0.0, 1.0],
        ys: vec![0.0, 1.0, 2.0, 3.0],
        values: vec![vec![0.0, 0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0, 0.0]],
    };
    let cost = CostSpec::per_coordinate(1.0, vec![first_bit, CoordCost::Hamming])?;
    Ok((mu, nu, cost))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn hamming_spec() -> CostSpec {
        CostSpec::hamming()
    }

    /// Monolithic LP for the online-coupling optimum: a coupling is online
    /// iff it is an online transport in both directions, so both sides'
    /// conditional-independence rows apply. Independent of the backward
    /// induction in `online_coupling_optimum`.
    fn online_coupling_lp(mu: &DiscreteSpace, nu: &DiscreteSpace, cost: &CostSpec) -> f64 {
        let mut rows = Vec::new();
        let mut rhs = Vec::new();
        marginal_rows(mu, nu, &mut rows, &mut rhs);
        online_rows(mu, nu, false, &mut rows, &mut rhs);
        // transposed orientation: swap roles, flip index order back
        let mut trows = Vec::new();
        let mut trhs = Vec::new();
        online_rows(nu, mu, true, &mut trows, &mut trhs);
        rows.extend(trows);
        rhs.extend(trhs);
        let objective = joint_costs(mu, nu, cost).unwrap();
        let (_, total) = solvers::solve_lp(&rows, &rhs, &objective).unwrap();
        total
    }

    fn random_space(rng: &mut RngStream, n: usize, max_size: usize, product: bool) -> DiscreteSpace {
        let alphabets: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let size = 2 + rng.index(max_size - 1);
                (0..size).map(|v| v as f64).collect()
            })
            .collect();
        if product {
            let marginals: Vec<Vec<f64>> = alphabets
                .iter()
                .map(|a| {
                    let raw: Vec<f64> = a.iter().map(|_| rng.unit() + 0.05).collect();
                    let s: f64 = raw.iter().sum();
                    raw.iter().map(|v| v / s).collect()
                })
                .collect();
            DiscreteSpace::product(alphabets, marginals).unwrap()
        } else {
            let outcomes: usize = alphabets.iter().map(|a| a.len()).product();
            let raw: Vec<f64> = (0..outcomes).map(|_| rng.unit() + 0.02).collect();
            let s: f64 = raw.iter().sum();
            let table = raw.iter().map(|v| v / s).collect();
            DiscreteSpace::new(alphabets, table).unwrap()
        }
    }

    fn random_cost(rng: &mut RngStream, mu: &DiscreteSpace, nu: &DiscreteSpace) -> CostSpec {
        let coords = (0..mu.n())
            .map(|i| {
                let values = (0..mu.size(i))
                    .map(|_| (0..nu.size(i)).map(|_| rng.unit() * 3.0).collect())
                    .collect();
                CoordCost::Tabulated {
                    xs: mu.alphabet(i).to_vec(),
                    ys: nu.alphabet(i).to_vec(),
                    values,
                }
            })
            .collect();
        CostSpec::per_coordinate(1.0, coords).unwrap()
    }

    #[test]
    fn space_validation() {
        assert!(DiscreteSpace::new(vec![vec![0.0, 1.0]], vec![0.5, 0.5]).is_ok());
        assert!(DiscreteSpace::new(vec![vec![0.0, 0.0]], vec![0.5, 0.5]).is_err());
        assert!(DiscreteSpace::new(vec![vec![0.0, 1.0]], vec![0.6, 0.5]).is_err());
        assert!(DiscreteSpace::new(vec![vec![0.0, 1.0]], vec![-0.1, 1.1]).is_err());
        assert!(DiscreteSpace::new(vec![vec![0.0, 1.0]], vec![0.5, 0.5, 0.0]).is_err());
    }

    #[test]
    fn space_prefix_machinery() {
        let (_, nu) = claim42_instance(3, 0.125).unwrap();
        assert_eq!(nu.outcomes(), 8);
        assert!((nu.prefix_mass(0, 0) - 1.0).abs() < 1e-15);
        // first coordinate splits mass evenly even after the epsilon shift
        // of 2^-3 from 100 to 000
        assert!((nu.prefix_mass(1, 0) - 0.625).abs() < 1e-15);
        assert!((nu.prefix_mass(1, 1) - 0.375).abs() < 1e-15);
        let cond = nu.conditional(1, 0).unwrap();
        assert!((cond[0] - 0.6).abs() < 1e-15);
        assert_eq!(nu.point(5), vec![1.0, 0.0, 1.0]);
        assert_eq!(nu.prefix_of(5, 2), 2);
    }

    #[test]
    fn product_detection() {
        let mut rng = RngStream::new(7, 0);
        let prod = random_space(&mut rng, 3, 3, true);
        assert!(prod.is_product(1e-10));
        let (_, nu) = claim42_instance(3, 0.125).unwrap();
        assert!(!nu.is_product(1e-10));
        let (mu40, _, _) = remark40_instance().unwrap();
        assert!(!mu40.is_product(1e-10));
    }

    #[test]
    fn serde_roundtrip_enforces_invariants() {
        let (mu, _) = claim42_instance(2, 0.1).unwrap();
        let json = serde_json::to_string(&mu).unwrap();
        let back: DiscreteSpace = serde_json::from_str(&json).unwrap();
        assert_eq!(back.table(), mu.table());
        let bad = r#"{"alphabets":[[0.0,1.0]],"table":[0.7,0.7]}"#;
        assert!(serde_json::from_str::<DiscreteSpace>(bad).is_err());
    }

    #[test]
    fn claim42_exact_values() {
        for n in 2..=8usize {
            let eps = 0.5f64.powi(n as i32);
            let (mu, nu) = claim42_instance(n, eps).unwrap();
            let spec = hamming_spec();
            let (offline, pi) = exact_ot(&mu, &nu, &spec).unwrap();
            assert!((offline - eps).abs() <= 1e-10, "n={n}: offline {offline} vs {eps}");
            assert!((pi.cost(&spec).unwrap() - offline).abs() <= 1e-10);
            let online = delta_function(&mu, &nu, &spec).unwrap();
            assert!((online - n as f64 * eps).abs() <= 1e-10, "n={n}: delta {online}");
        }
    }

    #[test]
    fn claim42_online_optima_match_delta() {
        for n in 2..=5usize {
            let eps = 0.5f64.powi(n as i32);
            let (mu, nu) = claim42_instance(n, eps).unwrap();
            let spec = hamming_spec();
            let want = n as f64 * eps;
            let onc = online_coupling_optimum(&mu, &nu, &spec).unwrap();
            assert!((onc - want).abs() <= 1e-10, "n={n}: onc {onc} vs {want}");
            if n <= 3 {
                let ont = online_transport_optimum(&mu, &nu, &spec).unwrap();
                assert!((ont - want).abs() <= 1e-8, "n={n}: ont {ont} vs {want}");
            }
        }
    }

    #[test]
    fn claim42_degenerate_and_invalid_parameters() {
        let (mu, nu) = claim42_instance(3, 0.0).unwrap();
        let spec = hamming_spec();
        assert_eq!(exact_ot(&mu, &nu, &spec).unwrap().0, 0.0);
        assert_eq!(delta_function(&mu, &nu, &spec).unwrap(), 0.0);
        assert!(claim42_instance(0, 0.1).is_err());
        assert!(claim42_instance(11, 0.0001).is_err());
        assert!(claim42_instance(3, 0.2).is_err());
        assert!(claim42_instance(3, -0.01).is_err());
    }

    #[test]
    fn remark40_greedy_pays_double() {
        let (mu, nu, cost) = remark40_instance().unwrap();
        let (greedy, pi) = greedy_coupling(&mu, &nu, &cost).unwrap();
        assert!((greedy - 2.0).abs() <= 1e-12, "greedy {greedy}");
        assert!((pi.cost(&cost).unwrap() - 2.0).abs() <= 1e-12);
        let onc = online_coupling_optimum(&mu, &nu, &cost).unwrap();
        assert!((onc - 1.0).abs() <= 1e-12, "onc {onc}");
        // offline optimum also achieves 1 by the anti-diagonal coupling
        let (offline, _) = exact_ot(&mu, &nu, &cost).unwrap();
        assert!((offline - 1.0).abs() <= 1e-12, "offline {offline}");
        // the source is not product, so delta refuses it
        assert!(matches!(delta_function(&mu, &nu, &cost), Err(Error::RejectedInput(_))));
    }

    #[test]
    fn remark41_asymmetry() {
        let (mu, nu, cost) = remark41_instance().unwrap();
        let onc = online_coupling_optimum(&mu, &nu, &cost).unwrap();
        assert!((onc - 0.5).abs() <= 1e-10, "onc {onc}");
        let ont = online_transport_optimum(&mu, &nu, &cost).unwrap();
        assert!((ont - 0.5).abs() <= 1e-8, "ont {ont}");
        // reverse direction: read the pair symbol, re-emit its bits
        let back = online_transport_optimum(&nu, &mu, &cost.transposed()).unwrap();
        assert!(back.abs() <= 1e-9, "reverse {back}");
        // and offline transport was free all along
        let (offline, _) = exact_ot(&mu, &nu, &cost).unwrap();
        assert!(offline.abs() <= 1e-10, "offline {offline}");
    }

    #[test]
    fn remark41_deterministic_map_search() {
        // enumerate deterministic online maps from nu to mu: f1 picks the
        // first output bit from the pair symbol, f2 the second from symbol
        // and repeat bit; keep those inducing exactly mu and take the
        // cheapest
        let (mu, nu, cost) = remark41_instance().unwrap();
        let tcost = cost.transposed();
        let mut best = f64::INFINITY;
        for f1 in 0..(1u32 << 4) {
            for f2 in 0..(1u32 << 8) {
                let mut out = vec![0.0; 4];
                let mut total = 0.0;
                for yf in 0..8usize {
                    let m = nu.mass(yf);
                    if m <= 0.0 {
                        continue;
                    }
                    let (sym, rep) = (yf / 2, yf % 2);
                    let x1 = (f1 >> sym) & 1;
                    let x2 = (f2 >> (sym * 2 + rep)) & 1;
                    let xf = (x1 * 2 + x2) as usize;
                    out[xf] += m;
                    let yv = nu.point(yf);
                    let xv = mu.point(xf);
                    total += m
                        * (tcost.coord(0).eval(yv[0], xv[0]).unwrap()
                            + tcost.coord(1).eval(yv[1], xv[1]).unwrap());
                }
                let exact = (0..4).all(|f| (out[f] - mu.mass(f)).abs() <= 1e-12);
                if exact && total < best {
                    best = total;
                }
            }
        }
        assert_eq!(best, 0.0);
    }

    #[test]
    fn greedy_online_and_delta_coincide_on_product_instances() {
        let mut rng = RngStream::new(42, 1);
        for trial in 0..25 {
            let n = 1 + rng.index(3);
            let mu = random_space(&mut rng, n, 4, true);
            let nu = random_space(&mut rng, n, 4, false);
            let cost = random_cost(&mut rng, &mu, &nu);
            let delta = delta_function(&mu, &nu, &cost).unwrap();
            let (greedy, pi) = greedy_coupling(&mu, &nu, &cost).unwrap();
            let onc = online_coupling_optimum(&mu, &nu, &cost).unwrap();
            assert!((greedy - delta).abs() <= 1e-8, "trial {trial}: greedy {greedy} vs delta {delta}");
            assert!((onc - delta).abs() <= 1e-8, "trial {trial}: onc {onc} vs delta {delta}");
            let (offline, _) = exact_ot(&mu, &nu, &cost).unwrap();
            assert!(offline <= delta + 1e-9, "trial {trial}: offline {offline} above delta {delta}");
            // greedy couplings are locally optimal, so Lambda is tight
            let lam = lambda_function(&pi, &cost).unwrap();
            assert!((lam - greedy).abs() <= 1e-9, "trial {trial}: lambda {lam} vs greedy {greedy}");
            if mu.outcomes() * nu.outcomes() <= MAX_ONLINE_TRANSPORT && n <= 2 {
                let ont = online_transport_optimum(&mu, &nu, &cost).unwrap();
                assert!((ont - delta).abs() <= 1e-7, "trial {trial}: ont {ont} vs delta {delta}");
            }
        }
    }

    #[test]
    fn backward_induction_matches_monolithic_lp() {
        let mut rng = RngStream::new(9, 3);
        for _ in 0..10 {
            let mu = random_space(&mut rng, 2, 3, false);
            let nu = random_space(&mut rng, 2, 3, false);
            let cost = random_cost(&mut rng, &mu, &nu);
            let dp = online_coupling_optimum(&mu, &nu, &cost).unwrap();
            let lp = online_coupling_lp(&mu, &nu, &cost);
            assert!((dp - lp).abs() <= 1e-8, "dp {dp} vs lp {lp}");
        }
    }

    #[test]
    fn lambda_bounds_every_coupling() {
        let mut rng = RngStream::new(11, 5);
        for _ in 0..40 {
            let n = 1 + rng.index(2);
            let x = random_space(&mut rng, n, 3, false);
            let y = random_space(&mut rng, n, 3, false);
            // random feasible coupling: independent product of the two
            // tables, then a mass-preserving local perturbation
            let ny = y.outcomes();
            let mut mass = vec![0.0; x.outcomes() * ny];
            for xf in 0..x.outcomes() {
                for yf in 0..ny {
                    mass[xf * ny + yf] = x.mass(xf) * y.mass(yf);
                }
            }
            if x.outcomes() >= 2 && ny >= 2 {
                let d = (mass[0].min(mass[ny + 1]) * rng.unit()).min(mass[1].min(mass[ny]));
                mass[0] -= d;
                mass[ny + 1] -= d;
                mass[1] += d;
                mass[ny] += d;
            }
            let pi = DiscreteCoupling::new(x, y, mass).unwrap();
            let cost = random_cost(&mut rng, pi.source(), pi.target());
            let lam = lambda_function(&pi, &cost).unwrap();
            let direct = pi.cost(&cost).unwrap();
            assert!(lam <= direct + 1e-10, "lambda {lam} above cost {direct}");
        }
    }

    #[test]
    fn lambda_identity_coupling_is_zero() {
        let (mu, _) = claim42_instance(3, 0.125).unwrap();
        let ny = mu.outcomes();
        let mut mass = vec![0.0; ny * ny];
        for f in 0..ny {
            mass[f * ny + f] = mu.mass(f);
        }
        let pi = DiscreteCoupling::new(mu.clone(), mu, mass).unwrap();
        assert_eq!(lambda_function(&pi, &hamming_spec()).unwrap(), 0.0);
        assert_eq!(pi.cost(&hamming_spec()).unwrap(), 0.0);
    }

    #[test]
    fn coupling_marginal_validation() {
        let (mu, nu) = claim42_instance(2, 0.1).unwrap();
        let bad = vec![0.25; 16];
        // uniform joint has uniform column sums, which nu is not
        assert!(matches!(
            DiscreteCoupling::new(mu, nu, bad.iter().map(|&x| x / 4.0).collect()),
            Err(Error::RejectedInput(_))
        ));
    }

    #[test]
    fn scale_gates() {
        let (mu, nu) = claim42_instance(9, 0.0).unwrap();
        assert!(matches!(
            online_coupling_optimum(&mu, &nu, &hamming_spec()),
            Err(Error::RejectedInput(_))
        ));
        let (mu3, nu3) = claim42_instance(6, 0.0).unwrap();
        assert!(matches!(
            online_transport_optimum(&mu3, &nu3, &hamming_spec()),
            Err(Error::RejectedInput(_))
        ));
    }

    #[test]
    fn dimension_checks() {
        let (mu, _) = claim42_instance(2, 0.0).unwrap();
        let (_, nu) = claim42_instance(3, 0.0).unwrap();
        assert!(matches!(
            exact_ot(&mu, &nu, &hamming_spec()),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
