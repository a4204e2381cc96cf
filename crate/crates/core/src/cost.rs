//! Separable costs on product spaces.
//!
//! A cost spec fixes an exponent `p >= 1` and one coordinate cost per
//! dimension; the transport cost of a pair is `c^p(x, y) = sum_i c_i(x_i, y_i)`
//! and the associated p-cost is `(c^p)^(1/p)`. With the abs-power builtin
//! `c_i(a, b) = |a - b|^p` this is exactly the `l_p` metric.

use crate::error::{Error, Result};
use crate::point::Point;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoordCost {
    /// `|a - b|^exponent`; convex (hence sort-matchable) for exponent >= 1.
    AbsPow { exponent: f64 },
    /// 0/1 mismatch cost.
    Hamming,
    /// Explicit table over finite alphabets, looked up by exact value.
    /// Not required to vanish on the diagonal (anti-monotone reference
    /// instances rely on that freedom).
    Tabulated {
        xs: Vec<f64>,
        ys: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

impl CoordCost {
    pub fn abs_pow(exponent: f64) -> Self {
        CoordCost::AbsPow { exponent }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            CoordCost::AbsPow { exponent } => {
                if !exponent.is_finite() || *exponent < 1.0 {
                    return Err(Error::config(format!("abs_pow exponent must be >= 1, got {exponent}")));
                }
            }
            CoordCost::Hamming => {}
            CoordCost::Tabulated { xs, ys, values } => {
                if values.len() != xs.len() || values.iter().any(|row| row.len() != ys.len()) {
                    return Err(Error::config("tabulated cost shape does not match alphabets"));
                }
                if values.iter().flatten().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::config("tabulated cost entries must be finite and non-negative"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, a: f64, b: f64) -> Result<f64> {
        match self {
            CoordCost::AbsPow { exponent } => Ok((a - b).abs().powf(*exponent)),
            CoordCost::Hamming => Ok(if a == b { 0.0 } else { 1.0 }),
            CoordCost::Tabulated { xs, ys, values } => {
                let ix = xs
                    .iter()
                    .position(|&v| v == a)
                    .ok_or_else(|| Error::RejectedInput(format!("value {a} not in tabulated x-alphabet")))?;
                let iy = ys
                    .iter()
                    .position(|&v| v == b)
                    .ok_or_else(|| Error::RejectedInput(format!("value {b} not in tabulated y-alphabet")))?;
                Ok(values[ix][iy])
            }
        }
    }

    /// Whether the cost is convex as a function of `a - b`, which is what
    /// makes the monotone (sorted) matching optimal.
    pub fn is_convex(&self) -> bool {
        matches!(self, CoordCost::AbsPow { exponent } if *exponent >= 1.0)
    }

    /// The cost with its arguments swapped: `c'(a, b) = c(b, a)`.
    pub fn transposed(&self) -> CoordCost {
        match self {
            CoordCost::Tabulated { xs, ys, values } => {
                let mut t = vec![vec![0.0; xs.len()]; ys.len()];
                for (i, row) in values.iter().enumerate() {
                    for (j, v) in row.iter().enumerate() {
                        t[j][i] = *v;
                    }
                }
                CoordCost::Tabulated { xs: ys.clone(), ys: xs.clone(), values: t }
            }
            sym => sym.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Coords {
    Uniform(CoordCost),
    PerCoordinate(Vec<CoordCost>),
}

/// Cost specification shared by transporters, oracles and the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub p: f64,
    #[serde(default = "default_metric")]
    pub metric: bool,
    #[serde(rename = "cost")]
    coords: Coords,
}

fn default_metric() -> bool {
    false
}

impl CostSpec {
    /// `l_p` cost: every coordinate `|a - b|^p`, total is the p-th power of
    /// the `l_p` distance.
    pub fn lp(p: f64) -> Self {
        CostSpec { p, metric: true, coords: Coords::Uniform(CoordCost::AbsPow { exponent: p }) }
    }

    pub fn hamming() -> Self {
        CostSpec { p: 1.0, metric: true, coords: Coords::Uniform(CoordCost::Hamming) }
    }

    pub fn uniform(p: f64, cost: CoordCost) -> Result<Self> {
        cost.validate()?;
        Self::check_p(p)?;
        Ok(CostSpec { p, metric: false, coords: Coords::Uniform(cost) })
    }

    pub fn per_coordinate(p: f64, costs: Vec<CoordCost>) -> Result<Self> {
        Self::check_p(p)?;
        if costs.is_empty() {
            return Err(Error::config("per-coordinate cost list is empty"));
        }
        for c in &costs {
            c.validate()?;
        }
        Ok(CostSpec { p, metric: false, coords: Coords::PerCoordinate(costs) })
    }

    fn check_p(p: f64) -> Result<()> {
        if !p.is_finite() || p < 1.0 {
            return Err(Error::config(format!("cost exponent p must be >= 1, got {p}")));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        Self::check_p(self.p)?;
        match &self.coords {
            Coords::Uniform(c) => c.validate(),
            Coords::PerCoordinate(cs) => cs.iter().try_for_each(|c| c.validate()),
        }
    }

    pub fn coord(&self, i: usize) -> &CoordCost {
        match &self.coords {
            Coords::Uniform(c) => c,
            Coords::PerCoordinate(cs) => &cs[i],
        }
    }

    /// Declared dimension, if the spec is per-coordinate.
    pub fn fixed_dim(&self) -> Option<usize> {
        match &self.coords {
            Coords::Uniform(_) => None,
            Coords::PerCoordinate(cs) => Some(cs.len()),
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        if let Some(d) = self.fixed_dim() {
            if d != n {
                return Err(Error::DimensionMismatch { expected: d, got: n });
            }
        }
        Ok(())
    }

    pub fn all_convex(&self, n: usize) -> bool {
        (0..n).all(|i| self.coord(i).is_convex())
    }

    /// The spec with every coordinate cost argument-swapped, for evaluating
    /// a transport in the reverse direction.
    pub fn transposed(&self) -> CostSpec {
        let coords = match &self.coords {
            Coords::Uniform(c) => Coords::Uniform(c.transposed()),
            Coords::PerCoordinate(cs) => Coords::PerCoordinate(cs.iter().map(|c| c.transposed()).collect()),
        };
        CostSpec { p: self.p, metric: self.metric, coords }
    }
}

/// One evaluated pair: the per-coordinate costs and their sum `c^p(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSample {
    pub per_coordinate: Vec<f64>,
    pub total: f64,
    pub p: f64,
}

impl CostSample {
    /// The p-cost `(c^p)^(1/p)`; for the `l_p` builtin this is the distance.
    pub fn p_cost(&self) -> f64 {
        self.total.powf(1.0 / self.p)
    }
}

pub fn eval_cost(spec: &CostSpec, x: &Point, y: &Point) -> Result<CostSample> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch { expected: x.dim(), got: y.dim() });
    }
    spec.check_dim(x.dim())?;
    let mut per = Vec::with_capacity(x.dim());
    let mut total = 0.0;
    for i in 0..x.dim() {
        let c = spec.coord(i).eval(x[i], y[i])?;
        per.push(c);
        total += c;
    }
    Ok(CostSample { per_coordinate: per, total, p: spec.p })
}

/// Turns an expected total cost `E[c^p]` into the Wasserstein p-cost
/// `(E[c^p])^(1/p)`.
pub fn wasserstein_p_cost(expected_total: f64, p: f64) -> Result<f64> {
    if !(expected_total >= 0.0) {
        return Err(Error::RejectedInput(format!("expected cost must be non-negative, got {expected_total}")));
    }
    CostSpec::check_p(p)?;
    Ok(expected_total.powf(1.0 / p))
}
