//! One-dimensional distributions with sampling, CDF, and quantile access.
//!
//! Everything the transporter does in one coordinate goes through this type:
//! drawing fresh samples, evaluating `F(x)` and its left limit `F(x^-)`, and
//! the generalized inverse `F^{-1}(t) = inf { x : F(x) > t }`. The strict
//! inequality matters for atoms: with a fair bit, `inv_cdf(0.5)` is `1`, not
//! `0`, so a uniform `t` lands on each atom with exactly its mass.
//!
//! Empirical multisets are a first-class kind: the transporter wraps the
//! per-round sample pools as `empirical` distributions and reuses the same
//! CDF coupling for every step variant.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use serde::{Deserialize, Serialize};

mod normal;

pub use normal::{erfc, norm_cdf, norm_pdf, norm_ppf, norm_sf};

/// Box-Muller transform on explicit uniforms, `u1` in `(0, 1]`, `u2` in `[0, 1)`.
pub fn box_muller(u1: f64, u2: f64) -> (f64, f64) {
    let r = (-2.0 * u1.ln()).sqrt();
    let theta = 2.0 * std::f64::consts::PI * u2;
    (r * theta.cos(), r * theta.sin())
}

/// Pair of independent standard Gaussians.
pub fn gaussian_pair(rng: &mut RngStream) -> (f64, f64) {
    let u1 = rng.unit_open_low();
    let u2 = rng.unit();
    box_muller(u1, u2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub can_sample: bool,
    pub has_cdf: bool,
    pub has_inv_cdf: bool,
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Gaussian { mean: f64, stddev: f64 },
    Uniform { lo: f64, hi: f64 },
    TruncatedGaussian {
        mean: f64,
        stddev: f64,
        lo: f64,
        hi: f64,
        // cached: window mass and CDF at the lower edge (standardized)
        z: f64,
        cdf_lo: f64,
    },
    Finite { values: Vec<f64>, masses: Vec<f64>, cum: Vec<f64> },
    Empirical { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Repr", into = "Repr")]
pub struct Dist1D {
    kind: Kind,
}

#[derive(Serialize, Deserialize, Clone)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Repr {
    Gaussian { mean: f64, stddev: f64 },
    Uniform { lo: f64, hi: f64 },
    TruncatedGaussian { mean: f64, stddev: f64, lo: Option<f64>, hi: Option<f64> },
    Finite { atoms: Vec<(f64, f64)> },
    Empirical { values: Vec<f64> },
}

impl TryFrom<Repr> for Dist1D {
    type Error = Error;
    fn try_from(r: Repr) -> Result<Self> {
        match r {
            Repr::Gaussian { mean, stddev } => Dist1D::gaussian(mean, stddev),
            Repr::Uniform { lo, hi } => Dist1D::uniform(lo, hi),
            Repr::TruncatedGaussian { mean, stddev, lo, hi } => {
                Dist1D::truncated_gaussian(mean, stddev, lo, hi)
            }
            Repr::Finite { atoms } => Dist1D::finite(atoms),
            Repr::Empirical { values } => Dist1D::empirical(values),
        }
    }
}

impl From<Dist1D> for Repr {
    fn from(d: Dist1D) -> Repr {
        match d.kind {
            Kind::Gaussian { mean, stddev } => Repr::Gaussian { mean, stddev },
            Kind::Uniform { lo, hi } => Repr::Uniform { lo, hi },
            Kind::TruncatedGaussian { mean, stddev, lo, hi, .. } => Repr::TruncatedGaussian {
                mean,
                stddev,
                lo: if lo.is_finite() { Some(lo) } else { None },
                hi: if hi.is_finite() { Some(hi) } else { None },
            },
            Kind::Finite { values, masses, .. } => {
                Repr::Finite { atoms: values.into_iter().zip(masses).collect() }
            }
            Kind::Empirical { values } => Repr::Empirical { values },
        }
    }
}

impl Dist1D {
    pub fn gaussian(mean: f64, stddev: f64) -> Result<Self> {
        if !mean.is_finite() || !stddev.is_finite() || stddev <= 0.0 {
            return Err(Error::config(format!("invalid gaussian parameters ({mean}, {stddev})")));
        }
        Ok(Dist1D { kind: Kind::Gaussian { mean, stddev } })
    }

    pub fn standard_gaussian() -> Self {
        Dist1D::gaussian(0.0, 1.0).unwrap()
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::config(format!("invalid uniform range [{lo}, {hi})")));
        }
        Ok(Dist1D { kind: Kind::Uniform { lo, hi } })
    }

    /// Gaussian conditioned on `[lo, hi]`; `None` leaves a side unbounded.
    pub fn truncated_gaussian(mean: f64, stddev: f64, lo: Option<f64>, hi: Option<f64>) -> Result<Self> {
        if !mean.is_finite() || !stddev.is_finite() || stddev <= 0.0 {
            return Err(Error::config(format!("invalid gaussian parameters ({mean}, {stddev})")));
        }
        let lo = lo.unwrap_or(f64::NEG_INFINITY);
        let hi = hi.unwrap_or(f64::INFINITY);
        if !(lo < hi) {
            return Err(Error::config(format!("empty truncation window [{lo}, {hi}]")));
        }
        let cdf_lo = if lo.is_finite() { norm_cdf((lo - mean) / stddev) } else { 0.0 };
        let cdf_hi = if hi.is_finite() { norm_cdf((hi - mean) / stddev) } else { 1.0 };
        let z = cdf_hi - cdf_lo;
        if !(z > 1e-300) {
            return Err(Error::config("truncation window carries no mass"));
        }
        Ok(Dist1D { kind: Kind::TruncatedGaussian { mean, stddev, lo, hi, z, cdf_lo } })
    }

    /// Atoms `(value, mass)`; sorted and merged, masses normalized after a
    /// 1e-9 sum check.
    pub fn finite(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::config("finite distribution needs at least one atom"));
        }
        let mut atoms = atoms;
        for &(v, m) in &atoms {
            if !v.is_finite() || !m.is_finite() || m < 0.0 {
                return Err(Error::config(format!("invalid atom ({v}, {m})")));
            }
        }
        let sum: f64 = atoms.iter().map(|a| a.1).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("atom masses sum to {sum}, expected 1")));
        }
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut values = Vec::new();
        let mut masses: Vec<f64> = Vec::new();
        for (v, m) in atoms {
            if m == 0.0 {
                continue;
            }
            if values.last() == Some(&v) {
                *masses.last_mut().unwrap() += m;
            } else {
                values.push(v);
                masses.push(m);
            }
        }
        if values.is_empty() {
            return Err(Error::config("all atoms have zero mass"));
        }
        for m in &mut masses {
            *m /= sum;
        }
        let mut cum = Vec::with_capacity(masses.len());
        let mut acc = 0.0;
        for &m in &masses {
            acc += m;
            cum.push(acc);
        }
        *cum.last_mut().unwrap() = 1.0;
        Ok(Dist1D { kind: Kind::Finite { values, masses, cum } })
    }

    /// Uniform distribution over an observed multiset (kept with
    /// multiplicity).
    pub fn empirical(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::config("empirical distribution needs at least one value"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("empirical values must be finite"));
        }
        let mut values = values;
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(Dist1D { kind: Kind::Empirical { values } })
    }

    pub fn capabilities(&self) -> Capabilities {
        Capabilities { can_sample: true, has_cdf: true, has_inv_cdf: true }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.kind, Kind::Finite { .. } | Kind::Empirical { .. })
    }

    /// `(mean, stddev)` when the distribution is an untruncated Gaussian.
    pub fn as_gaussian(&self) -> Option<(f64, f64)> {
        match self.kind {
            Kind::Gaussian { mean, stddev } => Some((mean, stddev)),
            _ => None,
        }
    }

    /// Atoms of a discrete kind as `(values, masses)`.
    pub fn atoms(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match &self.kind {
            Kind::Finite { values, masses, .. } => Some((values.clone(), masses.clone())),
            Kind::Empirical { values } => {
                let k = values.len() as f64;
                Some((values.clone(), values.iter().map(|_| 1.0 / k).collect()))
            }
            _ => None,
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match &self.kind {
            Kind::Gaussian { mean, stddev } => mean + stddev * gaussian_pair(rng).0,
            Kind::Uniform { lo, hi } => lo + (hi - lo) * rng.unit(),
            Kind::TruncatedGaussian { .. } => {
                let mut u = rng.unit();
                while u == 0.0 {
                    u = rng.unit();
                }
                self.inv_cdf(u).expect("interior quantile")
            }
            Kind::Finite { .. } => self.inv_cdf(rng.unit()).expect("finite quantile"),
            Kind::Empirical { values } => values[rng.index(values.len())],
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Gaussian { mean, stddev } => norm_cdf((x - mean) / stddev),
            Kind::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            Kind::TruncatedGaussian { mean, stddev, lo, hi, z, cdf_lo } => {
                if x < *lo {
                    0.0
                } else if x >= *hi {
                    1.0
                } else {
                    ((norm_cdf((x - mean) / stddev) - cdf_lo) / z).clamp(0.0, 1.0)
                }
            }
            Kind::Finite { values, cum, .. } => {
                // mass of atoms <= x
                match values.partition_point(|&v| v <= x) {
                    0 => 0.0,
                    i => cum[i - 1],
                }
            }
            Kind::Empirical { values } => {
                values.partition_point(|&v| v <= x) as f64 / values.len() as f64
            }
        }
    }

    /// Left limit `F(x^-)`; differs from `cdf` only at atoms.
    pub fn cdf_left(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Finite { values, cum, .. } => match values.partition_point(|&v| v < x) {
                0 => 0.0,
                i => cum[i - 1],
            },
            Kind::Empirical { values } => {
                values.partition_point(|&v| v < x) as f64 / values.len() as f64
            }
            _ => self.cdf(x),
        }
    }

    /// Generalized inverse `inf { x : F(x) > t }` for `t` in `[0, 1)`.
    pub fn inv_cdf(&self, t: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&t) {
            return Err(Error::RejectedInput(format!("quantile argument {t} outside [0, 1)")));
        }
        match &self.kind {
            Kind::Gaussian { mean, stddev } => {
                if t == 0.0 {
                    return Err(Error::RejectedInput("gaussian quantile at 0 is unbounded".into()));
                }
                Ok(mean + stddev * norm_ppf(t)?)
            }
            Kind::Uniform { lo, hi } => Ok(lo + t * (hi - lo)),
            Kind::TruncatedGaussian { mean, stddev, lo, hi, z, cdf_lo } => {
                let q = cdf_lo + t * z;
                if q <= 0.0 {
                    // t = 0 with an unbounded lower edge
                    if lo.is_finite() {
                        return Ok(*lo);
                    }
                    return Err(Error::RejectedInput("truncated gaussian quantile at 0 is unbounded".into()));
                }
                let x = mean + stddev * norm_ppf(q.min(1.0 - 1e-16))?;
                Ok(x.clamp(*lo, *hi))
            }
            Kind::Finite { values, cum, .. } => {
                let i = cum.partition_point(|&c| c <= t);
                Ok(values[i.min(values.len() - 1)])
            }
            Kind::Empirical { values } => {
                let k = values.len();
                let i = ((t * k as f64) as usize).min(k - 1);
                Ok(values[i])
            }
        }
    }
}

/// `KL(nu || mu)` in nats for the supported pairs: discrete/discrete,
/// gaussian/gaussian, truncated-gaussian/gaussian, uniform/uniform.
pub fn kl_divergence(nu: &Dist1D, mu: &Dist1D) -> Result<f64> {
    match (&nu.kind, &mu.kind) {
        (Kind::Finite { .. } | Kind::Empirical { .. }, Kind::Finite { .. } | Kind::Empirical { .. }) => {
            let (nv, nm) = nu.atoms().unwrap();
            let (mv, mm) = mu.atoms().unwrap();
            // empirical multisets may repeat values; fold them first
            let fold = |vs: Vec<f64>, ms: Vec<f64>| -> Vec<(f64, f64)> {
                let mut out: Vec<(f64, f64)> = Vec::new();
                for (v, m) in vs.into_iter().zip(ms) {
                    if out.last().map(|l| l.0) == Some(v) {
                        out.last_mut().unwrap().1 += m;
                    } else {
                        out.push((v, m));
                    }
                }
                out
            };
            let nu_atoms = fold(nv, nm);
            let mu_atoms = fold(mv, mm);
            let mut kl = 0.0;
            for (v, m) in nu_atoms {
                let q = mu_atoms
                    .iter()
                    .find(|a| a.0 == v)
                    .map(|a| a.1)
                    .unwrap_or(0.0);
                if q == 0.0 {
                    return Err(Error::DivergenceUndefined(format!(
                        "nu puts mass {m} on {v} outside mu's support"
                    )));
                }
                kl += m * (m / q).ln();
            }
            Ok(kl.max(0.0))
        }
        (Kind::Gaussian { mean: m1, stddev: s1 }, Kind::Gaussian { mean: m2, stddev: s2 }) => {
            Ok((s2 / s1).ln() + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5)
        }
        (
            Kind::TruncatedGaussian { mean: m1, stddev: s1, lo, hi, z, .. },
            Kind::Gaussian { mean: m2, stddev: s2 },
        ) => {
            // E[ln nu - ln mu] via the truncated normal's first two moments.
            let a = (lo - m1) / s1;
            let b = (hi - m1) / s1;
            let pdf_edge = |t: f64| if t.is_finite() { norm_pdf(t) } else { 0.0 };
            let t_pdf_edge = |t: f64| if t.is_finite() { t * norm_pdf(t) } else { 0.0 };
            let dphi = (pdf_edge(a) - pdf_edge(b)) / z;
            let mean_nu = m1 + s1 * dphi;
            let var_nu = s1 * s1 * (1.0 + (t_pdf_edge(a) - t_pdf_edge(b)) / z - dphi * dphi);
            let e_sq = |c: f64| var_nu + (mean_nu - c) * (mean_nu - c);
            Ok((s2 / (s1 * z)).ln() + e_sq(*m2) / (2.0 * s2 * s2) - e_sq(*m1) / (2.0 * s1 * s1))
        }
        (Kind::Uniform { lo: a, hi: b }, Kind::Uniform { lo: c, hi: d }) => {
            if a < c || b > d {
                return Err(Error::DivergenceUndefined("nu's support exceeds mu's".into()));
            }
            Ok(((d - c) / (b - a)).ln())
        }
        _ => Err(Error::UnsupportedCapability(
            "kl_divergence supports discrete/discrete, gaussian/gaussian, truncated/gaussian, uniform/uniform".into(),
        )),
    }
}
