//! Transport reductions: solving a set-transport problem on one space by
//! mapping it to another space that already has a transporter.
//!
//! A reduction is a pair of maps `f` (source to intermediate, randomness
//! allowed) and `g` (intermediate back to source, deterministic) such that
//! `f` pushes the source law to the intermediate law, `g` pushes it back,
//! and `g` is `alpha`-Lipschitz in the relevant costs. Transporting `f(x)`
//! to the pulled-back set `g^{-1}(S)` and mapping back through `g` then
//! solves the source problem at `alpha` times the intermediate cost.
//!
//! Two reductions are provided: the open unit cube to the standard Gaussian
//! (coordinatewise CDF maps) and the radius-`sqrt(n)` sphere to the Gaussian
//! conditioned outside that sphere (radial rescaling).

use std::sync::Arc;

use crate::cost::CostSpec;
use crate::dist1d::{norm_cdf, norm_ppf, Dist1D};
use crate::error::{Error, Result};
use crate::point::Point;
use crate::rng::RngStream;
use crate::seqsampler::MembershipOracle;
use crate::transporter::{compose, set_transport, set_transport_with_cap, Direction};

/// A lower bound on the standard Gaussian mass outside the radius-`sqrt(n)`
/// ball, valid for every dimension (the mass grows from ~0.3174 at n = 1
/// toward 1/2), used to size rejection budgets.
pub const EXTERIOR_MASS_HINT: f64 = 0.31;

/// Per-round rejection trial cap for the sphere-route stages. The exterior
/// set's conditional mass at the last rounds can drop to `P(chi^2_1 >= n)`
/// for low-norm prefixes, orders of magnitude below its overall mass, so
/// the default mass-calibrated cap would abort draws that merely hit an
/// unlucky prefix. The wide cap adds no expected cost.
const SPHERE_STAGE_TRIAL_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ReductionKind {
    CubeGauss { n: usize },
    SphereGauss { n: usize },
}

/// A source-to-intermediate transport reduction; see the module docs.
#[derive(Debug, Clone)]
pub struct Reduction {
    kind: ReductionKind,
    lipschitz_alpha: f64,
    online: bool,
}

/// Uniform cube `(0, 1)^n` to the standard Gaussian product: `f` applies the
/// normal quantile coordinatewise, `g` the normal CDF. `g` contracts every
/// `l_p` distance (the CDF is 1-Lipschitz), so `alpha = 1`, and both maps
/// are coordinatewise, so the reduction preserves onlineness.
pub fn cube_gauss_reduction(n: usize) -> Result<Reduction> {
    if n == 0 {
        return Err(Error::RejectedInput("dimension must be positive".into()));
    }
    Ok(Reduction { kind: ReductionKind::CubeGauss { n }, lipschitz_alpha: 1.0, online: true })
}

/// Uniform sphere of radius `sqrt(n)` to the standard Gaussian conditioned
/// on `l2 >= sqrt(n)`: `f` rescales the point to a radius drawn from the
/// conditioned norm law, `g` projects back onto the sphere. Projection onto
/// the sphere contracts `l2` between exterior points, so `alpha = 1` for
/// `l2`; measuring the source in spherical distance instead multiplies the
/// bound by pi (`s <= pi * l2` on the sphere).
pub fn sphere_gauss_reduction(n: usize) -> Result<Reduction> {
    if n == 0 {
        return Err(Error::RejectedInput("dimension must be positive".into()));
    }
    Ok(Reduction { kind: ReductionKind::SphereGauss { n }, lipschitz_alpha: 1.0, online: false })
}

fn l2_sq(coords: &[f64]) -> f64 {
    coords.iter().map(|v| v * v).sum()
}

/// Radius sample of the Gaussian conditioned outside the sphere, by
/// rejection from the unconditioned product.
fn conditioned_radius(n: usize, rng: &mut RngStream) -> Result<f64> {
    let gauss = Dist1D::standard_gaussian();
    for _ in 0..1000 {
        let sq: f64 = (0..n).map(|_| gauss.sample(rng).powi(2)).sum();
        if sq >= n as f64 {
            return Ok(sq.sqrt());
        }
    }
    Err(Error::internal(
        "norm rejection failed 1000 times; the acceptance probability is at least 0.31",
    ))
}

impl Reduction {
    pub fn n(&self) -> usize {
        match self.kind {
            ReductionKind::CubeGauss { n } | ReductionKind::SphereGauss { n } => n,
        }
    }

    pub fn lipschitz_alpha(&self) -> f64 {
        self.lipschitz_alpha
    }

    /// Whether `f` and `g` act coordinate-by-coordinate, so that reducing an
    /// online transporter yields an online transporter again.
    pub fn online(&self) -> bool {
        self.online
    }

    fn label(&self) -> String {
        match self.kind {
            ReductionKind::CubeGauss { n } => format!("cube-gauss(n={n})"),
            ReductionKind::SphereGauss { n } => format!("sphere-gauss(n={n})"),
        }
    }

    fn check_dim(&self, p: &Point) -> Result<()> {
        p.check_dim(self.n())
    }

    /// Source to intermediate. Exact-law pushforward: uniform cube draws map
    /// to Gaussian draws; uniform sphere draws map to conditioned-Gaussian
    /// draws (randomized through the radius).
    pub fn forward(&self, x: &Point, rng: &mut RngStream) -> Result<Point> {
        self.check_dim(x)?;
        match self.kind {
            ReductionKind::CubeGauss { .. } => {
                let mut out = Vec::with_capacity(x.dim());
                for &u in x.coords() {
                    if !(u > 0.0 && u < 1.0) {
                        return Err(Error::RejectedInput(format!(
                            "cube coordinate {u} lies outside the open interval (0, 1)"
                        )));
                    }
                    out.push(norm_ppf(u)?);
                }
                Point::new(out)
            }
            ReductionKind::SphereGauss { n } => {
                let sq = l2_sq(x.coords());
                if (sq / n as f64 - 1.0).abs() > 1e-9 {
                    return Err(Error::RejectedInput(format!(
                        "input has squared norm {sq}, not on the radius-sqrt({n}) sphere"
                    )));
                }
                let d = conditioned_radius(n, rng)?;
                let scale = d / sq.sqrt();
                Point::new(x.coords().iter().map(|v| v * scale).collect())
            }
        }
    }

    /// Intermediate back to source; deterministic.
    pub fn backward(&self, x: &Point) -> Result<Point> {
        self.check_dim(x)?;
        match self.kind {
            ReductionKind::CubeGauss { .. } => {
                Point::new(x.coords().iter().map(|&v| norm_cdf(v)).collect())
            }
            ReductionKind::SphereGauss { n } => {
                let r = l2_sq(x.coords()).sqrt();
                let root_n = (n as f64).sqrt();
                if r < root_n * (1.0 - 1e-12) {
                    return Err(Error::RejectedInput(format!(
                        "input has l2 norm {r}, inside the radius-{root_n} sphere"
                    )));
                }
                let scale = root_n / r;
                Point::new(x.coords().iter().map(|v| v * scale).collect())
            }
        }
    }
}

/// Membership in `{x : l2(x) >= sqrt(n)}`, the intermediate support of the
/// sphere reduction.
pub struct ExteriorOracle {
    n: usize,
}

impl ExteriorOracle {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::RejectedInput("dimension must be positive".into()));
        }
        Ok(ExteriorOracle { n })
    }
}

impl MembershipOracle for ExteriorOracle {
    fn contains(&self, point: &[f64]) -> Result<bool> {
        if point.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: point.len() });
        }
        Ok(l2_sq(point) >= self.n as f64)
    }

    fn describe(&self) -> String {
        format!("exterior(n={})", self.n)
    }
}

/// The source set seen from the intermediate space: `z` is a member when
/// `g(z)` is defined and lands in `set`. Points outside `g`'s domain are
/// non-members, which confines rejection sampling to the intermediate
/// support.
pub struct PullbackOracle {
    reduction: Reduction,
    set: Arc<dyn MembershipOracle>,
}

pub fn pullback(reduction: Reduction, set: Arc<dyn MembershipOracle>) -> PullbackOracle {
    PullbackOracle { reduction, set }
}

impl MembershipOracle for PullbackOracle {
    fn contains(&self, point: &[f64]) -> Result<bool> {
        let p = Point::new(point.to_vec())?;
        match self.reduction.backward(&p) {
            Ok(back) => self.set.contains(back.coords()),
            Err(Error::RejectedInput(_)) => Ok(false),
            Err(e) => Err(e),
        }
    }

    fn describe(&self) -> String {
        format!("pullback({} via {})", self.set.describe(), self.reduction.label())
    }
}

/// Runs a source-space set transport through a reduction: maps `x` to the
/// intermediate space, hands the pulled-back membership oracle and the
/// mapped point to `inner` (a set transport for the intermediate law), and
/// maps the result back. The output always satisfies `set`, at transport
/// cost at most `alpha` times the intermediate cost.
pub fn apply_reduction<F>(
    reduction: &Reduction,
    inner: F,
    set: Arc<dyn MembershipOracle>,
    x: &Point,
    rng: &mut RngStream,
) -> Result<Point>
where
    F: FnOnce(Box<dyn MembershipOracle>, &Point, &mut RngStream) -> Result<Point>,
{
    let x2 = reduction.forward(x, rng)?;
    let pulled = pullback(reduction.clone(), set);
    let y2 = inner(Box::new(pulled), &x2, rng)?;
    reduction.backward(&y2)
}

/// Set transport for the standard Gaussian product, shaped for
/// [`apply_reduction`]: the intermediate law of the cube reduction.
/// `epsilon_hint` is the Gaussian measure of the pulled-back set.
pub fn gaussian_set_inner(
    cost: CostSpec,
    k: usize,
    epsilon_hint: f64,
) -> impl FnOnce(Box<dyn MembershipOracle>, &Point, &mut RngStream) -> Result<Point> {
    move |set, x2, rng| {
        let marginals = vec![Dist1D::standard_gaussian(); x2.dim()];
        let transporter = set_transport(marginals, set, cost, k, epsilon_hint)?;
        Ok(transporter.transport(x2, rng)?.y)
    }
}

/// Set transport for the Gaussian conditioned outside the sphere, shaped
/// for [`apply_reduction`]: the intermediate law of the sphere reduction.
/// Composes an inverse exterior-set transport (conditioned Gaussian back to
/// the product) with a forward transport into the pulled-back set, so the
/// end-to-end cost obeys the two-stage triangle bound. `epsilon_hint` is
/// the set's measure under the sphere law; its Gaussian measure is that
/// times the exterior mass.
pub fn conditioned_gaussian_inner(
    cost: CostSpec,
    k: usize,
    epsilon_hint: f64,
) -> impl FnOnce(Box<dyn MembershipOracle>, &Point, &mut RngStream) -> Result<Point> {
    move |set, x2, rng| {
        let n = x2.dim();
        let marginals = vec![Dist1D::standard_gaussian(); n];
        let exterior = set_transport_with_cap(
            marginals.clone(),
            Box::new(ExteriorOracle::new(n)?),
            cost.clone(),
            k,
            EXTERIOR_MASS_HINT,
            SPHERE_STAGE_TRIAL_CAP,
        )?
        .with_direction(Direction::Inverse);
        let into_set = set_transport_with_cap(
            marginals,
            set,
            cost,
            k,
            epsilon_hint * EXTERIOR_MASS_HINT,
            SPHERE_STAGE_TRIAL_CAP,
        )?;
        let composed = compose(Arc::new(exterior), Arc::new(into_set))?;
        Ok(composed.apply(x2, rng)?.output)
    }
}

/// Expected `l2` set-transport cost bound for the uniform sphere measure
/// and a set of measure `epsilon`: `sqrt(2 ln 1/epsilon) + 1.52`, the
/// two-stage route through the Gaussian product. The spherical-distance
/// version of the bound is `pi` times this.
pub fn sphere_set_transport_cost_bound(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::RejectedInput(format!(
            "set measure must lie in (0, 1], got {epsilon}"
        )));
    }
    Ok((2.0 * (1.0 / epsilon).ln()).sqrt() + 1.52)
}

/// Great-circle distance on the radius-`sqrt(n)` sphere:
/// `sqrt(n) * arccos(<z, w> / n)` with the inner product clamped to
/// `[-n, n]` for numerical safety at coincident or antipodal points.
pub fn spherical_distance(z: &Point, w: &Point) -> Result<f64> {
    if z.dim() != w.dim() {
        return Err(Error::DimensionMismatch { expected: z.dim(), got: w.dim() });
    }
    let n = z.dim() as f64;
    for p in [z, w] {
        let sq = l2_sq(p.coords());
        if (sq / n - 1.0).abs() > 1e-6 {
            return Err(Error::RejectedInput(format!(
                "point with squared norm {sq} is not on the radius-sqrt({n}) sphere"
            )));
        }
    }
    let dot: f64 = z.coords().iter().zip(w.coords()).map(|(a, b)| a * b).sum();
    let cos = (dot / n).clamp(-1.0, 1.0);
    Ok(n.sqrt() * cos.acos())
}

/// A uniform draw from the radius-`sqrt(n)` sphere: a standard Gaussian
/// vector rescaled to that radius.
pub fn uniform_sphere_point(n: usize, rng: &mut RngStream) -> Result<Point> {
    if n == 0 {
        return Err(Error::RejectedInput("dimension must be positive".into()));
    }
    let gauss = Dist1D::standard_gaussian();
    loop {
        let v: Vec<f64> = (0..n).map(|_| gauss.sample(rng)).collect();
        let r = l2_sq(&v).sqrt();
        if r > 0.0 {
            let scale = (n as f64).sqrt() / r;
            return Point::new(v.iter().map(|x| x * scale).collect());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seqsampler::{FullSpace, HalfspaceOracle};
    use crate::transporter::{OnlineTransporter, Shortcut};

    #[test]
    fn cube_center_and_roundtrip() {
        let r = cube_gauss_reduction(3).unwrap();
        let mid = r.backward(&Point::new(vec![0.0, 0.0, 0.0]).unwrap()).unwrap();
        assert_eq!(mid.coords(), &[0.5, 0.5, 0.5]);

        let mut rng = RngStream::new(1, 0);
        let gauss = Dist1D::standard_gaussian();
        for _ in 0..1000 {
            let y = Point::new(vec![gauss.sample(&mut rng), gauss.sample(&mut rng), gauss.sample(&mut rng)])
                .unwrap();
            let back = r.forward(&r.backward(&y).unwrap(), &mut rng).unwrap();
            for (a, b) in back.coords().iter().zip(y.coords()) {
                assert!((a - b).abs() < 1e-8, "roundtrip {a} vs {b}");
            }
        }
    }

    #[test]
    fn cube_forward_domain() {
        let r = cube_gauss_reduction(2).unwrap();
        let mut rng = RngStream::new(2, 0);
        for bad in [vec![0.0, 0.5], vec![0.5, 1.0], vec![-0.2, 0.5], vec![0.5, 1.3]] {
            let err = r.forward(&Point::new(bad).unwrap(), &mut rng).unwrap_err();
            assert!(matches!(err, Error::RejectedInput(_)));
        }
    }

    #[test]
    fn normal_cdf_is_1_lipschitz() {
        let mut rng = RngStream::new(3, 0);
        let gauss = Dist1D::standard_gaussian();
        for _ in 0..10_000 {
            let a = 3.0 * gauss.sample(&mut rng);
            let b = 3.0 * gauss.sample(&mut rng);
            assert!((norm_cdf(a) - norm_cdf(b)).abs() <= (a - b).abs() + 1e-15);
        }
    }

    #[test]
    fn sphere_projection_arithmetic() {
        let r = sphere_gauss_reduction(4).unwrap();
        let x = Point::new(vec![2.0, 2.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.backward(&x).unwrap().coords(), &[1.0, 1.0, 1.0, 1.0]);

        let inside = Point::new(vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        assert!(matches!(r.backward(&inside).unwrap_err(), Error::RejectedInput(_)));

        let mut rng = RngStream::new(4, 0);
        assert!(matches!(r.forward(&inside, &mut rng).unwrap_err(), Error::RejectedInput(_)));
    }

    /// A Gaussian point pushed outside the sphere by a random radial factor.
    fn exterior_point(n: usize, rng: &mut RngStream) -> Point {
        let on_sphere = uniform_sphere_point(n, rng).unwrap();
        let factor = 1.0 + rng.unit() * 2.0;
        Point::new(on_sphere.coords().iter().map(|v| v * factor).collect()).unwrap()
    }

    #[test]
    fn sphere_projection_contracts_l2() {
        let r = sphere_gauss_reduction(3).unwrap();
        let mut rng = RngStream::new(5, 0);
        for _ in 0..10_000 {
            let x = exterior_point(3, &mut rng);
            let y = exterior_point(3, &mut rng);
            let dist = |a: &Point, b: &Point| {
                a.coords()
                    .iter()
                    .zip(b.coords())
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum::<f64>()
                    .sqrt()
            };
            let gx = r.backward(&x).unwrap();
            let gy = r.backward(&y).unwrap();
            assert!(dist(&gx, &gy) <= dist(&x, &y) + 1e-12);
            // Composite bound in the spherical metric.
            assert!(spherical_distance(&gx, &gy).unwrap() <= std::f64::consts::PI * dist(&x, &y) + 1e-9);
        }
    }

    #[test]
    fn spherical_distance_values() {
        let n = 4usize;
        let z = Point::new(vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let w = Point::new(vec![-1.0, -1.0, -1.0, -1.0]).unwrap();
        let root_n = (n as f64).sqrt();
        assert!((spherical_distance(&z, &z).unwrap() - 0.0).abs() < 1e-12);
        let d = spherical_distance(&z, &w).unwrap();
        assert!((d - std::f64::consts::PI * root_n).abs() < 1e-9, "diameter distance {d}");

        let off = Point::new(vec![5.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(spherical_distance(&z, &off).is_err());
    }

    #[test]
    fn sphere_forward_pushforward() {
        // Radius law: conditioned on exceeding sqrt(n); for n = 2 the squared
        // norm is Exp(mean 2), so P[sq >= 4 | sq >= 2] = exp(-1).
        let n = 2usize;
        let r = sphere_gauss_reduction(n).unwrap();
        let mut rng = RngStream::new(6, 0);
        let reps = 3000;
        let mut beyond = 0usize;
        let mut dir_sum = [0.0f64; 2];
        for _ in 0..reps {
            let x = uniform_sphere_point(n, &mut rng).unwrap();
            let fx = r.forward(&x, &mut rng).unwrap();
            let sq = l2_sq(fx.coords());
            assert!(sq >= n as f64 - 1e-9);
            if sq >= 4.0 {
                beyond += 1;
            }
            let norm = sq.sqrt();
            dir_sum[0] += fx[0] / norm;
            dir_sum[1] += fx[1] / norm;
        }
        let frac = beyond as f64 / reps as f64;
        let expect = (-1.0f64).exp();
        assert!((frac - expect).abs() < 0.045, "conditioned tail fraction {frac} vs {expect}");
        for s in dir_sum {
            let mean = s / reps as f64;
            assert!(mean.abs() < 0.065, "direction mean {mean}");
        }
    }

    #[test]
    fn apply_reduction_identity_inner() {
        let n = 2;
        let r = cube_gauss_reduction(n).unwrap();
        let x = Point::new(vec![0.3, 0.8]).unwrap();
        let mut rng = RngStream::new(7, 0);
        let identity = |_set: Box<dyn MembershipOracle>, x2: &Point, rng: &mut RngStream| {
            let marginals = vec![Dist1D::standard_gaussian(); 2];
            let t = OnlineTransporter::product_to_product(
                marginals.clone(),
                marginals,
                CostSpec::lp(2.0),
                4,
            )?
            .with_shortcut(Shortcut::both())?;
            Ok(t.transport(x2, rng)?.y)
        };
        let y = apply_reduction(&r, identity, Arc::new(FullSpace), &x, &mut rng).unwrap();
        for (a, b) in y.coords().iter().zip(x.coords()) {
            assert!((a - b).abs() < 1e-9, "identity pipeline moved {b} to {a}");
        }
    }

    #[test]
    fn apply_reduction_cube_halfspace() {
        let n = 2;
        let eps = 0.3;
        let r = cube_gauss_reduction(n).unwrap();
        let set = Arc::new(HalfspaceOracle::axis(n, 0, 1.0 - eps).unwrap());
        let mut rng = RngStream::new(8, 0);
        let mut total = 0.0;
        let reps = 100;
        for _ in 0..reps {
            let x = Point::new((0..n).map(|_| rng.unit().clamp(1e-9, 1.0 - 1e-9)).collect()).unwrap();
            let y = apply_reduction(
                &r,
                gaussian_set_inner(CostSpec::lp(2.0), 30, eps),
                set.clone(),
                &x,
                &mut rng,
            )
            .unwrap();
            assert!(y[0] >= 1.0 - eps, "output {y:?} escaped the set");
            assert!(y.coords().iter().all(|&v| v > 0.0 && v < 1.0));
            total += x
                .coords()
                .iter()
                .zip(y.coords())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let mean_sq = total / reps as f64;
        let bound = 2.0 * (1.0 / eps).ln();
        assert!(mean_sq <= bound + 1.5, "mean squared cost {mean_sq} vs bound {bound}");
    }

    #[test]
    fn apply_reduction_sphere_halfspace() {
        let n = 3;
        let r = sphere_gauss_reduction(n).unwrap();
        // Sphere measure of {sum x_i >= 0} is exactly 1/2 by symmetry.
        let set = Arc::new(HalfspaceOracle::diagonal(n, 0.0).unwrap());
        let mut rng = RngStream::new(9, 0);
        let mut total = 0.0;
        let reps = 50;
        for _ in 0..reps {
            let x = uniform_sphere_point(n, &mut rng).unwrap();
            let y = apply_reduction(
                &r,
                conditioned_gaussian_inner(CostSpec::lp(2.0), 20, 0.5),
                set.clone(),
                &x,
                &mut rng,
            )
            .unwrap();
            let sq = l2_sq(y.coords());
            assert!((sq / n as f64 - 1.0).abs() < 1e-9, "output squared norm {sq}");
            assert!(y.coords().iter().sum::<f64>() >= 0.0);
            total += x
                .coords()
                .iter()
                .zip(y.coords())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
        }
        let mean = total / reps as f64;
        let bound = sphere_set_transport_cost_bound(0.5).unwrap();
        assert!(mean <= bound + 1.0, "mean l2 cost {mean} vs bound {bound}");
    }

    #[test]
    fn cost_bound_values() {
        assert!((sphere_set_transport_cost_bound(1.0).unwrap() - 1.52).abs() < 1e-12);
        let e2 = (-2.0f64).exp();
        assert!((sphere_set_transport_cost_bound(e2).unwrap() - 3.52).abs() < 1e-12);
        assert!(sphere_set_transport_cost_bound(0.0).is_err());
        assert!(sphere_set_transport_cost_bound(1.1).is_err());
    }

    #[test]
    fn pullback_membership() {
        let r = sphere_gauss_reduction(2).unwrap();
        let set = Arc::new(HalfspaceOracle::axis(2, 0, 0.0).unwrap());
        let oracle = pullback(r, set);
        // Inside the sphere: outside g's domain, hence not a member.
        assert!(!oracle.contains(&[0.1, 0.1]).unwrap());
        // Exterior point projecting onto the x >= 0 half of the sphere.
        assert!(oracle.contains(&[3.0, 1.0]).unwrap());
        assert!(!oracle.contains(&[-3.0, 1.0]).unwrap());
        assert!(oracle.describe().contains("pullback"));
    }
}
