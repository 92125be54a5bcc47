//! Smooth-domain geometry.
//!
//! Each built-in domain has an exact signed distance `phi` (positive inside,
//! zero on the boundary, negative outside), an exact nearest boundary point
//! `y(x)` inside its uniqueness tube, and the inward unit normal at boundary
//! points. The ellipsoid is the only kind without a closed form; its closest
//! point is found by safeguarded Newton iteration on the Lagrange multiplier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_dim, distance, norm, Point};

/// Tolerance for "lies on the boundary".
pub const TOL_BOUNDARY: f64 = 1e-9;
/// Tube radius reported for flat boundaries.
pub const HALF_SPACE_TUBE_CAP: f64 = 1e6;
/// Tangential half-width of the window used when sampling half-space bands.
pub const HALF_SPACE_SAMPLE_EXTENT: f64 = 1.0;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    /// `{x : x[axis] > offset}`
    HalfSpace { axis: usize, offset: f64 },
    Ball { center: Point, radius: f64 },
    Ellipsoid { center: Point, semi_axes: Point },
    /// Spherical shell `inner_radius < |x - center| < outer_radius`.
    Annulus {
        center: Point,
        inner_radius: f64,
        outer_radius: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainRepr", into = "DomainRepr")]
pub struct Domain {
    dimension: usize,
    shape: Shape,
    tube_radius_hint: Option<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DomainRepr {
    dimension: usize,
    shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tube_radius_hint: Option<f64>,
}

impl TryFrom<DomainRepr> for Domain {
    type Error = Error;

    fn try_from(r: DomainRepr) -> Result<Self> {
        Domain::new(r.dimension, r.shape, r.tube_radius_hint)
    }
}

impl From<Domain> for DomainRepr {
    fn from(d: Domain) -> Self {
        DomainRepr {
            dimension: d.dimension,
            shape: d.shape,
            tube_radius_hint: d.tube_radius_hint,
        }
    }
}

/// Boundary band membership: `|phi| < width` or `phi > -width`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    TwoSided,
    OneSidedInner,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub width: f64,
    pub mode: BandMode,
}

impl BandSpec {
    pub fn new(width: f64, mode: BandMode) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::InvalidDomain(format!(
                "band width must be positive, got {width}"
            )));
        }
        Ok(BandSpec { width, mode })
    }

    pub fn two_sided(width: f64) -> Result<Self> {
        Self::new(width, BandMode::TwoSided)
    }

    pub fn one_sided_inner(width: f64) -> Result<Self> {
        Self::new(width, BandMode::OneSidedInner)
    }

    pub fn contains_level(&self, phi: f64) -> bool {
        match self.mode {
            BandMode::TwoSided => phi.abs() < self.width,
            BandMode::OneSidedInner => phi > -self.width,
        }
    }
}

/// Closest boundary point of `x` together with the data the penalty field
/// needs there.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryProjection {
    /// Signed distance `phi(x)`.
    pub distance: f64,
    /// `y(x)`
    pub foot: Point,
    /// Inward unit normal at `y(x)`.
    pub normal: Point,
}

struct Closest {
    distance: f64,
    foot: Point,
    normal: Point,
    unique: bool,
}

impl Domain {
    pub fn new(dimension: usize, shape: Shape, tube_radius_hint: Option<f64>) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidDomain(format!(
                "dimension must be at least 2, got {dimension}"
            )));
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let finite_center = |c: &Point| -> Result<()> {
            check_dim(dimension, c.dim())?;
            if c.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidDomain("center must be finite".into()))
            }
        };
        match &shape {
            Shape::HalfSpace { axis, offset } => {
                if *axis >= dimension {
                    return Err(Error::InvalidDomain(format!(
                        "half-space axis {axis} out of range for dimension {dimension}"
                    )));
                }
                if !offset.is_finite() {
                    return Err(Error::InvalidDomain("offset must be finite".into()));
                }
            }
            Shape::Ball { center, radius } => {
                finite_center(center)?;
                if !positive(*radius) {
                    return Err(Error::InvalidDomain(format!(
                        "ball radius must be positive, got {radius}"
                    )));
                }
            }
            Shape::Ellipsoid { center, semi_axes } => {
                finite_center(center)?;
                check_dim(dimension, semi_axes.dim())?;
                if !semi_axes.iter().all(|&a| positive(a)) {
                    return Err(Error::InvalidDomain(
                        "ellipsoid semi-axes must be positive".into(),
                    ));
                }
            }
            Shape::Annulus {
                center,
                inner_radius,
                outer_radius,
            } => {
                finite_center(center)?;
                if !positive(*inner_radius) || !(outer_radius > inner_radius) || !outer_radius.is_finite() {
                    return Err(Error::InvalidDomain(format!(
                        "annulus needs 0 < inner < outer, got {inner_radius}, {outer_radius}"
                    )));
                }
            }
        }
        if let Some(h) = tube_radius_hint {
            if !positive(h) {
                return Err(Error::InvalidDomain(format!(
                    "tube radius hint must be positive, got {h}"
                )));
            }
        }
        Ok(Domain {
            dimension,
            shape,
            tube_radius_hint,
        })
    }

    pub fn half_space(dimension: usize, axis: usize, offset: f64) -> Result<Self> {
        Self::new(dimension, Shape::HalfSpace { axis, offset }, None)
    }

    pub fn ball(center: impl Into<Point>, radius: f64) -> Result<Self> {
        let center = center.into();
        Self::new(center.dim(), Shape::Ball { center, radius }, None)
    }

    pub fn ellipsoid(center: impl Into<Point>, semi_axes: impl Into<Point>) -> Result<Self> {
        let center = center.into();
        Self::new(
            center.dim(),
            Shape::Ellipsoid {
                center,
                semi_axes: semi_axes.into(),
            },
            None,
        )
    }

    pub fn annulus(center: impl Into<Point>, inner_radius: f64, outer_radius: f64) -> Result<Self> {
        let center = center.into();
        Self::new(
            center.dim(),
            Shape::Annulus {
                center,
                inner_radius,
                outer_radius,
            },
            None,
        )
    }

    pub fn with_tube_radius_hint(self, hint: f64) -> Result<Self> {
        Self::new(self.dimension, self.shape, Some(hint))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Whether every exterior point has a unique nearest boundary point.
    pub fn is_convex(&self) -> bool {
        !matches!(self.shape, Shape::Annulus { .. })
    }

    /// Natural center for radial functionals (origin for half-spaces).
    pub fn center(&self) -> Point {
        match &self.shape {
            Shape::HalfSpace { .. } => Point::zeros(self.dimension),
            Shape::Ball { center, .. }
            | Shape::Ellipsoid { center, .. }
            | Shape::Annulus { center, .. } => center.clone(),
        }
    }

    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dimension, x.len())?;
        Ok(self.signed_distance_unchecked(x))
    }

    fn signed_distance_unchecked(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::HalfSpace { axis, offset } => x[*axis] - offset,
            Shape::Ball { center, radius } => radius - distance(x, center),
            Shape::Annulus {
                center,
                inner_radius,
                outer_radius,
            } => {
                let rho = distance(x, center);
                (rho - inner_radius).min(outer_radius - rho)
            }
            Shape::Ellipsoid { .. } => self.closest(x).distance,
        }
    }

    /// Largest width about `∂D` in which the nearest-point map is unique.
    pub fn tube_radius(&self) -> f64 {
        let intrinsic = match &self.shape {
            Shape::HalfSpace { .. } => HALF_SPACE_TUBE_CAP,
            Shape::Ball { radius, .. } => *radius,
            Shape::Ellipsoid { semi_axes, .. } => {
                let min = semi_axes.iter().cloned().fold(f64::INFINITY, f64::min);
                let max = semi_axes.iter().cloned().fold(0.0, f64::max);
                min * min / max
            }
            Shape::Annulus {
                inner_radius,
                outer_radius,
                ..
            } => inner_radius.min(0.5 * (outer_radius - inner_radius)),
        };
        self.tube_radius_hint.map_or(intrinsic, |h| h.min(intrinsic))
    }

    /// Nearest boundary point, signed distance and inward normal, without
    /// any uniqueness check.
    fn closest(&self, x: &[f64]) -> Closest {
        let d = self.dimension;
        match &self.shape {
            Shape::HalfSpace { axis, offset } => {
                let mut foot = Point::from_slice(x);
                foot[*axis] = *offset;
                Closest {
                    distance: x[*axis] - offset,
                    foot,
                    normal: Point::unit(d, *axis),
                    unique: true,
                }
            }
            Shape::Ball { center, radius } => {
                let (dir, rho) = radial(x, center);
                Closest {
                    distance: radius - rho,
                    foot: center.iter().zip(dir.iter()).map(|(c, u)| c + radius * u).collect(),
                    normal: dir.scaled(-1.0),
                    unique: rho > 0.0,
                }
            }
            Shape::Annulus {
                center,
                inner_radius,
                outer_radius,
            } => {
                let (dir, rho) = radial(x, center);
                let to_inner = rho - inner_radius;
                let to_outer = outer_radius - rho;
                let (radius, normal) = if to_inner < to_outer {
                    (*inner_radius, dir.clone())
                } else {
                    (*outer_radius, dir.scaled(-1.0))
                };
                Closest {
                    distance: to_inner.min(to_outer),
                    foot: center.iter().zip(dir.iter()).map(|(c, u)| c + radius * u).collect(),
                    normal,
                    unique: rho > 0.0 && to_inner != to_outer,
                }
            }
            Shape::Ellipsoid { center, semi_axes } => {
                let u: Point = x.iter().zip(center.iter()).map(|(a, c)| a - c).collect();
                let (p, unique) = ellipsoid_closest(&u, semi_axes);
                let inside = u
                    .iter()
                    .zip(semi_axes.iter())
                    .map(|(ui, ai)| (ui / ai) * (ui / ai))
                    .sum::<f64>()
                    <= 1.0;
                let dist = distance(&u, &p);
                let mut normal: Point = p
                    .iter()
                    .zip(semi_axes.iter())
                    .map(|(pi, ai)| -pi / (ai * ai))
                    .collect();
                let nn = normal.norm();
                normal.iter_mut().for_each(|v| *v /= nn);
                Closest {
                    distance: if inside { dist } else { -dist },
                    foot: p.iter().zip(center.iter()).map(|(pi, c)| pi + c).collect(),
                    normal,
                    unique,
                }
            }
        }
    }

    /// `y(x)`, `phi(x)` and the inward normal at `y(x)`.
    ///
    /// Fails when `x` lies outside the uniqueness tube. Exterior points of
    /// convex domains always project uniquely and are accepted at any depth.
    pub fn project(&self, x: &[f64]) -> Result<BoundaryProjection> {
        check_dim(self.dimension, x.len())?;
        let c = self.closest(x);
        let tube = self.tube_radius();
        let in_tube = c.distance < tube && (c.distance > -tube || self.is_convex());
        if !c.unique || !in_tube {
            return Err(Error::NonUniqueProjection {
                point: x.to_vec(),
                distance: c.distance,
            });
        }
        Ok(BoundaryProjection {
            distance: c.distance,
            foot: c.foot,
            normal: c.normal,
        })
    }

    pub fn nearest_boundary_point(&self, x: &[f64]) -> Result<Point> {
        self.project(x).map(|p| p.foot)
    }

    /// Inward unit normal at a boundary point.
    pub fn inward_normal(&self, p: &[f64]) -> Result<Point> {
        check_dim(self.dimension, p.len())?;
        let c = self.closest(p);
        if c.distance.abs() > TOL_BOUNDARY {
            return Err(Error::NotOnBoundary {
                point: p.to_vec(),
                distance: c.distance,
            });
        }
        Ok(c.normal)
    }

    pub fn in_band(&self, x: &[f64], band: BandSpec) -> Result<bool> {
        Ok(band.contains_level(self.signed_distance(x)?))
    }

    /// Nearest point of `D̄`: `x` itself when `phi(x) >= -TOL_BOUNDARY`.
    pub fn project_to_closure(&self, x: &[f64]) -> Result<Point> {
        check_dim(self.dimension, x.len())?;
        if self.signed_distance_unchecked(x) >= -TOL_BOUNDARY {
            return Ok(Point::from_slice(x));
        }
        self.nearest_boundary_point(x)
    }

    /// Axis-aligned box containing `{phi > -margin}`; `None` for half-spaces.
    pub fn bounding_box(&self, margin: f64) -> Option<(Point, Point)> {
        let (center, half): (&Point, Point) = match &self.shape {
            Shape::HalfSpace { .. } => return None,
            Shape::Ball { center, radius } => {
                (center, Point::from(vec![radius + margin; self.dimension]))
            }
            Shape::Annulus {
                center,
                outer_radius,
                ..
            } => (center, Point::from(vec![outer_radius + margin; self.dimension])),
            Shape::Ellipsoid { center, semi_axes } => {
                (center, semi_axes.iter().map(|a| a + margin).collect())
            }
        };
        let lo = center.iter().zip(half.iter()).map(|(c, h)| c - h).collect();
        let hi = center.iter().zip(half.iter()).map(|(c, h)| c + h).collect();
        Some((lo, hi))
    }

    /// Uniform samples from a boundary band (rejection from a bounding box;
    /// half-spaces use a tangential window of half-width
    /// [`HALF_SPACE_SAMPLE_EXTENT`]).
    pub fn sample_band(&self, band: BandSpec, count: usize, seed: u64) -> Vec<Point> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        let d = self.dimension;
        match &self.shape {
            Shape::HalfSpace { axis, offset } => {
                let (lo, hi) = match band.mode {
                    BandMode::TwoSided => (offset - band.width, offset + band.width),
                    BandMode::OneSidedInner => (offset - band.width, offset + HALF_SPACE_SAMPLE_EXTENT),
                };
                for _ in 0..count {
                    let mut p = Point::zeros(d);
                    for (i, c) in p.iter_mut().enumerate() {
                        *c = if i == *axis {
                            rng.random_range(lo..hi)
                        } else {
                            rng.random_range(-HALF_SPACE_SAMPLE_EXTENT..HALF_SPACE_SAMPLE_EXTENT)
                        };
                    }
                    if band.contains_level(self.signed_distance_unchecked(&p)) {
                        out.push(p);
                    }
                }
            }
            _ => {
                let (lo, hi) = self.bounding_box(band.width).expect("bounded shape");
                let max_attempts = count.saturating_mul(100_000).max(1);
                let mut attempts = 0usize;
                while out.len() < count && attempts < max_attempts {
                    attempts += 1;
                    let p: Point = lo
                        .iter()
                        .zip(hi.iter())
                        .map(|(a, b)| rng.random_range(*a..*b))
                        .collect();
                    if band.contains_level(self.signed_distance_unchecked(&p)) {
                        out.push(p);
                    }
                }
            }
        }
        out
    }

    /// Deterministic spread of boundary points with their inward normals,
    /// used to validate boundary fields.
    pub fn boundary_probes(&self, count: usize, seed: u64) -> Vec<(Point, Point)> {
        if let Shape::HalfSpace { axis, offset } = &self.shape {
            let mut p = Point::zeros(self.dimension);
            p[*axis] = *offset;
            return vec![(p, Point::unit(self.dimension, *axis))];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let center = self.center();
        let radius = match &self.shape {
            Shape::Ball { radius, .. } => *radius,
            Shape::Annulus { outer_radius, .. } => 2.0 * outer_radius,
            Shape::Ellipsoid { semi_axes, .. } => 2.0 * semi_axes.iter().cloned().fold(0.0, f64::max),
            Shape::HalfSpace { .. } => unreachable!(),
        };
        let mut probes = Vec::with_capacity(count);
        let mut k = 0;
        while probes.len() < count {
            let dir: Point = if k < 2 * self.dimension {
                let mut e = Point::unit(self.dimension, k / 2);
                if k % 2 == 1 {
                    e[k / 2] = -1.0;
                }
                e
            } else {
                let g: Point = (0..self.dimension).map(|_| rng.random_range(-1.0..1.0)).collect();
                let n = g.norm();
                if n < 1e-3 {
                    k += 1;
                    continue;
                }
                g.scaled(1.0 / n)
            };
            k += 1;
            // Outer boundary along `dir`, plus the inner one for the annulus.
            let far: Point = center.iter().zip(dir.iter()).map(|(c, u)| c + radius * u).collect();
            let c = self.closest(&far);
            probes.push((c.foot, c.normal));
            if let Shape::Annulus { inner_radius, .. } = &self.shape {
                if probes.len() < count {
                    let near: Point = center
                        .iter()
                        .zip(dir.iter())
                        .map(|(c, u)| c + 0.5 * inner_radius * u)
                        .collect();
                    let c = self.closest(&near);
                    probes.push((c.foot, c.normal));
                }
            }
        }
        probes
    }
}

/// Unit direction `(x - c)/|x - c|` and `|x - c|`; `e_0` at the center.
fn radial(x: &[f64], center: &[f64]) -> (Point, f64) {
    let mut u: Point = x.iter().zip(center).map(|(a, c)| a - c).collect();
    let rho = norm(&u);
    if rho > 0.0 {
        u.iter_mut().for_each(|v| *v /= rho);
    } else {
        u = Point::unit(x.len(), 0);
    }
    (u, rho)
}

/// Closest point on `sum (p_i / a_i)^2 = 1` to `u` (ellipsoid centered at the
/// origin). Returns the point and whether it is unique.
///
/// The minimizer is `p_i = a_i^2 u_i / (a_i^2 + t)` where `t` is the root of
/// `F(t) = sum (a_i u_i / (a_i^2 + t))^2 - 1` on `(-a_min^2, inf)`. `F` is
/// convex and decreasing there, so Newton started left of the root converges
/// monotonically; a bisection bracket guards against rounding.
fn ellipsoid_closest(u: &[f64], a: &[f64]) -> (Point, bool) {
    let q: f64 = u.iter().zip(a).map(|(ui, ai)| (ui / ai) * (ui / ai)).sum();
    if q == 1.0 {
        return (Point::from_slice(u), true);
    }
    let a_min = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let a_max = a.iter().cloned().fold(0.0, f64::max);
    let pole = -a_min * a_min;

    let f = |t: f64| -> (f64, f64) {
        let mut value = -1.0;
        let mut slope = 0.0;
        for (ui, ai) in u.iter().zip(a) {
            let denom = ai * ai + t;
            let r = ai * ui / denom;
            value += r * r;
            slope -= 2.0 * r * r / denom;
        }
        (value, slope)
    };

    let (mut lo, mut hi) = if q > 1.0 {
        (0.0, a_max * norm(u))
    } else {
        // Interior point on the medial axis of the minimal semi-axes: F stays
        // below zero on the whole branch and the minimizer is not unique.
        let on_minimal_axes = u
            .iter()
            .zip(a)
            .all(|(ui, ai)| *ai != a_min || *ui == 0.0);
        if on_minimal_axes {
            let mut p = Point::zeros(u.len());
            let mut rem = 1.0;
            for (i, (ui, ai)) in u.iter().zip(a).enumerate() {
                if *ai != a_min {
                    p[i] = ai * ai * ui / (ai * ai - a_min * a_min);
                    rem -= (p[i] / ai) * (p[i] / ai);
                }
            }
            if rem >= 0.0 {
                let m = a.iter().position(|ai| *ai == a_min).unwrap();
                p[m] = a_min * rem.sqrt();
                return (p, rem == 0.0);
            }
        }
        (pole, 0.0)
    };

    let mut t = u
        .iter()
        .zip(a)
        .map(|(ui, ai)| ai * ui.abs() - ai * ai)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(lo);
    if !(t > lo && t < hi) {
        t = 0.5 * (lo + hi);
    }
    for _ in 0..NEWTON_MAX_ITER * 2 {
        let (value, slope) = f(t);
        if value == 0.0 {
            break;
        }
        if value > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mut next = t - value / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let done = (next - t).abs() <= NEWTON_TOL * t.abs().max(1.0);
        t = next;
        if done || hi - lo <= f64::EPSILON * t.abs().max(1.0) {
            break;
        }
    }
    let p = u
        .iter()
        .zip(a)
        .map(|(ui, ai)| ai * ai * ui / (ai * ai + t))
        .collect();
    (p, true)
}
