//! Drift, diffusion and reflection fields.

use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BandSpec, Domain};
use crate::linalg::{check_dim, dot, Matrix, Point};

/// Smallest admissible `|det sigma(x)|`.
pub const MIN_ABS_DET: f64 = 1e-12;
/// Smallest admissible `raw(p)·n(p)` before normalization.
pub const MIN_TRANSVERSALITY: f64 = 1e-10;
/// Tolerance on `r·n = 1` for fields declared pre-normalized.
pub const NORMALIZATION_TOL: f64 = 1e-10;

const PROBE_COUNT: usize = 64;
const PROBE_SEED: u64 = 0x5eed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    Constant { value: Point },
    /// `b(x) = matrix * x + offset`
    Affine { matrix: Matrix, offset: Point },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    Constant { matrix: Matrix },
    /// `sigma(x) = base + sum_j x_j * slopes[j]`
    Affine { base: Matrix, slopes: Vec<Matrix> },
}

/// Serializable description of constant or affine coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSpec {
    pub drift: DriftSpec,
    pub diffusion: DiffusionSpec,
}

type DriftFn = dyn Fn(&[f64]) -> Point + Send + Sync;
type DiffusionFn = dyn Fn(&[f64]) -> Matrix + Send + Sync;

/// User-supplied coefficients, valid only on a band around `D̄`.
#[derive(Clone)]
pub struct UserCoefficients {
    pub drift: Arc<DriftFn>,
    pub diffusion: Arc<DiffusionFn>,
    pub domain: Domain,
    /// One-sided band `phi > -width` on which the functions may be evaluated.
    pub validity: BandSpec,
}

#[derive(Clone)]
enum Coefficients {
    Spec(CoefficientSpec),
    User(UserCoefficients),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientKind {
    Constant,
    Affine,
    UserTable,
}

/// Drift `b` and diffusion `sigma` of the underlying diffusion.
#[derive(Clone)]
pub struct CoefficientField {
    dimension: usize,
    inner: Coefficients,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.inner {
            Coefficients::Spec(s) => f.debug_tuple("CoefficientField").field(s).finish(),
            Coefficients::User(u) => f
                .debug_struct("CoefficientField")
                .field("kind", &"user_table")
                .field("validity", &u.validity)
                .finish(),
        }
    }
}

impl CoefficientField {
    pub fn from_spec(dimension: usize, spec: CoefficientSpec) -> Result<Self> {
        match &spec.drift {
            DriftSpec::Constant { value } => {
                check_dim(dimension, value.dim())?;
                finite(value, "drift")?;
            }
            DriftSpec::Affine { matrix, offset } => {
                check_dim(dimension, matrix.dim())?;
                check_dim(dimension, offset.dim())?;
                finite(offset, "drift offset")?;
            }
        }
        match &spec.diffusion {
            DiffusionSpec::Constant { matrix } => {
                check_dim(dimension, matrix.dim())?;
                let det = matrix.determinant();
                if !(det.abs() > MIN_ABS_DET) {
                    return Err(Error::SingularDiffusion {
                        point: vec![],
                        det,
                    });
                }
            }
            DiffusionSpec::Affine { base, slopes } => {
                check_dim(dimension, base.dim())?;
                check_dim(dimension, slopes.len())?;
                for s in slopes {
                    check_dim(dimension, s.dim())?;
                }
            }
        }
        Ok(CoefficientField {
            dimension,
            inner: Coefficients::Spec(spec),
        })
    }

    pub fn constant(drift: impl Into<Point>, sigma: Matrix) -> Result<Self> {
        let value = drift.into();
        Self::from_spec(
            value.dim(),
            CoefficientSpec {
                drift: DriftSpec::Constant { value },
                diffusion: DiffusionSpec::Constant { matrix: sigma },
            },
        )
    }

    /// Constant drift and `sigma = 0`: the only degenerate diffusion
    /// accepted, for deterministic runs.
    pub fn deterministic(drift: impl Into<Point>) -> Self {
        let value = drift.into();
        CoefficientField {
            dimension: value.dim(),
            inner: Coefficients::Spec(CoefficientSpec {
                diffusion: DiffusionSpec::Constant {
                    matrix: Matrix::zeros(value.dim()),
                },
                drift: DriftSpec::Constant { value },
            }),
        }
    }

    /// Zero drift, identity diffusion.
    pub fn brownian(dimension: usize) -> Self {
        Self::constant(Point::zeros(dimension), Matrix::identity(dimension))
            .expect("identity diffusion is nonsingular")
    }

    pub fn user(coefficients: UserCoefficients) -> Self {
        CoefficientField {
            dimension: coefficients.domain.dimension(),
            inner: Coefficients::User(coefficients),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn kind(&self) -> CoefficientKind {
        match &self.inner {
            Coefficients::Spec(CoefficientSpec {
                drift: DriftSpec::Constant { .. },
                diffusion: DiffusionSpec::Constant { .. },
            }) => CoefficientKind::Constant,
            Coefficients::Spec(_) => CoefficientKind::Affine,
            Coefficients::User(_) => CoefficientKind::UserTable,
        }
    }

    pub fn spec(&self) -> Option<&CoefficientSpec> {
        match &self.inner {
            Coefficients::Spec(s) => Some(s),
            Coefficients::User(_) => None,
        }
    }

    /// `(b, sigma)` when both are constant.
    pub fn as_constant(&self) -> Option<(&Point, &Matrix)> {
        match &self.inner {
            Coefficients::Spec(CoefficientSpec {
                drift: DriftSpec::Constant { value },
                diffusion: DiffusionSpec::Constant { matrix },
            }) => Some((value, matrix)),
            _ => None,
        }
    }

    fn check_validity(&self, x: &[f64]) -> Result<()> {
        check_dim(self.dimension, x.len())?;
        if let Coefficients::User(u) = &self.inner {
            if !u.domain.in_band(x, u.validity)? {
                return Err(Error::OutsideValidity { point: x.to_vec() });
            }
        }
        Ok(())
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_validity(x)?;
        match &self.inner {
            Coefficients::Spec(s) => match &s.drift {
                DriftSpec::Constant { value } => out.copy_from_slice(value),
                DriftSpec::Affine { matrix, offset } => {
                    matrix.mul_vec_into(x, out);
                    out.iter_mut().zip(offset.iter()).for_each(|(o, c)| *o += c);
                }
            },
            Coefficients::User(u) => {
                let v = (u.drift)(x);
                check_dim(self.dimension, v.dim())?;
                out.copy_from_slice(&v);
            }
        }
        Ok(())
    }

    pub fn drift(&self, x: &[f64]) -> Result<Point> {
        let mut out = Point::zeros(self.dimension);
        self.drift_into(x, &mut out)?;
        Ok(out)
    }

    /// `sigma(x)`, checked for nonsingularity.
    pub fn diffusion(&self, x: &[f64]) -> Result<Cow<'_, Matrix>> {
        self.check_validity(x)?;
        let m = match &self.inner {
            Coefficients::Spec(s) => match &s.diffusion {
                // Checked once at construction.
                DiffusionSpec::Constant { matrix } => return Ok(Cow::Borrowed(matrix)),
                DiffusionSpec::Affine { base, slopes } => slopes
                    .iter()
                    .zip(x)
                    .fold(base.clone(), |acc, (s, xj)| acc.add_scaled(*xj, s)),
            },
            Coefficients::User(u) => {
                let m = (u.diffusion)(x);
                check_dim(self.dimension, m.dim())?;
                m
            }
        };
        let det = m.determinant();
        if !(det.abs() > MIN_ABS_DET) {
            return Err(Error::SingularDiffusion {
                point: x.to_vec(),
                det,
            });
        }
        Ok(Cow::Owned(m))
    }
}

fn finite(p: &Point, what: &str) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidCoefficients(format!("{what} must be finite")))
    }
}

/// Serializable raw reflection directions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReflectionSpec {
    /// `r = n`
    Normal,
    /// The same raw vector at every boundary point.
    Constant { vector: Point },
    /// Planar only: `n + tangent_weight * rot90(n)`, with `rot90(v) = (-v_1, v_0)`.
    RotatedNormal { tangent_weight: f64 },
}

type RawFn = dyn Fn(&[f64], &[f64]) -> Point + Send + Sync;

/// A raw (unnormalized) reflection direction as a function of the boundary
/// point and its inward normal.
#[derive(Clone)]
pub enum RawReflection {
    Spec(ReflectionSpec),
    Custom(Arc<RawFn>),
}

impl fmt::Debug for RawReflection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawReflection::Spec(s) => s.fmt(f),
            RawReflection::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl From<ReflectionSpec> for RawReflection {
    fn from(s: ReflectionSpec) -> Self {
        RawReflection::Spec(s)
    }
}

impl RawReflection {
    pub fn custom<F>(f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Point + Send + Sync + 'static,
    {
        RawReflection::Custom(Arc::new(f))
    }

    fn eval(&self, foot: &[f64], normal: &[f64]) -> Point {
        match self {
            RawReflection::Spec(ReflectionSpec::Normal) => Point::from_slice(normal),
            RawReflection::Spec(ReflectionSpec::Constant { vector }) => vector.clone(),
            RawReflection::Spec(ReflectionSpec::RotatedNormal { tangent_weight }) => {
                Point::from([normal[0] - tangent_weight * normal[1], normal[1] + tangent_weight * normal[0]])
            }
            RawReflection::Custom(f) => f(foot, normal),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `r = raw / (raw·n)`
    Rescaled,
    /// Raw values already satisfy `r·n = 1` and are used as-is.
    Prenormalized,
}

/// Boundary reflection field `r` with `r·n ≡ 1`.
#[derive(Clone, Debug)]
pub struct ReflectionField {
    domain: Domain,
    raw: RawReflection,
    normalization: Normalization,
}

/// Rescales `raw` so that `r·n = 1` on `∂D`.
///
/// Transversality (`raw·n > 0`) is checked on a spread of boundary probes
/// here and again at every evaluation.
pub fn normalize_reflection(raw: impl Into<RawReflection>, domain: &Domain) -> Result<ReflectionField> {
    ReflectionField::build(raw.into(), domain, Normalization::Rescaled)
}

impl ReflectionField {
    /// Field whose raw values already satisfy `r·n = 1` within
    /// [`NORMALIZATION_TOL`].
    pub fn prenormalized(raw: impl Into<RawReflection>, domain: &Domain) -> Result<Self> {
        Self::build(raw.into(), domain, Normalization::Prenormalized)
    }

    pub fn normal(domain: &Domain) -> Self {
        Self::build(ReflectionSpec::Normal.into(), domain, Normalization::Rescaled)
            .expect("normal reflection is transversal")
    }

    fn build(raw: RawReflection, domain: &Domain, normalization: Normalization) -> Result<Self> {
        match &raw {
            RawReflection::Spec(ReflectionSpec::Constant { vector }) => {
                check_dim(domain.dimension(), vector.dim())?;
                if !vector.is_finite() {
                    return Err(Error::InvalidReflection("reflection vector must be finite".into()));
                }
            }
            RawReflection::Spec(ReflectionSpec::RotatedNormal { tangent_weight }) => {
                if domain.dimension() != 2 {
                    return Err(Error::InvalidReflection(
                        "rotated-normal reflection is planar only".into(),
                    ));
                }
                if !tangent_weight.is_finite() {
                    return Err(Error::InvalidReflection("tangent weight must be finite".into()));
                }
            }
            _ => {}
        }
        let field = ReflectionField {
            domain: domain.clone(),
            raw,
            normalization,
        };
        for (foot, normal) in domain.boundary_probes(PROBE_COUNT, PROBE_SEED) {
            field.at_boundary(&foot, &normal)?;
        }
        Ok(field)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn spec(&self) -> Option<&ReflectionSpec> {
        match &self.raw {
            RawReflection::Spec(s) => Some(s),
            RawReflection::Custom(_) => None,
        }
    }

    /// `r` at a boundary point given its inward normal.
    pub fn at_boundary(&self, foot: &[f64], normal: &[f64]) -> Result<Point> {
        let raw = self.raw.eval(foot, normal);
        check_dim(self.domain.dimension(), raw.dim())?;
        let along = dot(&raw, normal);
        if !(along > MIN_TRANSVERSALITY) {
            return Err(Error::NonTransversal {
                point: foot.to_vec(),
                dot: along,
            });
        }
        match self.normalization {
            Normalization::Rescaled => Ok(raw.scaled(1.0 / along)),
            Normalization::Prenormalized => {
                if (along - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::InvalidReflection(format!(
                        "r·n = {along} at {foot:?}, expected 1"
                    )));
                }
                Ok(raw)
            }
        }
    }

    /// `r(p)` for `p` on `∂D`.
    pub fn eval(&self, p: &[f64]) -> Result<Point> {
        let normal = self.domain.inward_normal(p)?;
        self.at_boundary(p, &normal)
    }

    /// `r(y(x)) / |r(y(x))|` for `x` in the tube.
    pub fn unit_direction_extension(&self, x: &[f64]) -> Result<Point> {
        let proj = self.domain.project(x)?;
        let r = self.at_boundary(&proj.foot, &proj.normal)?;
        let len = r.norm();
        Ok(r.scaled(1.0 / len))
    }

    /// Normalized constant `r` on a half-space, if that is what this is.
    pub fn as_constant(&self) -> Option<Point> {
        match (&self.raw, self.domain.shape()) {
            (RawReflection::Spec(ReflectionSpec::Constant { .. }), crate::geometry::Shape::HalfSpace { .. })
            | (RawReflection::Spec(ReflectionSpec::Normal), crate::geometry::Shape::HalfSpace { .. }) => {
                let (foot, normal) = self.domain.boundary_probes(1, PROBE_SEED).remove(0);
                self.at_boundary(&foot, &normal).ok()
            }
            _ => None,
        }
    }

    /// Whether `r = n` everywhere.
    pub fn is_normal(&self) -> bool {
        match &self.raw {
            RawReflection::Spec(ReflectionSpec::Normal) => true,
            RawReflection::Spec(ReflectionSpec::RotatedNormal { tangent_weight }) => *tangent_weight == 0.0,
            RawReflection::Spec(ReflectionSpec::Constant { .. }) => {
                self.domain.boundary_probes(PROBE_COUNT, PROBE_SEED).iter().all(|(foot, normal)| {
                    self.at_boundary(foot, normal)
                        .map(|r| r.iter().zip(normal.iter()).all(|(a, b)| (a - b).abs() < 1e-12))
                        .unwrap_or(false)
                })
            }
            RawReflection::Custom(_) => false,
        }
    }
}
