//! Compact closed sets built from points, segments, closed polylines and balls,
//! with nearest-point queries under an arbitrary norm.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{GeometryError, Norm, NormKind, Vector};
use crate::scalar::Real;

/// Coarse angular scan used before refining the nearest point on a ball
/// boundary under a non-Euclidean norm.
const BALL_SCAN: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("scene has no primitives")]
    Empty,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("primitive {index}: {message}")]
    BadPrimitive { index: usize, message: String },
    #[error("scene parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("query point lies within {tolerance} of the set")]
    OnSet { tolerance: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Primitive<T> {
    Point(Vector<T>),
    Segment(Vector<T>, Vector<T>),
    /// Closed polyline; the last vertex connects back to the first.
    Loop(Vec<Vector<T>>),
    Ball {
        center: Vector<T>,
        radius: T,
    },
}

impl<T: Real> Primitive<T> {
    fn dim(&self) -> usize {
        match self {
            Primitive::Point(p) => p.dim(),
            Primitive::Segment(a, _) => a.dim(),
            Primitive::Loop(pts) => pts[0].dim(),
            Primitive::Ball { center, .. } => center.dim(),
        }
    }

    fn validate(&self, index: usize) -> Result<(), SceneError> {
        let bad = |message: &str| SceneError::BadPrimitive { index, message: message.into() };
        let dim = match self {
            Primitive::Loop(pts) if pts.len() < 2 => return Err(bad("a loop needs at least 2 points")),
            _ => self.dim(),
        };
        let mut pts: Vec<Vector<T>> = Vec::new();
        match self {
            Primitive::Point(p) => pts.push(*p),
            Primitive::Segment(a, b) => pts.extend([*a, *b]),
            Primitive::Loop(l) => pts.extend(l.iter().copied()),
            Primitive::Ball { center, radius } => {
                if !(radius.is_finite() && *radius > T::zero()) {
                    return Err(bad("ball radius must be positive and finite"));
                }
                pts.push(*center);
            }
        }
        for p in pts {
            if p.dim() != dim {
                return Err(bad("mixed dimensions"));
            }
            if !p.is_finite() {
                return Err(SceneError::Geometry(GeometryError::NonFinite));
            }
        }
        Ok(())
    }

    /// Nearest point of this primitive to `x` and its distance.
    fn nearest(&self, x: &Vector<T>, norm: &Norm<T>, out: &mut Vec<(Vector<T>, T)>) {
        match self {
            Primitive::Point(p) => out.push((*p, norm.eval(&(*p - *x)))),
            Primitive::Segment(a, b) => out.push(nearest_on_segment(a, b, x, norm)),
            Primitive::Loop(pts) => {
                for (i, a) in pts.iter().enumerate() {
                    let b = &pts[(i + 1) % pts.len()];
                    out.push(nearest_on_segment(a, b, x, norm));
                }
            }
            Primitive::Ball { center, radius } => out.push(nearest_on_ball(center, *radius, x, norm)),
        }
    }

    fn distance(&self, x: &Vector<T>, norm: &Norm<T>) -> T {
        match self {
            Primitive::Point(p) => norm.eval(&(*p - *x)),
            Primitive::Segment(a, b) => nearest_on_segment(a, b, x, norm).1,
            Primitive::Loop(pts) => (0..pts.len())
                .map(|i| nearest_on_segment(&pts[i], &pts[(i + 1) % pts.len()], x, norm).1)
                .fold(T::infinity(), T::min),
            Primitive::Ball { center, radius } => nearest_on_ball(center, *radius, x, norm).1,
        }
    }
}

/// Golden-section minimization of a unimodal function on `[lo, hi]` down to
/// an interval of width `tol`.
pub(crate) fn golden_min<T: Real>(f: impl Fn(T) -> T, mut lo: T, mut hi: T, tol: T) -> (T, T) {
    let inv_phi = T::lit(0.618_033_988_749_894_8);
    let mut c = hi - (hi - lo) * inv_phi;
    let mut d = lo + (hi - lo) * inv_phi;
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - (hi - lo) * inv_phi;
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + (hi - lo) * inv_phi;
            fd = f(d);
        }
    }
    let mut best = (lo, f(lo));
    for t in [c, d, hi] {
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

fn nearest_on_segment<T: Real>(a: &Vector<T>, b: &Vector<T>, x: &Vector<T>, norm: &Norm<T>) -> (Vector<T>, T) {
    let ab = *b - *a;
    let len2 = ab.norm_squared();
    if len2 == T::zero() {
        return (*a, norm.eval(&(*a - *x)));
    }
    if norm.is_euclidean() {
        let t = ((*x - *a).dot(&ab) / len2).max(T::zero()).min(T::one());
        let p = *a + ab * t;
        return (p, p.distance(x));
    }
    let f = |t: T| norm.eval(&(*a + ab * t - *x));
    let tol = T::solver_tolerance() / len2.sqrt().max(T::one());
    let (t, v) = golden_min(f, T::zero(), T::one(), tol);
    (*a + ab * t, v)
}

fn nearest_on_ball<T: Real>(c: &Vector<T>, radius: T, x: &Vector<T>, norm: &Norm<T>) -> (Vector<T>, T) {
    let offset = *x - *c;
    let e = offset.length();
    if e <= radius {
        return (*x, T::zero());
    }
    if norm.is_euclidean() {
        return (*c + offset * (radius / e), e - radius);
    }
    if c.dim() == 2 {
        let point = |phi: T| *c + Vector::new2(phi.cos(), phi.sin()) * radius;
        let f = |phi: T| norm.eval(&(point(phi) - *x));
        let step = T::TAU() / T::lit(BALL_SCAN as f64);
        let (mut best_k, mut best_v) = (0, T::infinity());
        for k in 0..BALL_SCAN {
            let v = f(step * T::lit(k as f64));
            if v < best_v {
                best_k = k;
                best_v = v;
            }
        }
        let mid = step * T::lit(best_k as f64);
        let tol = T::solver_tolerance() / radius.max(T::one());
        let (phi, v) = golden_min(f, mid - step, mid + step, tol);
        return (point(phi), v);
    }
    // Spatial balls under a non-Euclidean norm are rejected by
    // `ClosedSet::check_norm`; the radial point gives an upper bound.
    let p = *c + offset * (radius / e);
    (p, norm.eval(&(p - *x)))
}

/// Witnesses of the distance from a query point to a [`ClosedSet`].
#[derive(Clone, Debug)]
pub struct NearestSet<T> {
    pub query: Vector<T>,
    pub distance: T,
    pub witnesses: Vec<Vector<T>>,
    /// Norm-unit vectors from the query toward each witness.
    pub directions: Vec<Vector<T>>,
    pub tolerance: T,
}

/// A nonempty compact union of primitives in the plane or in space.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedSet<T> {
    dim: usize,
    primitives: Vec<Primitive<T>>,
}

impl<T: Real> ClosedSet<T> {
    pub fn new(primitives: Vec<Primitive<T>>) -> Result<Self, SceneError> {
        let first = primitives.first().ok_or(SceneError::Empty)?;
        let dim = first.dim();
        if dim != 2 && dim != 3 {
            return Err(GeometryError::UnsupportedDimension(dim).into());
        }
        for (i, p) in primitives.iter().enumerate() {
            p.validate(i)?;
            if p.dim() != dim {
                return Err(GeometryError::DimensionMismatch { expected: dim, found: p.dim() }.into());
            }
        }
        Ok(Self { dim, primitives })
    }

    pub fn points(points: impl IntoIterator<Item = Vector<T>>) -> Result<Self, SceneError> {
        Self::new(points.into_iter().map(Primitive::Point).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn primitives(&self) -> &[Primitive<T>] {
        &self.primitives
    }

    /// Returns a copy with one more primitive.
    pub fn with(&self, p: Primitive<T>) -> Result<Self, SceneError> {
        let mut prims = self.primitives.clone();
        prims.push(p);
        Self::new(prims)
    }

    /// Rejects norm/scene combinations without a reliable nearest-point
    /// solver (spatial balls under a non-Euclidean norm).
    pub fn check_norm(&self, norm: &Norm<T>) -> Result<(), SceneError> {
        if norm.dim() != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, found: norm.dim() }.into());
        }
        let spatial_ball = self.dim == 3 && self.primitives.iter().any(|p| matches!(p, Primitive::Ball { .. }));
        if spatial_ball && !matches!(norm.kind(), NormKind::Euclidean) {
            return Err(SceneError::Unsupported("balls in space require the Euclidean norm".into()));
        }
        Ok(())
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bbox(&self) -> (Vector<T>, Vector<T>) {
        let mut lo = Vector::zero(self.dim).map(|_| T::infinity());
        let mut hi = Vector::zero(self.dim).map(|_| T::neg_infinity());
        let mut grow = |p: &Vector<T>, pad: T| {
            for i in 0..self.dim {
                lo = lo.with(i, lo[i].min(p[i] - pad));
                hi = hi.with(i, hi[i].max(p[i] + pad));
            }
        };
        for prim in &self.primitives {
            match prim {
                Primitive::Point(p) => grow(p, T::zero()),
                Primitive::Segment(a, b) => {
                    grow(a, T::zero());
                    grow(b, T::zero());
                }
                Primitive::Loop(pts) => pts.iter().for_each(|p| grow(p, T::zero())),
                Primitive::Ball { center, radius } => grow(center, *radius),
            }
        }
        (lo, hi)
    }

    /// `dist(x, F)` under `norm`.
    pub fn distance(&self, x: &Vector<T>, norm: &Norm<T>) -> T {
        debug_assert_eq!(x.dim(), self.dim);
        self.primitives.iter().map(|p| p.distance(x, norm)).fold(T::infinity(), T::min)
    }

    /// All nearest points of `F` to `x` up to tolerance `tau`, merged at
    /// spatial resolution `tau`.
    pub fn nearest_points(&self, x: &Vector<T>, norm: &Norm<T>, tau: T) -> Result<NearestSet<T>, SceneError> {
        if x.dim() != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, found: x.dim() }.into());
        }
        let mut cands = Vec::new();
        for p in &self.primitives {
            p.nearest(x, norm, &mut cands);
        }
        let dmin = cands.iter().map(|c| c.1).fold(T::infinity(), T::min);
        if dmin <= tau {
            return Err(SceneError::OnSet { tolerance: tau.as_f64() });
        }
        let mut clusters: Vec<Vec<Vector<T>>> = Vec::new();
        for (w, d) in cands {
            if d - dmin > tau {
                continue;
            }
            match clusters.iter_mut().find(|c| c[0].distance(&w) < tau) {
                Some(c) => c.push(w),
                None => clusters.push(vec![w]),
            }
        }
        let witnesses: Vec<Vector<T>> = clusters
            .into_iter()
            .map(|c| {
                if c.len() == 1 {
                    return c[0];
                }
                let n = T::lit(c.len() as f64);
                let centroid = c.iter().fold(Vector::zero(self.dim), |s, p| s + *p) * n.recip();
                *c.iter()
                    .min_by(|a, b| a.distance(&centroid).partial_cmp(&b.distance(&centroid)).expect("finite"))
                    .expect("nonempty cluster")
            })
            .collect();
        let directions = witnesses
            .iter()
            .map(|w| {
                let v = *w - *x;
                v * norm.eval(&v).recip()
            })
            .collect();
        Ok(NearestSet { query: *x, distance: dmin, witnesses, directions, tolerance: tau })
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let file: SceneFile = serde_json::from_str(text).map_err(|e| SceneError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        file.build()
    }

    pub fn load(path: &Path) -> Result<Self, SceneError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&SceneFile::from_set(self)).expect("scene serializes")
    }

    /// Hex SHA-256 of the canonical JSON form; identifies the scene in field
    /// dumps and reports.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    dim: usize,
    primitives: Vec<PrimitiveFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
enum PrimitiveFile {
    Point { at: Vec<f64> },
    Segment { a: Vec<f64>, b: Vec<f64> },
    Loop { points: Vec<Vec<f64>> },
    Ball { center: Vec<f64>, radius: f64 },
}

impl SceneFile {
    fn build<T: Real>(&self) -> Result<ClosedSet<T>, SceneError> {
        if self.dim != 2 && self.dim != 3 {
            return Err(GeometryError::UnsupportedDimension(self.dim).into());
        }
        let vec = |c: &[f64]| -> Result<Vector<T>, SceneError> {
            if c.len() != self.dim {
                return Err(GeometryError::DimensionMismatch { expected: self.dim, found: c.len() }.into());
            }
            Ok(Vector::from_finite_slice(&c.iter().map(|&x| T::lit(x)).collect::<Vec<_>>())?)
        };
        let prims = self
            .primitives
            .iter()
            .map(|p| {
                Ok(match p {
                    PrimitiveFile::Point { at } => Primitive::Point(vec(at)?),
                    PrimitiveFile::Segment { a, b } => Primitive::Segment(vec(a)?, vec(b)?),
                    PrimitiveFile::Loop { points } => {
                        Primitive::Loop(points.iter().map(|p| vec(p)).collect::<Result<_, _>>()?)
                    }
                    PrimitiveFile::Ball { center, radius } => {
                        if !radius.is_finite() {
                            return Err(GeometryError::NonFinite.into());
                        }
                        Primitive::Ball { center: vec(center)?, radius: T::lit(*radius) }
                    }
                })
            })
            .collect::<Result<Vec<_>, SceneError>>()?;
        ClosedSet::new(prims)
    }

    fn from_set<T: Real>(set: &ClosedSet<T>) -> Self {
        let v = |p: &Vector<T>| p.to_f64_vec();
        Self {
            dim: set.dim,
            primitives: set
                .primitives
                .iter()
                .map(|p| match p {
                    Primitive::Point(a) => PrimitiveFile::Point { at: v(a) },
                    Primitive::Segment(a, b) => PrimitiveFile::Segment { a: v(a), b: v(b) },
                    Primitive::Loop(pts) => PrimitiveFile::Loop { points: pts.iter().map(v).collect() },
                    Primitive::Ball { center, radius } => {
                        PrimitiveFile::Ball { center: v(center), radius: radius.as_f64() }
                    }
                })
                .collect(),
        }
    }
}
