use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::scalar::Real;

use super::{GeometryError, Vector};

/// Components below this magnitude are treated as exact zeros by the
/// `l^p` gradient.
const LP_ZERO_GUARD: f64 = 1e-300;

/// Textual norm selector, as accepted on the command line:
/// `euclid`, `lp:<p>` or `table:<path>`.
#[derive(Clone, Debug, PartialEq)]
pub enum NormSpec {
    Euclid,
    Lp(f64),
    Table(PathBuf),
}

impl FromStr for NormSpec {
    type Err = GeometryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "euclid" || s == "euclidean" {
            return Ok(NormSpec::Euclid);
        }
        if let Some(p) = s.strip_prefix("lp:") {
            let p: f64 = p.parse().map_err(|_| GeometryError::InvalidNorm(format!("bad exponent in '{s}'")))?;
            if !p.is_finite() || p < 1.0 {
                return Err(GeometryError::InvalidNorm(format!("exponent must be >= 1, got {p}")));
            }
            return Ok(NormSpec::Lp(p));
        }
        if let Some(path) = s.strip_prefix("table:") {
            if path.is_empty() {
                return Err(GeometryError::InvalidNorm("empty table path".into()));
            }
            return Ok(NormSpec::Table(PathBuf::from(path)));
        }
        Err(GeometryError::InvalidNorm(format!("unknown norm '{s}' (expected euclid, lp:<p> or table:<path>)")))
    }
}

impl fmt::Display for NormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormSpec::Euclid => write!(f, "euclid"),
            NormSpec::Lp(p) => write!(f, "lp:{p}"),
            NormSpec::Table(path) => write!(f, "table:{}", path.display()),
        }
    }
}

/// Planar norm given by samples of its restriction to the Euclidean unit
/// circle. Value and gradient are interpolated linearly in the polar angle.
#[derive(Clone, Debug)]
pub struct NormTable<T> {
    angles: Vec<T>,
    values: Vec<T>,
    grads: Vec<Vector<T>>,
}

#[derive(Deserialize)]
struct TableFile {
    dim: usize,
    samples: Vec<TableSample>,
}

#[derive(Deserialize)]
struct TableSample {
    dir: Vec<f64>,
    value: f64,
    grad: Vec<f64>,
}

impl<T: Real> NormTable<T> {
    /// Builds a table from `(direction, ‖direction‖, gradient)` triples.
    /// Directions need not be unit length.
    pub fn new(samples: Vec<(Vector<T>, T, Vector<T>)>) -> Result<Self, GeometryError> {
        if samples.len() < 3 {
            return Err(GeometryError::InvalidNorm("a norm table needs at least 3 samples".into()));
        }
        let mut rows = Vec::with_capacity(samples.len());
        for (dir, value, grad) in samples {
            if dir.dim() != 2 || grad.dim() != 2 {
                return Err(GeometryError::UnsupportedDimension(dir.dim().max(grad.dim())));
            }
            let len = dir.length();
            if !(len.is_finite() && len > T::zero() && value.is_finite() && value > T::zero()) || !grad.is_finite() {
                return Err(GeometryError::InvalidNorm("degenerate norm table sample".into()));
            }
            let mut angle = dir.y().atan2(dir.x());
            if angle < T::zero() {
                angle = angle + T::TAU();
            }
            rows.push((angle, value / len, grad));
        }
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite angles"));
        rows.dedup_by(|a, b| a.0 == b.0);
        Ok(Self {
            angles: rows.iter().map(|r| r.0).collect(),
            values: rows.iter().map(|r| r.1).collect(),
            grads: rows.iter().map(|r| r.2).collect(),
        })
    }

    /// Tabulates an existing planar norm at `count` equiangular directions.
    pub fn tabulate(norm: &Norm<T>, count: usize) -> Result<Self, GeometryError> {
        let mut samples = Vec::with_capacity(count);
        for k in 0..count {
            let a = T::TAU() * T::lit(k as f64) / T::lit(count as f64);
            let u = Vector::new2(a.cos(), a.sin());
            samples.push((u, norm.eval(&u), norm.gradient(&u)?));
        }
        Self::new(samples)
    }

    pub fn load(path: &Path) -> Result<Self, GeometryError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GeometryError::InvalidNorm(format!("{}: {e}", path.display())))?;
        let file: TableFile =
            serde_json::from_str(&text).map_err(|e| GeometryError::InvalidNorm(format!("{}: {e}", path.display())))?;
        if file.dim != 2 {
            return Err(GeometryError::UnsupportedDimension(file.dim));
        }
        let samples = file
            .samples
            .iter()
            .map(|s| {
                let dir = Vector::from_finite_slice(&s.dir.iter().map(|&x| T::lit(x)).collect::<Vec<_>>())?;
                let grad = Vector::from_finite_slice(&s.grad.iter().map(|&x| T::lit(x)).collect::<Vec<_>>())?;
                Ok((dir, T::lit(s.value), grad))
            })
            .collect::<Result<Vec<_>, GeometryError>>()?;
        Self::new(samples)
    }

    /// Bracketing samples and the linear weight of the upper one.
    fn locate(&self, angle: T) -> (usize, usize, T) {
        let angle = if angle < T::zero() { angle + T::TAU() } else { angle };
        let n = self.angles.len();
        let hi = self.angles.partition_point(|&a| a <= angle);
        let (i0, i1) = if hi == 0 || hi == n { (n - 1, 0) } else { (hi - 1, hi) };
        let mut a0 = self.angles[i0];
        let mut a1 = self.angles[i1];
        let mut a = angle;
        if i1 == 0 {
            // wrap-around interval
            if a < a0 {
                a = a + T::TAU();
            }
            a1 = a1 + T::TAU();
            if a0 > a {
                a0 = a0 - T::TAU();
            }
        }
        let w = if a1 > a0 { (a - a0) / (a1 - a0) } else { T::zero() };
        (i0, i1, w)
    }

    fn unit_value(&self, angle: T) -> T {
        let (i0, i1, w) = self.locate(angle);
        self.values[i0] * (T::one() - w) + self.values[i1] * w
    }

    fn unit_gradient(&self, angle: T) -> Vector<T> {
        let (i0, i1, w) = self.locate(angle);
        self.grads[i0] * (T::one() - w) + self.grads[i1] * w
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

#[derive(Clone, Debug)]
pub enum NormKind<T> {
    Euclidean,
    Lp(T),
    Tabulated(Arc<NormTable<T>>),
}

/// A symmetric norm on the plane or on space.
#[derive(Clone, Debug)]
pub struct Norm<T> {
    kind: NormKind<T>,
    dim: usize,
}

impl<T: Real> Norm<T> {
    pub fn euclidean(dim: usize) -> Self {
        Self { kind: NormKind::Euclidean, dim }
    }

    /// The `l^p` norm. Exponents below 2 are accepted, but the derivative of
    /// such norms is not Lipschitz on the sphere; see
    /// [`Norm::has_lipschitz_derivative`].
    pub fn lp(p: T, dim: usize) -> Result<Self, GeometryError> {
        if !(p.is_finite() && p >= T::one()) {
            return Err(GeometryError::InvalidNorm(format!("exponent must be >= 1, got {p}")));
        }
        Ok(Self { kind: NormKind::Lp(p), dim })
    }

    pub fn tabulated(table: NormTable<T>) -> Self {
        Self { kind: NormKind::Tabulated(Arc::new(table)), dim: 2 }
    }

    pub fn from_spec(spec: &NormSpec, dim: usize) -> Result<Self, GeometryError> {
        if dim != 2 && dim != 3 {
            return Err(GeometryError::UnsupportedDimension(dim));
        }
        match spec {
            NormSpec::Euclid => Ok(Self::euclidean(dim)),
            NormSpec::Lp(p) if *p == 2.0 => Ok(Self::euclidean(dim)),
            NormSpec::Lp(p) => Self::lp(T::lit(*p), dim),
            NormSpec::Table(path) => {
                if dim != 2 {
                    return Err(GeometryError::UnsupportedDimension(dim));
                }
                Ok(Self::tabulated(NormTable::load(path)?))
            }
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NormKind<T> {
        &self.kind
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, NormKind::Euclidean)
    }

    /// Whether the norm's derivative is Lipschitz on the unit sphere, the
    /// smoothness the level-set structure results need.
    pub fn has_lipschitz_derivative(&self) -> bool {
        match &self.kind {
            NormKind::Euclidean => true,
            NormKind::Lp(p) => *p >= T::lit(2.0),
            NormKind::Tabulated(_) => true,
        }
    }

    /// Short spec string (`euclid`, `lp:4`, `table`).
    pub fn label(&self) -> String {
        match &self.kind {
            NormKind::Euclidean => "euclid".into(),
            NormKind::Lp(p) => format!("lp:{p}"),
            NormKind::Tabulated(_) => "table".into(),
        }
    }

    pub fn checked_eval(&self, v: &Vector<T>) -> Result<T, GeometryError> {
        if v.dim() != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, found: v.dim() });
        }
        Ok(self.eval(v))
    }

    /// `‖v‖`. Dimensions are only checked in debug builds; see
    /// [`Norm::checked_eval`].
    #[inline]
    pub fn eval(&self, v: &Vector<T>) -> T {
        debug_assert_eq!(v.dim(), self.dim);
        match &self.kind {
            NormKind::Euclidean => v.length(),
            NormKind::Lp(p) => {
                let m = v.max_abs();
                if m == T::zero() || !m.is_finite() {
                    return m;
                }
                let s: T = v.coords().iter().map(|x| (x.abs() / m).powf(*p)).sum();
                m * s.powf(p.recip())
            }
            NormKind::Tabulated(table) => {
                let len = v.length();
                if len == T::zero() {
                    return T::zero();
                }
                len * table.unit_value(v.y().atan2(v.x()))
            }
        }
    }

    /// Derivative of `‖·‖` at `v ≠ 0`.
    pub fn gradient(&self, v: &Vector<T>) -> Result<Vector<T>, GeometryError> {
        if v.dim() != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, found: v.dim() });
        }
        let n = self.eval(v);
        if n.is_nan() || n <= T::zero() {
            return Err(GeometryError::ZeroVector);
        }
        Ok(match &self.kind {
            NormKind::Euclidean => *v * n.recip(),
            NormKind::Lp(p) => {
                let guard = T::lit(LP_ZERO_GUARD);
                let e = *p - T::one();
                v.map(|x| if x.abs() < guard { T::zero() } else { x.signum() * (x.abs() / n).powf(e) })
            }
            NormKind::Tabulated(table) => {
                let len = v.length();
                let u = *v * len.recip();
                let angle = v.y().atan2(v.x());
                let g = table.unit_gradient(angle);
                // Keep Euler's identity <g, u> = N(u) exact; only the tangential
                // part comes from the interpolated samples.
                g + u * (table.unit_value(angle) - g.dot(&u))
            }
        })
    }

    /// `count` directions of norm one, deterministic for a fixed `seed`.
    ///
    /// In the plane the directions are equiangular (random phase); in space
    /// they follow a randomly rotated Fibonacci lattice. Euclidean samples are
    /// then rescaled radially onto this norm's unit sphere.
    pub fn sample_unit_sphere(&self, count: usize, seed: u64) -> Vec<Vector<T>> {
        let count = count.max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let euclid: Vec<Vector<T>> = if self.dim == 2 {
            let phase: f64 = rng.gen::<f64>() * std::f64::consts::TAU / count as f64;
            (0..count)
                .map(|k| {
                    let a = phase + std::f64::consts::TAU * k as f64 / count as f64;
                    Vector::new2(T::lit(a.cos()), T::lit(a.sin()))
                })
                .collect()
        } else {
            let rot = random_rotation(&mut rng);
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                    let rad = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * k as f64;
                    let p = [rad * phi.cos(), rad * phi.sin(), z];
                    let q = apply(&rot, p);
                    Vector::new3(T::lit(q[0]), T::lit(q[1]), T::lit(q[2]))
                })
                .collect()
        };
        euclid.into_iter().map(|u| u * self.eval(&u).recip()).collect()
    }
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [[f64; 3]; 3] {
    // uniform random unit quaternion (Shoemake)
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let (w, x, y, z) = (a * (tau * u2).sin(), a * (tau * u2).cos(), b * (tau * u3).sin(), b * (tau * u3).cos());
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn apply(m: &[[f64; 3]; 3], p: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
        m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
        m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
    ]
}
