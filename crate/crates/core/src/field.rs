//! Distance functions sampled at the vertices of a uniform grid.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{GeometryError, Norm, NormSpec, Vector};
use crate::scalar::Real;
use crate::scene::{ClosedSet, SceneError};

/// Default cap on the memory taken by grid values, in MiB.
pub const DEFAULT_MEM_CAP_MB: usize = 1024;
/// Environment variable overriding [`DEFAULT_MEM_CAP_MB`].
pub const MEM_CAP_ENV: &str = "DISTLAB_MEM_CAP_MB";
/// Default gap between one-sided difference quotients above which
/// [`DistanceField::gradient`] reports a kink.
pub const NONSMOOTH_THRESHOLD: f64 = 0.2;

#[derive(Debug, thiserror::Error)]
pub enum FieldError {
    #[error("grid needs {requested} bytes, over the cap of {cap} bytes")]
    MemoryCap { requested: u128, cap: u128 },
    #[error("point outside the grid (or too close to its boundary)")]
    OutOfBounds,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("bad field dump: {0}")]
    Format(String),
    #[error("scene hash {found} does not match the field's {expected}")]
    HashMismatch { expected: String, found: String },
}

/// Memory cap in bytes, honouring [`MEM_CAP_ENV`].
pub fn mem_cap_bytes() -> u128 {
    let mb = std::env::var(MEM_CAP_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).unwrap_or(DEFAULT_MEM_CAP_MB);
    mb as u128 * 1024 * 1024
}

/// Uniform grid with `dims[axis]` vertices per axis, spacing `h`.
///
/// Vertices are stored row-major with the x index varying fastest:
/// `index = ix + nx * (iy + ny * iz)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec<T> {
    origin: Vector<T>,
    h: T,
    dims: [usize; 3],
}

impl<T: Real> GridSpec<T> {
    pub fn new(origin: Vector<T>, h: T, dims: &[usize]) -> Result<Self, FieldError> {
        if dims.len() != origin.dim() {
            return Err(GeometryError::DimensionMismatch { expected: origin.dim(), found: dims.len() }.into());
        }
        if !(h > T::zero() && h.is_finite()) {
            return Err(FieldError::InvalidGrid("spacing must be positive".into()));
        }
        if !origin.is_finite() {
            return Err(GeometryError::NonFinite.into());
        }
        if dims.iter().any(|&n| n < 2) {
            return Err(FieldError::InvalidGrid("each axis needs at least 2 vertices".into()));
        }
        let mut d = [1; 3];
        d[..dims.len()].copy_from_slice(dims);
        let bytes = d.iter().map(|&n| n as u128).product::<u128>() * std::mem::size_of::<T>() as u128;
        let cap = mem_cap_bytes();
        if bytes > cap {
            return Err(FieldError::MemoryCap { requested: bytes, cap });
        }
        Ok(Self { origin, h, dims: d })
    }

    /// Smallest grid with spacing `h` anchored at `lo` that reaches `hi`.
    pub fn covering(lo: Vector<T>, hi: Vector<T>, h: T) -> Result<Self, FieldError> {
        let dims: Vec<usize> = (0..lo.dim())
            .map(|i| {
                let n = ((hi[i] - lo[i]) / h - T::lit(1e-9)).ceil();
                n.as_f64().max(1.0) as usize + 1
            })
            .collect();
        Self::new(lo, h, &dims)
    }

    /// Grid over the box `[lo, hi]` with `res` vertices along the first axis.
    pub fn with_resolution(lo: Vector<T>, hi: Vector<T>, res: usize) -> Result<Self, FieldError> {
        if res < 2 {
            return Err(FieldError::InvalidGrid("resolution must be at least 2".into()));
        }
        let h = (hi[0] - lo[0]) / T::lit((res - 1) as f64);
        Self::covering(lo, hi, h)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.origin.dim()
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    pub fn origin(&self) -> Vector<T> {
        self.origin
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.dim()]
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Corner opposite to the origin.
    pub fn upper(&self) -> Vector<T> {
        let mut u = self.origin;
        for i in 0..self.dim() {
            u = u.with(i, self.origin[i] + self.h * T::lit((self.dims[i] - 1) as f64));
        }
        u
    }

    #[inline]
    pub fn index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.dims[0] * (ijk[1] + self.dims[1] * ijk[2])
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> [usize; 3] {
        let ix = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [ix, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn vertex(&self, ijk: [usize; 3]) -> Vector<T> {
        let mut v = self.origin;
        for (i, &k) in ijk.iter().enumerate().take(self.dim()) {
            v = v.with(i, self.origin[i] + self.h * T::lit(k as f64));
        }
        v
    }

    pub fn vertex_at(&self, idx: usize) -> Vector<T> {
        self.vertex(self.unindex(idx))
    }

    /// Euclidean distance from `x` to the complement of the grid box;
    /// negative outside.
    pub fn interior_margin(&self, x: &Vector<T>) -> T {
        let up = self.upper();
        (0..self.dim()).map(|i| (x[i] - self.origin[i]).min(up[i] - x[i])).fold(T::infinity(), T::min)
    }
}

/// `d_F` sampled on a grid.
#[derive(Clone, Debug)]
pub struct DistanceField<T> {
    grid: GridSpec<T>,
    values: Vec<T>,
    norm: Norm<T>,
    norm_spec: String,
    scene: Option<Arc<ClosedSet<T>>>,
    scene_hash: String,
}

/// Result of [`DistanceField::gradient`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FieldGradient<T> {
    Smooth(Vector<T>),
    Nonsmooth,
}

/// Outcome of the discrete 1-Lipschitz check over grid neighbours.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzSummary {
    pub pairs: usize,
    pub violations: usize,
    /// Largest `|Δvalue| − ‖Δx‖` over neighbour pairs.
    pub max_excess: f64,
}

impl LipschitzSummary {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    origin: Vec<f64>,
    h: f64,
    dims: Vec<usize>,
    norm: String,
    scene_hash: String,
}

impl<T: Real> DistanceField<T> {
    /// Samples `dist(·, F)` at every grid vertex. Each vertex is evaluated
    /// exactly once, so the result does not depend on the thread count.
    pub fn sample(scene: Arc<ClosedSet<T>>, norm: Norm<T>, grid: GridSpec<T>) -> Result<Self, FieldError> {
        scene.check_norm(&norm)?;
        if grid.dim() != scene.dim() {
            return Err(GeometryError::DimensionMismatch { expected: scene.dim(), found: grid.dim() }.into());
        }
        let values: Vec<T> =
            (0..grid.len()).into_par_iter().map(|i| scene.distance(&grid.vertex_at(i), &norm)).collect();
        let scene_hash = scene.hash();
        Ok(Self { norm_spec: norm.label(), grid, values, norm, scene: Some(scene), scene_hash })
    }

    /// Wraps precomputed vertex values (e.g. from an analytic function).
    pub fn from_values(grid: GridSpec<T>, values: Vec<T>, norm: Norm<T>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::InvalidGrid(format!("expected {} values, got {}", grid.len(), values.len())));
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(FieldError::Format("values must be finite and nonnegative".into()));
        }
        Ok(Self { norm_spec: norm.label(), grid, values, norm, scene: None, scene_hash: String::new() })
    }

    /// Overrides the norm string written to dumps (e.g. `table:<path>`).
    pub fn set_norm_spec(&mut self, spec: &str) {
        self.norm_spec = spec.to_owned();
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn norm(&self) -> &Norm<T> {
        &self.norm
    }

    pub fn norm_spec(&self) -> &str {
        &self.norm_spec
    }

    pub fn scene(&self) -> Option<&ClosedSet<T>> {
        self.scene.as_deref()
    }

    pub fn scene_hash(&self) -> &str {
        &self.scene_hash
    }

    #[inline]
    pub fn h(&self) -> T {
        self.grid.h
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    #[inline]
    pub fn value(&self, ijk: [usize; 3]) -> T {
        self.values[self.grid.index(ijk)]
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Attaches the scene this field was sampled from, checking the hash when
    /// the field carries one.
    pub fn attach_scene(&mut self, scene: Arc<ClosedSet<T>>) -> Result<(), FieldError> {
        let found = scene.hash();
        if !self.scene_hash.is_empty() && self.scene_hash != found {
            return Err(FieldError::HashMismatch { expected: self.scene_hash.clone(), found });
        }
        scene.check_norm(&self.norm)?;
        self.scene_hash = found;
        self.scene = Some(scene);
        Ok(())
    }

    /// Exact distance when the scene is attached, interpolation otherwise.
    pub fn exact_or_interpolated(&self, x: &Vector<T>) -> Result<T, FieldError> {
        match &self.scene {
            Some(s) => Ok(s.distance(x, &self.norm)),
            None => self.interpolate(x),
        }
    }

    /// Multilinear interpolation of the vertex values.
    pub fn interpolate(&self, x: &Vector<T>) -> Result<T, FieldError> {
        let dim = self.dim();
        if x.dim() != dim {
            return Err(GeometryError::DimensionMismatch { expected: dim, found: x.dim() }.into());
        }
        let slack = self.grid.h * T::lit(1e-9);
        let mut base = [0usize; 3];
        let mut frac = [T::zero(); 3];
        for i in 0..dim {
            let s = (x[i] - self.grid.origin[i]) / self.grid.h;
            let n = self.grid.dims[i];
            let t = s * self.grid.h;
            if !t.is_finite() || t < -slack || t > self.grid.h * T::lit((n - 1) as f64) + slack {
                return Err(FieldError::OutOfBounds);
            }
            let c = s.floor().max(T::zero()).as_f64() as usize;
            let c = c.min(n - 2);
            base[i] = c;
            frac[i] = (s - T::lit(c as f64)).max(T::zero()).min(T::one());
        }
        let corners = 1usize << dim;
        let mut acc = T::zero();
        for k in 0..corners {
            let mut w = T::one();
            let mut ijk = base;
            for i in 0..dim {
                if k >> i & 1 == 1 {
                    ijk[i] += 1;
                    w = w * frac[i];
                } else {
                    w = w * (T::one() - frac[i]);
                }
            }
            if w != T::zero() {
                acc = acc + w * self.value(ijk);
            }
        }
        Ok(acc)
    }

    /// Central-difference gradient with step `h`, or [`FieldGradient::Nonsmooth`]
    /// when one-sided quotients differ by more than [`NONSMOOTH_THRESHOLD`].
    pub fn gradient(&self, x: &Vector<T>) -> Result<FieldGradient<T>, FieldError> {
        self.gradient_with(x, T::lit(NONSMOOTH_THRESHOLD))
    }

    pub fn gradient_with(&self, x: &Vector<T>, threshold: T) -> Result<FieldGradient<T>, FieldError> {
        let h = self.grid.h;
        if self.grid.interior_margin(x) < h * T::lit(2.0) * (T::one() - T::lit(1e-9)) {
            return Err(FieldError::OutOfBounds);
        }
        let f0 = self.interpolate(x)?;
        let mut g = Vector::zero(self.dim());
        let mut kink = false;
        for i in 0..self.dim() {
            let e = Vector::axis(self.dim(), i) * h;
            let fp = self.interpolate(&(*x + e))?;
            let fm = self.interpolate(&(*x - e))?;
            let fwd = (fp - f0) / h;
            let bwd = (f0 - fm) / h;
            kink |= (fwd - bwd).abs() > threshold;
            g = g.with(i, (fp - fm) / (h + h));
        }
        Ok(if kink { FieldGradient::Nonsmooth } else { FieldGradient::Smooth(g) })
    }

    /// Checks `|d(i) − d(j)| ≤ ‖x_i − x_j‖ + 1e-9` over axis neighbours.
    pub fn check_lipschitz(&self) -> LipschitzSummary {
        let dim = self.dim();
        let steps: Vec<T> = (0..dim).map(|i| self.norm.eval(&(Vector::axis(dim, i) * self.grid.h))).collect();
        let slack = T::lit(1e-9);
        let per_vertex: Vec<(usize, usize, f64)> = (0..self.grid.len())
            .into_par_iter()
            .map(|idx| {
                let ijk = self.grid.unindex(idx);
                let mut out = (0, 0, f64::NEG_INFINITY);
                for i in 0..dim {
                    if ijk[i] + 1 >= self.grid.dims[i] {
                        continue;
                    }
                    let mut nb = ijk;
                    nb[i] += 1;
                    let excess = (self.values[idx] - self.value(nb)).abs() - steps[i];
                    out.0 += 1;
                    if excess > slack {
                        out.1 += 1;
                    }
                    out.2 = out.2.max(excess.as_f64());
                }
                out
            })
            .collect();
        per_vertex.into_iter().fold(
            LipschitzSummary { pairs: 0, violations: 0, max_excess: f64::NEG_INFINITY },
            |acc, (p, v, m)| LipschitzSummary {
                pairs: acc.pairs + p,
                violations: acc.violations + v,
                max_excess: acc.max_excess.max(m),
            },
        )
    }

    /// Sidecar path belonging to a binary dump path: the dump's file name
    /// with `.json` appended.
    pub fn sidecar_path(bin: &Path) -> PathBuf {
        let mut name = bin.as_os_str().to_owned();
        name.push(".json");
        PathBuf::from(name)
    }

    /// Writes the values as little-endian `f64` to `bin` and the grid metadata
    /// to the sidecar JSON next to it.
    pub fn write_dump(&self, bin: &Path) -> Result<(), FieldError> {
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        std::fs::File::create(bin)?.write_all(&bytes)?;
        let sidecar = Sidecar {
            origin: self.grid.origin.to_f64_vec(),
            h: self.grid.h.as_f64(),
            dims: self.grid.dims().to_vec(),
            norm: self.norm_spec.clone(),
            scene_hash: self.scene_hash.clone(),
        };
        let text = serde_json::to_string_pretty(&sidecar).map_err(|e| FieldError::Format(e.to_string()))?;
        std::fs::write(Self::sidecar_path(bin), text + "\n")?;
        Ok(())
    }

    /// Reads a dump written by [`DistanceField::write_dump`].
    pub fn read_dump(bin: &Path) -> Result<Self, FieldError> {
        let text = std::fs::read_to_string(Self::sidecar_path(bin))?;
        let meta: Sidecar = serde_json::from_str(&text).map_err(|e| FieldError::Format(e.to_string()))?;
        let origin = Vector::from_finite_slice(&meta.origin.iter().map(|&x| T::lit(x)).collect::<Vec<_>>())?;
        let grid = GridSpec::new(origin, T::lit(meta.h), &meta.dims)?;
        let spec: NormSpec = meta.norm.parse()?;
        let norm = Norm::from_spec(&spec, grid.dim())?;
        let mut bytes = Vec::new();
        std::fs::File::open(bin)?.read_to_end(&mut bytes)?;
        if bytes.len() != grid.len() * 8 {
            return Err(FieldError::Format(format!("expected {} bytes, found {}", grid.len() * 8, bytes.len())));
        }
        let values =
            bytes.chunks_exact(8).map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes")))).collect();
        let mut field = Self::from_values(grid, values, norm)?;
        field.norm_spec = meta.norm;
        field.scene_hash = meta.scene_hash;
        Ok(field)
    }

    /// One vertex per line: coordinates then value.
    pub fn to_csv(&self) -> String {
        let axes = ["x", "y", "z"];
        let mut out = axes[..self.dim()].join(",");
        out.push_str(",value\n");
        for (idx, v) in self.values.iter().enumerate() {
            for c in self.grid.vertex_at(idx).coords() {
                let _ = write!(out, "{:.17e},", c.as_f64());
            }
            let _ = writeln!(out, "{:.17e}", v.as_f64());
        }
        out
    }
}
