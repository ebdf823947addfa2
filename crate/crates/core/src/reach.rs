//! Reach of superlevel sets `A = {d ≥ r}` under the Euclidean structure of
//! the grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::field::DistanceField;
use crate::geometry::Vector;
use crate::levelset::{extract_level_set, Cells, LevelSetError, LevelSetMesh};

type V = Vector<f64>;
type Field = DistanceField<f64>;

/// Minimizers closer than this many grid steps count as one projection.
pub const UNIQUENESS_STEPS: f64 = 3.0;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_BISECTION_STEPS: usize = 12;
pub const DEFAULT_BOUNDARY_SAMPLES: usize = 16;

#[derive(Debug, thiserror::Error)]
pub enum ReachError {
    #[error("the superlevel set at r = {0} is empty")]
    EmptySet(f64),
    #[error("point is {offset} away from the level set (more than one grid step)")]
    NotOnBoundary { offset: f64 },
    #[error("query point outside the grid")]
    OutsideGrid,
    #[error(transparent)]
    LevelSet(#[from] LevelSetError),
}

/// Distance and gradient at `x`, exact when the scene is attached.
fn value_and_gradient(field: &Field, x: &V) -> Option<(f64, V)> {
    if let Some(scene) = field.scene() {
        let near = scene.nearest_points(x, field.norm(), 1e-12).ok()?;
        let g = field.norm().gradient(&(*x - near.witnesses[0])).ok()?;
        return Some((near.distance, g));
    }
    let h = field.h();
    let f0 = field.interpolate(x).ok()?;
    let mut g = V::zero(field.dim());
    for i in 0..field.dim() {
        let e = V::axis(field.dim(), i) * (h / 2.0);
        let (p, m) = (field.interpolate(&(*x + e)).ok()?, field.interpolate(&(*x - e)).ok()?);
        g = g.with(i, (p - m) / h);
    }
    Some((f0, g))
}

/// Newton steps along the gradient onto `{d = r}`.
fn refine_onto_level(field: &Field, r: f64, x: V) -> V {
    let mut x = x;
    for _ in 0..8 {
        let Some((d, g)) = value_and_gradient(field, &x) else { break };
        let gg = g.norm_squared();
        if (d - r).abs() < 1e-13 || gg < 1e-24 {
            break;
        }
        x += g * ((r - d) / gg);
    }
    x
}

fn closest_on_segment(q: &V, a: &V, b: &V) -> V {
    let ab = *b - *a;
    let t = ((*q - *a).dot(&ab) / ab.norm_squared().max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
    *a + ab * t
}

/// Closest point of triangle `abc` to `q` (Ericson's region test).
fn closest_on_triangle(q: &V, a: &V, b: &V, c: &V) -> V {
    let (ab, ac, ap) = (*b - *a, *c - *a, *q - *a);
    let (d1, d2) = (ab.dot(&ap), ac.dot(&ap));
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = *q - *b;
    let (d3, d4) = (ab.dot(&bp), ac.dot(&bp));
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        return *a + ab * (d1 / (d1 - d3));
    }
    let cp = *q - *c;
    let (d5, d6) = (ab.dot(&cp), ac.dot(&cp));
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        return *a + ac * (d2 / (d2 - d6));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0 {
        return closest_on_segment(q, b, c);
    }
    let denom = 1.0 / (va + vb + vc);
    *a + ab * (vb * denom) + ac * (vc * denom)
}

/// Default minimizer tolerance for a query at distance `dmin` from `A`.
///
/// Near-minimizers of `|a − q|` on a boundary with curvature radius `R`
/// spread over roughly `sqrt(8 tol dmin R / (R − dmin))`; this choice keeps
/// that spread below the uniqueness tolerance until `q` is within a few
/// percent of `R` from the boundary point.
pub fn default_tolerance(h: f64, dmin: f64) -> f64 {
    0.06 * h * h / dmin.max(h)
}

/// The superlevel set `{d ≥ r}` discretized by its boundary mesh.
pub struct Superlevel<'a> {
    field: &'a Field,
    r: f64,
    mesh: LevelSetMesh,
    max_edge: f64,
}

impl<'a> Superlevel<'a> {
    pub fn new(field: &'a Field, r: f64) -> Result<Self, ReachError> {
        if r >= field.max_value() {
            return Err(ReachError::EmptySet(r));
        }
        let mesh = extract_level_set(field, r)?;
        if mesh.vertices.is_empty() {
            return Err(ReachError::EmptySet(r));
        }
        let lists: Vec<Vec<usize>> = match &mesh.cells {
            Cells::Segments(s) => s.iter().map(|c| c.to_vec()).collect(),
            Cells::Triangles(t) => t.iter().map(|c| c.to_vec()).collect(),
        };
        let max_edge = lists
            .iter()
            .flat_map(|c| (0..c.len()).map(|k| mesh.vertices[c[k]].distance(&mesh.vertices[c[(k + 1) % c.len()]])))
            .fold(0.0, f64::max);
        Ok(Self { field, r: mesh.r, mesh, max_edge })
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn mesh(&self) -> &LevelSetMesh {
        &self.mesh
    }

    pub fn contains(&self, q: &V) -> Result<bool, ReachError> {
        let d = self.field.exact_or_interpolated(q).map_err(|_| ReachError::OutsideGrid)?;
        Ok(d >= self.r)
    }

    /// Nearest points of `A` to `q` whose distance is within `tol` of the
    /// minimum, sorted by distance. A point of `A` is its own projection.
    pub fn project(&self, q: &V, tol: f64) -> Result<Vec<V>, ReachError> {
        self.project_with(q, |_| tol)
    }

    fn project_with(&self, q: &V, tol: impl Fn(f64) -> f64) -> Result<Vec<V>, ReachError> {
        if self.field.grid().interior_margin(q) < 0.0 {
            return Err(ReachError::OutsideGrid);
        }
        if self.contains(q)? {
            return Ok(vec![*q]);
        }
        let verts = &self.mesh.vertices;
        let vmin = verts.iter().map(|v| v.distance(q)).fold(f64::INFINITY, f64::min);
        let reach = vmin + self.max_edge + self.field.h();
        let mut found: Vec<(f64, V)> = Vec::new();
        let mut push = |p: V| {
            let p = refine_onto_level(self.field, self.r, p);
            found.push((p.distance(q), p));
        };
        match &self.mesh.cells {
            Cells::Segments(segs) => {
                for [a, b] in segs {
                    let (pa, pb) = (&verts[*a], &verts[*b]);
                    if pa.distance(q).min(pb.distance(q)) <= reach {
                        push(closest_on_segment(q, pa, pb));
                    }
                }
            }
            Cells::Triangles(tris) => {
                for [a, b, c] in tris {
                    let (pa, pb, pc) = (&verts[*a], &verts[*b], &verts[*c]);
                    if pa.distance(q).min(pb.distance(q)).min(pc.distance(q)) <= reach {
                        push(closest_on_triangle(q, pa, pb, pc));
                    }
                }
            }
        }
        let dmin = found.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
        let cut = dmin + tol(dmin);
        found.retain(|f| f.0 <= cut);
        found.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(found.into_iter().map(|f| f.1).collect())
    }

    /// Whether all minimizers for `q` lie within the uniqueness tolerance of
    /// each other. Queries outside the grid are not tested.
    fn unique_projection(&self, q: &V) -> Result<bool, ReachError> {
        let h = self.field.h();
        let mins = match self.project_with(q, |d| default_tolerance(h, d)) {
            Err(ReachError::OutsideGrid) => return Ok(true),
            other => other?,
        };
        let limit = UNIQUENESS_STEPS * h;
        Ok(mins.iter().enumerate().all(|(i, a)| mins[i + 1..].iter().all(|b| a.distance(b) <= limit)))
    }
}

/// Convenience wrapper extracting the boundary on every call.
pub fn project_to_superlevel(field: &Field, r: f64, q: &V, tol: f64) -> Result<Vec<V>, ReachError> {
    Superlevel::new(field, r)?.project(q, tol)
}

#[derive(Clone, Copy, Debug)]
pub struct ReachParams {
    pub samples: usize,
    /// Largest tested radius; half the grid diagonal when absent.
    pub cap: Option<f64>,
    pub seed: u64,
    pub bisection_steps: usize,
    pub boundary_samples: usize,
}

impl Default for ReachParams {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            cap: None,
            seed: 0,
            bisection_steps: DEFAULT_BISECTION_STEPS,
            boundary_samples: DEFAULT_BOUNDARY_SAMPLES,
        }
    }
}

impl ReachParams {
    fn cap_for(&self, field: &Field) -> f64 {
        self.cap.unwrap_or_else(|| {
            let g = field.grid();
            g.upper().distance(&g.origin()) / 2.0
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ReachEstimate {
    pub point: Vec<f64>,
    /// Largest accepted radius.
    pub epsilon: f64,
    pub samples: usize,
    pub tolerance: f64,
    pub cap: f64,
}

/// Half-width of the cone of normal-biased sample directions.
const NORMAL_CONE: f64 = 0.09;

/// Offsets in the unit ball. Even indices are uniform in the ball. Odd ones
/// point along `normal` (into the complement of `A`) up to a small random
/// tilt, with uniform length: nearest points stop being unique first on the
/// normal rays of nearby boundary points, a sliver that uniform sampling
/// almost never hits. The `k`-th offset does not depend on the tested
/// radius or on the sample count, so more samples can only reject more
/// radii.
fn ball_offsets(normal: &V, count: usize, seed: u64) -> Vec<V> {
    let dim = normal.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_ball = |rng: &mut ChaCha8Rng| loop {
        let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let u = V::from_slice(&c).expect("2 or 3 coordinates");
        if u.length() <= 1.0 {
            break u;
        }
    };
    (0..count)
        .map(|k| {
            let u = in_ball(&mut rng);
            if k % 2 == 0 {
                return u;
            }
            let dir = (*normal + u * NORMAL_CONE).normalized().unwrap_or(*normal);
            dir * rng.gen::<f64>()
        })
        .collect()
}

fn estimate_on(set: &Superlevel, p: &V, params: &ReachParams, cap: f64) -> Result<ReachEstimate, ReachError> {
    let field = set.field;
    let h = field.h();
    let d = field.exact_or_interpolated(p).map_err(|_| ReachError::OutsideGrid)?;
    if (d - set.r).abs() > h {
        return Err(ReachError::NotOnBoundary { offset: (d - set.r).abs() });
    }
    let normal =
        value_and_gradient(field, p).and_then(|(_, g)| (-g).normalized()).unwrap_or_else(|| V::axis(field.dim(), 0));
    let offsets = ball_offsets(&normal, params.samples, params.seed);
    let accepts = |eps: f64| -> Result<bool, ReachError> {
        let bad = offsets
            .par_iter()
            .map(|u| set.unique_projection(&(*p + *u * eps)).map(|ok| !ok))
            .try_fold(|| false, |acc, b| b.map(|b| acc || b))
            .try_reduce(|| false, |a, b| Ok(a || b))?;
        Ok(!bad)
    };
    let epsilon = if accepts(cap)? {
        cap
    } else {
        let (mut lo, mut hi) = (0.0, cap);
        for _ in 0..params.bisection_steps {
            let mid = (lo + hi) / 2.0;
            if accepts(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    Ok(ReachEstimate { point: p.to_f64_vec(), epsilon, samples: params.samples, tolerance: UNIQUENESS_STEPS * h, cap })
}

/// Bisection for the largest radius `ε ≤ cap` around `p` on which every
/// sampled query has a unique projection onto `A`.
pub fn estimate_reach_at(field: &Field, r: f64, p: &V, params: &ReachParams) -> Result<ReachEstimate, ReachError> {
    let set = Superlevel::new(field, r)?;
    estimate_on(&set, p, params, params.cap_for(field))
}

#[derive(Clone, Debug, Serialize)]
pub struct ReachReport {
    pub r: f64,
    pub global_reach: f64,
    pub per_point: Vec<ReachEstimate>,
}

impl ReachReport {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data")
    }
}

/// Quasi-uniform base points: equal arc-length spacing along the polylines
/// in the plane, a vertex stride in space; each refined onto the level set.
fn boundary_points(set: &Superlevel, count: usize) -> Vec<V> {
    let mesh = set.mesh();
    let raw: Vec<V> = match &mesh.cells {
        Cells::Segments(_) => {
            let lines = mesh.polylines();
            let total: f64 = lines.iter().flat_map(|l| l.windows(2)).map(|w| w[0].distance(&w[1])).sum();
            let step = total / count.max(1) as f64;
            let mut out = Vec::new();
            let mut next = step / 2.0;
            let mut run = 0.0;
            for w in lines.iter().flat_map(|l| l.windows(2)) {
                let len = w[0].distance(&w[1]);
                while next <= run + len && out.len() < count {
                    out.push(w[0].lerp(&w[1], (next - run) / len.max(f64::MIN_POSITIVE)));
                    next += step;
                }
                run += len;
            }
            out
        }
        Cells::Triangles(_) => {
            let n = mesh.vertices.len();
            (0..count.min(n)).map(|k| mesh.vertices[k * n / count.min(n)]).collect()
        }
    };
    raw.into_iter().map(|p| refine_onto_level(set.field, set.r, p)).collect()
}

/// Minimum of [`estimate_reach_at`] over quasi-uniform boundary points.
pub fn estimate_reach(field: &Field, r: f64, params: &ReachParams) -> Result<ReachReport, ReachError> {
    let set = Superlevel::new(field, r)?;
    let cap = params.cap_for(field);
    let points = boundary_points(&set, params.boundary_samples);
    let per_point: Vec<ReachEstimate> =
        points.iter().map(|p| estimate_on(&set, p, params, cap)).collect::<Result<_, _>>()?;
    let global_reach = per_point.iter().map(|e| e.epsilon).fold(cap, f64::min);
    Ok(ReachReport { r: set.r, global_reach, per_point })
}
