//! Regular and critical points of distance functions.
//!
//! Two independent tests are provided. The hull test looks at the unit
//! directions from a point to its nearest points: the point is regular when
//! some direction makes an obtuse angle (with margin `eta`) with all of them,
//! i.e. when the origin lies outside their convex hull. The directional test
//! works from function values only: the point is regular when some direction
//! decreases the function at a uniform rate on a whole neighbourhood.
//!
//! Scans also call a vertex regular when the field is strictly
//! differentiable there with a gradient of length at least 0.9: smooth
//! one-sided difference quotients on the grid stencil.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::field::{DistanceField, FieldError, FieldGradient};
use crate::geometry::{Norm, Vector};
use crate::scene::{NearestSet, SceneError};

type V = Vector<f64>;

pub const DEFAULT_ETA: f64 = 1e-3;
pub const DEFAULT_PROBES: usize = 16;
/// Vertices closer than this many grid steps to the set are not scanned.
pub const SCAN_MIN_DISTANCE_STEPS: f64 = 3.0;
/// The no-stationary-point check requires a one-sided quotient at most this.
pub const STATIONARY_BOUND: f64 = -0.5;
/// Gradient length above which a vertex the gradient probe finds smooth is
/// taken as strictly differentiable, hence regular, whatever the witness
/// test says.
pub const DIFFERENTIABLE_GRADIENT: f64 = 0.9;

#[derive(Debug, thiserror::Error)]
pub enum CriticalError {
    #[error("no witness directions")]
    EmptyDirections,
    #[error("the hull criterion needs the Euclidean norm")]
    NonEuclidean,
    #[error("the hull criterion needs the scene attached to the field")]
    NeedsScene,
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Hull,
    Directional,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    /// Under the hull criterion `direction` makes an obtuse angle with every
    /// witness direction, so the distance increases along it at rate at
    /// least `rate`; under the directional criterion it decreases the
    /// function uniformly near the point at rate at least `rate`.
    Regular {
        direction: [f64; 3],
        rate: f64,
    },
    Critical,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticalVerdict {
    pub point: V,
    pub status: Status,
    pub criterion: Criterion,
    /// Hull: `max_w min_u −⟨w, u⟩`. Directional: best uniform decrease rate.
    pub margin: f64,
}

impl CriticalVerdict {
    pub fn is_critical(&self) -> bool {
        matches!(self.status, Status::Critical)
    }

    pub fn direction(&self) -> Option<V> {
        match self.status {
            Status::Regular { direction, .. } => {
                Some(V::from_slice(&direction[..self.point.dim()]).expect("2 or 3 coordinates"))
            }
            Status::Critical => None,
        }
    }
}

fn regular_or_critical(point: V, criterion: Criterion, margin: f64, eta: f64, w: Option<V>) -> CriticalVerdict {
    let status = match w {
        Some(w) if margin >= eta => {
            let mut direction = [0.0; 3];
            direction[..w.dim()].copy_from_slice(w.coords());
            Status::Regular { direction, rate: margin }
        }
        _ => Status::Critical,
    };
    CriticalVerdict { point, status, criterion, margin }
}

/// Hull test on the witness directions of `near`.
///
/// Directions are renormalized to Euclidean length one, which is only
/// meaningful for the Euclidean norm.
pub fn hull_criterion(near: &NearestSet<f64>, eta: f64) -> Result<CriticalVerdict, CriticalError> {
    let dirs: Vec<V> = near.directions.iter().filter_map(|d| d.normalized()).collect();
    if dirs.is_empty() {
        return Err(CriticalError::EmptyDirections);
    }
    let (margin, w) = if dirs[0].dim() == 2 { hull_margin_2d(&dirs) } else { hull_margin_3d(&dirs) };
    Ok(regular_or_critical(near.query, Criterion::Hull, margin, eta, w))
}

/// Largest angular gap between planar unit vectors; the best `w` bisects it.
fn hull_margin_2d(dirs: &[V]) -> (f64, Option<V>) {
    let mut angles: Vec<f64> = dirs.iter().map(|d| d.y().atan2(d.x())).collect();
    angles.sort_by(f64::total_cmp);
    let tau = std::f64::consts::TAU;
    let (mut gap, mut start) = (angles[0] + tau - angles[angles.len() - 1], angles[angles.len() - 1]);
    for pair in angles.windows(2) {
        if pair[1] - pair[0] > gap {
            gap = pair[1] - pair[0];
            start = pair[0];
        }
    }
    let mid = start + gap / 2.0;
    (-(gap / 2.0).cos(), Some(V::new2(mid.cos(), mid.sin())))
}

fn hull_margin_3d(dirs: &[V]) -> (f64, Option<V>) {
    match min_norm_point(dirs) {
        Some(p) if p.length() > 1e-12 => {
            let m = p.length();
            (m, Some(p * (-1.0 / m)))
        }
        _ => (-depth_inside_hull(dirs), None),
    }
}

/// Minimum-norm point of `conv(pts)` by enumerating faces with at most
/// three vertices; `None` when the origin lies in the hull.
fn min_norm_point(pts: &[V]) -> Option<V> {
    let n = pts.len();
    if contains_origin(pts) {
        return None;
    }
    let mut best: Option<V> = None;
    let mut consider = |p: V| {
        if best.is_none_or(|b| p.norm_squared() < b.norm_squared()) {
            best = Some(p);
        }
    };
    for i in 0..n {
        consider(pts[i]);
        for j in i + 1..n {
            if let Some(p) = min_norm_on_simplex(&[pts[i], pts[j]]) {
                consider(p);
            }
            for k in j + 1..n {
                if let Some(p) = min_norm_on_simplex(&[pts[i], pts[j], pts[k]]) {
                    consider(p);
                }
            }
        }
    }
    best
}

/// Minimum-norm point of the affine hull of a segment or triangle, if it
/// lies inside the simplex.
fn min_norm_on_simplex(s: &[V]) -> Option<V> {
    let a = s[0];
    match s.len() {
        2 => {
            let e = s[1] - a;
            let ee = e.norm_squared();
            if ee == 0.0 {
                return None;
            }
            let t = -a.dot(&e) / ee;
            (0.0..=1.0).contains(&t).then(|| a + e * t)
        }
        3 => {
            let (e1, e2) = (s[1] - a, s[2] - a);
            let (a11, a12, a22) = (e1.dot(&e1), e1.dot(&e2), e2.dot(&e2));
            let (b1, b2) = (-a.dot(&e1), -a.dot(&e2));
            let det = a11 * a22 - a12 * a12;
            if det.abs() <= 1e-14 * a11 * a22 {
                return None;
            }
            let u = (b1 * a22 - b2 * a12) / det;
            let v = (a11 * b2 - a12 * b1) / det;
            (u >= 0.0 && v >= 0.0 && u + v <= 1.0).then(|| a + e1 * u + e2 * v)
        }
        _ => None,
    }
}

fn det3(a: &V, b: &V, c: &V) -> f64 {
    a.dot(&b.cross(c))
}

/// Whether the origin lies in the convex hull of spatial points (closed).
fn contains_origin(pts: &[V]) -> bool {
    let n = pts.len();
    if pts.iter().any(|p| p.norm_squared() == 0.0) {
        return true;
    }
    for i in 0..n {
        for j in i + 1..n {
            if min_norm_on_simplex(&[pts[i], pts[j]]).is_some_and(|p| p.length() <= 1e-12) {
                return true;
            }
            for k in j + 1..n {
                if min_norm_on_simplex(&[pts[i], pts[j], pts[k]]).is_some_and(|p| p.length() <= 1e-12) {
                    return true;
                }
                for l in k + 1..n {
                    let (a, b, c, d) = (pts[i], pts[j], pts[k], pts[l]);
                    // origin inside tetrahedron iff it is on the same side of
                    // every face as the opposite vertex
                    let o = V::zero(3);
                    let faces = [(b, c, d, a), (a, c, d, b), (a, b, d, c), (a, b, c, d)];
                    let inside = faces.iter().all(|(p, q, r, opp)| {
                        let s_opp = det3(&(*q - *p), &(*r - *p), &(*opp - *p));
                        let s_o = det3(&(*q - *p), &(*r - *p), &(o - *p));
                        s_opp != 0.0 && s_opp * s_o >= 0.0
                    });
                    if inside {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Distance from the origin to the boundary of a hull that contains it:
/// the smallest offset among supporting facet planes. Zero for flat hulls.
fn depth_inside_hull(pts: &[V]) -> f64 {
    let n = pts.len();
    let mut depth = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let normal = (pts[j] - pts[i]).cross(&(pts[k] - pts[i]));
                let Some(nrm) = normal.normalized() else { continue };
                let off = nrm.dot(&pts[i]);
                let sides: Vec<f64> = pts.iter().map(|p| nrm.dot(p) - off).collect();
                let (lo, hi) = sides.iter().fold((0.0f64, 0.0f64), |(l, h), s| (l.min(*s), h.max(*s)));
                if lo >= -1e-12 || hi <= 1e-12 {
                    depth = depth.min(off.abs());
                }
            }
        }
    }
    if depth.is_finite() {
        depth
    } else {
        0.0
    }
}

/// Directions and neighbourhood probes shared by every directional test of
/// a scan. Probe offsets live in the unit ball and are scaled by `delta`.
#[derive(Clone, Debug)]
pub struct DirectionalSampler {
    norm: Norm<f64>,
    directions: Vec<V>,
    offsets: Vec<V>,
}

impl DirectionalSampler {
    pub fn new(field: &DistanceField<f64>, directions: usize, probes: usize, seed: u64) -> Self {
        let dim = field.dim();
        let norm = field.norm().clone();
        let directions = norm.sample_unit_sphere(directions, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut offsets = vec![V::zero(dim)];
        while offsets.len() < probes.max(1) {
            let c: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let v = V::from_slice(&c).expect("2 or 3 coordinates");
            if v.norm_squared() <= 1.0 {
                offsets.push(v);
            }
        }
        Self { norm, directions, offsets }
    }

    pub fn directions(&self) -> &[V] {
        &self.directions
    }

    /// Angular spacing of the direction sample, in radians.
    fn spacing(&self) -> f64 {
        let n = self.directions.len().max(1) as f64;
        if self.norm.dim() == 2 {
            2.0 * std::f64::consts::PI / n
        } else {
            (4.0 * std::f64::consts::PI / n).sqrt()
        }
    }

    fn unit(&self, u: &V) -> Option<V> {
        let n = self.norm.eval(u);
        (n > 0.0).then(|| *u * (1.0 / n))
    }
}

/// Halvings of the pattern search that refines the best sampled direction.
const REFINE_ROUNDS: usize = 12;

/// Euclidean unit vectors spanning the tangent space at the unit vector `u`.
fn tangent_basis(u: &V) -> Vec<V> {
    if u.dim() == 2 {
        return vec![V::new2(-u.y(), u.x())];
    }
    let helper = if u.x().abs() < 0.9 { V::axis(3, 0) } else { V::axis(3, 1) };
    let a = u.cross(&helper).normalized().expect("helper is not parallel");
    vec![a, u.cross(&a)]
}

/// Directional test at `x` on the ball of radius `delta`.
///
/// `f` is the function under test (interpolated field or exact distance).
/// The ball shrinks to `d(x)/2` when `d(x) < 2 delta`, so it never reaches
/// the set itself, where no direction can decrease `d`. When no sampled
/// direction decreases at rate `eta`, the best one is refined by a pattern
/// search on the unit sphere.
pub fn directional_criterion(
    f: &(dyn Fn(&V) -> Result<f64, FieldError> + Sync),
    x: &V,
    delta: f64,
    eta: f64,
    sampler: &DirectionalSampler,
) -> Result<CriticalVerdict, CriticalError> {
    let centre = f(x)?;
    let delta = delta.min(centre / 2.0);
    let probes: Vec<V> = sampler.offsets.iter().map(|o| *x + *o * delta).collect();
    let values: Vec<f64> = probes.iter().map(f).collect::<Result<_, _>>()?;
    let steps = [delta / 4.0, delta / 2.0, delta];
    let limit = delta * delta * (1.0 + 1e-12);

    // worst-case decrease rate along v, abandoning once it cannot beat `floor`
    let margin = |v: &V, floor: f64| -> Result<f64, FieldError> {
        let mut worst = f64::NEG_INFINITY;
        for (z, fz) in probes.iter().zip(&values) {
            for &t in &steps {
                let y = *z + *v * t;
                if (y - *x).norm_squared() > limit {
                    continue;
                }
                worst = worst.max((f(&y)? - fz) / t);
                if -worst <= floor {
                    return Ok(-worst);
                }
            }
        }
        Ok(-worst)
    };

    // try directions roughly along the steepest descent first
    let mut order: Vec<(usize, f64)> = sampler
        .directions
        .iter()
        .enumerate()
        .map(|(i, v)| f(&(*x + *v * (delta / 4.0))).map(|fv| (i, fv - centre)))
        .collect::<Result<_, _>>()?;
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));

    let mut best = (f64::NEG_INFINITY, None);
    for (i, _) in order {
        let v = sampler.directions[i];
        let m = margin(&v, best.0.min(eta))?;
        if m > best.0 {
            best = (m, Some(v));
        }
        if best.0 >= eta {
            break;
        }
    }

    if let (true, Some(v)) = (best.0 < eta, best.1) {
        let mut u = v.normalized().expect("unit direction");
        let (mut step, mut halvings, mut moves) = (sampler.spacing(), 0, 0);
        while halvings < REFINE_ROUNDS && moves < 4 * REFINE_ROUNDS {
            let mut moved = false;
            for t in tangent_basis(&u) {
                for sign in [1.0, -1.0] {
                    let Some(cand) = (u + t * (sign * step)).normalized() else { continue };
                    let Some(w) = sampler.unit(&cand) else { continue };
                    let m = margin(&w, best.0)?;
                    if m > best.0 {
                        best = (m, Some(w));
                        u = cand;
                        moved = true;
                        moves += 1;
                    }
                }
            }
            if best.0 >= eta {
                break;
            }
            if !moved {
                step /= 2.0;
                halvings += 1;
            }
        }
    }
    Ok(regular_or_critical(*x, Criterion::Directional, best.0, eta, best.1))
}

/// Which test a scan applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CriterionChoice {
    /// Hull for the Euclidean norm, directional otherwise.
    Auto,
    Hull,
    Directional,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanParams {
    pub criterion: CriterionChoice,
    pub eta: f64,
    /// Neighbourhood radius of the directional test; `None` means `4h`.
    pub delta: Option<f64>,
    /// Direction count; `None` means 32 in the plane and 128 in space.
    pub directions: Option<usize>,
    pub probes: usize,
    pub seed: u64,
    /// Witness tolerance of the hull test; `None` means `2h`.
    pub tau: Option<f64>,
    /// Evaluate the exact distance instead of interpolating the field.
    pub exact: bool,
}

impl Default for ScanParams {
    fn default() -> Self {
        Self {
            criterion: CriterionChoice::Auto,
            eta: DEFAULT_ETA,
            delta: None,
            directions: None,
            probes: DEFAULT_PROBES,
            seed: 0,
            tau: None,
            exact: false,
        }
    }
}

/// Parameters after defaults were filled in from the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedParams {
    pub criterion: Criterion,
    pub eta: f64,
    pub delta: f64,
    pub directions: usize,
    pub probes: usize,
    pub seed: u64,
    pub tau: f64,
    pub exact: bool,
}

impl ScanParams {
    pub fn resolve(&self, field: &DistanceField<f64>) -> ResolvedParams {
        let h = field.h();
        let criterion = match self.criterion {
            CriterionChoice::Hull => Criterion::Hull,
            CriterionChoice::Directional => Criterion::Directional,
            CriterionChoice::Auto if field.norm().is_euclidean() && field.scene().is_some() => Criterion::Hull,
            CriterionChoice::Auto => Criterion::Directional,
        };
        ResolvedParams {
            criterion,
            eta: self.eta,
            delta: self.delta.unwrap_or(4.0 * h),
            directions: self.directions.unwrap_or(if field.dim() == 2 { 32 } else { 128 }),
            probes: self.probes,
            seed: self.seed,
            tau: self.tau.unwrap_or(2.0 * h),
            exact: self.exact,
        }
    }
}

/// Result of [`critical_scan`].
#[derive(Clone, Debug)]
pub struct CriticalReport {
    pub scene_hash: String,
    pub norm: String,
    pub h: f64,
    pub params: ResolvedParams,
    /// One verdict per scanned vertex, in vertex-index order.
    pub verdicts: Vec<CriticalVerdict>,
    pub critical_values: Vec<f64>,
    /// Scanned vertices where no sampled direction decreases at rate 1/2.
    pub stationary_violations: Vec<V>,
    pub hausdorff: HausdorffEstimate,
}

impl CriticalReport {
    pub fn critical_points(&self) -> impl Iterator<Item = &V> {
        self.verdicts.iter().filter(|v| v.is_critical()).map(|v| &v.point)
    }

    pub fn critical_count(&self) -> usize {
        self.verdicts.iter().filter(|v| v.is_critical()).count()
    }

    /// Distance from `r` to the nearest detected critical value.
    pub fn distance_to_critical_value(&self, r: f64) -> Option<f64> {
        self.critical_values.iter().map(|c| (c - r).abs()).min_by(f64::total_cmp)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let pts: Vec<Vec<f64>> = self.critical_points().map(|p| p.to_f64_vec()).collect();
        let viol: Vec<Vec<f64>> = self.stationary_violations.iter().map(|p| p.to_f64_vec()).collect();
        serde_json::json!({
            "scene_hash": self.scene_hash,
            "norm": self.norm,
            "h": self.h,
            "params": self.params,
            "scanned": self.verdicts.len(),
            "critical_points": pts,
            "critical_values": self.critical_values,
            "stationary_violations": viol,
            "hausdorff": self.hausdorff.summary_json(),
        })
    }
}

/// Whether vertex `idx` is scanned: far enough from the set and from the
/// grid boundary for every test to stay in bounds.
fn scannable(field: &DistanceField<f64>, idx: usize, delta: f64) -> bool {
    let h = field.h();
    let x = field.grid().vertex_at(idx);
    field.values()[idx] > SCAN_MIN_DISTANCE_STEPS * h
        && field.grid().interior_margin(&x) >= (2.0 * delta).max(2.0 * h) - 1e-9 * h
}

/// Classifies every interior vertex with `d > 3h` and collects the critical
/// values.
pub fn critical_scan(field: &DistanceField<f64>, params: &ScanParams) -> Result<CriticalReport, CriticalError> {
    let p = params.resolve(field);
    let h = field.h();
    if p.criterion == Criterion::Hull {
        if !field.norm().is_euclidean() {
            return Err(CriticalError::NonEuclidean);
        }
        if field.scene().is_none() {
            return Err(CriticalError::NeedsScene);
        }
    }
    if p.exact && field.scene().is_none() {
        return Err(CriticalError::NeedsScene);
    }
    let sampler = DirectionalSampler::new(field, p.directions, p.probes, p.seed);
    let f = |x: &V| if p.exact { field.exact_or_interpolated(x) } else { field.interpolate(x) };

    let candidates: Vec<usize> = (0..field.grid().len()).filter(|&i| scannable(field, i, p.delta)).collect();
    let results: Vec<(CriticalVerdict, bool)> = candidates
        .par_iter()
        .map(|&idx| {
            let x = field.grid().vertex_at(idx);
            let verdict = match p.criterion {
                Criterion::Hull => {
                    let scene = field.scene().expect("checked above");
                    let near = scene.nearest_points(&x, field.norm(), p.tau)?;
                    let eta = p.eta.max(0.75 * h / near.distance);
                    hull_criterion(&near, eta)?
                }
                Criterion::Directional => directional_criterion(&f, &x, p.delta, p.eta, &sampler)?,
            };
            let verdict = match (verdict.is_critical(), field.gradient(&x)?) {
                (true, FieldGradient::Smooth(g)) if g.length() >= DIFFERENTIABLE_GRADIENT => {
                    // strictly differentiable with a nonzero gradient: regular
                    let rate = g.length();
                    let g = g.normalized().expect("nonzero");
                    let v = if verdict.criterion == Criterion::Hull { g } else { -g };
                    let mut direction = [0.0; 3];
                    direction[..v.dim()].copy_from_slice(v.coords());
                    CriticalVerdict { status: Status::Regular { direction, rate }, ..verdict }
                }
                _ => verdict,
            };
            let fx = field.values()[idx];
            let mut steepest = f64::INFINITY;
            for v in sampler.directions() {
                steepest = steepest.min((f(&(x + *v * h))? - fx) / h);
                if steepest <= STATIONARY_BOUND {
                    break;
                }
            }
            Ok((verdict, steepest <= STATIONARY_BOUND))
        })
        .collect::<Result<_, CriticalError>>()?;

    let mut critical_values = Vec::new();
    let mut stationary_violations = Vec::new();
    let mut verdicts = Vec::with_capacity(results.len());
    for ((verdict, descends), &idx) in results.into_iter().zip(&candidates) {
        if verdict.is_critical() {
            critical_values.push(field.values()[idx]);
        }
        if !descends {
            stationary_violations.push(verdict.point);
        }
        verdicts.push(verdict);
    }
    critical_values.sort_by(f64::total_cmp);
    critical_values.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    let s = (field.dim() as f64 - 1.0) / 2.0;
    let hausdorff = hausdorff_box_estimate(&critical_values, s, 4.0 * h);
    Ok(CriticalReport {
        scene_hash: field.scene_hash().to_owned(),
        norm: field.norm_spec().to_owned(),
        h,
        params: p,
        verdicts,
        critical_values,
        stationary_violations,
        hausdorff,
    })
}

/// Box-counting premeasure of a finite set of reals at scale `delta`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HausdorffEstimate {
    pub s: f64,
    pub delta: f64,
    pub cover: Vec<(f64, f64)>,
    pub premeasure: f64,
}

impl HausdorffEstimate {
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "s": self.s,
            "delta": self.delta,
            "intervals": self.cover.len(),
            "premeasure": self.premeasure,
        })
    }
}

/// Greedy cover of the sorted values by intervals `[v, v + delta]`, each
/// started at the smallest value not yet covered; the premeasure is
/// `count · delta^s`.
pub fn hausdorff_box_estimate(values: &[f64], s: f64, delta: f64) -> HausdorffEstimate {
    let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    sorted.sort_by(f64::total_cmp);
    let mut cover: Vec<(f64, f64)> = Vec::new();
    for v in sorted {
        match cover.last() {
            Some(&(_, hi)) if v <= hi => {}
            _ => cover.push((v, v + delta)),
        }
    }
    let premeasure = cover.len() as f64 * delta.powf(s);
    HausdorffEstimate { s, delta, cover, premeasure }
}

/// Outcome of [`dc_regularity_probe`]. The probe never certifies
/// criticality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeVerdict {
    Regular,
    Inconclusive,
}

const PROBE_STEPS: [f64; 3] = [1e-3, 1e-4, 1e-5];
const PROBE_STABILITY: f64 = 1e-4;
const PROBE_SEPARATION: f64 = 1e-3;

/// Two-sided directional derivative of a convex function, if the one-sided
/// quotients along `±v` agree and have stabilized over the probe steps.
fn two_sided_derivative(f: &dyn Fn(&[f64]) -> f64, x: &[f64], v: &[f64]) -> Option<f64> {
    let at = |t: f64| -> Vec<f64> { x.iter().zip(v).map(|(a, b)| a + t * b).collect() };
    let f0 = f(x);
    let fwd: Vec<f64> = PROBE_STEPS.iter().map(|&t| (f(&at(t)) - f0) / t).collect();
    let bwd: Vec<f64> = PROBE_STEPS.iter().map(|&t| (f0 - f(&at(-t))) / t).collect();
    let stable = |q: &[f64]| q.windows(2).last().is_some_and(|w| (w[0] - w[1]).abs() <= PROBE_STABILITY);
    let (pf, pb) = (fwd[fwd.len() - 1], bwd[bwd.len() - 1]);
    (stable(&fwd) && stable(&bwd) && (pf - pb).abs() <= PROBE_STABILITY).then_some((pf + pb) / 2.0)
}

/// Regularity test for `f = f_plus − f_minus` at `x` along `v`: regular when
/// both convex parts have two-sided directional derivatives along `v` and
/// these differ.
pub fn dc_regularity_probe(
    f_plus: &dyn Fn(&[f64]) -> f64,
    f_minus: &dyn Fn(&[f64]) -> f64,
    x: &[f64],
    v: &[f64],
) -> ProbeVerdict {
    match (two_sided_derivative(f_plus, x, v), two_sided_derivative(f_minus, x, v)) {
        (Some(a), Some(b)) if (a - b).abs() > PROBE_SEPARATION => ProbeVerdict::Regular,
        _ => ProbeVerdict::Inconclusive,
    }
}
