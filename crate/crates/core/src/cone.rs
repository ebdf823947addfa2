//! The cone `C = A × ℝ ⊂ ℝ⁴` over `A = {α²(x² + y²) = z², z ≥ 0}`: intrinsic
//! distances, angles between directions at the apex, and the search for
//! three pairwise obtuse directions.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Opening parameter above which no three directions are pairwise obtuse.
pub fn critical_alpha() -> f64 {
    (2.0 * PI * PI - 1.0).sqrt()
}

/// Largest tolerated correction when clamping a cosine into `[-1, 1]`.
pub const CLAMP_LIMIT: f64 = 1e-9;
/// Angles must exceed `π/2` by this much to count as obtuse.
pub const OBTUSE_MARGIN: f64 = 1e-6;
pub const INEQUALITY_SLACK: f64 = 1e-9;
const REFINE_ROUNDS: usize = 20;
const SEARCH_BATCHES: u64 = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConeError {
    #[error("directions have different radial factors ({0} vs {1})")]
    RadiusMismatch(f64, f64),
    #[error("directions belong to different cones (alpha {0} vs {1})")]
    AlphaMismatch(f64, f64),
    #[error("zero direction")]
    ZeroDirection,
    #[error("invalid direction: {0}")]
    Invalid(&'static str),
    #[error("cosine needed a clamp of {0}, above the limit")]
    ClampTooLarge(f64),
    #[error("precondition violated: {0}")]
    Precondition(&'static str),
}

/// The vector `(r cos θ, r sin θ, α r, s)` on the cone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConeDirection {
    pub r: f64,
    pub theta: f64,
    pub s: f64,
    pub alpha: f64,
}

impl ConeDirection {
    pub fn new(r: f64, theta: f64, s: f64, alpha: f64) -> Result<Self, ConeError> {
        if !(r.is_finite() && theta.is_finite() && s.is_finite() && alpha.is_finite()) {
            return Err(ConeError::Invalid("non-finite coordinate"));
        }
        if r < 0.0 {
            return Err(ConeError::Invalid("negative radial factor"));
        }
        if alpha <= 0.0 {
            return Err(ConeError::Invalid("alpha must be positive"));
        }
        Ok(Self { r, theta: theta.rem_euclid(2.0 * PI), s, alpha })
    }

    pub fn vector(&self) -> [f64; 4] {
        [self.r * self.theta.cos(), self.r * self.theta.sin(), self.alpha * self.r, self.s]
    }

    pub fn norm_squared(&self) -> f64 {
        self.r * self.r * (1.0 + self.alpha * self.alpha) + self.s * self.s
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Distance from the apex along the generator.
    pub fn slant(&self) -> f64 {
        self.r * (1.0 + self.alpha * self.alpha).sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { r: self.r * c, s: self.s * c, ..*self }
    }
}

/// Angular separation reduced to `[0, π]`.
fn angular_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

fn same_alpha(a: &ConeDirection, b: &ConeDirection) -> Result<(), ConeError> {
    if a.alpha != b.alpha {
        return Err(ConeError::AlphaMismatch(a.alpha, b.alpha));
    }
    Ok(())
}

/// The pair in a fixed order, so that rounding does not depend on the
/// argument order.
fn canonical<'a>(a: &'a ConeDirection, b: &'a ConeDirection) -> (&'a ConeDirection, &'a ConeDirection) {
    let key = |d: &ConeDirection| [d.theta, d.r, d.s];
    if key(b).iter().zip(key(a)).find(|(x, y)| *x != y).is_some_and(|(x, y)| *x < y) {
        (b, a)
    } else {
        (a, b)
    }
}

/// Length of the path at constant `r` moving `θ` the short way round and `s`
/// linearly.
pub fn cone_path_length(a: &ConeDirection, b: &ConeDirection) -> Result<f64, ConeError> {
    same_alpha(a, b)?;
    let (a, b) = canonical(a, b);
    if a.r != b.r {
        return Err(ConeError::RadiusMismatch(a.r, b.r));
    }
    let dt = angular_gap(a.theta, b.theta);
    Ok((dt * dt * a.r * a.r + (b.s - a.s) * (b.s - a.s)).sqrt())
}

/// Intrinsic distance in the product metric. Unrolling the lateral surface
/// of `A` compresses angles by `k = 1/√(1+α²)`.
pub fn cone_intrinsic_distance(a: &ConeDirection, b: &ConeDirection) -> Result<f64, ConeError> {
    same_alpha(a, b)?;
    let (a, b) = canonical(a, b);
    let (l1, l2) = (a.slant(), b.slant());
    let k = 1.0 / (1.0 + a.alpha * a.alpha).sqrt();
    let phi = k * angular_gap(a.theta, b.theta);
    let lateral_sq =
        if phi <= PI { (l1 * l1 + l2 * l2 - 2.0 * l1 * l2 * phi.cos()).max(0.0) } else { (l1 + l2).powi(2) };
    Ok((lateral_sq + (a.s - b.s) * (a.s - b.s)).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConeAngle {
    pub angle: f64,
    /// Amount by which the cosine was moved into `[-1, 1]`.
    pub clamp: f64,
}

/// Angle at the apex from the law of cosines with the intrinsic distance.
pub fn cone_angle(a: &ConeDirection, b: &ConeDirection) -> Result<ConeAngle, ConeError> {
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(ConeError::ZeroDirection);
    }
    let d = cone_intrinsic_distance(a, b)?;
    let c = (na * na + nb * nb - d * d) / (2.0 * na * nb);
    let clamped = c.clamp(-1.0, 1.0);
    let clamp = (c - clamped).abs();
    if clamp > CLAMP_LIMIT {
        return Err(ConeError::ClampTooLarge(clamp));
    }
    Ok(ConeAngle { angle: clamped.acos(), clamp })
}

#[derive(Clone, Debug, Serialize)]
pub struct InequalityVerdict {
    pub dist_sq: f64,
    pub path_sq: f64,
    pub bound: f64,
    pub norms_sq: f64,
    /// `dist² ≤ path²`, `path² ≤ 4π²r² + s₁² + s₂²`, `bound ≤ ‖ξ₁‖² + ‖ξ₂‖²`.
    pub holds: [bool; 3],
}

impl InequalityVerdict {
    pub fn all_hold(&self) -> bool {
        self.holds.iter().all(|&h| h)
    }
}

/// The chain `dist² ≤ (path length)² ≤ 4π²r² + s₁² + s₂² ≤ ‖ξ₁‖² + ‖ξ₂‖²`
/// for a pair at equal `r` with `s₁ s₂ ≥ 0`.
pub fn cone_inequality_check(a: &ConeDirection, b: &ConeDirection) -> Result<InequalityVerdict, ConeError> {
    same_alpha(a, b)?;
    if a.r != b.r {
        return Err(ConeError::RadiusMismatch(a.r, b.r));
    }
    if a.s * b.s < 0.0 {
        return Err(ConeError::Precondition("s values of opposite sign"));
    }
    if a.alpha < critical_alpha() {
        return Err(ConeError::Precondition("alpha below the critical opening"));
    }
    let dist_sq = cone_intrinsic_distance(a, b)?.powi(2);
    let path_sq = cone_path_length(a, b)?.powi(2);
    let bound = 4.0 * PI * PI * a.r * a.r + a.s * a.s + b.s * b.s;
    let norms_sq = a.norm_squared() + b.norm_squared();
    let holds = [
        dist_sq <= path_sq + INEQUALITY_SLACK,
        path_sq <= bound + INEQUALITY_SLACK,
        bound <= norms_sq + INEQUALITY_SLACK,
    ];
    Ok(InequalityVerdict { dist_sq, path_sq, bound, norms_sq, holds })
}

/// Outcome of [`inequality_batch`].
#[derive(Clone, Debug, Serialize)]
pub struct InequalityBatch {
    pub alpha: f64,
    pub pairs: usize,
    pub violations: usize,
    pub first_violation: Option<(ConeDirection, ConeDirection, InequalityVerdict)>,
}

/// Checks the inequality chain on `pairs` random admissible pairs: common
/// `r ∈ [0, 3)`, independent angles, and `s` values of one random sign with
/// magnitudes in `[0, 3)`.
pub fn inequality_batch(alpha: f64, pairs: usize, seed: u64) -> Result<InequalityBatch, ConeError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = InequalityBatch { alpha, pairs, violations: 0, first_violation: None };
    for _ in 0..pairs {
        let r = rng.gen_range(0.0..3.0);
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let s1 = sign * rng.gen_range(0.0..3.0);
        let s2 = sign * rng.gen_range(0.0..3.0);
        let a = ConeDirection::new(r, rng.gen_range(0.0..2.0 * PI), s1, alpha)?;
        let b = ConeDirection::new(r, rng.gen_range(0.0..2.0 * PI), s2, alpha)?;
        let verdict = cone_inequality_check(&a, &b)?;
        if !verdict.all_hold() {
            out.violations += 1;
            out.first_violation.get_or_insert((a, b, verdict));
        }
    }
    Ok(out)
}

/// Unit direction from an angular coordinate and an elevation `β` with
/// slant `cos β` and axial part `sin β`.
fn unit_direction(theta: f64, beta: f64, alpha: f64) -> ConeDirection {
    let r = beta.cos().max(0.0) / (1.0 + alpha * alpha).sqrt();
    ConeDirection { r, theta: theta.rem_euclid(2.0 * PI), s: beta.sin(), alpha }
}

type Params = [f64; 6];

fn triple(p: &Params, alpha: f64) -> [ConeDirection; 3] {
    [unit_direction(p[0], p[1], alpha), unit_direction(p[2], p[3], alpha), unit_direction(p[4], p[5], alpha)]
}

/// Smallest pairwise angle of a triple.
fn min_pairwise(t: &[ConeDirection; 3]) -> f64 {
    let mut m = f64::INFINITY;
    for (i, j) in [(0, 1), (0, 2), (1, 2)] {
        m = m.min(cone_angle(&t[i], &t[j]).map(|a| a.angle).unwrap_or(0.0));
    }
    m
}

fn random_params(rng: &mut ChaCha8Rng) -> Params {
    let mut p = [0.0; 6];
    for k in 0..3 {
        p[2 * k] = rng.gen_range(0.0..2.0 * PI);
        p[2 * k + 1] = rng.gen_range(-PI / 2.0..=PI / 2.0);
    }
    p
}

/// Coordinate ascent on the smallest pairwise angle with halving steps.
fn refine(mut p: Params, alpha: f64) -> (Params, f64) {
    let mut best = min_pairwise(&triple(&p, alpha));
    let mut step = 0.25;
    for _ in 0..REFINE_ROUNDS {
        for i in 0..6 {
            for sign in [1.0, -1.0] {
                let mut q = p;
                q[i] += sign * step;
                if i % 2 == 1 {
                    q[i] = q[i].clamp(-PI / 2.0, PI / 2.0);
                }
                let v = min_pairwise(&triple(&q, alpha));
                if v > best {
                    best = v;
                    p = q;
                }
            }
        }
        step /= 2.0;
    }
    (p, best)
}

#[derive(Clone, Debug, Serialize)]
pub struct ObtuseSearch {
    pub alpha: f64,
    pub samples: usize,
    pub witness: Option<[ConeDirection; 3]>,
    /// Largest smallest-pairwise-angle seen.
    pub max_min_pairwise_angle: f64,
}

impl ObtuseSearch {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plain data")
    }
}

/// Random triples of unit directions, split over a fixed number of
/// seed-derived batches, followed by coordinate ascent from the best one.
/// A triple is a witness when every pairwise angle exceeds `π/2 + 1e-6`.
pub fn obtuse_triple_search(alpha: f64, samples: usize, seed: u64) -> Result<ObtuseSearch, ConeError> {
    if samples < 3 {
        return Err(ConeError::Precondition("at least three samples"));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ConeError::Invalid("alpha must be positive"));
    }
    let per_batch = samples.div_ceil(SEARCH_BATCHES as usize);
    let best = (0..SEARCH_BATCHES)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(b.wrapping_mul(0x9e37_79b9_7f4a_7c15)));
            let take = per_batch.min(samples.saturating_sub(b as usize * per_batch));
            let mut best = ([0.0; 6], f64::NEG_INFINITY);
            for _ in 0..take {
                let p = random_params(&mut rng);
                let v = min_pairwise(&triple(&p, alpha));
                if v > best.1 {
                    best = (p, v);
                }
            }
            best
        })
        .reduce(|| ([0.0; 6], f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let (p, value) = refine(best.0, alpha);
    let (p, value) = if value >= best.1 { (p, value) } else { best };
    let witness = (value > PI / 2.0 + OBTUSE_MARGIN).then(|| triple(&p, alpha));
    Ok(ObtuseSearch { alpha, samples, witness, max_min_pairwise_angle: value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir(r: f64, theta: f64, s: f64, alpha: f64) -> ConeDirection {
        ConeDirection::new(r, theta, s, alpha).unwrap()
    }

    #[test]
    fn path_length_examples() {
        let a = 1.3;
        assert!((cone_path_length(&dir(1.0, 0.0, 0.0, a), &dir(1.0, PI, 0.0, a)).unwrap() - PI).abs() < 1e-15);
        let x = dir(0.7, 1.0, 0.2, a);
        assert_eq!(cone_path_length(&x, &x).unwrap(), 0.0);
        assert_eq!(cone_path_length(&dir(0.0, 0.0, 0.0, a), &dir(0.0, 0.0, 2.0, a)).unwrap(), 2.0);
        assert!(matches!(
            cone_path_length(&dir(1.0, 0.0, 0.0, a), &dir(2.0, 0.0, 0.0, a)),
            Err(ConeError::RadiusMismatch(..))
        ));
    }

    #[test]
    fn intrinsic_distance_examples() {
        let a = 2.0;
        let slant = (1.0f64 + a * a).sqrt();
        let apex = dir(0.0, 0.0, 0.0, a);
        assert!((cone_intrinsic_distance(&apex, &dir(1.0, 0.0, 0.0, a)).unwrap() - slant).abs() < 1e-12);
        assert!(
            (cone_intrinsic_distance(&dir(1.0, 0.4, 0.0, a), &dir(2.0, 0.4, 0.0, a)).unwrap() - slant).abs() < 1e-12
        );
        let ac = critical_alpha();
        let l = (2.0 * PI * PI).sqrt();
        let k = 1.0 / l;
        let expected = (2.0 * l * l * (1.0 - (k * PI).cos())).sqrt();
        let got = cone_intrinsic_distance(&dir(1.0, 0.0, 0.0, ac), &dir(1.0, PI, 0.0, ac)).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!(matches!(
            cone_intrinsic_distance(&dir(1.0, 0.0, 0.0, 1.0), &dir(1.0, 0.0, 0.0, 2.0)),
            Err(ConeError::AlphaMismatch(..))
        ));
    }

    #[test]
    fn angle_examples() {
        let a = 1.5;
        let x = dir(0.8, 2.0, -0.3, a);
        assert!(cone_angle(&x, &x).unwrap().angle < 1e-7);
        let up = dir(0.0, 0.0, 1.0, a);
        let down = dir(0.0, 0.0, -1.0, a);
        assert!((cone_angle(&up, &down).unwrap().angle - PI).abs() < 1e-12);
        let ac = critical_alpha();
        let ang = cone_angle(&dir(1.0, 0.0, 0.0, ac), &dir(1.0, PI, 0.0, ac)).unwrap().angle;
        assert!((ang - PI / (2.0 * PI * PI).sqrt()).abs() < 1e-12);
        assert!(ang <= PI / 2.0);
        assert!(matches!(cone_angle(&dir(0.0, 0.0, 0.0, a), &x), Err(ConeError::ZeroDirection)));
    }

    #[test]
    fn inequality_examples() {
        let ac = critical_alpha();
        assert!(cone_inequality_check(&dir(1.0, 0.0, 0.0, ac), &dir(1.0, PI, 0.0, ac)).unwrap().all_hold());
        let x = dir(0.5, 1.0, 0.5, ac);
        assert!(cone_inequality_check(&x, &x).unwrap().all_hold());
        assert!(matches!(
            cone_inequality_check(&dir(1.0, 0.0, 1.0, ac), &dir(1.0, 1.0, -1.0, ac)),
            Err(ConeError::Precondition(_))
        ));
    }

    #[test]
    fn search_examples() {
        let sharp = obtuse_triple_search(0.1, 2_000, 5).unwrap();
        let w = sharp.witness.expect("sharp cones admit obtuse triples");
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!(cone_angle(&w[i], &w[j]).unwrap().angle > PI / 2.0 + OBTUSE_MARGIN);
        }
        let blunt = obtuse_triple_search(critical_alpha(), 2_000, 5).unwrap();
        assert!(blunt.witness.is_none());
        assert!(blunt.max_min_pairwise_angle <= PI / 2.0 + OBTUSE_MARGIN);
        assert!(obtuse_triple_search(1.0, 2, 0).is_err());
    }
}
