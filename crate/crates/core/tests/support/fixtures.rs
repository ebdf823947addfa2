use std::sync::Arc;

use distlab::field::{DistanceField, GridSpec};
use distlab::scene::ClosedSet;
use distlab::{Norm64, Vector64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn p2(x: f64, y: f64) -> Vector64 {
    Vector64::new2(x, y)
}

pub fn point_field(points: &[Vector64], norm: Norm64, lo: f64, hi: f64, h: f64) -> DistanceField<f64> {
    let scene = ClosedSet::points(points.iter().copied()).expect("nonempty");
    let grid = GridSpec::covering(p2(lo, lo), p2(hi, hi), h).expect("grid");
    DistanceField::sample(Arc::new(scene), norm, grid).expect("field")
}

pub fn two_points() -> Vec<Vector64> {
    vec![p2(-1.0, 0.0), p2(1.0, 0.0)]
}

/// `n` uniform points in the unit square.
pub fn cloud(n: usize, seed: u64) -> Vec<Vector64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| p2(rng.gen(), rng.gen())).collect()
}

/// Euclidean length of the unit sphere of the ℓᵖ norm in the plane, from a
/// dense polygon.
pub fn lp_circle_length(p: f64, r: f64) -> f64 {
    let n = 200_000;
    let pt = |k: usize| {
        let t = std::f64::consts::TAU * k as f64 / n as f64;
        let (c, s) = (t.cos(), t.sin());
        let scale = r / (c.abs().powf(p) + s.abs().powf(p)).powf(1.0 / p);
        (c * scale, s * scale)
    };
    (0..n)
        .map(|k| {
            let (a, b) = (pt(k), pt(k + 1));
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        })
        .sum()
}
