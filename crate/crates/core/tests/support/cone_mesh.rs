//! Shortest paths on a polar vertex lattice of the lateral cone surface
//! `{(ρ cos θ, ρ sin θ, αρ)}`. Every vertex is joined to all lattice
//! neighbours within a square window; an edge is the surface curve that is
//! straight in `(ρ, θ)`, with its length integrated from the metric induced
//! by the embedding. Graph distances are lengths of actual surface paths,
//! hence upper bounds of the intrinsic distance, and approach it as the
//! window grows. The surface is never unrolled.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::TAU;

pub struct ConeMesh {
    pub alpha: f64,
    pub n_rho: usize,
    pub n_theta: usize,
    pub d_rho: f64,
    pub d_theta: f64,
    pub window: i64,
    /// Edge length by start ring and offset.
    lengths: Vec<f64>,
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl ConeMesh {
    /// Lattice of `n_rho + 1` rings up to `rho_max` and `n_theta` spokes;
    /// its quads split into `2 n_rho n_theta` triangles.
    pub fn new(alpha: f64, rho_max: f64, n_rho: usize, n_theta: usize, window: i64) -> Self {
        let d_rho = rho_max / n_rho as f64;
        let d_theta = TAU / n_theta as f64;
        let w = (2 * window + 1) as usize;
        let mut lengths = vec![f64::INFINITY; (n_rho + 1) * w * w];
        for i in 0..=n_rho {
            for a in -window..=window {
                let j = i as i64 + a;
                if j < 0 || j > n_rho as i64 {
                    continue;
                }
                for b in -window..=window {
                    let idx = (i * w + (a + window) as usize) * w + (b + window) as usize;
                    lengths[idx] = Self::curve_length(alpha, i as f64 * d_rho, a as f64 * d_rho, b as f64 * d_theta);
                }
            }
        }
        Self { alpha, n_rho, n_theta, d_rho, d_theta, window, lengths }
    }

    /// Length of `t ↦ (ρ₀ + t Δρ, t Δθ)` under `ds² = (1+α²) dρ² + ρ² dθ²`
    /// (composite Simpson, 64 panels).
    fn curve_length(alpha: f64, rho0: f64, d_rho: f64, d_theta: f64) -> f64 {
        let speed = |t: f64| {
            let rho = rho0 + t * d_rho;
            ((1.0 + alpha * alpha) * d_rho * d_rho + rho * rho * d_theta * d_theta).sqrt()
        };
        let n = 64;
        let h = 1.0 / n as f64;
        let mut s = speed(0.0) + speed(1.0);
        for k in 1..n {
            s += speed(k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    pub fn triangles(&self) -> usize {
        2 * self.n_rho * self.n_theta
    }

    pub fn vertex(&self, i: usize, j: usize) -> usize {
        i * self.n_theta + j
    }

    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (i as f64 * self.d_rho, j as f64 * self.d_theta)
    }

    /// Graph distances from vertex `(i0, j0)` to every vertex.
    pub fn distances_from(&self, i0: usize, j0: usize) -> Vec<f64> {
        let n = (self.n_rho + 1) * self.n_theta;
        let w = (2 * self.window + 1) as usize;
        let mut dist = vec![f64::INFINITY; n];
        let start = self.vertex(i0, j0);
        dist[start] = 0.0;
        let mut heap = BinaryHeap::from([Item(0.0, start)]);
        while let Some(Item(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            let (i, j) = (v / self.n_theta, v % self.n_theta);
            for a in -self.window..=self.window {
                let ni = i as i64 + a;
                if ni < 0 || ni > self.n_rho as i64 {
                    continue;
                }
                let row = (i * w + (a + self.window) as usize) * w;
                for b in -self.window..=self.window {
                    if a == 0 && b == 0 {
                        continue;
                    }
                    let nj = (j as i64 + b).rem_euclid(self.n_theta as i64) as usize;
                    let u = ni as usize * self.n_theta + nj;
                    let nd = d + self.lengths[row + (b + self.window) as usize];
                    if nd < dist[u] {
                        dist[u] = nd;
                        heap.push(Item(nd, u));
                    }
                }
            }
        }
        dist
    }
}
