//! Exact critical points of the Euclidean distance to a finite planar set:
//! circumcentres lying in their (empty-circle) triangle and midpoints of
//! pairs whose diametral disc is empty.

use distlab::Vector64;

pub struct CriticalPoint {
    pub point: Vector64,
    pub value: f64,
}

fn empty_disc(points: &[Vector64], c: &Vector64, r: f64, skip: &[usize]) -> bool {
    points.iter().enumerate().all(|(k, p)| skip.contains(&k) || p.distance(c) >= r - 1e-12)
}

pub fn critical_points(points: &[Vector64]) -> Vec<CriticalPoint> {
    let n = points.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let m = (points[i] + points[j]) * 0.5;
            let r = points[i].distance(&points[j]) / 2.0;
            if empty_disc(points, &m, r, &[i, j]) {
                out.push(CriticalPoint { point: m, value: r });
            }
            for k in j + 1..n {
                let (a, b, c) = (points[i], points[j], points[k]);
                let d = 2.0 * (a.x() * (b.y() - c.y()) + b.x() * (c.y() - a.y()) + c.x() * (a.y() - b.y()));
                if d.abs() < 1e-14 {
                    continue;
                }
                let (a2, b2, c2) = (a.norm_squared(), b.norm_squared(), c.norm_squared());
                let ux = (a2 * (b.y() - c.y()) + b2 * (c.y() - a.y()) + c2 * (a.y() - b.y())) / d;
                let uy = (a2 * (c.x() - b.x()) + b2 * (a.x() - c.x()) + c2 * (b.x() - a.x())) / d;
                let o = Vector64::new2(ux, uy);
                let r = o.distance(&a);
                if !empty_disc(points, &o, r, &[i, j, k]) {
                    continue;
                }
                // barycentric containment
                let area = |p: &Vector64, q: &Vector64, s: &Vector64| {
                    (q.x() - p.x()) * (s.y() - p.y()) - (s.x() - p.x()) * (q.y() - p.y())
                };
                let total = area(&a, &b, &c);
                let (l1, l2, l3) = (area(&o, &b, &c) / total, area(&a, &o, &c) / total, area(&a, &b, &o) / total);
                if l1 >= -1e-12 && l2 >= -1e-12 && l3 >= -1e-12 {
                    out.push(CriticalPoint { point: o, value: r });
                }
            }
        }
    }
    out
}
