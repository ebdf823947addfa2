//! Critical-point scans.

mod support;

use distlab::critical::{critical_scan, hull_criterion, CriterionChoice, ScanParams};
use distlab::field::FieldGradient;
use distlab::scene::NearestSet;
use distlab::{ClosedSet64, Norm64, Vector64};
use proptest::prelude::*;
use support::fixtures::{cloud, p2, point_field, two_points};
use support::voronoi::critical_points;

fn near(dirs: Vec<Vector64>) -> NearestSet<f64> {
    let query = Vector64::zero(dirs[0].dim());
    NearestSet { query, distance: 1.0, witnesses: dirs.clone(), directions: dirs, tolerance: 0.0 }
}

fn unit3(c: [f64; 3]) -> Option<Vector64> {
    Vector64::new3(c[0], c[1], c[2]).normalized()
}

proptest! {
    #[test]
    fn planar_hull_test_is_monotone_in_eta(
        angles in prop::collection::vec(0.0f64..std::f64::consts::TAU, 1..6),
        eta in 0.0f64..0.5,
        extra in 0.0f64..0.5,
    ) {
        let dirs: Vec<Vector64> = angles.iter().map(|t| p2(t.cos(), t.sin())).collect();
        let loose = hull_criterion(&near(dirs.clone()), eta).unwrap();
        let strict = hull_criterion(&near(dirs), eta + extra).unwrap();
        prop_assert!(!loose.is_critical() || strict.is_critical());
    }

    #[test]
    fn spatial_hull_test_is_monotone_in_eta(
        coords in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..6),
        eta in 0.0f64..0.5,
        extra in 0.0f64..0.5,
    ) {
        let dirs: Vec<Vector64> = coords.into_iter().filter_map(unit3).collect();
        prop_assume!(!dirs.is_empty());
        let loose = hull_criterion(&near(dirs.clone()), eta).unwrap();
        let strict = hull_criterion(&near(dirs), eta + extra).unwrap();
        prop_assert!(!loose.is_critical() || strict.is_critical());
    }
}

#[test]
fn strictly_differentiable_vertices_are_regular() {
    for seed in [1000, 1001] {
        let field = point_field(&cloud(20, seed), Norm64::euclidean(2), -0.5, 1.5, 0.01);
        let scan = critical_scan(&field, &ScanParams::default()).unwrap();
        for v in scan.verdicts.iter().filter(|v| v.is_critical()) {
            if let FieldGradient::Smooth(g) = field.gradient(&v.point).unwrap() {
                assert!(g.length() < 0.9, "seed {seed}: critical vertex {:?} has gradient {g:?}", v.point);
            }
        }
    }
}

#[test]
fn no_scanned_vertex_is_stationary() {
    let fields = [
        point_field(&cloud(20, 1002), Norm64::euclidean(2), -0.5, 1.5, 0.01),
        point_field(&two_points(), Norm64::lp(4.0, 2).unwrap(), -2.0, 2.0, 0.02),
        point_field(&two_points(), Norm64::lp(1.5, 2).unwrap(), -2.0, 2.0, 0.02),
    ];
    for field in &fields {
        let scan = critical_scan(field, &ScanParams { criterion: CriterionChoice::Directional, ..Default::default() })
            .unwrap();
        assert!(scan.stationary_violations.is_empty(), "{}: {:?}", field.norm_spec(), scan.stationary_violations);
    }
}

#[test]
fn refinement_does_not_enlarge_the_critical_set() {
    let (coarse_h, fine_h) = (0.02, 0.01);
    for seed in [1003, 1004, 1005] {
        let pts = cloud(20, seed);
        let scene = ClosedSet64::points(pts.clone()).unwrap();
        let scan = |h: f64| {
            let field = point_field(&pts, Norm64::euclidean(2), -0.5, 1.5, h);
            critical_scan(&field, &ScanParams::default()).unwrap().critical_points().copied().collect::<Vec<_>>()
        };
        // the coarse scan only covers d > 3 h_coarse; one more step absorbs the grid offset
        let shared = |p: &&Vector64| scene.distance(p, &Norm64::euclidean(2)) > 4.0 * coarse_h;
        let (coarse, fine) = (scan(coarse_h), scan(fine_h));
        let gap = |p: &Vector64, set: &[Vector64]| set.iter().map(|q| q.distance(p)).fold(f64::INFINITY, f64::min);
        for p in fine.iter().filter(shared) {
            assert!(gap(p, &coarse) <= 2.0 * coarse_h, "seed {seed}: new critical vertex {p:?}");
        }
        // the limit set: exact critical points stay within 2h of the finer scan
        for c in critical_points(&pts).iter().filter(|c| c.value > 4.0 * fine_h) {
            assert!(gap(&c.point, &fine) <= 2.0 * fine_h, "seed {seed}: {:?} lost after refining", c.point);
        }
    }
}
