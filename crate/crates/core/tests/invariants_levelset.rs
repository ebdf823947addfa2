//! Distance spheres and reach.

mod support;

use distlab::critical::{critical_scan, hull_criterion, ScanParams};
use distlab::levelset::{extract_level_set, lipschitz_graph_check, radius_sweep};
use distlab::reach::{estimate_reach, ReachParams};
use distlab::scene::NearestSet;
use distlab::{DistanceField64, Norm64, Vector64};
use proptest::prelude::*;
use support::fixtures::{cloud, point_field, two_points};

const H: f64 = 0.01;

fn cloud_field(seed: u64, h: f64) -> DistanceField64 {
    point_field(&cloud(12, seed), Norm64::euclidean(2), -0.5, 1.5, h)
}

#[test]
fn manifold_verdicts_follow_critical_values() {
    for seed in [21, 22, 23] {
        let field = cloud_field(seed, H);
        let scan = critical_scan(&field, &ScanParams::default()).unwrap();
        let sweep = radius_sweep(&field, 0.05, 0.45, 81, Some(&scan)).unwrap();
        for e in &sweep.entries {
            let gap = e.critical_value_gap.unwrap_or(f64::INFINITY);
            if gap > 5.0 * H {
                assert!(e.manifold, "seed {seed}: r = {} is {gap} from every critical value", e.r);
            }
            if !e.manifold {
                assert!(gap <= 5.0 * H, "seed {seed}: non-manifold r = {} is {gap} from every critical value", e.r);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn mesh_vertices_lie_on_the_level(seed in 30u64..40, r in 0.03f64..0.5) {
        let field = cloud_field(seed, 0.02);
        let mesh = extract_level_set(&field, r).unwrap();
        for v in &mesh.vertices {
            prop_assert!((field.interpolate(v).unwrap() - mesh.r).abs() <= 1e-9);
        }
    }
}

#[test]
fn graph_check_passes_where_the_hull_margin_is_large() {
    let eta = ScanParams::default().eta;
    for (seed, r) in [(24, 0.12), (25, 0.2), (26, 0.3)] {
        let points = cloud(12, seed);
        let field = cloud_field(seed, H);
        let mesh = extract_level_set(&field, r).unwrap();
        let window = r / 5.0;
        // seen from a point of the ball, a witness direction turns by at most this
        let turn = window / (r - window);
        let report = lipschitz_graph_check(&field, &mesh, window, 200).unwrap();
        let mut checked = 0;
        for sample in &report.samples {
            let x = Vector64::from_slice(&sample.point).unwrap();
            // every point of the window ball has its witnesses in this set
            let directions: Vec<Vector64> = points
                .iter()
                .filter(|p| p.distance(&x) <= r + 2.0 * window)
                .map(|p| (*p - x).normalized().unwrap())
                .collect();
            let near = NearestSet { query: x, distance: r, witnesses: Vec::new(), directions, tolerance: 2.0 * window };
            let verdict = hull_criterion(&near, eta).unwrap();
            if !verdict.is_critical() && verdict.margin >= 2.0 * eta + turn {
                assert!(sample.single_valued, "seed {seed}, r = {r}: graph check fails at regular {x:?}");
                checked += 1;
            }
        }
        assert!(2 * checked >= report.samples.len(), "seed {seed}: only {checked} regular samples");
    }
}

#[test]
fn refining_never_adds_failing_radii() {
    for seed in [27, 28] {
        let counts: Vec<usize> = [0.02, 0.01, 0.005]
            .iter()
            .map(|&h| radius_sweep(&cloud_field(seed, h), 0.05, 0.45, 41, None).unwrap().failing_radii().len())
            .collect();
        for w in counts.windows(2) {
            assert!(w[1] <= w[0] + 1, "seed {seed}: failing radii {counts:?}");
        }
    }
}

#[test]
fn regular_radii_have_positive_reach() {
    let h = 0.02;
    let field = point_field(&two_points(), Norm64::euclidean(2), -3.0, 3.0, h);
    let params = ReachParams { samples: 200, seed: 3, ..Default::default() };
    for r in [0.5, 0.8, 1.2, 1.5] {
        let reach = estimate_reach(&field, r, &params).unwrap().global_reach;
        assert!(reach >= h, "r = {r}: reach {reach}");
    }
}
