//! Acceptance suite: one PASS/FAIL line per criterion. Tolerances are the
//! constants below; nothing is tuned at run time.

mod support;

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use distlab::cone::{
    cone_angle, cone_intrinsic_distance, critical_alpha, inequality_batch, obtuse_triple_search, ConeDirection,
    OBTUSE_MARGIN,
};
use distlab::critical::{critical_scan, CriterionChoice, ScanParams};
use distlab::dc::{morse_sard_check, stationary_set, Affine, DCFunction, DcBox, PolyConvex, DEFAULT_CAP};
use distlab::levelset::{extract_level_set, lipschitz_graph_check, radius_sweep, semiconcavity_check, Region};
use distlab::reach::{estimate_reach, ReachParams};
use distlab::report::render;
use distlab::{DistanceField64, Norm64};
use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::cone_mesh::ConeMesh;
use support::fixtures::{cloud, lp_circle_length, p2, point_field, two_points};

const H1: f64 = 0.005;
const CRIT_RADIUS_STEPS: f64 = 3.0;
const CRIT_VALUE_STEPS: f64 = 2.0;
const SWEEP_RADIUS_STEPS: f64 = 5.0;
const RUNTIME_1: Duration = Duration::from_secs(60);
const H2: f64 = 0.01;
const LENGTH_TOL: f64 = 0.01;
const LIPSCHITZ_MAX: f64 = 0.3;
const GRAPH_WINDOW: f64 = 0.2;
const GRAPH_SAMPLES: usize = 50;
const CLOUDS: u64 = 10;
const CLOUD_POINTS: usize = 20;
const CLOUD_H: f64 = 0.01;
const AGREEMENT_MIN: f64 = 0.99;
const HAUSDORFF_HS: [f64; 3] = [0.02, 0.01, 0.005];
const REACH_H: f64 = 0.01;
const REACH_SAMPLES: usize = 1000;
const SEMI_TRIPLES: usize = 100_000;
const SARD_DELTAS: [f64; 3] = [1e-2, 1e-3, 1e-4];
const CONE_PAIRS: usize = 10_000;
const CONE_SEARCH: usize = 100_000;
const ORACLE_TOL: f64 = 0.005;
const RUNTIME_8: Duration = Duration::from_secs(120);
/// Under ℓ⁴ the two-point distance decreases off the origin along the
/// bisector only at rate |y|³/(1+y⁴)^(3/4); vertices where that rate is below
/// twice the hull margin are legitimately Critical at tolerance η.
const LP4_FLAT_RATE_FACTOR: f64 = 2.0;

struct Outcome {
    pass: bool,
    detail: String,
    /// Rendered reports, compared across runs.
    reports: String,
}

fn cloud_seed(k: u64) -> u64 {
    1000 + k
}

fn criterion_1(norm: Norm64, choice: CriterionChoice, crit_steps: f64) -> Outcome {
    let start = Instant::now();
    let field = point_field(&two_points(), norm, -2.0, 2.0, H1);
    let scan = critical_scan(&field, &ScanParams { criterion: choice, ..Default::default() }).expect("scan");
    let far: Vec<_> = scan.critical_points().filter(|p| p.length() > crit_steps * H1 + 1e-12).collect();
    let values_ok = !scan.critical_values.is_empty()
        && scan.critical_values.iter().all(|v| (v - 1.0).abs() <= CRIT_VALUE_STEPS * H1 + 1e-12);
    let sweep = radius_sweep(&field, 0.25, 1.75, 200, Some(&scan)).expect("sweep");
    let stray: Vec<f64> =
        sweep.failing_radii().into_iter().filter(|r| (r - 1.0).abs() > SWEEP_RADIUS_STEPS * H1).collect();
    let elapsed = start.elapsed();
    let pass = far.is_empty() && values_ok && stray.is_empty() && elapsed <= RUNTIME_1;
    Outcome {
        pass,
        detail: format!(
            "{} critical vertices ({} beyond {:.1}h), critical values in [{:.6}, {:.6}], {} failing radii ({} away from 1), {:.1}s",
            scan.critical_count(),
            far.len(),
            crit_steps,
            scan.critical_values.first().copied().unwrap_or(f64::NAN),
            scan.critical_values.last().copied().unwrap_or(f64::NAN),
            sweep.failing_radii().len(),
            stray.len(),
            elapsed.as_secs_f64()
        ),
        reports: render(&scan.to_json()) + &render(&sweep.to_json()),
    }
}

fn criterion_2(norm: Norm64, expected_length: f64, max_lipschitz: Option<f64>) -> Outcome {
    let field = point_field(&[p2(0.0, 0.0)], norm, -1.5, 1.5, H2);
    let mesh = extract_level_set(&field, 1.0).expect("extract");
    let lines = mesh.polylines();
    let closed = lines.len() == 1 && lines[0].first() == lines[0].last();
    let length = mesh.measure();
    let length_ok = (length - expected_length).abs() <= LENGTH_TOL * expected_length;
    let graph = lipschitz_graph_check(&field, &mesh, GRAPH_WINDOW, GRAPH_SAMPLES).expect("graph");
    let lip_ok = max_lipschitz.is_none_or(|m| graph.max_lipschitz() <= m);
    let pass = closed && length_ok && mesh.is_manifold() && graph.passes() && lip_ok;
    Outcome {
        pass,
        detail: format!(
            "{} polyline(s), length {:.6} vs {:.6}, manifold {}, graph {} at {} samples, Lipschitz {:.4}",
            lines.len(),
            length,
            expected_length,
            mesh.is_manifold(),
            graph.passes(),
            graph.samples.len(),
            graph.max_lipschitz()
        ),
        reports: render(&mesh.to_json()) + &render(&serde_json::to_value(&graph).expect("plain")),
    }
}

fn cloud_field(k: u64, h: f64) -> DistanceField64 {
    point_field(&cloud(CLOUD_POINTS, cloud_seed(k)), Norm64::euclidean(2), -0.5, 1.5, h)
}

fn criterion_3() -> Outcome {
    let (mut agree, mut total) = (0usize, 0usize);
    let mut worst: f64 = 1.0;
    let mut reports = String::new();
    for k in 0..CLOUDS {
        let field = cloud_field(k, CLOUD_H);
        let hull = critical_scan(&field, &ScanParams { criterion: CriterionChoice::Hull, ..Default::default() })
            .expect("hull scan");
        let dir = critical_scan(
            &field,
            &ScanParams { criterion: CriterionChoice::Directional, seed: k, ..Default::default() },
        )
        .expect("directional scan");
        let crit: Vec<_> = hull.critical_points().copied().collect();
        let (mut a, mut t) = (0usize, 0usize);
        for (vh, vd) in hull.verdicts.iter().zip(&dir.verdicts) {
            assert_eq!(vh.point, vd.point);
            if crit.iter().any(|c| c.distance(&vh.point) <= 3.0 * CLOUD_H + 1e-12) {
                continue;
            }
            t += 1;
            if vh.is_critical() == vd.is_critical() {
                a += 1;
            }
        }
        worst = worst.min(a as f64 / t as f64);
        agree += a;
        total += t;
        reports += &render(&hull.to_json());
        reports += &render(&dir.to_json());
    }
    Outcome {
        pass: worst >= AGREEMENT_MIN,
        detail: format!(
            "agreement {:.5} overall ({agree}/{total}), worst cloud {:.5}",
            agree as f64 / total as f64,
            worst
        ),
        reports,
    }
}

fn criterion_4() -> Outcome {
    let mut pass = true;
    let mut rows = Vec::new();
    let mut reports = String::new();
    for k in 0..CLOUDS {
        let pm: Vec<f64> = HAUSDORFF_HS
            .iter()
            .map(|&h| {
                let scan = critical_scan(&cloud_field(k, h), &ScanParams::default()).expect("scan");
                reports += &render(&scan.hausdorff.summary_json());
                scan.hausdorff.premeasure
            })
            .collect();
        let decreasing = pm.windows(2).all(|w| w[1] < w[0]);
        pass &= decreasing;
        rows.push(format!("[{:.4} {:.4} {:.4}]", pm[0], pm[1], pm[2]));
    }
    Outcome { pass, detail: format!("premeasures {}", rows.join(" ")), reports }
}

fn criterion_5() -> Outcome {
    let params = ReachParams { samples: REACH_SAMPLES, seed: 5, ..Default::default() };
    let single = point_field(&[p2(0.0, 0.0)], Norm64::euclidean(2), -2.0, 2.0, REACH_H);
    let two = point_field(&two_points(), Norm64::euclidean(2), -2.0, 2.0, REACH_H);
    let a = estimate_reach(&single, 1.0, &params).expect("reach");
    let b = estimate_reach(&two, 0.5, &params).expect("reach");
    let c = estimate_reach(&two, 1.0, &params).expect("reach");
    let checks =
        [(0.9..=1.1).contains(&a.global_reach), (0.45..=0.55).contains(&b.global_reach), c.global_reach <= 0.1];
    Outcome {
        pass: checks.iter().all(|&x| x),
        detail: format!(
            "single point r=1: {:.4} [{}], two points r=0.5: {:.4} [{}], two points r=1: {:.4} [{}]",
            a.global_reach,
            ok(checks[0]),
            b.global_reach,
            ok(checks[1]),
            c.global_reach,
            ok(checks[2])
        ),
        reports: render(&a.to_json()) + &render(&b.to_json()) + &render(&c.to_json()),
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "fails"
    }
}

fn criterion_6(norm: Norm64, c: f64, with_near: bool) -> Outcome {
    let field = point_field(&[p2(0.0, 0.0)], norm, -2.5, 2.5, 0.05);
    let band = Region::Band { d_lo: 1.0, d_hi: 2.0, lo: p2(-2.2, -2.2), hi: p2(2.2, 2.2) };
    let far = semiconcavity_check(&field, &band, c, SEMI_TRIPLES, 6).expect("band");
    let mut pass = far.passes() && far.triples == SEMI_TRIPLES;
    let mut detail = format!("band 1<=d<=2, c={c}: {} (worst gap {:.3e})", pass_word(far.passes()), far.worst_gap);
    let mut reports = render(&serde_json::to_value(&far).expect("plain"));
    if with_near {
        let near = Region::Box { lo: p2(0.01, -0.1), hi: p2(0.2, 0.1) };
        let close = semiconcavity_check(&field, &near, c, SEMI_TRIPLES, 6).expect("near");
        let witnessed = close.violation.as_ref().is_some_and(|v| {
            // recheck the reported triple with the plain Euclidean distance
            let d = |p: &[f64]| (p[0] * p[0] + p[1] * p[1]).sqrt();
            let u = |p: &[f64]| d(p) - c / 2.0 * (p[0] * p[0] + p[1] * p[1]);
            u(&v.m) - (u(&v.a) + u(&v.b)) / 2.0 < -1e-6
        });
        pass &= witnessed;
        detail += &format!(
            "; box at d~0.01: {} with triple {:?}",
            if witnessed { "violation" } else { "no violation" },
            close.violation.as_ref().map(|v| (&v.a, &v.b))
        );
        reports += &render(&serde_json::to_value(&close).expect("plain"));
    }
    Outcome { pass, detail, reports }
}

fn pass_word(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "FAIL"
    }
}

fn criterion_7() -> Outcome {
    let q = |n: i64| BigRational::from_integer(n.into());
    let abs_at =
        |c: i64| PolyConvex::new(vec![Affine::new(vec![q(1)], -q(c)), Affine::new(vec![q(-1)], q(c))]).expect("pieces");
    let f = DCFunction::new(abs_at(0), abs_at(1)).expect("dc");
    let bx = DcBox::new(vec![q(-10)], vec![q(10)]).expect("box");
    let cells = stationary_set(&f, &bx, DEFAULT_CAP).expect("cells");
    let mut values: Vec<BigRational> = cells.iter().map(|c| c.value.clone()).collect();
    values.sort();
    values.dedup();
    let exact = values == vec![q(-1), q(1)];
    let mut scaling = true;
    let mut rows = Vec::new();
    let mut reports = String::new();
    for delta in SARD_DELTAS {
        let (_, est) = morse_sard_check(&f, &bx, 0.5, delta, DEFAULT_CAP).expect("sard");
        let target = 2.0 * delta.sqrt();
        scaling &= (est.premeasure - target).abs() <= 1e-12 * target;
        rows.push(format!("{:.3e}->{:.6e}", delta, est.premeasure));
        reports += &render(&est.summary_json());
    }
    Outcome {
        pass: exact && scaling,
        detail: format!(
            "values {:?}, premeasures {}",
            values.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
            rows.join(" ")
        ),
        reports,
    }
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let ac = critical_alpha();
    let violations = inequality_batch(ac, CONE_PAIRS, 8).expect("admissible pairs").violations;
    let mut reports = String::new();
    let mut search_ok = true;
    let mut rows = Vec::new();
    for (alpha, expect_witness) in [(ac, false), (ac + 0.1, false), (10.0, false), (0.1, true)] {
        let s = obtuse_triple_search(alpha, CONE_SEARCH, 8).expect("search");
        let verified = s.witness.as_ref().is_some_and(|w| {
            [(0, 1), (0, 2), (1, 2)]
                .iter()
                .all(|&(i, j)| cone_angle(&w[i], &w[j]).expect("angle").angle > PI / 2.0 + OBTUSE_MARGIN)
        });
        search_ok &= if expect_witness { verified } else { s.witness.is_none() };
        rows.push(format!(
            "alpha {:.4}: {} (max min angle {:.6})",
            alpha,
            if s.witness.is_some() { "witness" } else { "none" },
            s.max_min_pairwise_angle
        ));
        reports += &render(&s.to_json());
    }
    let (worst, pairs) = cone_oracle_agreement(ac);
    let elapsed = start.elapsed();
    let pass = violations == 0 && search_ok && worst <= ORACLE_TOL && elapsed <= RUNTIME_8;
    Outcome {
        pass,
        detail: format!(
            "{violations} inequality violations in {CONE_PAIRS} pairs; {}; oracle worst relative error {:.5} on {pairs} pairs; {:.1}s",
            rows.join(", "),
            worst,
            elapsed.as_secs_f64()
        ),
        reports,
    }
}

/// Worst relative gap between the closed-form distance and mesh shortest
/// paths, over 10 random sources with 10 random targets each.
fn cone_oracle_agreement(alpha: f64) -> (f64, usize) {
    let mesh = ConeMesh::new(alpha, 2.5, 271, 184, 8);
    assert!(mesh.triangles() >= 100_000 - 1000);
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let ring = |rng: &mut ChaCha8Rng| rng.gen_range((0.4 / mesh.d_rho) as usize..=(2.0 / mesh.d_rho) as usize);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for _ in 0..10 {
        let (i0, j0) = (ring(&mut rng), rng.gen_range(0..mesh.n_theta));
        let dist = mesh.distances_from(i0, j0);
        let (r0, t0) = mesh.coords(i0, j0);
        let a = ConeDirection::new(r0, t0, 0.0, alpha).expect("direction");
        for _ in 0..10 {
            let (i, j) = (ring(&mut rng), rng.gen_range(0..mesh.n_theta));
            let (r, t) = mesh.coords(i, j);
            let b = ConeDirection::new(r, t, 0.0, alpha).expect("direction");
            let exact = cone_intrinsic_distance(&a, &b).expect("distance");
            let graph = dist[mesh.vertex(i, j)];
            if exact > 0.0 {
                worst = worst.max((graph - exact).abs() / exact);
                pairs += 1;
            }
        }
    }
    (worst, pairs)
}

/// Half-width of the bisector band where the exact ℓ⁴ decrease rate stays
/// below `LP4_FLAT_RATE_FACTOR · η`, by bisection on the rate oracle.
fn lp4_flat_zone(eta: f64) -> f64 {
    let rate = |y: f64| y.powi(3) / (1.0 + y.powi(4)).powf(0.75);
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) < LP4_FLAT_RATE_FACTOR * eta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn criterion_9() -> Outcome {
    let lp4 = || Norm64::lp(4.0, 2).expect("lp4");
    let zone_steps = lp4_flat_zone(ScanParams::default().eta) / H1 + CRIT_RADIUS_STEPS;
    let one = criterion_1(lp4(), CriterionChoice::Directional, zone_steps);
    let two = criterion_2(lp4(), lp_circle_length(4.0, 1.0), None);
    let six = criterion_6(lp4(), 4.0, false);
    Outcome {
        pass: one.pass && two.pass && six.pass,
        detail: format!("two points: {} | circle: {} | {}", one.detail, two.detail, six.detail),
        reports: one.reports + &two.reports + &six.reports,
    }
}

fn run_all() -> Vec<Outcome> {
    vec![
        criterion_1(Norm64::euclidean(2), CriterionChoice::Auto, CRIT_RADIUS_STEPS),
        criterion_2(Norm64::euclidean(2), 2.0 * PI, Some(LIPSCHITZ_MAX)),
        criterion_3(),
        criterion_4(),
        criterion_5(),
        criterion_6(Norm64::euclidean(2), 2.0, true),
        criterion_7(),
        criterion_8(),
        criterion_9(),
    ]
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool").install(f)
}

fn main() {
    let single = in_pool(1, run_all);
    let first = in_pool(8, run_all);
    let second = in_pool(8, run_all);

    let mut failed = 0;
    for (k, outcome) in single.iter().enumerate() {
        // runtimes are judged on the single-threaded run
        println!("criterion {}: {} {}", k + 1, if outcome.pass { "PASS" } else { "FAIL" }, outcome.detail);
        failed += usize::from(!outcome.pass);
    }
    let mismatched: Vec<usize> = (0..single.len())
        .filter(|&k| single[k].reports != first[k].reports || first[k].reports != second[k].reports)
        .map(|k| k + 1)
        .collect();
    let bytes: usize = single.iter().map(|o| o.reports.len()).sum();
    let deterministic = mismatched.is_empty();
    println!(
        "criterion 10: {} {} bytes of reports compared over 1 and 8 threads and two 8-thread runs; mismatched criteria {:?}",
        if deterministic { "PASS" } else { "FAIL" },
        bytes,
        mismatched
    );
    failed += usize::from(!deterministic);
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
