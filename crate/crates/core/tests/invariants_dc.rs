//! Piecewise-affine DC calculus.

use distlab::critical::{dc_regularity_probe, ProbeVerdict};
use distlab::dc::{
    dc_sum, morse_sard_check, stationary_set, Affine, CellShape, DCFunction, DcBox, PolyConvex, StationaryCell,
    DEFAULT_CAP,
};
use distlab::Exact;
use num_rational::BigRational;
use proptest::prelude::*;

type Q = BigRational;

/// Pieces as `(gradient, offset)` in quarters.
type Pieces = Vec<(Vec<i64>, i64)>;

fn pieces(dim: usize) -> impl Strategy<Value = Pieces> {
    prop::collection::vec((prop::collection::vec(-1i64..=1, dim), -8i64..=8), 1..4)
}

fn dc_parts(dim: usize) -> impl Strategy<Value = (Pieces, Pieces)> {
    (pieces(dim), pieces(dim))
}

fn part<T: Exact>(p: &Pieces) -> PolyConvex<T> {
    let affine =
        p.iter().map(|(g, c)| Affine::new(g.iter().map(|&v| T::from_ratio(v, 1)).collect(), T::from_ratio(*c, 4)));
    PolyConvex::new(affine.collect()).unwrap()
}

fn build<T: Exact>((plus, minus): &(Pieces, Pieces)) -> DCFunction<T> {
    DCFunction::new(part(plus), part(minus)).unwrap()
}

fn working_box(dim: usize) -> DcBox<Q> {
    DcBox::new(vec![Q::from_ratio(-3, 1); dim], vec![Q::from_ratio(3, 1); dim]).unwrap()
}

/// Ten interior points of a cell: convex combinations weighted towards its
/// interior point.
fn interior_probes(cell: &StationaryCell<Q>) -> Vec<Vec<Q>> {
    let centre = cell.interior_point();
    (1..=10)
        .map(|k| {
            let t = Q::from_ratio(k, 11);
            let corner = match &cell.shape {
                CellShape::Interval(a, b) => vec![if k % 2 == 0 { a.clone() } else { b.clone() }],
                CellShape::Polygon(p) => p[k as usize % p.len()].to_vec(),
            };
            centre.iter().zip(&corner).map(|(c, v)| c.clone() + (v.clone() - c.clone()) * t.clone()).collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sum_evaluates_to_the_sum(
        dim in 1usize..=2,
        f in dc_parts(2),
        g in dc_parts(2),
        probes in prop::collection::vec(prop::collection::vec(-40i64..=40, 2), 8),
    ) {
        let f: DCFunction<Q> = build(&truncate(&f, dim));
        let g: DCFunction<Q> = build(&truncate(&g, dim));
        let sum = dc_sum(&f, &g, DEFAULT_CAP).unwrap();
        for p in &probes {
            let x: Vec<Q> = p[..dim].iter().map(|&v| Q::from_ratio(v, 8)).collect();
            prop_assert_eq!(sum.eval(&x).unwrap(), f.eval(&x).unwrap() + g.eval(&x).unwrap());
        }
    }

    #[test]
    fn stationary_cells_carry_one_value(dim in 1usize..=2, parts in dc_parts(2)) {
        let parts = truncate(&parts, dim);
        let f: DCFunction<Q> = build(&parts);
        for cell in stationary_set(&f, &working_box(dim), DEFAULT_CAP).unwrap() {
            prop_assert_eq!(f.eval(&cell.interior_point()).unwrap(), cell.value.clone());
            for x in interior_probes(&cell) {
                prop_assert_eq!(f.eval(&x).unwrap(), cell.value.clone());
            }
        }
    }

    #[test]
    fn stationary_values_shrink_to_measure_zero(dim in 1usize..=2, parts in dc_parts(2)) {
        let parts = truncate(&parts, dim);
        let f: DCFunction<Q> = build(&parts);
        let s = dim as f64 / 2.0;
        for delta in [1e-2, 1e-3, 1e-4] {
            let (cells, estimate) = morse_sard_check(&f, &working_box(dim), s, delta, DEFAULT_CAP).unwrap();
            let mut values: Vec<Q> = cells.iter().map(|c| c.value.clone()).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            values.dedup();
            prop_assert!(values.len() <= cells.len());
            prop_assert!(estimate.premeasure.is_finite());
            prop_assert!(estimate.premeasure <= values.len() as f64 * delta.powf(s) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn differing_part_gradients_are_regular(
        dim in 1usize..=2,
        parts in dc_parts(2),
        at in prop::collection::vec(-2.5f64..2.5, 2),
    ) {
        let parts = truncate(&parts, dim);
        let f: DCFunction<f64> = build(&parts);
        let x = &at[..dim];
        // interior of a cell: the active pieces win by more than a probe step can change
        let clear = |p: &PolyConvex<f64>| {
            let mut v: Vec<f64> = p.pieces().iter().map(|a| a.eval(x)).collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v.len() == 1 || v[0] - v[1] > 0.05
        };
        prop_assume!(clear(&f.plus) && clear(&f.minus));
        let (gp, gm) = (f.plus.active(x).grad.clone(), f.minus.active(x).grad.clone());
        let v: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| a - b).collect();
        let plus = |y: &[f64]| f.plus.eval(y);
        let minus = |y: &[f64]| f.minus.eval(y);
        let verdict = dc_regularity_probe(&plus, &minus, x, &v);
        if v.iter().any(|c| *c != 0.0) {
            prop_assert_eq!(verdict, ProbeVerdict::Regular);
        } else {
            prop_assert_eq!(verdict, ProbeVerdict::Inconclusive);
        }
    }
}

fn truncate((plus, minus): &(Pieces, Pieces), dim: usize) -> (Pieces, Pieces) {
    let cut = |p: &Pieces| p.iter().map(|(g, c)| (g[..dim].to_vec(), *c)).collect();
    (cut(plus), cut(minus))
}

#[test]
fn sard_premeasure_of_the_two_kink_example_decreases() {
    let f: DCFunction<Q> = build(&(vec![(vec![1], 0), (vec![-1], 0)], vec![(vec![1], -4), (vec![-1], 4)]));
    let premeasures: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&delta| morse_sard_check(&f, &working_box(1), 0.5, delta, DEFAULT_CAP).unwrap().1.premeasure)
        .collect();
    assert!(premeasures.windows(2).all(|w| w[1] < w[0]), "{premeasures:?}");
    assert!((premeasures[2] - 2.0 * 1e-4f64.sqrt()).abs() < 1e-12);
}
