//! Piecewise-affine DC functions `f = max(plus) − max(minus)` in one and two
//! variables, with exact arithmetic over any [`Exact`] scalar.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::critical::{hausdorff_box_estimate, HausdorffEstimate};
use crate::scalar::Exact;

/// Default cap on pieces, breakpoints and cells.
pub const DEFAULT_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DcError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("only dimensions 1 and 2 are supported (got {0})")]
    UnsupportedDimension(usize),
    #[error("a convex part needs at least one piece")]
    EmptyPieces,
    #[error("{what} count {count} exceeds the cap {cap}")]
    Overflow { what: &'static str, count: usize, cap: usize },
    #[error("non-finite coefficient")]
    NonFinite,
    #[error("outer function of a composition must be one-dimensional")]
    OuterNotUnivariate,
    #[error("empty working box")]
    EmptyBox,
    #[error("parse error: {0}")]
    Parse(String),
}

/// `x ↦ grad · x + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct Affine<T> {
    pub grad: Vec<T>,
    pub offset: T,
}

impl<T: Exact> Affine<T> {
    pub fn new(grad: Vec<T>, offset: T) -> Self {
        Self { grad, offset }
    }

    pub fn constant(dim: usize, c: T) -> Self {
        Self { grad: vec![T::zero(); dim], offset: c }
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.grad.iter().zip(x).fold(self.offset.clone(), |acc, (g, xi)| acc + g.clone() * xi.clone())
    }

    fn add(&self, o: &Self) -> Self {
        Self {
            grad: self.grad.iter().zip(&o.grad).map(|(a, b)| a.clone() + b.clone()).collect(),
            offset: self.offset.clone() + o.offset.clone(),
        }
    }

    fn scale(&self, c: &T) -> Self {
        Self {
            grad: self.grad.iter().map(|g| g.clone() * c.clone()).collect(),
            offset: self.offset.clone() * c.clone(),
        }
    }

    fn lex_cmp(&self, o: &Self) -> Ordering {
        for (a, b) in self.grad.iter().chain([&self.offset]).zip(o.grad.iter().chain([&o.offset])) {
            match a.partial_cmp(b) {
                Some(Ordering::Equal) | None => continue,
                Some(ord) => return ord,
            }
        }
        Ordering::Equal
    }
}

/// Maximum of finitely many affine functions.
#[derive(Clone, Debug, PartialEq)]
pub struct PolyConvex<T> {
    pieces: Vec<Affine<T>>,
}

impl<T: Exact> PolyConvex<T> {
    /// Sorts and deduplicates the pieces.
    pub fn new(mut pieces: Vec<Affine<T>>) -> Result<Self, DcError> {
        let Some(first) = pieces.first() else { return Err(DcError::EmptyPieces) };
        let dim = first.grad.len();
        if let Some(p) = pieces.iter().find(|p| p.grad.len() != dim) {
            return Err(DcError::DimensionMismatch { expected: dim, found: p.grad.len() });
        }
        pieces.sort_by(Affine::lex_cmp);
        pieces.dedup_by(|a, b| a.lex_cmp(b) == Ordering::Equal);
        Ok(Self { pieces })
    }

    pub fn constant(dim: usize, c: T) -> Self {
        Self { pieces: vec![Affine::constant(dim, c)] }
    }

    pub fn pieces(&self) -> &[Affine<T>] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].grad.len()
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.active(x).eval(x)
    }

    /// First piece attaining the maximum at `x`.
    pub fn active(&self, x: &[T]) -> &Affine<T> {
        let mut best = &self.pieces[0];
        let mut val = best.eval(x);
        for p in &self.pieces[1..] {
            let v = p.eval(x);
            if v > val {
                best = p;
                val = v;
            }
        }
        best
    }

    /// `max(a) + max(b) = max over pairs a_i + b_j`.
    pub fn max_sum(&self, other: &Self, cap: usize) -> Result<Self, DcError> {
        let count = self.pieces.len() * other.pieces.len();
        if count > cap {
            return Err(DcError::Overflow { what: "piece", count, cap });
        }
        Self::new(self.pieces.iter().flat_map(|a| other.pieces.iter().map(move |b| a.add(b))).collect())
    }

    /// Pointwise maximum with `other`.
    pub fn max_with(&self, other: &Self, cap: usize) -> Result<Self, DcError> {
        let count = self.pieces.len() + other.pieces.len();
        if count > cap {
            return Err(DcError::Overflow { what: "piece", count, cap });
        }
        Self::new(self.pieces.iter().chain(&other.pieces).cloned().collect())
    }

    /// Multiplication by `c ≥ 0`.
    fn scale(&self, c: &T) -> Self {
        Self { pieces: self.pieces.iter().map(|p| p.scale(c)).collect() }
    }

    fn shift(&self, c: &T) -> Self {
        Self { pieces: self.pieces.iter().map(|p| Affine::new(p.grad.clone(), p.offset.clone() + c.clone())).collect() }
    }
}

/// `plus − minus`.
#[derive(Clone, Debug, PartialEq)]
pub struct DCFunction<T> {
    pub plus: PolyConvex<T>,
    pub minus: PolyConvex<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DcFile {
    dim: usize,
    plus: Vec<Vec<f64>>,
    minus: Vec<Vec<f64>>,
}

impl<T: Exact> DCFunction<T> {
    pub fn new(plus: PolyConvex<T>, minus: PolyConvex<T>) -> Result<Self, DcError> {
        let dim = plus.dim();
        if !(1..=2).contains(&dim) {
            return Err(DcError::UnsupportedDimension(dim));
        }
        if minus.dim() != dim {
            return Err(DcError::DimensionMismatch { expected: dim, found: minus.dim() });
        }
        Ok(Self { plus, minus })
    }

    /// Convex function (minus part zero).
    pub fn convex(plus: PolyConvex<T>) -> Result<Self, DcError> {
        let dim = plus.dim();
        Self::new(plus, PolyConvex::constant(dim, T::zero()))
    }

    pub fn affine(a: Affine<T>) -> Result<Self, DcError> {
        Self::convex(PolyConvex::new(vec![a])?)
    }

    pub fn dim(&self) -> usize {
        self.plus.dim()
    }

    pub fn eval(&self, x: &[T]) -> Result<T, DcError> {
        if x.len() != self.dim() {
            return Err(DcError::DimensionMismatch { expected: self.dim(), found: x.len() });
        }
        Ok(self.plus.eval(x) - self.minus.eval(x))
    }

    /// Gradient on the cell containing `x` (the one-sided gradient at
    /// breakpoints): active plus gradient minus active minus gradient.
    pub fn cell_gradient(&self, x: &[T]) -> Vec<T> {
        let (p, m) = (self.plus.active(x), self.minus.active(x));
        p.grad.iter().zip(&m.grad).map(|(a, b)| a.clone() - b.clone()).collect()
    }

    pub fn negate(&self) -> Self {
        Self { plus: self.minus.clone(), minus: self.plus.clone() }
    }

    /// Multiplication by any scalar.
    pub fn scale(&self, c: &T) -> Self {
        if c.is_negative() {
            self.negate().scale(&-c.clone())
        } else {
            Self { plus: self.plus.scale(c), minus: self.minus.scale(c) }
        }
    }

    pub fn add_constant(&self, c: &T) -> Self {
        Self { plus: self.plus.shift(c), minus: self.minus.clone() }
    }

    pub fn from_json(text: &str) -> Result<Self, DcError> {
        let file: DcFile = serde_json::from_str(text).map_err(|e| DcError::Parse(e.to_string()))?;
        if !(1..=2).contains(&file.dim) {
            return Err(DcError::UnsupportedDimension(file.dim));
        }
        let part = |rows: &[Vec<f64>]| -> Result<PolyConvex<T>, DcError> {
            let pieces = rows
                .iter()
                .map(|row| {
                    if row.len() != file.dim + 1 {
                        return Err(DcError::DimensionMismatch { expected: file.dim + 1, found: row.len() });
                    }
                    let mut c: Vec<T> = row
                        .iter()
                        .map(|&v| T::from_f64_exact(v).ok_or(DcError::NonFinite))
                        .collect::<Result<_, _>>()?;
                    let offset = c.pop().expect("nonempty row");
                    Ok(Affine::new(c, offset))
                })
                .collect::<Result<Vec<_>, _>>()?;
            PolyConvex::new(pieces)
        };
        Self::new(part(&file.plus)?, part(&file.minus)?)
    }

    pub fn to_json(&self) -> String {
        let rows = |p: &PolyConvex<T>| -> Vec<Vec<f64>> {
            p.pieces.iter().map(|a| a.grad.iter().chain([&a.offset]).map(Exact::approx).collect()).collect()
        };
        serde_json::to_string(&DcFile { dim: self.dim(), plus: rows(&self.plus), minus: rows(&self.minus) })
            .expect("plain data")
    }
}

/// Sum with pairwise piece sums in both parts.
pub fn dc_sum<T: Exact>(f: &DCFunction<T>, g: &DCFunction<T>, cap: usize) -> Result<DCFunction<T>, DcError> {
    if f.dim() != g.dim() {
        return Err(DcError::DimensionMismatch { expected: f.dim(), found: g.dim() });
    }
    DCFunction::new(f.plus.max_sum(&g.plus, cap)?, f.minus.max_sum(&g.minus, cap)?)
}

/// Breakpoints of a univariate piecewise-affine function together with the
/// slope left of all of them and the slope jump at each.
struct Univariate<T> {
    alpha: T,
    beta: T,
    kinks: Vec<(T, T)>,
}

/// Sorted candidate breakpoints: pairwise crossings of pieces, clipped to
/// `(lo, hi)` when given.
fn crossings<T: Exact>(parts: &[&PolyConvex<T>], bounds: Option<(&T, &T)>, cap: usize) -> Result<Vec<T>, DcError> {
    let mut out: Vec<T> = Vec::new();
    for part in parts {
        let p = part.pieces();
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                let dg = p[i].grad[0].clone() - p[j].grad[0].clone();
                if dg.is_zero() {
                    continue;
                }
                let t = (p[j].offset.clone() - p[i].offset.clone()) / dg;
                if bounds.is_none_or(|(lo, hi)| t > *lo && t < *hi) {
                    out.push(t);
                    if out.len() > cap {
                        return Err(DcError::Overflow { what: "breakpoint", count: out.len(), cap });
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    out.dedup();
    Ok(out)
}

fn univariate<T: Exact>(g: &DCFunction<T>, cap: usize) -> Result<Univariate<T>, DcError> {
    let points = crossings(&[&g.plus, &g.minus], None, cap)?;
    let one = T::one();
    let slope = |t: T| g.cell_gradient(&[t])[0].clone();
    let Some(first) = points.first() else {
        let beta = slope(T::zero());
        return Ok(Univariate { alpha: g.eval(&[T::zero()])?, beta, kinks: Vec::new() });
    };
    let beta = slope(first.clone() - one.clone());
    let alpha = g.eval(std::slice::from_ref(first))? - beta.clone() * first.clone();
    let mut kinks = Vec::new();
    let mut left = beta.clone();
    for (k, b) in points.iter().enumerate() {
        let probe = match points.get(k + 1) {
            Some(next) => (b.clone() + next.clone()) / (one.clone() + one.clone()),
            None => b.clone() + one.clone(),
        };
        let right = slope(probe);
        let jump = right.clone() - left;
        if !jump.is_zero() {
            kinks.push((b.clone(), jump));
        }
        left = right;
    }
    Ok(Univariate { alpha, beta, kinks })
}

/// Exact composition `outer ∘ inner` for a univariate outer function.
///
/// The outer function is written as `α + β t + Σ s_i max(t − b_i, 0)` from
/// its breakpoints `b_i` and slope jumps `s_i`. With `inner = P − M`, each
/// hinge is `max(P − b_i, M) − M`, again a difference of polyhedral convex
/// functions, so the result is assembled from sums, scalings and maxima of
/// the parts without approximation.
pub fn dc_compose_pa<T: Exact>(
    outer: &DCFunction<T>,
    inner: &DCFunction<T>,
    cap: usize,
) -> Result<DCFunction<T>, DcError> {
    if outer.dim() != 1 {
        return Err(DcError::OuterNotUnivariate);
    }
    let u = univariate(outer, cap)?;
    let dim = inner.dim();
    let constant = DCFunction::convex(PolyConvex::constant(dim, u.alpha))?;
    let mut acc = dc_sum(&constant, &inner.scale(&u.beta), cap)?;
    for (b, s) in &u.kinks {
        let hinge = DCFunction::new(inner.plus.shift(&-b.clone()).max_with(&inner.minus, cap)?, inner.minus.clone())?;
        acc = dc_sum(&acc, &hinge.scale(s), cap)?;
    }
    Ok(acc)
}

/// Axis-aligned working box.
#[derive(Clone, Debug, PartialEq)]
pub struct DcBox<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Exact> DcBox<T> {
    pub fn new(lo: Vec<T>, hi: Vec<T>) -> Result<Self, DcError> {
        if lo.len() != hi.len() {
            return Err(DcError::DimensionMismatch { expected: lo.len(), found: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(a, b)| a >= b) {
            return Err(DcError::EmptyBox);
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CellShape<T> {
    /// Open interval.
    Interval(T, T),
    /// Convex polygon, counter-clockwise.
    Polygon(Vec<[T; 2]>),
}

/// A cell of the affine arrangement of `f` on which its gradient vanishes;
/// `value` is the constant value of `f` there.
#[derive(Clone, Debug, PartialEq)]
pub struct StationaryCell<T> {
    pub shape: CellShape<T>,
    pub value: T,
}

impl<T: Exact> StationaryCell<T> {
    /// Interior point (interval midpoint, polygon vertex average).
    pub fn interior_point(&self) -> Vec<T> {
        match &self.shape {
            CellShape::Interval(a, b) => vec![(a.clone() + b.clone()) / (T::one() + T::one())],
            CellShape::Polygon(p) => centroid(p).to_vec(),
        }
    }
}

fn centroid<T: Exact>(p: &[[T; 2]]) -> [T; 2] {
    let n = T::from_ratio(p.len() as i64, 1);
    let sx = p.iter().fold(T::zero(), |a, v| a + v[0].clone());
    let sy = p.iter().fold(T::zero(), |a, v| a + v[1].clone());
    [sx / n.clone(), sy / n]
}

/// Stationary cells of `f` inside `bx`.
///
/// In one variable the cells are the intervals between consecutive
/// breakpoints; adjacent stationary intervals are merged (`f` is constant
/// across their common endpoint). In two variables they are the nonempty
/// intersections of a plus-activity region with a minus-activity region.
pub fn stationary_set<T: Exact>(
    f: &DCFunction<T>,
    bx: &DcBox<T>,
    cap: usize,
) -> Result<Vec<StationaryCell<T>>, DcError> {
    if bx.dim() != f.dim() {
        return Err(DcError::DimensionMismatch { expected: f.dim(), found: bx.dim() });
    }
    if f.dim() == 1 {
        stationary_1d(f, bx, cap)
    } else {
        stationary_2d(f, bx, cap)
    }
}

fn stationary_1d<T: Exact>(f: &DCFunction<T>, bx: &DcBox<T>, cap: usize) -> Result<Vec<StationaryCell<T>>, DcError> {
    let (lo, hi) = (&bx.lo[0], &bx.hi[0]);
    let mut points = vec![lo.clone()];
    points.extend(crossings(&[&f.plus, &f.minus], Some((lo, hi)), cap)?);
    points.push(hi.clone());
    let two = T::one() + T::one();
    let mut out: Vec<StationaryCell<T>> = Vec::new();
    let mut open: Option<(T, T)> = None;
    for w in points.windows(2) {
        let mid = (w[0].clone() + w[1].clone()) / two.clone();
        if f.cell_gradient(&[mid])[0].is_zero() {
            open = Some(match open {
                Some((a, _)) => (a, w[1].clone()),
                None => (w[0].clone(), w[1].clone()),
            });
        } else if let Some((a, b)) = open.take() {
            out.push(interval_cell(f, a, b)?);
        }
    }
    if let Some((a, b)) = open {
        out.push(interval_cell(f, a, b)?);
    }
    Ok(out)
}

fn interval_cell<T: Exact>(f: &DCFunction<T>, a: T, b: T) -> Result<StationaryCell<T>, DcError> {
    let mid = (a.clone() + b.clone()) / (T::one() + T::one());
    Ok(StationaryCell { value: f.eval(&[mid])?, shape: CellShape::Interval(a, b) })
}

/// Keeps the part of the convex polygon where `g · x + c ≥ 0`.
fn clip<T: Exact>(poly: &[[T; 2]], g: &[T], c: &T) -> Vec<[T; 2]> {
    let side = |p: &[T; 2]| g[0].clone() * p[0].clone() + g[1].clone() * p[1].clone() + c.clone();
    let mut out = Vec::new();
    for k in 0..poly.len() {
        let (a, b) = (&poly[k], &poly[(k + 1) % poly.len()]);
        let (sa, sb) = (side(a), side(b));
        if !sa.is_negative() {
            out.push(a.clone());
        }
        if sa.is_negative() != sb.is_negative() && !sa.is_zero() && !sb.is_zero() {
            let t = sa.clone() / (sa - sb);
            out.push([
                a[0].clone() + t.clone() * (b[0].clone() - a[0].clone()),
                a[1].clone() + t * (b[1].clone() - a[1].clone()),
            ]);
        }
    }
    out.dedup();
    if out.len() > 1 && out.first() == out.last() {
        out.pop();
    }
    out
}

fn twice_area<T: Exact>(p: &[[T; 2]]) -> T {
    (0..p.len()).fold(T::zero(), |acc, k| {
        let (a, b) = (&p[k], &p[(k + 1) % p.len()]);
        acc + a[0].clone() * b[1].clone() - b[0].clone() * a[1].clone()
    })
}

/// Activity region of piece `i` inside `poly`.
fn activity_region<T: Exact>(part: &PolyConvex<T>, i: usize, poly: &[[T; 2]]) -> Vec<[T; 2]> {
    let p = part.pieces();
    let mut region = poly.to_vec();
    for (j, q) in p.iter().enumerate() {
        if j == i || region.len() < 3 {
            continue;
        }
        let g: Vec<T> = p[i].grad.iter().zip(&q.grad).map(|(a, b)| a.clone() - b.clone()).collect();
        region = clip(&region, &g, &(p[i].offset.clone() - q.offset.clone()));
    }
    region
}

fn stationary_2d<T: Exact>(f: &DCFunction<T>, bx: &DcBox<T>, cap: usize) -> Result<Vec<StationaryCell<T>>, DcError> {
    let count = f.plus.pieces().len() * f.minus.pieces().len();
    if count > cap {
        return Err(DcError::Overflow { what: "cell", count, cap });
    }
    let (lo, hi) = (&bx.lo, &bx.hi);
    let square = vec![
        [lo[0].clone(), lo[1].clone()],
        [hi[0].clone(), lo[1].clone()],
        [hi[0].clone(), hi[1].clone()],
        [lo[0].clone(), hi[1].clone()],
    ];
    let mut out = Vec::new();
    for (i, pp) in f.plus.pieces().iter().enumerate() {
        let region = activity_region(&f.plus, i, &square);
        if region.len() < 3 || !twice_area(&region).is_positive() {
            continue;
        }
        for (j, mp) in f.minus.pieces().iter().enumerate() {
            if pp.grad != mp.grad {
                continue;
            }
            let cell = activity_region(&f.minus, j, &region);
            if cell.len() < 3 || !twice_area(&cell).is_positive() {
                continue;
            }
            let value = f.eval(&centroid(&cell))?;
            out.push(StationaryCell { shape: CellShape::Polygon(cell), value });
        }
    }
    Ok(out)
}

/// Box-counting premeasure, at scale `delta` and exponent `s`, of the
/// values `f` takes on its stationary cells.
pub fn morse_sard_check<T: Exact>(
    f: &DCFunction<T>,
    bx: &DcBox<T>,
    s: f64,
    delta: f64,
    cap: usize,
) -> Result<(Vec<StationaryCell<T>>, HausdorffEstimate), DcError> {
    let cells = stationary_set(f, bx, cap)?;
    let values: Vec<f64> = cells.iter().map(|c| c.value.approx()).collect();
    let estimate = hausdorff_box_estimate(&values, s, delta);
    Ok((cells, estimate))
}
