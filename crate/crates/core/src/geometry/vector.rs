use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub, SubAssign};

use crate::scalar::Real;

use super::GeometryError;

/// A point or direction in the plane or in space.
///
/// Storage is a fixed `[T; 3]`; for planar vectors the third slot is zero and
/// ignored by every operation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vector<T> {
    c: [T; 3],
    dim: usize,
}

impl<T: Real> Vector<T> {
    pub fn new2(x: T, y: T) -> Self {
        Self { c: [x, y, T::zero()], dim: 2 }
    }

    pub fn new3(x: T, y: T, z: T) -> Self {
        Self { c: [x, y, z], dim: 3 }
    }

    pub fn zero(dim: usize) -> Self {
        debug_assert!(dim == 2 || dim == 3);
        Self { c: [T::zero(); 3], dim }
    }

    /// Unit coordinate vector along `axis`.
    pub fn axis(dim: usize, axis: usize) -> Self {
        let mut v = Self::zero(dim);
        v.c[axis] = T::one();
        v
    }

    pub fn from_slice(coords: &[T]) -> Result<Self, GeometryError> {
        match coords.len() {
            2 => Ok(Self::new2(coords[0], coords[1])),
            3 => Ok(Self::new3(coords[0], coords[1], coords[2])),
            n => Err(GeometryError::UnsupportedDimension(n)),
        }
    }

    /// Like [`Vector::from_slice`] but also rejects non-finite entries.
    pub fn from_finite_slice(coords: &[T]) -> Result<Self, GeometryError> {
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        Self::from_slice(coords)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn coords(&self) -> &[T] {
        &self.c[..self.dim]
    }

    #[inline]
    pub fn x(&self) -> T {
        self.c[0]
    }

    #[inline]
    pub fn y(&self) -> T {
        self.c[1]
    }

    #[inline]
    pub fn z(&self) -> T {
        self.c[2]
    }

    pub fn with(mut self, axis: usize, value: T) -> Self {
        self.c[axis] = value;
        self
    }

    #[inline]
    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.dim, other.dim);
        self.c[0] * other.c[0] + self.c[1] * other.c[1] + self.c[2] * other.c[2]
    }

    #[inline]
    pub fn norm_squared(&self) -> T {
        self.dot(self)
    }

    /// Euclidean length.
    #[inline]
    pub fn length(&self) -> T {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(&self, other: &Self) -> T {
        (*self - *other).length()
    }

    /// Euclidean normalization; `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let len = self.length();
        (len > T::zero() && len.is_finite()).then(|| *self * len.recip())
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|x| x.is_finite())
    }

    pub fn cross(&self, other: &Self) -> Self {
        let [a0, a1, a2] = self.c;
        let [b0, b1, b2] = other.c;
        Self::new3(a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0)
    }

    pub fn lerp(&self, other: &Self, t: T) -> Self {
        *self + (*other - *self) * t
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            out.c[i] = f(self.c[i]);
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.coords().iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.coords().iter().map(|x| x.as_f64()).collect()
    }

    pub fn cast<U: Real>(&self) -> Vector<U> {
        Vector {
            c: [U::lit(self.c[0].as_f64()), U::lit(self.c[1].as_f64()), U::lit(self.c[2].as_f64())],
            dim: self.dim,
        }
    }
}

impl<T: Real> Index<usize> for Vector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.coords()[i]
    }
}

impl<T: Real> Add for Vector<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        Self { c: [self.c[0] + rhs.c[0], self.c[1] + rhs.c[1], self.c[2] + rhs.c[2]], dim: self.dim }
    }
}

impl<T: Real> Sub for Vector<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        Self { c: [self.c[0] - rhs.c[0], self.c[1] - rhs.c[1], self.c[2] - rhs.c[2]], dim: self.dim }
    }
}

impl<T: Real> AddAssign for Vector<T> {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<T: Real> SubAssign for Vector<T> {
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<T: Real> Mul<T> for Vector<T> {
    type Output = Self;
    #[inline]
    fn mul(self, s: T) -> Self {
        Self { c: [self.c[0] * s, self.c[1] * s, self.c[2] * s], dim: self.dim }
    }
}

impl<T: Real> Neg for Vector<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self { c: [-self.c[0], -self.c[1], -self.c[2]], dim: self.dim }
    }
}
