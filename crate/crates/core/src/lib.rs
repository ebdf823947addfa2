//! Distance functions to compact sets in the plane and in space: sampled
//! fields, critical points and values, distance spheres, reach of
//! superlevel sets, piecewise-affine DC calculus and the flat cone in ℝ⁴.
//!
//! Geometry, norms, scenes and fields are generic over the scalar; the
//! analysis layers work in `f64`.

pub mod cone;
pub mod critical;
pub mod dc;
pub mod field;
pub mod geometry;
pub mod levelset;
pub mod reach;
pub mod report;
pub mod scalar;
pub mod scene;

pub use geometry::{GeometryError, Norm, NormSpec, Vector};
pub use scalar::{Exact, Real};

pub type Vector64 = geometry::Vector<f64>;
pub type Norm64 = geometry::Norm<f64>;
pub type ClosedSet64 = scene::ClosedSet<f64>;
pub type GridSpec64 = field::GridSpec<f64>;
pub type DistanceField64 = field::DistanceField<f64>;
pub type DCFunction64 = dc::DCFunction<f64>;
pub type DCFunctionExact = dc::DCFunction<num_rational::BigRational>;
