//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

pub mod cone_mesh;
pub mod fixtures;
pub mod voronoi;
