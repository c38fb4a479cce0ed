//! Numerical laboratory for Finsler surfaces: geodesics, non-symmetric
//! distances, Busemann functions, co-rays and cut loci of Busemann upper
//! level sets.

pub mod busemann;
pub mod cache;
pub mod catalog;
pub mod chart;
pub mod config;
pub mod contour;
pub mod cutlocus;
pub mod distance;
pub mod eikonal;
pub mod error;
pub mod geodesic;
pub mod grid;
pub mod io;
pub mod metric;
pub mod ring;
pub mod session;
pub mod sets;
pub mod structure;
pub mod verify;

pub use chart::{Chart, Point, Vec2};
pub use error::{Error, Result};
pub use geodesic::{Geodesic, Ray};
pub use grid::{FieldKind, Grid, GridSpec, ScalarField};
pub use sets::{ClosedSetSpec, Direction};
pub use metric::{FinslerMetric, MetricSpec};
