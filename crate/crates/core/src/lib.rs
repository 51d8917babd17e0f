//! Density level-set estimation with r-convex hulls.

pub mod calibration;
pub mod density;
pub mod error;
pub mod estimator;
pub mod geometry;
pub mod point;
pub mod splitter;
pub mod synthref;

pub(crate) mod serde_inf;

pub use error::{Error, Result};
pub use point::{BBox, Point, PointCloud};
