//! Planar geometry: triangulation, r-convex hulls, boundaries and rasters.

mod boundary;
mod delaunay;
mod hull;
mod raster;
mod region;

pub use boundary::{ArcPolygonBoundary, Element, Ring};
pub use delaunay::{Triangulation, VoronoiEdge, circumcenter};
pub use hull::{ConvexPolygon, convex_hull, convex_hull_indices};
pub use raster::RasterMask;
pub use region::{EPS_GEOM_REL, RConvexRegion, SiteSet, brute_force_contains};
