//! Exact nearest-neighbour search and signed distance fields.

mod kdtree;
mod sdf;

pub use kdtree::{brute_force_nearest, PointIndex};
pub use sdf::{read_grid, write_grid, Aabb, BoxPrimitive, GridSdf, SdfField};
