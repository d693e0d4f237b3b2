//! Euclidean convex bodies: hulls, John ellipsoids, slice inequalities.

mod body;
mod hull;
mod john;
mod min_norm;
mod slices;

pub use body::{AffineMap, PointCloudBody};
pub use hull::{hull_volume, hull_volume_mc, ConvexHull, Facet, HullVolume, VolumeMethod, EXACT_MAX_DIM};
pub use john::{john_ellipsoid, john_ellipsoid_with, JohnConfig, JohnEllipsoid};
pub use min_norm::{hull_distance, hull_separates, min_norm_point};
pub use slices::{multi_slice_residual, projection, slice_inequality_residual, slice_points, slice_volume, MultiSlice, SlabSet};
