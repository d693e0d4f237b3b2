//! Round spheres, their products, and the tensor cost.
//!
//! Points are embedded vectors of norm `r` in `R^{n+1}`; tangent and
//! cotangent vectors are ambient vectors orthogonal to the base point, so no
//! chart bookkeeping is needed and the cut locus of `x` is the single point
//! `-x` in each factor.

mod chart;
mod product;
mod profile;
mod sphere;
pub mod vec;

pub use chart::QChart;
pub use product::{Covector, Factor, ProductPoint, ProductSpec};
pub use profile::CostProfile;
pub use sphere::{unit_ball_volume, unit_sphere_area, SpherePoint, SphereSpec, CUT_GUARD};
