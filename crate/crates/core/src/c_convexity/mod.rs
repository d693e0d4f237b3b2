//! c-convex potentials and the objects built from them: c-transforms,
//! c-subdifferentials, contact sets, c-sections and the convexifying chart.
//!
//! Semi-discrete potentials are finite maxima of cost supports, so their
//! c-convexity is structural. [`TensorPotential`] adds smooth c-convex test
//! potentials whose optimal maps are diffeomorphisms with known Jacobians.

mod chart;
mod potential;
mod section;
mod subdiff;
mod transform;

pub use chart::{midpoint_convexity_gap, to_q_chart, transformed_potential};
pub use potential::{CConvex, DiscretePotential, FactorPotential, Support, TensorPotential};
pub use section::{
    random_section, section_extents, section_sample, section_sample_local, SectionMethod, SectionSample, SectionSpec,
    MAX_STORED_HITS,
};
pub use subdiff::{
    c_subdifferential, hull_sample, localized_image_membership, slice_lemma_check, subdifferential_defect, touching_point,
    GeodesicBall, Region, Subdifferential, HULL_SAMPLES,
};
pub use transform::{ascend, c_transform, contact_set_sample, duality_defect, maximize, Maximum, TransformConfig};
