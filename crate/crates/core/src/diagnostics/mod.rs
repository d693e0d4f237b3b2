//! Numerical checks of the regularity theory: stay-away from the cut locus,
//! Monge-Ampere bounds, Alexandrov estimates and section scaling near
//! antipodal configurations.
//!
//! Claims of the form `A <~ B` are reported as ratios over grids together
//! with their spread; no implicit constant is asserted.

mod alexandrov;
mod antipodal;
mod sandwich;
mod stay_away;

use std::path::Path;

use serde::Serialize;

pub use alexandrov::{
    alexandrov_constant, alexandrov_upper_check, alexandrov_upper_check_tensor, exp_derivative_sup, random_tensor_section, AlexandrovConfig,
    AlexandrovRecord,
};
pub use antipodal::{
    antipodal_potential, antipodal_section_scaling, north_pole, antipodal_target, circle_section_width, fit_slope, perturbed_target,
    regular_component_separation, right_alexandrov_check, right_alexandrov_sweep, RightAlexandrovConfig,
    RightAlexandrovRecord, RightAlexandrovSweep, ScalingConfig, ScalingRecord, ScalingRow, SeparationConfig,
    SeparationRecord, Sweep,
};
pub use sandwich::{monge_ampere_sandwich, sampling_resolution, SandwichRecord};
pub use stay_away::{stay_away_scan, StayAwayReport};

use crate::error::Result;
use crate::transport::io::csv_err;

/// Writes flat rows as a CSV table with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
