//! Experiment configuration read from a single TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::geometry::{CostProfile, Factor, ProductSpec};
use crate::transport::DensitySpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorConfig {
    pub dim: usize,
    #[serde(default = "one")]
    pub radius: f64,
}

fn one() -> f64 {
    1.0
}

/// Source or target density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    Uniform,
    /// Same amplitude on every factor along the first ambient axis.
    AxisTilt {
        amplitude: f64,
        #[serde(default)]
        flip: bool,
    },
    Tilt {
        amplitudes: Vec<f64>,
        directions: Vec<Vec<f64>>,
    },
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig::Uniform
    }
}

impl DensityConfig {
    pub fn build(&self, spec: &ProductSpec) -> Result<DensitySpec> {
        let d = match self {
            DensityConfig::Uniform => DensitySpec::Uniform,
            DensityConfig::AxisTilt { amplitude, flip } => DensitySpec::axis_tilt(spec, *amplitude, *flip),
            DensityConfig::Tilt { amplitudes, directions } => DensitySpec::Tilt {
                amplitudes: amplitudes.clone(),
                directions: directions.clone(),
            },
        };
        d.validate(spec)?;
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub atoms: usize,
    pub tolerance: f64,
    pub budgets: Vec<usize>,
    pub max_iter: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            atoms: 200,
            tolerance: 1e-3,
            budgets: vec![10_000, 30_000, 100_000],
            max_iter: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConditionsSection {
    pub samples: usize,
    pub cross_samples: usize,
    pub slope_samples: usize,
    pub rounds: usize,
}

impl Default for ConditionsSection {
    fn default() -> Self {
        Self {
            samples: 10_000,
            cross_samples: 1_000,
            slope_samples: 1_000,
            rounds: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    StayAway,
    Sandwich,
    Alexandrov,
    Scaling,
    RightAlexandrov,
    Separation,
}

impl DiagnosticKind {
    pub fn name(&self) -> &'static str {
        match self {
            DiagnosticKind::StayAway => "stay_away",
            DiagnosticKind::Sandwich => "sandwich",
            DiagnosticKind::Alexandrov => "alexandrov",
            DiagnosticKind::Scaling => "scaling",
            DiagnosticKind::RightAlexandrov => "right_alexandrov",
            DiagnosticKind::Separation => "separation",
        }
    }

    /// Whether the diagnostic needs a solved transport problem.
    pub fn needs_solution(&self) -> bool {
        matches!(self, DiagnosticKind::StayAway | DiagnosticKind::Sandwich)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StayAwaySection {
    pub samples: usize,
    /// Pass threshold on the minimum, relative to `min_i pi r_i`.
    pub threshold: f64,
}

impl Default for StayAwaySection {
    fn default() -> Self {
        Self {
            samples: 10_000,
            threshold: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SandwichSection {
    pub probes: usize,
    /// Probe radius in units of the atom spacing.
    pub radius: f64,
    pub samples: usize,
}

impl Default for SandwichSection {
    fn default() -> Self {
        Self {
            probes: 8,
            radius: 3.5,
            samples: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlexandrovSection {
    pub sections: usize,
    pub heights: Vec<f64>,
    pub samples: usize,
    /// Range of interpolation scales of the random test potentials.
    pub scales: (f64, f64),
}

impl Default for AlexandrovSection {
    fn default() -> Self {
        Self {
            sections: 50,
            heights: vec![1e-3, 3e-3, 1e-2, 3e-2, 1e-1],
            samples: 20_000,
            scales: (0.1, 0.6),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    pub eps: Vec<f64>,
    pub heights: Vec<f64>,
    pub sweep_eps: f64,
    pub sweep_height: f64,
    pub samples: usize,
}

impl Default for ScalingSection {
    fn default() -> Self {
        Self {
            eps: vec![0.05, 0.1, 0.2],
            heights: vec![1e-4, 1e-3, 1e-2],
            sweep_eps: 0.1,
            sweep_height: 1e-3,
            samples: 200_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RightAlexandrovSection {
    /// Leading factors whose support atom is antipodal to the evaluation
    /// point; 0 means all factors.
    pub antipodal: usize,
    /// Interpolation scale of the remaining regular factors.
    pub regular_scale: f64,
    pub eps: Vec<f64>,
    pub deltas: Vec<f64>,
    pub heights: Vec<f64>,
    pub samples: usize,
    /// Largest admissible `max / min` ratio over the grid.
    pub max_spread: f64,
}

impl Default for RightAlexandrovSection {
    fn default() -> Self {
        Self {
            antipodal: 0,
            regular_scale: 0.0,
            eps: vec![0.05, 0.1, 0.2],
            deltas: vec![0.1, 0.2],
            heights: vec![1e-4, 1e-3, 1e-2],
            samples: 1_000_000,
            max_spread: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeparationSection {
    pub eps: f64,
    pub delta: f64,
    pub height: f64,
    pub samples: usize,
    pub margin: f64,
}

impl Default for SeparationSection {
    fn default() -> Self {
        Self {
            eps: 0.1,
            delta: 0.1,
            height: 1e-3,
            samples: 100_000,
            margin: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsSection {
    pub select: Vec<DiagnosticKind>,
    pub stay_away: StayAwaySection,
    pub sandwich: SandwichSection,
    pub alexandrov: AlexandrovSection,
    pub scaling: ScalingSection,
    pub right_alexandrov: RightAlexandrovSection,
    pub separation: SeparationSection,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            select: Vec::new(),
            stay_away: StayAwaySection::default(),
            sandwich: SandwichSection::default(),
            alexandrov: AlexandrovSection::default(),
            scaling: ScalingSection::default(),
            right_alexandrov: RightAlexandrovSection::default(),
            separation: SeparationSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub factors: Vec<FactorConfig>,
    #[serde(default)]
    pub cost: CostProfile,
    #[serde(default)]
    pub source: DensityConfig,
    #[serde(default)]
    pub target: DensityConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub conditions: ConditionsSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub seed: u64,
    /// Run location, not part of the experiment; left out of reports.
    #[serde(default = "default_output", skip_serializing)]
    pub output: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub exec: ExecMode,
    /// Run diagnostics even when the cost-condition stage fails.
    #[serde(default)]
    pub override_conditions: bool,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn spec(&self) -> Result<ProductSpec> {
        ProductSpec::new(self.factors.iter().map(|f| Factor::new(f.dim, f.radius, self.cost)).collect())
    }

    /// Schema checks that need no computation.
    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::Config("at least one factor is required".into()));
        }
        let spec = self.spec().map_err(|e| Error::Config(e.to_string()))?;
        self.source.build(&spec).map_err(|e| Error::Config(format!("source: {e}")))?;
        self.target.build(&spec).map_err(|e| Error::Config(format!("target: {e}")))?;
        if self.solver.atoms == 0 {
            return Err(Error::Config("solver.atoms must be positive".into()));
        }
        let ra = &self.diagnostics.right_alexandrov;
        if ra.antipodal > self.factors.len() {
            return Err(Error::Config(format!(
                "diagnostics.right_alexandrov.antipodal = {} exceeds the {} factors",
                ra.antipodal,
                self.factors.len()
            )));
        }
        for &d in &ra.deltas {
            for &h in &ra.heights {
                if h > d * d {
                    return Err(Error::precondition(
                        "right_alexandrov_check",
                        format!("grid height {h} exceeds delta^2 = {} for delta = {d}", d * d),
                    ));
                }
            }
        }
        let sep = &self.diagnostics.separation;
        if sep.height > sep.delta * sep.delta {
            return Err(Error::precondition(
                "regular_component_separation",
                format!("height {} exceeds delta^2 = {}", sep.height, sep.delta * sep.delta),
            ));
        }
        let mut seen = self.diagnostics.select.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.diagnostics.select.len() {
            return Err(Error::Config("diagnostics.select lists a diagnostic twice".into()));
        }
        Ok(())
    }
}
