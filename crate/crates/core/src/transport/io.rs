use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::problem::SemiDiscreteProblem;
use super::solver::{SolverResult, TraceRow};
use crate::c_convexity::DiscretePotential;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    schema_version: String,
    problem: SemiDiscreteProblem,
}

pub fn write_problem(path: &Path, problem: &SemiDiscreteProblem) -> Result<()> {
    let file = ProblemFile {
        schema_version: SCHEMA_VERSION.to_string(),
        problem: problem.clone(),
    };
    fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

pub fn read_problem(path: &Path) -> Result<SemiDiscreteProblem> {
    let file: ProblemFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(Error::invalid(format!("unsupported problem schema version {}", file.schema_version)));
    }
    file.problem.validate()?;
    Ok(file.problem)
}

#[derive(Serialize)]
struct ResultFile<'a> {
    schema_version: String,
    seed: u64,
    samples: usize,
    iterations: usize,
    tolerance: f64,
    max_residual: f64,
    max_std_err: f64,
    transport_cost: f64,
    dual: f64,
    residuals: &'a [f64],
    potential: &'a DiscretePotential,
}

/// Writes `<stem>.json` (potential and summary) and `<stem>_trace.csv`.
pub fn write_result(dir: &Path, stem: &str, result: &SolverResult) -> Result<()> {
    fs::create_dir_all(dir)?;
    let file = ResultFile {
        schema_version: SCHEMA_VERSION.to_string(),
        seed: result.seed,
        samples: result.samples,
        iterations: result.iterations,
        tolerance: result.tolerance,
        max_residual: result.max_residual,
        max_std_err: result.max_std_err,
        transport_cost: result.transport_cost,
        dual: result.dual,
        residuals: &result.residuals,
        potential: &result.potential,
    };
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&file)? + "\n")?;
    write_trace(&dir.join(format!("{stem}_trace.csv")), &result.trace)
}

pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in trace {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the potential back from a result file.
pub fn read_potential(path: &Path) -> Result<DiscretePotential> {
    #[derive(Deserialize)]
    struct Partial {
        potential: serde_json::Value,
    }
    let p: Partial = serde_json::from_str(&fs::read_to_string(path)?)?;
    DiscretePotential::from_json(&p.potential.to_string())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::invalid(format!("csv: {other:?}")),
    }
}
