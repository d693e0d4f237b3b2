//! Staged experiment runner: conditions, then solve, then diagnostics.
//!
//! Every random stream is derived from the master seed with a fixed salt per
//! stage, and the report carries no timings, so a rerun with the same config
//! writes byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::c_convexity::{GeodesicBall, SectionSpec};
use crate::config::{DiagnosticKind, ExperimentConfig};
use crate::cost_conditions::{run_suite, ConditionReport, SuiteConfig};
use crate::diagnostics::{
    alexandrov_upper_check_tensor, antipodal_potential, antipodal_section_scaling, monge_ampere_sandwich, perturbed_target,
    random_tensor_section, regular_component_separation, right_alexandrov_sweep, sampling_resolution, stay_away_scan, write_csv,
    AlexandrovConfig, RightAlexandrovConfig, ScalingConfig, SeparationConfig,
};
use crate::error::{Error, Result};
use crate::exec::{shard_rng, with_workers, MonteCarlo};
use crate::geometry::{Factor, ProductSpec};
use crate::transport::io::{write_result, SCHEMA_VERSION};
use crate::transport::{solve_semidiscrete, SemiDiscreteProblem, SolverConfig, SolverResult};

pub const REPORT_FILE: &str = "report.json";

/// Scaling acceptance: relative tolerance on the height slope.
const HEIGHT_SLOPE_TOL: f64 = 0.05;
/// Scaling acceptance: absolute tolerance on the epsilon slope around -1.
const EPS_SLOPE_TOL: f64 = 0.15;
const CLOSED_FORM_TOL: f64 = 0.05;
const REGULAR_SPREAD_MAX: f64 = 1.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    CheckConditions,
    Solve,
    Diagnose,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionsStage {
    pub pass: bool,
    pub reports: Vec<ConditionReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveStage {
    pub atoms: usize,
    pub converged: bool,
    pub stalled: bool,
    pub iterations: usize,
    pub samples: usize,
    pub tolerance: f64,
    pub max_residual: f64,
    pub max_std_err: f64,
    pub transport_cost: f64,
    pub dual: f64,
    pub lambda: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagnosticOutcome {
    pub name: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub summary: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub command: Command,
    pub configuration: String,
    pub seed: u64,
    /// Diagnostics ran although the condition stage failed.
    pub conditions_overridden: bool,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionsStage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveStage>,
    pub diagnostics: Vec<DiagnosticOutcome>,
    pub pass: bool,
}

impl Report {
    /// 0 when every selected check passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.pass {
            0
        } else {
            2
        }
    }
}

/// Exit code of a finished or failed run.
pub fn exit_code(outcome: &Result<Report>) -> i32 {
    match outcome {
        Ok(r) => r.exit_code(),
        Err(_) => 1,
    }
}

mod salt {
    pub const CONDITIONS: u64 = 1;
    pub const PROBLEM: u64 = 2;
    pub const SOLVER: u64 = 3;
    pub const STAY_AWAY: u64 = 4;
    pub const SANDWICH: u64 = 5;
    pub const ALEXANDROV: u64 = 6;
    pub const SCALING: u64 = 7;
    pub const RIGHT_ALEXANDROV: u64 = 8;
    pub const SEPARATION: u64 = 9;
}

fn derive(seed: u64, salt: u64) -> u64 {
    MonteCarlo::new(0, seed).reseed(salt).seed
}

/// Loads the config, applies overrides and runs `command`.
pub fn run(path: &Path, command: Command, seed: Option<u64>, out: Option<PathBuf>) -> Result<Report> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.output = o;
    }
    run_config(&cfg, command)
}

/// Runs the stages of `command` and writes the report and tables to the
/// configured output directory.
pub fn run_config(cfg: &ExperimentConfig, command: Command) -> Result<Report> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output).map_err(|e| Error::from(e).in_stage("output"))?;
    let report = with_workers(cfg.workers, || Runner::new(cfg).and_then(|r| r.execute(command)))?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    fs::write(cfg.output.join(REPORT_FILE), text)?;
    Ok(report)
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    spec: ProductSpec,
    out: &'a Path,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        Ok(Self {
            cfg,
            spec: cfg.spec()?,
            out: &cfg.output,
        })
    }

    fn mc(&self, samples: usize, salt: u64) -> MonteCarlo {
        MonteCarlo::new(samples, derive(self.cfg.seed, salt)).with_exec(self.cfg.exec)
    }

    fn execute(&self, command: Command) -> Result<Report> {
        let conditions = self.conditions().map_err(|e| e.in_stage("conditions"))?;
        let mut pass = conditions.pass;
        let selected = self.selected();
        let wants_solution = match command {
            Command::CheckConditions => false,
            Command::Solve | Command::All => true,
            Command::Diagnose => selected.iter().any(|k| k.needs_solution()),
        };
        let solved = if wants_solution {
            let (problem, stage, result) = self.solve().map_err(|e| e.in_stage("solve"))?;
            pass &= stage.converged;
            Some((problem, stage, result))
        } else {
            None
        };
        let mut diagnostics = Vec::new();
        let overridden = !conditions.pass && self.cfg.override_conditions;
        if matches!(command, Command::Diagnose | Command::All) {
            for kind in selected {
                let outcome = if !conditions.pass && !self.cfg.override_conditions {
                    skipped(kind, "cost-condition stage failed")
                } else {
                    self.diagnostic(kind, solved.as_ref().map(|(p, s, r)| (p, s, r)))
                        .map_err(|e| e.in_stage(&format!("diagnostics/{}", kind.name())))?
                };
                pass &= outcome.status == Status::Pass;
                diagnostics.push(outcome);
            }
        }
        Ok(Report {
            schema_version: SCHEMA_VERSION,
            command,
            configuration: self.spec.label(),
            seed: self.cfg.seed,
            conditions_overridden: overridden,
            config: self.cfg.clone(),
            conditions: Some(conditions),
            solve: solved.map(|(_, s, _)| s),
            diagnostics,
            pass,
        })
    }

    fn selected(&self) -> Vec<DiagnosticKind> {
        if self.cfg.diagnostics.select.is_empty() {
            vec![
                DiagnosticKind::StayAway,
                DiagnosticKind::Sandwich,
                DiagnosticKind::Alexandrov,
                DiagnosticKind::Scaling,
                DiagnosticKind::RightAlexandrov,
                DiagnosticKind::Separation,
            ]
        } else {
            self.cfg.diagnostics.select.clone()
        }
    }

    fn conditions(&self) -> Result<ConditionsStage> {
        let c = &self.cfg.conditions;
        let suite = SuiteConfig {
            samples: c.samples,
            cross_samples: c.cross_samples,
            slope_samples: c.slope_samples,
            rounds: c.rounds,
            seed: derive(self.cfg.seed, salt::CONDITIONS),
            exec: self.cfg.exec,
            ..SuiteConfig::default()
        };
        let reports = run_suite(&self.spec, &suite)?;
        #[derive(Serialize)]
        struct Row<'r> {
            condition: &'r str,
            configuration: &'r str,
            samples: usize,
            worst: f64,
            tolerance: f64,
            pass: bool,
        }
        write_csv(
            &self.out.join("conditions.csv"),
            reports.iter().map(|r| Row {
                condition: &r.condition,
                configuration: &r.configuration,
                samples: r.samples,
                worst: r.worst,
                tolerance: r.tolerance,
                pass: r.pass,
            }),
        )?;
        Ok(ConditionsStage {
            pass: reports.iter().all(|r| r.pass),
            reports,
        })
    }

    fn solve(&self) -> Result<(SemiDiscreteProblem, SolveStage, SolverResult)> {
        let s = &self.cfg.solver;
        let problem = SemiDiscreteProblem::sampled(
            self.spec.clone(),
            self.cfg.source.build(&self.spec)?,
            self.cfg.target.build(&self.spec)?,
            s.atoms,
            derive(self.cfg.seed, salt::PROBLEM),
        )?;
        let solver = SolverConfig {
            tolerance: s.tolerance,
            budgets: s.budgets.clone(),
            max_iter: s.max_iter,
            seed: derive(self.cfg.seed, salt::SOLVER),
            exec: self.cfg.exec,
            ..SolverConfig::default()
        };
        let (result, stalled) = match solve_semidiscrete(&problem, &solver) {
            Ok(r) => (r, false),
            Err(Error::SolverStalled { best, .. }) => (*best, true),
            Err(e) => return Err(e),
        };
        write_result(self.out, "solution", &result)?;
        let stage = SolveStage {
            atoms: problem.len(),
            converged: !stalled && result.converged(),
            stalled,
            iterations: result.iterations,
            samples: result.samples,
            tolerance: result.tolerance,
            max_residual: result.max_residual,
            max_std_err: result.max_std_err,
            transport_cost: result.transport_cost,
            dual: result.dual,
            lambda: problem.lambda(),
        };
        Ok((problem, stage, result))
    }

    fn diagnostic(
        &self,
        kind: DiagnosticKind,
        solved: Option<(&SemiDiscreteProblem, &SolveStage, &SolverResult)>,
    ) -> Result<DiagnosticOutcome> {
        if kind.needs_solution() {
            match solved {
                Some((p, s, r)) if s.converged => {
                    return match kind {
                        DiagnosticKind::StayAway => self.stay_away(p, r),
                        _ => self.sandwich(p, r),
                    }
                }
                Some(_) => return Ok(skipped(kind, "solver did not converge")),
                None => return Ok(skipped(kind, "no solution was computed")),
            }
        }
        match kind {
            DiagnosticKind::Alexandrov => self.alexandrov(),
            DiagnosticKind::Scaling => self.scaling(),
            DiagnosticKind::RightAlexandrov => self.right_alexandrov(),
            DiagnosticKind::Separation => self.separation(),
            DiagnosticKind::StayAway | DiagnosticKind::Sandwich => unreachable!(),
        }
    }

    fn table<T: Serialize>(&self, kind: DiagnosticKind, rows: impl IntoIterator<Item = T>) -> Result<Option<String>> {
        let name = format!("{}.csv", kind.name());
        write_csv(&self.out.join(&name), rows)?;
        Ok(Some(name))
    }

    fn stay_away(&self, problem: &SemiDiscreteProblem, result: &SolverResult) -> Result<DiagnosticOutcome> {
        let c = &self.cfg.diagnostics.stay_away;
        let r = stay_away_scan(result, problem, &self.mc(c.samples, salt::STAY_AWAY))?;
        #[derive(Serialize)]
        struct Row {
            sample: usize,
            distance: f64,
        }
        let csv = self.table(
            DiagnosticKind::StayAway,
            r.values.iter().enumerate().map(|(sample, &distance)| Row { sample, distance }),
        )?;
        let threshold = c.threshold * r.injectivity;
        Ok(outcome(
            DiagnosticKind::StayAway,
            r.minimum > threshold,
            json!({
                "samples": r.samples,
                "minimum": r.minimum,
                "relative_minimum": r.relative_minimum(),
                "threshold": threshold,
                "injectivity": r.injectivity,
                "witness_point": r.witness_point,
                "witness_target": r.witness_target,
                "source_bounds": r.source_bounds,
                "target_bounds": r.target_bounds,
                "lambda": r.lambda,
            }),
            csv,
        ))
    }

    fn sandwich(&self, problem: &SemiDiscreteProblem, result: &SolverResult) -> Result<DiagnosticOutcome> {
        let c = &self.cfg.diagnostics.sandwich;
        let mc = self.mc(c.samples, salt::SANDWICH);
        let radius = c.radius * sampling_resolution(problem);
        let mut rng = shard_rng(mc.seed, u64::MAX);
        let probes: Vec<GeodesicBall> = (0..c.probes)
            .map(|_| GeodesicBall {
                centre: self.spec.sample_uniform(&mut rng),
                radius,
            })
            .collect();
        let records = monge_ampere_sandwich(result, problem, &probes, &mc)?;
        #[derive(Serialize)]
        struct Row {
            probe: usize,
            radius: f64,
            region_volume: f64,
            image_volume: f64,
            ratio: f64,
            std_err: f64,
            lambda: f64,
            atoms_hit: usize,
            pass: bool,
        }
        let csv = self.table(
            DiagnosticKind::Sandwich,
            records.iter().enumerate().map(|(probe, r)| Row {
                probe,
                radius: r.radius,
                region_volume: r.region_volume,
                image_volume: r.image_volume,
                ratio: r.ratio,
                std_err: r.std_err,
                lambda: r.lambda,
                atoms_hit: r.atoms_hit,
                pass: r.pass,
            }),
        )?;
        let lo = records.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        let hi = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
        Ok(outcome(
            DiagnosticKind::Sandwich,
            records.iter().all(|r| r.pass),
            json!({
                "probes": records.len(),
                "radius": radius,
                "lambda": problem.lambda(),
                "min_ratio": lo,
                "max_ratio": hi,
                "passed": records.iter().filter(|r| r.pass).count(),
            }),
            csv,
        ))
    }

    fn alexandrov(&self) -> Result<DiagnosticOutcome> {
        let c = &self.cfg.diagnostics.alexandrov;
        if c.heights.is_empty() {
            return Err(Error::invalid("diagnostics.alexandrov.heights is empty"));
        }
        let base = self.mc(c.samples, salt::ALEXANDROV);
        #[derive(Serialize)]
        struct Row {
            section: usize,
            height: f64,
            log_height: f64,
            admissible: bool,
            volume: f64,
            volume_std_err: f64,
            hits: usize,
            det_ratio: f64,
            exp_derivative_sup: f64,
            lambda: f64,
            lhs: f64,
            rhs: f64,
            sigma: f64,
            pass: bool,
        }
        let mut rows = Vec::new();
        let mut excluded = 0usize;
        for s in 0..c.sections {
            let mut rng = shard_rng(base.seed, s as u64);
            let (phi, first) = random_tensor_section(&self.spec, c.scales, c.heights[0], &mut rng)?;
            let mut section_rows = Vec::with_capacity(c.heights.len());
            let mut admissible = true;
            for (k, &h) in c.heights.iter().enumerate() {
                let section = SectionSpec { height: h, ..first.clone() };
                let check = AlexandrovConfig {
                    mc: base.reseed((s * c.heights.len() + k) as u64),
                    ..AlexandrovConfig::default()
                };
                match alexandrov_upper_check_tensor(&phi, &section, &check) {
                    Ok(r) => section_rows.push(Row {
                        section: s,
                        height: h,
                        log_height: h.ln(),
                        admissible: true,
                        volume: r.volume,
                        volume_std_err: r.volume_std_err,
                        hits: r.hits,
                        det_ratio: r.det_ratio,
                        exp_derivative_sup: r.exp_derivative_sup,
                        lambda: r.lambda,
                        lhs: r.lhs,
                        rhs: r.rhs,
                        sigma: r.sigma,
                        pass: r.pass,
                    }),
                    Err(Error::SectionEscapesChart(_)) => {
                        admissible = false;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
            if admissible {
                rows.extend(section_rows);
            } else {
                excluded += 1;
                rows.push(Row {
                    section: s,
                    height: f64::NAN,
                    log_height: f64::NAN,
                    admissible: false,
                    volume: f64::NAN,
                    volume_std_err: f64::NAN,
                    hits: 0,
                    det_ratio: f64::NAN,
                    exp_derivative_sup: f64::NAN,
                    lambda: f64::NAN,
                    lhs: f64::NAN,
                    rhs: f64::NAN,
                    sigma: f64::NAN,
                    pass: false,
                });
            }
        }
        let checked: Vec<&Row> = rows.iter().filter(|r| r.admissible).collect();
        let worst = checked
            .iter()
            .filter(|r| r.rhs > 0.0)
            .map(|r| r.lhs / r.rhs)
            .fold(0.0, f64::max);
        let passed = checked.iter().filter(|r| r.pass).count();
        let pass = !checked.is_empty() && passed == checked.len();
        let summary = json!({
            "sections": c.sections,
            "excluded_sections": excluded,
            "records": checked.len(),
            "passed": passed,
            "worst_lhs_over_rhs": worst,
        });
        let csv = self.table(DiagnosticKind::Alexandrov, rows)?;
        Ok(outcome(DiagnosticKind::Alexandrov, pass, summary, csv))
    }

    fn scaling(&self) -> Result<DiagnosticOutcome> {
        let c = &self.cfg.diagnostics.scaling;
        let mut factors: Vec<Factor> = Vec::new();
        for f in &self.spec.factors {
            if !factors.contains(f) {
                factors.push(*f);
            }
        }
        #[derive(Serialize)]
        struct Row {
            factor: usize,
            dim: usize,
            radius: f64,
            sweep: String,
            eps: f64,
            height: f64,
            volume: f64,
            std_err: f64,
            closed_form: Option<f64>,
            log_eps: f64,
            log_height: f64,
            log_volume: f64,
            diameter: f64,
        }
        let mut rows = Vec::new();
        let mut per_factor = Vec::new();
        let mut pass = true;
        for (i, f) in factors.iter().enumerate() {
            let cfg = ScalingConfig {
                eps: c.eps.clone(),
                heights: c.heights.clone(),
                sweep_eps: c.sweep_eps,
                sweep_height: c.sweep_height,
                mc: self.mc(c.samples, salt::SCALING).reseed(i as u64),
                ..ScalingConfig::default()
            };
            let r = antipodal_section_scaling(f, &cfg)?;
            let n = f.sphere.dim as f64;
            let height_ok = (r.slope_height - n).abs() <= HEIGHT_SLOPE_TOL * n;
            let eps_ok = (r.slope_eps + 1.0).abs() <= EPS_SLOPE_TOL;
            let closed_ok = r.closed_form_max_rel_err.map_or(true, |e| e <= CLOSED_FORM_TOL);
            let regular_ok = r.regular_spread <= REGULAR_SPREAD_MAX;
            let ok = height_ok && eps_ok && closed_ok && regular_ok;
            pass &= ok;
            per_factor.push(json!({
                "dim": f.sphere.dim,
                "radius": f.sphere.radius,
                "slope_height": r.slope_height,
                "slope_height_target": n,
                "slope_eps": r.slope_eps,
                "slope_eps_target": -1.0,
                "closed_form_max_rel_err": r.closed_form_max_rel_err,
                "regular_spread": r.regular_spread,
                "height_slope_pass": height_ok,
                "eps_slope_pass": eps_ok,
                "closed_form_pass": closed_ok,
                "regular_pass": regular_ok,
                "pass": ok,
            }));
            rows.extend(r.rows.iter().map(|row| Row {
                factor: i,
                dim: f.sphere.dim,
                radius: f.sphere.radius,
                sweep: format!("{:?}", row.sweep).to_lowercase(),
                eps: row.eps,
                height: row.height,
                volume: row.volume,
                std_err: row.std_err,
                closed_form: row.closed_form,
                log_eps: row.eps.ln(),
                log_height: row.log_height,
                log_volume: row.log_volume,
                diameter: row.diameter,
            }));
        }
        let csv = self.table(DiagnosticKind::Scaling, rows)?;
        Ok(outcome(
            DiagnosticKind::Scaling,
            pass,
            json!({
                "factors": per_factor,
                "height_slope_tolerance": HEIGHT_SLOPE_TOL,
                "eps_slope_tolerance": EPS_SLOPE_TOL,
                "closed_form_tolerance": CLOSED_FORM_TOL,
                "regular_spread_max": REGULAR_SPREAD_MAX,
            }),
            csv,
        ))
    }

    fn antipodal_count(&self) -> usize {
        match self.cfg.diagnostics.right_alexandrov.antipodal {
            0 => self.spec.k(),
            n => n,
        }
    }

    fn right_alexandrov(&self) -> Result<DiagnosticOutcome> {
        let c = &self.cfg.diagnostics.right_alexandrov;
        let (phi, x0) = antipodal_potential(&self.spec, self.antipodal_count(), c.regular_scale)?;
        let cfg = RightAlexandrovConfig {
            mc: self.mc(c.samples, salt::RIGHT_ALEXANDROV),
            ..RightAlexandrovConfig::default()
        };
        let sweep = right_alexandrov_sweep(&phi, &x0, &c.eps, &c.deltas, &c.heights, &cfg)?;
        let csv = self.table(DiagnosticKind::RightAlexandrov, sweep.records.iter())?;
        Ok(outcome(
            DiagnosticKind::RightAlexandrov,
            sweep.spread < c.max_spread,
            json!({
                "antipodal_factors": self.antipodal_count(),
                "grid_points": sweep.records.len(),
                "min_ratio": sweep.min_ratio,
                "max_ratio": sweep.max_ratio,
                "spread": sweep.spread,
                "max_spread": c.max_spread,
            }),
            csv,
        ))
    }

    fn separation(&self) -> Result<DiagnosticOutcome> {
        let c = &self.cfg.diagnostics.separation;
        let ra = &self.cfg.diagnostics.right_alexandrov;
        let a0 = self.antipodal_count();
        let (phi, x0) = antipodal_potential(&self.spec, a0, ra.regular_scale)?;
        let section = SectionSpec {
            slope: perturbed_target(&phi, &x0, c.eps, c.delta)?,
            anchor: x0,
            height: c.height,
        };
        let regular: Vec<usize> = (a0..self.spec.k()).collect();
        let cfg = SeparationConfig {
            mc: self.mc(c.samples, salt::SEPARATION),
            margin: c.margin,
            ..SeparationConfig::default()
        };
        let r = regular_component_separation(&phi, &section, &regular, c.delta, &cfg)?;
        #[derive(Serialize)]
        struct Row {
            eps: f64,
            delta: f64,
            height: f64,
            regular_factors: usize,
            min_margin: Option<f64>,
            threshold: f64,
            points: usize,
            images: usize,
            pass: bool,
        }
        let csv = self.table(
            DiagnosticKind::Separation,
            [Row {
                eps: c.eps,
                delta: r.delta,
                height: r.height,
                regular_factors: r.regular.len(),
                min_margin: r.min_margin,
                threshold: r.threshold,
                points: r.points,
                images: r.images,
                pass: r.pass,
            }],
        )?;
        Ok(outcome(DiagnosticKind::Separation, r.pass, serde_json::to_value(&r)?, csv))
    }
}

fn outcome(kind: DiagnosticKind, pass: bool, summary: Value, csv: Option<String>) -> DiagnosticOutcome {
    DiagnosticOutcome {
        name: kind.name().to_string(),
        status: if pass { Status::Pass } else { Status::Fail },
        reason: None,
        summary,
        csv,
    }
}

fn skipped(kind: DiagnosticKind, reason: &str) -> DiagnosticOutcome {
    DiagnosticOutcome {
        name: kind.name().to_string(),
        status: Status::Skipped,
        reason: Some(reason.to_string()),
        summary: Value::Null,
        csv: None,
    }
}
