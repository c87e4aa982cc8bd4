//! Run configuration: a TOML file with one section per concern.
//!
//! ```toml
//! schema_version = 1
//!
//! [loss_function]          # expected loss function f on ]0, x_max]
//! shape = "piecewise_constant"
//! x_max = 1.0
//! grid = [0.0, 1.0]
//! values = [1.0]
//!
//! [retention]              # optional for `optimize`
//! kind = "straight_deductible"
//! deductible = 0.2
//!
//! [insured]
//! rho = 1.0                # or: risk_neutral = true
//!
//! [terms]
//! loading_c = 0.1
//! ```
//!
//! `[sim]`, `[optimize]` and `[sweep]` are read by the subcommands of the
//! same name. Command-line overrides `dotted.key=value` are applied to the
//! parsed table before validation.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use retention::optimizer::{DescentOptions, DescentStart, DEFAULT_CELLS};
use retention::process_sim::{SeverityRule, SimConfig};
use retention::{DisutilityParams, ExpectedLossFunction, LossShape, PolicyTerms, RetentionFunction, SeverityDomain};

use crate::error::CliError;

pub const SCHEMA_VERSION: i64 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: i64,
    loss_function: RawLoss,
    retention: Option<RawRetention>,
    insured: RawInsured,
    terms: RawTerms,
    sim: Option<RawSim>,
    optimize: Option<RawOptimize>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
enum RawLoss {
    PiecewiseConstant {
        x_max: f64,
        grid: Vec<f64>,
        values: Vec<f64>,
    },
    PiecewiseLinear {
        x_max: f64,
        grid: Vec<f64>,
        values: Vec<f64>,
    },
    Exponential {
        x_max: f64,
        scale: f64,
        decay: f64,
    },
    TruncatedPower {
        x_max: f64,
        scale: f64,
        exponent: f64,
        cutoff: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum RawRetention {
    Zero,
    Identity,
    StraightDeductible { deductible: f64 },
    DeductibleWithLimit { deductible: f64, limit: f64 },
    Proportional { share: f64 },
    StepWise { grid: Vec<f64>, levels: Vec<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInsured {
    rho: Option<f64>,
    #[serde(default)]
    risk_neutral: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerms {
    loading_c: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    seed: u64,
    years: usize,
    cells: Option<usize>,
    grid: Option<Vec<f64>>,
    #[serde(default)]
    severity_rule: RawSeverity,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawSeverity {
    Midpoint,
    #[default]
    Uniform,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOptimize {
    cells: Option<usize>,
    descent_iterations: Option<usize>,
    descent_step: Option<f64>,
    descent_start: Option<RawStart>,
    descent_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawStart {
    Zero,
    Upper,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: SweepParameter,
    values: Vec<f64>,
    operation: SweepOperation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    C,
    Rho,
    Deductible,
}

impl SweepParameter {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParameter::C => "c",
            SweepParameter::Rho => "rho",
            SweepParameter::Deductible => "deductible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepOperation {
    Value,
    Breakeven,
    Optimize,
}

#[derive(Debug, Clone)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub operation: SweepOperation,
}

#[derive(Debug, Clone)]
pub struct OptimizeSettings {
    pub cells: usize,
    pub descent: DescentOptions,
}

/// Validated configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub path: PathBuf,
    pub loss_function: ExpectedLossFunction,
    pub retention: Option<RetentionFunction>,
    pub insured: DisutilityParams,
    pub terms: PolicyTerms,
    pub sim: Option<SimConfig>,
    pub optimize: OptimizeSettings,
    pub sweep: Option<Sweep>,
}

impl RunConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path, overrides)
    }

    pub fn parse(text: &str, path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let cfg_err = |key: &str, message: String| CliError::Config {
            path: path.to_path_buf(),
            key: key.to_string(),
            message,
        };
        let raw: RawConfig = if overrides.is_empty() {
            toml::from_str(text).map_err(|e| cfg_err("<document>", e.to_string()))?
        } else {
            let mut table: toml::Table = toml::from_str(text).map_err(|e| cfg_err("<document>", e.to_string()))?;
            for item in overrides {
                apply_override(&mut table, item).map_err(|m| cfg_err(item, m))?;
            }
            let merged = toml::to_string(&table).map_err(|e| cfg_err("<overrides>", e.to_string()))?;
            toml::from_str(&merged).map_err(|e| cfg_err("<document after overrides>", e.to_string()))?
        };
        if raw.schema_version != SCHEMA_VERSION {
            return Err(cfg_err(
                "schema_version",
                format!(
                    "unsupported schema version {} (expected {SCHEMA_VERSION})",
                    raw.schema_version
                ),
            ));
        }

        let loss_function = build_loss(&raw.loss_function).map_err(|e| cfg_err("loss_function", e.to_string()))?;
        let retention = raw
            .retention
            .as_ref()
            .map(build_retention)
            .transpose()
            .map_err(|e| cfg_err("retention", e.to_string()))?;
        let insured = match (raw.insured.rho, raw.insured.risk_neutral) {
            (Some(_), true) => {
                return Err(cfg_err(
                    "insured",
                    "set either rho or risk_neutral = true, not both".into(),
                ))
            }
            (None, false) => return Err(cfg_err("insured", "missing rho (or risk_neutral = true)".into())),
            (None, true) => DisutilityParams::RiskNeutral,
            (Some(rho), false) => {
                DisutilityParams::exponential(rho).map_err(|e| cfg_err("insured.rho", e.to_string()))?
            }
        };
        let terms = PolicyTerms::new(raw.terms.loading_c).map_err(|e| cfg_err("terms.loading_c", e.to_string()))?;

        let sim = match &raw.sim {
            None => None,
            Some(s) => {
                let rule = match s.severity_rule {
                    RawSeverity::Midpoint => SeverityRule::Midpoint,
                    RawSeverity::Uniform => SeverityRule::Uniform,
                };
                let cfg = match (&s.grid, s.cells) {
                    (Some(_), Some(_)) => return Err(cfg_err("sim", "give either cells or grid, not both".into())),
                    (Some(grid), None) => SimConfig {
                        seed: s.seed,
                        years: s.years,
                        cells: grid.clone(),
                        severity_rule: rule,
                    },
                    (None, cells) => {
                        SimConfig::uniform(s.seed, s.years, loss_function.x_max(), cells.unwrap_or(64), rule)
                    }
                };
                cfg.validate(&loss_function)
                    .map_err(|e| cfg_err("sim", e.to_string()))?;
                Some(cfg)
            }
        };

        let opt = raw.optimize.clone().unwrap_or_default();
        let defaults = DescentOptions::default();
        let cells = opt.cells.unwrap_or(DEFAULT_CELLS);
        if cells == 0 {
            return Err(cfg_err("optimize.cells", "must be at least 1".into()));
        }
        let optimize = OptimizeSettings {
            cells,
            descent: DescentOptions {
                iterations: opt.descent_iterations.unwrap_or(defaults.iterations),
                step: opt.descent_step.unwrap_or(defaults.step),
                start: match opt.descent_start {
                    Some(RawStart::Upper) => DescentStart::Upper,
                    Some(RawStart::Zero) | None => DescentStart::Zero,
                },
                tolerance: opt.descent_tolerance.unwrap_or(defaults.tolerance),
            },
        };

        let sweep = raw.sweep.as_ref().map(|s| Sweep {
            parameter: s.parameter,
            values: s.values.clone(),
            operation: s.operation,
        });
        if let Some(s) = &sweep {
            if s.values.is_empty() {
                return Err(cfg_err("sweep.values", "needs at least one value".into()));
            }
        }

        Ok(RunConfig {
            path: path.to_path_buf(),
            loss_function,
            retention,
            insured,
            terms,
            sim,
            optimize,
            sweep,
        })
    }

    pub fn config_error(&self, key: &str, message: impl Into<String>) -> CliError {
        CliError::Config {
            path: self.path.clone(),
            key: key.to_string(),
            message: message.into(),
        }
    }

    pub fn numeric_error(&self, key: &str, source: retention::Error) -> CliError {
        CliError::Numeric {
            path: self.path.clone(),
            key: key.to_string(),
            source,
        }
    }

    /// The configured retention, or a config error naming the missing section.
    pub fn require_retention(&self) -> Result<&RetentionFunction, CliError> {
        self.retention
            .as_ref()
            .ok_or_else(|| self.config_error("retention", "this subcommand needs a [retention] section"))
    }
}

fn build_loss(raw: &RawLoss) -> retention::Result<ExpectedLossFunction> {
    let (x_max, shape) = match raw.clone() {
        RawLoss::PiecewiseConstant { x_max, grid, values } => (x_max, LossShape::PiecewiseConstant { grid, values }),
        RawLoss::PiecewiseLinear { x_max, grid, values } => (x_max, LossShape::PiecewiseLinear { grid, values }),
        RawLoss::Exponential { x_max, scale, decay } => (x_max, LossShape::Exponential { scale, decay }),
        RawLoss::TruncatedPower {
            x_max,
            scale,
            exponent,
            cutoff,
        } => (
            x_max,
            LossShape::TruncatedPower {
                scale,
                exponent,
                cutoff,
            },
        ),
    };
    ExpectedLossFunction::new(SeverityDomain::new(x_max)?, shape)
}

fn build_retention(raw: &RawRetention) -> retention::Result<RetentionFunction> {
    match raw.clone() {
        RawRetention::Zero => Ok(RetentionFunction::Zero),
        RawRetention::Identity => Ok(RetentionFunction::Identity),
        RawRetention::StraightDeductible { deductible } => RetentionFunction::straight_deductible(deductible),
        RawRetention::DeductibleWithLimit { deductible, limit } => {
            RetentionFunction::deductible_with_limit(deductible, limit)
        }
        RawRetention::Proportional { share } => RetentionFunction::proportional(share),
        RawRetention::StepWise { grid, levels } => RetentionFunction::step_wise(grid, levels),
    }
}

/// Applies `a.b.c=value`. The value is read as a TOML literal, falling back
/// to a bare string.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<(), String> {
    let (key, literal) = item
        .split_once('=')
        .ok_or_else(|| format!("override {item:?} is not of the form key=value"))?;
    let key = key.trim();
    let literal = literal.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {literal}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(literal.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key {key:?} is malformed"));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| format!("override key {key:?}: {part} is not a section"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
