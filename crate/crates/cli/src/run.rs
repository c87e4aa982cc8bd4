//! Subcommand dispatch. Every table is CSV with a header row; numbers carry
//! 17 significant digits.

use std::io::Write;

use retention::optimizer::{self, OptimizationResult};
use retention::process_sim::{self, SeverityRule, Simulator};
use retention::{valuation, DisutilityParams, PolicyTerms, RetentionFunction};

use crate::config::{RunConfig, SweepOperation, SweepParameter};
use crate::error::CliError;
use crate::format::{full, short};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Value,
    Breakeven,
    Optimize,
    Simulate,
    Sweep,
}

/// Where a run writes its tables.
pub struct Sinks<'a> {
    pub main: &'a mut dyn Write,
    /// `simulate` summary; appended to `main` after a `# summary` line when absent.
    pub summary: Option<&'a mut dyn Write>,
    /// `optimize` step levels, if requested.
    pub levels: Option<&'a mut dyn Write>,
}

type Table = (Vec<String>, Vec<Vec<String>>);

fn write_table(
    out: &mut dyn Write,
    comment: Option<&str>,
    table: &Table,
    path: &std::path::Path,
) -> Result<(), CliError> {
    let io = |source: std::io::Error| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(c) = comment {
        writeln!(out, "# {c}").map_err(io)?;
    }
    let mut w = csv::Writer::from_writer(&mut *out);
    let csv_io = |e: csv::Error| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e.to_string()),
    };
    w.write_record(&table.0).map_err(csv_io)?;
    for row in &table.1 {
        w.write_record(row).map_err(csv_io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

fn rho_label(params: DisutilityParams) -> String {
    match params {
        DisutilityParams::Exponential { rho } => full(rho),
        DisutilityParams::RiskNeutral => "risk_neutral".into(),
    }
}

pub fn describe(r: &RetentionFunction) -> String {
    match r {
        RetentionFunction::Zero => "zero".into(),
        RetentionFunction::Identity => "identity".into(),
        RetentionFunction::StraightDeductible { deductible } => format!("straight_deductible({deductible})"),
        RetentionFunction::DeductibleWithLimit { deductible, limit } => {
            format!("deductible_with_limit({deductible};{limit})")
        }
        RetentionFunction::Proportional { share } => format!("proportional({share})"),
        RetentionFunction::StepWise(s) => format!("step_wise({} cells)", s.levels().len()),
    }
}

/// Runs `command` and returns a short human-readable summary.
pub fn run(command: Command, cfg: &RunConfig, sinks: Sinks<'_>) -> Result<String, CliError> {
    match command {
        Command::Value => value(cfg, sinks),
        Command::Breakeven => breakeven(cfg, sinks),
        Command::Optimize => optimize(cfg, sinks),
        Command::Simulate => simulate(cfg, sinks),
        Command::Sweep => sweep(cfg, sinks),
    }
}

fn value(cfg: &RunConfig, sinks: Sinks<'_>) -> Result<String, CliError> {
    let r = cfg.require_retention()?;
    let eval = valuation::policy_value(&cfg.loss_function, r, cfg.terms, cfg.insured)
        .map_err(|e| cfg.numeric_error("retention", e))?;
    let table = (
        [
            "loading_c",
            "rho",
            "retention",
            "premium",
            "ce_loss",
            "ce_retained_plus_premium",
            "value",
        ]
        .map(String::from)
        .to_vec(),
        vec![vec![
            full(cfg.terms.loading()),
            rho_label(cfg.insured),
            describe(r),
            full(eval.premium),
            full(eval.ce_loss),
            full(eval.ce_retained_plus_premium),
            full(eval.value),
        ]],
    );
    write_table(sinks.main, None, &table, &cfg.path)?;
    Ok(format!(
        "premium {}  CE(X) {}  CE(R+P) {}  value {}",
        short(eval.premium),
        short(eval.ce_loss),
        short(eval.ce_retained_plus_premium),
        short(eval.value)
    ))
}

fn breakeven(cfg: &RunConfig, sinks: Sinks<'_>) -> Result<String, CliError> {
    let r = cfg.require_retention()?;
    let c_bar = valuation::breakeven_loading(&cfg.loss_function, r, cfg.insured)
        .map_err(|e| cfg.numeric_error("retention", e))?;
    let table = (
        ["rho", "retention", "c_bar"].map(String::from).to_vec(),
        vec![vec![rho_label(cfg.insured), describe(r), full(c_bar)]],
    );
    write_table(sinks.main, None, &table, &cfg.path)?;
    Ok(format!("break-even loading {}", short(c_bar)))
}

fn result_row(r: &OptimizationResult, cfg: &RunConfig) -> Vec<String> {
    vec![
        r.method.name().to_string(),
        rho_label(cfg.insured),
        full(cfg.terms.loading()),
        full(r.deductible),
        full(r.objective_a),
        full(r.premium),
        full(r.value),
        r.insures_nothing.to_string(),
    ]
}

fn optimize(cfg: &RunConfig, sinks: Sinks<'_>) -> Result<String, CliError> {
    let f = &cfg.loss_function;
    let num = |e| cfg.numeric_error("optimize", e);
    let closed = optimizer::optimal_retention_closed_form(f, cfg.terms, cfg.insured).map_err(num)?;
    let grid = optimizer::uniform_grid(f.x_max(), cfg.optimize.cells);
    let discrete = optimizer::optimal_retention_discrete(f, &grid, cfg.terms, cfg.insured).map_err(num)?;
    let descent =
        optimizer::optimal_retention_descent(f, &grid, cfg.terms, cfg.insured, cfg.optimize.descent).map_err(num)?;
    let results = [&closed, &discrete, &descent.result];
    let table = (
        [
            "method",
            "rho",
            "loading_c",
            "deductible",
            "objective_a",
            "premium",
            "value",
            "insures_nothing",
        ]
        .map(String::from)
        .to_vec(),
        results.iter().map(|r| result_row(r, cfg)).collect(),
    );
    write_table(sinks.main, None, &table, &cfg.path)?;

    if let Some(out) = sinks.levels {
        let level_of = |r: &RetentionFunction| match r {
            RetentionFunction::StepWise(s) => s.levels().to_vec(),
            _ => unreachable!("step optimizers return step retentions"),
        };
        let (d, s) = (level_of(&discrete.retention), level_of(&descent.result.retention));
        let rows = grid
            .windows(2)
            .enumerate()
            .map(|(j, w)| {
                vec![
                    full(w[0]),
                    full(w[1]),
                    full(retention::Retention::retained(&closed.retention, w[1])),
                    full(d[j]),
                    full(s[j]),
                ]
            })
            .collect();
        let levels = (
            [
                "cell_lower",
                "cell_upper",
                "closed_form_at_upper",
                "discrete_level",
                "descent_level",
            ]
            .map(String::from)
            .to_vec(),
            rows,
        );
        write_table(out, None, &levels, &cfg.path)?;
    }
    let mut note = format!(
        "deductible {}  premium {}  value {}  ({} descent sweeps)",
        short(closed.deductible),
        short(closed.premium),
        short(closed.value),
        descent.sweeps
    );
    if closed.insures_nothing {
        note.push_str("  [deductible >= x_max: policy insures nothing]");
    }
    Ok(note)
}

fn simulate(cfg: &RunConfig, sinks: Sinks<'_>) -> Result<String, CliError> {
    let sim_cfg = cfg
        .sim
        .as_ref()
        .ok_or_else(|| cfg.config_error("sim", "simulate needs a [sim] section"))?;
    let r = cfg.require_retention()?;
    let f = &cfg.loss_function;
    let num = |key: &str, e| cfg.numeric_error(key, e);
    let sim = Simulator::new(f, sim_cfg).map_err(|e| num("sim", e))?;
    let years = sim.all_year_totals(r);
    let header = format!(
        "seed={} years={} cells={} severity_rule={}",
        sim_cfg.seed,
        sim_cfg.years,
        sim_cfg.cells.len() - 1,
        match sim_cfg.severity_rule {
            SeverityRule::Midpoint => "midpoint",
            SeverityRule::Uniform => "uniform",
        }
    );
    let per_year = (
        ["year", "X", "R", "I"].map(String::from).to_vec(),
        years
            .iter()
            .enumerate()
            .map(|(y, t)| vec![y.to_string(), full(t.loss), full(t.retained), full(t.indemnity)])
            .collect(),
    );
    write_table(&mut *sinks.main, Some(&header), &per_year, &cfg.path)?;

    let totals = process_sim::summarize_totals(&years);
    let premium = valuation::premium(f, r, cfg.terms).map_err(|e| num("retention", e))?;
    let analytic_x = f.expected_total_loss().map_err(|e| num("loss_function", e))?;
    let analytic_r = valuation::expected_retention(f, r).map_err(|e| num("retention", e))?;
    let analytic_i = valuation::expected_indemnity(f, r).map_err(|e| num("retention", e))?;
    let mut rows = vec![
        ("X", totals.loss, analytic_x),
        ("R", totals.retained, analytic_r),
        ("I", totals.indemnity, analytic_i),
    ];
    if let DisutilityParams::Exponential { .. } = cfg.insured {
        let ce = process_sim::certain_equivalents_from(&years, premium, cfg.insured).map_err(|e| num("sim", e))?;
        let ce_x = valuation::ce_total_loss(f, cfg.insured).map_err(|e| num("insured", e))?;
        let ce_rp = valuation::ce_retained_plus_premium(f, r, premium, cfg.insured).map_err(|e| num("insured", e))?;
        rows.push(("CE_X", ce.loss, ce_x));
        rows.push(("CE_R_plus_P", ce.retained_plus_premium, ce_rp));
    }
    let summary = (
        ["quantity", "mc_mean", "mc_std_error", "analytic", "z_score"]
            .map(String::from)
            .to_vec(),
        rows.iter()
            .map(|(name, est, analytic)| {
                let z = if est.std_error > 0.0 {
                    (est.mean - analytic) / est.std_error
                } else {
                    0.0
                };
                vec![
                    name.to_string(),
                    full(est.mean),
                    full(est.std_error),
                    full(*analytic),
                    full(z),
                ]
            })
            .collect(),
    );
    let summary_comment = format!("summary {header} premium={}", full(premium));
    match sinks.summary {
        Some(out) => write_table(out, Some(&summary_comment), &summary, &cfg.path)?,
        None => write_table(sinks.main, Some(&summary_comment), &summary, &cfg.path)?,
    }
    Ok(rows
        .iter()
        .map(|(name, est, analytic)| {
            format!(
                "{name}: mc {} ± {}  analytic {}",
                short(est.mean),
                short(est.std_error),
                short(*analytic)
            )
        })
        .collect::<Vec<_>>()
        .join("\n"))
}

fn sweep(cfg: &RunConfig, sinks: Sinks<'_>) -> Result<String, CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| cfg.config_error("sweep", "sweep needs a [sweep] section"))?;
    let f = &cfg.loss_function;
    let columns: &[&str] = match sweep.operation {
        SweepOperation::Value => &["premium", "ce_loss", "ce_retained_plus_premium", "value"],
        SweepOperation::Breakeven => &["c_bar"],
        SweepOperation::Optimize => &["deductible", "objective_a", "premium", "value", "insures_nothing"],
    };
    if sweep.operation == SweepOperation::Optimize && sweep.parameter == SweepParameter::Deductible {
        return Err(cfg.config_error(
            "sweep.parameter",
            "optimize chooses the deductible; sweep c or rho instead",
        ));
    }
    let mut header = vec!["parameter".to_string(), sweep.parameter.name().to_string()];
    header.extend(columns.iter().map(|s| s.to_string()));
    let mut rows = Vec::with_capacity(sweep.values.len());
    for (i, &v) in sweep.values.iter().enumerate() {
        let key = format!("sweep.values[{i}]");
        let mut terms = cfg.terms;
        let mut params = cfg.insured;
        let mut r = cfg.retention.clone();
        match sweep.parameter {
            SweepParameter::C => terms = PolicyTerms::new(v).map_err(|e| cfg.config_error(&key, e.to_string()))?,
            SweepParameter::Rho => {
                params = DisutilityParams::exponential(v).map_err(|e| cfg.config_error(&key, e.to_string()))?
            }
            SweepParameter::Deductible => {
                r = Some(RetentionFunction::straight_deductible(v).map_err(|e| cfg.config_error(&key, e.to_string()))?)
            }
        }
        let need_r = || {
            r.as_ref()
                .ok_or_else(|| cfg.config_error("retention", "this sweep needs a [retention] section"))
        };
        let mut row = vec![sweep.parameter.name().to_string(), full(v)];
        match sweep.operation {
            SweepOperation::Value => {
                let e = valuation::policy_value(f, need_r()?, terms, params).map_err(|e| cfg.numeric_error(&key, e))?;
                row.extend([e.premium, e.ce_loss, e.ce_retained_plus_premium, e.value].map(full));
            }
            SweepOperation::Breakeven => {
                let c = valuation::breakeven_loading(f, need_r()?, params).map_err(|e| cfg.numeric_error(&key, e))?;
                row.push(full(c));
            }
            SweepOperation::Optimize => {
                let o = optimizer::optimal_retention_closed_form(f, terms, params)
                    .map_err(|e| cfg.numeric_error(&key, e))?;
                row.extend([o.deductible, o.objective_a, o.premium, o.value].map(full));
                row.push(o.insures_nothing.to_string());
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    write_table(sinks.main, None, &(header, rows), &cfg.path)?;
    Ok(format!("{n} sweep points over {}", sweep.parameter.name()))
}
