//! Per-loss retention and indemnity functions.
//!
//! Every catalog member satisfies `0 ≤ r(x) ≤ x`, so the indemnity
//! `i(x) = x − r(x)` also lies in `[0, x]`.

use crate::error::{invalid, Error, Result};
use crate::loss_model::{cell_index, SeverityDomain};

/// Anything that maps a loss value to a retained amount.
///
/// Implemented by [`RetentionFunction`] and by ad-hoc perturbed retentions
/// used in variational checks. No feasibility is implied.
pub trait Retention {
    fn retained(&self, x: f64) -> f64;

    /// Points where the retention or its slope is discontinuous.
    fn kinks(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl<F: Fn(f64) -> f64> Retention for F {
    fn retained(&self, x: f64) -> f64 {
        self(x)
    }
}

/// Step-wise retention on a grid `0 = x_0 < x_1 < … < x_n = x_max`, equal to
/// `levels[j]` on `]x_j, x_{j+1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRetention {
    grid: Vec<f64>,
    levels: Vec<f64>,
}

impl StepRetention {
    /// Requires `levels[0] == 0` and `0 ≤ levels[j] ≤ grid[j]`, so that the
    /// retention never exceeds the loss anywhere in the cell.
    pub fn new(grid: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid[0] != 0.0 {
            return Err(invalid("step grid must start at 0 and have at least one cell"));
        }
        if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(invalid(format!(
                "step grid not strictly ascending at {} -> {}",
                w[0], w[1]
            )));
        }
        if levels.len() + 1 != grid.len() {
            return Err(invalid(format!(
                "step retention needs {} levels, got {}",
                grid.len() - 1,
                levels.len()
            )));
        }
        if levels[0] != 0.0 {
            return Err(invalid(format!("first step level must be 0, got {}", levels[0])));
        }
        for (j, &k) in levels.iter().enumerate() {
            // k_j ≤ x_{j-1}: the lower end of the cell bounds the level.
            if !(k >= 0.0 && k <= grid[j]) {
                return Err(invalid(format!(
                    "level {j} = {k} violates 0 <= k <= {} (left end of its cell)",
                    grid[j]
                )));
            }
        }
        Ok(StepRetention { grid, levels })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn x_max(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    fn level_at(&self, x: f64) -> f64 {
        self.levels[cell_index(&self.grid, x)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RetentionFunction {
    /// Full coverage: `r ≡ 0`.
    Zero,
    /// No insurance: `r(x) = x`.
    Identity,
    /// `r(x) = min(x, d)`.
    StraightDeductible {
        deductible: f64,
    },
    /// `min(x, d)` up to the policy limit `M`, then `x − (M − d)`: the insurer
    /// pays at most `M − d` per loss.
    DeductibleWithLimit {
        deductible: f64,
        limit: f64,
    },
    /// `r(x) = α·x` with `α ∈ [0, 1]`.
    Proportional {
        share: f64,
    },
    StepWise(StepRetention),
}

impl RetentionFunction {
    pub fn straight_deductible(deductible: f64) -> Result<Self> {
        if !(deductible.is_finite() && deductible >= 0.0) {
            return Err(invalid(format!("deductible must be finite and >= 0, got {deductible}")));
        }
        Ok(RetentionFunction::StraightDeductible { deductible })
    }

    pub fn deductible_with_limit(deductible: f64, limit: f64) -> Result<Self> {
        if !(deductible.is_finite() && deductible >= 0.0) {
            return Err(invalid(format!("deductible must be finite and >= 0, got {deductible}")));
        }
        if !(limit.is_finite() && limit >= deductible) {
            return Err(invalid(format!(
                "limit {limit} must be finite and >= deductible {deductible}"
            )));
        }
        Ok(RetentionFunction::DeductibleWithLimit { deductible, limit })
    }

    pub fn proportional(share: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&share) {
            return Err(invalid(format!("retained share must lie in [0, 1], got {share}")));
        }
        Ok(RetentionFunction::Proportional { share })
    }

    pub fn step_wise(grid: Vec<f64>, levels: Vec<f64>) -> Result<Self> {
        StepRetention::new(grid, levels).map(RetentionFunction::StepWise)
    }

    /// Retained amount for a loss `x` in the domain.
    pub fn retention_at(&self, domain: &SeverityDomain, x: f64) -> Result<f64> {
        domain.check(x)?;
        if let RetentionFunction::StepWise(s) = self {
            if x > s.x_max() {
                return Err(invalid(format!("loss value {x} beyond step grid end {}", s.x_max())));
            }
        }
        Ok(self.retained(x))
    }

    /// Indemnified amount `x − r(x)`.
    pub fn indemnity_at(&self, domain: &SeverityDomain, x: f64) -> Result<f64> {
        Ok(x - self.retention_at(domain, x)?)
    }

    /// Ascending discontinuities of `r` or `r'`, as used to cut quadrature cells.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            RetentionFunction::Zero | RetentionFunction::Identity | RetentionFunction::Proportional { .. } => {
                Vec::new()
            }
            RetentionFunction::StraightDeductible { deductible } => vec![*deductible],
            RetentionFunction::DeductibleWithLimit { deductible, limit } => {
                if deductible == limit {
                    vec![*deductible]
                } else {
                    vec![*deductible, *limit]
                }
            }
            RetentionFunction::StepWise(s) => s.grid[1..s.grid.len() - 1].to_vec(),
        }
    }

    /// True when the policy pays nothing for any loss in the domain.
    pub fn is_no_insurance(&self, domain: &SeverityDomain) -> bool {
        match self {
            RetentionFunction::Identity => true,
            RetentionFunction::Proportional { share } => *share == 1.0,
            RetentionFunction::StraightDeductible { deductible } => *deductible >= domain.x_max(),
            RetentionFunction::DeductibleWithLimit { deductible, limit } => {
                deductible == limit || *deductible >= domain.x_max()
            }
            _ => false,
        }
    }
}

impl Retention for RetentionFunction {
    fn retained(&self, x: f64) -> f64 {
        match self {
            RetentionFunction::Zero => 0.0,
            RetentionFunction::Identity => x,
            // `x <= d` keeps the loss itself on the boundary.
            RetentionFunction::StraightDeductible { deductible } => {
                if x <= *deductible {
                    x
                } else {
                    *deductible
                }
            }
            RetentionFunction::DeductibleWithLimit { deductible, limit } => {
                if x <= *deductible {
                    x
                } else if x <= *limit {
                    *deductible
                } else {
                    x - (limit - deductible)
                }
            }
            RetentionFunction::Proportional { share } => share * x,
            RetentionFunction::StepWise(s) => s.level_at(x),
        }
    }

    fn kinks(&self) -> Vec<f64> {
        self.breakpoints()
    }
}

/// Checks `0 ≤ r(x) ≤ x` on `samples` evenly spaced points of `]0, x_max]`
/// plus both sides of every kink.
pub fn check_feasible(r: &dyn Retention, domain: &SeverityDomain, samples: usize) -> Result<()> {
    let x_max = domain.x_max();
    let mut points: Vec<f64> = (1..=samples.max(1))
        .map(|k| x_max * k as f64 / samples.max(1) as f64)
        .collect();
    for b in r.kinks() {
        for x in [b, b * (1.0 - 1e-12), b * (1.0 + 1e-12)] {
            if domain.contains(x) {
                points.push(x);
            }
        }
    }
    points.push(x_max * 1e-9);
    for x in points {
        let retained = r.retained(x);
        if !(retained >= 0.0 && retained <= x) {
            return Err(Error::Infeasible { x, retained });
        }
    }
    Ok(())
}
