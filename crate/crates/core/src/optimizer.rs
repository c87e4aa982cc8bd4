//! Pareto-optimal retention.
//!
//! Maximizing the policy value over retentions is the same as minimizing
//!
//! ```text
//! A[r] = ρ ∫ f(x) (e^{r(x)/ρ} − (1 + c) r(x)/ρ) dx,   0 ≤ r(x) ≤ x,
//! ```
//!
//! because `V = ρ ∫ f (e^{x/ρ} − (1 + c) x/ρ) − A`. The integrand is convex in
//! `r(x)` with unconstrained minimizer `ρ·ln(1 + c)`, so the constrained
//! optimum is the straight deductible `min(x, ρ·ln(1 + c))` for `c > 0` and
//! full coverage for `c ≤ 0`. Three routes are provided: the closed form, the
//! per-cell optimum of a step-wise retention, and a projected Newton descent
//! on the step levels that never uses the closed form.

use crate::coverage::{Retention, RetentionFunction};
use crate::disutility::DisutilityParams;
use crate::error::{invalid, Error, Result};
use crate::loss_model::ExpectedLossFunction;
use crate::valuation::{self, check_exponent, PolicyTerms};

/// Default cell count for the step-wise optimizers.
pub const DEFAULT_CELLS: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    DiscreteCells,
    ProjectedDescent,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed-form",
            Method::DiscreteCells => "discrete-cells",
            Method::ProjectedDescent => "projected-descent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub retention: RetentionFunction,
    /// Largest retained amount: `ρ·ln(1 + c)` for the closed form when
    /// `c > 0`, the top step level for the step-wise methods, 0 when `c ≤ 0`.
    pub deductible: f64,
    pub objective_a: f64,
    pub premium: f64,
    pub value: f64,
    pub method: Method,
    /// The deductible reaches `x_max`: the policy pays nothing.
    pub insures_nothing: bool,
}

/// `ρ·ln(1 + c)` for `c > 0`, else 0. Depends on nothing but `ρ` and `c`.
pub fn optimal_deductible(terms: PolicyTerms, params: DisutilityParams) -> Result<f64> {
    let rho = params.require_rho()?;
    let c = terms.loading();
    Ok(if c > 0.0 { rho * c.ln_1p() } else { 0.0 })
}

/// `A[r]`, evaluated as `ρ∫f + ρ∫f·(expm1(r/ρ) − (1 + c)·r/ρ)`.
pub fn objective_a<R: Retention + ?Sized>(
    f: &ExpectedLossFunction,
    r: &R,
    terms: PolicyTerms,
    params: DisutilityParams,
) -> Result<f64> {
    let rho = params.require_rho()?;
    check_exponent(f, rho)?;
    let markup = terms.markup();
    let spread = f.integrate_weighted(
        |x| {
            let k = r.retained(x) / rho;
            rho * (k.exp_m1() - markup * k)
        },
        &r.kinks(),
    )?;
    Ok(rho * f.total_count() + spread)
}

/// The retention-independent part of the value: `ρ∫f(e^{x/ρ} − (1 + c)x/ρ)`.
/// Policy value equals this minus [`objective_a`].
pub fn value_baseline(f: &ExpectedLossFunction, terms: PolicyTerms, params: DisutilityParams) -> Result<f64> {
    objective_a(f, &RetentionFunction::Identity, terms, params)
}

/// A bounded perturbation `δr` supported on `[lo, hi]`.
pub struct Perturbation<'a> {
    pub lo: f64,
    pub hi: f64,
    pub shape: &'a (dyn Fn(f64) -> f64 + Sync),
}

impl Perturbation<'_> {
    pub fn at(&self, x: f64) -> f64 {
        if x >= self.lo && x <= self.hi {
            (self.shape)(x)
        } else {
            0.0
        }
    }

    /// `r + ε·δr`.
    pub fn apply<'r, R: Retention + ?Sized>(&'r self, r: &'r R, eps: f64) -> Perturbed<'r, R> {
        Perturbed { base: r, by: self, eps }
    }
}

pub struct Perturbed<'a, R: ?Sized> {
    base: &'a R,
    by: &'a Perturbation<'a>,
    eps: f64,
}

impl<R: Retention + ?Sized> Retention for Perturbed<'_, R> {
    fn retained(&self, x: f64) -> f64 {
        self.base.retained(x) + self.eps * self.by.at(x)
    }

    fn kinks(&self) -> Vec<f64> {
        let mut k = self.base.kinks();
        k.extend([self.by.lo, self.by.hi]);
        k
    }
}

/// Number of points used to check that a perturbation support is interior.
const SUPPORT_SAMPLES: usize = 512;

/// `δA = ∫ f(x)·(e^{r(x)/ρ} − (1 + c))·δr(x) dx`.
///
/// Only meaningful where `0 < r(x) < x` on the support of `δr`; anything
/// else is rejected.
pub fn first_variation<R: Retention + ?Sized>(
    f: &ExpectedLossFunction,
    r: &R,
    terms: PolicyTerms,
    params: DisutilityParams,
    delta: &Perturbation<'_>,
) -> Result<f64> {
    let rho = params.require_rho()?;
    check_exponent(f, rho)?;
    if !(delta.lo > 0.0 && delta.lo < delta.hi && delta.hi <= f.x_max()) {
        return Err(invalid(format!(
            "perturbation support [{}, {}] must be a non-empty subinterval of ]0, {}]",
            delta.lo,
            delta.hi,
            f.x_max()
        )));
    }
    for k in 0..=SUPPORT_SAMPLES {
        let x = delta.lo + (delta.hi - delta.lo) * k as f64 / SUPPORT_SAMPLES as f64;
        let retained = r.retained(x);
        if !(retained > 0.0 && retained < x) {
            return Err(Error::SupportViolation { x, retained });
        }
        if !delta.at(x).is_finite() {
            return Err(Error::NonFinite { x });
        }
    }
    let c = terms.loading();
    f.integrate_weighted_on(
        |x| ((r.retained(x) / rho).exp_m1() - c) * delta.at(x),
        delta.lo,
        delta.hi,
        &r.kinks(),
    )
}

fn finish(
    f: &ExpectedLossFunction,
    retention: RetentionFunction,
    deductible: f64,
    objective_a: f64,
    terms: PolicyTerms,
    params: DisutilityParams,
    method: Method,
) -> Result<OptimizationResult> {
    let eval = valuation::policy_value(f, &retention, terms, params)?;
    let insures_nothing = retention.is_no_insurance(&f.domain());
    Ok(OptimizationResult {
        retention,
        deductible,
        objective_a,
        premium: eval.premium,
        value: eval.value,
        method,
        insures_nothing,
    })
}

/// `r̄(x) = min(x, ρ·ln(1 + c))` for `c > 0`, `r̄ ≡ 0` for `c ≤ 0`.
pub fn optimal_retention_closed_form(
    f: &ExpectedLossFunction,
    terms: PolicyTerms,
    params: DisutilityParams,
) -> Result<OptimizationResult> {
    let deductible = optimal_deductible(terms, params)?;
    let retention = if terms.loading() > 0.0 {
        RetentionFunction::straight_deductible(deductible)?
    } else {
        RetentionFunction::Zero
    };
    let a = objective_a(f, &retention, terms, params)?;
    finish(f, retention, deductible, a, terms, params, Method::ClosedForm)
}

/// `cells` equal cells on `]0, x_max]`.
pub fn uniform_grid(x_max: f64, cells: usize) -> Vec<f64> {
    let n = cells.max(1);
    let mut grid: Vec<f64> = (0..=n).map(|k| x_max * k as f64 / n as f64).collect();
    grid[n] = x_max;
    grid
}

fn check_grid(f: &ExpectedLossFunction, grid: &[f64]) -> Result<()> {
    if grid.len() < 2 || grid[0] != 0.0 || grid[grid.len() - 1] != f.x_max() {
        return Err(invalid(format!(
            "optimizer grid must run from 0 to x_max = {}",
            f.x_max()
        )));
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(invalid(format!("optimizer grid not ascending at {} -> {}", w[0], w[1])));
    }
    Ok(())
}

/// Per-cell minimizers of `e^{k/ρ} − (1 + c)k/ρ` on `0 ≤ k ≤ x_{j−1}`:
/// `x_{j−1}` when `x_{j−1} ≤ ρ·ln(1 + c)`, else `ρ·ln(1 + c)`; all zero when
/// `c ≤ 0`.
pub fn optimal_levels(grid: &[f64], terms: PolicyTerms, params: DisutilityParams) -> Result<Vec<f64>> {
    let threshold = optimal_deductible(terms, params)?;
    let positive = terms.loading() > 0.0;
    Ok(grid[..grid.len() - 1]
        .iter()
        .map(|&left| {
            if !positive {
                0.0
            } else if left <= threshold {
                left
            } else {
                threshold
            }
        })
        .collect())
}

fn cell_counts(f: &ExpectedLossFunction, grid: &[f64]) -> Result<Vec<f64>> {
    grid.windows(2).map(|w| f.expected_count(w[0], w[1])).collect()
}

/// `A` of a step retention: `ρ Σ n_j (e^{k_j/ρ} − (1 + c) k_j/ρ)`.
fn step_objective(counts: &[f64], levels: &[f64], rho: f64, markup: f64) -> f64 {
    counts
        .iter()
        .zip(levels)
        .map(|(&n, &k)| rho * n * (1.0 + (k / rho).exp_m1() - markup * k / rho))
        .sum()
}

pub fn optimal_retention_discrete(
    f: &ExpectedLossFunction,
    grid: &[f64],
    terms: PolicyTerms,
    params: DisutilityParams,
) -> Result<OptimizationResult> {
    let rho = params.require_rho()?;
    check_exponent(f, rho)?;
    check_grid(f, grid)?;
    let levels = optimal_levels(grid, terms, params)?;
    let counts = cell_counts(f, grid)?;
    let a = step_objective(&counts, &levels, rho, terms.markup());
    let deductible = levels.iter().copied().fold(0.0, f64::max);
    let retention = RetentionFunction::step_wise(grid.to_vec(), levels)?;
    finish(f, retention, deductible, a, terms, params, Method::DiscreteCells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescentStart {
    /// All levels 0 (full coverage).
    Zero,
    /// Every level at its upper bound `x_{j−1}`.
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    /// Maximum number of sweeps over the cells.
    pub iterations: usize,
    /// Damping applied to each Newton step, in `(0, 1]`.
    pub step: f64,
    pub start: DescentStart,
    /// Stop once no projected Newton step exceeds `tolerance·(1 + ρ)`.
    pub tolerance: f64,
}

impl Default for DescentOptions {
    fn default() -> Self {
        DescentOptions {
            iterations: 500,
            step: 1.0,
            start: DescentStart::Zero,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentOutcome {
    pub result: OptimizationResult,
    /// Objective before the first sweep and after every sweep.
    pub trace: Vec<f64>,
    pub sweeps: usize,
}

/// One cell of the separable problem: minimize
/// `φ(k) = expm1(k/ρ) − m·k/ρ` on `[0, upper]`.
struct Cell {
    k: f64,
    /// Bracket known to hold the minimizer.
    lo: f64,
    hi: f64,
    upper: f64,
}

/// Projected coordinate descent on the step levels.
///
/// Each sweep moves every level to the better of a damped Newton step and the
/// midpoint of its current bracket, projected onto `[0, x_{j−1}]`. A move is
/// only taken when it lowers that cell's term, so the objective never rises.
pub fn optimal_retention_descent(
    f: &ExpectedLossFunction,
    grid: &[f64],
    terms: PolicyTerms,
    params: DisutilityParams,
    options: DescentOptions,
) -> Result<DescentOutcome> {
    let rho = params.require_rho()?;
    check_exponent(f, rho)?;
    check_grid(f, grid)?;
    if !(options.step > 0.0 && options.step <= 1.0) {
        return Err(invalid(format!(
            "descent step must lie in (0, 1], got {}",
            options.step
        )));
    }
    let markup = terms.markup();
    let phi = |k: f64| (k / rho).exp_m1() - markup * k / rho;
    let slope = |k: f64| (k / rho).exp() - markup;
    // Newton displacement φ'/φ'' = ρ(1 − m·e^{−k/ρ}).
    let newton = |k: f64| rho * (1.0 - markup * (-k / rho).exp());

    let counts = cell_counts(f, grid)?;
    let mut cells: Vec<Cell> = grid[..grid.len() - 1]
        .iter()
        .map(|&upper| Cell {
            k: match options.start {
                DescentStart::Zero => 0.0,
                DescentStart::Upper => upper,
            },
            lo: 0.0,
            hi: upper,
            upper,
        })
        .collect();
    let levels = |cells: &[Cell]| cells.iter().map(|c| c.k).collect::<Vec<_>>();
    let mut trace = vec![step_objective(&counts, &levels(&cells), rho, markup)];
    let tol = options.tolerance * (1.0 + rho);

    let mut residual = f64::INFINITY;
    let mut sweeps = 0;
    while sweeps < options.iterations {
        sweeps += 1;
        residual = 0.0f64;
        for cell in cells.iter_mut() {
            let g = slope(cell.k);
            if g < 0.0 {
                cell.lo = cell.lo.max(cell.k);
            } else if g > 0.0 {
                cell.hi = cell.hi.min(cell.k);
            } else {
                continue;
            }
            let projected = (cell.k - newton(cell.k)).clamp(0.0, cell.upper);
            let displacement = (projected - cell.k).abs();
            if cell.hi - cell.lo <= 0.0 {
                continue;
            }
            let damped = (cell.k - options.step * newton(cell.k)).clamp(cell.lo, cell.hi);
            let mid = 0.5 * (cell.lo + cell.hi);
            // Convexity: a bound whose slope points inward is the minimizer.
            let preferred = if slope(0.0) >= 0.0 {
                0.0
            } else if slope(cell.upper) <= 0.0 {
                cell.upper
            } else if phi(damped) <= phi(mid) {
                damped
            } else {
                mid
            };
            // A downhill move that keeps the slope sign cannot raise a convex
            // φ, even where rounding hides the decrease.
            let k = cell.k;
            let lowers = |x: f64| phi(x) <= phi(k) || (slope(x) * g >= 0.0 && (x - k) * g <= 0.0);
            let mut candidate = preferred;
            for _ in 0..2 {
                if lowers(candidate) {
                    cell.k = candidate;
                    break;
                }
                if slope(candidate) > 0.0 {
                    cell.hi = candidate;
                } else {
                    cell.lo = candidate;
                }
                candidate = 0.5 * (cell.lo + cell.hi);
            }
            // The bracket holds both k and the minimizer, so its width also
            // bounds the error once φ is flat to rounding.
            residual = residual.max(displacement.min(cell.hi - cell.lo));
        }
        trace.push(step_objective(&counts, &levels(&cells), rho, markup));
        if residual <= tol {
            break;
        }
    }
    if residual > tol {
        return Err(Error::DescentBudget {
            iterations: options.iterations,
            residual,
        });
    }
    let final_levels = levels(&cells);
    let a = *trace.last().expect("trace starts non-empty");
    let deductible = final_levels.iter().copied().fold(0.0, f64::max);
    let retention = RetentionFunction::step_wise(grid.to_vec(), final_levels)?;
    let result = finish(f, retention, deductible, a, terms, params, Method::ProjectedDescent)?;
    Ok(DescentOutcome { result, trace, sweeps })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalPolicy {
    pub deductible: f64,
    pub premium: f64,
    pub value: f64,
    pub insures_nothing: bool,
}

/// Premium and value of the optimal straight deductible (`c > 0`):
///
/// ```text
/// P̄ = (1 + c) ∫_d^{x_max} f(x)(x − d) dx
/// V̄ = ρ(1 + c) ∫_d^{x_max} f(x)(e^{(x−d)/ρ} − 1 − (x − d)/ρ) dx,   d = ρ·ln(1 + c)
/// ```
pub fn optimal_premium_and_value(
    f: &ExpectedLossFunction,
    terms: PolicyTerms,
    params: DisutilityParams,
) -> Result<OptimalPolicy> {
    if !(terms.loading() > 0.0) {
        return Err(invalid(format!(
            "optimal premium formula needs c > 0, got {}",
            terms.loading()
        )));
    }
    let rho = params.require_rho()?;
    check_exponent(f, rho)?;
    let d = optimal_deductible(terms, params)?;
    let x_max = f.x_max();
    if d >= x_max {
        return Ok(OptimalPolicy {
            deductible: d,
            premium: 0.0,
            value: 0.0,
            insures_nothing: true,
        });
    }
    let markup = terms.markup();
    let premium = markup * f.integrate_weighted_on(|x| x - d, d, x_max, &[])?;
    let value = markup
        * f.integrate_weighted_on(
            |x| {
                let u = (x - d) / rho;
                rho * (u.exp_m1() - u)
            },
            d,
            x_max,
            &[],
        )?;
    Ok(OptimalPolicy {
        deductible: d,
        premium,
        value,
        insures_nothing: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss_model::{LossShape, SeverityDomain};
    use crate::quadrature::Quadrature;
    use std::f64::consts::E;

    fn exp_params(rho: f64) -> DisutilityParams {
        DisutilityParams::exponential(rho).unwrap()
    }

    fn terms(c: f64) -> PolicyTerms {
        PolicyTerms::new(c).unwrap()
    }

    fn unit() -> ExpectedLossFunction {
        ExpectedLossFunction::constant(1.0, 1.0).unwrap()
    }

    #[test]
    fn objective_examples() {
        let f = unit();
        let a = objective_a(&f, &RetentionFunction::Zero, terms(0.3), exp_params(1.0)).unwrap();
        assert!((a - 1.0).abs() < 1e-12);
        // Constant retention (infeasible, objective only): integrand is constant.
        let k = 0.4;
        let constant = move |_x: f64| k;
        let a = objective_a(&f, &constant, terms(0.3), exp_params(2.0)).unwrap();
        let expect = 2.0 * ((k / 2.0).exp() - 1.3 * k / 2.0);
        assert!((a - expect).abs() < 1e-12);
        assert!(objective_a(&f, &constant, terms(0.3), DisutilityParams::RiskNeutral).is_err());
    }

    #[test]
    fn value_is_baseline_minus_objective() {
        let f = ExpectedLossFunction::new(
            SeverityDomain::new(4.0).unwrap(),
            LossShape::Exponential { scale: 1.5, decay: 1.2 },
        )
        .unwrap();
        let p = exp_params(1.7);
        for r in [
            RetentionFunction::Zero,
            RetentionFunction::straight_deductible(0.8).unwrap(),
            RetentionFunction::proportional(0.4).unwrap(),
        ] {
            let t = terms(0.2);
            let v = valuation::policy_value(&f, &r, t, p).unwrap().value;
            let split = value_baseline(&f, t, p).unwrap() - objective_a(&f, &r, t, p).unwrap();
            assert!((v - split).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_examples() {
        let f = unit();
        let r = optimal_retention_closed_form(&f, terms(0.1), exp_params(100.0)).unwrap();
        assert!((r.deductible - 9.531017980432486).abs() < 1e-12);
        assert!(r.insures_nothing);
        let zero = optimal_retention_closed_form(&f, terms(0.0), exp_params(1.0)).unwrap();
        assert_eq!(zero.deductible, 0.0);
        assert_eq!(zero.retention, RetentionFunction::Zero);
        let neg = optimal_retention_closed_form(&f, terms(-0.05), exp_params(1.0)).unwrap();
        assert_eq!(neg.retention, RetentionFunction::Zero);
        assert!(optimal_retention_closed_form(&f, terms(0.1), DisutilityParams::RiskNeutral).is_err());
    }

    #[test]
    fn discrete_levels_example() {
        // ρ = 1, c = e − 1 puts the threshold at exactly 1.
        let f = ExpectedLossFunction::constant(2.0, 1.0).unwrap();
        let grid = uniform_grid(2.0, 8);
        let r = optimal_retention_discrete(&f, &grid, terms(E - 1.0), exp_params(1.0)).unwrap();
        let RetentionFunction::StepWise(step) = &r.retention else {
            panic!("expected step retention")
        };
        let expect = [0.0, 0.25, 0.5, 0.75, 1.0, 1.0, 1.0, 1.0];
        for (got, want) in step.levels().iter().zip(expect) {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        let none = optimal_levels(&grid, terms(-0.2), exp_params(1.0)).unwrap();
        assert!(none.iter().all(|&k| k == 0.0));
        let none = optimal_levels(&grid, terms(0.0), exp_params(1.0)).unwrap();
        assert!(none.iter().all(|&k| k == 0.0));
    }

    fn sup_distance(levels: &[f64], grid: &[f64], d: f64) -> f64 {
        // The gap between a step and min(x, d) peaks at the right end of a cell.
        levels
            .iter()
            .zip(grid.windows(2))
            .map(|(&k, w)| (w[1].min(d) - k).abs().max((w[0].min(d) - k).abs()))
            .fold(0.0, f64::max)
    }

    #[test]
    fn refinement_halves_sup_distance() {
        let t = terms(0.5);
        let p = exp_params(1.0);
        let d = optimal_deductible(t, p).unwrap();
        let mut last = f64::INFINITY;
        for n in [16usize, 32, 64, 128] {
            let grid = uniform_grid(2.0, n);
            let levels = optimal_levels(&grid, t, p).unwrap();
            let dist = sup_distance(&levels, &grid, d);
            assert!(dist <= 2.0 / n as f64 + 1e-15);
            if last.is_finite() {
                assert!(dist <= 0.5 * last + 1e-12);
            }
            last = dist;
        }
    }

    #[test]
    fn descent_matches_per_cell_optimum() {
        let f = ExpectedLossFunction::constant(3.0, 2.0).unwrap();
        let grid = uniform_grid(3.0, 64);
        for (rho, c) in [(1.0, 0.5), (0.5, 2.0), (10.0, 0.05), (1.0, -0.2)] {
            let t = terms(c);
            let p = exp_params(rho);
            let target = optimal_levels(&grid, t, p).unwrap();
            for start in [DescentStart::Zero, DescentStart::Upper] {
                let opts = DescentOptions {
                    start,
                    ..DescentOptions::default()
                };
                let out = optimal_retention_descent(&f, &grid, t, p, opts).unwrap();
                let RetentionFunction::StepWise(step) = &out.result.retention else {
                    panic!()
                };
                for (k, want) in step.levels().iter().zip(&target) {
                    assert!((k - want).abs() <= 1e-6 * (1.0 + rho), "{k} vs {want}");
                }
                assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
            }
        }
    }

    #[test]
    fn descent_lands_exactly_on_active_bounds() {
        let f = ExpectedLossFunction::constant(3.0, 1.0).unwrap();
        let grid = uniform_grid(3.0, 32);
        for c in [0.0, -0.05] {
            let opts = DescentOptions {
                start: DescentStart::Upper,
                ..DescentOptions::default()
            };
            let out = optimal_retention_descent(&f, &grid, terms(c), exp_params(0.5), opts).unwrap();
            let RetentionFunction::StepWise(step) = &out.result.retention else {
                panic!()
            };
            assert!(step.levels().iter().all(|&k| k == 0.0));
        }
    }

    #[test]
    fn descent_converges_where_phi_is_flat() {
        // ρ = 5, c = 0.5 on 2048 cells used to stall within rounding of φ.
        let f = ExpectedLossFunction::new(
            SeverityDomain::new(10.0).unwrap(),
            LossShape::PiecewiseLinear {
                grid: vec![0.0, 3.0, 10.0],
                values: vec![1.5, 0.4, 0.02],
            },
        )
        .unwrap();
        let grid = uniform_grid(10.0, 2048);
        let (t, p) = (terms(0.5), exp_params(5.0));
        let out = optimal_retention_descent(&f, &grid, t, p, DescentOptions::default()).unwrap();
        let target = optimal_levels(&grid, t, p).unwrap();
        let RetentionFunction::StepWise(step) = &out.result.retention else {
            panic!()
        };
        for (k, want) in step.levels().iter().zip(&target) {
            assert!((k - want).abs() <= 1e-10 * 6.0);
        }
        assert!(out.sweeps < 100);
    }

    #[test]
    fn descent_brute_force_scan() {
        // Independent check of one interior cell by scanning its level.
        let f = ExpectedLossFunction::constant(2.0, 1.0).unwrap();
        let grid = uniform_grid(2.0, 4);
        let (rho, c) = (0.7, 0.9);
        let out = optimal_retention_descent(&f, &grid, terms(c), exp_params(rho), DescentOptions::default()).unwrap();
        let RetentionFunction::StepWise(step) = &out.result.retention else {
            panic!()
        };
        for (j, &left) in grid[..4].iter().enumerate() {
            let phi = |k: f64| (k / rho).exp() - (1.0 + c) * k / rho;
            let best = (0..=200_000)
                .map(|i| left * i as f64 / 200_000.0)
                .min_by(|a, b| phi(*a).total_cmp(&phi(*b)))
                .unwrap();
            assert!((step.levels()[j] - best).abs() <= left / 200_000.0 + 1e-12);
        }
    }

    #[test]
    fn descent_budget_is_reported() {
        let f = ExpectedLossFunction::constant(50.0, 1.0).unwrap();
        let grid = uniform_grid(50.0, 16);
        let opts = DescentOptions {
            iterations: 2,
            step: 0.1,
            start: DescentStart::Upper,
            tolerance: 1e-13,
        };
        assert!(matches!(
            optimal_retention_descent(&f, &grid, terms(0.1), exp_params(1.0), opts),
            Err(Error::DescentBudget { iterations: 2, .. })
        ));
    }

    #[test]
    fn optimal_premium_example() {
        let f = unit();
        let out = optimal_premium_and_value(&f, terms(0.1), exp_params(1.0)).unwrap();
        let d = 1.1f64.ln();
        assert!((out.premium - 1.1 * (1.0 - d).powi(2) / 2.0).abs() < 1e-12);
        assert!((out.premium - 0.450155).abs() < 1e-6);
        let r = RetentionFunction::straight_deductible(d).unwrap();
        let v = valuation::policy_value(&f, &r, terms(0.1), exp_params(1.0)).unwrap();
        assert!((out.value - v.value).abs() <= 1e-9 * v.value.abs());
        let degenerate = optimal_premium_and_value(&f, terms(2.0), exp_params(1.0)).unwrap();
        assert!(degenerate.insures_nothing);
        assert_eq!((degenerate.premium, degenerate.value), (0.0, 0.0));
        assert!(optimal_premium_and_value(&f, terms(0.0), exp_params(1.0)).is_err());
    }

    #[test]
    fn first_variation_examples() {
        let f = ExpectedLossFunction::constant(2.0, 1.0).unwrap();
        let (rho, c) = (1.0, 0.5);
        let d = rho * f64::ln_1p(c);
        let bump = |x: f64| (x - d).sin() + 2.0;
        let support = Perturbation {
            lo: d + 0.1,
            hi: 1.9,
            shape: &bump,
        };
        let at_opt = RetentionFunction::straight_deductible(d).unwrap();
        let v = first_variation(&f, &at_opt, terms(c), exp_params(rho), &support).unwrap();
        assert!(v.abs() < 1e-10);

        let low = RetentionFunction::straight_deductible(0.5 * d).unwrap();
        let v = first_variation(&f, &low, terms(c), exp_params(rho), &support).unwrap();
        assert!(v < 0.0);

        let nothing = |_x: f64| 0.0;
        let null = Perturbation {
            lo: d + 0.1,
            hi: 1.9,
            shape: &nothing,
        };
        assert_eq!(
            first_variation(&f, &at_opt, terms(c), exp_params(rho), &null).unwrap(),
            0.0
        );

        // r(x) = x below d is on the boundary, not interior.
        let bad = Perturbation {
            lo: 0.1,
            hi: 1.0,
            shape: &bump,
        };
        assert!(matches!(
            first_variation(&f, &at_opt, terms(c), exp_params(rho), &bad),
            Err(Error::SupportViolation { .. })
        ));
    }

    #[test]
    fn first_variation_matches_central_difference() {
        let f = ExpectedLossFunction::constant(2.0, 1.0)
            .unwrap()
            .with_quadrature(Quadrature::Composite { cells: 64 });
        let r = RetentionFunction::proportional(0.4).unwrap();
        let (t, p) = (terms(0.3), exp_params(0.5));
        let bump = |x: f64| 3.0 * (std::f64::consts::PI * (x - 0.5) / 1.0).sin();
        let delta = Perturbation {
            lo: 0.5,
            hi: 1.5,
            shape: &bump,
        };
        let exact = first_variation(&f, &r, t, p, &delta).unwrap();
        let err = |eps: f64| {
            let up = objective_a(&f, &delta.apply(&r, eps), t, p).unwrap();
            let down = objective_a(&f, &delta.apply(&r, -eps), t, p).unwrap();
            ((up - down) / (2.0 * eps) - exact).abs()
        };
        let (coarse, fine) = (err(1e-4), err(1e-5));
        assert!(coarse < 1e-6);
        assert!(fine * 50.0 <= coarse, "{coarse:e} vs {fine:e}");
    }
}
