use retention::coverage::check_feasible;
use retention::optimizer::{objective_a, optimal_retention_closed_form, optimal_retention_discrete, uniform_grid};
use retention::process_sim::{SeverityRule, SimConfig, Simulator};
use retention::valuation::{expected_retention, policy_value};
use retention::{
    DisutilityParams, Error, ExpectedLossFunction, LossShape, PolicyTerms, RetentionFunction, SeverityDomain,
};

fn linear_f() -> ExpectedLossFunction {
    ExpectedLossFunction::new(
        SeverityDomain::new(3.0).unwrap(),
        LossShape::PiecewiseLinear {
            grid: vec![0.0, 1.0, 3.0],
            values: vec![1.2, 0.6, 0.1],
        },
    )
    .unwrap()
}

#[test]
fn discrete_cells_bias_is_first_order_in_cell_width() {
    // Small ρ with a large loading: few cells below the deductible.
    let f = ExpectedLossFunction::new(
        SeverityDomain::new(4.0).unwrap(),
        LossShape::PiecewiseConstant {
            grid: vec![0.0, 0.8, 2.4, 4.0],
            values: vec![2.0, 0.5, 0.1],
        },
    )
    .unwrap();
    let t = PolicyTerms::new(1.0).unwrap();
    let p = DisutilityParams::exponential(0.5).unwrap();
    let a = optimal_retention_closed_form(&f, t, p).unwrap().objective_a;
    let gaps: Vec<f64> = [512, 1024, 2048]
        .iter()
        .map(|&n| {
            optimal_retention_discrete(&f, &uniform_grid(4.0, n), t, p)
                .unwrap()
                .objective_a
                - a
        })
        .collect();
    for w in gaps.windows(2) {
        assert!(w[0] > 0.0 && w[1] > 0.0);
        let ratio = w[0] / w[1];
        assert!((1.9..2.1).contains(&ratio), "{gaps:?}");
    }
}

#[test]
fn simulated_totals_match_analytic_means() {
    let f = linear_f();
    let r = RetentionFunction::straight_deductible(0.7).unwrap();
    let cfg = SimConfig::uniform(11, 200_000, 3.0, 24, SeverityRule::Uniform);
    let est = Simulator::new(&f, &cfg).unwrap().estimate_totals(&r);
    let loss = f.expected_total_loss().unwrap();
    let kept = expected_retention(&f, &r).unwrap();
    assert!(est.loss.contains(loss, 4.0), "{:?} vs {loss}", est.loss);
    assert!(est.retained.contains(kept, 4.0), "{:?} vs {kept}", est.retained);
    assert!(est.indemnity.contains(loss - kept, 4.0));
}

#[test]
fn counts_in_disjoint_cells_are_uncorrelated() {
    let f = linear_f();
    let cfg = SimConfig::uniform(5, 100_000, 3.0, 6, SeverityRule::Uniform);
    let sim = Simulator::new(&f, &cfg).unwrap();
    let counts: Vec<Vec<u64>> = (0..cfg.years as u64).map(|y| sim.sample_year(y).counts).collect();
    let n = counts.len() as f64;
    let column = |j: usize| counts.iter().map(|c| c[j] as f64).collect::<Vec<_>>();
    for (i, j) in [(0, 1), (0, 5), (2, 3), (1, 4)] {
        let (a, b) = (column(i), column(j));
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>() / n;
        let corr = cov / (va * vb).sqrt();
        assert!(corr.abs() <= 3.0 / n.sqrt(), "cells {i}, {j}: {corr}");
    }
}

#[test]
fn halving_cells_keeps_estimates_within_noise() {
    let f = linear_f();
    let r = RetentionFunction::proportional(0.3).unwrap();
    let coarse = SimConfig::uniform(21, 100_000, 3.0, 12, SeverityRule::Uniform);
    let fine = SimConfig::uniform(22, 100_000, 3.0, 24, SeverityRule::Uniform);
    let a = Simulator::new(&f, &coarse).unwrap().estimate_totals(&r);
    let b = Simulator::new(&f, &fine).unwrap().estimate_totals(&r);
    for (x, y) in [(a.loss, b.loss), (a.retained, b.retained)] {
        let se = (x.std_error.powi(2) + y.std_error.powi(2)).sqrt();
        assert!((x.mean - y.mean).abs() < 3.0 * se, "{x:?} vs {y:?}");
    }
}

#[test]
fn midpoint_rule_converges_to_the_same_mean() {
    let f = linear_f();
    let analytic = f.expected_total_loss().unwrap();
    let mut errors = Vec::new();
    for cells in [3, 6, 12] {
        let cfg = SimConfig::uniform(1, 1, 3.0, cells, SeverityRule::Midpoint);
        let sim = Simulator::new(&f, &cfg).unwrap();
        // Midpoint totals have mean Σ rate_j·midpoint_j.
        let mean: f64 = sim
            .rates()
            .iter()
            .zip(cfg.cells.windows(2))
            .map(|(rate, w)| rate * 0.5 * (w[0] + w[1]))
            .sum();
        errors.push((mean - analytic).abs());
    }
    assert!(errors[1] < errors[0] && errors[2] < errors[1], "{errors:?}");
}

#[test]
fn simulated_value_agrees_with_analytic_value() {
    let f = ExpectedLossFunction::constant(1.0, 1.0).unwrap();
    let p = DisutilityParams::exponential(1.0).unwrap();
    let t = PolicyTerms::new(0.1).unwrap();
    let opt = optimal_retention_closed_form(&f, t, p).unwrap();
    let cfg = SimConfig::uniform(77, 400_000, 1.0, 8, SeverityRule::Uniform);
    let mc = Simulator::new(&f, &cfg)
        .unwrap()
        .estimate_certain_equivalents(&opt.retention, opt.premium, p)
        .unwrap();
    let eval = policy_value(&f, &opt.retention, t, p).unwrap();
    assert!(mc.loss.contains(eval.ce_loss, 4.0));
    assert!(mc.retained_plus_premium.contains(eval.ce_retained_plus_premium, 4.0));
}

#[test]
fn flat_deductible_is_not_a_feasible_retention() {
    let f = linear_f();
    let flat = |_x: f64| 0.5;
    assert!(matches!(
        check_feasible(&flat, &f.domain(), 1000),
        Err(Error::Infeasible { .. })
    ));
    let t = PolicyTerms::new(0.2).unwrap();
    let p = DisutilityParams::exponential(2.0).unwrap();
    // The objective itself happily evaluates it; only the feasibility check objects.
    assert!(objective_a(&f, &flat, t, p).is_ok());
    let proper = RetentionFunction::straight_deductible(0.5).unwrap();
    assert!(check_feasible(&proper, &f.domain(), 1000).is_ok());
}
