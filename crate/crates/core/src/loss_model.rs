//! Expected loss function: the density `f` of expected yearly loss counts per
//! unit of severity on `]0, x_max]`.
//!
//! Loss values and risk tolerance share one currency unit; `f` is measured in
//! losses per (currency · year). Nothing in the code enforces the units.

use crate::error::{invalid, Result};
use crate::quadrature::{self, QuadResult, Quadrature};

/// Upper end of the severity range, the most severe possible loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityDomain {
    x_max: f64,
}

impl SeverityDomain {
    pub fn new(x_max: f64) -> Result<Self> {
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(invalid(format!("x_max must be positive and finite, got {x_max}")));
        }
        Ok(SeverityDomain { x_max })
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    /// True for `x` in `]0, x_max]`.
    pub fn contains(&self, x: f64) -> bool {
        x > 0.0 && x <= self.x_max
    }

    pub fn check(&self, x: f64) -> Result<()> {
        if self.contains(x) {
            Ok(())
        } else {
            Err(invalid(format!("loss value {x} outside ]0, {}]", self.x_max)))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LossShape {
    /// `values[j]` on `]grid[j], grid[j+1]]`.
    PiecewiseConstant { grid: Vec<f64>, values: Vec<f64> },
    /// Linear interpolation of `values[j]` given at `grid[j]`.
    PiecewiseLinear { grid: Vec<f64>, values: Vec<f64> },
    /// `scale · exp(-x / decay)`.
    Exponential { scale: f64, decay: f64 },
    /// `scale · x^(-exponent)` above `cutoff`, zero on `]0, cutoff]`.
    TruncatedPower { scale: f64, exponent: f64, cutoff: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedLossFunction {
    domain: SeverityDomain,
    shape: LossShape,
    quadrature: Quadrature,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_grid(grid: &[f64], x_max: f64) -> Result<()> {
    if grid.len() < 2 {
        return Err(invalid("grid needs at least two points"));
    }
    if grid[0] != 0.0 {
        return Err(invalid(format!("grid must start at 0, starts at {}", grid[0])));
    }
    if grid[grid.len() - 1] != x_max {
        return Err(invalid(format!(
            "grid must end at x_max = {x_max}, ends at {}",
            grid[grid.len() - 1]
        )));
    }
    if let Some(w) = grid.windows(2).find(|w| !(w[1] > w[0])) {
        return Err(invalid(format!("grid not strictly ascending at {} -> {}", w[0], w[1])));
    }
    Ok(())
}

/// Index `j` of the half-open cell `]grid[j], grid[j+1]]` holding `x`.
pub(crate) fn cell_index(grid: &[f64], x: f64) -> usize {
    let upper = grid.partition_point(|&g| g < x);
    upper.clamp(1, grid.len() - 1) - 1
}

impl ExpectedLossFunction {
    pub fn new(domain: SeverityDomain, shape: LossShape) -> Result<Self> {
        let x_max = domain.x_max();
        match &shape {
            LossShape::PiecewiseConstant { grid, values } => {
                check_grid(grid, x_max)?;
                if values.len() + 1 != grid.len() {
                    return Err(invalid(format!(
                        "piecewise-constant shape needs {} values, got {}",
                        grid.len() - 1,
                        values.len()
                    )));
                }
                for (j, &v) in values.iter().enumerate() {
                    positive(&format!("values[{j}]"), v)?;
                }
            }
            LossShape::PiecewiseLinear { grid, values } => {
                check_grid(grid, x_max)?;
                if values.len() != grid.len() {
                    return Err(invalid(format!(
                        "piecewise-linear shape needs {} values, got {}",
                        grid.len(),
                        values.len()
                    )));
                }
                // The value at 0 sits on the open end of the domain.
                if !(values[0].is_finite() && values[0] >= 0.0) {
                    return Err(invalid(format!("values[0] must be finite and >= 0, got {}", values[0])));
                }
                for (j, &v) in values.iter().enumerate().skip(1) {
                    positive(&format!("values[{j}]"), v)?;
                }
            }
            LossShape::Exponential { scale, decay } => {
                positive("scale", *scale)?;
                positive("decay", *decay)?;
            }
            LossShape::TruncatedPower {
                scale,
                exponent,
                cutoff,
            } => {
                positive("scale", *scale)?;
                if !(exponent.is_finite() && *exponent >= 0.0) {
                    return Err(invalid(format!("exponent must be finite and >= 0, got {exponent}")));
                }
                positive("cutoff", *cutoff)?;
                if *cutoff >= x_max {
                    return Err(invalid(format!("cutoff {cutoff} must lie below x_max {x_max}")));
                }
            }
        }
        Ok(ExpectedLossFunction {
            domain,
            shape,
            quadrature: Quadrature::default(),
        })
    }

    /// `f ≡ level` on `]0, x_max]`.
    pub fn constant(x_max: f64, level: f64) -> Result<Self> {
        Self::new(
            SeverityDomain::new(x_max)?,
            LossShape::PiecewiseConstant {
                grid: vec![0.0, x_max],
                values: vec![level],
            },
        )
    }

    pub fn with_quadrature(mut self, quadrature: Quadrature) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn quadrature(&self) -> Quadrature {
        self.quadrature
    }

    pub fn domain(&self) -> SeverityDomain {
        self.domain
    }

    pub fn x_max(&self) -> f64 {
        self.domain.x_max()
    }

    pub fn shape(&self) -> &LossShape {
        &self.shape
    }

    /// Multiplies the density by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        positive("scale factor", factor)?;
        let shape = match &self.shape {
            LossShape::PiecewiseConstant { grid, values } => LossShape::PiecewiseConstant {
                grid: grid.clone(),
                values: values.iter().map(|v| v * factor).collect(),
            },
            LossShape::PiecewiseLinear { grid, values } => LossShape::PiecewiseLinear {
                grid: grid.clone(),
                values: values.iter().map(|v| v * factor).collect(),
            },
            LossShape::Exponential { scale, decay } => LossShape::Exponential {
                scale: scale * factor,
                decay: *decay,
            },
            LossShape::TruncatedPower {
                scale,
                exponent,
                cutoff,
            } => LossShape::TruncatedPower {
                scale: scale * factor,
                exponent: *exponent,
                cutoff: *cutoff,
            },
        };
        Ok(Self::new(self.domain, shape)?.with_quadrature(self.quadrature))
    }

    /// Density at `x`. Returns 0 outside `]0, x_max]`.
    pub fn density(&self, x: f64) -> f64 {
        if !self.domain.contains(x) {
            return 0.0;
        }
        match &self.shape {
            LossShape::PiecewiseConstant { grid, values } => values[cell_index(grid, x)],
            LossShape::PiecewiseLinear { grid, values } => {
                let j = cell_index(grid, x);
                let t = (x - grid[j]) / (grid[j + 1] - grid[j]);
                values[j] + t * (values[j + 1] - values[j])
            }
            LossShape::Exponential { scale, decay } => scale * (-x / decay).exp(),
            LossShape::TruncatedPower {
                scale,
                exponent,
                cutoff,
            } => {
                if x <= *cutoff {
                    0.0
                } else {
                    scale * x.powf(-exponent)
                }
            }
        }
    }

    /// Points in `]0, x_max[` where the density or its slope jumps.
    pub fn kinks(&self) -> Vec<f64> {
        match &self.shape {
            LossShape::PiecewiseConstant { grid, .. } | LossShape::PiecewiseLinear { grid, .. } => {
                grid[1..grid.len() - 1].to_vec()
            }
            LossShape::Exponential { .. } => Vec::new(),
            LossShape::TruncatedPower { cutoff, .. } => vec![*cutoff],
        }
    }

    fn check_interval(&self, x1: f64, x2: f64) -> Result<()> {
        if !(x1 >= 0.0 && x1 <= x2 && x2 <= self.x_max()) {
            return Err(invalid(format!(
                "interval ]{x1}, {x2}] is not inside ]0, {}]",
                self.x_max()
            )));
        }
        Ok(())
    }

    /// Expected number of losses per year with value in `]x1, x2]`, from the
    /// closed-form antiderivative of the shape.
    pub fn expected_count(&self, x1: f64, x2: f64) -> Result<f64> {
        self.check_interval(x1, x2)?;
        if x1 == x2 {
            return Ok(0.0);
        }
        let count = match &self.shape {
            LossShape::PiecewiseConstant { grid, values } => {
                let mut acc = 0.0;
                for j in cell_index(grid, x1.max(f64::MIN_POSITIVE))..values.len() {
                    let (lo, hi) = (grid[j].max(x1), grid[j + 1].min(x2));
                    if lo >= x2 {
                        break;
                    }
                    if hi > lo {
                        acc += values[j] * (hi - lo);
                    }
                }
                acc
            }
            LossShape::PiecewiseLinear { grid, .. } => {
                let mut acc = 0.0;
                for j in cell_index(grid, x1.max(f64::MIN_POSITIVE))..grid.len() - 1 {
                    let (lo, hi) = (grid[j].max(x1), grid[j + 1].min(x2));
                    if lo >= x2 {
                        break;
                    }
                    if hi > lo {
                        // Trapezoid is exact on a linear piece; evaluate the
                        // line of cell j at both ends, not the neighbour cell.
                        let line = |x: f64| self.linear_on_cell(j, x);
                        acc += 0.5 * (hi - lo) * (line(lo) + line(hi));
                    }
                }
                acc
            }
            LossShape::Exponential { scale, decay } => {
                scale * decay * (-x1 / decay).exp() * -(-(x2 - x1) / decay).exp_m1()
            }
            LossShape::TruncatedPower {
                scale,
                exponent,
                cutoff,
            } => {
                let (lo, hi) = (x1.max(*cutoff), x2.max(*cutoff));
                if hi <= lo {
                    0.0
                } else if (exponent - 1.0).abs() < 1e-12 {
                    scale * (hi / lo).ln()
                } else {
                    let q = 1.0 - exponent;
                    scale * (hi.powf(q) - lo.powf(q)) / q
                }
            }
        };
        Ok(count)
    }

    fn linear_on_cell(&self, j: usize, x: f64) -> f64 {
        match &self.shape {
            LossShape::PiecewiseLinear { grid, values } => {
                let t = (x - grid[j]) / (grid[j + 1] - grid[j]);
                values[j] + t * (values[j + 1] - values[j])
            }
            _ => unreachable!("linear_on_cell on non-linear shape"),
        }
    }

    /// Total expected number of losses per year, `∫f` over the domain.
    pub fn total_count(&self) -> f64 {
        self.expected_count(0.0, self.x_max())
            .expect("full domain is a valid interval")
    }

    /// `∫₀^{x_max} x·f(x) dx`, the expected yearly total loss.
    pub fn expected_total_loss(&self) -> Result<f64> {
        self.integrate_weighted(|x| x, &[])
    }

    /// `∫₀^{x_max} g(x)·f(x) dx`. The integrand is cut at `breakpoints` and at
    /// the kinks of `f`.
    pub fn integrate_weighted<G>(&self, g: G, breakpoints: &[f64]) -> Result<f64>
    where
        G: Fn(f64) -> f64,
    {
        self.quadrature_weighted(g, breakpoints).map(|r| r.value)
    }

    /// As [`integrate_weighted`](Self::integrate_weighted) over `[lo, hi]`.
    pub fn integrate_weighted_on<G>(&self, g: G, lo: f64, hi: f64, breakpoints: &[f64]) -> Result<f64>
    where
        G: Fn(f64) -> f64,
    {
        self.check_interval(lo, hi)?;
        self.run(g, lo, hi, breakpoints).map(|r| r.value)
    }

    /// Same integral, also returning the error estimate and evaluation count.
    pub fn quadrature_weighted<G>(&self, g: G, breakpoints: &[f64]) -> Result<QuadResult>
    where
        G: Fn(f64) -> f64,
    {
        self.run(g, 0.0, self.x_max(), breakpoints)
    }

    fn run<G>(&self, g: G, lo: f64, hi: f64, breakpoints: &[f64]) -> Result<QuadResult>
    where
        G: Fn(f64) -> f64,
    {
        let mut cuts = self.kinks();
        cuts.extend_from_slice(breakpoints);
        let integrand = |x: f64| {
            let gx = g(x);
            if !gx.is_finite() {
                return f64::NAN;
            }
            gx * self.density(x)
        };
        quadrature::integrate(&integrand, lo, hi, &cuts, self.quadrature)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use proptest::prelude::*;

    fn exp_unit() -> ExpectedLossFunction {
        ExpectedLossFunction::new(
            SeverityDomain::new(1.0).unwrap(),
            LossShape::Exponential { scale: 1.0, decay: 1.0 },
        )
        .unwrap()
    }

    fn battery() -> Vec<ExpectedLossFunction> {
        let d = SeverityDomain::new(2.0).unwrap();
        vec![
            ExpectedLossFunction::new(
                d,
                LossShape::PiecewiseConstant {
                    grid: vec![0.0, 0.5, 1.2, 2.0],
                    values: vec![3.0, 1.0, 0.2],
                },
            )
            .unwrap(),
            ExpectedLossFunction::new(
                d,
                LossShape::PiecewiseLinear {
                    grid: vec![0.0, 0.7, 2.0],
                    values: vec![2.0, 1.0, 0.1],
                },
            )
            .unwrap(),
            ExpectedLossFunction::new(d, LossShape::Exponential { scale: 4.0, decay: 0.5 }).unwrap(),
            ExpectedLossFunction::new(
                d,
                LossShape::TruncatedPower {
                    scale: 0.3,
                    exponent: 1.5,
                    cutoff: 0.05,
                },
            )
            .unwrap(),
        ]
    }

    #[test]
    fn constant_density_count() {
        let f = ExpectedLossFunction::constant(1.0, 2.0).unwrap();
        assert_eq!(f.expected_count(0.25, 0.75).unwrap(), 1.0);
        assert_eq!(f.expected_count(0.3, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn exponential_count_and_total() {
        let f = exp_unit();
        let e1 = (-1f64).exp();
        assert!((f.expected_count(0.0, 1.0).unwrap() - (1.0 - e1)).abs() < 1e-15);
        assert!((f.expected_total_loss().unwrap() - (1.0 - 2.0 * e1)).abs() < 1e-10);
    }

    #[test]
    fn weighted_examples() {
        let f = ExpectedLossFunction::constant(1.0, 1.0).unwrap();
        assert!((f.expected_total_loss().unwrap() - 0.5).abs() < 1e-12);
        let r = f.integrate_weighted(|x| x.exp_m1(), &[]).unwrap();
        assert!((r - (std::f64::consts::E - 2.0)).abs() < 1e-10);
        for f in battery() {
            let ones = f.integrate_weighted(|_| 1.0, &[]).unwrap();
            assert!((ones - f.total_count()).abs() < 1e-10);
        }
    }

    #[test]
    fn piecewise_linear_count_matches_quadrature() {
        for f in battery() {
            for (a, b) in [(0.0, 2.0), (0.1, 0.9), (0.6, 1.9), (0.01, 0.06)] {
                let exact = f.expected_count(a, b).unwrap();
                let quad = f.integrate_weighted_on(|_| 1.0, a, b, &[]).unwrap();
                assert!(
                    (exact - quad).abs() < 1e-10,
                    "{:?} on ]{a},{b}]: {exact} vs {quad}",
                    f.shape()
                );
            }
        }
    }

    #[test]
    fn rejects_bad_intervals_and_shapes() {
        let f = exp_unit();
        assert!(f.expected_count(0.6, 0.5).is_err());
        assert!(f.expected_count(0.0, 1.5).is_err());
        let d = SeverityDomain::new(1.0).unwrap();
        assert!(SeverityDomain::new(0.0).is_err());
        assert!(SeverityDomain::new(f64::INFINITY).is_err());
        assert!(ExpectedLossFunction::new(
            d,
            LossShape::PiecewiseConstant {
                grid: vec![0.0, 0.5, 0.9],
                values: vec![1.0, 1.0]
            }
        )
        .is_err());
        assert!(ExpectedLossFunction::new(
            d,
            LossShape::PiecewiseConstant {
                grid: vec![0.0, 0.5, 1.0],
                values: vec![1.0, 0.0]
            }
        )
        .is_err());
        assert!(ExpectedLossFunction::new(
            d,
            LossShape::TruncatedPower {
                scale: 1.0,
                exponent: 2.0,
                cutoff: 1.0
            }
        )
        .is_err());
    }

    #[test]
    fn non_finite_weight_is_reported() {
        let f = exp_unit();
        let err = f
            .integrate_weighted(|x| if x > 0.9 { f64::INFINITY } else { x }, &[])
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite { x } if x > 0.9));
    }

    #[test]
    fn truncated_power_is_zero_below_cutoff() {
        let f = &battery()[3];
        assert_eq!(f.density(0.04), 0.0);
        assert_eq!(f.expected_count(0.0, 0.05).unwrap(), 0.0);
        assert!(f.expected_count(0.0, 0.06).unwrap() > 0.0);
    }

    #[test]
    fn quadrature_convergence_battery() {
        // Halving cells moves the result by less than the reported estimate.
        for f in battery() {
            for cells in [2usize, 4, 8] {
                let coarse = f
                    .clone()
                    .with_quadrature(Quadrature::Composite { cells })
                    .quadrature_weighted(|x| (x / 0.7).exp(), &[0.3])
                    .unwrap();
                let fine = f
                    .clone()
                    .with_quadrature(Quadrature::Composite { cells: 2 * cells })
                    .quadrature_weighted(|x| (x / 0.7).exp(), &[0.3])
                    .unwrap();
                assert!((fine.value - coarse.value).abs() <= coarse.error + 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn interval_additivity(which in 0usize..4, a in 0.0f64..2.0, b in 0.0f64..2.0, c in 0.0f64..2.0) {
            let f = &battery()[which];
            let mut v = [a, b, c];
            v.sort_by(f64::total_cmp);
            let whole = f.expected_count(v[0], v[2]).unwrap();
            let parts = f.expected_count(v[0], v[1]).unwrap() + f.expected_count(v[1], v[2]).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-9);
        }

        #[test]
        fn positivity(which in 0usize..3, a in 0.0f64..2.0, b in 0.0f64..2.0) {
            let f = &battery()[which];
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let n = f.expected_count(lo, hi).unwrap();
            prop_assert!(n >= 0.0);
            if hi > lo { prop_assert!(n > 0.0); }
        }

        #[test]
        fn weighted_linearity(which in 0usize..4, alpha in -3.0f64..3.0, beta in -3.0f64..3.0, k in 0.2f64..3.0) {
            let f = &battery()[which];
            let g1 = |x: f64| x * x;
            let g2 = |x: f64| (x / k).exp();
            let i1 = f.integrate_weighted(g1, &[]).unwrap();
            let i2 = f.integrate_weighted(g2, &[]).unwrap();
            let both = f.integrate_weighted(|x| alpha * g1(x) + beta * g2(x), &[]).unwrap();
            prop_assert!((both - alpha * i1 - beta * i2).abs() <= 1e-9);
        }
    }
}
