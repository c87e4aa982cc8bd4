//! Breakpoint-aware Gauss–Legendre quadrature.
//!
//! The integration range is first cut at every supplied breakpoint so that no
//! cell straddles a kink or jump of the integrand. Each piece is then
//! integrated either adaptively (bisection driven by comparing a cell with its
//! two halves) or with a fixed composite rule.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Points per Gauss–Legendre cell. Exact for polynomials up to degree 19.
const ORDER: usize = 10;

/// How a piece between consecutive breakpoints is integrated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quadrature {
    /// Bisect until a cell and its two halves agree within the cell's share of
    /// `abs_tol`. Fails if `max_depth` bisections do not suffice.
    Adaptive { abs_tol: f64, max_depth: u32 },
    /// Fixed rule: every piece is split into `cells` equal cells. Used where the
    /// same nodes must be reused across nearby integrands (finite differences).
    Composite { cells: usize },
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature::Adaptive {
            abs_tol: 1e-10,
            max_depth: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    /// Sum over accepted cells of |halves − whole|.
    pub error: f64,
    pub evaluations: usize,
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    // Returns (P_n(x), P_n'(x)) by the three-term recurrence.
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Nodes and weights on [-1, 1].
pub(crate) fn gauss_legendre() -> &'static [(f64, f64); ORDER] {
    static RULE: OnceLock<[(f64, f64); ORDER]> = OnceLock::new();
    RULE.get_or_init(|| {
        let mut rule = [(0.0, 0.0); ORDER];
        for (i, slot) in rule.iter_mut().enumerate() {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (ORDER as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre(ORDER, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre(ORDER, x);
            *slot = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        rule
    })
}

struct Integrator<'a, G> {
    g: &'a G,
    evaluations: usize,
}

impl<G: Fn(f64) -> f64> Integrator<'_, G> {
    fn cell(&mut self, lo: f64, hi: f64) -> Result<f64> {
        self.cell_with_mass(lo, hi).map(|(v, _)| v)
    }

    /// Rule value and `∫|g|` by the same rule.
    fn cell_with_mass(&mut self, lo: f64, hi: f64) -> Result<(f64, f64)> {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        let (mut acc, mut mass) = (0.0, 0.0);
        for &(node, weight) in gauss_legendre() {
            let x = mid + half * node;
            let y = (self.g)(x);
            if !y.is_finite() {
                return Err(Error::NonFinite { x });
            }
            acc += weight * y;
            mass += weight * y.abs();
        }
        self.evaluations += ORDER;
        Ok((acc * half, mass * half))
    }

    fn adaptive(&mut self, lo: f64, hi: f64, tol: f64, max_depth: u32) -> Result<(f64, f64)> {
        let whole = self.cell(lo, hi)?;
        // (lo, hi, whole, tol, depth, parent difference)
        let mut stack = vec![(lo, hi, whole, tol, 0u32, f64::INFINITY)];
        let (mut value, mut error) = (0.0, 0.0);
        while let Some((a, b, whole, tol, depth, parent)) = stack.pop() {
            let m = 0.5 * (a + b);
            let (left, left_mass) = self.cell_with_mass(a, m)?;
            let (right, right_mass) = self.cell_with_mass(m, b)?;
            let refined = left + right;
            let diff = (refined - whole).abs();
            let mass = left_mass + right_mass;
            // A few ulps of the cell mass cannot be resolved. Up to a few
            // thousand are accepted once halving stops paying off, which is
            // what evaluation noise (e.g. e^x at large x) looks like.
            let floor = 8.0 * f64::EPSILON * mass;
            let stalled = diff > 0.125 * parent && diff <= 4096.0 * f64::EPSILON * mass;
            if diff <= tol.max(floor) || stalled {
                value += refined;
                error += diff;
            } else if depth >= max_depth || m <= a || m >= b {
                return Err(Error::QuadratureNotConverged {
                    lo: a,
                    hi: b,
                    estimate: diff,
                    tolerance: tol,
                });
            } else {
                stack.push((m, b, right, 0.5 * tol, depth + 1, diff));
                stack.push((a, m, left, 0.5 * tol, depth + 1, diff));
            }
        }
        Ok((value, error))
    }

    fn composite(&mut self, lo: f64, hi: f64, cells: usize) -> Result<(f64, f64)> {
        let width = (hi - lo) / cells as f64;
        let (mut value, mut error) = (0.0, 0.0);
        for k in 0..cells {
            let a = lo + k as f64 * width;
            let b = if k + 1 == cells { hi } else { a + width };
            let m = 0.5 * (a + b);
            let whole = self.cell(a, b)?;
            let refined = self.cell(a, m)? + self.cell(m, b)?;
            value += refined;
            error += (refined - whole).abs();
        }
        Ok((value, error))
    }
}

/// Sorted, deduplicated cut points strictly inside `]lo, hi[`, with the
/// endpoints prepended and appended.
pub(crate) fn pieces(lo: f64, hi: f64, breakpoints: &[f64]) -> Vec<f64> {
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > lo && b < hi).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut out = Vec::with_capacity(cuts.len() + 2);
    out.push(lo);
    out.extend(cuts);
    out.push(hi);
    out
}

/// Integrates `g` over `[lo, hi]`, never letting a cell straddle one of
/// `breakpoints`.
pub fn integrate<G>(g: &G, lo: f64, hi: f64, breakpoints: &[f64], rule: Quadrature) -> Result<QuadResult>
where
    G: Fn(f64) -> f64,
{
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(crate::error::invalid(format!(
            "integration range [{lo}, {hi}] is not an ordered finite interval"
        )));
    }
    let mut integrator = Integrator { g, evaluations: 0 };
    if lo == hi {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let cuts = pieces(lo, hi, breakpoints);
    let (mut value, mut error) = (0.0, 0.0);
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (v, e) = match rule {
            Quadrature::Adaptive { abs_tol, max_depth } => {
                let share = abs_tol * (b - a) / (hi - lo);
                integrator.adaptive(a, b, share, max_depth)?
            }
            Quadrature::Composite { cells } => integrator.composite(a, b, cells.max(1))?,
        };
        value += v;
        error += e;
    }
    Ok(QuadResult {
        value,
        error,
        evaluations: integrator.evaluations,
    })
}
