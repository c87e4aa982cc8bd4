//! Exponential disutility, its risk-neutral limit, and certain equivalents of
//! discrete loss distributions.
//!
//! Among disutilities normalized to `U(0) = 0`, only the exponential family
//! and its linear limit make the certain equivalent additive over independent
//! losses. [`additivity_defect`] measures that property for any
//! [`Disutility`] so it can be checked on concrete distributions.

use crate::error::{invalid, Error, Result};

/// Default bound on the atom count of a convolved distribution.
pub const DEFAULT_ATOM_CAP: usize = 1 << 20;

/// A strictly increasing disutility of cost with `U(0) = 0`.
pub trait Disutility {
    fn disutility(&self, loss: f64) -> Result<f64>;

    fn inverse_disutility(&self, u: f64) -> Result<f64>;

    /// `U⁻¹(E[U(l)])`.
    fn certain_equivalent(&self, dist: &DiscreteLossDistribution) -> Result<f64> {
        let mut expected = 0.0;
        for &(l, p) in dist.atoms() {
            expected += p * self.disutility(l)?;
        }
        self.inverse_disutility(expected)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DisutilityParams {
    /// `U(l) = ρ(e^{l/ρ} − 1)` with risk tolerance `ρ > 0`.
    Exponential { rho: f64 },
    /// `U(l) = l`. Kept as its own variant rather than a large `ρ`.
    RiskNeutral,
}

impl DisutilityParams {
    pub fn exponential(rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(invalid(format!(
                "risk tolerance must be positive and finite, got {rho}"
            )));
        }
        Ok(DisutilityParams::Exponential { rho })
    }

    /// Risk tolerance, or `None` for the risk-neutral insured.
    pub fn rho(&self) -> Option<f64> {
        match self {
            DisutilityParams::Exponential { rho } => Some(*rho),
            DisutilityParams::RiskNeutral => None,
        }
    }

    pub fn require_rho(&self) -> Result<f64> {
        self.rho().ok_or(Error::RequiresFiniteRiskTolerance)
    }
}

impl Disutility for DisutilityParams {
    fn disutility(&self, loss: f64) -> Result<f64> {
        if !loss.is_finite() {
            return Err(invalid(format!("loss must be finite, got {loss}")));
        }
        match *self {
            DisutilityParams::RiskNeutral => Ok(loss),
            DisutilityParams::Exponential { rho } => {
                let exponent = loss / rho;
                let u = rho * exponent.exp_m1();
                if u.is_finite() {
                    Ok(u)
                } else {
                    Err(Error::Overflow {
                        context: "disutility",
                        exponent,
                    })
                }
            }
        }
    }

    fn inverse_disutility(&self, u: f64) -> Result<f64> {
        if !u.is_finite() {
            return Err(invalid(format!("disutility value must be finite, got {u}")));
        }
        match *self {
            DisutilityParams::RiskNeutral => Ok(u),
            DisutilityParams::Exponential { rho } => {
                if u <= -rho {
                    return Err(invalid(format!("disutility {u} is outside the range ]-{rho}, inf[")));
                }
                Ok(rho * (u / rho).ln_1p())
            }
        }
    }

    /// Exponential case via max-shifted log-sum-exp: `m + ρ·ln Σ p·e^{(l−m)/ρ}`.
    fn certain_equivalent(&self, dist: &DiscreteLossDistribution) -> Result<f64> {
        let (lo, hi) = dist.support();
        let ce = match *self {
            DisutilityParams::RiskNeutral => dist.mean(),
            DisutilityParams::Exponential { rho } => {
                let sum: f64 = dist.atoms().iter().map(|&(l, p)| p * ((l - hi) / rho).exp()).sum();
                let ce = hi + rho * sum.ln();
                if !ce.is_finite() {
                    return Err(Error::Overflow {
                        context: "certain equivalent",
                        exponent: (hi - lo) / rho,
                    });
                }
                ce
            }
        };
        Ok(ce.clamp(lo, hi))
    }
}

/// Finitely many nonnegative losses with probabilities summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLossDistribution {
    atoms: Vec<(f64, f64)>,
}

impl DiscreteLossDistribution {
    pub fn new(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(invalid("distribution needs at least one atom"));
        }
        let mut total = 0.0;
        for &(l, p) in &atoms {
            if !(l.is_finite() && l >= 0.0) {
                return Err(invalid(format!("loss value {l} must be finite and >= 0")));
            }
            if !(p.is_finite() && p >= 0.0) {
                return Err(invalid(format!("probability {p} must be finite and >= 0")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(DiscreteLossDistribution { atoms })
    }

    pub fn degenerate(loss: f64) -> Result<Self> {
        Self::new(vec![(loss, 1.0)])
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(l, p)| l * p).sum()
    }

    /// Smallest and largest loss carrying positive probability.
    pub fn support(&self) -> (f64, f64) {
        self.atoms
            .iter()
            .filter(|&&(_, p)| p > 0.0)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(l, _)| {
                (lo.min(l), hi.max(l))
            })
    }

    /// Every loss increased by `amount ≥ 0`.
    pub fn shifted(&self, amount: f64) -> Result<Self> {
        Self::new(self.atoms.iter().map(|&(l, p)| (l + amount, p)).collect())
    }

    /// Law of the sum of two independent draws. Coincident sums are merged.
    pub fn convolve(&self, other: &Self, cap: usize) -> Result<Self> {
        let atoms = self.atoms.len().saturating_mul(other.atoms.len());
        if atoms > cap {
            return Err(Error::AtomCap { atoms, cap });
        }
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(atoms);
        for &(a, p) in &self.atoms {
            for &(b, q) in &other.atoms {
                out.push((a + b, p * q));
            }
        }
        out.sort_by(|x, y| x.0.total_cmp(&y.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(out.len());
        for (l, p) in out {
            match merged.last_mut() {
                Some(last) if last.0 == l => last.1 += p,
                _ => merged.push((l, p)),
            }
        }
        Ok(DiscreteLossDistribution { atoms: merged })
    }
}

/// `CE(d1 ⊛ d2) − CE(d1) − CE(d2)` with `⊛` the independent sum.
pub fn additivity_defect<U: Disutility + ?Sized>(
    u: &U,
    d1: &DiscreteLossDistribution,
    d2: &DiscreteLossDistribution,
) -> Result<f64> {
    additivity_defect_capped(u, d1, d2, DEFAULT_ATOM_CAP)
}

pub fn additivity_defect_capped<U: Disutility + ?Sized>(
    u: &U,
    d1: &DiscreteLossDistribution,
    d2: &DiscreteLossDistribution,
    cap: usize,
) -> Result<f64> {
    let sum = d1.convolve(d2, cap)?;
    Ok(u.certain_equivalent(&sum)? - u.certain_equivalent(d1)? - u.certain_equivalent(d2)?)
}
