//! Premium, certain equivalents and policy value for a given retention.
//!
//! With exponential disutility the certain equivalents of the yearly totals
//! reduce to single integrals against `f`:
//!
//! ```text
//! CE(X)     = ρ ∫ f(x) (e^{x/ρ} − 1) dx
//! CE(R + P) = P + ρ ∫ f(x) (e^{r(x)/ρ} − 1) dx
//! V         = CE(X) − CE(R + P)
//! ```

use crate::coverage::Retention;
use crate::disutility::DisutilityParams;
use crate::error::{invalid, Error, Result};
use crate::loss_model::ExpectedLossFunction;

/// Relative agreement required between the two value formulas.
pub const CROSS_CHECK_TOL: f64 = 1e-9;

/// Largest `x/ρ` accepted before `e^{x/ρ}` is deemed out of range.
const MAX_EXPONENT: f64 = 700.0;

/// Pricing rule `P = (1 + c)·E[Ĩ]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyTerms {
    loading_c: f64,
}

impl PolicyTerms {
    pub fn new(loading_c: f64) -> Result<Self> {
        if !(loading_c.is_finite() && loading_c > -1.0) {
            return Err(invalid(format!(
                "loading coefficient must be finite and > -1, got {loading_c}"
            )));
        }
        Ok(PolicyTerms { loading_c })
    }

    pub fn loading(&self) -> f64 {
        self.loading_c
    }

    pub fn markup(&self) -> f64 {
        1.0 + self.loading_c
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyEvaluation {
    pub premium: f64,
    pub ce_loss: f64,
    pub ce_retained_plus_premium: f64,
    pub value: f64,
}

pub(crate) fn check_exponent(f: &ExpectedLossFunction, rho: f64) -> Result<()> {
    let exponent = f.x_max() / rho;
    if exponent > MAX_EXPONENT {
        return Err(Error::Overflow {
            context: "e^{x_max/rho}",
            exponent,
        });
    }
    Ok(())
}

fn cuts<R: Retention + ?Sized>(r: &R) -> Vec<f64> {
    r.kinks()
}

/// `∫ f(x)·(x − r(x)) dx`.
pub fn expected_indemnity<R: Retention + ?Sized>(f: &ExpectedLossFunction, r: &R) -> Result<f64> {
    f.integrate_weighted(|x| x - r.retained(x), &cuts(r))
}

/// `∫ f(x)·r(x) dx`.
pub fn expected_retention<R: Retention + ?Sized>(f: &ExpectedLossFunction, r: &R) -> Result<f64> {
    f.integrate_weighted(|x| r.retained(x), &cuts(r))
}

pub fn premium<R: Retention + ?Sized>(f: &ExpectedLossFunction, r: &R, terms: PolicyTerms) -> Result<f64> {
    Ok(terms.markup() * expected_indemnity(f, r)?)
}

pub fn ce_total_loss(f: &ExpectedLossFunction, params: DisutilityParams) -> Result<f64> {
    match params {
        DisutilityParams::RiskNeutral => f.expected_total_loss(),
        DisutilityParams::Exponential { rho } => {
            check_exponent(f, rho)?;
            f.integrate_weighted(|x| rho * (x / rho).exp_m1(), &[])
        }
    }
}

pub fn ce_retained_plus_premium<R: Retention + ?Sized>(
    f: &ExpectedLossFunction,
    r: &R,
    premium: f64,
    params: DisutilityParams,
) -> Result<f64> {
    let spread = match params {
        DisutilityParams::RiskNeutral => expected_retention(f, r)?,
        DisutilityParams::Exponential { rho } => {
            check_exponent(f, rho)?;
            f.integrate_weighted(|x| rho * (r.retained(x) / rho).exp_m1(), &cuts(r))?
        }
    };
    Ok(premium + spread)
}

/// Value as a single integral of
/// `ρ(e^{x/ρ} − e^{r/ρ}) − (1 + c)(x − r)`, written with `expm1` so that
/// small `x/ρ` keeps full precision.
pub fn value_single_integral<R: Retention + ?Sized>(
    f: &ExpectedLossFunction,
    r: &R,
    terms: PolicyTerms,
    params: DisutilityParams,
) -> Result<f64> {
    let markup = terms.markup();
    match params {
        DisutilityParams::RiskNeutral => Ok(-terms.loading() * expected_indemnity(f, r)?),
        DisutilityParams::Exponential { rho } => {
            check_exponent(f, rho)?;
            f.integrate_weighted(
                |x| {
                    let k = r.retained(x);
                    rho * ((x / rho).exp_m1() - (k / rho).exp_m1()) - markup * (x - k)
                },
                &cuts(r),
            )
        }
    }
}

/// Relative difference scaled by the largest of `scale` and both values.
pub fn relative_gap(a: f64, b: f64, scale: f64) -> f64 {
    let denom = a.abs().max(b.abs()).max(scale.abs());
    if denom == 0.0 {
        0.0
    } else {
        (a - b).abs() / denom
    }
}

/// Policy value `CE(X) − CE(R + P)` with the premium set by `terms`.
///
/// The CE-difference form is authoritative; the single-integral form is
/// computed alongside and must agree to [`CROSS_CHECK_TOL`] relative to the
/// certain equivalents.
pub fn policy_value<R: Retention + ?Sized>(
    f: &ExpectedLossFunction,
    r: &R,
    terms: PolicyTerms,
    params: DisutilityParams,
) -> Result<PolicyEvaluation> {
    let indemnity = expected_indemnity(f, r)?;
    let premium = terms.markup() * indemnity;
    let ce_loss = ce_total_loss(f, params)?;
    let ce_retained = ce_retained_plus_premium(f, r, premium, params)?;
    let (value, other) = match params {
        // The risk-neutral limit is -c·E[Ĩ]; the CE difference is the check.
        DisutilityParams::RiskNeutral => (-terms.loading() * indemnity, ce_loss - ce_retained),
        DisutilityParams::Exponential { .. } => (ce_loss - ce_retained, value_single_integral(f, r, terms, params)?),
    };
    if relative_gap(value, other, ce_loss.abs().max(ce_retained.abs())) > CROSS_CHECK_TOL {
        return Err(Error::CrossCheck {
            context: "policy value formulas",
            first: value,
            second: other,
        });
    }
    Ok(PolicyEvaluation {
        premium,
        ce_loss,
        ce_retained_plus_premium: ce_retained,
        value,
    })
}

/// Loading `c̄` at which the policy value for `r` crosses zero:
/// `ρ∫f(e^{x/ρ} − e^{r/ρ}) / ∫f(x − r) − 1`.
pub fn breakeven_loading<R: Retention + ?Sized>(
    f: &ExpectedLossFunction,
    r: &R,
    params: DisutilityParams,
) -> Result<f64> {
    let indemnity = expected_indemnity(f, r)?;
    if !(indemnity > 0.0) {
        return Err(Error::ZeroIndemnity);
    }
    match params {
        DisutilityParams::RiskNeutral => Ok(0.0),
        DisutilityParams::Exponential { rho } => {
            check_exponent(f, rho)?;
            let gain = f.integrate_weighted(
                |x| rho * ((x / rho).exp_m1() - (r.retained(x) / rho).exp_m1()),
                &cuts(r),
            )?;
            Ok(gain / indemnity - 1.0)
        }
    }
}
