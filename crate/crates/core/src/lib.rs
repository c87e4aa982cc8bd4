//! Value of an insurance policy for a risk-averse insured facing rare losses,
//! and the retention function that maximizes it.
//!
//! Losses follow a compound Poisson model described by an expected loss
//! function `f` on `]0, x_max]`. The insured ranks uncertain yearly costs by
//! exponential disutility `U(l) = ρ(e^{l/ρ} − 1)`; the insurer charges
//! `P = (1 + c)·E[indemnity]`. Under those assumptions the best per-loss
//! retention is the straight deductible `ρ·ln(1 + c)` when `c > 0` and full
//! coverage otherwise.
//!
//! ```
//! use retention::optimizer::optimal_retention_closed_form;
//! use retention::valuation::policy_value;
//! use retention::{DisutilityParams, ExpectedLossFunction, PolicyTerms, RetentionFunction};
//!
//! let f = ExpectedLossFunction::constant(1.0, 1.0)?;
//! let params = DisutilityParams::exponential(1.0)?;
//! let terms = PolicyTerms::new(0.1)?;
//!
//! let full = policy_value(&f, &RetentionFunction::Zero, terms, params)?;
//! assert!((full.value - (std::f64::consts::E - 2.55)).abs() < 1e-12);
//!
//! let best = optimal_retention_closed_form(&f, terms, params)?;
//! assert!((best.deductible - 1.1f64.ln()).abs() < 1e-15);
//! assert!(best.value >= full.value);
//! # Ok::<(), retention::Error>(())
//! ```

// `!(a > b)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coverage;
pub mod disutility;
pub mod error;
pub mod loss_model;
pub mod optimizer;
pub mod process_sim;
pub mod quadrature;
pub mod valuation;

pub use coverage::{Retention, RetentionFunction, StepRetention};
pub use disutility::{DiscreteLossDistribution, Disutility, DisutilityParams};
pub use error::{Error, Result};
pub use loss_model::{ExpectedLossFunction, LossShape, SeverityDomain};
pub use valuation::{PolicyEvaluation, PolicyTerms};
