//! Seeded Monte Carlo simulation of the yearly compound Poisson loss process.
//!
//! The severity range is cut into cells; each cell receives an independent
//! Poisson count with rate `∫_cell f`, and each counted loss gets a severity
//! inside its cell.
//!
//! Reproducibility: year `y` of a run with seed `s` draws from
//! `ChaCha8Rng::seed_from_u64(s)` switched to stream `y` (rand_chacha 0.9).
//! Years therefore replay independently, and the parallel runner returns the
//! same numbers as a sequential loop. Poisson counts use sequential inversion
//! for rates below 10 and Hörmann's PTRS transformed rejection above.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};
use statrs::function::gamma::ln_gamma;

use crate::coverage::Retention;
use crate::disutility::DisutilityParams;
use crate::error::{invalid, Error, Result};
use crate::loss_model::ExpectedLossFunction;

/// Where a counted loss lands inside its severity cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeverityRule {
    /// Cell midpoint, reproducing the discretized sums exactly.
    Midpoint,
    /// Uniform on the half-open cell; no discretization bias.
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub years: usize,
    /// Ascending cell boundaries from 0 to `x_max`.
    pub cells: Vec<f64>,
    pub severity_rule: SeverityRule,
}

impl SimConfig {
    /// `cells` equal-width cells on `]0, x_max]`.
    pub fn uniform(seed: u64, years: usize, x_max: f64, cells: usize, severity_rule: SeverityRule) -> Self {
        let n = cells.max(1);
        let mut grid: Vec<f64> = (0..=n).map(|k| x_max * k as f64 / n as f64).collect();
        grid[n] = x_max;
        SimConfig {
            seed,
            years,
            cells: grid,
            severity_rule,
        }
    }

    pub fn validate(&self, f: &ExpectedLossFunction) -> Result<()> {
        if self.years == 0 {
            return Err(invalid("simulation needs at least one year"));
        }
        let c = &self.cells;
        if c.len() < 2 || c[0] != 0.0 || c[c.len() - 1] != f.x_max() {
            return Err(invalid(format!(
                "simulation cells must run from 0 to x_max = {}",
                f.x_max()
            )));
        }
        if let Some(w) = c.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(invalid(format!("simulation cell ]{}, {}] is empty", w[0], w[1])));
        }
        Ok(())
    }
}

/// One simulated year.
#[derive(Debug, Clone, PartialEq)]
pub struct YearSample {
    /// Loss values, grouped by cell in ascending cell order.
    pub events: Vec<f64>,
    /// Number of losses in each cell.
    pub counts: Vec<u64>,
}

impl YearSample {
    pub fn total(&self) -> f64 {
        self.events.iter().sum()
    }
}

/// Poisson draw with mean `rate ≥ 0`.
pub fn sample_poisson<R: Rng + ?Sized>(rng: &mut R, rate: f64) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    if rate < 10.0 {
        // Sequential search of the CDF.
        let u: f64 = rng.random();
        let mut k = 0u64;
        let mut p = (-rate).exp();
        let mut cdf = p;
        while u > cdf && k < 1000 {
            k += 1;
            p *= rate / k as f64;
            cdf += p;
        }
        return k;
    }
    // PTRS (Hörmann 1993).
    let slam = rate.sqrt();
    let loglam = rate.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let v_r = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + rate + 0.43).floor();
        if us >= 0.07 && v <= v_r {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        if v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln() <= -rate + k * loglam - ln_gamma(k + 1.0) {
            return k as u64;
        }
    }
}

/// Order-independent sum: fixed binary splitting of the slice.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_samples(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = pairwise_sum(v) / n;
        let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
        let var = if v.len() > 1 {
            pairwise_sum(&dev) / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            std_error: (var / n).sqrt(),
        }
    }

    /// `mean ± z·std_error`.
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.mean - z * self.std_error, self.mean + z * self.std_error)
    }

    pub fn contains(&self, value: f64, z: f64) -> bool {
        let (lo, hi) = self.interval(z);
        value >= lo && value <= hi
    }
}

/// Monte Carlo means of the yearly total loss, retention and indemnity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalsEstimate {
    pub loss: Estimate,
    pub retained: Estimate,
    pub indemnity: Estimate,
}

/// Monte Carlo certain equivalents. `mean` holds the CE estimate and
/// `std_error` its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertainEquivalentEstimates {
    pub loss: Estimate,
    pub retained_plus_premium: Estimate,
}

/// Per-year totals `(X, R, I)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YearTotals {
    pub loss: f64,
    pub retained: f64,
    pub indemnity: f64,
}

pub struct Simulator<'a> {
    f: &'a ExpectedLossFunction,
    cfg: &'a SimConfig,
    rates: Vec<f64>,
    base: ChaCha8Rng,
}

impl<'a> Simulator<'a> {
    pub fn new(f: &'a ExpectedLossFunction, cfg: &'a SimConfig) -> Result<Self> {
        cfg.validate(f)?;
        let rates = cfg
            .cells
            .windows(2)
            .map(|w| f.expected_count(w[0], w[1]))
            .collect::<Result<Vec<_>>>()?;
        if let Some(r) = rates.iter().find(|r| !r.is_finite()) {
            return Err(invalid(format!("cell rate {r} is not finite")));
        }
        Ok(Simulator {
            f,
            cfg,
            rates,
            base: ChaCha8Rng::seed_from_u64(cfg.seed),
        })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn config(&self) -> &SimConfig {
        self.cfg
    }

    pub fn loss_function(&self) -> &ExpectedLossFunction {
        self.f
    }

    fn rng_for(&self, year: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        rng.set_stream(year);
        rng.set_word_pos(0);
        rng
    }

    pub fn sample_year(&self, year: u64) -> YearSample {
        let mut rng = self.rng_for(year);
        let mut counts = Vec::with_capacity(self.rates.len());
        let mut events = Vec::new();
        for (j, &rate) in self.rates.iter().enumerate() {
            let n = sample_poisson(&mut rng, rate);
            counts.push(n);
            let (lo, hi) = (self.cfg.cells[j], self.cfg.cells[j + 1]);
            for _ in 0..n {
                let x = match self.cfg.severity_rule {
                    SeverityRule::Midpoint => 0.5 * (lo + hi),
                    // u ∈ [0, 1) maps onto ]lo, hi].
                    SeverityRule::Uniform => hi - rng.random::<f64>() * (hi - lo),
                };
                events.push(x.clamp(f64::MIN_POSITIVE.max(lo), hi));
            }
        }
        YearSample { events, counts }
    }

    pub fn year_totals<R: Retention + ?Sized>(&self, year: u64, r: &R) -> YearTotals {
        let sample = self.sample_year(year);
        let (mut loss, mut retained, mut indemnity) = (0.0, 0.0, 0.0);
        for &x in &sample.events {
            let k = r.retained(x);
            loss += x;
            retained += k;
            indemnity += x - k;
        }
        YearTotals {
            loss,
            retained,
            indemnity,
        }
    }

    /// All years, in year order. Computed in parallel.
    pub fn all_year_totals<R: Retention + Sync + ?Sized>(&self, r: &R) -> Vec<YearTotals> {
        (0..self.cfg.years as u64)
            .into_par_iter()
            .map(|y| self.year_totals(y, r))
            .collect()
    }

    pub fn estimate_totals<R: Retention + Sync + ?Sized>(&self, r: &R) -> TotalsEstimate {
        summarize_totals(&self.all_year_totals(r))
    }

    pub fn estimate_certain_equivalents<R: Retention + Sync + ?Sized>(
        &self,
        r: &R,
        premium: f64,
        params: DisutilityParams,
    ) -> Result<CertainEquivalentEstimates> {
        certain_equivalents_from(&self.all_year_totals(r), premium, params)
    }
}

pub fn summarize_totals(years: &[YearTotals]) -> TotalsEstimate {
    let pick = |sel: fn(&YearTotals) -> f64| years.iter().map(sel).collect::<Vec<_>>();
    TotalsEstimate {
        loss: Estimate::from_samples(&pick(|t| t.loss)),
        retained: Estimate::from_samples(&pick(|t| t.retained)),
        indemnity: Estimate::from_samples(&pick(|t| t.indemnity)),
    }
}

/// `ρ·ln(mean e^{T/ρ})` with the max-shift, and delta-method standard error
/// `ρ·sd(w) / (√N·mean(w))` where `w = e^{(T − max)/ρ}`.
pub fn exponential_ce(totals: &[f64], rho: f64) -> Result<Estimate> {
    if totals.is_empty() {
        return Err(invalid("no samples"));
    }
    let shift = totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::Overflow {
            context: "simulated yearly total",
            exponent: shift / rho,
        });
    }
    let w: Vec<f64> = totals.iter().map(|t| ((t - shift) / rho).exp()).collect();
    let moment = Estimate::from_samples(&w);
    if !(moment.mean > 0.0) {
        let min = totals.iter().copied().fold(f64::INFINITY, f64::min);
        return Err(Error::Overflow {
            context: "shifted exponential moment underflowed",
            exponent: (min - shift) / rho,
        });
    }
    Ok(Estimate {
        mean: shift + rho * moment.mean.ln(),
        std_error: rho * moment.std_error / moment.mean,
    })
}

pub fn certain_equivalents_from(
    years: &[YearTotals],
    premium: f64,
    params: DisutilityParams,
) -> Result<CertainEquivalentEstimates> {
    let rho = params.require_rho()?;
    let loss: Vec<f64> = years.iter().map(|t| t.loss).collect();
    let retained: Vec<f64> = years.iter().map(|t| t.retained).collect();
    let ce_loss = exponential_ce(&loss, rho)?;
    let ce_retained = exponential_ce(&retained, rho)?;
    Ok(CertainEquivalentEstimates {
        loss: ce_loss,
        retained_plus_premium: Estimate {
            mean: ce_retained.mean + premium,
            std_error: ce_retained.std_error,
        },
    })
}

pub fn sample_year(f: &ExpectedLossFunction, cfg: &SimConfig, year: u64) -> Result<YearSample> {
    Ok(Simulator::new(f, cfg)?.sample_year(year))
}

pub fn estimate_totals<R: Retention + Sync + ?Sized>(
    f: &ExpectedLossFunction,
    r: &R,
    cfg: &SimConfig,
) -> Result<TotalsEstimate> {
    Ok(Simulator::new(f, cfg)?.estimate_totals(r))
}

pub fn estimate_certain_equivalents<R: Retention + Sync + ?Sized>(
    f: &ExpectedLossFunction,
    r: &R,
    premium: f64,
    params: DisutilityParams,
    cfg: &SimConfig,
) -> Result<CertainEquivalentEstimates> {
    Simulator::new(f, cfg)?.estimate_certain_equivalents(r, premium, params)
}

/// Characteristic function of the loss count in `]x1, x2]`:
/// `exp((e^{it} − 1)·∫_{x1}^{x2} f)`.
pub fn poisson_char_fn(f: &ExpectedLossFunction, x1: f64, x2: f64, t: f64) -> Result<Complex64> {
    let rate = f.expected_count(x1, x2)?;
    let z = Complex64::new(t.cos() - 1.0, t.sin()) * rate;
    Ok(z.exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodnessOfFit {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of `counts` against Poisson(`rate`). Adjacent
/// outcomes are pooled until every bin expects at least 5 observations.
pub fn poisson_goodness_of_fit(counts: &[u64], rate: f64) -> Result<GoodnessOfFit> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid(format!("goodness of fit needs a positive rate, got {rate}")));
    }
    let n = counts.len() as f64;
    let law = Poisson::new(rate).map_err(|e| invalid(e.to_string()))?;
    let top = counts
        .iter()
        .copied()
        .max()
        .unwrap_or(0)
        .max((rate + 10.0 * rate.sqrt() + 10.0) as u64);
    let mut observed = vec![0.0f64; top as usize + 1];
    for &c in counts {
        observed[c as usize] += 1.0;
    }
    // Bins are [start, end) over k; the last one is open to +∞.
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    let mut tail_mass = 1.0;
    for k in 0..=top {
        let p = law.pmf(k);
        obs += observed[k as usize];
        exp += n * p;
        tail_mass -= p;
        if exp >= 5.0 && n * tail_mass.max(0.0) >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    exp += n * tail_mass.max(0.0);
    match bins.last_mut() {
        Some(last) if exp < 5.0 => {
            last.0 += obs;
            last.1 += exp;
        }
        _ => bins.push((obs, exp)),
    }
    if bins.len() < 2 {
        return Err(invalid("too few samples for a chi-square test"));
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = bins.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| invalid(e.to_string()))?;
    Ok(GoodnessOfFit {
        statistic,
        degrees_of_freedom: dof,
        p_value: 1.0 - chi.cdf(statistic),
    })
}
