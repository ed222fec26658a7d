//! Sample-size planning.
//!
//! An estimate runs the risk function on a deterministic stream that looks
//! like the reported outcome and reports the first draw at which the
//! p-value falls to the risk limit.
//!
//! - Comparison: every draw is the clean value `1 / (2 - v)` except for
//!   one-vote overstatements (`omega = 1/2`) at rate `r`, placed at the
//!   draws where `floor(i * r)` increases.
//! - Polling: the reported distribution of assorter values over all `N`
//!   cards (phantoms as zeros), interleaved so every prefix tracks the
//!   proportions as closely as possible, with ties going to the lower
//!   value. Draws picked by the same `floor(i * r)` rule are lowered by
//!   one half.

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::assertion::{Assertion, AssorterCounts, AssorterValue};
use crate::audit::assorter::{assorter_ratio, AuditMode, ComparisonAssorter};
use crate::audit::risk::{RiskFunction, RiskProcess};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleSize {
    Draws(u64),
    NotAttainable,
}

impl SampleSize {
    pub fn draws(self) -> Option<u64> {
        match self {
            SampleSize::Draws(n) => Some(n),
            SampleSize::NotAttainable => None,
        }
    }

    /// Difficulty score: the draw count, or infinity.
    pub fn as_difficulty(self) -> f64 {
        self.draws().map_or(f64::INFINITY, |n| n as f64)
    }
}

impl std::fmt::Display for SampleSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SampleSize::Draws(n) => write!(f, "{n}"),
            SampleSize::NotAttainable => f.write_str("not attainable"),
        }
    }
}

pub const DEFAULT_PLANNING_CAP: u64 = 1_000_000;

/// Draws examined when the stream does not drift toward rejection.
const STALLED_PREFIX: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanningConfig {
    pub risk_limit: f64,
    pub error_rate: f64,
    pub cap: u64,
}

impl PlanningConfig {
    pub fn new(risk_limit: f64, error_rate: f64) -> Result<Self> {
        if !(risk_limit > 0.0 && risk_limit < 1.0) {
            return Err(Error::Validation(format!("risk limit {risk_limit} is not in (0, 1)")));
        }
        if !(0.0..=1.0).contains(&error_rate) {
            return Err(Error::Validation(format!("error rate {error_rate} is not in [0, 1]")));
        }
        Ok(PlanningConfig {
            risk_limit,
            error_rate,
            cap: DEFAULT_PLANNING_CAP,
        })
    }
}

/// What an assertion's planning stream is built from.
#[derive(Clone, Debug, PartialEq)]
pub enum AssertionPlan {
    Comparison(ComparisonAssorter),
    Polling { counts: AssorterCounts, population: u64 },
}

impl AssertionPlan {
    pub fn new(mode: AuditMode, assertion: &Assertion, counts: &AssorterCounts, population: u64) -> Result<Self> {
        if population < counts.total() {
            return Err(Error::Validation(format!(
                "population {population} is smaller than the {} CVRs",
                counts.total()
            )));
        }
        Ok(match mode {
            AuditMode::Comparison => {
                AssertionPlan::Comparison(ComparisonAssorter::new(assertion.clone(), counts, population)?)
            }
            AuditMode::Polling => AssertionPlan::Polling {
                counts: *counts,
                population,
            },
        })
    }

    pub fn upper(&self) -> BigRational {
        match self {
            AssertionPlan::Comparison(b) => b.upper(),
            AssertionPlan::Polling { .. } => BigRational::from_integer(1.into()),
        }
    }

    /// Polling counts over the whole population, phantoms as zeros.
    fn population_counts(counts: &AssorterCounts, population: u64) -> [u64; 3] {
        [counts.zeros + (population - counts.total()), counts.halves, counts.ones]
    }

    /// The planning stream, without end.
    pub fn stream(&self, error_rate: f64) -> Box<dyn Iterator<Item = BigRational> + '_> {
        let errors = ErrorSchedule::new(error_rate);
        match self {
            AssertionPlan::Comparison(b) => {
                let (clean, erred) = (b.clean(), b.value_for(1));
                Box::new(errors.map(move |e| if e { erred.clone() } else { clean.clone() }))
            }
            AssertionPlan::Polling { counts, population } => {
                let values = [
                    assorter_ratio(AssorterValue::Zero),
                    assorter_ratio(AssorterValue::Half),
                    assorter_ratio(AssorterValue::One),
                ];
                let interleave = Interleave::new(Self::population_counts(counts, *population));
                Box::new(interleave.zip(errors).map(move |(k, e)| {
                    let k = if e { k.saturating_sub(1) } else { k };
                    values[k].clone()
                }))
            }
        }
    }

    /// Mean log growth per draw of the planning stream, if known.
    fn drift<R: RiskFunction>(&self, risk: &R, error_rate: f64) -> Option<f64> {
        let weighted: Vec<(f64, BigRational)> = match self {
            AssertionPlan::Comparison(b) => vec![(1.0 - error_rate, b.clean()), (error_rate, b.value_for(1))],
            AssertionPlan::Polling { counts, population } => {
                let [z, h, o] = Self::population_counts(counts, *population).map(|c| c as f64 / *population as f64);
                let r = error_rate;
                vec![
                    (z + h * r, assorter_ratio(AssorterValue::Zero)),
                    (h * (1.0 - r) + o * r, assorter_ratio(AssorterValue::Half)),
                    (o * (1.0 - r), assorter_ratio(AssorterValue::One)),
                ]
            }
        };
        let mut drift = 0.0;
        for (w, x) in weighted {
            if w > 0.0 {
                drift += w * risk.log_growth(&x)?;
            }
        }
        Some(drift)
    }
}

/// True at the draws where `floor(i * r)` increases.
struct ErrorSchedule {
    rate: f64,
    i: u64,
}

impl ErrorSchedule {
    fn new(rate: f64) -> Self {
        ErrorSchedule { rate, i: 0 }
    }
}

impl Iterator for ErrorSchedule {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        self.i += 1;
        let i = self.i as f64;
        Some((i * self.rate).floor() > ((i - 1.0) * self.rate).floor())
    }
}

/// Largest-remainder interleaving of value indices 0, 1, 2.
struct Interleave {
    counts: [u64; 3],
    total: u128,
    emitted: [u128; 3],
    i: u128,
}

impl Interleave {
    fn new(counts: [u64; 3]) -> Self {
        Interleave {
            counts,
            total: counts.iter().map(|&c| c as u128).sum(),
            emitted: [0; 3],
            i: 0,
        }
    }
}

impl Iterator for Interleave {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.total == 0 {
            return None;
        }
        self.i += 1;
        // deficit_k = i * count_k / total - emitted_k, scaled by total
        let mut best = 0;
        let mut best_deficit = i128::MIN;
        for k in 0..3 {
            if self.counts[k] == 0 {
                continue;
            }
            let d = (self.i * self.counts[k] as u128) as i128 - (self.emitted[k] * self.total) as i128;
            if d > best_deficit {
                best = k;
                best_deficit = d;
            }
        }
        self.emitted[best] += 1;
        Some(best)
    }
}

/// Draws until `process` reaches the risk limit on `stream`.
pub fn draws_to_confirm<P: RiskProcess>(
    mut process: P,
    stream: impl Iterator<Item = BigRational>,
    risk_limit: f64,
    limit: u64,
) -> Result<SampleSize> {
    if process.p_value() <= risk_limit {
        return Ok(SampleSize::Draws(0));
    }
    for (n, x) in (1..=limit).zip(stream) {
        process.observe(&x)?;
        if process.p_value() <= risk_limit {
            return Ok(SampleSize::Draws(n));
        }
        if process.is_exhausted() {
            break;
        }
    }
    Ok(SampleSize::NotAttainable)
}

fn search_limit(drift: Option<f64>, risk_limit: f64, cap: u64) -> u64 {
    match drift {
        Some(d) if d > 0.0 => {
            let needed = (1.0 / risk_limit).ln() / d;
            if needed > cap as f64 {
                0
            } else {
                cap.min((2.0 * needed) as u64 + STALLED_PREFIX)
            }
        }
        Some(_) => cap.min(STALLED_PREFIX),
        None => cap,
    }
}

/// Draws needed from the start of an audit.
pub fn estimate_sample_size<R: RiskFunction>(
    risk: &R,
    plan: &AssertionPlan,
    config: &PlanningConfig,
) -> Result<SampleSize> {
    let limit = search_limit(plan.drift(risk, config.error_rate), config.risk_limit, config.cap);
    draws_to_confirm(
        risk.start(plan.upper()),
        plan.stream(config.error_rate),
        config.risk_limit,
        limit,
    )
}

/// Further draws needed from the current state of a running test.
pub fn estimate_additional<R: RiskFunction>(
    risk: &R,
    process: &R::Process,
    plan: &AssertionPlan,
    config: &PlanningConfig,
) -> Result<SampleSize> {
    let limit = search_limit(plan.drift(risk, config.error_rate), config.risk_limit, config.cap);
    draws_to_confirm(
        process.clone(),
        plan.stream(config.error_rate),
        config.risk_limit,
        limit,
    )
}
