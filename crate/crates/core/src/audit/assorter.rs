//! Stream values fed to the risk function.
//!
//! Polling audits use the assorter value of the manual reading directly.
//! Comparison audits use the overstatement assorter
//!
//! ```text
//! B = (1 - omega) / (2 - v),   omega = A(cvr) - A(mvr),   v = margin / N
//! ```
//!
//! where the margin is computed over the CVRs and phantom cards count as
//! neither side. A phantom card, or a missing card, is scored at its
//! worst case: `omega = 1` for a phantom and `omega = A(cvr)` for a card
//! that has a CVR but cannot be found.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::assertion::{Assertion, AssorterCounts, AssorterValue};
use crate::ballot::{normalize_ranking, CandidateId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditMode {
    #[default]
    Comparison,
    Polling,
}

impl std::str::FromStr for AuditMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "comparison" => Ok(AuditMode::Comparison),
            "polling" => Ok(AuditMode::Polling),
            _ => Err(Error::Validation(format!("unknown audit mode {s:?}"))),
        }
    }
}

impl std::fmt::Display for AuditMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AuditMode::Comparison => "comparison",
            AuditMode::Polling => "polling",
        })
    }
}

/// What the audit team read from a card.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reading {
    /// A ranking, possibly empty for a blank card.
    Ranking {
        ranking: Vec<CandidateId>,
    },
    NotFound,
}

impl Reading {
    pub fn ranking(ids: impl IntoIterator<Item = CandidateId>) -> Self {
        Reading::Ranking {
            ranking: normalize_ranking(&ids.into_iter().collect::<Vec<_>>()),
        }
    }

    pub fn is_blank(&self) -> bool {
        matches!(self, Reading::Ranking { ranking } if ranking.is_empty())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MvrRecord {
    pub ballot_id: String,
    pub reading: Reading,
}

/// Overstatement in units of 1/2, from -2 to 2.
pub fn overstatement(assertion: &Assertion, cvr: Option<&[CandidateId]>, mvr: &Reading) -> i64 {
    let Some(cvr) = cvr else {
        return 2;
    };
    let reported = assertion.assorter_value(cvr).halves() as i64;
    match mvr {
        Reading::NotFound => reported,
        Reading::Ranking { ranking } => reported - assertion.assorter_value(ranking).halves() as i64,
    }
}

/// Polling stream value; phantom and missing cards score zero.
pub fn polling_value(assertion: &Assertion, mvr: Option<&Reading>) -> AssorterValue {
    match mvr {
        Some(Reading::Ranking { ranking }) => assertion.assorter_value(ranking),
        _ => AssorterValue::Zero,
    }
}

/// Overstatement assorter for one assertion.
#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonAssorter {
    pub assertion: Assertion,
    /// Reported margin over the CVRs.
    pub margin: i64,
    pub population: u64,
}

impl ComparisonAssorter {
    pub fn new(assertion: Assertion, counts: &AssorterCounts, population: u64) -> Result<Self> {
        let margin = counts.margin();
        if population < counts.total() {
            return Err(Error::Validation(format!(
                "population {population} is smaller than the {} CVRs",
                counts.total()
            )));
        }
        if margin <= 0 {
            return Err(Error::Domain(format!(
                "assertion {assertion} does not hold on the CVRs (margin {margin})"
            )));
        }
        Ok(ComparisonAssorter {
            assertion,
            margin,
            population,
        })
    }

    /// Diluted margin `v = margin / N`.
    pub fn diluted_margin(&self) -> BigRational {
        BigRational::new(self.margin.into(), self.population.into())
    }

    /// `B` for an overstatement of `omega_halves / 2`.
    pub fn value_for(&self, omega_halves: i64) -> BigRational {
        let n = BigInt::from(self.population);
        // (1 - w/2) / (2 - m/N) = (2 - w) N / (2 (2N - m))
        BigRational::new(
            BigInt::from(2 - omega_halves) * &n,
            BigInt::from(2) * (BigInt::from(2) * &n - BigInt::from(self.margin)),
        )
    }

    pub fn value(&self, cvr: Option<&[CandidateId]>, mvr: &Reading) -> BigRational {
        self.value_for(overstatement(&self.assertion, cvr, mvr))
    }

    /// Largest possible value, at an understatement of one.
    pub fn upper(&self) -> BigRational {
        self.value_for(-2)
    }

    /// Value of a correctly recorded card.
    pub fn clean(&self) -> BigRational {
        self.value_for(0)
    }
}

pub fn assorter_ratio(value: AssorterValue) -> BigRational {
    match value {
        AssorterValue::Zero => BigRational::zero(),
        AssorterValue::Half => BigRational::new(1.into(), 2.into()),
        AssorterValue::One => BigRational::from_integer(1.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn ids(v: &[u32]) -> Vec<CandidateId> {
        v.iter().map(|&i| CandidateId(i)).collect()
    }

    #[test]
    fn comparison_values() {
        let a = Assertion::neb(2, 1);
        let counts = AssorterCounts {
            ones: 60,
            halves: 0,
            zeros: 40,
        };
        let b = ComparisonAssorter::new(a, &counts, 100).unwrap();
        // v = 0.2
        assert_eq!(b.diluted_margin(), r(1, 5));
        assert_eq!(b.clean(), r(5, 9));
        assert_eq!(b.upper(), r(10, 9));
        let cvr = ids(&[1]);
        assert_eq!(b.value(Some(&cvr), &Reading::ranking(ids(&[1]))), r(5, 9));
        assert_eq!(b.value(Some(&cvr), &Reading::ranking(ids(&[2]))), r(0, 1));
        assert_eq!(b.value(Some(&cvr), &Reading::ranking(ids(&[]))), r(5, 18));
        assert_eq!(b.value(Some(&cvr), &Reading::NotFound), r(0, 1));
        assert_eq!(b.value(Some(&ids(&[2])), &Reading::NotFound), r(5, 9));
        assert_eq!(b.value(None, &Reading::ranking(ids(&[1]))), r(0, 1));
    }

    #[test]
    fn refuses_non_positive_margin() {
        let counts = AssorterCounts {
            ones: 1,
            halves: 0,
            zeros: 1,
        };
        assert!(ComparisonAssorter::new(Assertion::neb(2, 1), &counts, 2).is_err());
        let counts = AssorterCounts {
            ones: 3,
            halves: 0,
            zeros: 1,
        };
        assert!(ComparisonAssorter::new(Assertion::neb(2, 1), &counts, 3).is_err());
    }

    #[test]
    fn polling_values() {
        let a = Assertion::neb(2, 1);
        assert_eq!(polling_value(&a, None), AssorterValue::Zero);
        assert_eq!(polling_value(&a, Some(&Reading::NotFound)), AssorterValue::Zero);
        assert_eq!(
            polling_value(&a, Some(&Reading::ranking(ids(&[1, 2])))),
            AssorterValue::One
        );
        assert_eq!(
            polling_value(&a, Some(&Reading::ranking(ids(&[])))),
            AssorterValue::Half
        );
    }

    #[test]
    fn readings_normalize() {
        assert_eq!(Reading::ranking(ids(&[3, 1, 3])), Reading::ranking(ids(&[3, 1])));
        assert!(Reading::ranking(ids(&[])).is_blank());
        assert!(!Reading::NotFound.is_blank());
    }
}
