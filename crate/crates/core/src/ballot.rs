//! Contests, ranked ballot records and ballot manifests.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A candidate identifier, stable across every file of one audit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateId(pub u32);

impl fmt::Display for CandidateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: CandidateId,
    /// Display label only.
    pub name: Option<String>,
}

/// One ballot card's ranking in one contest, highest preference first.
///
/// Serves both as a cast vote record (CVR) and as a manual vote record
/// (MVR) read off the paper card by auditors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub ballot_id: String,
    pub ranking: Vec<CandidateId>,
}

impl VoteRecord {
    /// Builds a record, normalizing the ranking.
    pub fn new(ballot_id: impl Into<String>, ranking: impl IntoIterator<Item = CandidateId>) -> Self {
        let raw: Vec<CandidateId> = ranking.into_iter().collect();
        VoteRecord {
            ballot_id: ballot_id.into(),
            ranking: normalize_ranking(&raw),
        }
    }

    pub fn first_preference(&self) -> Option<CandidateId> {
        self.ranking.first().copied()
    }

    pub fn position(&self, candidate: CandidateId) -> Option<usize> {
        self.ranking.iter().position(|&c| c == candidate)
    }
}

/// Keeps the first occurrence of each candidate and drops later repeats.
pub fn normalize_ranking(raw: &[CandidateId]) -> Vec<CandidateId> {
    let mut seen = HashSet::with_capacity(raw.len());
    raw.iter().copied().filter(|c| seen.insert(*c)).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contest {
    pub contest_id: String,
    pub candidates: Vec<Candidate>,
    pub reported_winner: Option<CandidateId>,
    /// Upper bound on the number of cards that may contain this contest.
    pub card_upper_bound: u64,
}

impl Contest {
    pub fn new(
        contest_id: impl Into<String>,
        ids: impl IntoIterator<Item = u32>,
        reported_winner: Option<u32>,
        card_upper_bound: u64,
    ) -> Result<Self> {
        let contest = Contest {
            contest_id: contest_id.into(),
            candidates: ids
                .into_iter()
                .map(|id| Candidate {
                    id: CandidateId(id),
                    name: None,
                })
                .collect(),
            reported_winner: reported_winner.map(CandidateId),
            card_upper_bound,
        };
        contest.validate()?;
        Ok(contest)
    }

    pub fn roster(&self) -> Vec<CandidateId> {
        self.candidates.iter().map(|c| c.id).collect()
    }

    pub fn roster_set(&self) -> BTreeSet<CandidateId> {
        self.candidates.iter().map(|c| c.id).collect()
    }

    pub fn contains(&self, id: CandidateId) -> bool {
        self.candidates.iter().any(|c| c.id == id)
    }

    pub fn name_of(&self, id: CandidateId) -> Option<&str> {
        self.candidates
            .iter()
            .find(|c| c.id == id)
            .and_then(|c| c.name.as_deref())
    }

    pub fn validate(&self) -> Result<()> {
        if self.contest_id.is_empty() || self.contest_id.contains([',', '\n', '\r']) {
            return Err(Error::Validation(format!(
                "contest id {:?} must be non-empty and free of commas and newlines",
                self.contest_id
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.candidates {
            if !seen.insert(c.id) {
                return Err(Error::Validation(format!("candidate {} listed twice", c.id)));
            }
            if let Some(name) = &c.name {
                if name.contains([',', ':', '\n', '\r']) {
                    return Err(Error::Validation(format!(
                        "candidate name {name:?} contains a reserved character"
                    )));
                }
            }
        }
        if let Some(w) = self.reported_winner {
            if !seen.contains(&w) {
                return Err(Error::Validation(format!("reported winner {w} is not on the roster")));
            }
        }
        if self.card_upper_bound == 0 {
            return Err(Error::Validation("card upper bound must be positive".into()));
        }
        Ok(())
    }

    /// Checks that `records` are consistent with this contest: known
    /// candidates, unique ballot ids, normalized rankings and no more
    /// records than the card upper bound.
    pub fn validate_records(&self, records: &[VoteRecord]) -> Result<()> {
        let roster = self.roster_set();
        let mut ids = HashSet::with_capacity(records.len());
        for r in records {
            if r.ballot_id.is_empty() || r.ballot_id.contains([',', '\n', '\r']) {
                return Err(Error::Validation(format!("invalid ballot id {:?}", r.ballot_id)));
            }
            if !ids.insert(r.ballot_id.as_str()) {
                return Err(Error::Validation(format!("duplicate ballot id {}", r.ballot_id)));
            }
            if let Some(c) = r.ranking.iter().find(|c| !roster.contains(c)) {
                return Err(Error::Validation(format!(
                    "ballot {} ranks unknown candidate {c}",
                    r.ballot_id
                )));
            }
            if normalize_ranking(&r.ranking) != r.ranking {
                return Err(Error::Validation(format!(
                    "ballot {} ranks a candidate twice",
                    r.ballot_id
                )));
            }
        }
        if (records.len() as u64) > self.card_upper_bound {
            return Err(Error::Validation(format!(
                "{} records exceed the card upper bound {}",
                records.len(),
                self.card_upper_bound
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub container_label: String,
    pub card_count: u64,
}

/// Inventory of physical ballot containers, defining the sampling frame.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BallotManifest {
    pub entries: Vec<ManifestEntry>,
}

impl BallotManifest {
    pub fn total_cards(&self) -> u64 {
        self.entries.iter().map(|e| e.card_count).sum()
    }

    /// Cards in the manifest with no matching CVR.
    pub fn phantom_count(&self, cvr_count: usize) -> Result<u64> {
        let total = self.total_cards();
        total.checked_sub(cvr_count as u64).ok_or_else(|| {
            Error::Validation(format!(
                "manifest lists {total} cards but {cvr_count} CVRs were supplied"
            ))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<CandidateId> {
        v.iter().copied().map(CandidateId).collect()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_ranking(&[]), vec![]);
        assert_eq!(normalize_ranking(&ids(&[15, 16, 17])), ids(&[15, 16, 17]));
        assert_eq!(normalize_ranking(&ids(&[16, 15, 16, 17, 15])), ids(&[16, 15, 17]));
    }

    #[test]
    fn winner_must_be_on_roster() {
        assert!(Contest::new("c", [1, 2], Some(3), 10).is_err());
        assert!(Contest::new("c", [1, 1], None, 10).is_err());
        assert!(Contest::new("c", [1, 2], Some(2), 0).is_err());
        assert!(Contest::new("c", [1, 2], Some(2), 10).is_ok());
    }

    #[test]
    fn record_validation() {
        let contest = Contest::new("c", [15, 16], None, 2).unwrap();
        let ok = vec![VoteRecord::new("a", ids(&[15])), VoteRecord::new("b", vec![])];
        contest.validate_records(&ok).unwrap();

        let unknown = vec![VoteRecord::new("a", ids(&[17]))];
        assert!(contest.validate_records(&unknown).is_err());

        let dup = vec![VoteRecord::new("a", ids(&[15])), VoteRecord::new("a", ids(&[16]))];
        assert!(contest.validate_records(&dup).is_err());

        let too_many = vec![
            VoteRecord::new("a", vec![]),
            VoteRecord::new("b", vec![]),
            VoteRecord::new("c", vec![]),
        ];
        assert!(contest.validate_records(&too_many).is_err());
    }

    #[test]
    fn manifest_phantoms() {
        let m = BallotManifest {
            entries: vec![
                ManifestEntry {
                    container_label: "box1".into(),
                    card_count: 3,
                },
                ManifestEntry {
                    container_label: "box2".into(),
                    card_count: 4,
                },
            ],
        };
        assert_eq!(m.total_cards(), 7);
        assert_eq!(m.phantom_count(5).unwrap(), 2);
        assert!(m.phantom_count(8).is_err());
    }
}
