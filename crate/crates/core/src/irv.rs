//! Instant runoff tabulation and the projected tallies assertions are built from.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::ballot::{CandidateId, Contest, VoteRecord};
use crate::error::{Error, Result};

/// How to pick the eliminated candidate when several share the minimum tally.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TiePolicy {
    #[default]
    LowestIdEliminated,
    ErrorOnTie,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EliminationResult {
    /// Eliminated candidates, first to last.
    pub order: Vec<CandidateId>,
    pub winner: CandidateId,
    pub round_tallies: Vec<BTreeMap<CandidateId, u64>>,
    /// Zero-based rounds in which the tie policy decided the elimination.
    pub tie_rounds: Vec<usize>,
}

/// Credits each record to its highest-ranked standing candidate.
pub fn continuing_tally(
    records: &[VoteRecord],
    standing: &BTreeSet<CandidateId>,
) -> Result<BTreeMap<CandidateId, u64>> {
    if standing.is_empty() {
        return Err(Error::Domain(
            "continuing tally needs at least one standing candidate".into(),
        ));
    }
    let mut tally: BTreeMap<CandidateId, u64> = standing.iter().map(|&c| (c, 0)).collect();
    for r in records {
        if let Some(c) = r.ranking.iter().find(|c| standing.contains(c)) {
            *tally.get_mut(c).unwrap() += 1;
        }
    }
    Ok(tally)
}

pub fn first_pref_count(records: &[VoteRecord], candidate: CandidateId) -> u64 {
    records
        .iter()
        .filter(|r| r.first_preference() == Some(candidate))
        .count() as u64
}

/// Records ranking `l` with no strictly higher preference for `w`.
pub fn max_mentions_excluding(records: &[VoteRecord], l: CandidateId, w: CandidateId) -> u64 {
    records
        .iter()
        .filter(|r| match (r.position(l), r.position(w)) {
            (Some(pl), Some(pw)) => pl < pw,
            (Some(_), None) => true,
            _ => false,
        })
        .count() as u64
}

pub fn tabulate(contest: &Contest, records: &[VoteRecord], tie_policy: TiePolicy) -> Result<EliminationResult> {
    let profile = Profile::new(&contest.roster(), records)?;
    profile.tabulate(tie_policy)
}

/// Dense form of a ballot profile: candidates mapped to indices and
/// identical rankings merged with a multiplicity. Standing sets are
/// bitmasks over the indices.
#[derive(Clone, Debug)]
pub struct Profile {
    candidates: Vec<CandidateId>,
    index: HashMap<CandidateId, usize>,
    ballots: Vec<(Vec<u8>, u64)>,
    total: u64,
}

pub const MAX_PROFILE_CANDIDATES: usize = 64;

impl Profile {
    /// `roster` order fixes the dense indices; ids are sorted first so the
    /// lowest id always has the lowest index.
    pub fn new(roster: &[CandidateId], records: &[VoteRecord]) -> Result<Self> {
        let mut candidates = roster.to_vec();
        candidates.sort();
        candidates.dedup();
        if candidates.is_empty() {
            return Err(Error::Domain("roster is empty".into()));
        }
        if candidates.len() > MAX_PROFILE_CANDIDATES {
            return Err(Error::Domain(format!(
                "at most {MAX_PROFILE_CANDIDATES} candidates are supported"
            )));
        }
        let index: HashMap<CandidateId, usize> = candidates.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        let mut merged: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut ballots: Vec<(Vec<u8>, u64)> = Vec::new();
        for r in records {
            let dense =
                r.ranking
                    .iter()
                    .map(|c| {
                        index.get(c).map(|&i| i as u8).ok_or_else(|| {
                            Error::Validation(format!("ballot {} ranks unknown candidate {c}", r.ballot_id))
                        })
                    })
                    .collect::<Result<Vec<u8>>>()?;
            match merged.get(&dense) {
                Some(&slot) => ballots[slot].1 += 1,
                None => {
                    merged.insert(dense.clone(), ballots.len());
                    ballots.push((dense, 1));
                }
            }
        }
        Ok(Profile {
            candidates,
            index,
            ballots,
            total: records.len() as u64,
        })
    }

    pub fn candidates(&self) -> &[CandidateId] {
        &self.candidates
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn index_of(&self, c: CandidateId) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn mask_of<'a>(&self, ids: impl IntoIterator<Item = &'a CandidateId>) -> u64 {
        ids.into_iter()
            .filter_map(|c| self.index_of(*c))
            .fold(0, |m, i| m | (1 << i))
    }

    pub fn full_mask(&self) -> u64 {
        if self.candidates.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.candidates.len()) - 1
        }
    }

    /// Tallies indexed densely; entries outside `standing` stay zero.
    pub fn tally_mask(&self, standing: u64) -> Vec<u64> {
        let mut tally = vec![0u64; self.candidates.len()];
        for (ranking, count) in &self.ballots {
            if let Some(&c) = ranking.iter().find(|&&c| standing & (1 << c) != 0) {
                tally[c as usize] += count;
            }
        }
        tally
    }

    pub fn first_prefs(&self, c: usize) -> u64 {
        self.ballots
            .iter()
            .filter(|(r, _)| r.first() == Some(&(c as u8)))
            .map(|(_, n)| n)
            .sum()
    }

    pub fn mentions_excluding(&self, l: usize, w: usize) -> u64 {
        self.ballots
            .iter()
            .filter(|(r, _)| {
                match (
                    r.iter().position(|&c| c as usize == l),
                    r.iter().position(|&c| c as usize == w),
                ) {
                    (Some(pl), Some(pw)) => pl < pw,
                    (Some(_), None) => true,
                    _ => false,
                }
            })
            .map(|(_, n)| n)
            .sum()
    }

    pub fn tabulate(&self, tie_policy: TiePolicy) -> Result<EliminationResult> {
        let mut standing = self.full_mask();
        let mut order = Vec::with_capacity(self.candidates.len().saturating_sub(1));
        let mut round_tallies = Vec::new();
        let mut tie_rounds = Vec::new();
        while standing.count_ones() > 1 {
            let round = round_tallies.len();
            let tally = self.tally_mask(standing);
            let live = (0..self.candidates.len()).filter(|&i| standing & (1 << i) != 0);
            let min = live.clone().map(|i| tally[i]).min().unwrap();
            let lowest: Vec<usize> = live.clone().filter(|&i| tally[i] == min).collect();
            round_tallies.push(live.map(|i| (self.candidates[i], tally[i])).collect());
            if lowest.len() > 1 {
                if tie_policy == TiePolicy::ErrorOnTie {
                    return Err(Error::Tie {
                        round,
                        candidates: lowest.iter().map(|&i| self.candidates[i]).collect(),
                    });
                }
                tie_rounds.push(round);
            }
            // Indices follow ascending id, so the first is the lowest id.
            let out = lowest[0];
            standing &= !(1 << out);
            order.push(self.candidates[out]);
        }
        let winner = self.candidates[standing.trailing_zeros() as usize];
        Ok(EliminationResult {
            order,
            winner,
            round_tallies,
            tie_rounds,
        })
    }
}
