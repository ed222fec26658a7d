#![allow(dead_code)]

use std::collections::BTreeSet;

use irv_rla::{Assertion, CandidateId, Contest, VoteRecord};
use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::Rng;

pub const LOFTUS: u32 = 15;
pub const DAUTCH: u32 = 16;
pub const TUNG: u32 = 17;
pub const BOUDIN: u32 = 18;

/// Ballot types of a synthetic four-candidate vote-by-mail contest.
pub const PILOT_TYPES: &[(&[u32], usize)] = &[
    (&[LOFTUS], 52_000),
    (&[LOFTUS, BOUDIN], 9_000),
    (&[LOFTUS, TUNG], 8_000),
    (&[BOUDIN], 50_000),
    (&[BOUDIN, LOFTUS], 7_000),
    (&[BOUDIN, TUNG], 6_500),
    (&[TUNG], 9_000),
    (&[TUNG, LOFTUS], 13_000),
    (&[TUNG, BOUDIN], 11_500),
    (&[TUNG, DAUTCH], 2_500),
    (&[DAUTCH], 5_000),
    (&[DAUTCH, TUNG, LOFTUS], 5_000),
    (&[DAUTCH, TUNG, BOUDIN], 4_500),
    (&[DAUTCH, LOFTUS], 4_000),
    (&[DAUTCH, BOUDIN], 3_500),
    (&[DAUTCH, TUNG], 1_500),
];

/// 192,000 ballots, eliminated in the order 16, 17, 18 with 15 winning.
pub fn pilot_replica() -> (Contest, Vec<VoteRecord>) {
    let mut records = Vec::new();
    for (ranking, count) in PILOT_TYPES {
        for _ in 0..*count {
            records.push(VoteRecord::new(
                format!("vbm-{:06}", records.len() + 1),
                ranking.iter().map(|&c| CandidateId(c)),
            ));
        }
    }
    let mut contest = Contest::new(
        "sf-da-2019-vbm",
        [LOFTUS, DAUTCH, TUNG, BOUDIN],
        Some(LOFTUS),
        records.len() as u64,
    )
    .unwrap();
    for (c, name) in contest
        .candidates
        .iter_mut()
        .zip(["Loftus", "Dautch", "Tung", "Boudin"])
    {
        c.name = Some(name.to_string());
    }
    (contest, records)
}

/// Round-by-round IRV on plain rankings: count each ballot for its top
/// continuing candidate, drop the lowest (smallest id on ties), repeat.
pub fn literal_irv(candidates: &[u32], ballots: &[Vec<u32>]) -> (Vec<u32>, u32) {
    let mut continuing: Vec<u32> = candidates.to_vec();
    let mut order = Vec::new();
    while continuing.len() > 1 {
        let mut counts: Vec<(u32, usize)> = continuing.iter().map(|&c| (c, 0)).collect();
        for b in ballots {
            for pref in b {
                if let Some(slot) = counts.iter_mut().find(|(c, _)| c == pref) {
                    slot.1 += 1;
                    break;
                }
            }
        }
        let fewest = counts.iter().map(|&(_, n)| n).min().unwrap();
        let out = counts
            .iter()
            .filter(|&&(_, n)| n == fewest)
            .map(|&(c, _)| c)
            .min()
            .unwrap();
        continuing.retain(|&c| c != out);
        order.push(out);
    }
    (order, continuing[0])
}

/// Every winner reachable under some resolution of elimination ties.
pub fn winners_under_any_tiebreak(candidates: &[u32], ballots: &[Vec<u32>]) -> BTreeSet<u32> {
    let mut out = BTreeSet::new();
    let mut stack = vec![candidates.to_vec()];
    while let Some(continuing) = stack.pop() {
        if continuing.len() == 1 {
            out.insert(continuing[0]);
            continue;
        }
        let mut counts: Vec<(u32, usize)> = continuing.iter().map(|&c| (c, 0)).collect();
        for b in ballots {
            if let Some(top) = b.iter().find(|c| continuing.contains(c)) {
                counts.iter_mut().find(|(c, _)| c == top).unwrap().1 += 1;
            }
        }
        let fewest = counts.iter().map(|&(_, n)| n).min().unwrap();
        for &(c, n) in &counts {
            if n == fewest {
                stack.push(continuing.iter().copied().filter(|&x| x != c).collect());
            }
        }
    }
    out
}

/// A random ballot over `candidates`: a random-length prefix of a
/// shuffled roster, occasionally blank.
pub fn random_ballot(rng: &mut impl Rng, candidates: &[u32]) -> Vec<u32> {
    let mut c = candidates.to_vec();
    c.shuffle(rng);
    let len = rng.random_range(0..=c.len());
    c.truncate(len);
    c
}

/// A skewed random profile: ballots drawn from a few weighted types so
/// that eliminations are usually decisive.
pub fn random_profile(rng: &mut impl Rng, candidates: &[u32], ballots: usize) -> Vec<Vec<u32>> {
    let types: Vec<Vec<u32>> = (0..rng.random_range(2..=8))
        .map(|_| random_ballot(rng, candidates))
        .collect();
    let weights: Vec<u32> = types.iter().map(|_| rng.random_range(1..=20)).collect();
    let total: u32 = weights.iter().sum();
    (0..ballots)
        .map(|_| {
            if rng.random_bool(0.2) {
                return random_ballot(rng, candidates);
            }
            let mut pick = rng.random_range(0..total);
            for (t, &w) in types.iter().zip(&weights) {
                if pick < w {
                    return t.clone();
                }
                pick -= w;
            }
            unreachable!()
        })
        .collect()
}

pub fn to_records(ballots: &[Vec<u32>]) -> Vec<VoteRecord> {
    ballots
        .iter()
        .enumerate()
        .map(|(i, b)| VoteRecord::new(format!("b{i}"), b.iter().map(|&c| CandidateId(c))))
        .collect()
}

pub fn ids(v: &[u32]) -> Vec<CandidateId> {
    v.iter().map(|&c| CandidateId(c)).collect()
}

/// Whether `assertion` rules out the complete elimination order `order`
/// (first eliminated first, winner last), judged on the order itself.
pub fn rules_out(assertion: &Assertion, order: &[CandidateId]) -> bool {
    let pos = |c: &CandidateId| order.iter().position(|x| x == c).unwrap();
    match assertion {
        Assertion::Neb { loser, winner } => pos(winner) < pos(loser),
        Assertion::Nen { winner, eliminated, .. } => {
            let k = eliminated.len();
            let gone: BTreeSet<CandidateId> = order[..k].iter().copied().collect();
            k + 1 < order.len() && &gone == eliminated && order[k] == *winner
        }
    }
}

/// Alternative-winner orders no assertion rules out.
pub fn survivors(roster: &[CandidateId], winner: CandidateId, assertions: &[Assertion]) -> BTreeSet<Vec<CandidateId>> {
    roster
        .iter()
        .copied()
        .permutations(roster.len())
        .filter(|o| *o.last().unwrap() != winner)
        .filter(|o| !assertions.iter().any(|a| rules_out(a, o)))
        .collect()
}
