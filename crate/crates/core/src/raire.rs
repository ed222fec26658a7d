//! Assertion generation.
//!
//! The search works on suffixes of elimination orders: a suffix lists the
//! last candidates eliminated, with the alternative winner last, and
//! stands for every full order ending that way. Each suffix has a
//! cheapest assertion that contradicts it. Suffixes are processed in
//! order of decreasing difficulty; a suffix is either pruned by its own
//! assertion or, when all of its one-longer extensions are cheaper to
//! prune, replaced by them. Suffixes whose assertion is no harder than
//! the hardest assertion already chosen are pruned directly, since that
//! costs nothing extra. Finally, assertions the verifier shows to be
//! unnecessary are dropped, hardest first.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::assertion::{Assertion, AssertionEntry, AssertionSet, AssorterCounts};
use crate::audit::assorter::AuditMode;
use crate::audit::estimate::{estimate_sample_size, AssertionPlan, PlanningConfig};
use crate::audit::risk::KaplanMarkov;
use crate::ballot::{CandidateId, Contest, VoteRecord};
use crate::error::{Error, Result};
use crate::irv::{Profile, TiePolicy};
use crate::tree::{verify_assertions, Roster, Verdict, VerifyOptions};

/// How hard an assertion is to audit; lower is easier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyMeasure {
    /// Estimated draws to confirm.
    #[default]
    SampleSize,
    /// `N / margin`.
    InverseMargin,
}

#[derive(Clone, Debug)]
pub struct GenerationConfig {
    pub mode: AuditMode,
    pub risk_limit: f64,
    pub error_rate: f64,
    /// Cards in the population; defaults to the contest's card bound.
    pub population: Option<u64>,
    pub risk: KaplanMarkov,
    pub measure: DifficultyMeasure,
    pub tie_policy: TiePolicy,
    /// Most suffixes the search may pop before giving up.
    pub node_budget: usize,
    pub verify: VerifyOptions,
}

impl GenerationConfig {
    pub fn new(mode: AuditMode, risk_limit: f64) -> Self {
        GenerationConfig {
            mode,
            risk_limit,
            error_rate: 0.0,
            population: None,
            risk: KaplanMarkov::default(),
            measure: DifficultyMeasure::default(),
            tie_policy: TiePolicy::default(),
            node_budget: 1_000_000,
            verify: VerifyOptions::default(),
        }
    }
}

/// Scores assertions from their assorter counts, with memoization.
pub struct Scorer {
    mode: AuditMode,
    measure: DifficultyMeasure,
    population: u64,
    risk: KaplanMarkov,
    planning: PlanningConfig,
    memo: Mutex<HashMap<AssorterCounts, f64>>,
}

impl Scorer {
    pub fn new(config: &GenerationConfig, population: u64) -> Result<Self> {
        Ok(Scorer {
            mode: config.mode,
            measure: config.measure,
            population,
            risk: config.risk.clone(),
            planning: PlanningConfig::new(config.risk_limit, config.error_rate)?,
            memo: Mutex::new(HashMap::new()),
        })
    }

    /// Infinite for assertions that do not hold on the records.
    pub fn score(&self, assertion: &Assertion, counts: &AssorterCounts) -> Result<f64> {
        if counts.margin() <= 0 {
            return Ok(f64::INFINITY);
        }
        if let Some(&d) = self.memo.lock().unwrap().get(counts) {
            return Ok(d);
        }
        let d = match self.measure {
            DifficultyMeasure::InverseMargin => self.population as f64 / counts.margin() as f64,
            DifficultyMeasure::SampleSize => {
                let plan = AssertionPlan::new(self.mode, assertion, counts, self.population)?;
                estimate_sample_size(&self.risk, &plan, &self.planning)?.as_difficulty()
            }
        };
        self.memo.lock().unwrap().insert(*counts, d);
        Ok(d)
    }
}

/// Difficulty of one assertion on `records`.
pub fn score_difficulty(
    assertion: &Assertion,
    records: &[VoteRecord],
    population: u64,
    config: &GenerationConfig,
) -> Result<f64> {
    Scorer::new(config, population)?.score(assertion, &assertion.counts(records))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generated {
    pub set: AssertionSet,
    /// Largest difficulty in the set.
    pub difficulty: f64,
    pub nodes: usize,
    pub trimmed: usize,
}

#[derive(Clone, Debug)]
struct Scored {
    assertion: Assertion,
    difficulty: f64,
}

struct Node {
    suffix: Vec<CandidateId>,
    best: Option<Scored>,
}

impl Node {
    fn difficulty(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |b| b.difficulty)
    }
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    /// Max-heap order: hardest first, then the lexicographically smallest suffix.
    fn cmp(&self, other: &Self) -> Ordering {
        self.difficulty()
            .total_cmp(&other.difficulty())
            .then_with(|| other.suffix.cmp(&self.suffix))
    }
}

struct Search<'a> {
    roster: Roster,
    candidates: Vec<CandidateId>,
    profile: &'a Profile,
    scorer: &'a Scorer,
    /// True NEB assertions with their difficulty.
    nebs: Vec<Scored>,
}

impl<'a> Search<'a> {
    fn new(contest: &Contest, profile: &'a Profile, scorer: &'a Scorer) -> Result<Self> {
        let candidates = contest.roster();
        let mut nebs = Vec::new();
        for &l in &candidates {
            for &w in &candidates {
                if l == w {
                    continue;
                }
                let assertion = Assertion::Neb { loser: l, winner: w };
                let difficulty = scorer.score(&assertion, &assertion.counts_in(profile))?;
                if difficulty.is_finite() {
                    nebs.push(Scored { assertion, difficulty });
                }
            }
        }
        Ok(Search {
            roster: Roster::new(contest),
            candidates,
            profile,
            scorer,
            nebs,
        })
    }

    /// Cheapest assertion contradicting `suffix`, ties to the first found.
    fn best(&self, suffix: &[CandidateId]) -> Result<Option<Scored>> {
        let mut best: Option<Scored> = None;
        let mut consider = |s: Scored| {
            if best.as_ref().is_none_or(|b| s.difficulty < b.difficulty) {
                best = Some(s);
            }
        };
        for neb in &self.nebs {
            if self.roster.contradicts(&neb.assertion, suffix) {
                consider(neb.clone());
            }
        }
        if suffix.len() >= 2 {
            let first = suffix[0];
            let eliminated: BTreeSet<CandidateId> = self
                .candidates
                .iter()
                .copied()
                .filter(|c| !suffix.contains(c))
                .collect();
            let mut others: Vec<CandidateId> = suffix[1..].to_vec();
            others.sort();
            for c in others {
                let assertion = Assertion::Nen {
                    winner: first,
                    loser: c,
                    eliminated: eliminated.clone(),
                };
                let difficulty = self.scorer.score(&assertion, &assertion.counts_in(self.profile))?;
                if difficulty.is_finite() {
                    consider(Scored { assertion, difficulty });
                }
            }
        }
        Ok(best)
    }

    fn node(&self, suffix: Vec<CandidateId>) -> Result<Node> {
        let best = self.best(&suffix)?;
        Ok(Node { suffix, best })
    }

    fn children(&self, suffix: &[CandidateId]) -> Result<Vec<Node>> {
        self.candidates
            .iter()
            .filter(|c| !suffix.contains(c))
            .map(|&c| {
                let mut child = Vec::with_capacity(suffix.len() + 1);
                child.push(c);
                child.extend_from_slice(suffix);
                self.node(child)
            })
            .collect()
    }
}

/// Generates an irredundant assertion set certifying the reported winner.
pub fn generate_assertions(contest: &Contest, records: &[VoteRecord], config: &GenerationConfig) -> Result<Generated> {
    contest.validate()?;
    contest.validate_records(records)?;
    let reported = contest
        .reported_winner
        .ok_or_else(|| Error::Validation("contest has no reported winner".into()))?;
    let roster = contest.roster();
    if roster.len() > config.verify.max_candidates {
        return Err(Error::RosterTooLarge {
            candidates: roster.len(),
            limit: config.verify.max_candidates,
        });
    }
    let profile = Profile::new(&roster, records)?;
    let computed = profile.tabulate(config.tie_policy)?.winner;
    if computed != reported {
        return Err(Error::WinnerMismatch { reported, computed });
    }
    let population = config
        .population
        .unwrap_or(contest.card_upper_bound)
        .max(records.len() as u64);
    let scorer = Scorer::new(config, population)?;
    let search = Search::new(contest, &profile, &scorer)?;

    let mut chosen: Vec<Scored> = Vec::new();
    let mut lower_bound = 0.0f64;
    let mut frontier = BinaryHeap::new();
    for &c in &roster {
        if c != reported {
            frontier.push(search.node(vec![c])?);
        }
    }
    let mut nodes = 0usize;
    while let Some(node) = frontier.pop() {
        nodes += 1;
        if nodes > config.node_budget {
            return Err(Error::NodeBudgetExceeded(config.node_budget));
        }
        let d = node.difficulty();
        if d <= lower_bound {
            chosen.push(node.best.expect("finite difficulty has an assertion"));
            continue;
        }
        if node.suffix.len() == roster.len() {
            match node.best {
                Some(best) => {
                    lower_bound = lower_bound.max(best.difficulty);
                    chosen.push(best);
                }
                None => return Err(Error::Uncertifiable { order: node.suffix }),
            }
            continue;
        }
        let children = search.children(&node.suffix)?;
        let hardest_child = children.iter().map(Node::difficulty).fold(f64::NEG_INFINITY, f64::max);
        if d.is_infinite() || hardest_child < d {
            frontier.extend(children);
        } else {
            lower_bound = lower_bound.max(d);
            chosen.push(node.best.expect("finite difficulty has an assertion"));
        }
    }

    chosen.sort_by(|a, b| {
        b.difficulty
            .total_cmp(&a.difficulty)
            .then_with(|| a.assertion.cmp(&b.assertion))
    });
    chosen.dedup_by(|a, b| a.assertion == b.assertion);
    let mut kept: Vec<Assertion> = chosen.iter().map(|s| s.assertion.clone()).collect();
    if let Verdict::Failure(orders) = verify_assertions(contest, reported, &kept, config.verify)? {
        return Err(Error::Uncertifiable {
            order: orders.into_iter().next().unwrap_or_default(),
        });
    }
    let before = kept.len();
    let mut i = 0;
    while i < kept.len() {
        let mut without = kept.clone();
        without.remove(i);
        if verify_assertions(contest, reported, &without, config.verify)?.is_certified() {
            kept = without;
        } else {
            i += 1;
        }
    }
    let trimmed = before - kept.len();

    let entries = kept
        .iter()
        .map(|a| {
            let counts = a.counts_in(&profile);
            let mut entry = AssertionEntry::annotated(a.clone(), counts)?;
            entry.difficulty = Some(scorer.score(a, &counts)?);
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let set = AssertionSet {
        contest_id: contest.contest_id.clone(),
        winner: reported,
        entries,
    };
    let difficulty = set.difficulty().unwrap_or(0.0);
    log::debug!(
        "generated {} assertions for {} after {nodes} nodes, {trimmed} trimmed",
        set.len(),
        contest.contest_id
    );
    Ok(Generated {
        set,
        difficulty,
        nodes,
        trimmed,
    })
}
