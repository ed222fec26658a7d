//! Audit state and its transitions.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::assertion::AssertionSet;
use crate::audit::assorter::{assorter_ratio, overstatement, polling_value, AuditMode, MvrRecord, Reading};
use crate::audit::estimate::{estimate_additional, estimate_sample_size, AssertionPlan, PlanningConfig, SampleSize};
use crate::audit::risk::{KaplanMarkov, RiskFunction, RiskProcess};
use crate::audit::sampling::{draw_sample, is_phantom_id, Draw};
use crate::ballot::{Contest, VoteRecord};
use crate::error::{Error, Result};
use crate::irv::{tabulate, TiePolicy};
use crate::tree::{export_trees, verify_assertion_set, TreeDocument, Verdict, VerifyOptions};

/// Parameters fixed when an audit starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSpec {
    pub risk_limit: f64,
    pub mode: AuditMode,
    pub seed: String,
    /// Cards in the population, including cards without a CVR.
    pub population: u64,
    /// Assumed one-vote overstatement rate for planning.
    pub error_rate: f64,
    pub risk: KaplanMarkov,
    pub max_candidates: usize,
}

impl AuditSpec {
    pub fn new(risk_limit: f64, mode: AuditMode, seed: impl Into<String>, population: u64) -> Self {
        AuditSpec {
            risk_limit,
            mode,
            seed: seed.into(),
            population,
            error_rate: 0.0,
            risk: KaplanMarkov::default(),
            max_candidates: VerifyOptions::default().max_candidates,
        }
    }

    pub fn planning(&self) -> Result<PlanningConfig> {
        PlanningConfig::new(self.risk_limit, self.error_rate)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditStatus {
    InProgress,
    Confirmed,
    Escalated,
}

impl std::fmt::Display for AuditStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AuditStatus::InProgress => "in_progress",
            AuditStatus::Confirmed => "confirmed",
            AuditStatus::Escalated => "escalated",
        })
    }
}

/// Risk measurement for one assertion.
#[derive(Clone, Debug, PartialEq)]
pub struct AssertionTrack {
    pub stream: Vec<BigRational>,
    /// p-value after each stream value.
    pub p_history: Vec<f64>,
    /// Overstatement tallies for -1, -1/2, 0, 1/2, 1 (comparison only).
    pub overstatements: [u64; 5],
}

impl AssertionTrack {
    pub fn p_value(&self) -> f64 {
        self.p_history.last().copied().unwrap_or(1.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditState {
    pub draws: Vec<Draw>,
    pub entries: BTreeMap<String, Reading>,
    pub second_entries: BTreeMap<String, Reading>,
    /// Draws already folded into the streams.
    pub consumed: usize,
    pub tracks: Vec<AssertionTrack>,
    pub status: AuditStatus,
}

pub struct Audit<R: RiskFunction = KaplanMarkov> {
    spec: AuditSpec,
    risk: R,
    contest: Contest,
    assertions: AssertionSet,
    cvrs: Vec<VoteRecord>,
    cvr_ids: Vec<String>,
    cvr_index: HashMap<String, usize>,
    plans: Vec<AssertionPlan>,
    processes: Vec<R::Process>,
    state: AuditState,
}

impl Audit<KaplanMarkov> {
    pub fn new(spec: AuditSpec, contest: Contest, cvrs: Vec<VoteRecord>, assertions: AssertionSet) -> Result<Self> {
        let risk = spec.risk.clone();
        Audit::with_risk(spec, contest, cvrs, assertions, risk)
    }
}

impl<R: RiskFunction> Audit<R> {
    /// Checks the inputs and starts an audit with no draws.
    ///
    /// Refuses to start unless the CVRs tabulate to the reported winner,
    /// every assertion holds on the CVRs, and the assertions rule out
    /// every other winner.
    pub fn with_risk(
        spec: AuditSpec,
        contest: Contest,
        cvrs: Vec<VoteRecord>,
        mut assertions: AssertionSet,
        risk: R,
    ) -> Result<Self> {
        spec.planning()?;
        contest.validate()?;
        for e in &assertions.entries {
            e.assertion.validate(&contest)?;
        }
        contest.validate_records(&cvrs)?;
        let reported = contest
            .reported_winner
            .ok_or_else(|| Error::Validation("contest has no reported winner".into()))?;
        if assertions.contest_id != contest.contest_id {
            return Err(Error::Validation(format!(
                "assertions are for contest {:?}, CVRs for {:?}",
                assertions.contest_id, contest.contest_id
            )));
        }
        if assertions.winner != reported {
            return Err(Error::WinnerMismatch {
                reported,
                computed: assertions.winner,
            });
        }
        if (cvrs.len() as u64) > spec.population {
            return Err(Error::Validation(format!(
                "{} CVRs exceed the population of {} cards",
                cvrs.len(),
                spec.population
            )));
        }
        if let Some(r) = cvrs.iter().find(|r| is_phantom_id(&r.ballot_id)) {
            return Err(Error::Validation(format!(
                "ballot id {:?} uses the reserved phantom prefix",
                r.ballot_id
            )));
        }
        let computed = tabulate(&contest, &cvrs, TiePolicy::default())?.winner;
        if computed != reported {
            return Err(Error::WinnerMismatch { reported, computed });
        }
        let options = VerifyOptions {
            max_candidates: spec.max_candidates,
        };
        if let Verdict::Failure(unpruned) = verify_assertion_set(&contest, &assertions, options)? {
            return Err(Error::NotCertified { unpruned });
        }
        assertions.annotate(&cvrs)?;
        let plans = assertions
            .entries
            .iter()
            .map(|e| {
                let counts = e.assertion.counts(&cvrs);
                if counts.margin() <= 0 {
                    return Err(Error::Validation(format!(
                        "assertion {} does not hold on the CVRs (margin {})",
                        e.assertion,
                        counts.margin()
                    )));
                }
                AssertionPlan::new(spec.mode, &e.assertion, &counts, spec.population)
            })
            .collect::<Result<Vec<_>>>()?;
        let processes = plans.iter().map(|p| risk.start(p.upper())).collect();
        let cvr_ids: Vec<String> = cvrs.iter().map(|r| r.ballot_id.clone()).collect();
        let cvr_index = cvr_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        let tracks = plans
            .iter()
            .map(|_| AssertionTrack {
                stream: Vec::new(),
                p_history: Vec::new(),
                overstatements: [0; 5],
            })
            .collect();
        Ok(Audit {
            spec,
            risk,
            contest,
            assertions,
            cvrs,
            cvr_ids,
            cvr_index,
            plans,
            processes,
            state: AuditState {
                draws: Vec::new(),
                entries: BTreeMap::new(),
                second_entries: BTreeMap::new(),
                consumed: 0,
                tracks,
                status: AuditStatus::InProgress,
            },
        })
    }

    pub fn spec(&self) -> &AuditSpec {
        &self.spec
    }

    pub fn contest(&self) -> &Contest {
        &self.contest
    }

    pub fn assertions(&self) -> &AssertionSet {
        &self.assertions
    }

    pub fn cvrs(&self) -> &[VoteRecord] {
        &self.cvrs
    }

    pub fn state(&self) -> &AuditState {
        &self.state
    }

    pub fn status(&self) -> AuditStatus {
        self.state.status
    }

    pub fn confirmed(&self) -> Vec<bool> {
        self.state
            .tracks
            .iter()
            .map(|t| t.p_value() <= self.spec.risk_limit)
            .collect()
    }

    /// Per-assertion draws needed from the start of the audit.
    pub fn initial_estimates(&self) -> Result<Vec<SampleSize>> {
        let config = self.spec.planning()?;
        self.plans
            .iter()
            .map(|plan| estimate_sample_size(&self.risk, plan, &config))
            .collect()
    }

    /// Per-assertion stream values still needed from the current state.
    pub fn additional_estimates(&self) -> Result<Vec<SampleSize>> {
        let config = self.spec.planning()?;
        self.plans
            .iter()
            .zip(&self.processes)
            .map(|(plan, process)| estimate_additional(&self.risk, process, plan, &config))
            .collect()
    }

    /// Further draws suggested beyond those already drawn.
    pub fn next_round(&self) -> Result<SampleSize> {
        let pending = (self.state.draws.len() - self.state.consumed) as u64;
        Ok(match self.additional_estimates()?.into_iter().max() {
            Some(SampleSize::Draws(n)) => SampleSize::Draws(n.saturating_sub(pending)),
            Some(SampleSize::NotAttainable) => SampleSize::NotAttainable,
            None => SampleSize::Draws(0),
        })
    }

    /// The draws `draw(count)` would add, without adding them.
    pub fn preview_draws(&self, count: u64) -> Result<Vec<Draw>> {
        if self.state.status != AuditStatus::InProgress {
            return Err(Error::Domain(format!(
                "audit is {}; no further draws",
                self.state.status
            )));
        }
        draw_sample(
            &self.spec.seed,
            &self.cvr_ids,
            self.spec.population,
            self.state.draws.len() as u64,
            count,
        )
    }

    pub fn draw(&mut self, count: u64) -> Result<Vec<Draw>> {
        let draws = self.preview_draws(count)?;
        self.state.draws.extend(draws.iter().cloned());
        self.advance()?;
        Ok(draws)
    }

    /// One row per distinct drawn card, in order of first draw.
    pub fn ballot_statuses(&self) -> Vec<BallotStatus> {
        let mut rows: Vec<BallotStatus> = Vec::new();
        let mut at: HashMap<&str, usize> = HashMap::new();
        for d in &self.state.draws {
            if let Some(&i) = at.get(d.ballot_id.as_str()) {
                rows[i].draws.push(d.index);
                continue;
            }
            let entry = if d.phantom {
                EntryStatus::Phantom
            } else {
                match self.state.entries.get(&d.ballot_id) {
                    None => EntryStatus::Pending,
                    Some(Reading::NotFound) => EntryStatus::NotFound,
                    Some(Reading::Ranking { .. }) => EntryStatus::Entered,
                }
            };
            at.insert(&d.ballot_id, rows.len());
            rows.push(BallotStatus {
                ballot_id: d.ballot_id.clone(),
                draws: vec![d.index],
                status: entry,
            });
        }
        rows
    }

    /// Ballot ids drawn but not yet entered, first draw first.
    pub fn pending(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.state
            .draws
            .iter()
            .filter(|d| !d.phantom && !self.state.entries.contains_key(&d.ballot_id))
            .filter(|d| seen.insert(d.ballot_id.clone()))
            .map(|d| d.ballot_id.clone())
            .collect()
    }

    fn is_drawn(&self, ballot_id: &str) -> bool {
        self.state.draws.iter().any(|d| !d.phantom && d.ballot_id == ballot_id)
    }

    fn check_reading(&self, record: &MvrRecord) -> Result<()> {
        if let Reading::Ranking { ranking } = &record.reading {
            if let Some(c) = ranking.iter().find(|c| !self.contest.contains(**c)) {
                return Err(Error::Validation(format!(
                    "entry for {} ranks unknown candidate {c}",
                    record.ballot_id
                )));
            }
        }
        Ok(())
    }

    /// Validates a batch of entries without applying it.
    pub fn check_entries(&self, records: &[MvrRecord]) -> Result<()> {
        let mut batch = BTreeSet::new();
        for r in records {
            if !self.is_drawn(&r.ballot_id) {
                return Err(Error::NotDrawn(r.ballot_id.clone()));
            }
            if self.state.entries.contains_key(&r.ballot_id) || !batch.insert(r.ballot_id.as_str()) {
                return Err(Error::DuplicateEntry(r.ballot_id.clone()));
            }
            self.check_reading(r)?;
        }
        Ok(())
    }

    /// Records manual readings. The batch is applied entirely or not at all.
    pub fn enter(&mut self, records: &[MvrRecord]) -> Result<()> {
        self.check_entries(records)?;
        for r in records {
            self.state.entries.insert(r.ballot_id.clone(), r.reading.clone());
        }
        self.advance()
    }

    pub fn check_second_entry(&self, record: &MvrRecord) -> Result<()> {
        if !self.state.entries.contains_key(&record.ballot_id) {
            return Err(Error::Validation(format!(
                "ballot {} has no first entry to check",
                record.ballot_id
            )));
        }
        self.check_reading(record)
    }

    /// Records an independent second reading and reports whether it
    /// agrees with the first. Only the first entry feeds the audit.
    pub fn second_entry(&mut self, record: &MvrRecord) -> Result<bool> {
        self.check_second_entry(record)?;
        self.state
            .second_entries
            .insert(record.ballot_id.clone(), record.reading.clone());
        Ok(self.state.entries[&record.ballot_id] == record.reading)
    }

    /// Ballots whose second entry disagrees with the first.
    pub fn entry_mismatches(&self) -> Vec<String> {
        self.state
            .second_entries
            .iter()
            .filter(|(id, r)| self.state.entries.get(*id) != Some(r))
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Operator decision to stop sampling and count by hand.
    pub fn escalate(&mut self) -> Result<()> {
        if self.state.status == AuditStatus::Confirmed {
            return Err(Error::Domain("audit is already confirmed".into()));
        }
        self.state.status = AuditStatus::Escalated;
        Ok(())
    }

    /// Folds every newly resolved draw, in draw order, into the streams.
    fn advance(&mut self) -> Result<()> {
        while let Some(draw) = self.state.draws.get(self.state.consumed) {
            let reading = if draw.phantom {
                None
            } else {
                match self.state.entries.get(&draw.ballot_id) {
                    Some(r) => Some(r),
                    None => break,
                }
            };
            let cvr = if draw.phantom {
                None
            } else {
                Some(self.cvrs[self.cvr_index[&draw.ballot_id]].ranking.as_slice())
            };
            for i in 0..self.plans.len() {
                let track = &mut self.state.tracks[i];
                let x = match &self.plans[i] {
                    AssertionPlan::Comparison(b) => {
                        let omega = overstatement(&b.assertion, cvr, reading.unwrap_or(&Reading::NotFound));
                        track.overstatements[(omega + 2) as usize] += 1;
                        b.value_for(omega)
                    }
                    AssertionPlan::Polling { .. } => {
                        assorter_ratio(polling_value(&self.assertions.entries[i].assertion, reading))
                    }
                };
                self.processes[i].observe(&x)?;
                track.stream.push(x);
                track.p_history.push(self.processes[i].p_value());
            }
            self.state.consumed += 1;
        }
        if self.state.status == AuditStatus::InProgress
            && !self.state.tracks.is_empty()
            && self.state.tracks.iter().all(|t| t.p_value() <= self.spec.risk_limit)
        {
            self.state.status = AuditStatus::Confirmed;
        }
        Ok(())
    }

    /// Elimination trees annotated with which assertions are confirmed.
    pub fn trees(&self) -> Result<TreeDocument> {
        let options = VerifyOptions {
            max_candidates: self.spec.max_candidates,
        };
        export_trees(&self.contest, &self.assertions, &self.confirmed(), options)
    }

    pub fn snapshot(&self) -> Result<AuditSnapshot> {
        let estimates = self.additional_estimates()?;
        let confirmed = self.confirmed();
        let explanations = self.assertions.explanations();
        let assertions = self
            .assertions
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let track = &self.state.tracks[i];
                AssertionProgress {
                    index: i,
                    assertion: e.assertion.to_string(),
                    explanation: explanations[i].clone(),
                    margin: e.margin.unwrap_or_default(),
                    p_value: track.p_value(),
                    confirmed: confirmed[i],
                    p_history: track.p_history.clone(),
                    overstatements: match self.spec.mode {
                        AuditMode::Comparison => Some(track.overstatements),
                        AuditMode::Polling => None,
                    },
                    estimated_additional: estimates[i],
                }
            })
            .collect();
        Ok(AuditSnapshot {
            contest_id: self.contest.contest_id.clone(),
            winner: self.assertions.winner.0,
            mode: self.spec.mode,
            risk_limit: self.spec.risk_limit,
            population: self.spec.population,
            status: self.state.status,
            draws: self.state.draws.len(),
            consumed: self.state.consumed,
            entered: self.state.entries.len(),
            pending: self.pending(),
            ballots: self.ballot_statuses(),
            entry_mismatches: self.entry_mismatches(),
            next_round: self.next_round()?,
            assertions,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryStatus {
    Pending,
    Entered,
    NotFound,
    Phantom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallotStatus {
    pub ballot_id: String,
    /// Draw numbers that selected this card.
    pub draws: Vec<u64>,
    pub status: EntryStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertionProgress {
    pub index: usize,
    pub assertion: String,
    pub explanation: String,
    pub margin: i64,
    pub p_value: f64,
    pub confirmed: bool,
    pub p_history: Vec<f64>,
    pub overstatements: Option<[u64; 5]>,
    pub estimated_additional: SampleSize,
}

/// Serializable summary of an audit's progress.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSnapshot {
    pub contest_id: String,
    pub winner: u32,
    pub mode: AuditMode,
    pub risk_limit: f64,
    pub population: u64,
    pub status: AuditStatus,
    pub draws: usize,
    pub consumed: usize,
    pub entered: usize,
    pub pending: Vec<String>,
    pub ballots: Vec<BallotStatus>,
    pub entry_mismatches: Vec<String>,
    pub next_round: SampleSize,
    pub assertions: Vec<AssertionProgress>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertion::{Assertion, AssertionEntry};
    use crate::ballot::CandidateId;

    fn two_way(mode: AuditMode) -> Audit {
        let contest = Contest::new("u", [1, 2], Some(1), 10).unwrap();
        let records: Vec<VoteRecord> = (0..10)
            .map(|i| VoteRecord::new(format!("b{i}"), [CandidateId(if i < 8 { 1 } else { 2 })]))
            .collect();
        let set = AssertionSet {
            contest_id: "u".into(),
            winner: CandidateId(1),
            entries: vec![AssertionEntry::bare(Assertion::neb(2, 1))],
        };
        Audit::new(AuditSpec::new(0.05, mode, "unit", 10), contest, records, set).unwrap()
    }

    #[test]
    fn next_round_discounts_pending_draws() {
        let mut audit = two_way(AuditMode::Comparison);
        let SampleSize::Draws(n) = audit.next_round().unwrap() else {
            panic!("clean comparison is attainable")
        };
        audit.draw(2).unwrap();
        assert_eq!(audit.next_round().unwrap(), SampleSize::Draws(n - 2));
        assert_eq!(audit.snapshot().unwrap().pending.len(), audit.pending().len());
    }

    #[test]
    fn polling_blank_reading_scores_half() {
        let mut audit = two_way(AuditMode::Polling);
        audit.draw(1).unwrap();
        let id = audit.pending()[0].clone();
        audit
            .enter(&[MvrRecord {
                ballot_id: id,
                reading: Reading::ranking([]),
            }])
            .unwrap();
        assert_eq!(
            audit.state().tracks[0].stream,
            vec![BigRational::new(1.into(), 2.into())]
        );
        assert_eq!(audit.state().tracks[0].p_value(), 1.0);
        assert!(audit.snapshot().unwrap().assertions[0].overstatements.is_none());
    }

    #[test]
    fn escalated_audits_take_no_draws() {
        let mut audit = two_way(AuditMode::Comparison);
        audit.escalate().unwrap();
        assert_eq!(audit.status().to_string(), "escalated");
        assert!(matches!(audit.draw(1), Err(Error::Domain(_))));
    }
}
