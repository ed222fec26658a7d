//! Not-eliminated-before and not-eliminated-next assertions, their
//! assorters, and the assertion file format.
//!
//! Every assertion reduces to "the mean of an assorter over all cards is
//! greater than 1/2", with assorter values in {0, 1/2, 1}. The assorter
//! upper bound is therefore 1 for both kinds.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::ballot::{CandidateId, Contest, VoteRecord};
use crate::error::{Error, Result};
use crate::irv::Profile;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Assertion {
    /// `winner` cannot be eliminated before `loser`: first preferences for
    /// `winner` exceed every mention of `loser` not preceded by `winner`.
    Neb { loser: CandidateId, winner: CandidateId },
    /// With exactly `eliminated` gone, `winner` out-tallies `loser`, so
    /// `winner` cannot be the next candidate eliminated.
    Nen {
        winner: CandidateId,
        loser: CandidateId,
        eliminated: BTreeSet<CandidateId>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AssorterValue {
    Zero,
    Half,
    One,
}

impl AssorterValue {
    /// The value in units of 1/2.
    pub fn halves(self) -> u64 {
        match self {
            AssorterValue::Zero => 0,
            AssorterValue::Half => 1,
            AssorterValue::One => 2,
        }
    }

    pub fn as_ratio(self) -> Ratio<u64> {
        Ratio::new(self.halves(), 2)
    }
}

/// Counts of cards by assorter value.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AssorterCounts {
    pub ones: u64,
    pub halves: u64,
    pub zeros: u64,
}

impl AssorterCounts {
    pub fn total(&self) -> u64 {
        self.ones + self.halves + self.zeros
    }

    /// Sum of (2a - 1) over the cards.
    pub fn margin(&self) -> i64 {
        self.ones as i64 - self.zeros as i64
    }

    pub fn mean(&self) -> Result<Ratio<u64>> {
        if self.total() == 0 {
            return Err(Error::Domain("assorter mean of an empty record list".into()));
        }
        Ok(Ratio::new(2 * self.ones + self.halves, 2 * self.total()))
    }
}

impl Assertion {
    pub fn neb(loser: u32, winner: u32) -> Self {
        Assertion::Neb {
            loser: CandidateId(loser),
            winner: CandidateId(winner),
        }
    }

    pub fn nen(winner: u32, loser: u32, eliminated: impl IntoIterator<Item = u32>) -> Self {
        Assertion::Nen {
            winner: CandidateId(winner),
            loser: CandidateId(loser),
            eliminated: eliminated.into_iter().map(CandidateId).collect(),
        }
    }

    /// The candidate scored 1 by the assorter.
    pub fn winner(&self) -> CandidateId {
        match self {
            Assertion::Neb { winner, .. } | Assertion::Nen { winner, .. } => *winner,
        }
    }

    /// The candidate scored 0 by the assorter.
    pub fn loser(&self) -> CandidateId {
        match self {
            Assertion::Neb { loser, .. } | Assertion::Nen { loser, .. } => *loser,
        }
    }

    pub fn validate(&self, contest: &Contest) -> Result<()> {
        let (w, l) = (self.winner(), self.loser());
        if w == l {
            return Err(Error::Validation(format!(
                "assertion {self} compares a candidate with itself"
            )));
        }
        for c in [w, l] {
            if !contest.contains(c) {
                return Err(Error::Validation(format!(
                    "assertion {self} names unknown candidate {c}"
                )));
            }
        }
        if let Assertion::Nen { eliminated, .. } = self {
            if eliminated.contains(&w) || eliminated.contains(&l) {
                return Err(Error::Validation(format!(
                    "assertion {self} lists a compared candidate as eliminated"
                )));
            }
            if let Some(c) = eliminated.iter().find(|c| !contest.contains(**c)) {
                return Err(Error::Validation(format!(
                    "assertion {self} names unknown candidate {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn assorter_value(&self, ranking: &[CandidateId]) -> AssorterValue {
        match self {
            Assertion::Neb { loser, winner } => {
                if ranking.first() == Some(winner) {
                    return AssorterValue::One;
                }
                match ranking.iter().find(|c| *c == loser || *c == winner) {
                    Some(c) if c == loser => AssorterValue::Zero,
                    _ => AssorterValue::Half,
                }
            }
            Assertion::Nen {
                winner,
                loser,
                eliminated,
            } => match ranking.iter().find(|c| !eliminated.contains(c)) {
                Some(c) if c == winner => AssorterValue::One,
                Some(c) if c == loser => AssorterValue::Zero,
                _ => AssorterValue::Half,
            },
        }
    }

    pub fn counts(&self, records: &[VoteRecord]) -> AssorterCounts {
        let mut counts = AssorterCounts::default();
        for r in records {
            match self.assorter_value(&r.ranking) {
                AssorterValue::One => counts.ones += 1,
                AssorterValue::Half => counts.halves += 1,
                AssorterValue::Zero => counts.zeros += 1,
            }
        }
        counts
    }

    /// Same as [`Assertion::counts`] but over a merged profile.
    pub fn counts_in(&self, profile: &Profile) -> AssorterCounts {
        let total = profile.total();
        let (ones, zeros) = match self {
            Assertion::Neb { loser, winner } => match (profile.index_of(*winner), profile.index_of(*loser)) {
                (Some(w), Some(l)) => (profile.first_prefs(w), profile.mentions_excluding(l, w)),
                _ => (0, 0),
            },
            Assertion::Nen {
                winner,
                loser,
                eliminated,
            } => {
                let standing = profile.full_mask() & !profile.mask_of(eliminated);
                let tally = profile.tally_mask(standing);
                let get = |c: &CandidateId| profile.index_of(*c).map_or(0, |i| tally[i]);
                (get(winner), get(loser))
            }
        };
        AssorterCounts {
            ones,
            zeros,
            halves: total - ones - zeros,
        }
    }

    pub fn assorter_mean(&self, records: &[VoteRecord]) -> Result<Ratio<u64>> {
        self.counts(records).mean()
    }

    /// True iff the assorter mean is strictly greater than 1/2.
    pub fn holds(&self, records: &[VoteRecord]) -> bool {
        self.margin(records) > 0
    }

    pub fn margin(&self, records: &[VoteRecord]) -> i64 {
        self.counts(records).margin()
    }

    /// Plain-language explanation, as shown to auditors.
    pub fn explain(&self) -> String {
        match self {
            Assertion::Neb { loser, winner } => {
                format!("Candidate {winner} cannot be eliminated before {loser}.")
            }
            Assertion::Nen { winner, eliminated, .. } => format!(
                "Candidate {winner} cannot be eliminated next when {{{}}} are eliminated.",
                join_ids(eliminated, ", ")
            ),
        }
    }
}

fn join_ids<'a>(ids: impl IntoIterator<Item = &'a CandidateId>, sep: &str) -> String {
    ids.into_iter().map(|c| c.to_string()).collect::<Vec<_>>().join(sep)
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Assertion::Neb { loser, winner } => write!(f, "NEB,{loser},{winner}"),
            Assertion::Nen {
                winner,
                loser,
                eliminated,
            } => write!(f, "NEN,{winner},{loser},{{{}}}", join_ids(eliminated, ",")),
        }
    }
}

impl std::str::FromStr for Assertion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::parse(0, format!("malformed assertion {s:?}"));
        let id = |t: &str| t.trim().parse::<u32>().map(CandidateId).map_err(|_| bad());
        if let Some(rest) = s.strip_prefix("NEB,") {
            let (l, w) = rest.split_once(',').ok_or_else(bad)?;
            return Ok(Assertion::Neb {
                loser: id(l)?,
                winner: id(w)?,
            });
        }
        if let Some(rest) = s.strip_prefix("NEN,") {
            let (pair, ctx) = rest.split_once(",{").ok_or_else(bad)?;
            let ctx = ctx.strip_suffix('}').ok_or_else(bad)?;
            let (w, l) = pair.split_once(',').ok_or_else(bad)?;
            let eliminated = if ctx.trim().is_empty() {
                BTreeSet::new()
            } else {
                ctx.split(',').map(id).collect::<Result<BTreeSet<_>>>()?
            };
            return Ok(Assertion::Nen {
                winner: id(w)?,
                loser: id(l)?,
                eliminated,
            });
        }
        Err(bad())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertionEntry {
    pub assertion: Assertion,
    pub mean: Option<Ratio<u64>>,
    pub margin: Option<i64>,
    pub difficulty: Option<f64>,
}

impl AssertionEntry {
    pub fn bare(assertion: Assertion) -> Self {
        AssertionEntry {
            assertion,
            mean: None,
            margin: None,
            difficulty: None,
        }
    }

    pub fn annotated(assertion: Assertion, counts: AssorterCounts) -> Result<Self> {
        Ok(AssertionEntry {
            assertion,
            mean: Some(counts.mean()?),
            margin: Some(counts.margin()),
            difficulty: None,
        })
    }
}

/// The certificate: assertions that together imply the reported winner won.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssertionSet {
    pub contest_id: String,
    pub winner: CandidateId,
    pub entries: Vec<AssertionEntry>,
}

impl AssertionSet {
    pub fn assertions(&self) -> Vec<Assertion> {
        self.entries.iter().map(|e| e.assertion.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Largest per-assertion difficulty, if all are scored.
    pub fn difficulty(&self) -> Option<f64> {
        self.entries
            .iter()
            .map(|e| e.difficulty)
            .try_fold(0.0f64, |acc, d| d.map(|d| acc.max(d)))
    }

    /// Recomputes means and margins from `records`.
    pub fn annotate(&mut self, records: &[VoteRecord]) -> Result<()> {
        for e in &mut self.entries {
            let counts = e.assertion.counts(records);
            e.mean = Some(counts.mean()?);
            e.margin = Some(counts.margin());
        }
        Ok(())
    }

    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.assertion.to_string());
            out.push('\n');
            if let Some(m) = e.margin {
                out.push_str(&format!("MARGIN,{m}\n"));
            }
            if let Some(mean) = e.mean {
                out.push_str(&format!("MEAN,{}/{}\n", mean.numer(), mean.denom()));
            }
        }
        out
    }

    /// Parses an assertion file for `contest`. The winner is taken from
    /// the contest's reported winner.
    pub fn parse(text: &str, contest: &Contest) -> Result<Self> {
        let winner = contest
            .reported_winner
            .ok_or_else(|| Error::Validation("contest has no reported winner".into()))?;
        let entries = parse_assertion_file(text)?;
        for e in &entries {
            e.assertion.validate(contest)?;
        }
        Ok(AssertionSet {
            contest_id: contest.contest_id.clone(),
            winner,
            entries,
        })
    }

    /// One explanation line per assertion, numbered separately per kind.
    pub fn explanations(&self) -> Vec<String> {
        let (mut neb, mut nen) = (0, 0);
        self.entries
            .iter()
            .map(|e| {
                let (tag, n) = match e.assertion {
                    Assertion::Neb { .. } => ("NEB", &mut neb),
                    Assertion::Nen { .. } => ("IRV", &mut nen),
                };
                let line = format!("{tag} {:>2}: {}", *n, e.assertion.explain());
                *n += 1;
                line
            })
            .collect()
    }
}

pub fn parse_assertion_file(text: &str) -> Result<Vec<AssertionEntry>> {
    let mut entries: Vec<AssertionEntry> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw).trim();
        if line.is_empty() {
            continue;
        }
        let at = |e: Error| match e {
            Error::Parse { message, .. } => Error::parse(no, message),
            other => other,
        };
        if let Some(m) = line.strip_prefix("MARGIN,") {
            let last = entries
                .last_mut()
                .ok_or_else(|| Error::parse(no, "MARGIN before any assertion"))?;
            last.margin = Some(m.parse().map_err(|_| Error::parse(no, "bad margin"))?);
        } else if let Some(m) = line.strip_prefix("MEAN,") {
            let last = entries
                .last_mut()
                .ok_or_else(|| Error::parse(no, "MEAN before any assertion"))?;
            let (n, d) = m.split_once('/').ok_or_else(|| Error::parse(no, "bad mean"))?;
            let n: u64 = n.parse().map_err(|_| Error::parse(no, "bad mean"))?;
            let d: u64 = d.parse().map_err(|_| Error::parse(no, "bad mean"))?;
            if d == 0 {
                return Err(Error::parse(no, "zero mean denominator"));
            }
            last.mean = Some(Ratio::new(n, d));
        } else {
            entries.push(AssertionEntry::bare(line.parse().map_err(at)?));
        }
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<CandidateId> {
        v.iter().copied().map(CandidateId).collect()
    }

    #[test]
    fn neb_values() {
        let a = Assertion::neb(2, 1);
        assert_eq!(a.assorter_value(&ids(&[1, 2])), AssorterValue::One);
        assert_eq!(a.assorter_value(&ids(&[3, 2, 1])), AssorterValue::Zero);
        assert_eq!(a.assorter_value(&ids(&[3, 1, 2])), AssorterValue::Half);
        assert_eq!(a.assorter_value(&ids(&[])), AssorterValue::Half);
    }

    #[test]
    fn nen_values() {
        let a = Assertion::nen(15, 17, [16, 18]);
        assert_eq!(a.assorter_value(&ids(&[16, 18])), AssorterValue::Half);
        assert_eq!(a.assorter_value(&ids(&[16, 15, 17])), AssorterValue::One);
        assert_eq!(a.assorter_value(&ids(&[18, 17, 15])), AssorterValue::Zero);
    }

    #[test]
    fn mean_and_margin() {
        let a = Assertion::neb(2, 1);
        let r = |id: &str, v: &[u32]| VoteRecord::new(id, ids(v));
        let all_one = vec![r("a", &[1]), r("b", &[1, 2])];
        assert_eq!(a.assorter_mean(&all_one).unwrap(), Ratio::from_integer(1));
        let split = vec![r("a", &[1]), r("b", &[2])];
        assert_eq!(a.assorter_mean(&split).unwrap(), Ratio::new(1, 2));
        assert!(!a.holds(&split));
        let three = vec![r("a", &[1]), r("b", &[1]), r("c", &[2])];
        assert_eq!(a.margin(&three), 1);
        let neutral = vec![r("a", &[]), r("b", &[3])];
        assert_eq!(a.margin(&neutral), 0);
        assert!(a.assorter_mean(&[]).is_err());
    }

    #[test]
    fn text_round_trip() {
        for a in [
            Assertion::neb(16, 15),
            Assertion::nen(15, 17, [16, 18]),
            Assertion::nen(15, 17, []),
        ] {
            let back: Assertion = a.to_string().parse().unwrap();
            assert_eq!(back, a);
        }
        assert_eq!(Assertion::nen(15, 17, [16, 18]).to_string(), "NEN,15,17,{16,18}");
        assert!("NEN,1,2".parse::<Assertion>().is_err());
        assert!("XYZ,1,2".parse::<Assertion>().is_err());
    }

    #[test]
    fn explanations() {
        assert_eq!(
            Assertion::nen(15, 18, [16, 17]).explain(),
            "Candidate 15 cannot be eliminated next when {16, 17} are eliminated."
        );
        assert_eq!(
            Assertion::neb(16, 15).explain(),
            "Candidate 15 cannot be eliminated before 16."
        );
    }

    #[test]
    fn file_format() {
        let contest = Contest::new("c", [15, 16, 17], Some(15), 10).unwrap();
        let set = AssertionSet {
            contest_id: "c".into(),
            winner: CandidateId(15),
            entries: vec![AssertionEntry {
                assertion: Assertion::nen(15, 17, [16]),
                mean: Some(Ratio::new(3, 5)),
                margin: Some(2),
                difficulty: None,
            }],
        };
        let text = set.to_file_string();
        assert_eq!(text, "NEN,15,17,{16}\nMARGIN,2\nMEAN,3/5\n");
        assert_eq!(AssertionSet::parse(&text, &contest).unwrap(), set);
        assert!(AssertionSet::parse("MARGIN,3\n", &contest).is_err());
        assert!(AssertionSet::parse("NEN,15,16,{16}\n", &contest).is_err());
        assert!(AssertionSet::parse("NEB,15,19\n", &contest).is_err());
    }
}
