//! Readers and writers for cast-vote-record files and ballot manifests.
//!
//! Canonical CVR file (UTF-8, LF line endings):
//!
//! ```text
//! CONTEST,<contest_id>,<n_candidates>,<winner_id or ->
//! CANDIDATES,<id>[:<name>],...
//! CARDS,<card_upper_bound>
//! <ballot_id>,<rank1_id>,<rank2_id>,...
//! ```
//!
//! The legacy RAIRE research format is a contest count line, one
//! `Contest,<id>,<n>,<candidate ids...>` line per contest and then
//! `<contest_id>,<ballot_id>,<prefs...>` lines.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::ballot::{normalize_ranking, BallotManifest, Candidate, CandidateId, Contest, ManifestEntry, VoteRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CvrFormat {
    Canonical,
    RaireLegacy,
}

impl std::str::FromStr for CvrFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "canonical" => Ok(CvrFormat::Canonical),
            "raire-legacy" | "raire" => Ok(CvrFormat::RaireLegacy),
            other => Err(Error::Validation(format!("unknown CVR format {other:?}"))),
        }
    }
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn parse_cvr_file(path: &Path, format: CvrFormat) -> Result<(Contest, Vec<VoteRecord>)> {
    let text = read_file(path)?;
    match format {
        CvrFormat::Canonical => parse_canonical(&text),
        CvrFormat::RaireLegacy => parse_raire_legacy(&text, None),
    }
}

fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
}

fn parse_id(field: &str, line: usize) -> Result<CandidateId> {
    field
        .trim()
        .parse::<u32>()
        .map(CandidateId)
        .map_err(|_| Error::parse(line, format!("expected a candidate id, found {field:?}")))
}

fn expect_tag<'a>(line: Option<(usize, &'a str)>, tag: &str) -> Result<(usize, Vec<&'a str>)> {
    let (no, text) = line.ok_or_else(|| Error::parse(0, format!("missing {tag} line")))?;
    let fields: Vec<&str> = text.split(',').collect();
    if fields[0] != tag {
        return Err(Error::parse(no, format!("expected {tag} line, found {text:?}")));
    }
    Ok((no, fields))
}

pub fn parse_canonical(text: &str) -> Result<(Contest, Vec<VoteRecord>)> {
    let mut it = lines(text);

    let (no, head) = expect_tag(it.next(), "CONTEST")?;
    if head.len() != 4 {
        return Err(Error::parse(no, "CONTEST line needs id, candidate count and winner"));
    }
    let contest_id = head[1].to_string();
    let n_candidates: usize = head[2]
        .parse()
        .map_err(|_| Error::parse(no, format!("bad candidate count {:?}", head[2])))?;
    let winner = match head[3] {
        "-" => None,
        w => Some(parse_id(w, no)?),
    };

    let (no, cand_fields) = expect_tag(it.next(), "CANDIDATES")?;
    let mut candidates = Vec::new();
    for field in &cand_fields[1..] {
        let (id, name) = match field.split_once(':') {
            Some((id, name)) => (id, Some(name.to_string())),
            None => (*field, None),
        };
        candidates.push(Candidate {
            id: parse_id(id, no)?,
            name,
        });
    }
    if candidates.len() != n_candidates {
        return Err(Error::parse(
            no,
            format!(
                "CONTEST declares {n_candidates} candidates, CANDIDATES lists {}",
                candidates.len()
            ),
        ));
    }

    let (no, cards) = expect_tag(it.next(), "CARDS")?;
    if cards.len() != 2 {
        return Err(Error::parse(no, "CARDS line needs exactly one count"));
    }
    let card_upper_bound: u64 = cards[1]
        .parse()
        .map_err(|_| Error::parse(no, format!("bad card count {:?}", cards[1])))?;

    let contest = Contest {
        contest_id,
        candidates,
        reported_winner: winner,
        card_upper_bound,
    };
    contest.validate()?;

    let roster: HashSet<CandidateId> = contest.roster().into_iter().collect();
    let mut seen_ids = HashSet::new();
    let mut records = Vec::new();
    for (no, line) in it {
        let mut fields = line.split(',');
        let ballot_id = fields.next().unwrap_or_default();
        if ballot_id.is_empty() {
            return Err(Error::parse(no, "empty ballot id"));
        }
        let raw = fields.map(|f| parse_id(f, no)).collect::<Result<Vec<_>>>()?;
        if let Some(c) = raw.iter().find(|c| !roster.contains(c)) {
            return Err(Error::Validation(format!(
                "line {no}: ballot {ballot_id} ranks unknown candidate {c}"
            )));
        }
        if !seen_ids.insert(ballot_id.to_string()) {
            return Err(Error::Validation(format!("line {no}: duplicate ballot id {ballot_id}")));
        }
        records.push(VoteRecord {
            ballot_id: ballot_id.to_string(),
            ranking: normalize_ranking(&raw),
        });
    }
    if records.len() as u64 > contest.card_upper_bound {
        return Err(Error::Validation(format!(
            "{} ballots exceed CARDS bound {}",
            records.len(),
            contest.card_upper_bound
        )));
    }
    Ok((contest, records))
}

pub fn to_canonical_string(contest: &Contest, records: &[VoteRecord]) -> Result<String> {
    contest.validate()?;
    contest.validate_records(records)?;
    let mut out = String::new();
    let winner = contest
        .reported_winner
        .map_or_else(|| "-".to_string(), |w| w.to_string());
    writeln!(
        out,
        "CONTEST,{},{},{}",
        contest.contest_id,
        contest.candidates.len(),
        winner
    )
    .unwrap();
    out.push_str("CANDIDATES");
    for c in &contest.candidates {
        match &c.name {
            Some(name) => write!(out, ",{}:{}", c.id, name).unwrap(),
            None => write!(out, ",{}", c.id).unwrap(),
        }
    }
    out.push('\n');
    writeln!(out, "CARDS,{}", contest.card_upper_bound).unwrap();
    for r in records {
        out.push_str(&r.ballot_id);
        for c in &r.ranking {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_canonical(contest: &Contest, records: &[VoteRecord], path: &Path) -> Result<()> {
    let text = to_canonical_string(contest, records)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses the legacy RAIRE format, selecting `contest_id` or the first
/// contest. The card bound defaults to the number of ballots found.
pub fn parse_raire_legacy(text: &str, contest_id: Option<&str>) -> Result<(Contest, Vec<VoteRecord>)> {
    let mut it = lines(text).filter(|(_, l)| !l.trim().is_empty());
    let (no, count_line) = it.next().ok_or_else(|| Error::parse(1, "empty file"))?;
    let n_contests: usize = count_line
        .trim()
        .parse()
        .map_err(|_| Error::parse(no, format!("expected contest count, found {count_line:?}")))?;

    let mut contests: Vec<(String, Vec<CandidateId>)> = Vec::new();
    let mut ballots: HashMap<String, Vec<(usize, String, Vec<CandidateId>)>> = HashMap::new();
    for (no, line) in it {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields[0] == "Contest" {
            if fields.len() < 3 {
                return Err(Error::parse(no, "Contest line needs id and candidate count"));
            }
            let n: usize = fields[2]
                .parse()
                .map_err(|_| Error::parse(no, format!("bad candidate count {:?}", fields[2])))?;
            let ids = fields[3..]
                .iter()
                .map(|f| parse_id(f, no))
                .collect::<Result<Vec<_>>>()?;
            if ids.len() != n {
                return Err(Error::parse(
                    no,
                    format!("declares {n} candidates, lists {}", ids.len()),
                ));
            }
            contests.push((fields[1].to_string(), ids));
        } else {
            if fields.len() < 2 || fields[1].is_empty() {
                return Err(Error::parse(no, "ballot line needs contest id and ballot id"));
            }
            let prefs = fields[2..]
                .iter()
                .filter(|f| !f.is_empty())
                .map(|f| parse_id(f, no))
                .collect::<Result<Vec<_>>>()?;
            ballots
                .entry(fields[0].to_string())
                .or_default()
                .push((no, fields[1].to_string(), prefs));
        }
    }
    if contests.len() != n_contests {
        return Err(Error::parse(
            no,
            format!("header declares {n_contests} contests, found {}", contests.len()),
        ));
    }
    let (id, roster) = match contest_id {
        Some(want) => contests
            .into_iter()
            .find(|(id, _)| id == want)
            .ok_or_else(|| Error::Validation(format!("contest {want} not found")))?,
        None => contests
            .into_iter()
            .next()
            .ok_or_else(|| Error::Validation("file contains no contests".into()))?,
    };
    let lines = ballots.remove(&id).unwrap_or_default();
    let roster_set: HashSet<CandidateId> = roster.iter().copied().collect();
    let mut seen = HashSet::new();
    let mut records = Vec::with_capacity(lines.len());
    for (no, ballot_id, prefs) in lines {
        if let Some(c) = prefs.iter().find(|c| !roster_set.contains(c)) {
            return Err(Error::Validation(format!(
                "line {no}: ballot {ballot_id} ranks unknown candidate {c}"
            )));
        }
        if !seen.insert(ballot_id.clone()) {
            return Err(Error::Validation(format!("line {no}: duplicate ballot id {ballot_id}")));
        }
        records.push(VoteRecord {
            ballot_id,
            ranking: normalize_ranking(&prefs),
        });
    }
    let contest = Contest {
        contest_id: id,
        candidates: roster.into_iter().map(|id| Candidate { id, name: None }).collect(),
        reported_winner: None,
        card_upper_bound: (records.len() as u64).max(1),
    };
    contest.validate()?;
    Ok((contest, records))
}

pub fn parse_manifest(text: &str) -> Result<BallotManifest> {
    let mut entries = Vec::new();
    for (no, line) in lines(text) {
        if line.trim().is_empty() {
            continue;
        }
        let (label, count) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::parse(no, "expected <container_label>,<card_count>"))?;
        let card_count: u64 = count
            .trim()
            .parse()
            .map_err(|_| Error::parse(no, format!("bad card count {count:?}")))?;
        if card_count == 0 {
            return Err(Error::parse(no, "card count must be positive"));
        }
        entries.push(ManifestEntry {
            container_label: label.to_string(),
            card_count,
        });
    }
    Ok(BallotManifest { entries })
}

pub fn parse_manifest_file(path: &Path) -> Result<BallotManifest> {
    parse_manifest(&read_file(path)?)
}
