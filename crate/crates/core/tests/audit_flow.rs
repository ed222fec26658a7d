mod common;

use irv_rla::audit::engine::EntryStatus;
use irv_rla::audit::log::read_log;
use irv_rla::audit::session::{Session, CVR_FILE, LOG_FILE};
use irv_rla::audit::{Audit, AuditMode, AuditSpec, AuditStatus, MvrRecord, Reading};
use irv_rla::cvr::to_canonical_string;
use irv_rla::raire::{generate_assertions, GenerationConfig};
use irv_rla::{Assertion, AssertionSet, AssorterValue, CandidateId, Contest, Error, VoteRecord};

use num_rational::BigRational;
use num_traits::Zero;

use common::ids;

/// 1000 ballots over three candidates; 2 is eliminated first and 1 wins.
fn contest() -> (Contest, Vec<VoteRecord>) {
    let types: [(&[u32], usize); 4] = [(&[1], 400), (&[2, 1], 250), (&[3, 2], 200), (&[3], 150)];
    let mut records = Vec::new();
    for (ranking, n) in types {
        for _ in 0..n {
            records.push(VoteRecord::new(format!("c{:04}", records.len()), ids(ranking)));
        }
    }
    let contest = Contest::new("flow", [1, 2, 3], Some(1), records.len() as u64).unwrap();
    (contest, records)
}

fn certificate(contest: &Contest, records: &[VoteRecord]) -> AssertionSet {
    generate_assertions(contest, records, &GenerationConfig::new(AuditMode::Comparison, 0.05))
        .unwrap()
        .set
}

fn start(population: u64) -> Audit {
    let (contest, records) = contest();
    let set = certificate(&contest, &records);
    Audit::new(
        AuditSpec::new(0.05, AuditMode::Comparison, "8675309", population),
        contest,
        records,
        set,
    )
    .unwrap()
}

fn cvr_of(audit: &Audit, id: &str) -> Vec<CandidateId> {
    audit.cvrs().iter().find(|r| r.ballot_id == id).unwrap().ranking.clone()
}

fn faithful(audit: &Audit, id: &str) -> MvrRecord {
    MvrRecord {
        ballot_id: id.to_string(),
        reading: Reading::ranking(cvr_of(audit, id)),
    }
}

/// `((2 - v) / 2)^n`, the p-value after `n` clean comparisons.
fn clean_p(margin: i64, population: u64, n: usize) -> f64 {
    let v = margin as f64 / population as f64;
    ((2.0 - v) / 2.0).powi(n as i32)
}

#[test]
fn clean_comparison_audit_confirms() {
    let mut audit = start(1000);
    let n = audit.next_round().unwrap().draws().unwrap();
    audit.draw(n).unwrap();
    let entries: Vec<MvrRecord> = audit.pending().iter().map(|id| faithful(&audit, id)).collect();
    audit.enter(&entries).unwrap();
    assert_eq!(audit.status(), AuditStatus::Confirmed);
    assert_eq!(audit.state().consumed, n as usize);
    for (e, track) in audit.assertions().entries.iter().zip(&audit.state().tracks) {
        let want = clean_p(e.margin.unwrap(), 1000, n as usize);
        assert!(
            (track.p_value() - want).abs() <= want * 1e-9,
            "{} vs {want}",
            track.p_value()
        );
        assert!(track.p_value() <= 0.05);
        assert_eq!(track.overstatements, [0, 0, n, 0, 0]);
    }
    assert!(audit.confirmed().iter().all(|&c| c));
    assert!(audit.escalate().is_err());
}

#[test]
fn no_entries_leave_every_p_at_one() {
    let mut audit = start(1000);
    audit.draw(30).unwrap();
    assert_eq!(audit.state().consumed, 0);
    assert!(audit.state().tracks.iter().all(|t| t.p_value() == 1.0));
    assert_eq!(audit.status(), AuditStatus::InProgress);
    assert!(audit.ballot_statuses().iter().all(|b| b.status == EntryStatus::Pending));
}

#[test]
fn entries_are_consumed_in_draw_order() {
    let mut audit = start(1000);
    audit.draw(10).unwrap();
    let pending = audit.pending();
    let last = pending.last().unwrap().clone();
    audit.enter(&[faithful(&audit, &last)]).unwrap();
    assert_eq!(audit.state().consumed, 0);
    let rest: Vec<MvrRecord> = pending[..pending.len() - 1]
        .iter()
        .map(|id| faithful(&audit, id))
        .collect();
    audit.enter(&rest).unwrap();
    assert_eq!(audit.state().consumed, 10);

    let mut in_order = start(1000);
    in_order.draw(10).unwrap();
    let all: Vec<MvrRecord> = pending.iter().map(|id| faithful(&in_order, id)).collect();
    in_order.enter(&all).unwrap();
    for (a, b) in audit.state().tracks.iter().zip(&in_order.state().tracks) {
        assert_eq!(a.p_value().to_bits(), b.p_value().to_bits());
    }
}

#[test]
fn undrawn_and_duplicate_entries_are_rejected_whole() {
    let mut audit = start(1000);
    audit.draw(5).unwrap();
    let drawn = audit.pending()[0].clone();
    let undrawn = audit
        .cvrs()
        .iter()
        .map(|r| r.ballot_id.clone())
        .find(|id| !audit.state().draws.iter().any(|d| &d.ballot_id == id))
        .unwrap();
    let batch = [faithful(&audit, &drawn), faithful(&audit, &undrawn)];
    assert!(matches!(audit.enter(&batch), Err(Error::NotDrawn(id)) if id == undrawn));
    assert!(audit.state().entries.is_empty());

    let twice = [faithful(&audit, &drawn), faithful(&audit, &drawn)];
    assert!(matches!(audit.enter(&twice), Err(Error::DuplicateEntry(_))));
    assert!(audit.state().entries.is_empty());

    audit.enter(&[faithful(&audit, &drawn)]).unwrap();
    assert!(matches!(
        audit.enter(&[faithful(&audit, &drawn)]),
        Err(Error::DuplicateEntry(_))
    ));

    let unknown = MvrRecord {
        ballot_id: audit.pending()[0].clone(),
        reading: Reading::ranking(ids(&[9])),
    };
    assert!(matches!(audit.enter(&[unknown]), Err(Error::Validation(_))));
}

#[test]
fn missing_card_never_lowers_risk() {
    let mut clean = start(1000);
    let mut missing = start(1000);
    clean.draw(1).unwrap();
    missing.draw(1).unwrap();
    let id = clean.pending()[0].clone();
    clean.enter(&[faithful(&clean, &id)]).unwrap();
    missing
        .enter(&[MvrRecord {
            ballot_id: id.clone(),
            reading: Reading::NotFound,
        }])
        .unwrap();
    let cvr = cvr_of(&clean, &id);
    let mut strictly = 0;
    for ((e, a), b) in clean
        .assertions()
        .entries
        .iter()
        .zip(&clean.state().tracks)
        .zip(&missing.state().tracks)
    {
        assert!(b.p_value() >= a.p_value());
        if e.assertion.assorter_value(&cvr) != AssorterValue::Zero {
            assert!(b.stream[0] < a.stream[0]);
            strictly += 1;
        }
    }
    assert!(strictly > 0);
    assert_eq!(missing.ballot_statuses()[0].status, EntryStatus::NotFound);
}

#[test]
fn flipped_vote_scores_zero() {
    let mut audit = start(1000);
    audit.draw(40).unwrap();
    let neb = audit
        .assertions()
        .entries
        .iter()
        .position(|e| matches!(e.assertion, Assertion::Neb { .. }))
        .expect("certificate has an NEB");
    let assertion = audit.assertions().entries[neb].assertion.clone();
    let k = audit
        .state()
        .draws
        .iter()
        .position(|d| assertion.assorter_value(&cvr_of(&audit, &d.ballot_id)) == AssorterValue::One)
        .expect("a drawn card supports the winner");
    let target = audit.state().draws[k].ballot_id.clone();
    let entries: Vec<MvrRecord> = audit
        .pending()
        .iter()
        .map(|id| {
            if *id == target {
                MvrRecord {
                    ballot_id: id.clone(),
                    reading: Reading::ranking([assertion.loser()]),
                }
            } else {
                faithful(&audit, id)
            }
        })
        .collect();
    audit.enter(&entries).unwrap();
    let track = &audit.state().tracks[neb];
    let half = BigRational::new(1.into(), 2.into());
    for (d, x) in audit.state().draws.iter().zip(&track.stream) {
        if d.ballot_id == target {
            assert!(x < &half);
            assert!(x.is_zero());
        } else {
            assert!(x > &half);
        }
    }
    assert_eq!(
        track.overstatements[4] as usize,
        audit.state().draws.iter().filter(|d| d.ballot_id == target).count()
    );
    assert!(track.p_value() > 0.05);
}

#[test]
fn phantoms_are_consumed_at_worst_case() {
    let mut audit = start(2000);
    audit.draw(20).unwrap();
    let phantoms = audit.state().draws.iter().filter(|d| d.phantom).count();
    assert!(phantoms > 0);
    assert!(audit.state().draws.iter().all(|d| d.phantom == (d.position >= 1000)));
    let entries: Vec<MvrRecord> = audit.pending().iter().map(|id| faithful(&audit, id)).collect();
    audit.enter(&entries).unwrap();
    assert_eq!(audit.state().consumed, 20);
    for (track, draw) in audit.state().tracks[0].stream.iter().zip(&audit.state().draws) {
        assert_eq!(draw.phantom, track.is_zero());
    }
}

#[test]
fn escalation_stops_sampling() {
    let mut audit = start(1000);
    audit.draw(3).unwrap();
    audit.escalate().unwrap();
    assert_eq!(audit.status(), AuditStatus::Escalated);
    assert!(audit.draw(1).is_err());
}

#[test]
fn refuses_uncertified_or_false_certificates() {
    let (contest, records) = contest();
    let set = certificate(&contest, &records);
    let spec = AuditSpec::new(0.05, AuditMode::Comparison, "s", 1000);
    for i in 0..set.len() {
        let mut fewer = set.clone();
        fewer.entries.remove(i);
        match Audit::new(spec.clone(), contest.clone(), records.clone(), fewer) {
            Err(Error::NotCertified { unpruned }) => assert!(!unpruned.is_empty()),
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("accepted a set missing assertion {i}"),
        }
    }

    let mut wrong = contest.clone();
    wrong.reported_winner = Some(CandidateId(3));
    let mut set3 = set.clone();
    set3.winner = CandidateId(3);
    assert!(matches!(
        Audit::new(spec.clone(), wrong, records.clone(), set3),
        Err(Error::WinnerMismatch { .. })
    ));

    // 3 does not beat 1 on first preferences, so a set asserting it is refused.
    let mut false_set = set.clone();
    false_set
        .entries
        .push(irv_rla::AssertionEntry::bare(Assertion::neb(1, 3)));
    false_set
        .entries
        .push(irv_rla::AssertionEntry::bare(Assertion::neb(3, 1)));
    assert!(matches!(
        Audit::new(spec, contest, records, false_set),
        Err(Error::Validation(_))
    ));
}

#[test]
fn risk_limit_must_lie_strictly_between_zero_and_one() {
    let (contest, records) = contest();
    let set = certificate(&contest, &records);
    for alpha in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        let spec = AuditSpec::new(alpha, AuditMode::Comparison, "s", 1000);
        assert!(
            Audit::new(spec, contest.clone(), records.clone(), set.clone()).is_err(),
            "accepted {alpha}"
        );
    }
}

#[test]
fn session_replay_is_bit_identical() {
    let root = tempfile::tempdir().unwrap();
    let (contest, records) = contest();
    let cvr_text = to_canonical_string(&contest, &records).unwrap();
    let assertion_text = certificate(&contest, &records).to_file_string();
    let spec = AuditSpec::new(0.05, AuditMode::Comparison, "0451", 1000);

    let mut session = Session::create(root.path(), spec.clone(), &cvr_text, &assertion_text, Some(12)).unwrap();
    let pending = session.audit().pending();
    let mut entries: Vec<MvrRecord> = pending.iter().map(|id| faithful(session.audit(), id)).collect();
    entries[2].reading = Reading::NotFound;
    let late = entries.pop().unwrap();
    session.enter(vec![late.clone()]).unwrap();
    session.enter(entries.clone()).unwrap();
    assert!(session.second_entry(entries[0].clone()).unwrap());
    assert!(!session
        .second_entry(MvrRecord {
            ballot_id: entries[1].ballot_id.clone(),
            reading: Reading::ranking([]),
        })
        .unwrap());
    session.draw(5).unwrap();
    let id = session.id().to_string();
    let dir = session.dir().to_path_buf();
    let before = session.audit().snapshot().unwrap();
    let tracks = session.audit().state().tracks.clone();
    drop(session);

    let reopened = Session::open(&dir).unwrap();
    assert_eq!(reopened.id(), id);
    assert_eq!(reopened.audit().state().draws.len(), 17);
    for (a, b) in tracks.iter().zip(&reopened.audit().state().tracks) {
        let bits = |t: &[f64]| t.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.p_history), bits(&b.p_history));
        assert_eq!(a.stream, b.stream);
    }
    assert_eq!(reopened.audit().snapshot().unwrap(), before);
    assert_eq!(reopened.audit().entry_mismatches(), vec![entries[1].ballot_id.clone()]);

    // Same inputs reopen the same audit rather than starting over.
    let again = Session::create(root.path(), spec, &cvr_text, &assertion_text, Some(12)).unwrap();
    assert_eq!(again.id(), id);
    assert_eq!(again.audit().state().draws.len(), 17);
    drop(again);

    // Every logged draw list is re-derived from the seed during replay.
    let log = read_log(&dir.join(LOG_FILE)).unwrap();
    assert_eq!(log.len(), 1 + 2 + 2 + 2);

    std::fs::write(dir.join(CVR_FILE), cvr_text.replace("c0000,1", "c0000,2")).unwrap();
    assert!(matches!(Session::open(&dir), Err(Error::Log(_))));
}
