//! Self-contained HTML audit report.

use std::collections::HashMap;
use std::fmt::Write as _;

use irv_rla::audit::assorter::overstatement;
use irv_rla::audit::{Audit, AuditStatus, Reading};
use irv_rla::tree::{NodeStatus, TreeNode};
use irv_rla::{CandidateId, Contest, Result};

const STYLE: &str = "body{font-family:sans-serif;margin:2em;max-width:70em}\
table{border-collapse:collapse;margin:1em 0}td,th{border:1px solid #bbb;padding:.25em .6em;text-align:left}\
.banner{padding:.6em 1em;font-weight:bold}.confirmed{background:#d8f5d8}.in_progress{background:#fff3c4}\
.escalated{background:#f8d0d0}.num{text-align:right;font-family:monospace}ul.tree{list-style:none}\
.pruned{color:#666}.pruned.ok{color:#176317}.unpruned{color:#b00;font-weight:bold}code{font-size:90%}";

fn esc(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn label(contest: &Contest, c: CandidateId) -> String {
    match contest.name_of(c) {
        Some(name) => format!("{name} ({c})"),
        None => c.to_string(),
    }
}

fn ranking(contest: &Contest, r: &[CandidateId]) -> String {
    if r.is_empty() {
        return "(blank)".into();
    }
    r.iter()
        .map(|&c| esc(&label(contest, c)))
        .collect::<Vec<_>>()
        .join(" &gt; ")
}

fn reading(contest: &Contest, r: Option<&Reading>) -> String {
    match r {
        None => String::new(),
        Some(Reading::NotFound) => "not found".into(),
        Some(Reading::Ranking { ranking: r }) => ranking(contest, r),
    }
}

fn halves(h: i64) -> String {
    match h {
        0 => "0".into(),
        h if h % 2 == 0 => format!("{:+}", h / 2),
        h => format!("{:+}/2", h),
    }
}

fn tree(out: &mut String, contest: &Contest, node: &TreeNode) {
    let (class, note) = match &node.status {
        NodeStatus::Pruned { by, confirmed: true } => ("pruned ok", format!("pruned by #{by}, confirmed")),
        NodeStatus::Pruned { by, confirmed: false } => ("pruned", format!("pruned by #{by}")),
        NodeStatus::Expanded => ("", String::new()),
        NodeStatus::Unpruned => ("unpruned", "not ruled out".into()),
        NodeStatus::ReportedWinner => ("", "reported winner".into()),
    };
    write!(out, "<li class=\"{class}\">{}", esc(&label(contest, node.candidate))).unwrap();
    if !note.is_empty() {
        write!(out, " <small>[{note}]</small>").unwrap();
    }
    if !node.children.is_empty() {
        out.push_str("<ul class=\"tree\">");
        for c in &node.children {
            tree(out, contest, c);
        }
        out.push_str("</ul>");
    }
    out.push_str("</li>");
}

/// Renders the report for audit `id` whose log ends at `log_head`.
pub fn render(id: &str, log_head: &str, audit: &Audit) -> Result<String> {
    let contest = audit.contest();
    let spec = audit.spec();
    let state = audit.state();
    let snapshot = audit.snapshot()?;
    let doc = audit.trees()?;
    let mut out = String::new();

    write!(
        out,
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\"><title>Audit report {}</title><style>{STYLE}</style></head><body>",
        esc(&contest.contest_id)
    )
    .unwrap();
    write!(out, "<h1>Audit report: {}</h1>", esc(&contest.contest_id)).unwrap();
    let status = audit.status();
    let banner = match status {
        AuditStatus::Confirmed => format!("Reported winner confirmed at risk limit {}", spec.risk_limit),
        AuditStatus::InProgress => "Audit in progress".into(),
        AuditStatus::Escalated => "Escalated to a full hand count".into(),
    };
    write!(out, "<div class=\"banner {status}\">{}</div>", esc(&banner)).unwrap();
    out.push_str("<table>");
    let rows = [
        ("Audit id", id.to_string()),
        ("Reported winner", label(contest, audit.assertions().winner)),
        ("Mode", spec.mode.to_string()),
        ("Risk limit", spec.risk_limit.to_string()),
        ("Seed", spec.seed.clone()),
        ("Population", spec.population.to_string()),
        ("CVRs", audit.cvrs().len().to_string()),
        ("Draws", state.draws.len().to_string()),
        ("Draws resolved", state.consumed.to_string()),
        ("Log head", log_head.to_string()),
    ];
    for (k, v) in rows {
        write!(out, "<tr><th>{k}</th><td><code>{}</code></td></tr>", esc(&v)).unwrap();
    }
    out.push_str("</table>");

    out.push_str("<h2>Assertions</h2><table><tr><th>#</th><th>Assertion</th><th>Meaning</th><th>Margin</th><th>p-value</th><th>Confirmed</th></tr>");
    for a in &snapshot.assertions {
        write!(
            out,
            "<tr><td>{}</td><td><code>{}</code></td><td>{}</td><td class=\"num\">{}</td><td class=\"num\">{:.6}</td><td>{}</td></tr>",
            a.index,
            esc(&a.assertion),
            esc(&a.explanation),
            a.margin,
            a.p_value,
            if a.confirmed { "yes" } else { "no" }
        )
        .unwrap();
    }
    out.push_str("</table>");

    out.push_str("<h2>Discrepancies</h2>");
    let cvrs: HashMap<&str, &[CandidateId]> = audit
        .cvrs()
        .iter()
        .map(|r| (r.ballot_id.as_str(), r.ranking.as_slice()))
        .collect();
    let mut rows = String::new();
    for d in &state.draws[..state.consumed] {
        let cvr = cvrs.get(d.ballot_id.as_str()).copied();
        let mvr = state.entries.get(&d.ballot_id);
        let diffs: Vec<i64> = audit
            .assertions()
            .entries
            .iter()
            .map(|e| overstatement(&e.assertion, cvr, mvr.unwrap_or(&Reading::NotFound)))
            .collect();
        let differs = match (cvr, mvr) {
            (Some(c), Some(Reading::Ranking { ranking })) => c != ranking.as_slice(),
            _ => true,
        };
        if !differs {
            continue;
        }
        write!(
            rows,
            "<tr><td class=\"num\">{}</td><td>{}</td><td>{}</td><td>{}</td><td class=\"num\">{}</td></tr>",
            d.index,
            esc(&d.ballot_id),
            cvr.map_or_else(|| "(no CVR)".into(), |c| ranking(contest, c)),
            if d.phantom {
                "phantom".into()
            } else {
                reading(contest, mvr)
            },
            diffs.iter().map(|&h| halves(h)).collect::<Vec<_>>().join(", ")
        )
        .unwrap();
    }
    if rows.is_empty() {
        out.push_str("<p>No resolved draw differs from its CVR.</p>");
    } else {
        out.push_str("<table><tr><th>Draw</th><th>Ballot</th><th>CVR</th><th>Manual reading</th><th>Overstatement per assertion</th></tr>");
        out.push_str(&rows);
        out.push_str("</table>");
    }
    if !snapshot.entry_mismatches.is_empty() {
        write!(
            out,
            "<p>Second entry disagrees with the first for: {}</p>",
            esc(&snapshot.entry_mismatches.join(", "))
        )
        .unwrap();
    }

    out.push_str("<h2>Elimination trees</h2>");
    for t in &doc.trees {
        out.push_str("<ul class=\"tree\">");
        tree(&mut out, contest, &t.root);
        out.push_str("</ul>");
    }

    out.push_str("<h2>Sample</h2><table><tr><th>Draw</th><th>Position</th><th>Ballot</th><th>Manual reading</th></tr>");
    for d in &state.draws {
        let entry = if d.phantom {
            "phantom".into()
        } else {
            match state.entries.get(&d.ballot_id) {
                None => "pending".into(),
                r => reading(contest, r),
            }
        };
        write!(
            out,
            "<tr><td class=\"num\">{}</td><td class=\"num\">{}</td><td>{}</td><td>{}</td></tr>",
            d.index,
            d.position,
            esc(&d.ballot_id),
            entry
        )
        .unwrap();
    }
    out.push_str("</table></body></html>\n");
    Ok(out)
}
