//! Independent check that an assertion set rules out every alternative
//! winner, plus tree export for visualisation.
//!
//! An elimination suffix `[s1, ..., sm]` lists the last `m` candidates in
//! elimination order; `sm` wins and everyone not in the suffix was
//! eliminated earlier. Contradiction is decided from assertion semantics
//! alone; nothing here consults the generator.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assertion::{Assertion, AssertionSet};
use crate::ballot::{CandidateId, Contest};
use crate::error::{Error, Result};

pub const TREEDOC_HEADER: &str = "TREEDOC,1";

/// Largest roster verified without an explicit override.
pub const DEFAULT_MAX_CANDIDATES: usize = 9;

/// The candidates of one contest, for deciding contradictions.
#[derive(Clone, Debug)]
pub struct Roster {
    candidates: BTreeSet<CandidateId>,
}

impl Roster {
    pub fn new(contest: &Contest) -> Self {
        Roster {
            candidates: contest.roster_set(),
        }
    }

    pub fn from_ids(ids: impl IntoIterator<Item = CandidateId>) -> Self {
        Roster {
            candidates: ids.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = CandidateId> + '_ {
        self.candidates.iter().copied()
    }

    /// NEN(w, c, S) contradicts a suffix iff `w` is eliminated in the
    /// suffix while exactly the roster minus `S` is standing. NEB(l, w)
    /// contradicts iff `l` outlasts `w`.
    pub fn contradicts(&self, assertion: &Assertion, suffix: &[CandidateId]) -> bool {
        match assertion {
            Assertion::Neb { loser, winner } => {
                let pos = |c: &CandidateId| suffix.iter().position(|s| s == c);
                match (pos(loser), pos(winner)) {
                    (Some(pl), Some(pw)) => pw < pl,
                    (Some(_), None) => true,
                    _ => false,
                }
            }
            Assertion::Nen { winner, eliminated, .. } => match suffix.iter().position(|s| s == winner) {
                Some(p) if p + 1 < suffix.len() => {
                    let standing = &suffix[p..];
                    standing.len() + eliminated.len() == self.candidates.len()
                        && standing.iter().all(|c| !eliminated.contains(c))
                        && eliminated.iter().all(|c| self.candidates.contains(c))
                }
                _ => false,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Certified,
    /// Full elimination orders (first eliminated first, winner last) that
    /// no assertion contradicts.
    Failure(Vec<Vec<CandidateId>>),
}

impl Verdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, Verdict::Certified)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub max_candidates: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            max_candidates: DEFAULT_MAX_CANDIDATES,
        }
    }
}

/// Annotation on a node of an exported elimination tree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeStatus {
    /// Contradicted by the assertion at this index; `confirmed` if the
    /// audit has confirmed that assertion.
    Pruned {
        by: usize,
        confirmed: bool,
    },
    Expanded,
    /// A complete elimination order no assertion rules out.
    Unpruned,
    /// Root of the reported winner's tree; not expanded.
    ReportedWinner,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub candidate: CandidateId,
    pub status: NodeStatus,
    pub children: Vec<TreeNode>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedTree {
    pub root: TreeNode,
}

impl PrunedTree {
    pub fn alt_winner(&self) -> CandidateId {
        self.root.candidate
    }

    pub fn fully_pruned(&self) -> bool {
        fn walk(n: &TreeNode) -> bool {
            match n.status {
                NodeStatus::Unpruned => false,
                _ => n.children.iter().all(walk),
            }
        }
        walk(&self.root)
    }
}

fn check_size(roster: &Roster, options: VerifyOptions) -> Result<()> {
    if roster.len() > options.max_candidates {
        return Err(Error::RosterTooLarge {
            candidates: roster.len(),
            limit: options.max_candidates,
        });
    }
    Ok(())
}

/// Depth-first walk below `suffix`, stopping at the first contradicting
/// assertion. Returns the node and appends any unpruned full orders.
fn build(
    roster: &Roster,
    assertions: &[Assertion],
    confirmed: &[bool],
    suffix: &mut Vec<CandidateId>,
    unpruned: &mut Vec<Vec<CandidateId>>,
) -> TreeNode {
    let candidate = suffix[0];
    if let Some(by) = assertions.iter().position(|a| roster.contradicts(a, suffix)) {
        return TreeNode {
            candidate,
            status: NodeStatus::Pruned {
                by,
                confirmed: confirmed.get(by).copied().unwrap_or(false),
            },
            children: vec![],
        };
    }
    if suffix.len() == roster.len() {
        unpruned.push(suffix.clone());
        return TreeNode {
            candidate,
            status: NodeStatus::Unpruned,
            children: vec![],
        };
    }
    let rest: Vec<CandidateId> = roster.ids().filter(|c| !suffix.contains(c)).collect();
    let children = rest
        .into_iter()
        .map(|c| {
            suffix.insert(0, c);
            let child = build(roster, assertions, confirmed, suffix, unpruned);
            suffix.remove(0);
            child
        })
        .collect();
    TreeNode {
        candidate,
        status: NodeStatus::Expanded,
        children,
    }
}

fn alt_trees(
    roster: &Roster,
    winner: CandidateId,
    assertions: &[Assertion],
    confirmed: &[bool],
) -> Vec<(PrunedTree, Vec<Vec<CandidateId>>)> {
    let alts: Vec<CandidateId> = roster.ids().filter(|&c| c != winner).collect();
    alts.par_iter()
        .map(|&alt| {
            let mut unpruned = Vec::new();
            let root = build(roster, assertions, confirmed, &mut vec![alt], &mut unpruned);
            (PrunedTree { root }, unpruned)
        })
        .collect()
}

/// Certifies `assertions` iff every full elimination order ending in a
/// candidate other than `winner` is contradicted by at least one of them.
pub fn verify_assertions(
    contest: &Contest,
    winner: CandidateId,
    assertions: &[Assertion],
    options: VerifyOptions,
) -> Result<Verdict> {
    let roster = Roster::new(contest);
    check_size(&roster, options)?;
    if !contest.contains(winner) {
        return Err(Error::Validation(format!("winner {winner} is not on the roster")));
    }
    let failures: Vec<Vec<CandidateId>> = alt_trees(&roster, winner, assertions, &[])
        .into_iter()
        .flat_map(|(_, u)| u)
        .collect();
    Ok(if failures.is_empty() {
        Verdict::Certified
    } else {
        Verdict::Failure(failures)
    })
}

pub fn verify_assertion_set(contest: &Contest, set: &AssertionSet, options: VerifyOptions) -> Result<Verdict> {
    verify_assertions(contest, set.winner, &set.assertions(), options)
}

/// Exports one tree per candidate. Alternative-winner trees are expanded
/// until pruned; the reported winner's tree is a single root.
pub fn export_trees(
    contest: &Contest,
    set: &AssertionSet,
    confirmed: &[bool],
    options: VerifyOptions,
) -> Result<TreeDocument> {
    let roster = Roster::new(contest);
    check_size(&roster, options)?;
    let assertions = set.assertions();
    let mut by_alt: BTreeMap<CandidateId, PrunedTree> = alt_trees(&roster, set.winner, &assertions, confirmed)
        .into_iter()
        .map(|(t, _)| (t.alt_winner(), t))
        .collect();
    let trees = roster
        .ids()
        .map(|c| {
            by_alt.remove(&c).unwrap_or(PrunedTree {
                root: TreeNode {
                    candidate: c,
                    status: NodeStatus::ReportedWinner,
                    children: vec![],
                },
            })
        })
        .collect();
    Ok(TreeDocument {
        contest_id: contest.contest_id.clone(),
        winner: set.winner,
        assertions: set
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| AssertionSummary {
                index: i,
                text: e.assertion.to_string(),
                explanation: e.assertion.explain(),
                confirmed: confirmed.get(i).copied().unwrap_or(false),
            })
            .collect(),
        trees,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertionSummary {
    pub index: usize,
    pub text: String,
    pub explanation: String,
    pub confirmed: bool,
}

/// Machine-readable tree export consumed by the entry UI.
///
/// ```text
/// TREEDOC,1
/// CONTEST,<contest_id>,<winner>
/// ASSERTION,<index>,<confirmed 0|1>,<assertion>
/// TREE,<root candidate>,<pruned|unpruned|winner>
/// NODE,<depth>,<candidate>,<expanded|unpruned|winner|pruned:<index>[:confirmed]>
/// END
/// ```
///
/// `NODE` records appear in depth-first order; a node's children are the
/// following records one level deeper. `EXPLAIN,<index>,<text>` lines
/// carry the plain-language explanation of each assertion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeDocument {
    pub contest_id: String,
    pub winner: CandidateId,
    pub assertions: Vec<AssertionSummary>,
    pub trees: Vec<PrunedTree>,
}

impl TreeDocument {
    pub fn unpruned_paths(&self) -> Vec<Vec<CandidateId>> {
        fn walk(n: &TreeNode, path: &mut Vec<CandidateId>, out: &mut Vec<Vec<CandidateId>>) {
            path.insert(0, n.candidate);
            if n.status == NodeStatus::Unpruned {
                out.push(path.clone());
            }
            for c in &n.children {
                walk(c, path, out);
            }
            path.remove(0);
        }
        let mut out = Vec::new();
        for t in &self.trees {
            walk(&t.root, &mut Vec::new(), &mut out);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{TREEDOC_HEADER}").unwrap();
        writeln!(out, "CONTEST,{},{}", self.contest_id, self.winner).unwrap();
        for a in &self.assertions {
            writeln!(out, "ASSERTION,{},{},{}", a.index, u8::from(a.confirmed), a.text).unwrap();
            writeln!(out, "EXPLAIN,{},{}", a.index, a.explanation).unwrap();
        }
        for t in &self.trees {
            let status = match t.root.status {
                NodeStatus::ReportedWinner => "winner",
                _ if t.fully_pruned() => "pruned",
                _ => "unpruned",
            };
            writeln!(out, "TREE,{},{status}", t.alt_winner()).unwrap();
            write_nodes(&t.root, 0, &mut out);
        }
        out.push_str("END\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, TREEDOC_HEADER)) => {}
            Some((no, other)) => return Err(Error::parse(no, format!("unsupported tree document header {other:?}"))),
            None => return Err(Error::parse(1, "empty tree document")),
        }
        let id = |s: &str, no: usize| {
            s.parse::<u32>()
                .map(CandidateId)
                .map_err(|_| Error::parse(no, format!("bad candidate id {s:?}")))
        };
        let mut doc = TreeDocument {
            contest_id: String::new(),
            winner: CandidateId(0),
            assertions: vec![],
            trees: vec![],
        };
        // Stack of (depth, node) for the tree being read.
        let mut stack: Vec<TreeNode> = Vec::new();
        let finish = |stack: &mut Vec<TreeNode>, depth: usize| {
            while stack.len() > depth {
                let node = stack.pop().unwrap();
                match stack.last_mut() {
                    Some(parent) => parent.children.push(node),
                    None => return Some(node),
                }
            }
            None
        };
        let mut ended = false;
        for (no, line) in lines {
            let fields: Vec<&str> = line.splitn(4, ',').collect();
            match fields[0] {
                "CONTEST" if fields.len() == 3 => {
                    doc.contest_id = fields[1].to_string();
                    doc.winner = id(fields[2], no)?;
                }
                "ASSERTION" if fields.len() == 4 => doc.assertions.push(AssertionSummary {
                    index: fields[1].parse().map_err(|_| Error::parse(no, "bad index"))?,
                    confirmed: fields[2] == "1",
                    text: fields[3].to_string(),
                    explanation: String::new(),
                }),
                "EXPLAIN" => {
                    let (_, rest) = line.split_once(',').unwrap();
                    let (idx, text) = rest.split_once(',').ok_or_else(|| Error::parse(no, "bad EXPLAIN"))?;
                    let idx: usize = idx.parse().map_err(|_| Error::parse(no, "bad index"))?;
                    let a = doc
                        .assertions
                        .iter_mut()
                        .find(|a| a.index == idx)
                        .ok_or_else(|| Error::parse(no, "EXPLAIN for unknown assertion"))?;
                    a.explanation = text.to_string();
                }
                "TREE" | "END" => {
                    if let Some(root) = finish(&mut stack, 0) {
                        doc.trees.push(PrunedTree { root });
                    }
                    if fields[0] == "END" {
                        ended = true;
                        break;
                    }
                }
                "NODE" if fields.len() == 4 => {
                    let depth: usize = fields[1].parse().map_err(|_| Error::parse(no, "bad depth"))?;
                    if depth > stack.len() {
                        return Err(Error::parse(no, "node depth skips a level"));
                    }
                    if depth == 0 && !stack.is_empty() {
                        return Err(Error::parse(no, "second root in one tree"));
                    }
                    if let Some(root) = finish(&mut stack, depth) {
                        doc.trees.push(PrunedTree { root });
                    }
                    let status = match fields[3] {
                        "expanded" => NodeStatus::Expanded,
                        "unpruned" => NodeStatus::Unpruned,
                        "winner" => NodeStatus::ReportedWinner,
                        s => {
                            let rest = s
                                .strip_prefix("pruned:")
                                .ok_or_else(|| Error::parse(no, format!("bad annotation {s:?}")))?;
                            let (idx, confirmed) = match rest.split_once(':') {
                                Some((i, "confirmed")) => (i, true),
                                Some(_) => return Err(Error::parse(no, "bad annotation")),
                                None => (rest, false),
                            };
                            NodeStatus::Pruned {
                                by: idx.parse().map_err(|_| Error::parse(no, "bad index"))?,
                                confirmed,
                            }
                        }
                    };
                    stack.push(TreeNode {
                        candidate: id(fields[2], no)?,
                        status,
                        children: vec![],
                    });
                }
                _ => return Err(Error::parse(no, format!("unexpected record {line:?}"))),
            }
        }
        if !ended {
            return Err(Error::parse(0, "tree document missing END"));
        }
        Ok(doc)
    }

    /// Graphviz rendering, one cluster per tree. Unpruned paths are red.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph elimination_trees {\n  rankdir=BT;\n  node [shape=box];\n");
        let mut next = 0usize;
        for (t_idx, t) in self.trees.iter().enumerate() {
            writeln!(out, "  subgraph cluster_{t_idx} {{").unwrap();
            writeln!(out, "    label=\"{} wins\";", t.alt_winner()).unwrap();
            dot_node(&t.root, None, &mut next, &self.assertions, &mut out);
            out.push_str("  }\n");
        }
        out.push_str("}\n");
        out
    }
}

fn write_nodes(n: &TreeNode, depth: usize, out: &mut String) {
    let ann = match &n.status {
        NodeStatus::Expanded => "expanded".to_string(),
        NodeStatus::Unpruned => "unpruned".to_string(),
        NodeStatus::ReportedWinner => "winner".to_string(),
        NodeStatus::Pruned { by, confirmed: true } => format!("pruned:{by}:confirmed"),
        NodeStatus::Pruned { by, confirmed: false } => format!("pruned:{by}"),
    };
    writeln!(out, "NODE,{depth},{},{ann}", n.candidate).unwrap();
    for c in &n.children {
        write_nodes(c, depth + 1, out);
    }
}

fn subtree_unpruned(n: &TreeNode) -> bool {
    n.status == NodeStatus::Unpruned || n.children.iter().any(subtree_unpruned)
}

fn dot_node(n: &TreeNode, parent: Option<usize>, next: &mut usize, assertions: &[AssertionSummary], out: &mut String) {
    let me = *next;
    *next += 1;
    let (label, attrs) = match &n.status {
        NodeStatus::Pruned { by, confirmed } => {
            let kind = assertions
                .get(*by)
                .map_or("assertion", |a| if a.text.starts_with("NEB") { "NEB" } else { "IRV" });
            let tag = if *confirmed { " (confirmed)" } else { "" };
            (format!("{}\\n{kind} {by}{tag}", n.candidate), ", style=dashed")
        }
        NodeStatus::Unpruned => (n.candidate.to_string(), ", color=red, fontcolor=red"),
        NodeStatus::ReportedWinner => (n.candidate.to_string(), ", style=bold"),
        NodeStatus::Expanded if subtree_unpruned(n) => (n.candidate.to_string(), ", color=red"),
        NodeStatus::Expanded => (n.candidate.to_string(), ""),
    };
    writeln!(out, "    n{me} [label=\"{label}\"{attrs}];").unwrap();
    if let Some(p) = parent {
        let red = if subtree_unpruned(n) { " [color=red]" } else { "" };
        writeln!(out, "    n{me} -> n{p}{red};").unwrap();
    }
    for c in &n.children {
        dot_node(c, Some(me), next, assertions, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertion::AssertionEntry;

    fn ids(v: &[u32]) -> Vec<CandidateId> {
        v.iter().copied().map(CandidateId).collect()
    }

    fn pilot_roster() -> Roster {
        Roster::from_ids(ids(&[15, 16, 17, 18]))
    }

    #[test]
    fn neb_contradiction() {
        let a = Assertion::neb(18, 15);
        let r = pilot_roster();
        // 15 eliminated while 18 stands
        assert!(r.contradicts(&a, &ids(&[15, 17, 18])));
        // 15 absent from suffix: eliminated before 18
        assert!(r.contradicts(&a, &ids(&[18])));
        assert!(!r.contradicts(&a, &ids(&[18, 15])));
        assert!(!r.contradicts(&a, &ids(&[17])));
    }

    #[test]
    fn nen_contradiction() {
        let a = Assertion::nen(15, 18, [16, 17]);
        let r = pilot_roster();
        assert!(r.contradicts(&a, &ids(&[16, 17, 15, 18])));
        assert!(r.contradicts(&a, &ids(&[17, 16, 15, 18])));
        assert!(r.contradicts(&a, &ids(&[15, 18])));
        assert!(!r.contradicts(&a, &ids(&[18])));
        assert!(!r.contradicts(&a, &ids(&[18, 15])));
        let b = Assertion::nen(15, 18, [16]);
        assert!(!r.contradicts(&b, &ids(&[16, 17, 15, 18])));
        assert!(!r.contradicts(&b, &ids(&[17, 15, 18, 16])));
    }

    #[test]
    fn empty_set_lists_every_alternative() {
        let contest = Contest::new("c", [15, 16, 17, 18], Some(15), 10).unwrap();
        match verify_assertions(&contest, CandidateId(15), &[], VerifyOptions::default()).unwrap() {
            Verdict::Failure(orders) => {
                assert_eq!(orders.len(), 18);
                assert!(orders
                    .iter()
                    .all(|o| o.len() == 4 && *o.last().unwrap() != CandidateId(15)));
            }
            Verdict::Certified => panic!("empty set cannot certify"),
        }
    }

    #[test]
    fn two_candidates() {
        let contest = Contest::new("c", [1, 2], Some(1), 10).unwrap();
        let set = AssertionSet {
            contest_id: "c".into(),
            winner: CandidateId(1),
            entries: vec![AssertionEntry::bare(Assertion::neb(2, 1))],
        };
        assert!(verify_assertion_set(&contest, &set, VerifyOptions::default())
            .unwrap()
            .is_certified());
        let doc = export_trees(&contest, &set, &[true], VerifyOptions::default()).unwrap();
        assert_eq!(doc.trees.len(), 2);
        let alt = doc.trees.iter().find(|t| t.alt_winner() == CandidateId(2)).unwrap();
        assert_eq!(alt.root.status, NodeStatus::Pruned { by: 0, confirmed: true });
        let back = TreeDocument::parse(&doc.to_text()).unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn roster_limit() {
        let contest = Contest::new("c", 1..=10, Some(1), 10).unwrap();
        assert!(matches!(
            verify_assertions(&contest, CandidateId(1), &[], VerifyOptions::default()),
            Err(Error::RosterTooLarge { .. })
        ));
    }

    #[test]
    fn unpruned_paths_in_export() {
        let contest = Contest::new("c", [1, 2, 3], Some(1), 10).unwrap();
        let set = AssertionSet {
            contest_id: "c".into(),
            winner: CandidateId(1),
            entries: vec![AssertionEntry::bare(Assertion::neb(2, 1))],
        };
        let doc = export_trees(&contest, &set, &[], VerifyOptions::default()).unwrap();
        let paths = doc.unpruned_paths();
        assert!(!paths.is_empty());
        assert!(paths.iter().all(|p| *p.last().unwrap() == CandidateId(3)));
        assert!(doc.to_dot().contains("color=red"));
        assert!(doc.to_text().contains("TREE,3,unpruned"));
        assert_eq!(TreeDocument::parse(&doc.to_text()).unwrap(), doc);
        assert!(TreeDocument::parse("TREEDOC,2\nEND\n").is_err());
    }
}
