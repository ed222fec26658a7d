//! Risk-limiting audits for instant runoff voting.
//!
//! The crate covers the whole pipeline: ballot parsing and IRV
//! tabulation, assertion generation, exhaustive verification of an
//! assertion set against every alternative elimination order, and the
//! sequential audit itself with its hash-chained event log.

pub mod assertion;
pub mod audit;
pub mod ballot;
pub mod cvr;
pub mod error;
pub mod irv;
pub mod raire;
pub mod tree;

pub use assertion::{Assertion, AssertionEntry, AssertionSet, AssorterCounts, AssorterValue};
pub use ballot::{BallotManifest, Candidate, CandidateId, Contest, VoteRecord};
pub use error::{Error, Result};
pub use irv::{tabulate, EliminationResult, TiePolicy};
pub use tree::{verify_assertion_set, verify_assertions, Verdict, VerifyOptions};
