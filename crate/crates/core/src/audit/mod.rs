//! The sequential audit: sampling, assorter streams, risk measurement,
//! sample-size planning, audit state and the event log.

pub mod assorter;
pub mod engine;
pub mod estimate;
pub mod log;
pub mod risk;
pub mod sampling;
pub mod session;

pub use assorter::{AuditMode, ComparisonAssorter, MvrRecord, Reading};
pub use engine::{Audit, AuditSnapshot, AuditSpec, AuditState, AuditStatus};
pub use estimate::{estimate_sample_size, AssertionPlan, PlanningConfig, SampleSize};
pub use risk::{risk_pvalue, KaplanMarkov, RiskFunction, RiskProcess};
pub use sampling::{draw_sample, Draw};
pub use session::Session;
