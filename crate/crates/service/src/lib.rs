//! HTTP service and report rendering for IRV risk-limiting audits.

pub mod api;
pub mod report;

/// Schema tag carried by every JSON response.
pub const SCHEMA: &str = "irv-rla/1";
