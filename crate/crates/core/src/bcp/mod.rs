//! The forest-growing reconstruction engine.

mod audit;
mod channel;
mod engine;
mod forest;
mod steps;

pub use audit::{AuditReport, AuditViolation, Auditor, Claim};
pub use channel::{Anchors, Channel, PerfectChannel, StatisticalChannel};
pub use engine::{bcp_run, AddedCherry, BcpError, BcpOutput, MetricMode, Partial, Phase, Removal, RunOptions, TraceRecord};
pub use forest::{ForestError, ForestState};
pub use steps::{cherry_candidates, detect_collision, local_cherry, update_metric, CherryCandidate, CherryRejection};
