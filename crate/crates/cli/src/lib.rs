//! Orchestration of the leakage audit: configuration, the audit, sweep and
//! transform commands, and report rendering.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;

pub use config::{Overrides, RunConfig};
pub use error::{AuditError, ErrorKind, Stage};
pub use pipeline::{
    cmd_audit, cmd_sweep, cmd_transform, write_sweep_csv, AuditOutcome, SweepRow, TransformSummary,
};
pub use report::{cmd_report, render_markdown, AuditReport};
