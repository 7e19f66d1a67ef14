//! Run configuration, trace emission, replay audits, and sweeps.

mod audit;
mod config;
mod sweep;
mod trace;

pub use audit::{audit_trace, AuditCheck, AuditReport};
pub use config::{LossKind, RunConfig, TraceFormat};
pub use sweep::sweep;
pub use trace::{Summary, Trace};
