//! Simulator for collaborative model training between two competing
//! model-selling firms.
//!
//! Two firms sell predictions from vertically differentiated models to a unit
//! mass of consumers. Model qualities drive equilibrium prices, demands, and
//! revenues in closed form ([`market`]). The firms may pool training
//! information under four collaboration schemes ([`trainer`]): complete
//! sharing, two one-sided variants, and a defection-free scheme that caps each
//! firm's per-round quality gain so that neither firm's revenue ever drops
//! while the quality pair converges to the Nash bargaining solution
//! ([`bargaining`]). Synthetic convex loss models ([`losses`]) supply the
//! training dynamics, and [`harness`] adds configuration, trace emission, and
//! replay audits on top.

pub mod bargaining;
pub mod error;
pub mod harness;
pub mod losses;
pub mod market;
pub mod trainer;

mod vecops;

pub use bargaining::{DisagreementPoint, NashSolution};
pub use error::{Error, Result};
pub use harness::{audit_trace, sweep, AuditReport, RunConfig, Trace, TraceFormat};
pub use losses::{LossModel, ModelParams, Owner};
pub use market::{Market, MarketOutcome, PriceQuote, QualityPair};
pub use trainer::{RoundRecord, Scheme, SchemeConfig, TrainingState};
