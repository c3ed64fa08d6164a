//! Risk-sensitive memory gating for coding agents.
//!
//! The crate decides, before every potential issue-memory injection, whether
//! retrieved memory is safe enough to influence the agent: it can inject the
//! top resolution, summarize candidates, retrieve conservatively or broadly,
//! abstain, ask for feedback, or proceed without memory. Retrieval evidence
//! is folded into a fixed 16-feature state, scored by a contextual bandit
//! whose reward penalizes false-positive injection more strongly than missed
//! reuse, and guarded by post-argmax safety overrides.
//!
//! The crate also ships a deterministic smoke-scale benchmark: a seeded
//! generator for memory banks, queries, paraphrases, hard negatives, replay
//! events and context-budget cases, plus a harness that runs every
//! experiment family (retrieval quality, hard-negative safety, abstention,
//! offline replay, ablations, reward sweep, context budget, hot-path
//! latency) and writes CSV/JSON reports.

pub mod baselines;
mod canon;
pub mod dataset;
pub mod family;
pub mod harness;
pub mod memory;
pub mod policy;
pub mod query;
pub mod report;
pub mod rng;
pub mod state;

pub use family::FailureFamily;
pub use memory::{Episode, FeedbackLabel, MemoryBank, MemoryRecord, Pattern, Variant};
pub use policy::{Action, Decision, Outcome, PolicyState, RewardConfig};
pub use query::{Candidate, QueryProfile, RawContext, RetrievalMode};
pub use state::{BudgetState, StateVector};
