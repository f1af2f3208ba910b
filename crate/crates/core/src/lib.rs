//! Single-institution reservation allocation with audits and counterexample search.
//!
//! The crate models India-style vertical reservations: a seat roster is split
//! into an open category and per-category reserved quotas, each processed in a
//! configurable precedence order against a policy-specific priority order.
//! Four protection policies are supported (hard, soft/de-reserving,
//! score-elevated, and a gap-constrained variant that floors reserve intake at
//! a fixed distance below the open cutoff), together with an audit layer
//! (cutoffs, cutoff-gap directive, within-category fairness, non-wastefulness,
//! and an exhaustive substitutes check) and a bounded counterexample search
//! with witness shrinking.

pub mod audit;
pub mod cli;
pub mod engine;
pub mod format;
pub mod model;
pub mod policies;
pub mod search;

pub use audit::{
    check_fairness, check_nonwaste, check_substitutes, cutoffs, gap_check, run_audit, AuditEntry,
    AuditError, AuditReport, CheckKind, CutoffReport, GapBreach, ViolationWitness, WitnessDetail,
    DEFAULT_MAX_UNIVERSE,
};
pub use engine::{
    add_individual, choose, gap_constrained_choose, run, Assignment, ChoiceRule, Outcome,
    StageReport,
};
pub use model::{CategoryId, Individual, IndividualId, Instance, ModelError, Rational, Score};
pub use policies::{
    baseline_order, elevated_order, hard_order, soft_order, Policy, PolicyError, PriorityOrder,
    SoftScope,
};
