//! Ownership-based delegation and revocation over a single access/object pair.
//!
//! Principals grant each other permissions `(b1, b2)` along rooted
//! delegation chains starting at a source of authority. Twelve actions
//! change the authorization state: four grants and eight revocation schemes
//! obtained by choosing propagation (local/global), dominance (weak/strong)
//! and resilience (delete/negative).
//!
//! The crate is `no_std` (with `alloc`):
//!
//! - [`model`]: permissions, static relations, states and actions.
//! - [`semantics`]: chains, grant capability, independence, access rights.
//! - [`transition`]: the step engine, a well-founded fixpoint evaluation.
//! - [`oracle`]: a procedural second implementation of every scheme and a
//!   random reachable-state generator, for differential testing.
//! - [`verifier`]: connectivity invariants and bounded step verification.
//! - [`planner`]: single-step goal search ranked by change cost.
#![no_std]
#![allow(clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod dense;
pub mod model;
pub mod oracle;
pub mod planner;
pub mod scenarios;
pub mod semantics;
pub mod transition;
pub mod verifier;

pub use model::{
    can_issue_negative, grant_compat, r_pos, stronger, validate_state, Action, AuthKey, Authorization,
    AuthorizationState, ModelError, NegativeAuthorization, Permission, Principal, Scheme, StructuralError,
};
pub use oracle::{oracle_apply, random_reachable_state};
pub use planner::{cost, eval_goal, plan, plan_min_cost, Goal, Literal, PlanError, PlanResult};
pub use semantics::{ChainMode, Holdings, QueryError};
pub use transition::{
    apply_action, evaluate, simulate, validate_action, ActionError, Evaluation, SimulateError, Step, StepDelta,
    StepError,
};
pub use verifier::{
    check_active_connectivity, check_connectivity, check_positive_connectivity, verify_step_invariant, Invariant,
    InvariantReport, Mode, Outcome, Violation,
};
