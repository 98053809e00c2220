//! Connectivity invariants and bounded checks that one step preserves them.

use alloc::collections::{BTreeSet, VecDeque};
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{
    can_issue_negative, r_pos, validate_state, Action, AuthKey, Authorization, AuthorizationState, Permission,
    Principal, StructuralError,
};
use crate::oracle::{empty_state, principal_name, random_walk, valid_actions};
use crate::semantics::{ChainMode, Holdings};
use crate::transition::{apply_action, StepError};

/// Default bound on the number of distinct states explored exhaustively.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Invariant {
    /// Every authorization's grantor holds a permission entitling it.
    Connectivity,
    /// Every active authorization's grantor actively holds such a permission.
    ActiveConnectivity,
    /// Connectivity restricted to positive authorizations.
    PositiveConnectivity,
}

impl Invariant {
    pub const ALL: [Invariant; 3] =
        [Invariant::Connectivity, Invariant::ActiveConnectivity, Invariant::PositiveConnectivity];

    pub fn as_str(self) -> &'static str {
        match self {
            Invariant::Connectivity => "connectivity",
            Invariant::ActiveConnectivity => "active-connectivity",
            Invariant::PositiveConnectivity => "positive-connectivity",
        }
    }

    pub fn check(self, state: &AuthorizationState) -> Result<(), Vec<Violation>> {
        match self {
            Invariant::Connectivity => check_connectivity(state),
            Invariant::ActiveConnectivity => check_active_connectivity(state),
            Invariant::PositiveConnectivity => check_positive_connectivity(state),
        }
    }
}

impl fmt::Display for Invariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Invariant {
    type Err = UnknownInvariant;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Invariant::ALL.into_iter().find(|i| i.as_str() == s).ok_or(UnknownInvariant)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("unknown invariant (expected connectivity, active-connectivity or positive-connectivity)")]
pub struct UnknownInvariant;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Violation {
    Positive(AuthKey),
    Negative { grantor: Principal, grantee: Principal },
    Structural(StructuralError),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Positive(key) => write!(f, "{key}"),
            Violation::Negative { grantor, grantee } => write!(f, "{grantor}->{grantee}:-"),
            Violation::Structural(e) => write!(f, "{e}"),
        }
    }
}

fn structural(state: &AuthorizationState) -> Result<(), Vec<Violation>> {
    validate_state(state).map_err(|errs| errs.into_iter().map(Violation::Structural).collect())
}

fn entitled(held: &[Permission], perm: Permission) -> bool {
    held.iter().any(|&h| r_pos(h, perm))
}

/// Every positive authorization `(i, j, π)` has `i` holding some `ρ` with
/// `ρ R π`; every negative one has `i` holding a permission that may issue
/// negatives. Chains may use inactive authorizations.
pub fn check_connectivity(state: &AuthorizationState) -> Result<(), Vec<Violation>> {
    connectivity(state, true)
}

/// [`check_connectivity`] without the negative authorizations, which are
/// never removed and so outlive their issuer's rights.
pub fn check_positive_connectivity(state: &AuthorizationState) -> Result<(), Vec<Violation>> {
    connectivity(state, false)
}

fn connectivity(state: &AuthorizationState, negatives: bool) -> Result<(), Vec<Violation>> {
    structural(state)?;
    let h = Holdings::new(state);
    let held = |p: &Principal| h.held_by(p, ChainMode::All).expect("validated");
    let mut out = Vec::new();
    for auth in state.authorizations() {
        if !entitled(&held(&auth.grantor), auth.permission) {
            out.push(Violation::Positive(auth.key()));
        }
    }
    for neg in state.negatives().filter(|_| negatives) {
        if !held(&neg.grantor).into_iter().any(can_issue_negative) {
            out.push(Violation::Negative { grantor: neg.grantor, grantee: neg.grantee });
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Every active positive authorization has its grantor actively holding an
/// entitling permission.
pub fn check_active_connectivity(state: &AuthorizationState) -> Result<(), Vec<Violation>> {
    structural(state)?;
    let h = Holdings::new(state);
    let out: Vec<Violation> = state
        .authorizations()
        .filter(|a| a.active)
        .filter(|a| !entitled(&h.held_by(&a.grantor, ChainMode::ActiveOnly).expect("validated"), a.permission))
        .map(|a| Violation::Positive(a.key()))
        .collect();
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Every state reachable within `depth` valid actions.
    Exhaustive { depth: usize },
    /// `samples` states from random walks of `depth` steps, seeds
    /// `seed..seed + samples`.
    Random { samples: usize, seed: u64, depth: usize },
    /// `samples` random states that satisfy the invariant, not necessarily
    /// reachable.
    RandomArbitrary { samples: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub state: AuthorizationState,
    pub action: Action,
    pub violations: Vec<Violation>,
}

impl Witness {
    /// Replays the step and returns the violations it produces now.
    pub fn replay(&self, invariant: Invariant) -> Result<Vec<Violation>, StepError> {
        let (post, _) = apply_action(&self.state, &self.action)?;
        Ok(invariant.check(&post).err().unwrap_or_default())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Holds,
    Counterexample(Witness),
    /// A valid action whose successor could not be computed.
    StepFailed {
        state: AuthorizationState,
        action: Action,
        error: StepError,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InvariantReport {
    pub invariant: Invariant,
    pub mode: Mode,
    pub n: usize,
    /// Distinct pre-states examined.
    pub states: usize,
    /// Steps whose post-state was checked.
    pub steps: usize,
    /// Steps skipped for lack of a determinate successor (arbitrary states
    /// only; on reachable states this is a failure).
    pub undetermined: usize,
    pub outcome: Outcome,
}

impl InvariantReport {
    pub fn holds(&self) -> bool {
        self.outcome == Outcome::Holds
    }
}

impl fmt::Display for InvariantReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            Mode::Exhaustive { depth } => alloc::format!("exhaustive depth={depth}"),
            Mode::Random { samples, seed, depth } => {
                alloc::format!("random samples={samples} seed={seed} depth={depth}")
            }
            Mode::RandomArbitrary { samples, seed } => alloc::format!("random-arbitrary samples={samples} seed={seed}"),
        };
        write!(f, "{} n={} {mode}: {} states, {} steps", self.invariant, self.n, self.states, self.steps)?;
        if self.undetermined > 0 {
            write!(f, " ({} undetermined)", self.undetermined)?;
        }
        f.write_str(": ")?;
        match &self.outcome {
            Outcome::Holds => f.write_str("HOLDS"),
            Outcome::Counterexample(w) => {
                write!(f, "COUNTEREXAMPLE after {}:", w.action)?;
                for v in &w.violations {
                    write!(f, " {v}")?;
                }
                Ok(())
            }
            Outcome::StepFailed { action, error, .. } => write!(f, "STEP FAILED at {action}: {error}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum VerifyError {
    #[error("explored more than {cap} states")]
    ResourceBoundExceeded { cap: usize },
    #[error("a state needs at least one principal")]
    NoPrincipals,
}

/// Checks every valid action from `state`, returning the first failure.
fn check_successors(invariant: Invariant, state: &AuthorizationState, report: &mut InvariantReport) -> Option<Outcome> {
    let arbitrary = matches!(report.mode, Mode::RandomArbitrary { .. });
    for action in valid_actions(state) {
        let post = match apply_action(state, &action) {
            Ok((post, _)) => post,
            Err(StepError::NonTotalModel { .. }) if arbitrary => {
                report.undetermined += 1;
                continue;
            }
            Err(error) => return Some(Outcome::StepFailed { state: state.clone(), action, error }),
        };
        report.steps += 1;
        if let Err(violations) = invariant.check(&post) {
            return Some(Outcome::Counterexample(Witness { state: state.clone(), action, violations }));
        }
    }
    None
}

/// Verifies on `n`-principal states that one valid step preserves `invariant`.
pub fn verify_step_invariant(invariant: Invariant, n: usize, mode: Mode) -> Result<InvariantReport, VerifyError> {
    if n == 0 {
        return Err(VerifyError::NoPrincipals);
    }
    verify_from(invariant, &empty_state(n), mode, DEFAULT_STATE_CAP)
}

/// Like [`verify_step_invariant`], exploring from `start` instead of the
/// empty state (random-arbitrary sampling uses only its principal count).
pub fn verify_from(
    invariant: Invariant,
    start: &AuthorizationState,
    mode: Mode,
    state_cap: usize,
) -> Result<InvariantReport, VerifyError> {
    let n = start.principal_count();
    let mut report =
        InvariantReport { invariant, mode, n, states: 0, steps: 0, undetermined: 0, outcome: Outcome::Holds };
    let visit = |state: &AuthorizationState, report: &mut InvariantReport| -> bool {
        report.states += 1;
        if let Err(violations) = structural(state) {
            let action = Action::new(crate::Scheme::GrantTT, state.soa().clone(), state.soa().clone());
            report.outcome = Outcome::Counterexample(Witness { state: state.clone(), action, violations });
            return false;
        }
        match check_successors(invariant, state, report) {
            Some(outcome) => {
                report.outcome = outcome;
                false
            }
            None => true,
        }
    };
    match mode {
        Mode::Exhaustive { depth } => {
            let mut seen: BTreeSet<AuthorizationState> = BTreeSet::new();
            let mut queue = VecDeque::from([(start.clone(), 0usize)]);
            seen.insert(start.clone());
            while let Some((state, d)) = queue.pop_front() {
                if !visit(&state, &mut report) {
                    return Ok(report);
                }
                if d == depth {
                    continue;
                }
                for action in valid_actions(&state) {
                    let Ok((next, _)) = apply_action(&state, &action) else { continue };
                    if seen.insert(next.clone()) {
                        if seen.len() > state_cap {
                            return Err(VerifyError::ResourceBoundExceeded { cap: state_cap });
                        }
                        queue.push_back((next, d + 1));
                    }
                }
            }
        }
        Mode::Random { samples, seed, depth } => {
            for s in 0..samples as u64 {
                let (state, _) = random_walk(seed.wrapping_add(s), start, depth);
                if !visit(&state, &mut report) {
                    return Ok(report);
                }
            }
        }
        Mode::RandomArbitrary { samples, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut found = 0;
            while found < samples {
                let state = arbitrary_state(&mut rng, n);
                if invariant.check(&state).is_err() {
                    continue;
                }
                found += 1;
                if !visit(&state, &mut report) {
                    return Ok(report);
                }
            }
        }
    }
    Ok(report)
}

/// A random structurally valid state over `n` generated principals. Edge
/// density varies per state so that sparse, invariant-satisfying states
/// are common.
pub fn arbitrary_state(rng: &mut impl Rng, n: usize) -> AuthorizationState {
    let mut state = empty_state(n);
    let density = rng.gen_range(0.0..0.35);
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            for perm in Permission::ALL {
                if rng.gen_bool(density) {
                    state.insert(Authorization {
                        grantor: principal_name(x),
                        grantee: principal_name(y),
                        permission: perm,
                        active: !rng.gen_bool(0.2),
                    });
                }
            }
            if rng.gen_bool(density / 4.0) {
                state.insert_negative(principal_name(x), principal_name(y));
            }
        }
    }
    state
}
