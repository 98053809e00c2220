//! Step semantics: the unique successor of a state under one action.
//!
//! The successor is read off a model of the step rules over two time points.
//! Facts at time `t` come from the input state; the rules defining deletion,
//! addition, inactivation and the time-`t+1` chains are mutually recursive
//! through negation, so they are evaluated with the alternating fixpoint,
//! which yields the well-founded model.
//!
//! Two refinements keep the model determined on reachable states:
//!
//! - Local schemes are evaluated in two strata. Forwarding from the actor is
//!   derived from what the revoked grantee lost in a first evaluation
//!   without forwarding; those losses are kept as facts in the second.
//! - When the well-founded model is partial because some loss only supports
//!   itself through a cycle, the stable model with the least deletions and
//!   inactivations is taken. If no such model exists the step fails with
//!   [`StepError::NonTotalModel`].

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dense::{self, Dense};
use crate::model::{
    grant_compat, validate_state, Action, AuthKey, AuthorizationState, Permission, Principal, Scheme, StructuralError,
};
use crate::semantics::independence;

/// Changes made by one step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepDelta {
    /// Pre-state triples derived as deleted.
    pub deleted: BTreeSet<AuthKey>,
    /// Triples present afterwards only because a rule added them. A triple
    /// deleted and re-added in the same step appears here and in `deleted`.
    pub added: BTreeSet<AuthKey>,
    /// Triples inactive afterwards that were not inactive before.
    pub inactivated: BTreeSet<AuthKey>,
    pub neg_added: BTreeSet<(Principal, Principal)>,
}

impl StepDelta {
    pub fn is_empty(&self) -> bool {
        self.deleted.is_empty() && self.added.is_empty() && self.inactivated.is_empty() && self.neg_added.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ActionError {
    #[error("invalid state: {0:?}")]
    InvalidState(Vec<StructuralError>),
    #[error("unknown principal {0}")]
    UnknownPrincipal(Principal),
    #[error("{0} cannot act on itself")]
    SelfAction(Principal),
    #[error("{actor} cannot actively grant any permission compatible with {scheme}")]
    UnauthorizedGrant { actor: Principal, scheme: Scheme },
    #[error("{0} already exists as an inactive authorization")]
    GrantShadowed(AuthKey),
    #[error("no positive authorization from {actor} to {target} to revoke")]
    NoAuthorizationToRevoke { actor: Principal, target: Principal },
    #[error("{0} cannot actively issue negative authorizations")]
    UnauthorizedNegative(Principal),
}

impl ActionError {
    /// Stable kebab-case code for structured output.
    pub fn code(&self) -> &'static str {
        match self {
            ActionError::InvalidState(_) => "structural-error",
            ActionError::UnknownPrincipal(_) => "unknown-principal",
            ActionError::SelfAction(_) => "self-action",
            ActionError::UnauthorizedGrant { .. } => "unauthorized-grant",
            ActionError::GrantShadowed(_) => "grant-shadowed",
            ActionError::NoAuthorizationToRevoke { .. } => "no-authorization-to-revoke",
            ActionError::UnauthorizedNegative(_) => "unauthorized-negative",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum StepError {
    #[error(transparent)]
    Action(#[from] ActionError),
    /// The well-founded model left atoms undefined.
    #[error("step model is not total; undefined atoms: {}", undefined.join(", "))]
    NonTotalModel { undefined: Vec<String> },
}

impl StepError {
    pub fn code(&self) -> &'static str {
        match self {
            StepError::Action(e) => e.code(),
            StepError::NonTotalModel { .. } => "non-total-model",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("step {step} ({action}): {error}")]
pub struct SimulateError {
    pub step: usize,
    pub action: Action,
    pub error: StepError,
}

/// A validated action against the dense view of its pre-state.
struct Prepared {
    dense: Dense,
    actor: usize,
    target: usize,
    /// For grants, the single permission bit to be issued.
    grant_bit: u8,
}

fn compat_mask(scheme: Scheme) -> u8 {
    Permission::ALL.into_iter().filter(|&p| grant_compat(p, scheme)).fold(0, |acc, p| acc | p.bit())
}

fn prepare(state: &AuthorizationState, action: &Action) -> Result<Prepared, ActionError> {
    validate_state(state).map_err(ActionError::InvalidState)?;
    let dense = Dense::new(state);
    let actor = dense.index(&action.actor).ok_or_else(|| ActionError::UnknownPrincipal(action.actor.clone()))?;
    let target = dense.index(&action.target).ok_or_else(|| ActionError::UnknownPrincipal(action.target.clone()))?;
    if actor == target {
        return Err(ActionError::SelfAction(action.actor.clone()));
    }
    let cell = actor * dense.n + target;
    let mut grant_bit = 0;
    if action.scheme.is_grant() {
        let active = dense.holdings(&dense.pos, Some(&dense.inactive));
        let allowed = dense::grants(active[actor]) & compat_mask(action.scheme);
        grant_bit = dense::strongest(allowed)
            .ok_or_else(|| ActionError::UnauthorizedGrant { actor: action.actor.clone(), scheme: action.scheme })?;
        if dense.inactive[cell] & grant_bit != 0 {
            return Err(ActionError::GrantShadowed(dense.key(actor, target, grant_bit)));
        }
    } else if action.scheme.is_delete() {
        if dense.pos[cell] == 0 {
            return Err(ActionError::NoAuthorizationToRevoke {
                actor: action.actor.clone(),
                target: action.target.clone(),
            });
        }
    } else {
        let active = dense.holdings(&dense.pos, Some(&dense.inactive));
        if !dense::may_negate(active[actor]) {
            return Err(ActionError::UnauthorizedNegative(action.actor.clone()));
        }
    }
    Ok(Prepared { dense, actor, target, grant_bit })
}

/// Checks that `action` may be performed in `state`.
pub fn validate_action(state: &AuthorizationState, action: &Action) -> Result<(), ActionError> {
    prepare(state, action).map(|_| ())
}

/// Computes the successor state and the changes that produced it.
pub fn apply_action(state: &AuthorizationState, action: &Action) -> Result<(AuthorizationState, StepDelta), StepError> {
    evaluate(state, action).map(|step| (step.state, step.delta))
}

/// How the successor of a step was determined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evaluation {
    /// The well-founded model was total.
    WellFounded,
    /// The well-founded model left atoms undefined only through losses that
    /// justify themselves; the stable model with the least losses was used.
    LeastLossStable,
    /// No stable model exists because a loss undoes its own cause; losses
    /// stay once something triggered them.
    FirstTriggered,
}

/// Result of [`evaluate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Step {
    pub state: AuthorizationState,
    pub delta: StepDelta,
    pub evaluation: Evaluation,
}

/// [`apply_action`], also reporting how the successor was determined.
pub fn evaluate(state: &AuthorizationState, action: &Action) -> Result<Step, StepError> {
    let prep = prepare(state, action)?;
    let d = &prep.dense;
    let n = d.n;
    let input = StepInput {
        n,
        soa: d.soa,
        p0: &d.pos,
        i0: &d.inactive,
        scheme: action.scheme,
        actor: prep.actor,
        target: prep.target,
        grant_bit: prep.grant_bit,
        target_grants: dense::grants(d.holdings(&d.pos, Some(&d.inactive))[prep.target]),
        dependent: independence(n, d.soa, &d.pos, prep.actor)
            .into_iter()
            .map(|ind| dense::ALL_BITS & !dense::grants(ind))
            .collect(),
        fixed_del: vec![0; n * n],
        fixed_new: vec![0; n * n],
        fixed_inactive: vec![0; n * n],
    };
    let solved = successor_model(input).map_err(|undefined| StepError::NonTotalModel {
        undefined: undefined.into_iter().map(|(rel, x, y, bit)| describe(d, rel, x, y, bit)).collect(),
    })?;
    let model = solved.model;

    let inactive: Vec<u8> = model.inactive.iter().zip(&model.pos).map(|(i, p)| i & p).collect();
    let mut neg = d.neg.clone();
    if action.scheme.is_negative() {
        neg[prep.actor * n + prep.target] = true;
    }
    let post = d.to_state(&model.pos, &inactive, &neg);

    let mut delta = StepDelta::default();
    for x in 0..n {
        for y in 0..n {
            let cell = x * n + y;
            let survived = d.pos[cell] & !model.del[cell];
            let keys =
                |mask: u8| Permission::from_bits(mask).map(move |perm| d.key(x, y, perm.bit())).collect::<Vec<_>>();
            delta.deleted.extend(keys(model.del[cell] & d.pos[cell]));
            delta.added.extend(keys(model.new[cell] & !survived));
            delta.inactivated.extend(keys(inactive[cell] & !d.inactive[cell]));
            if neg[cell] && !d.neg[cell] {
                delta.neg_added.insert((d.names[x].clone(), d.names[y].clone()));
            }
        }
    }
    Ok(Step { state: post, delta, evaluation: solved.how })
}

/// Left fold of [`apply_action`], failing on the first invalid step.
pub fn simulate(
    state: &AuthorizationState,
    actions: &[Action],
) -> Result<(AuthorizationState, Vec<StepDelta>), SimulateError> {
    let mut current = state.clone();
    let mut deltas = Vec::with_capacity(actions.len());
    for (step, action) in actions.iter().enumerate() {
        let (next, delta) =
            apply_action(&current, action).map_err(|error| SimulateError { step, action: action.clone(), error })?;
        current = next;
        deltas.push(delta);
    }
    Ok((current, deltas))
}

fn describe(d: &Dense, rel: &str, x: usize, y: usize, bit: u8) -> String {
    if bit == 0 {
        format!("{rel}({})", d.names[x])
    } else if y == usize::MAX {
        format!("{rel}({},{})", d.names[x], dense::perm_of(bit))
    } else {
        format!("{rel}({})", d.key(x, y, bit))
    }
}

pub(crate) struct StepInput<'a> {
    pub n: usize,
    pub soa: usize,
    pub p0: &'a [u8],
    pub i0: &'a [u8],
    pub scheme: Scheme,
    pub actor: usize,
    pub target: usize,
    pub grant_bit: u8,
    /// What the revoked grantee could actively grant at `t`.
    pub target_grants: u8,
    /// Per principal, the permissions it cannot grant independently of the actor.
    pub dependent: Vec<u8>,
    /// Facts settled by the forwarding stratum.
    pub fixed_del: Vec<u8>,
    pub fixed_new: Vec<u8>,
    pub fixed_inactive: Vec<u8>,
}

/// Interpretation of the time-`t+1` atoms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct StepModel {
    pub del: Vec<u8>,
    pub new: Vec<u8>,
    pub pos: Vec<u8>,
    pub inactive: Vec<u8>,
    /// Chains over all authorizations.
    pub held: Vec<u8>,
    /// Chains over active authorizations.
    pub active_held: Vec<u8>,
}

impl StepModel {
    fn empty(n: usize) -> Self {
        StepModel {
            del: vec![0; n * n],
            new: vec![0; n * n],
            pos: vec![0; n * n],
            inactive: vec![0; n * n],
            held: vec![0; n],
            active_held: vec![0; n],
        }
    }

    /// Atoms present in `self` but not in `other`, as `(relation, x, y, bit)`.
    fn excess_over(&self, other: &StepModel) -> Vec<(&'static str, usize, usize, u8)> {
        let mut out = Vec::new();
        let n = self.held.len();
        let pairs: [(&'static str, &Vec<u8>, &Vec<u8>); 4] = [
            ("delete", &self.del, &other.del),
            ("new", &self.new, &other.new),
            ("pos", &self.pos, &other.pos),
            ("inactive", &self.inactive, &other.inactive),
        ];
        for (rel, a, b) in pairs {
            for (cell, (&ma, &mb)) in a.iter().zip(b.iter()).enumerate() {
                for perm in Permission::from_bits(ma & !mb) {
                    out.push((rel, cell / n, cell % n, perm.bit()));
                }
            }
        }
        for (rel, a, b) in [("chain", &self.held, &other.held), ("active_chain", &self.active_held, &other.active_held)]
        {
            for (x, (&ma, &mb)) in a.iter().zip(b.iter()).enumerate() {
                for perm in Permission::from_bits(ma & !mb) {
                    out.push((rel, x, usize::MAX, perm.bit()));
                }
            }
        }
        out
    }
}

type Undefined = Vec<(&'static str, usize, usize, u8)>;

/// The step model of a local scheme is computed in two strata. The first
/// runs without forwarding and settles which authorizations of the revoked
/// grantee are lost; the second keeps those losses, adds the forwarded
/// authorizations from the actor as facts, and recomputes everything else.
fn successor_model(mut input: StepInput<'_>) -> Result<Solved, Undefined> {
    if !input.scheme.is_local() {
        return solve(&input);
    }
    let first = solve(&input)?;
    let first_how = first.how;
    let first = first.model;
    let n = input.n;
    let (actor, target) = (input.actor, input.target);
    for k in 0..n {
        let cell = target * n + k;
        let lost_del = input.p0[cell] & first.del[cell];
        let lost_inactive = input.p0[cell] & first.inactive[cell] & !input.i0[cell];
        input.fixed_del[cell] = lost_del;
        input.fixed_inactive[cell] = lost_inactive;
        if k != actor {
            input.fixed_new[actor * n + k] |= (lost_del | lost_inactive) & !input.i0[cell] & input.target_grants;
        }
    }
    let mut second = solve(&input)?;
    if second.how == Evaluation::WellFounded {
        second.how = first_how;
    }
    Ok(second)
}

pub(crate) struct Solved {
    model: StepModel,
    how: Evaluation,
}

/// The well-founded model when it is total. Otherwise a stable model with
/// no self-supporting losses: first by refusing the undefined losses and
/// accepting back only those derived from what remains, then by enumerating the stable models and taking
/// the one whose deletions and inactivations are contained in every other's.
/// A loss that only justifies itself is not an effect of the action.
/// Without such a model, the undefined atoms are returned.
fn solve(input: &StepInput<'_>) -> Result<Solved, Undefined> {
    let (under, over) = well_founded(input, None);
    if under == over {
        return Ok(Solved { model: under, how: Evaluation::WellFounded });
    }
    let undefined = over.excess_over(&under);

    // Refuse every undefined new loss, then accept the refused losses that
    // the resulting model derives after all, until what is left is stable.
    // Losses that only support one another stay refused.
    let n = input.n;
    let mut refuse = Forced { on: StepModel::empty(n), off: StepModel::empty(n) };
    refuse.off.del = over.del.iter().zip(&under.del).map(|(o, u)| o & !u).collect();
    refuse.off.inactive =
        over.inactive.iter().zip(&under.inactive).zip(input.i0).map(|((o, u), i)| o & !u & !i).collect();
    let mut triggered = None;
    loop {
        let (low, high) = well_founded(input, Some(&refuse));
        if low != high {
            break;
        }
        let derived = gamma(input, &low);
        if derived == low {
            return Ok(Solved { model: low, how: Evaluation::LeastLossStable });
        }
        // an edge that is deleted is no longer inactivated
        let inactivated: Vec<u8> = derived.inactive.iter().zip(&derived.del).map(|(i, d)| i & !d).collect();
        let mut accepted = false;
        for (off, on, d) in [
            (&mut refuse.off.del, &mut refuse.on.del, &derived.del),
            (&mut refuse.off.inactive, &mut refuse.on.inactive, &inactivated),
        ] {
            for ((off, on), d) in off.iter_mut().zip(on.iter_mut()).zip(d) {
                accepted |= *off & d != 0;
                *on |= *off & d;
                *off &= !d;
            }
        }
        if !accepted {
            if derived.excess_over(&low).is_empty()
                && low.excess_over(&derived).iter().all(|&(rel, x, y, bit)| {
                    let forced = match rel {
                        "delete" => &refuse.on.del,
                        "inactive" => &refuse.on.inactive,
                        _ => return false,
                    };
                    forced[x * n + y] & bit != 0
                })
            {
                triggered = Some(low);
            }
            break;
        }
    }

    let mut models = Vec::new();
    let mut budget = STABLE_SEARCH_BUDGET;
    if !stable_models(input, None, &mut models, &mut budget) {
        return Err(undefined);
    }
    if models.is_empty() {
        return triggered.map(|model| Solved { model, how: Evaluation::FirstTriggered }).ok_or(undefined);
    }
    let inactivated = |m: &StepModel, c: usize| m.inactive[c] & m.pos[c] & !input.i0[c];
    let losses_within = |a: &StepModel, b: &StepModel| {
        a.del.iter().zip(&b.del).all(|(x, y)| x & !y == 0)
            && (0..n * n).all(|c| inactivated(a, c) & !(inactivated(b, c) | b.del[c]) == 0)
    };
    models
        .iter()
        .find(|m| models.iter().all(|other| losses_within(m, other)))
        .map(|m| Solved { model: m.clone(), how: Evaluation::LeastLossStable })
        .ok_or(undefined)
}

/// Bound on well-founded evaluations while searching for stable models.
const STABLE_SEARCH_BUDGET: usize = 512;

fn well_founded(input: &StepInput<'_>, forced: Option<&Forced>) -> (StepModel, StepModel) {
    let mut under = StepModel::empty(input.n).force(forced);
    loop {
        let over = gamma_forced(input, &under, forced);
        let next = gamma_forced(input, &over, forced);
        if next == under {
            return (under, over);
        }
        under = next;
    }
}

/// Collects every stable model into `out`, found by branching on atoms the well-founded model
/// leaves undefined. Returns false when the budget runs out.
fn stable_models(input: &StepInput<'_>, forced: Option<&Forced>, out: &mut Vec<StepModel>, budget: &mut usize) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    let (under, over) = well_founded(input, forced);
    let undefined = over.excess_over(&under);
    let Some(&(rel, x, y, bit)) = undefined.first() else {
        if gamma(input, &under) == under && !out.contains(&under) {
            out.push(under);
        }
        return true;
    };
    let n = input.n;
    for value in [false, true] {
        let mut f = forced.cloned().unwrap_or_else(|| Forced { on: StepModel::empty(n), off: StepModel::empty(n) });
        let side = if value { &mut f.on } else { &mut f.off };
        let slot = match rel {
            "delete" => &mut side.del[x * n + y],
            "new" => &mut side.new[x * n + y],
            "pos" => &mut side.pos[x * n + y],
            "inactive" => &mut side.inactive[x * n + y],
            "chain" => &mut side.held[x],
            _ => &mut side.active_held[x],
        };
        *slot |= bit;
        if !stable_models(input, Some(&f), out, budget) {
            return false;
        }
    }
    true
}

/// Strongest permission in `candidates` strictly weaker than `lost`, such
/// that nothing in `assumed` lies strictly between the two.
#[inline]
fn replacement(lost: u8, candidates: u8, assumed: u8) -> u8 {
    let below = dense::weaker_than(lost);
    let mut out = 0;
    for perm in Permission::from_bits(candidates & below) {
        let bit = perm.bit();
        let dominated = Permission::from_bits(assumed & below).any(|p2| dense::weaker_than(p2.bit()) & bit != 0);
        if !dominated {
            out |= bit;
        }
    }
    out
}

/// Least model of the step rules with every negative literal read from `assumed`.
fn gamma(input: &StepInput<'_>, assumed: &StepModel) -> StepModel {
    gamma_forced(input, assumed, None)
}

/// Atoms fixed true (`on`) and false (`off`) while branching.
#[derive(Clone, Debug)]
pub(crate) struct Forced {
    pub on: StepModel,
    pub off: StepModel,
}

impl StepModel {
    fn zip_with(&self, other: &StepModel, f: impl Fn(u8, u8) -> u8) -> StepModel {
        let map = |a: &Vec<u8>, b: &Vec<u8>| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
        StepModel {
            del: map(&self.del, &other.del),
            new: map(&self.new, &other.new),
            pos: map(&self.pos, &other.pos),
            inactive: map(&self.inactive, &other.inactive),
            held: map(&self.held, &other.held),
            active_held: map(&self.active_held, &other.active_held),
        }
    }

    fn force(&self, forced: Option<&Forced>) -> StepModel {
        match forced {
            None => self.clone(),
            Some(f) => self.zip_with(&f.on, |a, b| a | b).zip_with(&f.off, |a, b| a & !b),
        }
    }
}

fn gamma_forced(input: &StepInput<'_>, assumed: &StepModel, forced: Option<&Forced>) -> StepModel {
    let n = input.n;
    let scheme = input.scheme;
    let (actor, target) = (input.actor, input.target);
    let mut cur = StepModel::empty(n).force(forced);
    let neg_grants: Vec<u8> = assumed.held.iter().map(|&h| dense::grants(h)).collect();
    let neg_active_grants: Vec<u8> = assumed.active_held.iter().map(|&h| dense::grants(h)).collect();

    loop {
        let mut next = StepModel::empty(n);
        next.held = dense::holdings(n, input.soa, &cur.pos, None);
        next.active_held = dense::holdings(n, input.soa, &cur.pos, Some(&assumed.inactive));
        let pos_grants: Vec<u8> = cur.held.iter().map(|&h| dense::grants(h)).collect();
        let pos_active_grants: Vec<u8> = cur.active_held.iter().map(|&h| dense::grants(h)).collect();

        let incoming_deleted: Vec<bool> = (0..n).map(|y| (0..n).any(|p| cur.del[p * n + y] != 0)).collect();
        let incoming_inactivated: Vec<bool> =
            (0..n).map(|y| (0..n).any(|p| cur.inactive[p * n + y] & !input.i0[p * n + y] != 0)).collect();

        for x in 0..n {
            for y in 0..n {
                let cell = x * n + y;
                let p0 = input.p0[cell];

                // deletion
                let mut del = p0 & !neg_grants[x];
                if scheme.is_delete() && x == actor && y == target {
                    del |= p0;
                }
                if scheme == Scheme::SLD && y == target {
                    del |= p0 & input.dependent[x];
                }
                if scheme == Scheme::SGD && incoming_deleted[y] {
                    del |= p0 & input.dependent[x];
                }
                next.del[cell] = del | input.fixed_del[cell];

                // addition
                let mut new = 0;
                if scheme.is_grant() && x == actor && y == target {
                    new |= input.grant_bit;
                }
                new |= input.fixed_new[cell];
                for lost in Permission::from_bits(p0 & !neg_grants[x]) {
                    new |= replacement(lost.bit(), pos_grants[x], neg_grants[x]);
                }
                if scheme.is_negative() {
                    for lost in Permission::from_bits(p0 & !input.i0[cell] & !neg_active_grants[x]) {
                        new |= replacement(lost.bit(), pos_active_grants[x], neg_active_grants[x]);
                    }
                }
                next.new[cell] = new;

                next.pos[cell] = (p0 & !assumed.del[cell]) | cur.new[cell];

                // inactivation
                let pos = cur.pos[cell];
                let mut inactive = pos & !neg_active_grants[x];
                if scheme.is_negative() && x == actor && y == target {
                    inactive |= pos;
                }
                if matches!(scheme, Scheme::SLN | Scheme::SGN) && y == target {
                    inactive |= p0 & input.dependent[x];
                }
                if scheme == Scheme::SGN && incoming_inactivated[y] {
                    inactive |= p0 & input.dependent[x];
                }
                inactive |= (input.i0[cell] | input.fixed_inactive[cell]) & pos;
                next.inactive[cell] = inactive;
            }
        }

        let next = next.force(forced);
        if next == cur {
            return cur;
        }
        cur = next;
    }
}
