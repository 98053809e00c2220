//! A deliberately naive second implementation of the step semantics, used
//! only to cross-check [`crate::transition`].
//!
//! It works on plain sets of `(grantor, grantee, permission)` triples and
//! follows the revocation procedures as sequences of steps: revoke the
//! target edge, dominate dependent grantors for strong schemes, then cascade
//! (remove what a grantor is no longer entitled to grant, replace it with the
//! strongest weaker permission, forward it for local schemes) until nothing
//! changes. Chains are found by breadth-first search over
//! `(principal, permission of the last edge)` pairs. Nothing here is shared
//! with the fixpoint engine.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{
    can_issue_negative, grant_compat, r_pos, stronger, validate_state, Action, AuthKey, Authorization,
    AuthorizationState, Permission, Principal, Scheme,
};
use crate::planner::{Goal, Literal};
use crate::transition::{apply_action, validate_action, ActionError};

type Triple = (Principal, Principal, Permission);

fn triple(key: AuthKey) -> Triple {
    (key.grantor, key.grantee, key.permission)
}

fn may_grant(held: &BTreeSet<Permission>, perm: Permission) -> bool {
    held.iter().any(|&h| r_pos(h, perm))
}

/// Permissions each principal has through a rooted chain over `edges`,
/// never passing through `avoid`.
fn chains(
    principals: &BTreeSet<Principal>,
    soa: &Principal,
    edges: &BTreeSet<Triple>,
    avoid: Option<&Principal>,
) -> BTreeMap<Principal, BTreeSet<Permission>> {
    let mut reached: BTreeSet<(Principal, Permission)> = BTreeSet::new();
    let mut queue = VecDeque::new();
    if avoid != Some(soa) {
        // the source of authority starts every chain holding everything
        reached.insert((soa.clone(), Permission::TT));
        queue.push_back((soa.clone(), Permission::TT));
    }
    while let Some((x, via)) = queue.pop_front() {
        for (g, e, perm) in edges {
            if *g != x || avoid == Some(e) || !r_pos(via, *perm) {
                continue;
            }
            if reached.insert((e.clone(), *perm)) {
                queue.push_back((e.clone(), *perm));
            }
        }
    }
    let mut out: BTreeMap<Principal, BTreeSet<Permission>> =
        principals.iter().map(|p| (p.clone(), BTreeSet::new())).collect();
    for (p, via) in reached {
        let held = out.get_mut(&p).expect("edges stay within the principal set");
        held.extend(Permission::ALL.into_iter().filter(|&q| q == via || stronger(via, q)));
    }
    out
}

/// Like [`chains`], but an edge in `doomed` that its grantor is not
/// entitled to along a chain counts as the weaker edge that will replace it.
/// Edges in `gone` are already lost and count only through the replacement
/// their grantor would get when it may not grant them any more.
fn chains_anticipating(
    principals: &BTreeSet<Principal>,
    soa: &Principal,
    edges: &BTreeSet<Triple>,
    doomed: &BTreeSet<Triple>,
    gone: &BTreeSet<Triple>,
) -> BTreeMap<Principal, BTreeSet<Permission>> {
    let mut held = reach(principals, soa, edges, doomed);
    for _ in 0..=gone.len() * Permission::ALL.len() {
        let mut with: BTreeSet<Triple> = edges.clone();
        for (g, e, perm) in gone {
            if !may_grant(&held[g], *perm) {
                if let Some(q) = weaker_replacement(*perm, |q| may_grant(&held[g], q)) {
                    with.insert((g.clone(), e.clone(), q));
                }
            }
        }
        let next = reach(principals, soa, &with, doomed);
        if next == held {
            break;
        }
        held = next;
    }
    held
}

fn reach(
    principals: &BTreeSet<Principal>,
    soa: &Principal,
    edges: &BTreeSet<Triple>,
    doomed: &BTreeSet<Triple>,
) -> BTreeMap<Principal, BTreeSet<Permission>> {
    let mut reached: BTreeSet<(Principal, Permission)> = BTreeSet::new();
    let mut queue = VecDeque::from([(soa.clone(), Permission::TT)]);
    reached.insert((soa.clone(), Permission::TT));
    while let Some((x, via)) = queue.pop_front() {
        for t @ (g, e, perm) in edges {
            if *g != x {
                continue;
            }
            let conveyed = if r_pos(via, *perm) {
                Some(*perm)
            } else if doomed.contains(t) {
                weaker_replacement(*perm, |q| r_pos(via, q))
            } else {
                None
            };
            if let Some(q) = conveyed {
                if reached.insert((e.clone(), q)) {
                    queue.push_back((e.clone(), q));
                }
            }
        }
    }
    let mut out: BTreeMap<Principal, BTreeSet<Permission>> =
        principals.iter().map(|p| (p.clone(), BTreeSet::new())).collect();
    for (p, via) in reached {
        let held = out.get_mut(&p).expect("edges stay within the principal set");
        held.extend(Permission::ALL.into_iter().filter(|&q| q == via || stronger(via, q)));
    }
    out
}

/// Strongest permission among `allowed` that is strictly weaker than `lost`.
fn weaker_replacement(lost: Permission, allowed: impl Fn(Permission) -> bool) -> Option<Permission> {
    let below: Vec<Permission> = Permission::ALL.into_iter().filter(|&q| stronger(lost, q) && allowed(q)).collect();
    let maximal: Vec<Permission> = below.iter().copied().filter(|&q| !below.iter().any(|&r| stronger(r, q))).collect();
    match maximal.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

/// Which cascade is running: removal uses all chains, inactivation uses
/// active chains only.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Cascade {
    Delete,
    Inactivate,
}

#[derive(Clone)]
struct Run {
    principals: BTreeSet<Principal>,
    soa: Principal,
    scheme: Scheme,
    actor: Principal,
    target: Principal,
    before: BTreeSet<Triple>,
    inactive_before: BTreeSet<Triple>,
    /// Per principal, the permissions it cannot grant independently of the actor.
    dependent: BTreeMap<Principal, BTreeSet<Permission>>,
    granted: Option<Triple>,
    deleted: BTreeSet<Triple>,
    inactive: BTreeSet<Triple>,
    /// Lost triple to the weaker triple standing in for it.
    replaced: BTreeMap<Triple, Triple>,
    replaced_active: BTreeMap<Triple, Triple>,
    forwarded: BTreeSet<Triple>,
    rounds: usize,
}

impl Run {
    fn present(&self) -> BTreeSet<Triple> {
        let added = self
            .granted
            .iter()
            .chain(self.replaced.values())
            .chain(self.replaced_active.values())
            .chain(self.forwarded.iter());
        self.before.difference(&self.deleted).chain(added).cloned().collect()
    }

    /// What each principal holds once the losses so far have run their
    /// course: an original edge its grantor may no longer grant is counted
    /// as its eventual replacement, so the order principals are processed
    /// in does not matter.
    fn held(&self, cascade: Cascade) -> BTreeMap<Principal, BTreeSet<Permission>> {
        let present = self.present();
        let (live, doomed, gone): (BTreeSet<Triple>, BTreeSet<Triple>, BTreeSet<Triple>) = match cascade {
            Cascade::Delete => {
                let doomed = present.intersection(&self.before).cloned().collect();
                let gone = self.deleted.intersection(&self.before).filter(|t| !present.contains(*t)).cloned().collect();
                (present, doomed, gone)
            }
            Cascade::Inactivate => {
                let live: BTreeSet<Triple> = present.difference(&self.inactive).cloned().collect();
                if self.scheme.is_negative() {
                    let fresh = |t: &&Triple| self.before.contains(*t) && !self.inactive_before.contains(*t);
                    let doomed = live.iter().filter(fresh).cloned().collect();
                    let gone = present.intersection(&self.inactive).filter(fresh).cloned().collect();
                    (live, doomed, gone)
                } else {
                    (live, BTreeSet::new(), BTreeSet::new())
                }
            }
        };
        chains_anticipating(&self.principals, &self.soa, &live, &doomed, &gone)
    }

    fn lose(&mut self, cascade: Cascade, t: Triple) -> bool {
        match cascade {
            Cascade::Delete => self.deleted.insert(t),
            Cascade::Inactivate => self.inactive.insert(t),
        }
    }

    /// Edges into `into` from grantors that are not independent of the actor.
    fn dominated_into(&self, into: &Principal) -> Vec<Triple> {
        self.before.iter().filter(|(g, e, perm)| e == into && self.dependent[g].contains(perm)).cloned().collect()
    }

    /// Step 1, and for strong schemes the removal of dependent grantors'
    /// edges into the target. Returns the principals that may have lost.
    fn revoke(&mut self) -> Vec<Principal> {
        let cascade = if self.scheme.is_delete() { Cascade::Delete } else { Cascade::Inactivate };
        let mut hit: Vec<Triple> =
            self.before.iter().filter(|(g, e, _)| *g == self.actor && *e == self.target).cloned().collect();
        if self.scheme.is_strong() {
            hit.extend(self.dominated_into(&self.target.clone()));
        }
        for t in hit {
            self.lose(cascade, t);
        }
        vec![self.target.clone()]
    }

    /// Whether the global strong step fires for this cascade.
    fn dominates_globally(&self, cascade: Cascade) -> bool {
        matches!((cascade, self.scheme), (Cascade::Delete, Scheme::SGD) | (Cascade::Inactivate, Scheme::SGN))
    }

    /// Handles one principal `k` that may have lost a permission: removes
    /// what `k` may no longer grant, replaces it with the strongest weaker
    /// permission `k` may still grant. Returns principals that may have
    /// lost in turn.
    fn process(&mut self, cascade: Cascade, k: &Principal) -> Vec<Principal> {
        let held = self.held(cascade);
        let mut next = Vec::new();
        let mine: Vec<Triple> = match cascade {
            Cascade::Delete => self.before.iter().filter(|t| t.0 == *k).cloned().collect(),
            Cascade::Inactivate => self.present().into_iter().filter(|t| t.0 == *k).collect(),
        };
        for t in mine {
            if may_grant(&held[k], t.2) {
                continue;
            }
            if self.lose(cascade, t.clone()) {
                next.push(t.1.clone());
                if self.dominates_globally(cascade) {
                    for d in self.dominated_into(&t.1) {
                        self.lose(cascade, d);
                    }
                }
            }
        }

        // replacement, for every lost edge of k
        let replaceable: Vec<Triple> = self
            .before
            .iter()
            .filter(|t| t.0 == *k && !may_grant(&held[k], t.2))
            .filter(|t| cascade == Cascade::Delete || (self.scheme.is_negative() && !self.inactive_before.contains(*t)))
            .cloned()
            .collect();
        let table = match cascade {
            Cascade::Delete => &mut self.replaced,
            Cascade::Inactivate => &mut self.replaced_active,
        };
        for t in replaceable {
            let stand_in = weaker_replacement(t.2, |q| may_grant(&held[k], q)).map(|q| (k.clone(), t.1.clone(), q));
            let previous = match stand_in.clone() {
                Some(s) => table.insert(t.clone(), s.clone()),
                None => table.remove(&t),
            };
            if previous.is_some() && previous != stand_in {
                next.push(t.1.clone());
            }
        }

        if self.dominates_globally(cascade) {
            let lost_into: Vec<Principal> = match cascade {
                Cascade::Delete => self.deleted.iter().map(|t| t.1.clone()).collect(),
                Cascade::Inactivate => self.inactive.difference(&self.inactive_before).map(|t| t.1.clone()).collect(),
            };
            for m in lost_into {
                for d in self.dominated_into(&m) {
                    if self.lose(cascade, d) {
                        next.push(m.clone());
                    }
                }
            }
        }
        next
    }

    /// Processes losers in the order their losses arise, then sweeps every
    /// principal until a full sweep changes nothing.
    fn cascade(&mut self, cascade: Cascade, start: Vec<Principal>, bound: usize) {
        let mut queue: VecDeque<Principal> = start.into();
        loop {
            while let Some(k) = queue.pop_front() {
                let more = self.process(cascade, &k);
                queue.extend(more);
            }
            let snapshot = self.snapshot();
            let everyone: Vec<Principal> = self.principals.iter().cloned().collect();
            for k in &everyone {
                let more = self.process(cascade, k);
                queue.extend(more);
            }
            self.rounds += 1;
            assert!(self.rounds <= bound, "cascade did not settle within {bound} rounds");
            if queue.is_empty() && snapshot == self.snapshot() {
                return;
            }
        }
    }

    /// Runs the revocation steps and both cascades until neither changes
    /// anything.
    fn settle(&mut self) {
        let bound = self.before.len() + self.principals.len() * self.principals.len() + 1;
        let losers = if self.scheme.is_revocation() { self.revoke() } else { Vec::new() };
        let (del_start, inactive_start) =
            if self.scheme.is_delete() { (losers, Vec::new()) } else { (Vec::new(), losers) };
        let mut first = true;
        loop {
            let settled = self.snapshot();
            let starts = if first { (del_start.clone(), inactive_start.clone()) } else { (Vec::new(), Vec::new()) };
            first = false;
            self.cascade(Cascade::Delete, starts.0, bound);
            self.cascade(Cascade::Inactivate, starts.1, bound);
            if self.snapshot() == settled {
                return;
            }
        }
    }

    fn snapshot(&self) -> (usize, usize, BTreeSet<Triple>) {
        (self.deleted.len(), self.inactive.len(), self.present())
    }
}

/// Successor of `state` under `action`, computed procedurally.
///
/// # Panics
/// If the cascade runs for more rounds than there are present triples plus
/// ordered principal pairs, which would mean it fails to converge.
pub fn oracle_apply(state: &AuthorizationState, action: &Action) -> Result<AuthorizationState, ActionError> {
    validate_state(state).map_err(ActionError::InvalidState)?;
    let principals: BTreeSet<Principal> = state.principals().cloned().collect();
    let (actor, target) = (action.actor.clone(), action.target.clone());
    for p in [&actor, &target] {
        if !principals.contains(p) {
            return Err(ActionError::UnknownPrincipal(p.clone()));
        }
    }
    if actor == target {
        return Err(ActionError::SelfAction(actor));
    }
    let soa = state.soa().clone();
    let before: BTreeSet<Triple> = state.authorizations().map(|a| triple(a.key())).collect();
    let inactive_before: BTreeSet<Triple> =
        state.authorizations().filter(|a| !a.active).map(|a| triple(a.key())).collect();
    let active_edges: BTreeSet<Triple> = before.difference(&inactive_before).cloned().collect();
    let active_chains = chains(&principals, &soa, &active_edges, None);
    let actor_active = active_chains[&actor].clone();
    let target_active = active_chains[&target].clone();

    let mut granted = None;
    match action.scheme {
        s if s.is_grant() => {
            let allowed = |q: Permission| grant_compat(q, s) && may_grant(&actor_active, q);
            let candidates: Vec<Permission> = Permission::ALL.into_iter().filter(|&q| allowed(q)).collect();
            let top: Vec<Permission> =
                candidates.iter().copied().filter(|&q| !candidates.iter().any(|&r| stronger(r, q))).collect();
            let [perm] = top.as_slice() else {
                return Err(ActionError::UnauthorizedGrant { actor, scheme: s });
            };
            let t = (actor.clone(), target.clone(), *perm);
            if inactive_before.contains(&t) {
                return Err(ActionError::GrantShadowed(AuthKey::new(t.0, t.1, t.2)));
            }
            granted = Some(t);
        }
        s if s.is_delete() => {
            if !before.iter().any(|(g, e, _)| *g == actor && *e == target) {
                return Err(ActionError::NoAuthorizationToRevoke { actor, target });
            }
        }
        _ => {
            if !actor_active.iter().any(|&h| can_issue_negative(h)) {
                return Err(ActionError::UnauthorizedNegative(actor));
            }
        }
    }

    let independent = chains(&principals, &soa, &before, Some(&actor));
    let dependent = principals
        .iter()
        .map(|p| {
            let free =
                if *p == soa && soa != actor { Permission::ALL.into_iter().collect() } else { independent[p].clone() };
            let stuck = Permission::ALL.into_iter().filter(|&q| !may_grant(&free, q)).collect();
            (p.clone(), stuck)
        })
        .collect();

    let base = Run {
        principals,
        soa,
        scheme: action.scheme,
        actor,
        target,
        before,
        inactive_before: inactive_before.clone(),
        dependent,
        granted,
        deleted: BTreeSet::new(),
        inactive: inactive_before,
        replaced: BTreeMap::new(),
        replaced_active: BTreeMap::new(),
        forwarded: BTreeSet::new(),
        rounds: 0,
    };

    let mut run = base.clone();
    run.settle();
    if run.scheme.is_local() {
        // What the revoked grantee lost before forwarding stays lost; the
        // actor then reissues each of those that was active and that the
        // grantee could actively grant.
        let mut second = base;
        let gone = |t: &&Triple| t.0 == second.target;
        let lost_del: Vec<Triple> = run.deleted.iter().filter(gone).cloned().collect();
        let lost_inactive: Vec<Triple> = run
            .inactive
            .difference(&second.inactive_before)
            .filter(gone)
            .filter(|t| second.before.contains(*t))
            .cloned()
            .collect();
        for (_, k, perm) in lost_del.iter().chain(&lost_inactive) {
            let was_active = !second.inactive_before.contains(&(second.target.clone(), k.clone(), *perm));
            if *k != second.actor && was_active && may_grant(&target_active, *perm) {
                second.forwarded.insert((second.actor.clone(), k.clone(), *perm));
            }
        }
        second.deleted.extend(lost_del);
        second.inactive.extend(lost_inactive);
        second.settle();
        run = second;
    }

    let present = run.present();
    let mut out = AuthorizationState::with_principals(run.soa.clone(), run.principals.iter().cloned());
    for (g, e, perm) in &present {
        let active = !run.inactive.contains(&(g.clone(), e.clone(), *perm));
        out.insert(Authorization { grantor: g.clone(), grantee: e.clone(), permission: *perm, active });
    }
    for neg in state.negatives() {
        out.insert_negative(neg.grantor, neg.grantee);
    }
    if run.scheme.is_negative() {
        out.insert_negative(run.actor, run.target);
    }
    Ok(out)
}

/// Permissions each principal has, over all authorizations or only the
/// active ones.
pub fn oracle_held(state: &AuthorizationState, active_only: bool) -> BTreeMap<Principal, BTreeSet<Permission>> {
    let principals: BTreeSet<Principal> = state.principals().cloned().collect();
    let edges: BTreeSet<Triple> =
        state.authorizations().filter(|a| a.active || !active_only).map(|a| triple(a.key())).collect();
    chains(&principals, state.soa(), &edges, None)
}

/// Principals with an active chain, or with an active authorization from a
/// grantor able to actively grant it.
pub fn oracle_access(state: &AuthorizationState) -> BTreeSet<Principal> {
    let held = oracle_held(state, true);
    let mut out: BTreeSet<Principal> = held.iter().filter(|(_, h)| !h.is_empty()).map(|(p, _)| p.clone()).collect();
    for a in state.authorizations().filter(|a| a.active) {
        if may_grant(&held[&a.grantor], a.permission) {
            out.insert(a.grantee);
        }
    }
    out
}

fn held_pairs(held: &BTreeMap<Principal, BTreeSet<Permission>>) -> BTreeSet<(Principal, Permission)> {
    held.iter().flat_map(|(p, perms)| perms.iter().map(move |&perm| (p.clone(), perm))).collect()
}

/// Planner cost by set comparison of [`oracle_held`] and [`oracle_access`].
pub fn oracle_cost(pre: &AuthorizationState, post: &AuthorizationState) -> usize {
    let (a, b) = (held_pairs(&oracle_held(pre, true)), held_pairs(&oracle_held(post, true)));
    let (x, y) = (oracle_access(pre), oracle_access(post));
    a.symmetric_difference(&b).count() + x.symmetric_difference(&y).count()
}

fn oracle_goal(pre: &AuthorizationState, post: &AuthorizationState, goal: &Goal) -> bool {
    let (h0, h1) = (oracle_held(pre, true), oracle_held(post, true));
    let (a0, a1) = (oracle_access(pre), oracle_access(post));
    let held = |h: &BTreeMap<Principal, BTreeSet<Permission>>, p: &Principal| h.get(p).cloned().unwrap_or_default();
    goal.literals().iter().all(|lit| match lit {
        Literal::Access(p) => a1.contains(p),
        Literal::NotAccess(p) => !a1.contains(p),
        Literal::Holds(p, perm) => held(&h1, p).contains(perm),
        Literal::NotHolds(p, perm) => !held(&h1, p).contains(perm),
        Literal::Unchanged(p) => a0.contains(p) == a1.contains(p) && held(&h0, p) == held(&h1, p),
    })
}

/// Brute-force planning: every action of `actor` that [`oracle_apply`]
/// accepts and whose successor meets `goal`, with its cost.
pub fn oracle_plan(
    state: &AuthorizationState,
    actor: &Principal,
    goal: &Goal,
) -> BTreeSet<(Action, usize, AuthorizationState)> {
    let mut out = BTreeSet::new();
    for scheme in Scheme::ALL {
        for target in state.principals() {
            let action = Action::new(scheme, actor.clone(), target.clone());
            if let Ok(post) = oracle_apply(state, &action) {
                if oracle_goal(state, &post, goal) {
                    out.insert((action, oracle_cost(state, &post), post));
                }
            }
        }
    }
    out
}

/// Name of the `i`-th generated principal: `A`..`Z`, then `P26`, `P27`, ...
pub fn principal_name(i: usize) -> Principal {
    let name = if i < 26 { String::from(char::from(b'A' + i as u8)) } else { format!("P{i}") };
    Principal::new(name).expect("generated names are valid")
}

/// `n` principals named by [`principal_name`], the first being the SOA, and
/// no authorizations.
pub fn empty_state(n: usize) -> AuthorizationState {
    assert!(n >= 1, "a state needs its source of authority");
    AuthorizationState::with_principals(principal_name(0), (0..n).map(principal_name))
}

/// Every action valid in `state` whose successor the engine can compute, in
/// scheme, actor, target order.
pub fn valid_actions(state: &AuthorizationState) -> Vec<Action> {
    let principals: Vec<&Principal> = state.principals().collect();
    let mut out = Vec::new();
    for scheme in Scheme::ALL {
        for &actor in &principals {
            for &target in &principals {
                if actor == target {
                    continue;
                }
                let action = Action::new(scheme, actor.clone(), target.clone());
                if validate_action(state, &action).is_ok() {
                    out.push(action);
                }
            }
        }
    }
    out
}

/// A state reached from [`empty_state`]`(n)` by `depth` uniformly chosen
/// valid actions, with the trace that produced it. Deterministic per seed.
/// Stops early when no action is valid.
pub fn random_reachable_state(seed: u64, n: usize, depth: usize) -> (AuthorizationState, Vec<Action>) {
    random_walk(seed, &empty_state(n), depth)
}

/// Like [`random_reachable_state`], starting from `start`.
pub fn random_walk(seed: u64, start: &AuthorizationState, depth: usize) -> (AuthorizationState, Vec<Action>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = start.clone();
    let mut trace = Vec::with_capacity(depth);
    for _ in 0..depth {
        let mut options = valid_actions(&state);
        options.shuffle(&mut rng);
        let Some((next, action)) = options.into_iter().find_map(|a| apply_action(&state, &a).ok().map(|(s, _)| (s, a)))
        else {
            break;
        };
        state = next;
        trace.push(action);
    }
    (state, trace)
}
