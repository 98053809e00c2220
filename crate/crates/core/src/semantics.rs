//! Derived predicates over a single state: rooted delegation chains,
//! grant capability, independence, and access rights. Each is a least
//! fixpoint over `(principal, permission)` pairs.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dense::{self, Dense};
use crate::model::{AuthorizationState, Permission, Principal};

/// Whether chains may use inactive authorizations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChainMode {
    All,
    ActiveOnly,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("unknown principal {0}")]
    UnknownPrincipal(Principal),
}

/// Per-principal held permissions of a state, computed once.
#[derive(Clone, Debug)]
pub struct Holdings {
    dense: Dense,
    all: Vec<u8>,
    active: Vec<u8>,
}

impl Holdings {
    pub fn new(state: &AuthorizationState) -> Self {
        let dense = Dense::new(state);
        let all = dense.holdings(&dense.pos, None);
        let active = dense.holdings(&dense.pos, Some(&dense.inactive));
        Holdings { dense, all, active }
    }

    fn idx(&self, p: &Principal) -> Result<usize, QueryError> {
        self.dense.index(p).ok_or_else(|| QueryError::UnknownPrincipal(p.clone()))
    }

    fn held(&self, mode: ChainMode) -> &[u8] {
        match mode {
            ChainMode::All => &self.all,
            ChainMode::ActiveOnly => &self.active,
        }
    }

    pub fn holds(&self, p: &Principal, perm: Permission, mode: ChainMode) -> Result<bool, QueryError> {
        Ok(self.held(mode)[self.idx(p)?] & perm.bit() != 0)
    }

    /// Every permission `p` holds, strongest first.
    pub fn held_by(&self, p: &Principal, mode: ChainMode) -> Result<Vec<Permission>, QueryError> {
        Ok(Permission::from_bits(self.held(mode)[self.idx(p)?]).collect())
    }

    pub fn can_grant(&self, p: &Principal, perm: Permission, mode: ChainMode) -> Result<bool, QueryError> {
        Ok(dense::grants(self.held(mode)[self.idx(p)?]) & perm.bit() != 0)
    }

    pub fn can_issue_neg_auth(&self, p: &Principal, mode: ChainMode) -> Result<bool, QueryError> {
        Ok(dense::may_negate(self.held(mode)[self.idx(p)?]))
    }

    pub fn access_right(&self, p: &Principal) -> Result<bool, QueryError> {
        let target = self.idx(p)?;
        Ok(access_flags(&self.dense, &self.active)[target])
    }

    pub fn access_set(&self) -> BTreeSet<Principal> {
        access_flags(&self.dense, &self.active)
            .into_iter()
            .enumerate()
            .filter(|&(_, ok)| ok)
            .map(|(i, _)| self.dense.names[i].clone())
            .collect()
    }

    pub fn holders(&self, perm: Permission, mode: ChainMode) -> BTreeSet<Principal> {
        self.held(mode)
            .iter()
            .enumerate()
            .filter(|&(_, &held)| held & perm.bit() != 0)
            .map(|(i, _)| self.dense.names[i].clone())
            .collect()
    }

    /// All `(principal, permission)` pairs held in `mode`.
    pub fn pairs(&self, mode: ChainMode) -> BTreeSet<(Principal, Permission)> {
        self.held(mode)
            .iter()
            .enumerate()
            .flat_map(|(i, &held)| Permission::from_bits(held).map(move |perm| (i, perm)))
            .map(|(i, perm)| (self.dense.names[i].clone(), perm))
            .collect()
    }
}

/// Access right: an active rooted chain for some permission, or an active
/// authorization from someone able to actively grant it.
fn access_flags(d: &Dense, active: &[u8]) -> Vec<bool> {
    let n = d.n;
    let mut flags: Vec<bool> = active.iter().map(|&held| held != 0).collect();
    for p1 in 0..n {
        let grantable = dense::grants(active[p1]);
        for p in 0..n {
            let cell = p1 * n + p;
            if d.pos[cell] & !d.inactive[cell] & grantable != 0 {
                flags[p] = true;
            }
        }
    }
    flags
}

/// Masks of `a` such that `x` has delegation rights independent of `avoid`
/// w.r.t. `a`, indexed by `x`. Only `TT`/`TF` edges are traversed; the SOA
/// is independent of everyone else.
pub(crate) fn independence(n: usize, soa: usize, pos: &[u8], avoid: usize) -> Vec<u8> {
    let mut ind = vec![0u8; n];
    if soa != avoid {
        ind[soa] = dense::ALL_BITS;
    }
    let mut changed = true;
    while changed {
        changed = false;
        for p in 0..n {
            let grantable = dense::grants(ind[p]);
            if grantable == 0 {
                continue;
            }
            for x in 0..n {
                if x == avoid {
                    continue;
                }
                let edge = pos[p * n + x] & (dense::TT | dense::TF) & grantable;
                let next = ind[x] | edge;
                if next != ind[x] {
                    ind[x] = next;
                    changed = true;
                }
            }
        }
    }
    ind
}

pub fn holds_chain(
    state: &AuthorizationState,
    p: &Principal,
    perm: Permission,
    mode: ChainMode,
) -> Result<bool, QueryError> {
    Holdings::new(state).holds(p, perm, mode)
}

/// `mode = ActiveOnly` gives "can actively grant".
pub fn can_grant(
    state: &AuthorizationState,
    p: &Principal,
    perm: Permission,
    mode: ChainMode,
) -> Result<bool, QueryError> {
    Holdings::new(state).can_grant(p, perm, mode)
}

pub fn can_issue_neg_auth(state: &AuthorizationState, p: &Principal, mode: ChainMode) -> Result<bool, QueryError> {
    Holdings::new(state).can_issue_neg_auth(p, mode)
}

/// Whether `j` has a rooted chain w.r.t. `perm` avoiding `i`, where `perm`
/// is the permission of the final authorization into `j`.
pub fn independent(
    state: &AuthorizationState,
    j: &Principal,
    i: &Principal,
    perm: Permission,
) -> Result<bool, QueryError> {
    let d = Dense::new(state);
    let jx = d.index(j).ok_or_else(|| QueryError::UnknownPrincipal(j.clone()))?;
    let ix = d.index(i).ok_or_else(|| QueryError::UnknownPrincipal(i.clone()))?;
    Ok(independence(d.n, d.soa, &d.pos, ix)[jx] & perm.bit() != 0)
}

pub fn access_right(state: &AuthorizationState, p: &Principal) -> Result<bool, QueryError> {
    Holdings::new(state).access_right(p)
}

pub fn query_access(state: &AuthorizationState) -> BTreeSet<Principal> {
    Holdings::new(state).access_set()
}

pub fn query_holders(state: &AuthorizationState, perm: Permission, mode: ChainMode) -> BTreeSet<Principal> {
    Holdings::new(state).holders(perm, mode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use Permission::*;

    fn p(name: &str) -> Principal {
        Principal::new(name).unwrap()
    }

    fn set(names: &[&str]) -> BTreeSet<Principal> {
        names.iter().map(|n| p(n)).collect()
    }

    #[test]
    fn small_tree_holders() {
        let s = scenarios::small_tree();
        assert!(holds_chain(&s, &p("B"), TT, ChainMode::All).unwrap());
        assert!(!holds_chain(&s, &p("E"), FF, ChainMode::All).unwrap());
        assert_eq!(query_holders(&s, TT, ChainMode::All), set(&["A", "B", "D"]));
        assert_eq!(query_holders(&s, TF, ChainMode::All), set(&["A", "B", "C", "D"]));
    }

    #[test]
    fn soa_always_holds() {
        let s = AuthorizationState::with_principals(p("A"), [p("B")]);
        assert!(holds_chain(&s, &p("A"), TT, ChainMode::ActiveOnly).unwrap());
        assert!(can_grant(&s, &p("A"), TT, ChainMode::All).unwrap());
        assert_eq!(query_holders(&s, FF, ChainMode::All), set(&["A"]));
        assert_eq!(query_access(&s), set(&["A"]));
    }

    #[test]
    fn baseline_capabilities() {
        let s = scenarios::baseline();
        assert!(can_grant(&s, &p("B"), TF, ChainMode::All).unwrap());
        assert!(can_grant(&s, &p("E"), FF, ChainMode::All).unwrap());
        assert!(can_issue_neg_auth(&s, &p("A"), ChainMode::All).unwrap());
        assert!(can_issue_neg_auth(&s, &p("E"), ChainMode::All).unwrap());
        assert!(!can_issue_neg_auth(&s, &p("F"), ChainMode::All).unwrap());
        assert!(access_right(&s, &p("F")).unwrap());
        assert_eq!(query_access(&s), set(&["A", "B", "C", "D", "E", "F"]));
    }

    #[test]
    fn independence_follows_edge_permissions() {
        let s = scenarios::baseline();
        assert!(independent(&s, &p("D"), &p("B"), TT).unwrap());
        assert!(!independent(&s, &p("D"), &p("A"), FF).unwrap());
        // no TF edge into D, so independence w.r.t. TF is not derived
        assert!(!independent(&s, &p("D"), &p("B"), TF).unwrap());
        for other in ["B", "C", "D", "E", "F"] {
            for perm in Permission::ALL {
                assert!(independent(&s, &p("A"), &p(other), perm).unwrap());
            }
        }
    }

    #[test]
    fn strong_global_delete_access() {
        assert_eq!(query_access(&scenarios::after_sgd()), set(&["A", "D"]));
        assert!(!access_right(&scenarios::after_sgd(), &p("F")).unwrap());
    }

    #[test]
    fn inactive_edges_break_active_chains_only() {
        let s = scenarios::after_wln();
        assert!(holds_chain(&s, &p("B"), TT, ChainMode::All).unwrap());
        assert!(!holds_chain(&s, &p("B"), TT, ChainMode::ActiveOnly).unwrap());
        assert!(holds_chain(&s, &p("B"), FF, ChainMode::ActiveOnly).unwrap());
    }

    #[test]
    fn unknown_principal_is_an_error() {
        let s = scenarios::baseline();
        assert_eq!(holds_chain(&s, &p("Z"), TT, ChainMode::All), Err(QueryError::UnknownPrincipal(p("Z"))));
    }
}
