//! Dense, index-based view of a state used by the fixpoint evaluators.
//!
//! Principals are numbered by their sorted position. Each ordered pair
//! `(grantor, grantee)` carries a 4-bit mask of the permissions present on
//! that edge, using [`Permission::bit`].

use alloc::vec;
use alloc::vec::Vec;

use crate::model::{AuthKey, Authorization, AuthorizationState, Permission, Principal};

pub(crate) const ALL_BITS: u8 = 0b1111;
pub(crate) const TT: u8 = 1;
pub(crate) const TF: u8 = 2;
pub(crate) const FT: u8 = 4;
pub(crate) const FF: u8 = 8;

/// Permissions held by virtue of holding each bit (reflexive-downward closure
/// under "stronger").
const CLOSURE: [u8; 4] = [ALL_BITS, TF | FF, FT | FF, FF];

/// Permissions grantable by a holder of each bit.
const GRANTS: [u8; 4] = [ALL_BITS, TF | FF, 0, 0];

const NEGATORS: u8 = TT | FT;

#[inline]
fn each_bit(mask: u8) -> impl Iterator<Item = usize> {
    (0..4).filter(move |i| mask & (1 << i) != 0)
}

/// Downward closure of a set of held permissions.
#[inline]
pub(crate) fn closure(mask: u8) -> u8 {
    each_bit(mask).fold(0, |acc, i| acc | CLOSURE[i])
}

/// Permissions grantable by someone holding `held`.
#[inline]
pub(crate) fn grants(held: u8) -> u8 {
    each_bit(held).fold(0, |acc, i| acc | GRANTS[i])
}

#[inline]
pub(crate) fn may_negate(held: u8) -> bool {
    held & NEGATORS != 0
}

/// Bits strictly weaker than the single permission `bit`.
#[inline]
pub(crate) fn weaker_than(bit: u8) -> u8 {
    closure(bit) & !bit
}

/// Strongest permission in `candidates` that no other candidate dominates,
/// when that maximum is unique.
pub(crate) fn strongest(candidates: u8) -> Option<u8> {
    let maximal: Vec<u8> = each_bit(candidates)
        .map(|i| 1u8 << i)
        .filter(|&b| !each_bit(candidates).any(|j| (1u8 << j) != b && weaker_than(1 << j) & b != 0))
        .collect();
    match maximal.as_slice() {
        [one] => Some(*one),
        _ => None,
    }
}

pub(crate) fn perm_of(bit: u8) -> Permission {
    match bit {
        TT => Permission::TT,
        TF => Permission::TF,
        FT => Permission::FT,
        FF => Permission::FF,
        _ => unreachable!("not a single permission bit: {bit:#06b}"),
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Dense {
    pub names: Vec<Principal>,
    pub n: usize,
    pub soa: usize,
    /// Present positive authorizations, `n * n` masks.
    pub pos: Vec<u8>,
    /// Inactive subset of `pos`.
    pub inactive: Vec<u8>,
    /// Negative authorizations, `n * n` flags.
    pub neg: Vec<bool>,
}

impl Dense {
    /// Assumes the state passed `validate_state`.
    pub fn new(state: &AuthorizationState) -> Self {
        let names: Vec<Principal> = state.principals().cloned().collect();
        let n = names.len();
        let index = |p: &Principal| names.binary_search(p).expect("validated state");
        let soa = index(state.soa());
        let mut pos = vec![0u8; n * n];
        let mut inactive = vec![0u8; n * n];
        for auth in state.authorizations() {
            let cell = index(&auth.grantor) * n + index(&auth.grantee);
            pos[cell] |= auth.permission.bit();
            if !auth.active {
                inactive[cell] |= auth.permission.bit();
            }
        }
        let mut neg = vec![false; n * n];
        for nauth in state.negatives() {
            neg[index(&nauth.grantor) * n + index(&nauth.grantee)] = true;
        }
        Dense { names, n, soa, pos, inactive, neg }
    }

    pub fn index(&self, p: &Principal) -> Option<usize> {
        self.names.binary_search(p).ok()
    }

    /// Rebuilds a state from masks over the same principal set.
    pub fn to_state(&self, pos: &[u8], inactive: &[u8], neg: &[bool]) -> AuthorizationState {
        let mut state = AuthorizationState::with_principals(self.names[self.soa].clone(), self.names.iter().cloned());
        for x in 0..self.n {
            for y in 0..self.n {
                let cell = x * self.n + y;
                for perm in Permission::from_bits(pos[cell]) {
                    state.insert(Authorization {
                        grantor: self.names[x].clone(),
                        grantee: self.names[y].clone(),
                        permission: perm,
                        active: inactive[cell] & perm.bit() == 0,
                    });
                }
                if neg[cell] {
                    state.insert_negative(self.names[x].clone(), self.names[y].clone());
                }
            }
        }
        state
    }

    pub fn key(&self, x: usize, y: usize, bit: u8) -> AuthKey {
        AuthKey::new(self.names[x].clone(), self.names[y].clone(), perm_of(bit))
    }

    /// Least fixpoint of rooted-chain holdings over the edges in `pos`,
    /// skipping any edge bit set in `blocked`.
    pub fn holdings(&self, pos: &[u8], blocked: Option<&[u8]>) -> Vec<u8> {
        holdings(self.n, self.soa, pos, blocked)
    }
}

pub(crate) fn holdings(n: usize, soa: usize, pos: &[u8], blocked: Option<&[u8]>) -> Vec<u8> {
    let mut held = vec![0u8; n];
    held[soa] = ALL_BITS;
    let mut changed = true;
    while changed {
        changed = false;
        for q in 0..n {
            let grantable = grants(held[q]);
            if grantable == 0 {
                continue;
            }
            for p in 0..n {
                let cell = q * n + p;
                let mut edge = pos[cell] & grantable;
                if let Some(blocked) = blocked {
                    edge &= !blocked[cell];
                }
                if edge == 0 {
                    continue;
                }
                let next = held[p] | closure(edge);
                if next != held[p] {
                    held[p] = next;
                    changed = true;
                }
            }
        }
    }
    held
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{r_pos, stronger};

    #[test]
    fn masks_match_relations() {
        for a in Permission::ALL {
            for b in Permission::ALL {
                assert_eq!(grants(a.bit()) & b.bit() != 0, r_pos(a, b));
                assert_eq!(weaker_than(a.bit()) & b.bit() != 0, stronger(a, b));
            }
        }
    }

    #[test]
    fn strongest_is_unique_maximum() {
        assert_eq!(strongest(ALL_BITS), Some(TT));
        assert_eq!(strongest(TF | FF), Some(TF));
        assert_eq!(strongest(TF | FT | FF), None);
        assert_eq!(strongest(0), None);
    }
}
