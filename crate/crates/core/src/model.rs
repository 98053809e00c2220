//! Domain types: permissions, principals, authorizations, actions, and the
//! authorization state for a single fixed (access type, object) pair.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

/// The `(b1, b2)` pair of a positive authorization.
///
/// `b1` is the right to issue positive authorizations, `b2` the right to
/// issue negative ones. The sign is not part of the value: negative
/// authorizations are a separate type and always carry `(-, F, F)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Permission {
    TT,
    TF,
    FT,
    FF,
}

impl Permission {
    pub const ALL: [Permission; 4] = [Permission::TT, Permission::TF, Permission::FT, Permission::FF];

    pub fn may_delegate(self) -> bool {
        matches!(self, Permission::TT | Permission::TF)
    }

    pub fn may_negate(self) -> bool {
        matches!(self, Permission::TT | Permission::FT)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Permission::TT => "TT",
            Permission::TF => "TF",
            Permission::FT => "FT",
            Permission::FF => "FF",
        }
    }

    /// Graph label in the `+,b1,b2` convention.
    pub fn label(self) -> &'static str {
        match self {
            Permission::TT => "+,T,T",
            Permission::TF => "+,T,F",
            Permission::FT => "+,F,T",
            Permission::FF => "+,F,F",
        }
    }

    pub(crate) fn bit(self) -> u8 {
        match self {
            Permission::TT => 1,
            Permission::TF => 2,
            Permission::FT => 4,
            Permission::FF => 8,
        }
    }

    pub(crate) fn from_bits(mask: u8) -> impl Iterator<Item = Permission> {
        Permission::ALL.into_iter().filter(move |p| mask & p.bit() != 0)
    }
}

impl fmt::Display for Permission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Permission {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "TT" => Ok(Permission::TT),
            "TF" => Ok(Permission::TF),
            "FT" => Ok(Permission::FT),
            "FF" => Ok(Permission::FF),
            other => Err(ModelError::BadPermission(other.to_string())),
        }
    }
}

/// `granter R granted` restricted to positive permissions.
pub fn r_pos(granter: Permission, granted: Permission) -> bool {
    use Permission::*;
    matches!((granter, granted), (TT, TT) | (TT, TF) | (TT, FT) | (TT, FF) | (TF, TF) | (TF, FF))
}

/// Whether a holder of `perm` may issue a negative authorization `(-,F,F)`.
pub fn can_issue_negative(perm: Permission) -> bool {
    matches!(perm, Permission::TT | Permission::FT)
}

/// Strict "stronger than": the permissions grantable by `a` strictly contain
/// those grantable by `b`.
pub fn stronger(a: Permission, b: Permission) -> bool {
    use Permission::*;
    matches!((a, b), (TT, TF) | (TT, FT) | (TT, FF) | (TF, FF) | (FT, FF))
}

/// Whether `perm` may be produced by the grant scheme `scheme`.
///
/// Always false for revocation schemes.
pub fn grant_compat(perm: Permission, scheme: Scheme) -> bool {
    use Permission::*;
    match scheme {
        Scheme::GrantTT => true,
        Scheme::GrantTF => matches!(perm, TF | FF),
        Scheme::GrantFT => perm == FT,
        Scheme::GrantFF => perm == FF,
        _ => false,
    }
}

/// Opaque, case-sensitive principal name: non-empty, no whitespace.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Principal(String);

impl Principal {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        if name.is_empty() || name.chars().any(char::is_whitespace) {
            return Err(ModelError::BadPrincipal(name));
        }
        Ok(Principal(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Principal {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Principal::new(s)
    }
}

impl TryFrom<&str> for Principal {
    type Error = ModelError;

    fn try_from(s: &str) -> Result<Self, Self::Error> {
        Principal::new(s)
    }
}

/// The set key of a positive authorization.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuthKey {
    pub grantor: Principal,
    pub grantee: Principal,
    pub permission: Permission,
}

impl AuthKey {
    pub fn new(grantor: Principal, grantee: Principal, permission: Permission) -> Self {
        AuthKey { grantor, grantee, permission }
    }
}

impl fmt::Display for AuthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}:{}", self.grantor, self.grantee, self.permission)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Authorization {
    pub grantor: Principal,
    pub grantee: Principal,
    pub permission: Permission,
    pub active: bool,
}

impl Authorization {
    pub fn key(&self) -> AuthKey {
        AuthKey::new(self.grantor.clone(), self.grantee.clone(), self.permission)
    }
}

/// A negative authorization; always active, always `(-,F,F)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NegativeAuthorization {
    pub grantor: Principal,
    pub grantee: Principal,
}

/// The twelve action kinds: four grants and eight revocation schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    GrantTT,
    GrantTF,
    GrantFT,
    GrantFF,
    /// Weak local delete.
    WLD,
    /// Weak global delete.
    WGD,
    /// Strong local delete.
    SLD,
    /// Strong global delete.
    SGD,
    /// Weak local negative.
    WLN,
    /// Weak global negative.
    WGN,
    /// Strong local negative.
    SLN,
    /// Strong global negative.
    SGN,
}

impl Scheme {
    pub const ALL: [Scheme; 12] = [
        Scheme::GrantTT,
        Scheme::GrantTF,
        Scheme::GrantFT,
        Scheme::GrantFF,
        Scheme::WLD,
        Scheme::WGD,
        Scheme::SLD,
        Scheme::SGD,
        Scheme::WLN,
        Scheme::WGN,
        Scheme::SLN,
        Scheme::SGN,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::GrantTT => "grantTT",
            Scheme::GrantTF => "grantTF",
            Scheme::GrantFT => "grantFT",
            Scheme::GrantFF => "grantFF",
            Scheme::WLD => "WLD",
            Scheme::WGD => "WGD",
            Scheme::SLD => "SLD",
            Scheme::SGD => "SGD",
            Scheme::WLN => "WLN",
            Scheme::WGN => "WGN",
            Scheme::SLN => "SLN",
            Scheme::SGN => "SGN",
        }
    }

    pub fn is_grant(self) -> bool {
        matches!(self, Scheme::GrantTT | Scheme::GrantTF | Scheme::GrantFT | Scheme::GrantFF)
    }

    pub fn is_delete(self) -> bool {
        matches!(self, Scheme::WLD | Scheme::WGD | Scheme::SLD | Scheme::SGD)
    }

    pub fn is_negative(self) -> bool {
        matches!(self, Scheme::WLN | Scheme::WGN | Scheme::SLN | Scheme::SGN)
    }

    pub fn is_revocation(self) -> bool {
        self.is_delete() || self.is_negative()
    }

    /// Local propagation: only the direct grantee is affected.
    pub fn is_local(self) -> bool {
        matches!(self, Scheme::WLD | Scheme::SLD | Scheme::WLN | Scheme::SLN)
    }

    pub fn is_global(self) -> bool {
        matches!(self, Scheme::WGD | Scheme::SGD | Scheme::WGN | Scheme::SGN)
    }

    /// Strong dominance: grants to the grantee from dependent grantors are revoked too.
    pub fn is_strong(self) -> bool {
        matches!(self, Scheme::SLD | Scheme::SGD | Scheme::SLN | Scheme::SGN)
    }

    /// The delete scheme with the same propagation and dominance as a negative one,
    /// and vice versa.
    pub fn resilience_counterpart(self) -> Option<Scheme> {
        Some(match self {
            Scheme::WLD => Scheme::WLN,
            Scheme::WGD => Scheme::WGN,
            Scheme::SLD => Scheme::SLN,
            Scheme::SGD => Scheme::SGN,
            Scheme::WLN => Scheme::WLD,
            Scheme::WGN => Scheme::WGD,
            Scheme::SLN => Scheme::SLD,
            Scheme::SGN => Scheme::SGD,
            _ => return None,
        })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL.into_iter().find(|scheme| scheme.as_str() == s).ok_or_else(|| ModelError::BadScheme(s.to_string()))
    }
}

/// One step: `actor` performs `scheme` affecting `target`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Action {
    pub scheme: Scheme,
    pub actor: Principal,
    pub target: Principal,
}

impl Action {
    pub fn new(scheme: Scheme, actor: Principal, target: Principal) -> Self {
        Action { scheme, actor, target }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.scheme, self.actor, self.target)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid principal name {0:?}")]
    BadPrincipal(String),
    #[error("invalid permission {0:?}; expected one of TT, TF, FT, FF")]
    BadPermission(String),
    #[error("unknown scheme {0:?}")]
    BadScheme(String),
}

/// One violation of the structural invariants of an [`AuthorizationState`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Error)]
pub enum StructuralError {
    #[error("source of authority {0} is not a principal")]
    SoaNotPrincipal(Principal),
    #[error("unknown principal {0}")]
    UnknownPrincipal(Principal),
    #[error("self-authorization {0} -> {0}")]
    SelfAuthorization(Principal),
    #[error("duplicate positive authorization {0}")]
    DuplicateAuthorization(AuthKey),
    #[error("duplicate negative authorization {0} -> {1}")]
    DuplicateNegative(Principal, Principal),
    #[error("duplicate principal {0}")]
    DuplicatePrincipal(Principal),
}

/// One time-slice of the authorization specification.
///
/// Positive authorizations are keyed by `(grantor, grantee, permission)`;
/// the activity flag is an attribute. Negative authorizations are keyed by
/// `(grantor, grantee)`. Ordering is the canonical ordering of those keys,
/// so two equal states compare equal regardless of construction order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AuthorizationState {
    soa: Principal,
    principals: BTreeSet<Principal>,
    pos: BTreeMap<AuthKey, bool>,
    neg: BTreeSet<(Principal, Principal)>,
}

impl AuthorizationState {
    /// State with the source of authority as its only principal.
    pub fn new(soa: Principal) -> Self {
        let mut principals = BTreeSet::new();
        principals.insert(soa.clone());
        AuthorizationState { soa, principals, pos: BTreeMap::new(), neg: BTreeSet::new() }
    }

    /// Empty-authorization state over `principals` (the SOA is added if missing).
    pub fn with_principals(soa: Principal, principals: impl IntoIterator<Item = Principal>) -> Self {
        let mut state = AuthorizationState::new(soa);
        state.principals.extend(principals);
        state
    }

    /// Builds a state from raw parts, reporting every structural violation,
    /// including duplicates that a set-backed state would otherwise absorb.
    pub fn from_parts(
        soa: Principal,
        principals: impl IntoIterator<Item = Principal>,
        pos: impl IntoIterator<Item = Authorization>,
        neg: impl IntoIterator<Item = NegativeAuthorization>,
    ) -> Result<Self, Vec<StructuralError>> {
        let mut errors = Vec::new();
        let mut state =
            AuthorizationState { soa, principals: BTreeSet::new(), pos: BTreeMap::new(), neg: BTreeSet::new() };
        for p in principals {
            if !state.principals.insert(p.clone()) {
                errors.push(StructuralError::DuplicatePrincipal(p));
            }
        }
        for auth in pos {
            let key = auth.key();
            if state.pos.insert(key.clone(), auth.active).is_some() {
                errors.push(StructuralError::DuplicateAuthorization(key));
            }
        }
        for n in neg {
            if !state.neg.insert((n.grantor.clone(), n.grantee.clone())) {
                errors.push(StructuralError::DuplicateNegative(n.grantor, n.grantee));
            }
        }
        if let Err(more) = validate_state(&state) {
            errors.extend(more);
        }
        if errors.is_empty() {
            Ok(state)
        } else {
            Err(errors)
        }
    }

    pub fn soa(&self) -> &Principal {
        &self.soa
    }

    pub fn principals(&self) -> impl ExactSizeIterator<Item = &Principal> + '_ {
        self.principals.iter()
    }

    pub fn principal_count(&self) -> usize {
        self.principals.len()
    }

    pub fn contains_principal(&self, p: &Principal) -> bool {
        self.principals.contains(p)
    }

    pub fn authorizations(&self) -> impl Iterator<Item = Authorization> + '_ {
        self.pos.iter().map(|(k, &active)| Authorization {
            grantor: k.grantor.clone(),
            grantee: k.grantee.clone(),
            permission: k.permission,
            active,
        })
    }

    pub fn positive_count(&self) -> usize {
        self.pos.len()
    }

    pub fn negatives(&self) -> impl Iterator<Item = NegativeAuthorization> + '_ {
        self.neg.iter().map(|(g, e)| NegativeAuthorization { grantor: g.clone(), grantee: e.clone() })
    }

    pub fn negative_count(&self) -> usize {
        self.neg.len()
    }

    /// `Some(active)` when the triple is present.
    pub fn activity(&self, key: &AuthKey) -> Option<bool> {
        self.pos.get(key).copied()
    }

    pub fn has_negative(&self, grantor: &Principal, grantee: &Principal) -> bool {
        self.neg.contains(&(grantor.clone(), grantee.clone()))
    }

    /// True when there are no inactive positive and no negative authorizations.
    pub fn is_clean(&self) -> bool {
        self.neg.is_empty() && self.pos.values().all(|&active| active)
    }

    pub fn add_principal(&mut self, p: Principal) -> bool {
        self.principals.insert(p)
    }

    /// Inserts or overwrites a positive authorization. No validation.
    pub fn insert(&mut self, auth: Authorization) -> Option<bool> {
        let key = auth.key();
        self.pos.insert(key, auth.active)
    }

    pub fn remove(&mut self, key: &AuthKey) -> Option<bool> {
        self.pos.remove(key)
    }

    pub fn insert_negative(&mut self, grantor: Principal, grantee: Principal) -> bool {
        self.neg.insert((grantor, grantee))
    }

    /// Builder-style insert of an active positive authorization.
    pub fn grant(mut self, grantor: &str, grantee: &str, permission: Permission) -> Self {
        self.insert(Authorization {
            grantor: Principal::new(grantor).expect("valid principal"),
            grantee: Principal::new(grantee).expect("valid principal"),
            permission,
            active: true,
        });
        self
    }

    /// Builder-style insert of an inactive positive authorization.
    pub fn grant_inactive(mut self, grantor: &str, grantee: &str, permission: Permission) -> Self {
        self.insert(Authorization {
            grantor: Principal::new(grantor).expect("valid principal"),
            grantee: Principal::new(grantee).expect("valid principal"),
            permission,
            active: false,
        });
        self
    }

    /// Builder-style insert of a negative authorization.
    pub fn deny(mut self, grantor: &str, grantee: &str) -> Self {
        self.insert_negative(
            Principal::new(grantor).expect("valid principal"),
            Principal::new(grantee).expect("valid principal"),
        );
        self
    }
}

/// Checks the structural invariants: SOA membership, principal closure of
/// every authorization, and absence of self-authorizations.
pub fn validate_state(state: &AuthorizationState) -> Result<(), Vec<StructuralError>> {
    let mut errors = Vec::new();
    if !state.principals.contains(&state.soa) {
        errors.push(StructuralError::SoaNotPrincipal(state.soa.clone()));
    }
    let mut check = |from: &Principal, to: &Principal| {
        for p in [from, to] {
            if !state.principals.contains(p) {
                errors.push(StructuralError::UnknownPrincipal(p.clone()));
            }
        }
        if from == to {
            errors.push(StructuralError::SelfAuthorization(from.clone()));
        }
    };
    for key in state.pos.keys() {
        check(&key.grantor, &key.grantee);
    }
    for (g, e) in &state.neg {
        check(g, e);
    }
    if errors.is_empty() {
        Ok(())
    } else {
        errors.sort();
        errors.dedup();
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use Permission::*;

    fn p(name: &str) -> Principal {
        Principal::new(name).unwrap()
    }

    #[test]
    fn stronger_is_a_strict_partial_order() {
        for a in Permission::ALL {
            assert!(!stronger(a, a));
            for b in Permission::ALL {
                assert!(!(stronger(a, b) && stronger(b, a)));
                for c in Permission::ALL {
                    assert!(!(stronger(a, b) && stronger(b, c)) || stronger(a, c));
                }
            }
        }
    }

    #[test]
    fn relation_examples() {
        assert!(r_pos(TT, FT));
        assert!(!r_pos(TF, FT));
        assert!(!r_pos(FF, FF));
        assert!(can_issue_negative(TT));
        assert!(can_issue_negative(FT));
        assert!(!can_issue_negative(TF));
        assert!(stronger(TT, FF));
        assert!(!stronger(TF, FT));
        assert!(!stronger(FF, FF));
        assert!(grant_compat(FF, Scheme::GrantTT));
        assert!(!grant_compat(TT, Scheme::GrantTF));
        assert!(grant_compat(FF, Scheme::GrantFF));
    }

    #[test]
    fn table_sizes() {
        let pairs = |f: &dyn Fn(Permission, Permission) -> bool| {
            Permission::ALL
                .iter()
                .flat_map(|&a| Permission::ALL.iter().map(move |&b| (a, b)))
                .filter(|&(a, b)| f(a, b))
                .count()
        };
        assert_eq!(pairs(&r_pos), 6);
        assert_eq!(pairs(&stronger), 5);
        assert_eq!(Permission::ALL.iter().filter(|&&p| can_issue_negative(p)).count(), 2);
        let compat = Permission::ALL
            .iter()
            .flat_map(|&p| Scheme::ALL.iter().map(move |&s| (p, s)))
            .filter(|&(p, s)| grant_compat(p, s))
            .count();
        assert_eq!(compat, 8);
    }

    #[test]
    fn stronger_is_strict_partial_order() {
        for a in Permission::ALL {
            assert!(!stronger(a, a));
            for b in Permission::ALL {
                if stronger(a, b) {
                    assert!(!stronger(b, a));
                }
                for c in Permission::ALL {
                    if stronger(a, b) && stronger(b, c) {
                        assert!(stronger(a, c));
                    }
                }
            }
        }
    }

    /// The permissions grantable by a holder, negative issuance included.
    fn grantable(p: Permission) -> Vec<(bool, Permission)> {
        let mut out: Vec<_> = Permission::ALL.into_iter().filter(|&q| r_pos(p, q)).map(|q| (true, q)).collect();
        if can_issue_negative(p) {
            out.push((false, FF));
        }
        out
    }

    #[test]
    fn stronger_means_strict_superset_of_grants() {
        for a in Permission::ALL {
            for b in Permission::ALL {
                let ga = grantable(a);
                let gb = grantable(b);
                let superset = gb.iter().all(|x| ga.contains(x)) && ga.len() > gb.len();
                assert_eq!(stronger(a, b), superset, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn bits_round_trip() {
        for perm in Permission::ALL {
            assert_eq!(Permission::from_bits(perm.bit()).collect::<Vec<_>>(), [perm]);
        }
    }

    #[test]
    fn scheme_tokens_parse() {
        for s in Scheme::ALL {
            assert_eq!(s.as_str().parse::<Scheme>().unwrap(), s);
        }
        assert!("wld".parse::<Scheme>().is_err());
    }

    #[test]
    fn principal_tokens() {
        assert!(Principal::new("").is_err());
        assert!(Principal::new("a b").is_err());
        assert_ne!(p("a"), p("A"));
    }

    #[test]
    fn validate_reports_self_edge_and_unknown() {
        let state = AuthorizationState::with_principals(p("A"), [p("B")]).grant("A", "A", TT);
        assert_eq!(validate_state(&state), Err(vec![StructuralError::SelfAuthorization(p("A"))]));

        let state = AuthorizationState::with_principals(p("A"), [p("B")]).grant("A", "G", TT);
        assert_eq!(validate_state(&state), Err(vec![StructuralError::UnknownPrincipal(p("G"))]));
    }

    #[test]
    fn from_parts_reports_duplicates() {
        let auth = Authorization { grantor: p("A"), grantee: p("B"), permission: TT, active: true };
        let err =
            AuthorizationState::from_parts(p("A"), [p("A"), p("B")], [auth.clone(), auth.clone()], []).unwrap_err();
        assert_eq!(err, vec![StructuralError::DuplicateAuthorization(auth.key())]);
    }

    #[test]
    fn state_equality_ignores_insertion_order() {
        let a = AuthorizationState::with_principals(p("A"), [p("B"), p("C")]).grant("A", "B", TT).grant("B", "C", TF);
        let b = AuthorizationState::with_principals(p("A"), [p("C"), p("B")]).grant("B", "C", TF).grant("A", "B", TT);
        assert_eq!(a, b);
    }
}
