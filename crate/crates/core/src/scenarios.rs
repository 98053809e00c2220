//! Reference states with `A` as source of authority.
//!
//! [`baseline`] is the six-principal delegation graph used to illustrate the
//! revocation schemes; the `after_*` states are the expected results of
//! revoking the authorization from `A` to `B` with each scheme.

use crate::model::{AuthorizationState, Permission::*, Principal};

fn principals(names: &[&str]) -> AuthorizationState {
    AuthorizationState::with_principals(
        Principal::new("A").expect("valid"),
        names.iter().map(|n| Principal::new(*n).expect("valid")),
    )
}

/// `A -TT-> B -TF-> C`, `B -TT-> D`, and an unconnected `E`.
pub fn small_tree() -> AuthorizationState {
    principals(&["A", "B", "C", "D", "E"]).grant("A", "B", TT).grant("B", "C", TF).grant("B", "D", TT)
}

/// Six principals, seven authorizations; `B` is reachable from `A` both
/// directly and through `D`.
pub fn baseline() -> AuthorizationState {
    principals(&["A", "B", "C", "D", "E", "F"])
        .grant("A", "B", TT)
        .grant("A", "D", TT)
        .grant("B", "C", TF)
        .grant("B", "E", TT)
        .grant("D", "B", FF)
        .grant("D", "E", TT)
        .grant("E", "F", FF)
}

/// [`baseline`] after a weak local delete from `A` to `B`.
pub fn after_wld() -> AuthorizationState {
    principals(&["A", "B", "C", "D", "E", "F"])
        .grant("A", "C", TF)
        .grant("A", "D", TT)
        .grant("A", "E", TT)
        .grant("D", "B", FF)
        .grant("D", "E", TT)
        .grant("E", "F", FF)
}

/// [`baseline`] after a weak global delete from `A` to `B`.
pub fn after_wgd() -> AuthorizationState {
    principals(&["A", "B", "C", "D", "E", "F"])
        .grant("A", "D", TT)
        .grant("D", "B", FF)
        .grant("D", "E", TT)
        .grant("E", "F", FF)
}

/// [`baseline`] after a strong local delete from `A` to `B`.
pub fn after_sld() -> AuthorizationState {
    principals(&["A", "B", "C", "D", "E", "F"])
        .grant("A", "C", TF)
        .grant("A", "D", TT)
        .grant("A", "E", TT)
        .grant("D", "E", TT)
        .grant("E", "F", FF)
}

/// [`baseline`] after a strong global delete from `A` to `B`.
pub fn after_sgd() -> AuthorizationState {
    principals(&["A", "B", "C", "D", "E", "F"]).grant("A", "D", TT)
}

/// [`baseline`] after a weak local negative from `A` to `B`.
pub fn after_wln() -> AuthorizationState {
    principals(&["A", "B", "C", "D", "E", "F"])
        .grant_inactive("A", "B", TT)
        .grant("A", "C", TF)
        .grant("A", "D", TT)
        .grant("A", "E", TT)
        .grant_inactive("B", "C", TF)
        .grant_inactive("B", "E", TT)
        .grant("D", "B", FF)
        .grant("D", "E", TT)
        .grant("E", "F", FF)
        .deny("A", "B")
}
