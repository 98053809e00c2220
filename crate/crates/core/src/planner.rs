//! One-step planning: which actions of a principal lead to a goal, cheapest first.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::model::{Action, AuthorizationState, Permission, Principal, Scheme};
use crate::semantics::{ChainMode, Holdings, QueryError};
use crate::transition::{apply_action, validate_action, StepError};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Literal {
    Access(Principal),
    NotAccess(Principal),
    /// Over active chains.
    Holds(Principal, Permission),
    NotHolds(Principal, Permission),
    /// Same access right and same actively held permissions before and after.
    Unchanged(Principal),
}

impl Literal {
    pub fn principal(&self) -> &Principal {
        match self {
            Literal::Access(p)
            | Literal::NotAccess(p)
            | Literal::Holds(p, _)
            | Literal::NotHolds(p, _)
            | Literal::Unchanged(p) => p,
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Access(p) => write!(f, "access({p})"),
            Literal::NotAccess(p) => write!(f, "!access({p})"),
            Literal::Holds(p, perm) => write!(f, "holds({p},{perm})"),
            Literal::NotHolds(p, perm) => write!(f, "!holds({p},{perm})"),
            Literal::Unchanged(p) => write!(f, "unchanged({p})"),
        }
    }
}

/// A non-empty conjunction of literals.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Goal {
    literals: Vec<Literal>,
}

impl Goal {
    pub fn new(literals: impl IntoIterator<Item = Literal>) -> Result<Self, GoalError> {
        let literals: Vec<Literal> = literals.into_iter().collect();
        if literals.is_empty() {
            return Err(GoalError::Empty);
        }
        Ok(Goal { literals })
    }

    pub fn literals(&self) -> &[Literal] {
        &self.literals
    }
}

impl fmt::Display for Goal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, lit) in self.literals.iter().enumerate() {
            if i > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{lit}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GoalError {
    #[error("empty goal")]
    Empty,
    #[error("bad goal literal `{0}`")]
    BadLiteral(String),
}

impl FromStr for Literal {
    type Err = GoalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GoalError::BadLiteral(s.trim().to_string());
        let text = s.trim();
        let (negated, text) = match text.strip_prefix('!') {
            Some(rest) => (true, rest.trim_start()),
            None => (false, text),
        };
        let open = text.find('(').ok_or_else(bad)?;
        let name = text[..open].trim();
        let args = text[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let args: Vec<&str> = args.split(',').map(str::trim).collect();
        let principal = |a: &str| Principal::new(a).map_err(|_| bad());
        match (name, negated, args.as_slice()) {
            ("access", false, [p]) => Ok(Literal::Access(principal(p)?)),
            ("access", true, [p]) => Ok(Literal::NotAccess(principal(p)?)),
            ("holds", false, [p, perm]) => Ok(Literal::Holds(principal(p)?, perm.parse().map_err(|_| bad())?)),
            ("holds", true, [p, perm]) => Ok(Literal::NotHolds(principal(p)?, perm.parse().map_err(|_| bad())?)),
            ("unchanged", false, [p]) => Ok(Literal::Unchanged(principal(p)?)),
            _ => Err(bad()),
        }
    }
}

/// `lit & lit & ...`
impl FromStr for Goal {
    type Err = GoalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().is_empty() {
            return Err(GoalError::Empty);
        }
        Goal::new(s.split('&').map(str::parse).collect::<Result<Vec<Literal>, _>>()?)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("unknown principal {0}")]
    UnknownPrincipal(Principal),
    #[error("states have different principals")]
    PrincipalMismatch,
    #[error("{action}: {error}")]
    Step { action: Action, error: StepError },
}

impl From<QueryError> for PlanError {
    fn from(e: QueryError) -> Self {
        match e {
            QueryError::UnknownPrincipal(p) => PlanError::UnknownPrincipal(p),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlanResult {
    pub action: Action,
    pub post_state: AuthorizationState,
    pub cost: usize,
}

fn same_principals(pre: &AuthorizationState, post: &AuthorizationState) -> Result<(), PlanError> {
    if pre.principals().eq(post.principals()) {
        Ok(())
    } else {
        Err(PlanError::PrincipalMismatch)
    }
}

fn active_set(h: &Holdings, p: &Principal) -> Result<Vec<Permission>, QueryError> {
    h.held_by(p, ChainMode::ActiveOnly)
}

fn eval_with(pre: &Holdings, post: &Holdings, goal: &Goal) -> Result<bool, PlanError> {
    for lit in goal.literals() {
        let ok = match lit {
            Literal::Access(p) => post.access_right(p)?,
            Literal::NotAccess(p) => !post.access_right(p)?,
            Literal::Holds(p, perm) => post.holds(p, *perm, ChainMode::ActiveOnly)?,
            Literal::NotHolds(p, perm) => !post.holds(p, *perm, ChainMode::ActiveOnly)?,
            Literal::Unchanged(p) => {
                pre.access_right(p)? == post.access_right(p)? && active_set(pre, p)? == active_set(post, p)?
            }
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `goal` holds of the step from `pre` to `post`.
pub fn eval_goal(pre: &AuthorizationState, post: &AuthorizationState, goal: &Goal) -> Result<bool, PlanError> {
    same_principals(pre, post)?;
    eval_with(&Holdings::new(pre), &Holdings::new(post), goal)
}

fn cost_with(pre: &Holdings, post: &Holdings) -> usize {
    let (a, b) = (pre.pairs(ChainMode::ActiveOnly), post.pairs(ChainMode::ActiveOnly));
    let (x, y) = (pre.access_set(), post.access_set());
    a.symmetric_difference(&b).count() + x.symmetric_difference(&y).count()
}

/// Changed actively held `(principal, permission)` pairs plus principals
/// whose access right flipped.
pub fn cost(pre: &AuthorizationState, post: &AuthorizationState) -> usize {
    cost_with(&Holdings::new(pre), &Holdings::new(post))
}

/// Every valid action of `actor` whose successor satisfies `goal`, ordered
/// by cost, then scheme, then target.
pub fn plan(state: &AuthorizationState, actor: &Principal, goal: &Goal) -> Result<Vec<PlanResult>, PlanError> {
    let known: BTreeSet<&Principal> = state.principals().collect();
    for p in core::iter::once(actor).chain(goal.literals().iter().map(Literal::principal)) {
        if !known.contains(p) {
            return Err(PlanError::UnknownPrincipal(p.clone()));
        }
    }
    let pre = Holdings::new(state);
    let mut out = Vec::new();
    for scheme in Scheme::ALL {
        for target in state.principals().filter(|&t| t != actor) {
            let action = Action::new(scheme, actor.clone(), target.clone());
            if validate_action(state, &action).is_err() {
                continue;
            }
            let (post_state, _) =
                apply_action(state, &action).map_err(|error| PlanError::Step { action: action.clone(), error })?;
            let post = Holdings::new(&post_state);
            if eval_with(&pre, &post, goal)? {
                out.push(PlanResult { cost: cost_with(&pre, &post), action, post_state });
            }
        }
    }
    out.sort_by(|a, b| (a.cost, a.action.scheme, &a.action.target).cmp(&(b.cost, b.action.scheme, &b.action.target)));
    Ok(out)
}

pub fn plan_min_cost(
    state: &AuthorizationState,
    actor: &Principal,
    goal: &Goal,
) -> Result<Option<PlanResult>, PlanError> {
    Ok(plan(state, actor, goal)?.into_iter().next())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::empty_state;
    use crate::scenarios;
    use alloc::vec;

    fn p(name: &str) -> Principal {
        Principal::new(name).unwrap()
    }

    fn goal(s: &str) -> Goal {
        s.parse().unwrap()
    }

    #[test]
    fn goal_syntax_round_trips() {
        let g = goal("access(A) & !access(F) & holds(B,TT) & !holds( C , TF ) & unchanged(D)");
        assert_eq!(g.literals().len(), 5);
        assert_eq!(g.to_string(), "access(A) & !access(F) & holds(B,TT) & !holds(C,TF) & unchanged(D)");
        assert_eq!(goal(&g.to_string()), g);
        assert_eq!("".parse::<Goal>(), Err(GoalError::Empty));
        assert!("access(A,B)".parse::<Goal>().is_err());
        assert!("!unchanged(A)".parse::<Goal>().is_err());
        assert!("holds(A,XX)".parse::<Goal>().is_err());
        assert!("access(A) &".parse::<Goal>().is_err());
    }

    #[test]
    fn figure_goals() {
        let base = scenarios::baseline();
        assert_eq!(eval_goal(&base, &scenarios::after_sgd(), &goal("!access(F)")), Ok(true));
        assert_eq!(eval_goal(&base, &scenarios::after_wld(), &goal("unchanged(D)")), Ok(true));
        for name in ["A", "B", "C", "D", "E", "F"] {
            assert_eq!(eval_goal(&base, &base, &Goal::new([Literal::Unchanged(p(name))]).unwrap()), Ok(true));
        }
        assert_eq!(eval_goal(&base, &base, &goal("access(Z)")), Err(PlanError::UnknownPrincipal(p("Z"))));
        assert_eq!(eval_goal(&base, &empty_state(3), &goal("access(A)")), Err(PlanError::PrincipalMismatch));
    }

    #[test]
    fn cost_basics() {
        let base = scenarios::baseline();
        assert_eq!(cost(&base, &base), 0);
        let sgd = cost(&base, &scenarios::after_sgd());
        assert!(sgd > cost(&base, &scenarios::after_wld()));
        assert_eq!(sgd, cost(&scenarios::after_sgd(), &base));
    }

    #[test]
    fn soa_cannot_lose_access() {
        let s = empty_state(3);
        assert_eq!(plan(&s, &p("A"), &goal("!access(A)")), Ok(vec![]));
        assert_eq!(plan_min_cost(&s, &p("A"), &goal("!access(A)")), Ok(None));
        assert_eq!(plan(&s, &p("Q"), &goal("access(A)")), Err(PlanError::UnknownPrincipal(p("Q"))));
    }

    #[test]
    fn results_replay_in_order() {
        let base = scenarios::baseline();
        let results = plan(&base, &p("A"), &goal("!access(F)")).unwrap();
        assert!(results.iter().any(|r| r.action == Action::new(Scheme::SGD, p("A"), p("B"))));
        for r in &results {
            assert_eq!(apply_action(&base, &r.action).unwrap().0, r.post_state);
            assert_eq!(cost(&base, &r.post_state), r.cost);
        }
        assert!(results.windows(2).all(|w| w[0].cost <= w[1].cost));
    }
}
