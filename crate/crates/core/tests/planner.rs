//! Planner against a brute force over the procedural oracle.

use std::collections::BTreeSet;

use delrev_core::oracle::{oracle_cost, oracle_plan, random_reachable_state};
use delrev_core::{cost, plan, plan_min_cost, scenarios, AuthorizationState, Goal, Literal, Permission, Principal};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn p(name: &str) -> Principal {
    Principal::new(name).unwrap()
}

fn random_goal(rng: &mut ChaCha8Rng, state: &AuthorizationState) -> Goal {
    let ps: Vec<Principal> = state.principals().cloned().collect();
    let lits = (0..rng.gen_range(1..=3)).map(|_| {
        let q = ps[rng.gen_range(0..ps.len())].clone();
        let perm = Permission::ALL[rng.gen_range(0..4)];
        match rng.gen_range(0..5) {
            0 => Literal::Access(q),
            1 => Literal::NotAccess(q),
            2 => Literal::Holds(q, perm),
            3 => Literal::NotHolds(q, perm),
            _ => Literal::Unchanged(q),
        }
    });
    Goal::new(lits.collect::<Vec<_>>()).unwrap()
}

fn check(state: &AuthorizationState, actor: &Principal, goal: &Goal) {
    let got = plan(state, actor, goal).unwrap();
    let got_set: BTreeSet<_> = got.iter().map(|r| (r.action.clone(), r.cost, r.post_state.clone())).collect();
    assert_eq!(got_set.len(), got.len());
    assert_eq!(got_set, oracle_plan(state, actor, goal), "{goal} for {actor}");
    let min = plan_min_cost(state, actor, goal).unwrap();
    match min {
        None => assert!(got.is_empty()),
        Some(m) => assert_eq!(m.cost, got.iter().map(|r| r.cost).min().unwrap()),
    }
}

#[test]
fn reference_cost() {
    let pre = scenarios::baseline();
    let post = scenarios::after_wld();
    let oracle = oracle_cost(&pre, &post);
    assert_eq!(oracle, 3);
    assert_eq!(cost(&pre, &post), oracle);
}

#[test]
fn reference_plans() {
    let s = scenarios::baseline();
    let goal: Goal = "!access(F)".parse().unwrap();
    let got = plan(&s, &p("A"), &goal).unwrap();
    assert!(got.iter().any(|r| r.action.to_string() == "SGD A B" && r.post_state == scenarios::after_sgd()));
    check(&s, &p("A"), &goal);
    check(&s, &p("A"), &"access(F) & unchanged(F)".parse().unwrap());
    check(&scenarios::small_tree(), &p("B"), &"!holds(D,TT)".parse().unwrap());
}

#[test]
fn random_states_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..60 {
        let (state, _) = random_reachable_state(seed, 2 + (seed % 4) as usize, (seed % 9) as usize);
        let ps: Vec<Principal> = state.principals().cloned().collect();
        let actor = ps[rng.gen_range(0..ps.len())].clone();
        check(&state, &actor, &random_goal(&mut rng, &state));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn plans_are_sorted_and_sound(seed in any::<u64>(), n in 2usize..=5, depth in 0usize..8) {
        let (state, _) = random_reachable_state(seed, n, depth);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ps: Vec<Principal> = state.principals().cloned().collect();
        let actor = ps[rng.gen_range(0..ps.len())].clone();
        let goal = random_goal(&mut rng, &state);
        let got = plan(&state, &actor, &goal).unwrap();
        prop_assert!(got.windows(2).all(|w| w[0].cost <= w[1].cost));
        for r in &got {
            prop_assert_eq!(&r.action.actor, &actor);
            prop_assert_eq!(r.cost, oracle_cost(&state, &r.post_state));
            prop_assert!(oracle_plan(&state, &actor, &goal).contains(&(r.action.clone(), r.cost, r.post_state.clone())));
        }
    }
}
