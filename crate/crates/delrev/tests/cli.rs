//! The CLI run in-process against the files in docs/fixtures.
//!
//! Structured outputs are compared byte for byte with the golden files next
//! to the inputs. `UPDATE_FIXTURES=1` rewrites them.

use std::path::PathBuf;

use delrev::{parse_spec, serialize_spec};
use delrev_core::{scenarios, AuthorizationState};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/fixtures")
}

fn fixture(name: &str) -> String {
    fixtures().join(name).to_string_lossy().into_owned()
}

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run_with(args: &[&str], input: &str) -> Run {
    let mut stdin = input.as_bytes();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let argv = std::iter::once("delrev").chain(args.iter().copied());
    let code = delrev::cli::run(argv, &mut stdin, &mut out, &mut err);
    Run { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn run(args: &[&str]) -> Run {
    run_with(args, "")
}

fn golden(name: &str, actual: &str) {
    let path = fixtures().join(name);
    if std::env::var_os("UPDATE_FIXTURES").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} differs from its golden file");
}

fn json(text: &str) -> serde_json::Value {
    serde_json::from_str(text).unwrap()
}

#[test]
fn step_text_matches_reference_states() {
    let baseline = fixture("baseline.spec");
    let r = run(&["step", &baseline, "--do", "SGD", "A", "B"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(r.out, serialize_spec(&scenarios::after_sgd()));
    assert!(r.err.contains("deleted A B TT"));
    let r = run(&["step", &baseline, "--do", "WLN", "A", "B"]);
    assert_eq!(parse_spec(&r.out).unwrap(), scenarios::after_wln());
    assert!(r.err.contains("neg-added A B"));
}

#[test]
fn step_structured() {
    let r = run(&["--output", "structured", "step", &fixture("baseline.spec"), "--do", "WLD", "A", "B"]);
    assert_eq!(r.code, 0);
    let v = json(&r.out);
    assert_eq!(v["schema"], "delrev/1");
    assert_eq!(v["command"], "step");
    let state: delrev::schema::StateDto = serde_json::from_value(v["state"].clone()).unwrap();
    assert_eq!(AuthorizationState::try_from(&state).unwrap(), scenarios::after_wld());
    golden("step.json", &r.out);
}

#[test]
fn simulate_walk() {
    let r = run(&["simulate", &fixture("baseline.spec"), &fixture("walk.script")]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.starts_with("# state 0\n"));
    assert!(r.out.contains("# state 3 after WGD A D\n"));
    let r = run(&["--output", "structured", "simulate", &fixture("baseline.spec"), &fixture("walk.script")]);
    assert_eq!(r.code, 0);
    golden("simulate.json", &r.out);
}

#[test]
fn simulate_stops_at_a_bad_step() {
    let dir = std::env::temp_dir().join(format!("delrev-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let script = dir.join("bad.script");
    std::fs::write(&script, "do WLD A B\ndo WLD A B\n").unwrap();
    let r = run(&["simulate", &fixture("baseline.spec"), script.to_str().unwrap()]);
    assert_eq!(r.code, 1);
    assert!(r.err.starts_with("error: "));
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn queries() {
    let r = run(&["query", &fixture("small-tree.spec"), "holders", "TT"]);
    assert_eq!((r.code, r.out.as_str()), (0, "A B D\n"));
    let r = run(&["query", &fixture("baseline.spec"), "access"]);
    assert_eq!(r.out, "A B C D E F\n");
    let r = run(&["--output", "structured", "query", &fixture("baseline.spec"), "access"]);
    golden("query-access.json", &r.out);
    let r = run(&["--output", "structured", "query", &fixture("small-tree.spec"), "holders", "TT", "--active"]);
    golden("query-holders.json", &r.out);
}

#[test]
fn verify_exit_codes() {
    let r = run(&["verify", "--n", "3", "--invariant", "connectivity", "--exhaustive", "3"]);
    assert_eq!(r.code, 1);
    assert!(r.out.contains("COUNTEREXAMPLE"));
    let r = run(&["verify", "--n", "3", "--invariant", "active-connectivity", "--exhaustive", "2"]);
    assert_eq!(r.code, 0, "{}", r.out);
    assert!(r.out.contains("HOLDS"));
    let r = run(&["--output", "structured", "verify", "--n", "3", "--invariant", "connectivity", "--exhaustive", "3"]);
    assert_eq!(r.code, 1);
    assert_eq!(json(&r.out)["report"]["outcome"]["kind"], "counterexample");
    golden("verify.json", &r.out);
}

#[test]
fn verify_from_a_spec() {
    let r = run(&[
        "verify",
        &fixture("small-tree.spec"),
        "--invariant",
        "positive-connectivity",
        "--random",
        "20",
        "--seed",
        "7",
        "--depth",
        "3",
    ]);
    assert_eq!(r.code, 0, "{}{}", r.out, r.err);
}

#[test]
fn plan_lists_cheapest_first() {
    let r = run(&["plan", &fixture("baseline.spec"), "--actor", "A", "--goal", "!access(F)"]);
    assert_eq!(r.code, 0);
    let costs: Vec<usize> = r.out.lines().map(|l| l.split(' ').next().unwrap().parse().unwrap()).collect();
    assert!(costs.windows(2).all(|w| w[0] <= w[1]));
    assert!(r.out.lines().any(|l| l.ends_with("SGD A B")));
    let r = run(&["plan", &fixture("baseline.spec"), "--actor", "A", "--goal", "!access(F)", "--min"]);
    assert!(r.out.lines().all(|l| l.starts_with("2 ")));
    let r = run(&["--output", "structured", "plan", &fixture("baseline.spec"), "--actor", "A", "--goal", "!access(F)"]);
    golden("plan.json", &r.out);
    let r = run(&["plan", &fixture("small-tree.spec"), "--actor", "C", "--goal", "!access(B)"]);
    assert_eq!((r.code, r.out.as_str()), (0, ""));
    assert!(!r.err.is_empty());
}

#[test]
fn export_dot() {
    let r = run(&["export", &fixture("baseline.spec"), "--dot"]);
    assert_eq!(r.code, 0);
    assert!(r.out.starts_with("digraph authorizations {"));
    golden("baseline.dot", &r.out);
}

#[test]
fn repl_session() {
    let input = "WLD A B\nshow\nundo\ndo WLN A B\nholders TT\naccess\nWLD C B\nnonsense\nquit\n";
    let r = run_with(&["repl", &fixture("baseline.spec")], input);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("> "));
    let r = run_with(&["--output", "structured", "repl", &fixture("baseline.spec")], input);
    assert_eq!(r.code, 0);
    for line in r.out.lines() {
        assert_eq!(json(line)["schema"], "delrev/1");
    }
    golden("repl.jsonl", &r.out);
}

#[test]
fn exit_codes_and_errors() {
    assert_eq!(run(&["--help"]).code, 0);
    assert_eq!(run(&["bogus"]).code, 2);
    assert_eq!(run(&["step", &fixture("baseline.spec")]).code, 2);
    assert_eq!(run(&["query", &fixture("nope.spec"), "access"]).code, 2);
    let r = run(&["step", &fixture("baseline.spec"), "--do", "WLD", "C", "B"]);
    assert_eq!(r.code, 1);
    assert!(r.err.starts_with("error: "));
    let r = run(&["--output", "structured", "step", &fixture("baseline.spec"), "--do", "WLD", "C", "B"]);
    assert_eq!(r.code, 1);
    golden("error.json", &r.out);
    let r = run(&["query", &fixture("walk.script"), "access"]);
    assert_eq!(r.code, 2);
    let r = run(&["--output", "structured", "query", &fixture("walk.script"), "access"]);
    assert_eq!(json(&r.out)["error"]["code"], "syntax-error");
    assert_eq!(json(&r.out)["error"]["line"], 1);
}

#[test]
fn output_is_deterministic() {
    let cases: [&[&str]; 4] = [
        &["--output", "structured", "simulate", &fixture("baseline.spec"), &fixture("walk.script")],
        &["--output", "structured", "plan", &fixture("baseline.spec"), "--actor", "A", "--goal", "!access(F)"],
        &["export", &fixture("baseline.spec"), "--dot"],
        &["--output", "structured", "verify", "--n", "3", "--invariant", "active-connectivity", "--random", "30"],
    ];
    for args in cases {
        let first = run(args);
        for _ in 0..3 {
            let again = run(args);
            assert_eq!((again.code, again.out), (first.code, first.out.clone()));
        }
    }
}
