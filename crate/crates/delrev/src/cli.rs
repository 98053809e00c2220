//! The `delrev` command line. [`run`] takes its streams as arguments so it
//! can be driven in-process.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use delrev_core::semantics::{query_access, query_holders};
use delrev_core::verifier::{verify_from, VerifyError, DEFAULT_STATE_CAP};
use delrev_core::{
    evaluate, oracle::empty_state, plan, Action, AuthorizationState, ChainMode, Evaluation, Goal, Invariant, Mode,
    Outcome, Permission, PlanError, StepDelta, StepError,
};
use serde::Serialize;

use crate::dot::export_dot;
use crate::format::{parse_document, parse_script, parse_spec, serialize_spec, ParseError};
use crate::schema::{evaluation_name, to_json, ErrorBody, ErrorDto, PlanEntryDto, ReportDto, StateDto, StepDto};

#[derive(Parser, Debug)]
#[command(name = "delrev", version, about = "Delegation and revocation over authorization graphs")]
struct Cli {
    /// Output format for every subcommand.
    #[arg(long, global = true, value_enum, default_value_t = Output::Text)]
    output: Output,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Output {
    Text,
    /// JSON tagged with `"schema": "delrev/1"`.
    Structured,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Apply one action; prints the new spec (the delta goes to stderr).
    Step {
        spec: String,
        #[arg(long = "do", num_args = 3, value_names = ["SCHEME", "ACTOR", "TARGET"], required = true)]
        action: Vec<String>,
    },
    /// Apply a script and print every state of the trace. Without a script
    /// file the spec's own `do` lines are used.
    Simulate { spec: String, script: Option<String> },
    /// Step through actions read from stdin.
    Repl { spec: String },
    /// Principals with an access right, or holding a permission.
    Query {
        spec: String,
        #[arg(value_enum)]
        what: QueryKind,
        permission: Option<String>,
        /// Count active chains only (holders).
        #[arg(long)]
        active: bool,
    },
    /// Check that every valid step preserves an invariant.
    Verify(VerifyArgs),
    /// Actions of one principal that reach a goal, cheapest first.
    Plan {
        spec: String,
        #[arg(long)]
        actor: String,
        /// e.g. `!access(F) & unchanged(D)`
        #[arg(long)]
        goal: String,
        /// Only the cheapest result.
        #[arg(long)]
        min: bool,
    },
    /// Render a spec as a Graphviz digraph.
    Export {
        spec: String,
        #[arg(long, required = true)]
        dot: bool,
    },
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum QueryKind {
    Access,
    Holders,
}

#[derive(Args, Debug)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["spec", "n"])))]
#[command(group(clap::ArgGroup::new("mode").required(true).args(["exhaustive", "random", "arbitrary"])))]
struct VerifyArgs {
    /// Start from this state instead of an empty one.
    spec: Option<String>,
    /// Number of principals of the empty start state.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    invariant: String,
    /// Every state reachable within DEPTH actions.
    #[arg(long, value_name = "DEPTH")]
    exhaustive: Option<usize>,
    /// SAMPLES random walks of `--depth` steps.
    #[arg(long, value_name = "SAMPLES")]
    random: Option<usize>,
    /// SAMPLES arbitrary states satisfying the invariant.
    #[arg(long, value_name = "SAMPLES")]
    arbitrary: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Walk length for `--random`.
    #[arg(long, default_value_t = 8)]
    depth: usize,
    /// Give up after exploring this many states.
    #[arg(long, default_value_t = DEFAULT_STATE_CAP)]
    cap: usize,
}

#[derive(Args, Debug)]
struct ServeArgs {
    #[arg(long, env = "DELREV_BIND", default_value = "127.0.0.1")]
    bind: String,
    #[arg(long, env = "DELREV_PORT", default_value_t = 8080)]
    port: u16,
    /// Seconds an idle session is kept.
    #[arg(long, env = "DELREV_SESSION_TTL", default_value_t = 86_400)]
    session_ttl: u64,
    /// Seconds a plan preview is kept.
    #[arg(long, env = "DELREV_PREVIEW_TTL", default_value_t = 600)]
    preview_ttl: u64,
    /// State cap for verification requests.
    #[arg(long, env = "DELREV_VERIFY_CAP", default_value_t = 200_000)]
    verify_cap: usize,
}

/// A failure with its exit code: 1 for domain errors, 2 for usage and parse errors.
#[derive(Debug)]
struct Failure {
    exit: i32,
    code: String,
    message: String,
    line: Option<usize>,
}

impl Failure {
    fn usage(code: &str, message: impl Into<String>) -> Self {
        Failure { exit: 2, code: code.into(), message: message.into(), line: None }
    }

    fn domain(code: &str, message: impl Into<String>) -> Self {
        Failure { exit: 1, code: code.into(), message: message.into(), line: None }
    }
}

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        Failure { exit: 2, code: e.code().into(), line: e.line(), message: e.to_string() }
    }
}

impl From<StepError> for Failure {
    fn from(e: StepError) -> Self {
        Failure::domain(e.code(), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage("io-error", e.to_string())
    }
}

struct Io<'a> {
    stdin: &'a mut dyn BufRead,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    output: Output,
}

impl Io<'_> {
    fn read(&mut self, path: &str) -> Result<String, Failure> {
        if path == "-" {
            let mut s = String::new();
            self.stdin.read_to_string(&mut s)?;
            return Ok(s);
        }
        std::fs::read_to_string(path).map_err(|e| Failure::usage("io-error", format!("cannot read {path}: {e}")))
    }

    fn spec(&mut self, path: &str) -> Result<AuthorizationState, Failure> {
        let text = self.read(path)?;
        Ok(parse_spec(&text)?)
    }

    fn structured(&self) -> bool {
        self.output == Output::Structured
    }

    fn json<T: Serialize>(&mut self, body: T) -> Result<(), Failure> {
        self.out.write_all(to_json(body).as_bytes())?;
        Ok(())
    }
}

fn delta_lines(delta: &StepDelta) -> String {
    let mut out = String::new();
    for k in &delta.deleted {
        out.push_str(&format!("deleted {} {} {}\n", k.grantor, k.grantee, k.permission));
    }
    for k in &delta.added {
        out.push_str(&format!("added {} {} {}\n", k.grantor, k.grantee, k.permission));
    }
    for k in &delta.inactivated {
        out.push_str(&format!("inactivated {} {} {}\n", k.grantor, k.grantee, k.permission));
    }
    for (g, e) in &delta.neg_added {
        out.push_str(&format!("neg-added {g} {e}\n"));
    }
    out
}

fn action_from_words(words: &[String]) -> Result<Action, Failure> {
    let line = format!("do {}", words.join(" "));
    Ok(parse_script(&line)?.remove(0))
}

fn principals_line<'a>(ps: impl IntoIterator<Item = &'a delrev_core::Principal>) -> String {
    let mut line = ps.into_iter().map(|p| p.as_str()).collect::<Vec<_>>().join(" ");
    line.push('\n');
    line
}

/// Runs the command line `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = stderr.write_all(text.as_bytes());
                2
            } else {
                let _ = stdout.write_all(text.as_bytes());
                0
            };
        }
    };
    let mut io = Io { stdin, out: stdout, err: stderr, output: cli.output };
    match dispatch(cli.command, &mut io) {
        Ok(code) => code,
        Err(f) => {
            if io.structured() {
                let body =
                    ErrorBody { error: ErrorDto { code: f.code.clone(), message: f.message.clone(), line: f.line } };
                let _ = io.out.write_all(to_json(body).as_bytes());
            } else {
                let _ = writeln!(io.err, "error: {}", f.message);
            }
            f.exit
        }
    }
}

fn dispatch(command: Command, io: &mut Io<'_>) -> Result<i32, Failure> {
    match command {
        Command::Step { spec, action } => step(io, &spec, &action),
        Command::Simulate { spec, script } => simulate(io, &spec, script.as_deref()),
        Command::Repl { spec } => repl(io, &spec),
        Command::Query { spec, what, permission, active } => query(io, &spec, what, permission.as_deref(), active),
        Command::Verify(args) => verify(io, args),
        Command::Plan { spec, actor, goal, min } => plan_cmd(io, &spec, &actor, &goal, min),
        Command::Export { spec, .. } => {
            let state = io.spec(&spec)?;
            let dot = export_dot(&state);
            if io.structured() {
                #[derive(Serialize)]
                struct Body {
                    command: &'static str,
                    dot: String,
                }
                io.json(Body { command: "export", dot })?;
            } else {
                io.out.write_all(dot.as_bytes())?;
            }
            Ok(0)
        }
        Command::Serve(args) => serve(io, args),
    }
}

fn step(io: &mut Io<'_>, spec: &str, words: &[String]) -> Result<i32, Failure> {
    let state = io.spec(spec)?;
    let action = action_from_words(words)?;
    let step = evaluate(&state, &action)?;
    if io.structured() {
        #[derive(Serialize)]
        struct Body {
            command: &'static str,
            #[serde(flatten)]
            step: StepDto,
        }
        io.json(Body { command: "step", step: step_dto(&action, &step) })?;
    } else {
        io.out.write_all(serialize_spec(&step.state).as_bytes())?;
        io.err.write_all(delta_lines(&step.delta).as_bytes())?;
        if step.evaluation != Evaluation::WellFounded {
            writeln!(io.err, "evaluation {}", evaluation_name(step.evaluation))?;
        }
    }
    Ok(0)
}

fn step_dto(action: &Action, step: &delrev_core::Step) -> StepDto {
    StepDto {
        action: action.into(),
        evaluation: evaluation_name(step.evaluation),
        delta: (&step.delta).into(),
        state: (&step.state).into(),
    }
}

fn simulate(io: &mut Io<'_>, spec: &str, script: Option<&str>) -> Result<i32, Failure> {
    let text = io.read(spec)?;
    let (state, actions) = match script {
        Some(path) => {
            let state = parse_spec(&text)?;
            let script = io.read(path)?;
            (state, parse_script(&script)?)
        }
        None => {
            let doc = parse_document(&text)?;
            (doc.state, doc.script)
        }
    };
    let mut steps = Vec::new();
    let mut current = state.clone();
    let mut failure = None;
    for (i, action) in actions.iter().enumerate() {
        match evaluate(&current, action) {
            Ok(step) => {
                current = step.state.clone();
                steps.push((action.clone(), step));
            }
            Err(e) => {
                failure = Some(Failure::domain(e.code(), format!("step {} ({action}): {e}", i + 1)));
                break;
            }
        }
    }
    if io.structured() {
        #[derive(Serialize)]
        struct Body {
            command: &'static str,
            initial: StateDto,
            steps: Vec<StepDto>,
            #[serde(skip_serializing_if = "Option::is_none")]
            error: Option<ErrorDto>,
        }
        let error = failure.as_ref().map(|f| ErrorDto { code: f.code.clone(), message: f.message.clone(), line: None });
        io.json(Body {
            command: "simulate",
            initial: (&state).into(),
            steps: steps.iter().map(|(a, s)| step_dto(a, s)).collect(),
            error,
        })?;
        return Ok(if failure.is_some() { 1 } else { 0 });
    }
    writeln!(io.out, "# state 0")?;
    io.out.write_all(serialize_spec(&state).as_bytes())?;
    for (i, (action, step)) in steps.iter().enumerate() {
        writeln!(io.out, "# state {} after {action}", i + 1)?;
        io.out.write_all(serialize_spec(&step.state).as_bytes())?;
    }
    match failure {
        Some(f) => Err(f),
        None => Ok(0),
    }
}

const REPL_HELP: &str = "\
<scheme> <actor> <target>   apply an action (a leading `do` is allowed)
undo                        go back one step
show                        print the current state
dot                         print the current state as DOT
access                      principals with an access right
holders <perm>              principals holding a permission
quit                        leave
";

fn repl(io: &mut Io<'_>, spec: &str) -> Result<i32, Failure> {
    let state = io.spec(spec)?;
    let mut history = vec![state];
    let structured = io.structured();
    let emit_state = |io: &mut Io<'_>, state: &AuthorizationState| -> Result<(), Failure> {
        if structured {
            #[derive(Serialize)]
            struct Body {
                event: &'static str,
                state: StateDto,
            }
            writeln!(io.out, "{}", compact(Body { event: "state", state: state.into() }))?;
        } else {
            io.out.write_all(serialize_spec(state).as_bytes())?;
        }
        Ok(())
    };
    emit_state(io, &history[0])?;
    loop {
        if !structured {
            write!(io.out, "> ")?;
            io.out.flush()?;
        }
        let mut line = String::new();
        if io.stdin.read_line(&mut line)? == 0 {
            break;
        }
        let words: Vec<String> = line.split('#').next().unwrap_or("").split_whitespace().map(String::from).collect();
        let words: &[String] = match words.first().map(String::as_str) {
            Some("do") => &words[1..],
            _ => &words[..],
        };
        let current = history.last().expect("history is never empty").clone();
        let reply: Result<(), Failure> = match words.iter().map(String::as_str).collect::<Vec<_>>()[..] {
            [] => continue,
            ["quit"] | ["exit"] => break,
            ["help"] => {
                if !structured {
                    io.out.write_all(REPL_HELP.as_bytes())?;
                }
                Ok(())
            }
            ["show"] => emit_state(io, &current),
            ["dot"] => {
                let dot = export_dot(&current);
                if structured {
                    #[derive(Serialize)]
                    struct Body {
                        event: &'static str,
                        dot: String,
                    }
                    writeln!(io.out, "{}", compact(Body { event: "dot", dot }))?;
                } else {
                    io.out.write_all(dot.as_bytes())?;
                }
                Ok(())
            }
            ["undo"] => {
                if history.len() > 1 {
                    history.pop();
                    let back = history.last().expect("history is never empty").clone();
                    emit_state(io, &back)
                } else {
                    Err(Failure::domain("nothing-to-undo", "already at the initial state"))
                }
            }
            ["access"] => emit_principals(io, "access", query_access(&current).iter()),
            ["holders", perm] => match perm.parse::<Permission>() {
                Ok(p) => emit_principals(io, "holders", query_holders(&current, p, ChainMode::All).iter()),
                Err(e) => Err(Failure::usage("syntax-error", e.to_string())),
            },
            [_, _, _] => match action_from_words(words) {
                Ok(action) => match evaluate(&current, &action) {
                    Ok(step) => {
                        if structured {
                            #[derive(Serialize)]
                            struct Body {
                                event: &'static str,
                                #[serde(flatten)]
                                step: StepDto,
                            }
                            writeln!(io.out, "{}", compact(Body { event: "step", step: step_dto(&action, &step) }))?;
                        } else {
                            io.out.write_all(delta_lines(&step.delta).as_bytes())?;
                            io.out.write_all(serialize_spec(&step.state).as_bytes())?;
                        }
                        history.push(step.state);
                        Ok(())
                    }
                    Err(e) => Err(e.into()),
                },
                Err(e) => Err(e),
            },
            _ => Err(Failure::usage("syntax-error", format!("unrecognized input `{}` (try `help`)", words.join(" ")))),
        };
        if let Err(f) = reply {
            if structured {
                #[derive(Serialize)]
                struct Body {
                    event: &'static str,
                    error: ErrorDto,
                }
                let error = ErrorDto { code: f.code, message: f.message, line: None };
                writeln!(io.out, "{}", compact(Body { event: "error", error }))?;
            } else {
                writeln!(io.out, "error: {}", f.message)?;
            }
        }
    }
    Ok(0)
}

fn compact<T: Serialize>(body: T) -> String {
    serde_json::to_string(&crate::schema::envelope(body)).expect("schema types always serialize")
}

fn emit_principals<'a>(
    io: &mut Io<'_>,
    kind: &'static str,
    ps: impl Iterator<Item = &'a delrev_core::Principal>,
) -> Result<(), Failure> {
    let ps: Vec<&delrev_core::Principal> = ps.collect();
    if io.structured() {
        #[derive(Serialize)]
        struct Body {
            event: &'static str,
            kind: &'static str,
            principals: Vec<String>,
        }
        let principals = ps.iter().map(|p| p.to_string()).collect();
        writeln!(io.out, "{}", compact(Body { event: "query", kind, principals }))?;
    } else {
        io.out.write_all(principals_line(ps).as_bytes())?;
    }
    Ok(())
}

fn query(io: &mut Io<'_>, spec: &str, what: QueryKind, perm: Option<&str>, active: bool) -> Result<i32, Failure> {
    let state = io.spec(spec)?;
    let mode = if active { ChainMode::ActiveOnly } else { ChainMode::All };
    let (kind, permission, principals) = match (what, perm) {
        (QueryKind::Access, None) => ("access", None, query_access(&state)),
        (QueryKind::Access, Some(_)) => return Err(Failure::usage("usage", "`access` takes no permission")),
        (QueryKind::Holders, Some(p)) => {
            let p: Permission =
                p.parse().map_err(|e: delrev_core::ModelError| Failure::usage("syntax-error", e.to_string()))?;
            ("holders", Some(p), query_holders(&state, p, mode))
        }
        (QueryKind::Holders, None) => return Err(Failure::usage("usage", "`holders` needs a permission")),
    };
    if io.structured() {
        #[derive(Serialize)]
        struct Body {
            command: &'static str,
            kind: &'static str,
            #[serde(skip_serializing_if = "Option::is_none")]
            permission: Option<String>,
            active: bool,
            principals: Vec<String>,
        }
        io.json(Body {
            command: "query",
            kind,
            permission: permission.map(|p| p.to_string()),
            active: kind == "access" || active,
            principals: principals.iter().map(ToString::to_string).collect(),
        })?;
    } else {
        io.out.write_all(principals_line(&principals).as_bytes())?;
    }
    Ok(0)
}

fn verify(io: &mut Io<'_>, args: VerifyArgs) -> Result<i32, Failure> {
    let invariant: Invariant = args
        .invariant
        .parse()
        .map_err(|_| Failure::usage("unknown-invariant", format!("unknown invariant `{}`", args.invariant)))?;
    let start = match (&args.spec, args.n) {
        (Some(path), _) => io.spec(path)?,
        (None, Some(0)) => return Err(Failure::usage("usage", "--n must be at least 1")),
        (None, Some(n)) => empty_state(n),
        (None, None) => unreachable!("clap requires a source"),
    };
    let mode = match (args.exhaustive, args.random, args.arbitrary) {
        (Some(depth), _, _) => Mode::Exhaustive { depth },
        (_, Some(samples), _) => Mode::Random { samples, seed: args.seed, depth: args.depth },
        (_, _, Some(samples)) => Mode::RandomArbitrary { samples, seed: args.seed },
        _ => unreachable!("clap requires a mode"),
    };
    let report = verify_from(invariant, &start, mode, args.cap).map_err(|e| match e {
        VerifyError::ResourceBoundExceeded { .. } => Failure::domain("resource-bound-exceeded", e.to_string()),
        VerifyError::NoPrincipals => Failure::usage("usage", e.to_string()),
    })?;
    if io.structured() {
        #[derive(Serialize)]
        struct Body {
            command: &'static str,
            report: ReportDto,
        }
        io.json(Body { command: "verify", report: (&report).into() })?;
    } else {
        writeln!(io.out, "{report}")?;
        match &report.outcome {
            Outcome::Holds => {}
            Outcome::Counterexample(w) => {
                writeln!(
                    io.out,
                    "# witness pre-state, then `do {} {} {}`",
                    w.action.scheme, w.action.actor, w.action.target
                )?;
                io.out.write_all(serialize_spec(&w.state).as_bytes())?;
            }
            Outcome::StepFailed { state, .. } => {
                writeln!(io.out, "# failing pre-state")?;
                io.out.write_all(serialize_spec(state).as_bytes())?;
            }
        }
    }
    Ok(if report.holds() { 0 } else { 1 })
}

fn plan_cmd(io: &mut Io<'_>, spec: &str, actor: &str, goal: &str, min: bool) -> Result<i32, Failure> {
    let state = io.spec(spec)?;
    let goal: Goal =
        goal.parse().map_err(|e: delrev_core::planner::GoalError| Failure::usage("bad-goal", e.to_string()))?;
    let actor = delrev_core::Principal::new(actor).map_err(|e| Failure::usage("syntax-error", e.to_string()))?;
    let mut results = plan(&state, &actor, &goal).map_err(|e| match &e {
        PlanError::Step { error, .. } => Failure::domain(error.code(), e.to_string()),
        PlanError::UnknownPrincipal(_) => Failure::domain("unknown-principal", e.to_string()),
        PlanError::PrincipalMismatch => Failure::domain("principal-mismatch", e.to_string()),
    })?;
    if min {
        results.truncate(1);
    }
    if io.structured() {
        #[derive(Serialize)]
        struct Body {
            command: &'static str,
            actor: String,
            goal: String,
            results: Vec<PlanEntryDto>,
        }
        io.json(Body {
            command: "plan",
            actor: actor.to_string(),
            goal: goal.to_string(),
            results: results.iter().map(PlanEntryDto::inline).collect(),
        })?;
    } else {
        if results.is_empty() {
            writeln!(io.err, "no single action of {actor} achieves {goal}")?;
        }
        for r in &results {
            writeln!(io.out, "{} {}", r.cost, r.action)?;
        }
    }
    Ok(0)
}

fn serve(io: &mut Io<'_>, args: ServeArgs) -> Result<i32, Failure> {
    let config = crate::service::Config {
        session_ttl: Duration::from_secs(args.session_ttl),
        preview_ttl: Duration::from_secs(args.preview_ttl),
        verify_cap: args.verify_cap,
    };
    let addr = format!("{}:{}", args.bind, args.port);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure::usage("io-error", format!("cannot bind {addr}: {e}")))?;
        writeln!(io.err, "listening on {}", listener.local_addr()?)?;
        axum::serve(listener, crate::service::router(config)).await?;
        Ok::<_, Failure>(())
    })?;
    Ok(0)
}
