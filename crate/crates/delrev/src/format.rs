//! The line-oriented spec format and action scripts.
//!
//! ```text
//! # comment
//! soa A
//! principal B
//! auth A B TT
//! auth B C TF inactive
//! neg A C
//! do WLD A B
//! ```
//!
//! `do` lines are only accepted by [`parse_document`] and [`parse_script`].

use std::fmt::Write as _;

use delrev_core::{
    Action, Authorization, AuthorizationState, NegativeAuthorization, Permission, Principal, Scheme, StructuralError,
};
use thiserror::Error;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown principal {name}")]
    UnknownPrincipal { line: usize, name: String },
    #[error("line {line}: source of authority declared twice")]
    DuplicateSoa { line: usize },
    #[error("no `soa` line")]
    MissingSoa,
    #[error("invalid state: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Structural(Vec<StructuralError>),
}

impl ParseError {
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::Syntax { .. } => "syntax-error",
            ParseError::UnknownPrincipal { .. } => "unknown-principal",
            ParseError::DuplicateSoa { .. } => "duplicate-soa",
            ParseError::MissingSoa => "missing-soa",
            ParseError::Structural(_) => "structural-error",
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { line, .. }
            | ParseError::UnknownPrincipal { line, .. }
            | ParseError::DuplicateSoa { line } => Some(*line),
            _ => None,
        }
    }
}

/// A spec plus the actions of its `do` lines, in order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpecDocument {
    pub state: AuthorizationState,
    pub script: Vec<Action>,
}

fn syntax(line: usize, message: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, message: message.into() }
}

/// Non-empty lines with comments stripped, numbered from 1.
fn lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("");
        let words: Vec<&str> = body.split_whitespace().collect();
        (!words.is_empty()).then_some((i + 1, words))
    })
}

fn name(line: usize, word: &str) -> Result<Principal, ParseError> {
    Principal::new(word).map_err(|e| syntax(line, e.to_string()))
}

fn action(line: usize, words: &[&str]) -> Result<Action, ParseError> {
    let [_, scheme, actor, target] = words else {
        return Err(syntax(line, "expected `do <scheme> <actor> <target>`"));
    };
    let scheme: Scheme = scheme.parse().map_err(|e: delrev_core::ModelError| syntax(line, e.to_string()))?;
    Ok(Action::new(scheme, name(line, actor)?, name(line, target)?))
}

/// Parses a spec with optional `do` lines. Actions may mention any
/// principal; they are checked when applied.
pub fn parse_document(text: &str) -> Result<SpecDocument, ParseError> {
    let mut soa: Option<Principal> = None;
    let mut principals = Vec::new();
    let mut pos: Vec<(usize, Authorization)> = Vec::new();
    let mut neg: Vec<(usize, NegativeAuthorization)> = Vec::new();
    let mut script = Vec::new();
    for (line, words) in lines(text) {
        match words[0] {
            "soa" => {
                let [_, p] = words[..] else { return Err(syntax(line, "expected `soa <name>`")) };
                if soa.is_some() {
                    return Err(ParseError::DuplicateSoa { line });
                }
                soa = Some(name(line, p)?);
            }
            "principal" => {
                let [_, p] = words[..] else { return Err(syntax(line, "expected `principal <name>`")) };
                principals.push(name(line, p)?);
            }
            "auth" => {
                let (g, e, perm, active) = match words[..] {
                    [_, g, e, perm] => (g, e, perm, true),
                    [_, g, e, perm, "inactive"] => (g, e, perm, false),
                    _ => return Err(syntax(line, "expected `auth <grantor> <grantee> <perm> [inactive]`")),
                };
                let permission: Permission =
                    perm.parse().map_err(|e: delrev_core::ModelError| syntax(line, e.to_string()))?;
                pos.push((
                    line,
                    Authorization { grantor: name(line, g)?, grantee: name(line, e)?, permission, active },
                ));
            }
            "neg" => {
                let [_, g, e] = words[..] else { return Err(syntax(line, "expected `neg <grantor> <grantee>`")) };
                neg.push((line, NegativeAuthorization { grantor: name(line, g)?, grantee: name(line, e)? }));
            }
            "do" => script.push(action(line, &words)?),
            other => return Err(syntax(line, format!("unknown directive `{other}`"))),
        }
    }
    let soa = soa.ok_or(ParseError::MissingSoa)?;
    if !principals.contains(&soa) {
        principals.push(soa.clone());
    }
    let known = |line: usize, p: &Principal| {
        if principals.contains(p) {
            Ok(())
        } else {
            Err(ParseError::UnknownPrincipal { line, name: p.to_string() })
        }
    };
    for (line, a) in &pos {
        known(*line, &a.grantor)?;
        known(*line, &a.grantee)?;
    }
    for (line, n) in &neg {
        known(*line, &n.grantor)?;
        known(*line, &n.grantee)?;
    }
    let state = AuthorizationState::from_parts(
        soa,
        principals,
        pos.into_iter().map(|(_, a)| a),
        neg.into_iter().map(|(_, n)| n),
    )
    .map_err(ParseError::Structural)?;
    Ok(SpecDocument { state, script })
}

/// Parses a spec; `do` lines are a syntax error here.
pub fn parse_spec(text: &str) -> Result<AuthorizationState, ParseError> {
    if let Some((line, _)) = lines(text).find(|(_, w)| w[0] == "do") {
        return Err(syntax(line, "`do` lines belong in a script"));
    }
    parse_document(text).map(|doc| doc.state)
}

/// Parses `do` lines only.
pub fn parse_script(text: &str) -> Result<Vec<Action>, ParseError> {
    lines(text)
        .map(|(line, words)| match words[0] {
            "do" => action(line, &words),
            other => Err(syntax(line, format!("expected `do`, found `{other}`"))),
        })
        .collect()
}

/// Canonical text: `soa`, sorted principals, then authorizations and
/// negative authorizations in key order.
pub fn serialize_spec(state: &AuthorizationState) -> String {
    let mut out = String::new();
    writeln!(out, "soa {}", state.soa()).unwrap();
    for p in state.principals() {
        writeln!(out, "principal {p}").unwrap();
    }
    for a in state.authorizations() {
        let flag = if a.active { "" } else { " inactive" };
        writeln!(out, "auth {} {} {}{flag}", a.grantor, a.grantee, a.permission).unwrap();
    }
    for n in state.negatives() {
        writeln!(out, "neg {} {}", n.grantor, n.grantee).unwrap();
    }
    out
}

/// A spec followed by one `do` line per action.
pub fn serialize_document(doc: &SpecDocument) -> String {
    let mut out = serialize_spec(&doc.state);
    for a in &doc.script {
        writeln!(out, "do {} {} {}", a.scheme, a.actor, a.target).unwrap();
    }
    out
}
