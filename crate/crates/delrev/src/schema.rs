//! Structured output: JSON documents tagged `"schema": "delrev/1"`, shared by
//! the CLI and the HTTP service.

use delrev_core::verifier::{Mode, Outcome};
use delrev_core::{
    Action, AuthKey, Authorization, AuthorizationState, Evaluation, InvariantReport, NegativeAuthorization, PlanResult,
    Principal, StepDelta, StructuralError,
};
use serde::{Deserialize, Serialize};

pub const SCHEMA: &str = "delrev/1";

/// A body wrapped with the schema tag.
#[derive(Serialize)]
pub struct Envelope<T: Serialize> {
    pub schema: &'static str,
    #[serde(flatten)]
    pub body: T,
}

pub fn envelope<T: Serialize>(body: T) -> Envelope<T> {
    Envelope { schema: SCHEMA, body }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(body: T) -> String {
    let mut s = serde_json::to_string_pretty(&envelope(body)).expect("schema types always serialize");
    s.push('\n');
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthDto {
    pub grantor: String,
    pub grantee: String,
    pub permission: String,
    pub active: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyDto {
    pub grantor: String,
    pub grantee: String,
    pub permission: String,
}

impl From<&AuthKey> for KeyDto {
    fn from(k: &AuthKey) -> Self {
        KeyDto { grantor: k.grantor.to_string(), grantee: k.grantee.to_string(), permission: k.permission.to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegDto {
    pub grantor: String,
    pub grantee: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDto {
    pub soa: String,
    pub principals: Vec<String>,
    pub authorizations: Vec<AuthDto>,
    pub negatives: Vec<NegDto>,
}

impl From<&AuthorizationState> for StateDto {
    fn from(s: &AuthorizationState) -> Self {
        StateDto {
            soa: s.soa().to_string(),
            principals: s.principals().map(ToString::to_string).collect(),
            authorizations: s
                .authorizations()
                .map(|a| AuthDto {
                    grantor: a.grantor.to_string(),
                    grantee: a.grantee.to_string(),
                    permission: a.permission.to_string(),
                    active: a.active,
                })
                .collect(),
            negatives: s
                .negatives()
                .map(|n| NegDto { grantor: n.grantor.to_string(), grantee: n.grantee.to_string() })
                .collect(),
        }
    }
}

/// Why a [`StateDto`] does not describe a valid state.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DtoError {
    #[error("{0}")]
    Value(String),
    #[error("invalid state: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Structural(Vec<StructuralError>),
}

fn principal(s: &str) -> Result<Principal, DtoError> {
    Principal::new(s).map_err(|e| DtoError::Value(e.to_string()))
}

impl TryFrom<&StateDto> for AuthorizationState {
    type Error = DtoError;

    fn try_from(d: &StateDto) -> Result<Self, DtoError> {
        let principals = d.principals.iter().map(|p| principal(p)).collect::<Result<Vec<_>, _>>()?;
        let pos = d
            .authorizations
            .iter()
            .map(|a| {
                Ok(Authorization {
                    grantor: principal(&a.grantor)?,
                    grantee: principal(&a.grantee)?,
                    permission: a
                        .permission
                        .parse()
                        .map_err(|e: delrev_core::ModelError| DtoError::Value(e.to_string()))?,
                    active: a.active,
                })
            })
            .collect::<Result<Vec<_>, DtoError>>()?;
        let neg = d
            .negatives
            .iter()
            .map(|n| Ok(NegativeAuthorization { grantor: principal(&n.grantor)?, grantee: principal(&n.grantee)? }))
            .collect::<Result<Vec<_>, DtoError>>()?;
        AuthorizationState::from_parts(principal(&d.soa)?, principals, pos, neg).map_err(DtoError::Structural)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionDto {
    pub scheme: String,
    pub actor: String,
    pub target: String,
}

impl From<&Action> for ActionDto {
    fn from(a: &Action) -> Self {
        ActionDto { scheme: a.scheme.to_string(), actor: a.actor.to_string(), target: a.target.to_string() }
    }
}

impl TryFrom<&ActionDto> for Action {
    type Error = DtoError;

    fn try_from(d: &ActionDto) -> Result<Self, DtoError> {
        let scheme = d.scheme.parse().map_err(|e: delrev_core::ModelError| DtoError::Value(e.to_string()))?;
        Ok(Action::new(scheme, principal(&d.actor)?, principal(&d.target)?))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaDto {
    pub deleted: Vec<KeyDto>,
    pub added: Vec<KeyDto>,
    pub inactivated: Vec<KeyDto>,
    pub negatives_added: Vec<NegDto>,
}

impl From<&StepDelta> for DeltaDto {
    fn from(d: &StepDelta) -> Self {
        DeltaDto {
            deleted: d.deleted.iter().map(KeyDto::from).collect(),
            added: d.added.iter().map(KeyDto::from).collect(),
            inactivated: d.inactivated.iter().map(KeyDto::from).collect(),
            negatives_added: d
                .neg_added
                .iter()
                .map(|(g, e)| NegDto { grantor: g.to_string(), grantee: e.to_string() })
                .collect(),
        }
    }
}

pub fn evaluation_name(e: Evaluation) -> &'static str {
    match e {
        Evaluation::WellFounded => "well-founded",
        Evaluation::LeastLossStable => "least-loss-stable",
        Evaluation::FirstTriggered => "first-triggered",
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StepDto {
    pub action: ActionDto,
    pub evaluation: &'static str,
    pub delta: DeltaDto,
    pub state: StateDto,
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanEntryDto {
    pub action: ActionDto,
    pub cost: usize,
    /// Present in CLI output.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub post_state: Option<StateDto>,
    /// Present in service output: where to fetch the post-state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preview: Option<String>,
}

impl PlanEntryDto {
    pub fn inline(r: &PlanResult) -> Self {
        PlanEntryDto {
            action: (&r.action).into(),
            cost: r.cost,
            post_state: Some((&r.post_state).into()),
            preview: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModeDto {
    Exhaustive { depth: usize },
    Random { samples: usize, seed: u64, depth: usize },
    Arbitrary { samples: usize, seed: u64 },
}

impl From<Mode> for ModeDto {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Exhaustive { depth } => ModeDto::Exhaustive { depth },
            Mode::Random { samples, seed, depth } => ModeDto::Random { samples, seed, depth },
            Mode::RandomArbitrary { samples, seed } => ModeDto::Arbitrary { samples, seed },
        }
    }
}

impl From<ModeDto> for Mode {
    fn from(m: ModeDto) -> Self {
        match m {
            ModeDto::Exhaustive { depth } => Mode::Exhaustive { depth },
            ModeDto::Random { samples, seed, depth } => Mode::Random { samples, seed, depth },
            ModeDto::Arbitrary { samples, seed } => Mode::RandomArbitrary { samples, seed },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OutcomeDto {
    Holds,
    Counterexample { state: StateDto, action: ActionDto, violations: Vec<String> },
    StepFailed { state: StateDto, action: ActionDto, code: &'static str, message: String },
}

#[derive(Clone, Debug, Serialize)]
pub struct ReportDto {
    pub invariant: &'static str,
    pub mode: ModeDto,
    pub n: usize,
    pub states: usize,
    pub steps: usize,
    pub undetermined: usize,
    pub holds: bool,
    pub outcome: OutcomeDto,
    pub summary: String,
}

impl From<&InvariantReport> for ReportDto {
    fn from(r: &InvariantReport) -> Self {
        let outcome = match &r.outcome {
            Outcome::Holds => OutcomeDto::Holds,
            Outcome::Counterexample(w) => OutcomeDto::Counterexample {
                state: (&w.state).into(),
                action: (&w.action).into(),
                violations: w.violations.iter().map(ToString::to_string).collect(),
            },
            Outcome::StepFailed { state, action, error } => OutcomeDto::StepFailed {
                state: state.into(),
                action: action.into(),
                code: error.code(),
                message: error.to_string(),
            },
        };
        ReportDto {
            invariant: r.invariant.as_str(),
            mode: r.mode.into(),
            n: r.n,
            states: r.states,
            steps: r.steps,
            undetermined: r.undetermined,
            holds: r.holds(),
            outcome,
            summary: r.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDto {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

#[derive(Serialize)]
pub struct ErrorBody {
    pub error: ErrorDto,
}
