//! The agents' statements as conditional-probability claims, evaluated under
//! a rule set and chained into a verdict on the halting event.
//!
//! A [`RuleSet`] names the [`AssignmentRule`] each statement's speaker uses.
//! Two refinements sit on top of the perspectives engine:
//!
//! * Under `unitary-global`, a prediction of a Wigner's outcome is made from
//!   that Wigner's description, so conditions on the friends' sealed records
//!   (r, z) are dropped and reported as `ignored`.
//! * A nested claim "A is certain that B is certain of X" holds when A is
//!   certain of some value of B's record and B's claim holds given it.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement::IMPOSSIBLE;
use crate::perspectives::{assign, conditional, overlap, Agent, AssignmentRule, Perspective, PerspectiveError, Time};
use crate::protocol::{kets, Coin, Protocol, Record, Semantics, Spin, Variable, WignerOutcome, S};
use crate::qcore::StateVector;

/// Tolerance for "probability one" and "probability zero".
pub const CERTAINTY_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StatementId {
    #[serde(rename = "Fbar_01")]
    Fbar01,
    #[serde(rename = "Fbar_02")]
    Fbar02,
    #[serde(rename = "Fbar_02_star")]
    Fbar02Star,
    #[serde(rename = "F_12")]
    F12,
    #[serde(rename = "F_13")]
    F13,
    #[serde(rename = "Wbar_22")]
    Wbar22,
    #[serde(rename = "Wbar_23")]
    Wbar23,
    #[serde(rename = "Wbar_23_star")]
    Wbar23Star,
}

impl StatementId {
    pub const ALL: [StatementId; 8] = [
        StatementId::Fbar01,
        StatementId::Fbar02,
        StatementId::Fbar02Star,
        StatementId::F12,
        StatementId::F13,
        StatementId::Wbar22,
        StatementId::Wbar23,
        StatementId::Wbar23Star,
    ];
}

impl fmt::Display for StatementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StatementId::Fbar01 => "Fbar_01",
            StatementId::Fbar02 => "Fbar_02",
            StatementId::Fbar02Star => "Fbar_02_star",
            StatementId::F12 => "F_12",
            StatementId::F13 => "F_13",
            StatementId::Wbar22 => "Wbar_22",
            StatementId::Wbar23 => "Wbar_23",
            StatementId::Wbar23Star => "Wbar_23_star",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClaimKind {
    Certain,
    Impossible,
    Nonzero,
}

impl ClaimKind {
    fn holds(self, p: f64) -> bool {
        match self {
            ClaimKind::Certain => p >= 1.0 - CERTAINTY_TOL,
            ClaimKind::Impossible => p <= CERTAINTY_TOL,
            ClaimKind::Nonzero => p > IMPOSSIBLE,
        }
    }
}

impl fmt::Display for ClaimKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClaimKind::Certain => "certain",
            ClaimKind::Impossible => "impossible",
            ClaimKind::Nonzero => "nonzero",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Claim {
    /// `kind(event | condition)`.
    Probability { kind: ClaimKind, event: Vec<Record> },
    /// The subsystems are certainly in the given pure state.
    PureState { subsystems: Vec<String>, state: StateVector },
    /// Certain of a value of `about`, and `inner` holds given that value.
    Nested { about: Variable, inner: StatementId },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Statement {
    pub id: StatementId,
    pub speaker: Agent,
    pub time: Time,
    pub condition: Vec<Record>,
    pub claim: Claim,
    pub text: String,
}

fn halt() -> Vec<Record> {
    vec![Record::Wbar(WignerOutcome::Ok), Record::W(WignerOutcome::Ok)]
}

/// The built-in statements.
pub fn statement(id: StatementId) -> Statement {
    use StatementId::*;
    let tails = Record::R(Coin::Tails);
    let plus = Record::Z(Spin::PlusHalf);
    let ok_bar = Record::Wbar(WignerOutcome::Ok);
    let (speaker, time, condition, claim, text) = match id {
        Fbar01 => (
            Agent::Fbar,
            Time::T10,
            vec![tails],
            Claim::PureState {
                subsystems: vec![S.to_string()],
                state: kets::right(),
            },
            "The spin S is in state |→⟩ at time n:10.",
        ),
        Fbar02 => (
            Agent::Fbar,
            Time::T10,
            vec![tails],
            Claim::Probability {
                kind: ClaimKind::Certain,
                event: vec![Record::W(WignerOutcome::Fail)],
            },
            "I am certain that W will observe w = fail at time n:31.",
        ),
        Fbar02Star => (
            Agent::Fbar,
            Time::T10,
            vec![ok_bar],
            Claim::Probability {
                kind: ClaimKind::Nonzero,
                event: vec![Record::W(WignerOutcome::Ok)],
            },
            "I am certain that when Wbar finds wbar = ok_bar at time n:21, W will have a nonzero probability to observe w = ok at time n:31.",
        ),
        F12 => (
            Agent::F,
            Time::T20,
            vec![plus],
            Claim::Probability {
                kind: ClaimKind::Certain,
                event: vec![tails],
            },
            "I am certain that Fbar knows that r = tails at time n:01.",
        ),
        F13 => (
            Agent::F,
            Time::T20,
            vec![plus],
            Claim::Nested {
                about: Variable::R,
                inner: Fbar02,
            },
            "I am certain that Fbar is certain that W will observe w = fail at time n:31.",
        ),
        Wbar22 => (
            Agent::Wbar,
            Time::T30,
            vec![ok_bar],
            Claim::Probability {
                kind: ClaimKind::Certain,
                event: vec![plus],
            },
            "I am certain that F knows that z = +1/2 at time n:11.",
        ),
        Wbar23 => (
            Agent::Wbar,
            Time::T30,
            vec![ok_bar],
            Claim::Nested {
                about: Variable::Z,
                inner: F13,
            },
            "I am certain that F is certain that W will observe w = fail at time n:31.",
        ),
        Wbar23Star => (
            Agent::Wbar,
            Time::T30,
            vec![ok_bar],
            Claim::Probability {
                kind: ClaimKind::Nonzero,
                event: vec![Record::W(WignerOutcome::Ok)],
            },
            "I am certain that W will have a nonzero probability to observe w = ok at time n:31.",
        ),
    };
    Statement {
        id,
        speaker,
        time,
        condition,
        claim,
        text: text.to_string(),
    }
}

/// Statements available for evaluation, keyed by id.
#[derive(Clone, Debug, PartialEq)]
pub struct Catalog {
    statements: BTreeMap<StatementId, Statement>,
}

impl Default for Catalog {
    fn default() -> Self {
        Self {
            statements: StatementId::ALL.iter().map(|&id| (id, statement(id))).collect(),
        }
    }
}

impl Catalog {
    pub fn get(&self, id: StatementId) -> Result<&Statement> {
        self.statements.get(&id).ok_or(ReasoningError::UnknownStatement(id))
    }

    pub fn insert(&mut self, st: Statement) {
        self.statements.insert(st.id, st);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleSetName {
    FrMixed,
    AllCollapse,
    AllUnitary,
}

impl RuleSetName {
    pub const ALL: [RuleSetName; 3] = [RuleSetName::FrMixed, RuleSetName::AllCollapse, RuleSetName::AllUnitary];
}

impl fmt::Display for RuleSetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleSetName::FrMixed => "fr-mixed",
            RuleSetName::AllCollapse => "all-collapse",
            RuleSetName::AllUnitary => "all-unitary",
        })
    }
}

impl FromStr for RuleSetName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "fr-mixed" => Ok(RuleSetName::FrMixed),
            "all-collapse" => Ok(RuleSetName::AllCollapse),
            "all-unitary" => Ok(RuleSetName::AllUnitary),
            _ => Err(format!("unknown rule set `{s}` (expected fr-mixed, all-collapse or all-unitary)")),
        }
    }
}

/// What a fully holding chain lets one conclude about the halting event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConclusionKind {
    Impossible,
    Nonzero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub name: RuleSetName,
    pub rules: BTreeMap<StatementId, AssignmentRule>,
    pub chain: Vec<StatementId>,
    pub conclusion: ConclusionKind,
}

impl RuleSet {
    pub fn builtin(name: RuleSetName) -> Self {
        use AssignmentRule::*;
        use StatementId::*;
        let uniform = |rule| {
            let mut m: BTreeMap<_, _> = StatementId::ALL.iter().map(|&id| (id, rule)).collect();
            m.insert(Fbar01, OwnRecordPure);
            m
        };
        let fr_chain = vec![Fbar01, Fbar02, F12, F13, Wbar22, Wbar23];
        match name {
            RuleSetName::FrMixed => Self {
                name,
                rules: BTreeMap::from([
                    (Fbar01, OwnRecordPure),
                    (Fbar02, OwnRecordPure),
                    (Fbar02Star, UnitaryGlobal),
                    (F12, OwnRecordPure),
                    (F13, OwnRecordPure),
                    (Wbar22, UnitaryGlobal),
                    (Wbar23, UnitaryGlobal),
                    (Wbar23Star, UnitaryGlobal),
                ]),
                chain: fr_chain,
                conclusion: ConclusionKind::Impossible,
            },
            RuleSetName::AllCollapse => Self {
                name,
                rules: uniform(CollapseAware),
                chain: fr_chain,
                conclusion: ConclusionKind::Impossible,
            },
            RuleSetName::AllUnitary => Self {
                name,
                rules: uniform(UnitaryGlobal),
                chain: vec![Fbar01, Fbar02Star, F12, Wbar22, Wbar23Star],
                conclusion: ConclusionKind::Nonzero,
            },
        }
    }

    pub fn rule(&self, id: StatementId) -> AssignmentRule {
        self.rules.get(&id).copied().unwrap_or(AssignmentRule::UnitaryGlobal)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReasoningError {
    #[error(transparent)]
    Perspective(#[from] PerspectiveError),
    #[error("statement {0} depends on itself")]
    Cycle(StatementId),
    #[error("statement {0} is not in the catalog")]
    UnknownStatement(StatementId),
}

pub type Result<T> = std::result::Result<T, ReasoningError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Fails,
    /// The condition has probability zero under the speaker's description.
    NotEvaluable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::NotEvaluable => "not-evaluable",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub id: StatementId,
    pub speaker: Agent,
    pub time: Time,
    pub rule: AssignmentRule,
    pub verdict: Verdict,
    /// The probability (or overlap) the claim was judged on.
    pub value: Option<f64>,
    pub condition: Vec<Record>,
    /// Conditions the rule set discards for this claim.
    pub ignored: Vec<Record>,
    /// For nested claims: the value of the other agent's record the speaker
    /// is certain of.
    pub premise: Option<Record>,
    pub nested: Option<Box<Evaluation>>,
}

fn is_wigner(v: Variable) -> bool {
    matches!(v, Variable::Wbar | Variable::W)
}

fn values(var: Variable) -> Vec<Record> {
    match var {
        Variable::R => vec![Record::R(Coin::Heads), Record::R(Coin::Tails)],
        Variable::Z => vec![Record::Z(Spin::MinusHalf), Record::Z(Spin::PlusHalf)],
        Variable::Wbar => WignerOutcome::ALL.iter().map(|&o| Record::Wbar(o)).collect(),
        Variable::W => WignerOutcome::ALL.iter().map(|&o| Record::W(o)).collect(),
    }
}

/// Evaluates one statement of `catalog` under `rs`.
pub fn evaluate(protocol: &Protocol, catalog: &Catalog, id: StatementId, rs: &RuleSet) -> Result<Evaluation> {
    let st = catalog.get(id)?;
    evaluate_with(protocol, catalog, st, rs, &st.condition, &mut Vec::new())
}

fn evaluate_with(
    protocol: &Protocol,
    catalog: &Catalog,
    st: &Statement,
    rs: &RuleSet,
    condition: &[Record],
    stack: &mut Vec<StatementId>,
) -> Result<Evaluation> {
    if stack.contains(&st.id) {
        return Err(ReasoningError::Cycle(st.id));
    }
    stack.push(st.id);
    let rule = rs.rule(st.id);
    let mut eval = Evaluation {
        id: st.id,
        speaker: st.speaker,
        time: st.time,
        rule,
        verdict: Verdict::Fails,
        value: None,
        condition: condition.to_vec(),
        ignored: Vec::new(),
        premise: None,
        nested: None,
    };
    match &st.claim {
        Claim::Probability { kind, event } => {
            if rule == AssignmentRule::UnitaryGlobal && event.iter().any(|r| is_wigner(r.variable())) {
                let (kept, dropped): (Vec<Record>, Vec<Record>) =
                    condition.iter().partition(|r| is_wigner(r.variable()));
                eval.condition = kept;
                eval.ignored = dropped;
            }
            let p = Perspective::conditioned(st.speaker, st.time, rule, &eval.condition);
            match conditional(protocol, &p, event)? {
                None => eval.verdict = Verdict::NotEvaluable,
                Some(v) => {
                    eval.value = Some(v);
                    eval.verdict = if kind.holds(v) { Verdict::Holds } else { Verdict::Fails };
                }
            }
        }
        Claim::PureState { subsystems, state } => {
            let p = Perspective::conditioned(st.speaker, st.time, rule, condition);
            let names = subsystems.iter().map(String::as_str).collect::<Vec<_>>();
            match assign(protocol, &p, &names) {
                Err(PerspectiveError::ConditionImpossible { .. }) => eval.verdict = Verdict::NotEvaluable,
                Err(e) => return Err(e.into()),
                Ok(rho) => {
                    let v = overlap(&rho, state)?;
                    eval.value = Some(v);
                    eval.verdict = if ClaimKind::Certain.holds(v) {
                        Verdict::Holds
                    } else {
                        Verdict::Fails
                    };
                }
            }
        }
        Claim::Nested { about, inner } => {
            let p = Perspective::conditioned(st.speaker, st.time, rule, condition);
            let mut best: Option<(Record, f64)> = None;
            let mut evaluable = true;
            for value in values(*about) {
                match conditional(protocol, &p, &[value])? {
                    None => {
                        evaluable = false;
                        break;
                    }
                    Some(q) if best.is_none_or(|(_, b)| q > b) => best = Some((value, q)),
                    Some(_) => {}
                }
            }
            match best {
                _ if !evaluable => eval.verdict = Verdict::NotEvaluable,
                Some((value, q)) if ClaimKind::Certain.holds(q) => {
                    let inner_st = catalog.get(*inner)?;
                    let inner_eval = evaluate_with(protocol, catalog, inner_st, rs, &[value], stack)?;
                    eval.premise = Some(value);
                    eval.verdict = inner_eval.verdict;
                    eval.value = inner_eval.value;
                    eval.nested = Some(Box::new(inner_eval));
                }
                Some((_, q)) => eval.value = Some(q),
                None => eval.verdict = Verdict::NotEvaluable,
            }
        }
    }
    stack.pop();
    Ok(eval)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConclusion {
    pub kind: ConclusionKind,
    pub event: Vec<Record>,
    /// `P(w = ok | wbar = ok_bar)` as the chain's last link judged it.
    pub value: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub ruleset: RuleSetName,
    pub semantics: Semantics,
    pub theta: f64,
    pub statement_results: Vec<Evaluation>,
    pub chain: Vec<StatementId>,
    /// First link of the chain that does not hold.
    pub broken_at: Option<StatementId>,
    pub chain_conclusion: Option<ChainConclusion>,
    /// Exact `P(wbar = ok_bar, w = ok)` of the protocol.
    pub halting_probability: f64,
    pub contradiction: bool,
    /// The halting probability that refutes the conclusion.
    pub witness: Option<f64>,
}

impl AuditReport {
    pub fn result(&self, id: StatementId) -> Option<&Evaluation> {
        self.statement_results.iter().find(|e| e.id == id)
    }
}

/// Evaluates every catalog statement, then forward-chains `rs.chain`.
pub fn chain(protocol: &Protocol, catalog: &Catalog, rs: &RuleSet) -> Result<AuditReport> {
    let mut results = Vec::new();
    for id in StatementId::ALL {
        if catalog.statements.contains_key(&id) {
            results.push(evaluate(protocol, catalog, id, rs)?);
        }
    }
    let mut broken_at = None;
    let mut last_value = None;
    for &id in &rs.chain {
        let e = match results.iter().find(|e| e.id == id) {
            Some(e) => e,
            None => return Err(ReasoningError::UnknownStatement(id)),
        };
        if e.verdict != Verdict::Holds {
            broken_at = Some(id);
            break;
        }
        last_value = e.value;
    }
    let chain_conclusion = broken_at.is_none().then(|| ChainConclusion {
        kind: rs.conclusion,
        event: halt(),
        value: match rs.conclusion {
            ConclusionKind::Impossible => Some(0.0),
            ConclusionKind::Nonzero => last_value,
        },
    });
    let halting_probability = protocol.exact_joint()?.halting_probability();
    let contradiction = chain_conclusion
        .as_ref()
        .is_some_and(|c| c.kind == ConclusionKind::Impossible && halting_probability > IMPOSSIBLE);
    Ok(AuditReport {
        ruleset: rs.name,
        semantics: protocol.config().semantics,
        theta: protocol.config().theta,
        statement_results: results,
        chain: rs.chain.clone(),
        broken_at,
        chain_conclusion,
        halting_probability,
        contradiction,
        witness: contradiction.then_some(halting_probability),
    })
}

/// Audit of a built-in rule set with the built-in statements.
pub fn audit(protocol: &Protocol, name: RuleSetName) -> Result<AuditReport> {
    chain(protocol, &Catalog::default(), &RuleSet::builtin(name))
}

impl From<crate::protocol::ProtocolError> for ReasoningError {
    fn from(e: crate::protocol::ProtocolError) -> Self {
        ReasoningError::Perspective(e.into())
    }
}

impl From<crate::qcore::QError> for ReasoningError {
    fn from(e: crate::qcore::QError) -> Self {
        ReasoningError::Perspective(e.into())
    }
}
