//! Who describes what, when, and with which rule.
//!
//! A [`Perspective`] fixes an agent, a checkpoint and an [`AssignmentRule`],
//! plus the records it conditions on. Checkpoints sit immediately after the
//! step ending at that label: `n:00` is the initial state, `n:10` follows
//! Fbar's step, `n:20` follows F's, `n:30` follows Wbar's.
//!
//! Records split into `known` (the agent's own outcome or an announcement it
//! has heard by then) and `branch` (a hypothetical slice "suppose r = tails"
//! which needs no knowledge). Both are applied as projections on the
//! corresponding pointer.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::measurement::{MeasurementError, MeasurementSpec, IMPOSSIBLE};
use crate::protocol::{Protocol, ProtocolError, Record, Step, Variable};
use crate::qcore::{dephase_matrix, hermitian_eigenvalues, layout_mismatch, DensityMatrix, Operator, OperatorKind, QError, StateVector, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentRule {
    /// Every friend measurement collapses: descriptions are mixtures over the
    /// possible records.
    CollapseAware,
    /// Friends' measurements are unitary: descriptions are slices of the
    /// global pure state.
    UnitaryGlobal,
    /// Pure state conditioned on the agent's own record.
    OwnRecordPure,
}

impl fmt::Display for AssignmentRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssignmentRule::CollapseAware => "collapse-aware",
            AssignmentRule::UnitaryGlobal => "unitary-global",
            AssignmentRule::OwnRecordPure => "own-record-pure",
        })
    }
}

impl FromStr for AssignmentRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "collapse-aware" | "collapse" => Ok(AssignmentRule::CollapseAware),
            "unitary-global" | "unitary" => Ok(AssignmentRule::UnitaryGlobal),
            "own-record-pure" | "own-record" | "own" => Ok(AssignmentRule::OwnRecordPure),
            _ => Err(format!("unknown assignment rule `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Agent {
    Fbar,
    F,
    Wbar,
    W,
}

impl Agent {
    pub const ALL: [Agent; 4] = [Agent::Fbar, Agent::F, Agent::Wbar, Agent::W];

    /// The variable this agent's own measurement produces.
    pub fn own_variable(self) -> Variable {
        match self {
            Agent::Fbar => Variable::R,
            Agent::F => Variable::Z,
            Agent::Wbar => Variable::Wbar,
            Agent::W => Variable::W,
        }
    }

    /// Whether the agent can know `var` at checkpoint `time`: its own record
    /// once the step is done, or Wbar's announcement from `n:30` on.
    pub fn knows(self, var: Variable, time: Time) -> bool {
        let done = var.step() < time.index();
        done && (var == self.own_variable() || var == Variable::Wbar)
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Agent::Fbar => "Fbar",
            Agent::F => "F",
            Agent::Wbar => "Wbar",
            Agent::W => "W",
        })
    }
}

impl FromStr for Agent {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fbar" | "f̄" => Ok(Agent::Fbar),
            "f" => Ok(Agent::F),
            "wbar" | "w̄" => Ok(Agent::Wbar),
            "w" => Ok(Agent::W),
            _ => Err(format!("unknown agent `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Time {
    #[serde(rename = "n:00")]
    T00,
    #[serde(rename = "n:10")]
    T10,
    #[serde(rename = "n:20")]
    T20,
    #[serde(rename = "n:30")]
    T30,
}

impl Time {
    pub const ALL: [Time; 4] = [Time::T00, Time::T10, Time::T20, Time::T30];

    /// Number of steps completed at this checkpoint.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n:{}0", self.index())
    }
}

impl FromStr for Time {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        let digits = t.trim_start_matches("n:").trim_start_matches('t');
        match digits {
            "00" | "0" => Ok(Time::T00),
            "10" => Ok(Time::T10),
            "20" => Ok(Time::T20),
            "30" => Ok(Time::T30),
            _ => Err(format!("unknown time `{s}` (expected n:00, n:10, n:20 or n:30)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerspectiveError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("{agent} cannot know {record} at {time}")]
    Unknowable { agent: Agent, record: Record, time: Time },
    #[error("own-record-pure needs {agent}'s own record, which is not known at {time}")]
    MissingOwnRecord { agent: Agent, time: Time },
    #[error("{record} is produced after {time}")]
    FutureCondition { record: Record, time: Time },
    #[error("conditioning has probability {probability:.3e}")]
    ConditionImpossible { probability: f64 },
}

impl From<QError> for PerspectiveError {
    fn from(e: QError) -> Self {
        PerspectiveError::Protocol(e.into())
    }
}

impl From<MeasurementError> for PerspectiveError {
    fn from(e: MeasurementError) -> Self {
        PerspectiveError::Protocol(e.into())
    }
}

pub type Result<T> = std::result::Result<T, PerspectiveError>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perspective {
    pub agent: Agent,
    pub time: Time,
    pub rule: AssignmentRule,
    pub known: Vec<Record>,
    pub branch: Vec<Record>,
}

impl Perspective {
    pub fn new(agent: Agent, time: Time, rule: AssignmentRule) -> Self {
        Self {
            agent,
            time,
            rule,
            known: Vec::new(),
            branch: Vec::new(),
        }
    }

    pub fn knowing(mut self, records: &[Record]) -> Self {
        self.known.extend_from_slice(records);
        self
    }

    pub fn given(mut self, records: &[Record]) -> Self {
        self.branch.extend_from_slice(records);
        self
    }

    /// Sorts `records` into known and branch by what the agent can know.
    pub fn conditioned(agent: Agent, time: Time, rule: AssignmentRule, records: &[Record]) -> Self {
        let (known, branch): (Vec<Record>, Vec<Record>) =
            records.iter().partition(|r| agent.knows(r.variable(), time));
        Self {
            agent,
            time,
            rule,
            known,
            branch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for &record in &self.known {
            if !self.agent.knows(record.variable(), self.time) {
                return Err(PerspectiveError::Unknowable {
                    agent: self.agent,
                    record,
                    time: self.time,
                });
            }
        }
        if self.rule == AssignmentRule::OwnRecordPure
            && !self.known.iter().any(|r| r.variable() == self.agent.own_variable())
        {
            return Err(PerspectiveError::MissingOwnRecord {
                agent: self.agent,
                time: self.time,
            });
        }
        Ok(())
    }

    /// Records the rule actually conditions on.
    pub fn literals(&self) -> Vec<Record> {
        let own = self.agent.own_variable();
        let known = self
            .known
            .iter()
            .filter(|r| self.rule != AssignmentRule::OwnRecordPure || r.variable() == own);
        known.chain(&self.branch).copied().collect()
    }
}

/// Unnormalized density matrix of the full register after `steps` steps,
/// with each literal projected in right after the step producing it.
fn evolve(protocol: &Protocol, rule: AssignmentRule, literals: &[Record], steps: usize) -> Result<DMatrix<C64>> {
    let psi = protocol.initial_state().amplitudes();
    let mut rho = psi * psi.adjoint();
    for (s, step) in Step::ALL.iter().copied().enumerate().take(steps) {
        match step {
            Step::FbarMeasuresCoin | Step::FMeasuresSpin => {
                let u = match step {
                    Step::FbarMeasuresCoin => protocol.fbar_dilation(),
                    _ => protocol.f_dilation(),
                };
                rho = u.matrix() * rho * u.matrix().adjoint();
                if rule == AssignmentRule::CollapseAware {
                    rho = dephase_in(protocol, &rho, step)?;
                }
            }
            Step::WbarMeasuresLbar | Step::WMeasuresL => {
                rho = dephase_in(protocol, &rho, step)?;
            }
        }
        for record in literals.iter().filter(|r| r.variable().step() == s) {
            let p = record_projector(protocol, *record)?;
            rho = &p * rho * &p;
        }
    }
    Ok(rho)
}

fn dephase_in(protocol: &Protocol, rho: &DMatrix<C64>, step: Step) -> Result<DMatrix<C64>> {
    let basis = protocol.pointer_basis(step);
    let target = basis[0].layout().clone();
    let vecs = basis.iter().map(|b| b.amplitudes().clone()).collect::<Vec<_>>();
    Ok(dephase_matrix(protocol.layout(), rho, &target, &vecs)?)
}

/// Projector onto a record value, on the full register.
pub fn record_projector(protocol: &Protocol, record: Record) -> Result<DMatrix<C64>> {
    let vectors = protocol.record_vectors(record);
    let target = vectors[0].layout().clone();
    let mut m = DMatrix::<C64>::zeros(target.total_dim(), target.total_dim());
    for v in &vectors {
        m += v.amplitudes() * v.amplitudes().adjoint();
    }
    let op = Operator::new(target, m, OperatorKind::Projector)?;
    Ok(op.embed(protocol.layout())?.matrix().clone())
}

fn real_trace(m: &DMatrix<C64>) -> f64 {
    m.trace().re
}

/// The description `p` assigns to `subsystems` at its checkpoint.
pub fn assign(protocol: &Protocol, p: &Perspective, subsystems: &[&str]) -> Result<DensityMatrix> {
    p.validate()?;
    let literals = p.literals();
    if let Some(&record) = literals.iter().find(|r| r.variable().step() >= p.time.index()) {
        return Err(PerspectiveError::FutureCondition { record, time: p.time });
    }
    let rho = evolve(protocol, p.rule, &literals, p.time.index())?;
    let tr = real_trace(&rho);
    if tr < IMPOSSIBLE {
        return Err(PerspectiveError::ConditionImpossible { probability: tr });
    }
    let full = DensityMatrix::from_unnormalized(protocol.layout().clone(), rho)?;
    Ok(full.partial_trace(subsystems)?)
}

/// Born probability of `label` under the description of the spec's target.
pub fn predict(protocol: &Protocol, p: &Perspective, spec: &MeasurementSpec, label: &str) -> Result<f64> {
    let names = spec.target().names();
    let rho = assign(protocol, p, &names)?;
    let vector = &spec.outcome(label)?.vector;
    Ok(rho.probability_of(vector)?)
}

/// `P(event | literals of p)` over the whole round, computed under `p`'s
/// rule. `None` when the conditioning has probability zero.
pub fn conditional(protocol: &Protocol, p: &Perspective, event: &[Record]) -> Result<Option<f64>> {
    p.validate()?;
    let given = p.literals();
    let all = Step::ALL.len();
    let pc = real_trace(&evolve(protocol, p.rule, &given, all)?);
    if pc < IMPOSSIBLE {
        return Ok(None);
    }
    let joint = given.iter().chain(event).copied().collect::<Vec<_>>();
    let pe = real_trace(&evolve(protocol, p.rule, &joint, all)?);
    Ok(Some((pe / pc).clamp(0.0, 1.0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// `½‖a − b‖₁`.
    pub trace_distance: f64,
    /// Uhlmann fidelity `(tr√(√a b √a))²`, computed as the squared nuclear
    /// norm of `√a √b`.
    pub fidelity: f64,
}

pub fn compare(a: &DensityMatrix, b: &DensityMatrix) -> Result<Comparison> {
    if a.layout() != b.layout() {
        return Err(layout_mismatch(a.layout(), b.layout()).into());
    }
    let diff = a.matrix() - b.matrix();
    let trace_distance = 0.5 * hermitian_eigenvalues(&diff).iter().map(|x| x.abs()).sum::<f64>();
    let product = psd_sqrt(a.matrix()) * psd_sqrt(b.matrix());
    let root_sum: f64 = product.svd(false, false).singular_values.iter().sum();
    Ok(Comparison {
        trace_distance: trace_distance.clamp(0.0, 1.0),
        fidelity: (root_sum * root_sum).clamp(0.0, 1.0),
    })
}

/// Eigenvalues below this are rounding noise; their square roots would not be.
const EIGEN_FLOOR: f64 = 1e-13;

fn psd_sqrt(m: &DMatrix<C64>) -> DMatrix<C64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|x| {
        let x = if x < EIGEN_FLOOR { 0.0 } else { x };
        C64::new(x.sqrt(), 0.0)
    }));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Overlap `⟨v|ρ|v⟩` of a description with a pure state on its layout.
pub fn overlap(rho: &DensityMatrix, v: &StateVector) -> Result<f64> {
    Ok(rho.probability_of(v)?)
}
