//! Measurement specifications and their two realizations: projective collapse
//! with a classical record, and a unitary dilation that writes the outcome
//! into an agent's memory register instead.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qcore::{
    complete_orthonormal, gram_deviation, DensityMatrix, Operator, OperatorKind, QError, SpaceLayout, Split, StateVector,
    C64, TOL,
};

/// Samples below this probability are treated as impossible.
pub const IMPOSSIBLE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasurementError {
    #[error(transparent)]
    Linear(#[from] QError),
    #[error("outcome label `{0}` is used twice")]
    DuplicateLabel(String),
    #[error("no outcome labeled `{0}`")]
    UnknownOutcome(String),
    #[error("outcome vector `{0}` does not live on the measurement target")]
    TargetMismatch(String),
    #[error("measurement basis spans {got} of {dim} dimensions")]
    IncompleteBasis { dim: usize, got: usize },
    #[error("sampled outcome `{label}` has probability {probability:e}")]
    ImpossibleOutcome { label: String, probability: f64 },
    #[error("memory `{memory}` has dimension {dim}, needs at least {needed}")]
    MemoryTooSmall { memory: String, dim: usize, needed: usize },
    #[error("memory `{0}` is part of the measured target")]
    MemoryInTarget(String),
    #[error("no pointer slot for outcome `{0}`")]
    MissingPointer(String),
    #[error("pointer slot {slot} for outcome `{label}` is out of range 1..{dim}")]
    PointerOutOfRange { label: String, slot: usize, dim: usize },
    #[error("pointer slot {0} is assigned to more than one outcome")]
    PointerNotInjective(usize),
    #[error("preparation for `{label}` touches `{subsystem}`, which the dilation already uses")]
    PreparationOverlap { label: String, subsystem: String },
}

pub type Result<T> = std::result::Result<T, MeasurementError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompletionPolicy {
    Error,
    AutoComplete,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub label: String,
    pub vector: StateVector,
}

/// Labeled orthonormal basis on a (possibly partial) set of subsystems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    target: SpaceLayout,
    outcomes: Vec<Outcome>,
    completion_policy: CompletionPolicy,
}

impl MeasurementSpec {
    /// Checks the listed vectors are orthonormal on `target`. An incomplete
    /// list is an error under [`CompletionPolicy::Error`] and is completed
    /// with `other_k` vectors under [`CompletionPolicy::AutoComplete`].
    pub fn new(target: SpaceLayout, outcomes: Vec<(String, StateVector)>, policy: CompletionPolicy) -> Result<Self> {
        let mut list = Vec::with_capacity(outcomes.len());
        for (label, vector) in outcomes {
            if vector.layout() != &target {
                return Err(MeasurementError::TargetMismatch(label));
            }
            if list.iter().any(|o: &Outcome| o.label == label) {
                return Err(MeasurementError::DuplicateLabel(label));
            }
            list.push(Outcome { label, vector });
        }
        let dev = gram_deviation(&list.iter().map(|o| o.vector.amplitudes().clone()).collect::<Vec<_>>());
        if dev > TOL {
            return Err(QError::NotOrthonormal(dev).into());
        }
        let spec = Self {
            target,
            outcomes: list,
            completion_policy: policy,
        };
        match policy {
            _ if spec.is_complete() => Ok(spec),
            CompletionPolicy::Error => Err(MeasurementError::IncompleteBasis {
                dim: spec.target.total_dim(),
                got: spec.outcomes.len(),
            }),
            CompletionPolicy::AutoComplete => complete_basis(&spec),
        }
    }

    /// The computational basis of `target`, labeled by the layout's basis
    /// labels (joined with `,` for multi-subsystem targets).
    pub fn computational(target: SpaceLayout) -> Self {
        let outcomes = (0..target.total_dim())
            .map(|i| Outcome {
                label: target.basis_label(i),
                vector: StateVector::basis(target.clone(), i).expect("index in range"),
            })
            .collect();
        Self {
            target,
            outcomes,
            completion_policy: CompletionPolicy::Error,
        }
    }

    pub fn target(&self) -> &SpaceLayout {
        &self.target
    }

    pub fn outcomes(&self) -> &[Outcome] {
        &self.outcomes
    }

    pub fn completion_policy(&self) -> CompletionPolicy {
        self.completion_policy
    }

    pub fn labels(&self) -> Vec<&str> {
        self.outcomes.iter().map(|o| o.label.as_str()).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.outcomes.len() == self.target.total_dim()
    }

    pub fn outcome(&self, label: &str) -> Result<&Outcome> {
        self.outcomes
            .iter()
            .find(|o| o.label == label)
            .ok_or_else(|| MeasurementError::UnknownOutcome(label.to_string()))
    }

    pub fn projector(&self, label: &str) -> Result<Operator> {
        Ok(Operator::projector(&self.outcome(label)?.vector))
    }

    fn require_complete(&self) -> Result<()> {
        if self.is_complete() {
            Ok(())
        } else {
            Err(MeasurementError::IncompleteBasis {
                dim: self.target.total_dim(),
                got: self.outcomes.len(),
            })
        }
    }
}

/// Appends `other_0`, `other_1`, … spanning the orthogonal complement of the
/// listed outcomes. Gram–Schmidt runs over the canonical basis in index order,
/// so the result is deterministic.
pub fn complete_basis(spec: &MeasurementSpec) -> Result<MeasurementSpec> {
    let dim = spec.target.total_dim();
    let given = spec
        .outcomes
        .iter()
        .map(|o| o.vector.amplitudes().clone())
        .collect::<Vec<_>>();
    let full = complete_orthonormal(&given, dim)?;
    let mut outcomes = spec.outcomes.clone();
    for (k, v) in full.into_iter().skip(given.len()).enumerate() {
        let mut label = format!("other_{k}");
        while outcomes.iter().any(|o| o.label == label) {
            label.push('_');
        }
        outcomes.push(Outcome {
            label,
            vector: StateVector::new(spec.target.clone(), v.iter().copied().collect())?,
        });
    }
    Ok(MeasurementSpec {
        target: spec.target.clone(),
        outcomes,
        completion_policy: spec.completion_policy,
    })
}

/// Born-rule source: anything that can report `tr(ρ (|b⟩⟨b| ⊗ I))`.
pub trait BornSource {
    fn layout(&self) -> &SpaceLayout;
    fn outcome_probability(&self, b: &StateVector) -> Result<f64>;
}

impl BornSource for StateVector {
    fn layout(&self) -> &SpaceLayout {
        StateVector::layout(self)
    }

    fn outcome_probability(&self, b: &StateVector) -> Result<f64> {
        Ok(self.overlap_local(b)?.norm_squared())
    }
}

impl BornSource for DensityMatrix {
    fn layout(&self) -> &SpaceLayout {
        DensityMatrix::layout(self)
    }

    fn outcome_probability(&self, b: &StateVector) -> Result<f64> {
        Ok(self.probability_of(b)?)
    }
}

/// Outcome probabilities in the spec's outcome order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeDistribution {
    entries: Vec<(String, f64)>,
}

impl OutcomeDistribution {
    pub fn entries(&self) -> &[(String, f64)] {
        &self.entries
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.entries.iter().find(|(l, _)| l == label).map(|(_, p)| *p)
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// Largest absolute difference over a shared label set.
    pub fn max_difference(&self, other: &OutcomeDistribution) -> f64 {
        self.entries
            .iter()
            .map(|(l, p)| (p - other.get(l).unwrap_or(0.0)).abs())
            .chain(
                other
                    .entries
                    .iter()
                    .filter(|(l, _)| self.get(l).is_none())
                    .map(|(_, p)| p.abs()),
            )
            .fold(0.0, f64::max)
    }
}

pub fn outcome_distribution<S: BornSource + ?Sized>(source: &S, spec: &MeasurementSpec) -> Result<OutcomeDistribution> {
    spec.require_complete()?;
    let entries = spec
        .outcomes
        .iter()
        .map(|o| Ok((o.label.clone(), source.outcome_probability(&o.vector)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(OutcomeDistribution { entries })
}

/// Samples an outcome with probability `‖(Π_k ⊗ I)ψ‖²` and returns the
/// renormalized post-measurement state.
pub fn measure_collapse<R: Rng + ?Sized>(
    state: &StateVector,
    spec: &MeasurementSpec,
    rng: &mut R,
) -> Result<(String, StateVector)> {
    let split = state.layout().split(spec.target())?;
    measure_collapse_split(state, spec, &split, rng)
}

/// [`measure_collapse`] with the index split of `spec`'s target precomputed.
pub(crate) fn measure_collapse_split<R: Rng + ?Sized>(
    state: &StateVector,
    spec: &MeasurementSpec,
    split: &Split,
    rng: &mut R,
) -> Result<(String, StateVector)> {
    spec.require_complete()?;
    let amps = state.amplitudes();
    let mut branches = Vec::with_capacity(spec.outcomes.len());
    for o in &spec.outcomes {
        let b = o.vector.amplitudes();
        let mut rest = DVector::<C64>::zeros(split.rest_dim());
        for r in 0..split.rest_dim() {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..split.target_dim() {
                acc += b[t].conj() * amps[split.full(t, r)];
            }
            rest[r] = acc;
        }
        let p = rest.norm_squared();
        branches.push((p, rest));
    }
    let total: f64 = branches.iter().map(|(p, _)| p).sum();
    if (total - 1.0).abs() > TOL {
        return Err(QError::NotNormalized(total).into());
    }
    let u: f64 = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut chosen = None;
    for (k, (p, _)) in branches.iter().enumerate() {
        acc += p;
        if u < acc {
            chosen = Some(k);
            break;
        }
    }
    // u landed past the last cumulative sum through rounding
    let k = chosen.unwrap_or_else(|| branches.iter().rposition(|(p, _)| *p > 0.0).unwrap_or(0));
    let (p, rest) = &branches[k];
    let outcome = &spec.outcomes[k];
    if *p < IMPOSSIBLE {
        return Err(MeasurementError::ImpossibleOutcome {
            label: outcome.label.clone(),
            probability: *p,
        });
    }
    let b = outcome.vector.amplitudes();
    let scale = C64::new(1.0 / p.sqrt(), 0.0);
    let mut post = DVector::<C64>::zeros(amps.len());
    for r in 0..split.rest_dim() {
        for t in 0..split.target_dim() {
            post[split.full(t, r)] = b[t] * rest[r] * scale;
        }
    }
    let n = post.norm();
    post /= C64::new(n, 0.0);
    Ok((outcome.label.clone(), StateVector::from_vector_unchecked(state.layout().clone(), post)))
}

/// Records a measurement in a memory register instead of collapsing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DilationSpec {
    pub measurement: MeasurementSpec,
    pub memory: String,
    /// Outcome label → memory basis index. Index 0 is `|init⟩`.
    pub pointer_map: BTreeMap<String, usize>,
    /// Outcome label → unitary applied to other subsystems in that branch.
    pub conditional_preparations: BTreeMap<String, Operator>,
}

/// Builds `Σ_k |b_k⟩⟨b_k| ⊗ M_k ⊗ P_k` on `layout`, where `M_k` swaps the
/// memory's `|init⟩` with its pointer slot and `P_k` is the outcome's
/// conditional preparation (identity if none).
pub fn build_dilation(spec: &DilationSpec, layout: &SpaceLayout) -> Result<Operator> {
    let m = &spec.measurement;
    m.require_complete()?;
    if m.target().contains(&spec.memory) {
        return Err(MeasurementError::MemoryInTarget(spec.memory.clone()));
    }
    let memory = layout.subsystem(&spec.memory)?.clone();
    let needed = m.outcomes.len() + 1;
    if memory.dim() < needed {
        return Err(MeasurementError::MemoryTooSmall {
            memory: spec.memory.clone(),
            dim: memory.dim(),
            needed,
        });
    }
    let mut used = Vec::new();
    for o in &m.outcomes {
        let slot = *spec
            .pointer_map
            .get(&o.label)
            .ok_or_else(|| MeasurementError::MissingPointer(o.label.clone()))?;
        if slot == 0 || slot >= memory.dim() {
            return Err(MeasurementError::PointerOutOfRange {
                label: o.label.clone(),
                slot,
                dim: memory.dim(),
            });
        }
        if used.contains(&slot) {
            return Err(MeasurementError::PointerNotInjective(slot));
        }
        used.push(slot);
    }
    for label in spec.pointer_map.keys() {
        m.outcome(label)?;
    }
    for (label, prep) in &spec.conditional_preparations {
        m.outcome(label)?;
        for name in prep.layout().names() {
            if m.target().contains(name) || name == spec.memory {
                return Err(MeasurementError::PreparationOverlap {
                    label: label.clone(),
                    subsystem: name.to_string(),
                });
            }
        }
    }

    let memory_layout = SpaceLayout::single(memory.clone());
    let dim = layout.total_dim();
    let mut total = DMatrix::<C64>::zeros(dim, dim);
    for o in &m.outcomes {
        let slot = spec.pointer_map[&o.label];
        let mut swap = DMatrix::<C64>::identity(memory.dim(), memory.dim());
        swap.swap_columns(0, slot);
        let mover = Operator::new(memory_layout.clone(), swap, OperatorKind::Unitary)?.embed(layout)?;
        let proj = Operator::projector(&o.vector).embed(layout)?;
        let mut block = proj.matrix() * mover.matrix();
        if let Some(prep) = spec.conditional_preparations.get(&o.label) {
            block = prep.embed(layout)?.matrix() * block;
        }
        total += block;
    }
    Ok(Operator::new(layout.clone(), total, OperatorKind::Unitary)?)
}

/// Computational-basis measurement of a memory register, labeled by the
/// register's basis labels.
pub fn memory_basis(layout: &SpaceLayout, memory: &str) -> Result<MeasurementSpec> {
    let sub = layout.subsystem(memory)?.clone();
    Ok(MeasurementSpec::computational(SpaceLayout::single(sub)))
}

pub fn readout_memory<R: Rng + ?Sized>(state: &StateVector, memory: &str, rng: &mut R) -> Result<(String, StateVector)> {
    let spec = memory_basis(state.layout(), memory)?;
    measure_collapse(state, &spec, rng)
}
