//! Dense complex linear algebra over small composite Hilbert spaces.
//!
//! Every value carries a [`SpaceLayout`] naming its tensor factors, so
//! operations that act on a subset of subsystems (partial trace, dephasing,
//! local projectors) are addressed by name rather than by index arithmetic.
//! Everything is dense; the protocol register is 36-dimensional.

mod density;
mod layout;
mod operator;
mod state;

pub use density::DensityMatrix;
pub(crate) use density::dephase_matrix;
pub use layout::{SpaceLayout, Split, Subsystem};
pub use operator::{Operator, OperatorKind};
pub use state::StateVector;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

/// Default comparison tolerance for normalization, unitarity, Hermiticity and
/// positivity checks.
pub const TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QError {
    #[error("layout has no subsystems")]
    EmptyLayout,
    #[error("subsystem `{0}` has no basis states")]
    EmptySubsystem(String),
    #[error("duplicate basis label `{label}` in subsystem `{subsystem}`")]
    DuplicateLabel { subsystem: String, label: String },
    #[error("subsystem name `{0}` appears in both layouts")]
    NameCollision(String),
    #[error("unknown subsystem `{0}`")]
    UnknownSubsystem(String),
    #[error("unknown label `{label}` for subsystem `{subsystem}`")]
    UnknownLabel { subsystem: String, label: String },
    #[error("expected {expected} basis labels, got {got}")]
    LabelCount { expected: usize, got: usize },
    #[error("subsystem `{subsystem}` has dimension {expected}, not {got}")]
    DimMismatch {
        subsystem: String,
        expected: usize,
        got: usize,
    },
    #[error("length {got} does not match layout dimension {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("layouts differ: {left} vs {right}")]
    LayoutMismatch { left: String, right: String },
    #[error("vector is not normalized (squared norm {0})")]
    NotNormalized(f64),
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("operator flagged unitary is not unitary (deviation {0:e})")]
    NotUnitary(f64),
    #[error("operator flagged projector is not a projector (deviation {0:e})")]
    NotProjector(f64),
    #[error("operator is not unitary; use a projection instead")]
    RequiresUnitary,
    #[error("matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("density matrix trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("density matrix has negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("basis is not orthonormal (Gram deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("basis spans {got} of {dim} dimensions")]
    IncompleteBasis { dim: usize, got: usize },
    #[error("mixture weights must be non-negative and sum to 1")]
    BadWeights,
    #[error("partial trace needs at least one subsystem to keep")]
    EmptyKeep,
}

pub type Result<T> = std::result::Result<T, QError>;

/// Kronecker product of two values of the same kind, concatenating layouts.
pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Result<Self>;
}

pub fn tensor<T: Tensor>(a: &T, b: &T) -> Result<T> {
    a.tensor(b)
}

pub fn inner(a: &StateVector, b: &StateVector) -> Result<C64> {
    a.inner(b)
}

pub fn partial_trace(rho: &DensityMatrix, keep: &[&str]) -> Result<DensityMatrix> {
    rho.partial_trace(keep)
}

pub fn dephase(rho: &DensityMatrix, basis: &[StateVector]) -> Result<DensityMatrix> {
    rho.dephase(basis)
}

pub(crate) fn layout_mismatch(a: &SpaceLayout, b: &SpaceLayout) -> QError {
    QError::LayoutMismatch {
        left: a.names().join("⊗"),
        right: b.names().join("⊗"),
    }
}

/// Largest entry of `|G − I|` for the Gram matrix of `vectors`.
pub fn gram_deviation(vectors: &[DVector<C64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate() {
            let g = a.dotc(b);
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g - C64::new(target, 0.0)).norm());
        }
    }
    worst
}

/// Extends an orthonormal list to a basis of `C^dim` by Gram–Schmidt over the
/// canonical basis vectors `e_0, e_1, …` in index order. Candidates whose
/// residual norm falls below 1e-6 are skipped. The returned list starts with
/// the input vectors unchanged.
pub fn complete_orthonormal(vectors: &[DVector<C64>], dim: usize) -> Result<Vec<DVector<C64>>> {
    for v in vectors {
        if v.len() != dim {
            return Err(QError::LengthMismatch {
                expected: dim,
                got: v.len(),
            });
        }
    }
    let dev = gram_deviation(vectors);
    if dev > TOL {
        return Err(QError::NotOrthonormal(dev));
    }
    let mut basis = vectors.to_vec();
    for k in 0..dim {
        if basis.len() == dim {
            break;
        }
        let mut cand = DVector::<C64>::zeros(dim);
        cand[k] = C64::new(1.0, 0.0);
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for b in &basis {
                let c = b.dotc(&cand);
                cand -= b * c;
            }
        }
        let n = cand.norm();
        if n > 1e-6 {
            basis.push(cand / C64::new(n, 0.0));
        }
    }
    Ok(basis)
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let mut ev = h.symmetric_eigenvalues().iter().copied().collect::<Vec<_>>();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}
