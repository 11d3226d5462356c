use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{layout_mismatch, max_abs, QError, Result, SpaceLayout, StateVector, Tensor, C64, TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    General,
    Unitary,
    Projector,
}

/// Square matrix over a layout, optionally flagged unitary or projector. The
/// flag is verified at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Operator {
    layout: SpaceLayout,
    matrix: DMatrix<C64>,
    kind: OperatorKind,
}

impl Operator {
    pub fn new(layout: SpaceLayout, matrix: DMatrix<C64>, kind: OperatorKind) -> Result<Self> {
        let dim = layout.total_dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(QError::LengthMismatch {
                expected: dim,
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        let op = Self {
            layout,
            matrix,
            kind,
        };
        match kind {
            OperatorKind::General => {}
            OperatorKind::Unitary => {
                let dev = op.unitarity_deviation();
                if dev > TOL {
                    return Err(QError::NotUnitary(dev));
                }
            }
            OperatorKind::Projector => {
                let dev = op.projector_deviation();
                if dev > TOL {
                    return Err(QError::NotProjector(dev));
                }
            }
        }
        Ok(op)
    }

    pub fn identity(layout: SpaceLayout) -> Self {
        let dim = layout.total_dim();
        Self {
            layout,
            matrix: DMatrix::identity(dim, dim),
            kind: OperatorKind::Unitary,
        }
    }

    /// `|v⟩⟨v|` on the vector's layout.
    pub fn projector(v: &StateVector) -> Self {
        let a = v.amplitudes();
        Self {
            layout: v.layout().clone(),
            matrix: a * a.adjoint(),
            kind: OperatorKind::Projector,
        }
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn is_unitary_flagged(&self) -> bool {
        self.kind == OperatorKind::Unitary
    }

    /// max |U†U − I|.
    pub fn unitarity_deviation(&self) -> f64 {
        let n = self.matrix.nrows();
        max_abs(&(self.matrix.adjoint() * &self.matrix - DMatrix::<C64>::identity(n, n)))
    }

    /// max(|P² − P|, |P† − P|).
    pub fn projector_deviation(&self) -> f64 {
        let sq = &self.matrix * &self.matrix - &self.matrix;
        let herm = self.matrix.adjoint() - &self.matrix;
        max_abs(&sq).max(max_abs(&herm))
    }

    pub fn dagger(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.adjoint(),
            kind: self.kind,
        }
    }

    /// `self · other` on a shared layout.
    pub fn compose(&self, other: &Operator) -> Result<Self> {
        if self.layout != other.layout {
            return Err(layout_mismatch(&self.layout, &other.layout));
        }
        let kind = if self.kind == OperatorKind::Unitary && other.kind == OperatorKind::Unitary {
            OperatorKind::Unitary
        } else {
            OperatorKind::General
        };
        Ok(Self {
            layout: self.layout.clone(),
            matrix: &self.matrix * &other.matrix,
            kind,
        })
    }

    /// `self ⊗ I` lifted onto `full`, which must contain every subsystem of
    /// this operator's layout (in any order).
    pub fn embed(&self, full: &SpaceLayout) -> Result<Self> {
        if &self.layout == full {
            return Ok(self.clone());
        }
        let split = full.split(&self.layout)?;
        let dim = full.total_dim();
        let mut m = DMatrix::<C64>::zeros(dim, dim);
        for i in 0..dim {
            let (ti, ri) = (split.target_of(i), split.rest_of(i));
            for tj in 0..split.target_dim() {
                m[(i, split.full(tj, ri))] = self.matrix[(ti, tj)];
            }
        }
        Ok(Self {
            layout: full.clone(),
            matrix: m,
            kind: self.kind,
        })
    }

    /// `(self ⊗ I) v` where `v` lives on `layout`.
    pub(crate) fn act_on_vector(&self, layout: &SpaceLayout, v: &DVector<C64>) -> Result<DVector<C64>> {
        if &self.layout == layout {
            return Ok(&self.matrix * v);
        }
        let split = layout.split(&self.layout)?;
        let mut out = DVector::<C64>::zeros(v.len());
        let mut block = DVector::<C64>::zeros(split.target_dim());
        for r in 0..split.rest_dim() {
            for t in 0..split.target_dim() {
                block[t] = v[split.full(t, r)];
            }
            let img = &self.matrix * &block;
            for t in 0..split.target_dim() {
                out[split.full(t, r)] = img[t];
            }
        }
        Ok(out)
    }
}

impl Tensor for Operator {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        let kind = if self.kind == other.kind {
            self.kind
        } else {
            OperatorKind::General
        };
        Ok(Self {
            layout,
            matrix: self.matrix.kronecker(&other.matrix),
            kind,
        })
    }
}
