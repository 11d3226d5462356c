use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{layout_mismatch, DensityMatrix, Operator, QError, Result, SpaceLayout, Tensor, C64, TOL};

/// Normalized ket over a composite layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    layout: SpaceLayout,
    amplitudes: DVector<C64>,
}

impl StateVector {
    /// Checks length and that the squared norm is 1 within [`TOL`].
    pub fn new(layout: SpaceLayout, amplitudes: Vec<C64>) -> Result<Self> {
        let v = Self::from_parts(layout, DVector::from_vec(amplitudes))?;
        let n2 = v.amplitudes.norm_squared();
        if (n2 - 1.0).abs() > TOL {
            return Err(QError::NotNormalized(n2));
        }
        Ok(v)
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(layout: SpaceLayout, amplitudes: Vec<C64>) -> Result<Self> {
        let mut v = Self::from_parts(layout, DVector::from_vec(amplitudes))?;
        let n = v.amplitudes.norm();
        if n < 1e-300 {
            return Err(QError::ZeroVector);
        }
        v.amplitudes /= C64::new(n, 0.0);
        Ok(v)
    }

    fn from_parts(layout: SpaceLayout, amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.len() != layout.total_dim() {
            return Err(QError::LengthMismatch {
                expected: layout.total_dim(),
                got: amplitudes.len(),
            });
        }
        Ok(Self { layout, amplitudes })
    }

    pub(crate) fn from_vector_unchecked(layout: SpaceLayout, amplitudes: DVector<C64>) -> Self {
        debug_assert_eq!(layout.total_dim(), amplitudes.len());
        Self { layout, amplitudes }
    }

    pub fn basis(layout: SpaceLayout, index: usize) -> Result<Self> {
        let dim = layout.total_dim();
        if index >= dim {
            return Err(QError::LengthMismatch {
                expected: dim,
                got: index + 1,
            });
        }
        let mut amps = DVector::zeros(dim);
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self {
            layout,
            amplitudes: amps,
        })
    }

    /// Product basis ket named by one label per subsystem.
    pub fn from_labels(layout: SpaceLayout, labels: &[&str]) -> Result<Self> {
        let idx = layout.index_of_labels(labels)?;
        Self::basis(layout, idx)
    }

    /// Normalized `Σ c_k |v_k⟩`; all terms must share a layout.
    pub fn superpose(terms: &[(C64, &StateVector)]) -> Result<Self> {
        let first = terms.first().ok_or(QError::ZeroVector)?.1;
        let mut acc = DVector::<C64>::zeros(first.dim());
        for (c, v) in terms {
            if v.layout != first.layout {
                return Err(layout_mismatch(&first.layout, &v.layout));
            }
            acc += &v.amplitudes * *c;
        }
        Self::normalized(first.layout.clone(), acc.iter().copied().collect())
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.layout != other.layout {
            return Err(layout_mismatch(&self.layout, &other.layout));
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    /// Applies a unitary acting on the whole layout or on a named sub-layout.
    pub fn apply(&self, op: &Operator) -> Result<StateVector> {
        if !op.is_unitary_flagged() {
            return Err(QError::RequiresUnitary);
        }
        let amps = op.act_on_vector(&self.layout, &self.amplitudes)?;
        Ok(Self::from_vector_unchecked(self.layout.clone(), amps))
    }

    /// `|self⟩⟨self|`.
    pub fn to_density(&self) -> DensityMatrix {
        let m = &self.amplitudes * self.amplitudes.adjoint();
        DensityMatrix::from_matrix_unchecked(self.layout.clone(), m)
    }

    /// Component along a vector on a sub-layout: returns `(⟨b| ⊗ I)|self⟩` as
    /// amplitudes over the remaining subsystems (or a single amplitude when
    /// `b` covers the whole layout).
    pub fn overlap_local(&self, b: &StateVector) -> Result<DVector<C64>> {
        let split = self.layout.split(&b.layout)?;
        let mut out = DVector::<C64>::zeros(split.rest_dim());
        for r in 0..split.rest_dim() {
            let mut acc = C64::new(0.0, 0.0);
            for t in 0..split.target_dim() {
                acc += b.amplitudes[t].conj() * self.amplitudes[split.full(t, r)];
            }
            out[r] = acc;
        }
        Ok(out)
    }
}

impl Tensor for StateVector {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        Ok(Self {
            layout,
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
        })
    }
}
