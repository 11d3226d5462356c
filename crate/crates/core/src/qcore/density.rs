use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{
    gram_deviation, hermitian_eigenvalues, layout_mismatch, max_abs, Operator, QError, Result,
    SpaceLayout, StateVector, Tensor, C64, TOL,
};

/// Hermitian, unit-trace, positive semidefinite operator over a layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    layout: SpaceLayout,
    matrix: DMatrix<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity, all within [`TOL`].
    pub fn new(layout: SpaceLayout, matrix: DMatrix<C64>) -> Result<Self> {
        let dim = layout.total_dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(QError::LengthMismatch {
                expected: dim,
                got: matrix.nrows().max(matrix.ncols()),
            });
        }
        let rho = Self { layout, matrix };
        rho.validate(TOL)?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(layout: SpaceLayout, matrix: DMatrix<C64>) -> Self {
        debug_assert_eq!(layout.total_dim(), matrix.nrows());
        Self { layout, matrix }
    }

    /// Normalizes a positive (possibly sub-normalized) matrix by its trace.
    /// Used for conditioned states after projective slicing.
    pub fn from_unnormalized(layout: SpaceLayout, matrix: DMatrix<C64>) -> Result<Self> {
        let tr = matrix.trace().re;
        if tr <= 0.0 {
            return Err(QError::ZeroVector);
        }
        Self::new(layout, matrix / C64::new(tr, 0.0))
    }

    pub fn from_pure(v: &StateVector) -> Self {
        v.to_density()
    }

    /// `Σ p_k ρ_k` with non-negative weights summing to 1.
    pub fn mixture(terms: &[(f64, &DensityMatrix)]) -> Result<Self> {
        let first = terms.first().ok_or(QError::BadWeights)?.1;
        let total: f64 = terms.iter().map(|(p, _)| p).sum();
        if terms.iter().any(|(p, _)| *p < 0.0) || (total - 1.0).abs() > TOL {
            return Err(QError::BadWeights);
        }
        let dim = first.layout.total_dim();
        let mut m = DMatrix::<C64>::zeros(dim, dim);
        for (p, rho) in terms {
            if rho.layout != first.layout {
                return Err(layout_mismatch(&first.layout, &rho.layout));
            }
            m += &rho.matrix * C64::new(*p, 0.0);
        }
        Self::new(first.layout.clone(), m)
    }

    pub fn validate(&self, tol: f64) -> Result<()> {
        let herm = max_abs(&(self.matrix.adjoint() - &self.matrix));
        if herm > tol {
            return Err(QError::NotHermitian(herm));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > tol {
            return Err(QError::BadTrace(tr));
        }
        let min = self.min_eigenvalue();
        if min < -tol {
            return Err(QError::NotPositive(min));
        }
        Ok(())
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `tr(ρ²)`.
    pub fn purity(&self) -> f64 {
        // tr(ρ²) = Σ_ij |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// `Re tr(ρ A)` for an operator on this layout or a sub-layout of it.
    pub fn expectation(&self, op: &Operator) -> Result<f64> {
        let a = op.embed(&self.layout)?;
        Ok((&self.matrix * a.matrix()).trace().re)
    }

    /// `tr(ρ (|b⟩⟨b| ⊗ I))` for a vector on a sub-layout.
    pub fn probability_of(&self, b: &StateVector) -> Result<f64> {
        let split = self.layout.split(b.layout())?;
        let amps = b.amplitudes();
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..split.rest_dim() {
            for t in 0..split.target_dim() {
                let bt = amps[t].conj();
                if bt.norm_sqr() == 0.0 {
                    continue;
                }
                let i = split.full(t, r);
                for u in 0..split.target_dim() {
                    acc += bt * self.matrix[(i, split.full(u, r))] * amps[u];
                }
            }
        }
        Ok(acc.re)
    }

    /// Reduced state on `keep`; the result lists the kept subsystems in this
    /// layout's order.
    pub fn partial_trace(&self, keep: &[&str]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(QError::EmptyKeep);
        }
        let kept = self.layout.select(keep)?;
        if kept == self.layout {
            return Ok(self.clone());
        }
        let split = self.layout.split(&kept)?;
        let d = split.target_dim();
        let mut m = DMatrix::<C64>::zeros(d, d);
        for a in 0..d {
            for b in 0..d {
                let mut acc = C64::new(0.0, 0.0);
                for r in 0..split.rest_dim() {
                    acc += self.matrix[(split.full(a, r), split.full(b, r))];
                }
                m[(a, b)] = acc;
            }
        }
        Ok(Self {
            layout: kept,
            matrix: m,
        })
    }

    /// `Σ_k (Π_k ⊗ I) ρ (Π_k ⊗ I)` for the projectors onto an orthonormal basis
    /// of the sub-layout the basis vectors live on.
    pub fn dephase(&self, basis: &[StateVector]) -> Result<DensityMatrix> {
        let target = basis
            .first()
            .ok_or(QError::IncompleteBasis { dim: 0, got: 0 })?
            .layout()
            .clone();
        let mut vecs: Vec<DVector<C64>> = Vec::with_capacity(basis.len());
        for b in basis {
            if b.layout() != &target {
                return Err(layout_mismatch(&target, b.layout()));
            }
            vecs.push(b.amplitudes().clone());
        }
        let dev = gram_deviation(&vecs);
        if dev > TOL {
            return Err(QError::NotOrthonormal(dev));
        }
        if vecs.len() != target.total_dim() {
            return Err(QError::IncompleteBasis {
                dim: target.total_dim(),
                got: vecs.len(),
            });
        }
        let m = dephase_matrix(&self.layout, &self.matrix, &target, &vecs)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: m,
        })
    }
}

/// Raw dephasing kernel shared with the unnormalized trajectory engine.
pub(crate) fn dephase_matrix(
    layout: &SpaceLayout,
    rho: &DMatrix<C64>,
    target: &SpaceLayout,
    basis: &[DVector<C64>],
) -> Result<DMatrix<C64>> {
    let split = layout.split(target)?;
    let (td, rd) = (split.target_dim(), split.rest_dim());
    // change to the measurement basis on the target factor, keep only blocks
    // diagonal in it, change back
    let mut change = DMatrix::<C64>::zeros(td, td);
    for (k, b) in basis.iter().enumerate() {
        for t in 0..td {
            change[(k, t)] = b[t].conj();
        }
    }
    let dim = layout.total_dim();
    let mut out = DMatrix::<C64>::zeros(dim, dim);
    for k in 0..basis.len() {
        for r in 0..rd {
            for s in 0..rd {
                // c = ⟨b_k, r| ρ |b_k, s⟩
                let mut c = C64::new(0.0, 0.0);
                for t in 0..td {
                    let bt = change[(k, t)];
                    if bt.norm_sqr() == 0.0 {
                        continue;
                    }
                    for u in 0..td {
                        c += bt * rho[(split.full(t, r), split.full(u, s))] * change[(k, u)].conj();
                    }
                }
                if c.norm_sqr() == 0.0 {
                    continue;
                }
                for t in 0..td {
                    let bt = basis[k][t];
                    if bt.norm_sqr() == 0.0 {
                        continue;
                    }
                    for u in 0..td {
                        out[(split.full(t, r), split.full(u, s))] += bt * c * basis[k][u].conj();
                    }
                }
            }
        }
    }
    Ok(out)
}

impl Tensor for DensityMatrix {
    fn tensor(&self, other: &Self) -> Result<Self> {
        let layout = self.layout.concat(&other.layout)?;
        Ok(Self {
            layout,
            matrix: self.matrix.kronecker(&other.matrix),
        })
    }
}
