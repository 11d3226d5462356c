//! Randomized invariants of the linear-algebra layer, run through proptest's
//! runner so the acceptance binary and the regular test suite share them.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wfaudit_core::measurement::{
    build_dilation, measure_collapse, outcome_distribution, CompletionPolicy, DilationSpec, MeasurementSpec,
};
use wfaudit_core::qcore::{complete_orthonormal, gram_deviation, DensityMatrix, SpaceLayout, StateVector, Subsystem, Tensor};

pub const TOL: f64 = 1e-10;

type Check = std::result::Result<(), TestCaseError>;

fn runner(cases: u32) -> TestRunner {
    TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    })
}

fn complex() -> impl Strategy<Value = C64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(re, im)| C64::new(re, im))
}

fn dims() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(2usize..=3, 1..=3)
}

fn layout(dims: &[usize]) -> SpaceLayout {
    SpaceLayout::new(
        dims.iter()
            .enumerate()
            .map(|(i, &d)| Subsystem::new(format!("A{i}"), d).unwrap())
            .collect(),
    )
    .unwrap()
}

fn amplitudes(n: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec(complex(), n).prop_filter("non-zero", |v| v.iter().map(|z| z.norm_sqr()).sum::<f64>() > 1e-3)
}

/// Unitary from the QR factorization of a random square matrix.
fn unitary(n: usize) -> impl Strategy<Value = DMatrix<C64>> {
    prop::collection::vec(complex(), n * n).prop_map(move |v| DMatrix::from_vec(n, n, v).qr().q())
}

fn basis_on(target: &SpaceLayout, q: &DMatrix<C64>) -> Vec<(String, StateVector)> {
    (0..q.ncols())
        .map(|k| {
            let col = q.column(k).iter().copied().collect();
            (format!("k{k}"), StateVector::new(target.clone(), col).unwrap())
        })
        .collect()
}

/// A layout, a random normalized state on it, and a random basis of its
/// first factor.
#[derive(Debug, Clone)]
struct Scenario {
    dims: Vec<usize>,
    psi: Vec<C64>,
    basis: DMatrix<C64>,
}

fn scenario() -> impl Strategy<Value = Scenario> {
    dims().prop_flat_map(|d| {
        let total = d.iter().product();
        let first = d[0];
        (Just(d), amplitudes(total), unitary(first)).prop_map(|(dims, psi, basis)| Scenario { dims, psi, basis })
    })
}

impl Scenario {
    fn layout(&self) -> SpaceLayout {
        layout(&self.dims)
    }

    fn state(&self) -> StateVector {
        StateVector::normalized(self.layout(), self.psi.clone()).unwrap()
    }

    fn spec(&self) -> MeasurementSpec {
        let target = self.layout().select(&["A0"]).unwrap();
        MeasurementSpec::new(target.clone(), basis_on(&target, &self.basis), CompletionPolicy::Error).unwrap()
    }

    /// The scenario's layout with a memory register big enough for the spec.
    fn with_memory(&self) -> (SpaceLayout, DilationSpec) {
        let spec = self.spec();
        let n = spec.outcomes().len();
        let memory = SpaceLayout::single(Subsystem::new("M", n + 1).unwrap());
        let full = self.layout().concat(&memory).unwrap();
        let pointer_map: BTreeMap<String, usize> =
            spec.labels().iter().enumerate().map(|(k, l)| (l.to_string(), k + 1)).collect();
        let dil = DilationSpec {
            measurement: spec,
            memory: "M".into(),
            pointer_map,
            conditional_preparations: BTreeMap::new(),
        };
        (full, dil)
    }
}

/// Mixture of up to three random pure states with random weights.
#[derive(Debug, Clone)]
struct Mixed {
    dims: Vec<usize>,
    states: Vec<Vec<C64>>,
    weights: Vec<f64>,
    keep: Vec<bool>,
    basis: DMatrix<C64>,
}

fn mixed() -> impl Strategy<Value = Mixed> {
    dims().prop_flat_map(|d| {
        let total: usize = d.iter().product();
        let first = d[0];
        let n = d.len();
        (1usize..=3).prop_flat_map(move |k| {
            (
                Just(d.clone()),
                prop::collection::vec(amplitudes(total), k),
                prop::collection::vec(0.01..1.0f64, k),
                prop::collection::vec(any::<bool>(), n),
                unitary(first),
            )
                .prop_map(|(dims, states, weights, keep, basis)| Mixed {
                    dims,
                    states,
                    weights,
                    keep,
                    basis,
                })
        })
    })
}

impl Mixed {
    fn rho(&self) -> DensityMatrix {
        let l = layout(&self.dims);
        let total: f64 = self.weights.iter().sum();
        let pure: Vec<DensityMatrix> = self
            .states
            .iter()
            .map(|s| StateVector::normalized(l.clone(), s.clone()).unwrap().to_density())
            .collect();
        let terms: Vec<(f64, &DensityMatrix)> = self.weights.iter().map(|w| w / total).zip(pure.iter()).collect();
        DensityMatrix::mixture(&terms).unwrap()
    }

    fn kept(&self) -> Vec<String> {
        let names: Vec<String> = (0..self.dims.len())
            .filter(|&i| self.keep[i])
            .map(|i| format!("A{i}"))
            .collect();
        if names.is_empty() {
            vec!["A0".into()]
        } else {
            names
        }
    }

    fn dephasing_basis(&self) -> Vec<StateVector> {
        let target = layout(&self.dims).select(&["A0"]).unwrap();
        basis_on(&target, &self.basis).into_iter().map(|(_, v)| v).collect()
    }
}

fn max_entry(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermiticity(m: &DMatrix<C64>) -> f64 {
    max_entry(&(m - m.adjoint()))
}

fn report(result: std::result::Result<(), proptest::test_runner::TestError<impl std::fmt::Debug>>) -> Result<(), String> {
    result.map_err(|e| e.to_string())
}

/// Dilations built from random bases are unitary, and so is `U†`.
pub fn unitarity(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&scenario(), |s| -> Check {
        let (full, dil) = s.with_memory();
        let u = build_dilation(&dil, &full).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let m = u.matrix();
        let n = m.nrows();
        let id = DMatrix::<C64>::identity(n, n);
        let left = (m.adjoint() * m - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let right = (m * m.adjoint() - &id).iter().map(|z| z.norm()).fold(0.0, f64::max);
        prop_assert!(left < TOL && right < TOL, "U†U dev {left:e}, UU† dev {right:e}");
        prop_assert!(u.unitarity_deviation() < TOL);
        Ok(())
    }))
}

/// States stay normalized through construction, dilation and collapse, and
/// Born probabilities sum to one.
pub fn normalization(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&(scenario(), any::<u64>()), |(s, seed)| -> Check {
        let psi = s.state();
        prop_assert!((psi.norm_squared() - 1.0).abs() < TOL);
        let spec = s.spec();
        let dist = outcome_distribution(&psi, &spec).unwrap();
        prop_assert!((dist.total() - 1.0).abs() < TOL, "Born total {}", dist.total());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (_, post) = measure_collapse(&psi, &spec, &mut rng).unwrap();
        prop_assert!((post.norm_squared() - 1.0).abs() < TOL);
        let (full, dil) = s.with_memory();
        let u = build_dilation(&dil, &full).unwrap();
        let init = StateVector::basis(SpaceLayout::single(Subsystem::new("M", spec.outcomes().len() + 1).unwrap()), 0).unwrap();
        let joined = psi.tensor(&init).unwrap();
        let evolved = joined.apply(&u).unwrap();
        prop_assert!((evolved.norm_squared() - 1.0).abs() < TOL);
        Ok(())
    }))
}

/// Mixtures, partial traces and dephased states are Hermitian with no
/// eigenvalue below `−TOL`; dephasing is idempotent and never raises purity.
pub fn positivity(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&mixed(), |m| -> Check {
        let rho = m.rho();
        let keep = m.kept();
        let keep: Vec<&str> = keep.iter().map(String::as_str).collect();
        let reduced = rho.partial_trace(&keep).unwrap();
        let dephased = rho.dephase(&m.dephasing_basis()).unwrap();
        for (name, x) in [("mixture", &rho), ("partial trace", &reduced), ("dephased", &dephased)] {
            prop_assert!(x.min_eigenvalue() > -TOL, "{name}: min eigenvalue {}", x.min_eigenvalue());
            prop_assert!(hermiticity(x.matrix()) < TOL, "{name}: not Hermitian");
        }
        prop_assert!(dephased.purity() <= rho.purity() + TOL);
        let twice = dephased.dephase(&m.dephasing_basis()).unwrap();
        prop_assert!(max_entry(&(twice.matrix() - dephased.matrix())) < TOL);
        let names: Vec<String> = (0..m.dims.len()).map(|i| format!("A{i}")).collect();
        let all: Vec<&str> = names.iter().map(String::as_str).collect();
        prop_assert!(max_entry(&(rho.partial_trace(&all).unwrap().matrix() - rho.matrix())) < TOL);
        Ok(())
    }))
}

/// Partial trace, dephasing and unitary conjugation keep unit trace.
pub fn trace_preservation(cases: u32) -> Result<(), String> {
    report(runner(cases).run(&(mixed(), unitary(2)), |(m, u)| -> Check {
        let rho = m.rho();
        let keep = m.kept();
        let keep: Vec<&str> = keep.iter().map(String::as_str).collect();
        let reduced = rho.partial_trace(&keep).unwrap();
        let dephased = rho.dephase(&m.dephasing_basis()).unwrap();
        let n = rho.dim();
        // Random unitary on the whole space: random 2×2 block padded by identity.
        let mut big = DMatrix::<C64>::identity(n, n);
        big.view_mut((0, 0), (2, 2)).copy_from(&u);
        let conj = &big * rho.matrix() * big.adjoint();
        for (name, tr) in [
            ("mixture", rho.trace()),
            ("partial trace", reduced.trace()),
            ("dephased", dephased.trace()),
            ("conjugated", conj.trace().re),
        ] {
            prop_assert!((tr - 1.0).abs() < TOL, "{name}: trace {tr}");
        }
        Ok(())
    }))
}

/// Completing a random orthonormal prefix yields an orthonormal basis that
/// starts with the prefix.
pub fn basis_completion(cases: u32) -> Result<(), String> {
    let strategy = (2usize..=8).prop_flat_map(|n| (unitary(n), 0..n));
    report(runner(cases).run(&strategy, |(q, k)| -> Check {
        let n = q.nrows();
        let prefix: Vec<DVector<C64>> = (0..k).map(|i| q.column(i).into_owned()).collect();
        let full = complete_orthonormal(&prefix, n).unwrap();
        prop_assert_eq!(full.len(), n);
        let dev = gram_deviation(&full);
        prop_assert!(dev < TOL, "Gram deviation {dev:e}");
        for (a, b) in prefix.iter().zip(&full) {
            prop_assert!((a - b).norm() < TOL);
        }
        let target = SpaceLayout::single(Subsystem::new("A", n).unwrap());
        let partial = (0..k)
            .map(|i| (format!("k{i}"), StateVector::new(target.clone(), q.column(i).iter().copied().collect()).unwrap()))
            .collect();
        let spec = MeasurementSpec::new(target, partial, CompletionPolicy::AutoComplete).unwrap();
        prop_assert!(spec.is_complete());
        let vecs: Vec<DVector<C64>> = spec.outcomes().iter().map(|o| o.vector.amplitudes().clone()).collect();
        prop_assert!(gram_deviation(&vecs) < TOL);
        Ok(())
    }))
}
