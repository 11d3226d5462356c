//! Hand-built reference values shared by the integration tests. Nothing here
//! goes through the library's state construction: vectors are written out
//! coordinate by coordinate in the fixed flattening order.

#![allow(dead_code)]

pub mod properties;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

pub const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

pub fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// Index into R(2) ⊗ Fbar(3) ⊗ S(2).
pub fn lbar_s(r: usize, fbar: usize, s: usize) -> usize {
    r * 6 + fbar * 2 + s
}

/// Index into S(2) ⊗ F(3).
pub fn lab(s: usize, f: usize) -> usize {
    s * 3 + f
}

fn vector(dim: usize, entries: &[(usize, C64)]) -> Vec<C64> {
    let mut v = vec![c(0.0); dim];
    for &(i, a) in entries {
        v[i] += a;
    }
    v
}

/// Lbar ⊗ S right after Fbar's step: `√(1/3)|h, hbar, ↓⟩ + √(2/3)|t, tbar, →⟩`.
pub fn lbar_s_pure() -> Vec<C64> {
    let third = (1.0f64 / 3.0).sqrt();
    vector(
        12,
        &[
            (lbar_s(0, 1, 0), c(third)),
            (lbar_s(1, 2, 0), c(third)),
            (lbar_s(1, 2, 1), c(third)),
        ],
    )
}

/// The same slice after dephasing on the coin record.
pub fn lbar_s_mixture() -> DMatrix<C64> {
    let heads = vector(12, &[(lbar_s(0, 1, 0), c(1.0))]);
    let tails = vector(12, &[(lbar_s(1, 2, 0), c(H)), (lbar_s(1, 2, 1), c(H))]);
    outer(&heads) * c(1.0 / 3.0) + outer(&tails) * c(2.0 / 3.0)
}

/// Lab L after F measures `|→⟩`: `(|↓, −1/2⟩ + |↑, +1/2⟩)/√2`.
pub fn lab_pure() -> Vec<C64> {
    vector(6, &[(lab(0, 1), c(H)), (lab(1, 2), c(H))])
}

pub fn lab_mixture() -> DMatrix<C64> {
    let a = vector(6, &[(lab(0, 1), c(1.0))]);
    let b = vector(6, &[(lab(1, 2), c(1.0))]);
    (outer(&a) + outer(&b)) * c(0.5)
}

/// `|ok_bar⟩ ⊗ |↓⟩` with `ok_bar = (|h, hbar⟩ − |t, tbar⟩)/√2`.
pub fn ok_bar_down() -> Vec<C64> {
    vector(12, &[(lbar_s(0, 1, 0), c(H)), (lbar_s(1, 2, 0), c(-H))])
}

/// `ok = (|↓, −1/2⟩ − |↑, +1/2⟩)/√2`.
pub fn ok_lab() -> Vec<C64> {
    vector(6, &[(lab(0, 1), c(H)), (lab(1, 2), c(-H))])
}

pub fn outer(v: &[C64]) -> DMatrix<C64> {
    let n = v.len();
    DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj())
}

pub fn amplitude(bra: &[C64], ket: &[C64]) -> C64 {
    bra.iter().zip(ket).map(|(b, k)| b.conj() * k).sum()
}

pub fn expectation(rho: &DMatrix<C64>, v: &[C64]) -> f64 {
    let n = v.len();
    let mut acc = c(0.0);
    for i in 0..n {
        for j in 0..n {
            acc += v[i].conj() * rho[(i, j)] * v[j];
        }
    }
    acc.re
}

pub fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Joint Wigner outcome probabilities expanded by hand over the four-term
/// product basis `{hbar, tbar} × {−1/2, +1/2}`. Indices are `[wbar][w]` with
/// 0 = ok and 1 = fail.
pub fn joint_oracle(theta: f64) -> [[f64; 2]; 2] {
    let ch = c((1.0f64 / 3.0).sqrt());
    let ct = C64::from_polar((2.0f64 / 3.0).sqrt(), theta);
    // heads leaves S down, so F reads −1/2; tails prepares |→⟩.
    let a = [[ch, c(0.0)], [ct * H, ct * H]];
    let lbar = [[H, -H], [H, H]];
    let l = [[H, -H], [H, H]];
    let mut p = [[0.0; 2]; 2];
    for (x, u) in lbar.iter().enumerate() {
        for (y, v) in l.iter().enumerate() {
            let mut amp = c(0.0);
            for i in 0..2 {
                for j in 0..2 {
                    amp += a[i][j] * u[i] * v[j];
                }
            }
            p[x][y] = amp.norm_sqr();
        }
    }
    p
}

pub fn total_variation(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    0.5 * (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| (a[i][j] - b[i][j]).abs()).sum::<f64>()
}
