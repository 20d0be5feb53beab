//! Outcome-averaged evolution of two-ensemble density matrices under the
//! alternating z/x projection channel, and its diagonal fixed points.
//!
//! In the `V`/`U` bases every Kraus operator of a half round is one of the
//! `Λ` partial permutations, so a half round is a gather-scatter over pairs
//! of supported columns rather than a dense triple product.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::ensemble::{Basis, DensityMatrix};
use crate::error::{domain, Error, Result};
use crate::jsvd::{JointSvd, LambdaFactor};

/// Tolerance on `‖Δd‖∞` between successive power-iteration steps.
pub const STEADY_TOL: f64 = 1e-12;
pub const STEADY_MAX_ITER: usize = 100_000;
/// Singular values of `𝒜 - I` below this count as zero.
pub const NULL_TOL: f64 = 1e-9;

/// Probability vector over `V`-basis indices.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalDistribution {
    d: Vec<f64>,
}

impl DiagonalDistribution {
    /// Clips entries in `[-1e-12, 0)` to zero and normalizes to unit sum.
    pub fn new(mut d: Vec<f64>) -> Result<Self> {
        for (k, x) in d.iter_mut().enumerate() {
            if !x.is_finite() || *x < -1e-12 {
                return Err(domain(format!("weight {k} is {x}")));
            }
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let total: f64 = d.iter().sum();
        if total <= 0.0 {
            return Err(Error::SingularInput("distribution has zero mass".into()));
        }
        d.iter_mut().for_each(|x| *x /= total);
        Ok(Self { d })
    }

    pub fn from_density(rho: &DensityMatrix) -> Result<Self> {
        Self::new(rho.diagonal())
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.d
    }

    pub fn into_values(self) -> Vec<f64> {
        self.d
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.d.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.d.iter().zip(&other.d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

fn expect_basis(rho: &DensityMatrix, expected: Basis) -> Result<()> {
    if rho.basis() != expected {
        return Err(Error::BasisMismatch { expected, found: rho.basis() });
    }
    Ok(())
}

/// Supported `(source, target, amplitude)` entries of one factor.
fn pairs(f: &LambdaFactor, forward: bool) -> Vec<(usize, usize, f64)> {
    f.triples()
        .into_iter()
        .map(|(r, c, a)| if forward { (c as usize, r as usize, a) } else { (r as usize, c as usize, a) })
        .collect()
}

fn conjugate_all(rho: &DensityMatrix, jsvd: &JointSvd, forward: bool, target: Basis) -> Result<DensityMatrix> {
    let d = jsvd.size().dim();
    let src = rho.entries();
    let mut out = DMatrix::<Complex64>::zeros(d, d);
    // Terms are added in a fixed factor order so the result is reproducible.
    for f in jsvd.factors() {
        let p = pairs(f, forward);
        for &(c2, r2, a2) in &p {
            for &(c1, r1, a1) in &p {
                out[(r1, r2)] += src[(c1, c2)] * (a1 * a2);
            }
        }
    }
    DensityMatrix::from_matrix(jsvd.size(), target, out)
}

/// `ρ_U = Σ Λ ρ_V Λᵀ` over all `(Δᶻ, Δˣ)`: the x-basis projection applied to
/// a state stored in the `V` basis.
pub fn half_round_v_to_u(rho: &DensityMatrix, jsvd: &JointSvd) -> Result<DensityMatrix> {
    expect_basis(rho, Basis::V)?;
    conjugate_all(rho, jsvd, true, Basis::U)
}

/// `ρ_V = Σ Λᵀ ρ_U Λ`: the following z-basis projection.
pub fn half_round_u_to_v(rho: &DensityMatrix, jsvd: &JointSvd) -> Result<DensityMatrix> {
    expect_basis(rho, Basis::U)?;
    conjugate_all(rho, jsvd, false, Basis::V)
}

/// One x projection followed by one z projection, `V` basis in and out.
pub fn full_round(rho: &DensityMatrix, jsvd: &JointSvd) -> Result<DensityMatrix> {
    half_round_u_to_v(&half_round_v_to_u(rho, jsvd)?, jsvd)
}

/// Per-round record of [`run_rounds`].
#[derive(Debug, Clone)]
pub struct RoundsOutput {
    /// `diagonals[l]` is the `V`-basis diagonal after `l` rounds.
    pub diagonals: Vec<DiagonalDistribution>,
    /// `|tr ρ - 1|` after each half round.
    pub trace_drift: Vec<f64>,
    /// Largest off-diagonal modulus of `ρ_l`, `l = 0..=L`.
    pub max_off_diagonal: Vec<f64>,
    pub final_rho: DensityMatrix,
}

/// Averages over all outcomes of `L` z-x-z rounds starting from a z-basis
/// density matrix. The first z projection is implicit: it only removes
/// inter-sector coherences, which the `Λ` factors never read.
pub fn run_rounds(rho0: &DensityMatrix, rounds: usize, jsvd: &JointSvd) -> Result<RoundsOutput> {
    expect_basis(rho0, Basis::Z)?;
    if rho0.size() != jsvd.size() {
        return Err(domain("density matrix and decomposition sizes differ"));
    }
    let mut rho = rho0.change_basis(jsvd.v(), Basis::V);
    let mut diagonals = vec![DiagonalDistribution::from_density(&rho)?];
    let mut max_off_diagonal = vec![rho.max_off_diagonal()];
    let mut trace_drift = Vec::with_capacity(2 * rounds);
    for _ in 0..rounds {
        let mid = half_round_v_to_u(&rho, jsvd)?;
        trace_drift.push((mid.trace() - 1.0).abs());
        rho = half_round_u_to_v(&mid, jsvd)?;
        trace_drift.push((rho.trace() - 1.0).abs());
        diagonals.push(DiagonalDistribution::from_density(&rho)?);
        max_off_diagonal.push(rho.max_off_diagonal());
    }
    Ok(RoundsOutput { diagonals, trace_drift, max_off_diagonal, final_rho: rho })
}

/// Column-stochastic map of `V`-basis diagonals over one z-x-z round.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    a: DMatrix<f64>,
}

impl TransitionMatrix {
    #[inline]
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn apply(&self, d: &[f64]) -> Vec<f64> {
        let n = self.a.nrows();
        (0..n).map(|m| (0..n).map(|k| self.a[(m, k)] * d[k]).sum()).collect()
    }

    pub fn column_sum_error(&self) -> f64 {
        self.a.column_iter().map(|c| (c.sum() - 1.0).abs()).fold(0.0, f64::max)
    }

    pub fn min_entry(&self) -> f64 {
        self.a.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `‖𝒜d - d‖∞`.
    pub fn residual(&self, d: &[f64]) -> f64 {
        self.apply(d).iter().zip(d).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Orthonormal basis (columns) of the eigenvalue-1 eigenspace.
    pub fn fixed_point_space(&self) -> DMatrix<f64> {
        let n = self.a.nrows();
        let shifted = &self.a - DMatrix::<f64>::identity(n, n);
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("v_t requested");
        let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] < NULL_TOL).collect();
        DMatrix::from_fn(n, keep.len(), |r, c| vt[(keep[c], r)])
    }
}

/// Enumerates every `(Δᶻ, Δˣ, Δᶻ′)` and accumulates the squared recursion
/// coefficient of each index into `𝒜[r(k), k]`.
pub fn build_transition_matrix(jsvd: &JointSvd) -> TransitionMatrix {
    let size = jsvd.size();
    let n1 = size.local_dim();
    let d = size.dim();
    let mut a = DMatrix::<f64>::zeros(d, d);
    for k in 0..d {
        let dz = jsvd.v_sector(k);
        for dx in 0..n1 {
            let Some((mid, a1)) = jsvd.factor(dz, dx).permute_forward(k) else {
                continue;
            };
            for dz2 in 0..n1 {
                if let Some((out, a2)) = jsvd.factor(dz2, dx).permute_inverse(mid) {
                    let c = a1 * a2;
                    a[(out, k)] += c * c;
                }
            }
        }
    }
    TransitionMatrix { a }
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub distribution: DiagonalDistribution,
    pub iterations: usize,
    /// `‖𝒜d - d‖∞` at return.
    pub residual: f64,
}

/// Power iteration `d ← 𝒜d / ‖𝒜d‖₁` from `d0`. The eigenvalue-1 space is
/// degenerate, so the limit depends on `d0`.
pub fn steady_state(a: &TransitionMatrix, d0: &DiagonalDistribution) -> Result<FixedPoint> {
    steady_state_with(a, d0, STEADY_TOL, STEADY_MAX_ITER)
}

pub fn steady_state_with(
    a: &TransitionMatrix,
    d0: &DiagonalDistribution,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint> {
    if d0.len() != a.dim() {
        return Err(domain(format!("distribution has {} entries, matrix is {}", d0.len(), a.dim())));
    }
    let mut d = d0.values().to_vec();
    let mut step = f64::INFINITY;
    for it in 1..=max_iter {
        let mut next = a.apply(&d);
        let l1: f64 = next.iter().map(|x| x.abs()).sum();
        if l1 <= 0.0 {
            return Err(Error::SingularInput("power iteration reached the zero vector".into()));
        }
        next.iter_mut().for_each(|x| *x /= l1);
        step = next.iter().zip(&d).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        d = next;
        if step < tol {
            let residual = a.residual(&d);
            return Ok(FixedPoint { distribution: DiagonalDistribution::new(d)?, iterations: it, residual });
        }
    }
    Err(Error::IterationLimit { iterations: max_iter, residual: step })
}
