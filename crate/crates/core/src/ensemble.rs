//! Two-ensemble Fock space: basis layout, collective spin operators, basis
//! rotations, reference states and entanglement/fidelity metrics.
//!
//! Each ensemble of `N` two-level atoms lives in the symmetric subspace
//! spanned by `|k⟩`, `k = 0..=N` excited atoms. The two-ensemble amplitude
//! vector is stored flat with `k1` running fastest: `[k] = k2 (N+1) + k1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{domain, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Number of atoms per ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EnsembleSize(usize);

impl EnsembleSize {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(domain("ensemble size N must be at least 1"));
        }
        Ok(Self(n))
    }

    #[inline]
    pub fn n(self) -> usize {
        self.0
    }

    /// Single-ensemble dimension `N + 1`.
    #[inline]
    pub fn local_dim(self) -> usize {
        self.0 + 1
    }

    /// Two-ensemble dimension `(N + 1)²`.
    #[inline]
    pub fn dim(self) -> usize {
        self.local_dim() * self.local_dim()
    }

    #[inline]
    pub fn index(self, k1: usize, k2: usize) -> usize {
        k2 * self.local_dim() + k1
    }

    /// Inverse of [`EnsembleSize::index`]: returns `(k1, k2)`.
    #[inline]
    pub fn split(self, index: usize) -> (usize, usize) {
        (index % self.local_dim(), index / self.local_dim())
    }

    /// Fock-number offset `|k1 − k2|` of a flat index.
    #[inline]
    pub fn sector(self, index: usize) -> usize {
        let (k1, k2) = self.split(index);
        k1.abs_diff(k2)
    }

    pub(crate) fn check_label(self, k: usize) -> Result<()> {
        if k > self.0 {
            return Err(domain(format!("Fock label {k} outside 0..={}", self.0)));
        }
        Ok(())
    }
}

/// Basis in which a state's amplitudes are expressed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Basis {
    Z,
    X,
    /// Right singular basis of the two-projector products.
    V,
    /// Left singular basis of the two-projector products.
    U,
    Custom { theta: f64, phi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpinAxis {
    X,
    Y,
    Z,
}

impl SpinAxis {
    /// Bloch angles `(θ, φ)` whose rotation maps `Sᶻ` eigenstates onto
    /// eigenstates of this axis.
    pub fn angles(self) -> (f64, f64) {
        match self {
            SpinAxis::Z => (0.0, 0.0),
            SpinAxis::X => (FRAC_PI_2, 0.0),
            SpinAxis::Y => (FRAC_PI_2, FRAC_PI_2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Amplitude vector over the two-ensemble Fock basis.
///
/// States are never normalized implicitly; `norm_sq` is carried alongside the
/// amplitudes so that unnormalized post-measurement states keep their
/// outcome probability.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoEnsembleState {
    size: EnsembleSize,
    basis: Basis,
    amps: Vec<Complex64>,
    norm_sq: f64,
}

impl TwoEnsembleState {
    pub fn from_amplitudes(size: EnsembleSize, basis: Basis, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != size.dim() {
            return Err(domain(format!(
                "amplitude vector has length {}, expected (N+1)^2 = {}",
                amps.len(),
                size.dim()
            )));
        }
        let norm_sq = amps.iter().map(|a| a.norm_sqr()).sum();
        Ok(Self { size, basis, amps, norm_sq })
    }

    pub fn from_real(size: EnsembleSize, basis: Basis, amps: &[f64]) -> Result<Self> {
        Self::from_amplitudes(size, basis, amps.iter().map(|&a| Complex64::new(a, 0.0)).collect())
    }

    pub fn zero(size: EnsembleSize, basis: Basis) -> Self {
        Self { size, basis, amps: vec![ZERO; size.dim()], norm_sq: 0.0 }
    }

    #[inline]
    pub fn size(&self) -> EnsembleSize {
        self.size
    }

    #[inline]
    pub fn basis(&self) -> Basis {
        self.basis
    }

    #[inline]
    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    #[inline]
    pub fn amplitude(&self, k1: usize, k2: usize) -> Complex64 {
        self.amps[self.size.index(k1, k2)]
    }

    #[inline]
    pub fn norm_sq(&self) -> f64 {
        self.norm_sq
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sq - 1.0).abs() < 1e-10
    }

    /// Same amplitudes under a different basis label.
    pub fn relabeled(mut self, basis: Basis) -> Self {
        self.basis = basis;
        self
    }

    pub fn normalized(&self) -> Result<Self> {
        if !(self.norm_sq > 0.0) {
            return Err(domain("cannot normalize a zero-norm state"));
        }
        let s = 1.0 / libm::sqrt(self.norm_sq);
        Ok(self.map_amplitudes(|a| a * s))
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        self.map_amplitudes(|a| a * factor)
    }

    fn map_amplitudes(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        let amps: Vec<_> = self.amps.iter().map(|&a| f(a)).collect();
        let norm_sq = amps.iter().map(|a| a.norm_sqr()).sum();
        Self { size: self.size, basis: self.basis, amps, norm_sq }
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        debug_assert_eq!(self.size, other.size);
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    /// Max-abs amplitude difference; used by oracle comparisons.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    /// Amplitudes as a matrix with rows `k2` and columns `k1`.
    fn as_matrix(&self) -> DMatrix<Complex64> {
        let d = self.size.local_dim();
        DMatrix::from_row_slice(d, d, &self.amps)
    }

    fn from_matrix(size: EnsembleSize, basis: Basis, m: &DMatrix<Complex64>) -> Self {
        let d = size.local_dim();
        let mut amps = Vec::with_capacity(d * d);
        for k2 in 0..d {
            for k1 in 0..d {
                amps.push(m[(k2, k1)]);
            }
        }
        let norm_sq = amps.iter().map(|a| a.norm_sqr()).sum();
        Self { size, basis, amps, norm_sq }
    }

    /// Applies `op1 ⊗ op2` mode-wise (`op1` on ensemble 1, `op2` on ensemble 2)
    /// without forming the `(N+1)² × (N+1)²` product.
    pub fn apply_local(&self, op1: &DMatrix<Complex64>, op2: &DMatrix<Complex64>) -> Self {
        let y = op2 * self.as_matrix() * op1.transpose();
        Self::from_matrix(self.size, self.basis, &y)
    }

    /// Real-matrix variant of [`TwoEnsembleState::apply_local`] with the same
    /// operator on both ensembles.
    pub fn apply_local_real(&self, op: &DMatrix<f64>) -> Self {
        let d = self.size.local_dim();
        let mut tmp = vec![ZERO; d * d];
        // tmp = X · opᵀ  (acts on k1)
        for k2 in 0..d {
            let row = &self.amps[k2 * d..(k2 + 1) * d];
            for j in 0..d {
                let mut acc = ZERO;
                for (k1, a) in row.iter().enumerate() {
                    acc += a * op[(j, k1)];
                }
                tmp[k2 * d + j] = acc;
            }
        }
        // out = op · tmp  (acts on k2)
        let mut amps = vec![ZERO; d * d];
        for i in 0..d {
            for k2 in 0..d {
                let w = op[(i, k2)];
                if w == 0.0 {
                    continue;
                }
                let src = &tmp[k2 * d..(k2 + 1) * d];
                let dst = &mut amps[i * d..(i + 1) * d];
                for (o, s) in dst.iter_mut().zip(src) {
                    *o += s * w;
                }
            }
        }
        let norm_sq = amps.iter().map(|a| a.norm_sqr()).sum();
        Self { size: self.size, basis: self.basis, amps, norm_sq }
    }
}

pub fn fock_state(size: EnsembleSize, k1: usize, k2: usize) -> Result<TwoEnsembleState> {
    size.check_label(k1)?;
    size.check_label(k2)?;
    let mut amps = vec![ZERO; size.dim()];
    amps[size.index(k1, k2)] = ONE;
    TwoEnsembleState::from_amplitudes(size, Basis::Z, amps)
}

/// Single-ensemble spin coherent amplitudes
/// `√C(N,k) e^{i(N−k)φ} cosᵏ(θ/2) sin^{N−k}(θ/2)`.
pub fn coherent_amplitudes(size: EnsembleSize, theta: f64, phi: f64) -> Vec<Complex64> {
    let n = size.n();
    let (c, s) = (libm::cos(theta / 2.0), libm::sin(theta / 2.0));
    (0..=n)
        .map(|k| {
            let mag = libm::sqrt(binomial(n, k)) * powi(c, k) * powi(s, n - k);
            Complex64::from_polar(1.0, (n - k) as f64 * phi) * mag
        })
        .collect()
}

/// Product state `|θ,φ⟩⟩ ⊗ |θ,φ⟩⟩`.
pub fn spin_coherent_pair(size: EnsembleSize, theta: f64, phi: f64) -> TwoEnsembleState {
    let local = coherent_amplitudes(size, theta, phi);
    let d = size.local_dim();
    let mut amps = Vec::with_capacity(d * d);
    for k2 in 0..d {
        for k1 in 0..d {
            amps.push(local[k1] * local[k2]);
        }
    }
    let norm_sq = amps.iter().map(|a| a.norm_sqr()).sum();
    TwoEnsembleState { size, basis: Basis::Z, amps, norm_sq }
}

/// Both ensembles polarized along `Sˣ`.
pub fn xx_polarized(size: EnsembleSize) -> TwoEnsembleState {
    spin_coherent_pair(size, FRAC_PI_2, 0.0)
}

/// `(N+1)^{−1/2} Σ_k |k,k⟩`.
pub fn epr_state(size: EnsembleSize) -> TwoEnsembleState {
    let amp = Complex64::new(1.0 / libm::sqrt(size.local_dim() as f64), 0.0);
    let mut amps = vec![ZERO; size.dim()];
    for k in 0..size.local_dim() {
        amps[size.index(k, k)] = amp;
    }
    TwoEnsembleState { size, basis: Basis::Z, amps, norm_sq: 1.0 }
}

/// Single-ensemble collective spin operator in the Fock basis, with
/// `Sᶻ = diag(2k − N)`, `Sˣ = e†g + g†e`, `Sʸ = −i e†g + i g†e`.
pub fn spin_matrix(size: EnsembleSize, axis: SpinAxis) -> DMatrix<Complex64> {
    let n = size.n();
    let d = size.local_dim();
    let mut m = DMatrix::from_element(d, d, ZERO);
    match axis {
        SpinAxis::Z => {
            for k in 0..d {
                m[(k, k)] = Complex64::new(2.0 * k as f64 - n as f64, 0.0);
            }
        }
        SpinAxis::X | SpinAxis::Y => {
            for k in 0..n {
                // ⟨k+1| e†g |k⟩
                let raise = libm::sqrt(((k + 1) * (n - k)) as f64);
                let (up, down) = match axis {
                    SpinAxis::X => (Complex64::new(raise, 0.0), Complex64::new(raise, 0.0)),
                    _ => (Complex64::new(0.0, -raise), Complex64::new(0.0, raise)),
                };
                m[(k + 1, k)] = up;
                m[(k, k + 1)] = down;
            }
        }
    }
    m
}

/// Single-ensemble factor of `𝒰(θ,φ) = e^{−iSᶻφ/2} e^{−iSʸθ/2}`.
///
/// The `Sʸ` exponential is built from the Hermitian eigendecomposition of the
/// explicit `Sʸ` matrix; its eigenvalues are snapped to the exact integers
/// `2k − N`.
pub fn rotation_matrix(size: EnsembleSize, theta: f64, phi: f64) -> DMatrix<Complex64> {
    let n = size.n() as f64;
    let d = size.local_dim();
    let eig = spin_matrix(size, SpinAxis::Y).symmetric_eigen();
    let mut phases = DMatrix::from_element(d, d, ZERO);
    for j in 0..d {
        let m = libm::round((eig.eigenvalues[j] + n) / 2.0) * 2.0 - n;
        phases[(j, j)] = Complex64::from_polar(1.0, -m * theta / 2.0);
    }
    let q = &eig.eigenvectors;
    let y_rot = q * phases * q.adjoint();
    let mut out = y_rot;
    for k in 0..d {
        let zphase = Complex64::from_polar(1.0, -(2.0 * k as f64 - n) * phi / 2.0);
        for j in 0..d {
            out[(k, j)] *= zphase;
        }
    }
    out
}

/// Real single-ensemble rotation `e^{−iSʸθ/2}` (the `φ = 0` fast path).
pub fn rotation_matrix_real(size: EnsembleSize, theta: f64) -> DMatrix<f64> {
    rotation_matrix(size, theta, 0.0).map(|c| c.re)
}

/// Applies `𝒰 ⊗ 𝒰` (or its inverse) mode-wise. The basis label is kept:
/// this is an active transformation of the state.
pub fn apply_two_mode_rotation(
    state: &TwoEnsembleState,
    theta: f64,
    phi: f64,
    direction: Direction,
) -> TwoEnsembleState {
    let mut u = rotation_matrix(state.size(), theta, phi);
    if direction == Direction::Inverse {
        u = u.adjoint();
    }
    state.apply_local(&u, &u)
}

/// Two-ensemble density matrix, basis-tagged.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    size: EnsembleSize,
    basis: Basis,
    entries: DMatrix<Complex64>,
}

impl DensityMatrix {
    pub fn from_matrix(size: EnsembleSize, basis: Basis, entries: DMatrix<Complex64>) -> Result<Self> {
        if entries.nrows() != size.dim() || entries.ncols() != size.dim() {
            return Err(domain(format!(
                "density matrix is {}x{}, expected {d}x{d}",
                entries.nrows(),
                entries.ncols(),
                d = size.dim()
            )));
        }
        Ok(Self { size, basis, entries })
    }

    /// `|ψ⟩⟨ψ| / ⟨ψ|ψ⟩`.
    pub fn from_pure(state: &TwoEnsembleState) -> Result<Self> {
        let psi = state.normalized()?;
        let a = psi.amplitudes();
        let d = a.len();
        let entries = DMatrix::from_fn(d, d, |i, j| a[i] * a[j].conj());
        Ok(Self { size: state.size(), basis: state.basis(), entries })
    }

    pub fn maximally_mixed(size: EnsembleSize, basis: Basis) -> Self {
        let d = size.dim();
        let entries = DMatrix::from_diagonal_element(d, d, Complex64::new(1.0 / d as f64, 0.0));
        Self { size, basis, entries }
    }

    #[inline]
    pub fn size(&self) -> EnsembleSize {
        self.size
    }

    #[inline]
    pub fn basis(&self) -> Basis {
        self.basis
    }

    #[inline]
    pub fn entries(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|c| c.re).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.entries.diagonal().iter().map(|c| c.re).collect()
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = self.entries.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.entries.clone().symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest modulus among off-diagonal entries.
    pub fn max_off_diagonal(&self) -> f64 {
        let d = self.entries.nrows();
        let mut worst: f64 = 0.0;
        for j in 0..d {
            for i in 0..d {
                if i != j {
                    worst = worst.max(self.entries[(i, j)].norm());
                }
            }
        }
        worst
    }

    /// `Bᵀ ρ B` for a real orthogonal change of basis whose columns are the
    /// new basis vectors written in the current basis.
    pub fn change_basis(&self, b: &DMatrix<f64>, target: Basis) -> Self {
        let bc = b.map(|x| Complex64::new(x, 0.0));
        let entries = bc.transpose() * &self.entries * bc;
        Self { size: self.size, basis: target, entries }
    }
}

/// Reduced density matrix on ensemble 1 (trace over ensemble 2) of a
/// normalized copy of `state`.
pub fn partial_trace_first(state: &TwoEnsembleState) -> Result<DMatrix<Complex64>> {
    if !(state.norm_sq() > 0.0) {
        return Err(domain("partial trace of a zero-norm state"));
    }
    let size = state.size();
    let d = size.local_dim();
    let inv = 1.0 / state.norm_sq();
    let mut rho = DMatrix::from_element(d, d, ZERO);
    for k1 in 0..d {
        for k1p in 0..d {
            let mut acc = ZERO;
            for k2 in 0..d {
                acc += state.amplitude(k1, k2) * state.amplitude(k1p, k2).conj();
            }
            rho[(k1, k1p)] = acc * inv;
        }
    }
    Ok(rho)
}

/// Reduced density matrix on ensemble 1 of a two-ensemble density matrix,
/// normalized by its trace.
pub fn partial_trace_first_mixed(rho: &DensityMatrix) -> Result<DMatrix<Complex64>> {
    let tr = rho.trace();
    if !(tr > 0.0) {
        return Err(domain("partial trace of a zero-trace density matrix"));
    }
    let size = rho.size();
    let d = size.local_dim();
    let mut out = DMatrix::from_element(d, d, ZERO);
    for k1 in 0..d {
        for k1p in 0..d {
            let mut acc = ZERO;
            for k2 in 0..d {
                acc += rho.entries()[(size.index(k1, k2), size.index(k1p, k2))];
            }
            out[(k1, k1p)] = acc / tr;
        }
    }
    Ok(out)
}

/// `−Σ λ log₂ λ` over the eigenvalues of a Hermitian matrix, with
/// eigenvalues below zero clipped and `0 log 0 := 0`.
pub fn von_neumann_entropy(rho: &DMatrix<Complex64>) -> f64 {
    rho.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .filter(|&&l| l > 1e-300)
        .map(|&l| -l * libm::log2(l))
        .sum::<f64>()
        .max(0.0)
}

/// Entanglement entropy between the ensembles, in bits.
pub fn entanglement_entropy(state: &TwoEnsembleState) -> Result<f64> {
    Ok(von_neumann_entropy(&partial_trace_first(state)?))
}

/// `|⟨target|state⟩|² / ⟨state|state⟩`.
pub fn fidelity_to(state: &TwoEnsembleState, target: &TwoEnsembleState) -> Result<f64> {
    if state.size() != target.size() {
        return Err(Error::Domain(format!(
            "size mismatch: N={} vs N={}",
            state.size().n(),
            target.size().n()
        )));
    }
    if !(state.norm_sq() > 0.0) {
        return Err(domain("fidelity of a zero-norm state"));
    }
    Ok(target.inner(state).norm_sqr() / state.norm_sq())
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    libm::exp(ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)).round_half()
}

pub(crate) fn ln_factorial(n: usize) -> f64 {
    libm::lgamma(n as f64 + 1.0)
}

fn powi(x: f64, k: usize) -> f64 {
    let mut acc = 1.0;
    for _ in 0..k {
        acc *= x;
    }
    acc
}

trait RoundHalf {
    fn round_half(self) -> Self;
}

impl RoundHalf for f64 {
    /// Binomials below 2^52 are integers; snap the lgamma round-off.
    fn round_half(self) -> f64 {
        if self < 4.0e15 {
            libm::round(self)
        } else {
            self
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn size(n: usize) -> EnsembleSize {
        EnsembleSize::new(n).unwrap()
    }

    fn commutator(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        a * b - b * a
    }

    fn max_abs(m: &DMatrix<Complex64>) -> f64 {
        m.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_size_is_rejected() {
        assert!(EnsembleSize::new(0).is_err());
        assert_eq!(size(3).dim(), 16);
    }

    #[test]
    fn fock_index_layout() {
        let s = fock_state(size(2), 0, 0).unwrap();
        assert_eq!(s.amplitudes()[0], ONE);
        let s = fock_state(size(2), 2, 1).unwrap();
        assert_eq!(s.amplitudes()[5], ONE);
        assert!(s.is_normalized());
        assert!(fock_state(size(2), 3, 0).is_err());
        let a = fock_state(size(2), 1, 0).unwrap();
        let b = fock_state(size(2), 0, 1).unwrap();
        assert_eq!(a.inner(&b), ZERO);
    }

    #[test]
    fn fock_states_are_orthonormal() {
        for n in 1..=6 {
            let sz = size(n);
            let states: Vec<_> = (0..sz.dim())
                .map(|i| {
                    let (k1, k2) = sz.split(i);
                    fock_state(sz, k1, k2).unwrap()
                })
                .collect();
            for (i, a) in states.iter().enumerate() {
                for (j, b) in states.iter().enumerate() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert_eq!(a.inner(b).re, expect);
                }
            }
        }
    }

    #[test]
    fn coherent_pair_examples() {
        let s = spin_coherent_pair(size(3), 0.0, 0.0);
        assert!(s.max_abs_diff(&fock_state(size(3), 3, 3).unwrap()) < 1e-15);

        let s = xx_polarized(size(2));
        for k2 in 0..3 {
            for k1 in 0..3 {
                let expect = libm::sqrt(binomial(2, k1) * binomial(2, k2)) / 4.0;
                assert!((s.amplitude(k1, k2).re - expect).abs() < 1e-15);
            }
        }
        for (n, th, ph) in [(1, 0.3, 2.0), (7, 1.1, -0.4), (20, 2.9, 5.5)] {
            assert!((spin_coherent_pair(size(n), th, ph).norm_sq() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spin_matrices() {
        let z = spin_matrix(size(1), SpinAxis::Z);
        assert_eq!(z[(0, 0)].re, -1.0);
        assert_eq!(z[(1, 1)].re, 1.0);

        for n in 1..=10 {
            let sz = size(n);
            let [x, y, z] = [SpinAxis::X, SpinAxis::Y, SpinAxis::Z].map(|a| spin_matrix(sz, a));
            let two_i = Complex64::new(0.0, 2.0);
            assert!(max_abs(&(commutator(&x, &y) - &z * two_i)) < 1e-12);
            assert!(max_abs(&(commutator(&y, &z) - &x * two_i)) < 1e-12);
            assert!(max_abs(&(commutator(&z, &x) - &y * two_i)) < 1e-12);
        }

        // Sˣ|1⟩ = √2(|0⟩ + |2⟩) from e†g + g†e matrix elements
        let x = spin_matrix(size(2), SpinAxis::X);
        let col: Vec<f64> = (0..3).map(|i| x[(i, 1)].re).collect();
        let r2 = libm::sqrt(2.0);
        assert!((col[0] - r2).abs() < 1e-15 && col[1] == 0.0 && (col[2] - r2).abs() < 1e-15);
    }

    #[test]
    fn rotation_identity_and_unitarity() {
        let u = rotation_matrix(size(4), 0.0, 0.0);
        assert!(max_abs(&(u - DMatrix::identity(5, 5))) < 1e-12);

        let u = rotation_matrix(size(5), 0.77, -2.1);
        assert!(max_abs(&(u.adjoint() * &u - DMatrix::identity(6, 6))) < 1e-12);
    }

    #[test]
    fn rotation_composes_about_shared_axis() {
        let sz = size(6);
        let a = rotation_matrix(sz, 0.4, 0.0) * rotation_matrix(sz, 1.3, 0.0);
        assert!(max_abs(&(a - rotation_matrix(sz, 1.7, 0.0))) < 1e-12);
    }

    #[test]
    fn rotation_maps_z_to_x_eigenstates() {
        let sz = size(5);
        let u = rotation_matrix(sz, PI / 2.0, 0.0);
        let lhs = &u * spin_matrix(sz, SpinAxis::Z) * u.adjoint();
        assert!(max_abs(&(lhs - spin_matrix(sz, SpinAxis::X))) < 1e-12);
        let u = rotation_matrix(sz, PI / 2.0, PI / 2.0);
        let lhs = &u * spin_matrix(sz, SpinAxis::Z) * u.adjoint();
        assert!(max_abs(&(lhs - spin_matrix(sz, SpinAxis::Y))) < 1e-12);
    }

    #[test]
    fn rotation_of_top_state_is_coherent_state() {
        let sz = size(4);
        let u = rotation_matrix(sz, 1.2, 0.5);
        let col: Vec<Complex64> = (0..5).map(|i| u[(i, 4)]).collect();
        let coh = coherent_amplitudes(sz, 1.2, 0.5);
        // equal up to a global phase
        let phase = coh[4] / col[4];
        for (a, b) in col.iter().zip(&coh) {
            assert!((a * phase - b).norm() < 1e-12);
        }
    }

    #[test]
    fn appendix_fixture_is_transpose_of_rotation() {
        // 𝒰(π/2,0) as printed for N=2: (1/4)[[U1,U2,U1],[−U2,U3,U2],[U1,−U2,U1]]
        let r2 = libm::sqrt(2.0);
        let u1 = [[1.0, -r2, 1.0], [r2, 0.0, -r2], [1.0, r2, 1.0]];
        let blocks = [[1.0, -r2, 1.0], [r2, 0.0, -r2], [1.0, r2, 1.0]];
        let printed = DMatrix::from_fn(9, 9, |i, j| blocks[i / 3][j / 3] * u1[i % 3][j % 3] / 4.0);
        let u = rotation_matrix_real(size(2), PI / 2.0);
        let dense = u.kronecker(&u);
        let diff = (dense.transpose() - printed).abs().max();
        assert!(diff < 1e-12, "{diff}");
    }

    #[test]
    fn mode_wise_rotation_matches_dense_kronecker() {
        for n in 1..=4 {
            let sz = size(n);
            let amps: Vec<Complex64> = (0..sz.dim())
                .map(|i| Complex64::new(libm::sin(i as f64 * 1.3 + 0.2), libm::cos(i as f64 * 0.7)))
                .collect();
            let st = TwoEnsembleState::from_amplitudes(sz, Basis::Z, amps.clone()).unwrap();
            let u = rotation_matrix(sz, 0.9, 0.4);
            let dense = u.kronecker(&u);
            let expect = &dense * nalgebra::DVector::from_vec(amps);
            let got = apply_two_mode_rotation(&st, 0.9, 0.4, Direction::Forward);
            for (a, b) in got.amplitudes().iter().zip(expect.iter()) {
                assert!((a - b).norm() < 1e-12);
            }
            let back = apply_two_mode_rotation(&got, 0.9, 0.4, Direction::Inverse);
            assert!(back.max_abs_diff(&st) < 1e-12);
            assert!((got.norm_sq() - st.norm_sq()).abs() < 1e-12);

            let ur = rotation_matrix_real(sz, 0.9);
            let real_path = st.apply_local_real(&ur);
            let cplx_path = apply_two_mode_rotation(&st, 0.9, 0.0, Direction::Forward);
            assert!(real_path.max_abs_diff(&cplx_path) < 1e-12);
        }
    }

    #[test]
    fn epr_examples() {
        let e = epr_state(size(1));
        let h = 1.0 / libm::sqrt(2.0);
        assert!((e.amplitudes()[0].re - h).abs() < 1e-15 && (e.amplitudes()[3].re - h).abs() < 1e-15);

        for n in [1, 3, 5, 8] {
            let sz = size(n);
            let e = epr_state(sz);
            let r = apply_two_mode_rotation(&e, PI / 2.0, 0.0, Direction::Forward);
            assert!(r.max_abs_diff(&e) < 1e-12);
            let ent = entanglement_entropy(&e).unwrap();
            assert!((ent - libm::log2((n + 1) as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn partial_trace_examples() {
        let rho = partial_trace_first(&fock_state(size(2), 1, 2).unwrap()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == 1 && j == 1 { 1.0 } else { 0.0 };
                assert!((rho[(i, j)] - Complex64::new(e, 0.0)).norm() < 1e-15);
            }
        }
        let rho = partial_trace_first(&epr_state(size(3))).unwrap();
        assert!(max_abs(&(rho - DMatrix::from_diagonal_element(4, 4, Complex64::new(0.25, 0.0)))) < 1e-15);

        let sz = size(2);
        let rho = partial_trace_first(&xx_polarized(sz)).unwrap();
        let v = coherent_amplitudes(sz, PI / 2.0, 0.0);
        let proj = DMatrix::from_fn(3, 3, |i, j| v[i] * v[j].conj());
        assert!(max_abs(&(rho - proj)) < 1e-15);

        assert!(partial_trace_first(&TwoEnsembleState::zero(sz, Basis::Z)).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!(entanglement_entropy(&fock_state(size(4), 1, 3).unwrap()).unwrap().abs() < 1e-12);
        let e = entanglement_entropy(&epr_state(size(5))).unwrap();
        assert!((e - libm::log2(6.0)).abs() < 1e-12);
        let sz = size(4);
        let mut amps = vec![ZERO; sz.dim()];
        amps[sz.index(4, 0)] = Complex64::new(1.0, 0.0);
        amps[sz.index(0, 4)] = Complex64::new(1.0, 0.0);
        let noon = TwoEnsembleState::from_amplitudes(sz, Basis::Z, amps).unwrap();
        assert!((entanglement_entropy(&noon).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        for n in [1, 2, 5, 9] {
            let sz = size(n);
            let epr = epr_state(sz);
            assert!((fidelity_to(&epr, &epr).unwrap() - 1.0).abs() < 1e-14);
            // brute-force inner product against the analytic 1/(N+1)
            let xx = xx_polarized(sz);
            let brute: f64 = (0..=n).map(|k| xx.amplitude(k, k).re).sum::<f64>() / libm::sqrt((n + 1) as f64);
            let f = fidelity_to(&xx, &epr).unwrap();
            assert!((f - brute * brute).abs() < 1e-14);
            assert!((f - 1.0 / (n + 1) as f64).abs() < 1e-12);
            assert_eq!(fidelity_to(&fock_state(sz, 0, 1).unwrap(), &epr).unwrap(), 0.0);
        }
        let unnorm = epr_state(size(2)).scaled(Complex64::new(3.0, 0.0));
        assert!((fidelity_to(&unnorm, &epr_state(size(2))).unwrap() - 1.0).abs() < 1e-14);
        assert!(fidelity_to(&TwoEnsembleState::zero(size(2), Basis::Z), &epr_state(size(2))).is_err());
    }

    #[test]
    fn density_matrix_basics() {
        let rho = DensityMatrix::from_pure(&xx_polarized(size(3))).unwrap();
        assert!((rho.trace() - 1.0).abs() < 1e-12);
        assert!(rho.hermiticity_error() < 1e-15);
        assert!(rho.min_eigenvalue() > -1e-12);
        let red = partial_trace_first_mixed(&rho).unwrap();
        let direct = partial_trace_first(&xx_polarized(size(3))).unwrap();
        assert!(max_abs(&(red - direct)) < 1e-14);
        assert!(DensityMatrix::from_matrix(size(2), Basis::Z, DMatrix::zeros(4, 4)).is_err());
    }
}
