//! Ideal QND projectors `P_Δ` onto fixed Fock-number offset `|k1 − k2| = Δ`,
//! in the z basis, the x basis, or any rotated `(θ, φ)` basis.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::ensemble::{rotation_matrix, rotation_matrix_real, Basis, EnsembleSize, TwoEnsembleState};
use crate::error::{domain, Error, Result};

/// Largest `N` for which dense `(N+1)² × (N+1)²` matrices are built.
pub const DENSE_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjectorBasis {
    Z,
    X,
    Custom { theta: f64, phi: f64 },
}

impl ProjectorBasis {
    pub fn angles(self) -> (f64, f64) {
        match self {
            ProjectorBasis::Z => (0.0, 0.0),
            ProjectorBasis::X => (FRAC_PI_2, 0.0),
            ProjectorBasis::Custom { theta, phi } => (theta, phi),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorSpec {
    size: EnsembleSize,
    delta: usize,
    basis: ProjectorBasis,
}

impl ProjectorSpec {
    pub fn new(size: EnsembleSize, delta: usize, basis: ProjectorBasis) -> Result<Self> {
        check_delta(size, delta)?;
        Ok(Self { size, delta, basis })
    }

    pub fn z(size: EnsembleSize, delta: usize) -> Result<Self> {
        Self::new(size, delta, ProjectorBasis::Z)
    }

    pub fn x(size: EnsembleSize, delta: usize) -> Result<Self> {
        Self::new(size, delta, ProjectorBasis::X)
    }

    #[inline]
    pub fn size(&self) -> EnsembleSize {
        self.size
    }

    #[inline]
    pub fn delta(&self) -> usize {
        self.delta
    }

    #[inline]
    pub fn basis(&self) -> ProjectorBasis {
        self.basis
    }

    /// `2(N + 1 − Δ)`, halved for `Δ = 0`.
    pub fn rank(&self) -> usize {
        sector_size(self.size, self.delta)
    }
}

pub fn sector_size(size: EnsembleSize, delta: usize) -> usize {
    let r = 2 * (size.n() + 1 - delta);
    if delta == 0 {
        r / 2
    } else {
        r
    }
}

pub(crate) fn check_delta(size: EnsembleSize, delta: usize) -> Result<()> {
    if delta > size.n() {
        return Err(domain(format!("offset {delta} outside 0..={}", size.n())));
    }
    Ok(())
}

pub fn projector_mask(size: EnsembleSize, delta: usize) -> Result<Vec<bool>> {
    check_delta(size, delta)?;
    Ok((0..size.dim()).map(|i| size.sector(i) == delta).collect())
}

/// Zeroes every amplitude outside the offset-`delta` sector, in place.
pub(crate) fn mask_in_place(size: EnsembleSize, amps: &mut [Complex64], delta: usize) {
    for (i, a) in amps.iter_mut().enumerate() {
        if size.sector(i) != delta {
            *a = Complex64::new(0.0, 0.0);
        }
    }
}

/// Single-ensemble rotation into a projector's frame.
#[derive(Debug, Clone)]
pub enum Frame {
    Identity,
    Real(DMatrix<f64>),
    Complex(DMatrix<Complex64>),
}

impl Frame {
    pub fn new(size: EnsembleSize, basis: ProjectorBasis) -> Self {
        match basis {
            ProjectorBasis::Z => Frame::Identity,
            _ => {
                let (theta, phi) = basis.angles();
                if theta == 0.0 && phi == 0.0 {
                    Frame::Identity
                } else if phi == 0.0 {
                    Frame::Real(rotation_matrix_real(size, theta))
                } else {
                    Frame::Complex(rotation_matrix(size, theta, phi))
                }
            }
        }
    }

    /// `𝒰⊗𝒰 · P⁽ᶻ⁾_Δ · (𝒰⊗𝒰)†` applied to `state`.
    pub fn project(&self, state: &TwoEnsembleState, delta: usize) -> TwoEnsembleState {
        let size = state.size();
        match self {
            Frame::Identity => {
                let mut amps = state.amplitudes().to_vec();
                mask_in_place(size, &mut amps, delta);
                relabel(size, state.basis(), amps)
            }
            Frame::Real(u) => {
                let rotated = state.apply_local_real(&u.transpose());
                let mut amps = rotated.into_amplitudes();
                mask_in_place(size, &mut amps, delta);
                relabel(size, state.basis(), amps).apply_local_real(u)
            }
            Frame::Complex(u) => {
                let ud = u.adjoint();
                let rotated = state.apply_local(&ud, &ud);
                let mut amps = rotated.into_amplitudes();
                mask_in_place(size, &mut amps, delta);
                relabel(size, state.basis(), amps).apply_local(u, u)
            }
        }
    }
}

fn relabel(size: EnsembleSize, basis: Basis, amps: Vec<Complex64>) -> TwoEnsembleState {
    TwoEnsembleState::from_amplitudes(size, basis, amps).expect("dimension preserved")
}

/// `P_Δ |ψ⟩` (unnormalized). The state must be expressed in the z basis.
pub fn apply_projector(state: &TwoEnsembleState, spec: &ProjectorSpec) -> Result<TwoEnsembleState> {
    if state.basis() != Basis::Z {
        return Err(Error::BasisMismatch { expected: Basis::Z, found: state.basis() });
    }
    if state.size() != spec.size {
        return Err(domain("projector and state sizes differ"));
    }
    Ok(Frame::new(spec.size, spec.basis).project(state, spec.delta))
}

fn check_dense(size: EnsembleSize) -> Result<()> {
    if size.n() > DENSE_LIMIT {
        return Err(Error::DenseLimit { n: size.n(), limit: DENSE_LIMIT });
    }
    Ok(())
}

fn z_projector(size: EnsembleSize, delta: usize) -> DMatrix<f64> {
    let d = size.dim();
    DMatrix::from_fn(d, d, |i, j| if i == j && size.sector(i) == delta { 1.0 } else { 0.0 })
}

/// Dense real projector. Complex-phase bases (`φ ≠ 0`) are rejected; use
/// [`projector_matrix_complex`] for those.
pub fn projector_matrix(spec: &ProjectorSpec) -> Result<DMatrix<f64>> {
    check_dense(spec.size)?;
    let pz = z_projector(spec.size, spec.delta);
    let (theta, phi) = spec.basis.angles();
    if phi != 0.0 {
        return Err(domain("projector in a complex basis; use projector_matrix_complex"));
    }
    if theta == 0.0 {
        return Ok(pz);
    }
    let u = rotation_matrix_real(spec.size, theta);
    let w = u.kronecker(&u);
    Ok(&w * pz * w.transpose())
}

pub fn projector_matrix_complex(spec: &ProjectorSpec) -> Result<DMatrix<Complex64>> {
    check_dense(spec.size)?;
    let pz = z_projector(spec.size, spec.delta).map(|x| Complex64::new(x, 0.0));
    let (theta, phi) = spec.basis.angles();
    let u = rotation_matrix(spec.size, theta, phi);
    let w = u.kronecker(&u);
    Ok(&w * pz * w.adjoint())
}

/// Largest violations of idempotence, symmetry, mutual orthogonality and
/// completeness over the dense family `{P_Δ}` in one basis.
pub fn projector_property_residuals(size: EnsembleSize, basis: ProjectorBasis) -> Result<[f64; 4]> {
    let d = size.dim();
    let ps = (0..=size.n())
        .map(|dl| projector_matrix(&ProjectorSpec::new(size, dl, basis)?))
        .collect::<Result<Vec<_>>>()?;
    let mut r = [0.0f64; 4];
    let mut sum = DMatrix::zeros(d, d);
    for (a, pa) in ps.iter().enumerate() {
        r[0] = r[0].max((pa * pa - pa).abs().max());
        r[1] = r[1].max((pa - pa.transpose()).abs().max());
        for pb in ps.iter().skip(a + 1) {
            r[2] = r[2].max((pa * pb).abs().max());
        }
        sum += pa;
    }
    r[3] = (sum - DMatrix::identity(d, d)).abs().max();
    Ok(r)
}

/// Memo of dense z/x projectors, keyed by `(N, Δ, basis)`.
#[derive(Debug, Default, Clone)]
pub struct ProjectorCache {
    entries: BTreeMap<(usize, usize, bool), DMatrix<f64>>,
}

impl ProjectorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, size: EnsembleSize, delta: usize, x_basis: bool) -> Result<&DMatrix<f64>> {
        let key = (size.n(), delta, x_basis);
        if !self.entries.contains_key(&key) {
            let spec = if x_basis { ProjectorSpec::x(size, delta)? } else { ProjectorSpec::z(size, delta)? };
            self.entries.insert(key, projector_matrix(&spec)?);
        }
        Ok(&self.entries[&key])
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
