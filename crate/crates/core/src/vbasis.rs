//! Structure of the `V` basis: sector membership, amplitude maps and the
//! entanglement of individual columns.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::ensemble::{entanglement_entropy, Basis, EnsembleSize, TwoEnsembleState};
use crate::error::{domain, Error, Result};
use crate::jsvd::JointSvd;

/// Tolerance of the eigenvector test in [`classify_sectors`].
pub const SECTOR_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VBasisLabel {
    pub index: usize,
    pub sector: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    pub index: usize,
    pub sector: usize,
    /// Entropy in bits.
    pub entropy: f64,
    /// `entropy / log₂(N+1)`.
    pub normalized: f64,
}

fn column_state(size: EnsembleSize, m: &DMatrix<f64>, index: usize) -> Result<TwoEnsembleState> {
    if index >= size.dim() {
        return Err(domain(format!("column {index} out of range 0..{}", size.dim())));
    }
    let col: Vec<f64> = m.column(index).iter().copied().collect();
    TwoEnsembleState::from_real(size, Basis::Z, &col)?.normalized()
}

/// Column `index` of `V` written in the z Fock basis.
pub fn vbasis_state(jsvd: &JointSvd, index: usize) -> Result<TwoEnsembleState> {
    column_state(jsvd.size(), jsvd.v(), index)
}

/// Column `index` of `U` written in the z Fock basis.
pub fn ubasis_state(jsvd: &JointSvd, index: usize) -> Result<TwoEnsembleState> {
    column_state(jsvd.size(), jsvd.u(), index)
}

/// Squared norm of the state restricted to each z sector.
pub fn sector_weights(state: &TwoEnsembleState) -> Vec<f64> {
    let size = state.size();
    let mut w = alloc::vec![0.0; size.local_dim()];
    for (i, a) in state.amplitudes().iter().enumerate() {
        w[size.sector(i)] += a.norm_sqr();
    }
    w
}

/// Assigns each `V` column the unique `Δ` with `P_Δ v = v`.
pub fn classify_sectors(jsvd: &JointSvd) -> Result<Vec<VBasisLabel>> {
    let size = jsvd.size();
    (0..size.dim())
        .map(|index| {
            let w = sector_weights(&vbasis_state(jsvd, index)?);
            // ‖v - P_Δ v‖ is the norm outside sector Δ.
            let outside = |d: usize| libm::sqrt(w.iter().enumerate().filter(|&(e, _)| e != d).map(|(_, x)| x).sum());
            let hits: Vec<usize> = (0..w.len()).filter(|&d| outside(d) < SECTOR_TOL).collect();
            match hits.as_slice() {
                [sector] => Ok(VBasisLabel { index, sector: *sector }),
                _ => Err(Error::Structural(format!("column {index} is not confined to one sector: {w:?}"))),
            }
        })
        .collect()
}

/// Number of columns per sector, indexed by `Δ`.
pub fn sector_counts(labels: &[VBasisLabel], size: EnsembleSize) -> Vec<usize> {
    let mut c = alloc::vec![0; size.local_dim()];
    for l in labels {
        c[l.sector] += 1;
    }
    c
}

/// Expected sector size `2(N+1-Δ)`, halved for `Δ = 0`.
pub fn expected_sector_size(size: EnsembleSize, delta: usize) -> usize {
    let n = 2 * (size.n() + 1 - delta);
    if delta == 0 {
        n / 2
    } else {
        n
    }
}

/// Entanglement of every column, ordered by sector then index.
pub fn entanglement_spectrum(jsvd: &JointSvd) -> Result<Vec<SpectrumEntry>> {
    let size = jsvd.size();
    let emax = libm::log2((size.n() + 1) as f64);
    let mut out = classify_sectors(jsvd)?
        .into_iter()
        .map(|l| {
            let entropy = entanglement_entropy(&vbasis_state(jsvd, l.index)?)?;
            Ok(SpectrumEntry { index: l.index, sector: l.sector, entropy, normalized: entropy / emax })
        })
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|e| (e.sector, e.index));
    Ok(out)
}

/// `(k1, k2, amplitude)` over the full Fock grid for one column.
pub fn amplitude_map(jsvd: &JointSvd, index: usize) -> Result<Vec<(usize, usize, f64)>> {
    let st = vbasis_state(jsvd, index)?;
    let size = st.size();
    Ok((0..size.dim())
        .map(|i| {
            let (k1, k2) = size.split(i);
            (k1, k2, st.amplitudes()[i].re)
        })
        .collect())
}

/// Column of `sector` with the given rank, ranking by descending entropy and
/// breaking ties (within 1e-10) by index.
pub fn select_column(spectrum: &[SpectrumEntry], sector: usize, rank: usize) -> Option<usize> {
    let mut cols: Vec<&SpectrumEntry> = spectrum.iter().filter(|e| e.sector == sector).collect();
    cols.sort_by(|a, b| {
        if (a.entropy - b.entropy).abs() <= 1e-10 {
            a.index.cmp(&b.index)
        } else {
            b.entropy.total_cmp(&a.entropy)
        }
    });
    cols.get(rank).map(|e| e.index)
}
