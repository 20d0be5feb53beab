//! Joint singular value decomposition of every two-projector product
//! `T_{ΔzΔx} = P⁽ˣ⁾_{Δx} P⁽ᶻ⁾_{Δz} = U Λ_{ΔxΔz} Vᵀ` with one pair of
//! orthogonal matrices `U`, `V` shared by all `(Δz, Δx)`.
//!
//! `V` diagonalizes the commuting family `R_{ΔzΔx} = P⁽ᶻ⁾P⁽ˣ⁾P⁽ᶻ⁾`. Each `V`
//! column lies inside one z sector, so the family is diagonalized sector by
//! sector. `U` is then read off from the images `T v`, which also fixes the
//! singular vectors inside degenerate blocks consistently on both sides.
//!
//! Conventions, chosen for determinism:
//! - `V` columns are ordered by z sector, then by their `σ²`-over-`Δx`
//!   profile in descending lexicographic order.
//! - `U` columns are numbered by first appearance when scanning
//!   `(Δz, Δx, V column)` in ascending order.
//! - Every column's first entry with modulus above `1e-10` is positive.
//! - Inside a degenerate block, the basis is Gram–Schmidt of the block
//!   projector applied to unit vectors in ascending index order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;

use crate::ensemble::{rotation_matrix_real, Basis, EnsembleSize, TwoEnsembleState};
use crate::error::{domain, Error, Result};
use crate::projectors::{projector_matrix, ProjectorSpec, DENSE_LIMIT};

/// Default zeroing threshold for `Λ` entries.
pub const EPS_LAMBDA: f64 = 1e-10;
/// Off-diagonal tolerance when verifying that `V` diagonalizes the family.
pub const EPS_DIAG: f64 = 1e-9;
/// Largest `N` accepted by [`compute_joint_svd`]. The smallest nonzero
/// singular value is `2^{−(N−1)}`, which must stay above [`EPS_LAMBDA`].
pub const JSVD_LIMIT: usize = 33;

const SIGN_EPS: f64 = 1e-10;
const CLUSTER_TOL: f64 = 1e-9;
const SCALAR_TOL: f64 = 1e-10;
const MAX_RETRIES: usize = 5;
const MAX_DEPTH: usize = 8;
const NONE: u32 = u32::MAX;

/// Partial permutation with amplitudes: the nonzero pattern of one `Λ`.
///
/// Rows are `U` indices and columns are `V` indices; `forward` maps a `V`
/// index to the `U` index it lands on.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaFactor {
    fwd: Vec<u32>,
    fwd_amp: Vec<f64>,
    inv: Vec<u32>,
    nnz: usize,
}

impl LambdaFactor {
    /// Builds a factor from `(row, col, amplitude)` triples, rejecting
    /// anything that is not a partial permutation.
    pub fn from_triples(dim: usize, triples: &[(u32, u32, f64)], eps: f64) -> Result<Self> {
        let mut fwd = vec![NONE; dim];
        let mut fwd_amp = vec![0.0; dim];
        let mut inv = vec![NONE; dim];
        for &(row, col, amp) in triples {
            let (r, c) = (row as usize, col as usize);
            if r >= dim || c >= dim {
                return Err(Error::Structural(format!("entry ({r},{c}) outside {dim}x{dim}")));
            }
            if !(amp.abs() > eps) {
                return Err(Error::Structural(format!("entry ({r},{c}) = {amp:e} below threshold {eps:e}")));
            }
            if amp.abs() > 1.0 + 1e-9 {
                return Err(Error::Structural(format!("entry ({r},{c}) = {amp} exceeds 1")));
            }
            if fwd[c] != NONE {
                return Err(Error::Structural(format!("column {c} has two nonzero entries")));
            }
            if inv[r] != NONE {
                return Err(Error::Structural(format!("row {r} has two nonzero entries")));
            }
            fwd[c] = row;
            fwd_amp[c] = amp;
            inv[r] = col;
        }
        Ok(Self { fwd, fwd_amp, inv, nnz: triples.len() })
    }

    /// `k ↦ (π(k), a)` for a `V` index `k`, or `None` if `Λ` kills column `k`.
    #[inline]
    pub fn permute_forward(&self, k: usize) -> Option<(usize, f64)> {
        match self.fwd[k] {
            NONE => None,
            r => Some((r as usize, self.fwd_amp[k])),
        }
    }

    /// `k′ ↦ (π⁻¹(k′), a)` for a `U` index `k′`.
    #[inline]
    pub fn permute_inverse(&self, k: usize) -> Option<(usize, f64)> {
        match self.inv[k] {
            NONE => None,
            c => Some((c as usize, self.fwd_amp[c as usize])),
        }
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.nnz
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.fwd.len()
    }

    /// `(row, col, amplitude)` ordered by column.
    pub fn triples(&self) -> Vec<(u32, u32, f64)> {
        self.fwd
            .iter()
            .enumerate()
            .filter(|(_, &r)| r != NONE)
            .map(|(c, &r)| (r, c as u32, self.fwd_amp[c]))
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (r, c, a) in self.triples() {
            m[(r as usize, c as usize)] = a;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointSvd {
    size: EnsembleSize,
    u: DMatrix<f64>,
    v: DMatrix<f64>,
    /// Indexed `Δz (N+1) + Δx`.
    factors: Vec<LambdaFactor>,
    v_sector: Vec<usize>,
    u_sector: Vec<usize>,
    eps: f64,
}

impl JointSvd {
    /// Assembles a decomposition from stored parts; `triples[Δz (N+1) + Δx]`
    /// holds the factor of `T_{ΔzΔx}`.
    pub fn from_parts(
        size: EnsembleSize,
        u: DMatrix<f64>,
        v: DMatrix<f64>,
        triples: &[Vec<(u32, u32, f64)>],
        eps: f64,
    ) -> Result<Self> {
        let dim = size.dim();
        let d = size.local_dim();
        if u.shape() != (dim, dim) || v.shape() != (dim, dim) {
            return Err(Error::Structural(format!("U and V must be {dim}x{dim}")));
        }
        if triples.len() != d * d {
            return Err(Error::Structural(format!("expected {} factors, found {}", d * d, triples.len())));
        }
        let factors = triples.iter().map(|t| LambdaFactor::from_triples(dim, t, eps)).collect::<Result<Vec<_>>>()?;
        let mut v_sector = vec![usize::MAX; dim];
        let mut u_sector = vec![usize::MAX; dim];
        for dz in 0..d {
            for dx in 0..d {
                for (r, c, _) in factors[dz * d + dx].triples() {
                    let (r, c) = (r as usize, c as usize);
                    if v_sector[c] != usize::MAX && v_sector[c] != dz {
                        return Err(Error::Structural(format!("V column {c} appears in two z sectors")));
                    }
                    if u_sector[r] != usize::MAX && u_sector[r] != dx {
                        return Err(Error::Structural(format!("U column {r} appears in two x sectors")));
                    }
                    v_sector[c] = dz;
                    u_sector[r] = dx;
                }
            }
        }
        if v_sector.contains(&usize::MAX) || u_sector.contains(&usize::MAX) {
            return Err(Error::Structural("a U or V column is never reached by any factor".into()));
        }
        Ok(Self { size, u, v, factors, v_sector, u_sector, eps })
    }

    #[inline]
    pub fn size(&self) -> EnsembleSize {
        self.size
    }

    #[inline]
    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    #[inline]
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    #[inline]
    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Factor `Λ` of `T_{ΔzΔx} = P⁽ˣ⁾_{Δx} P⁽ᶻ⁾_{Δz}`.
    #[inline]
    pub fn factor(&self, dz: usize, dx: usize) -> &LambdaFactor {
        &self.factors[dz * self.size.local_dim() + dx]
    }

    pub fn factors(&self) -> &[LambdaFactor] {
        &self.factors
    }

    /// z sector `Δz` containing `V` column `j`.
    #[inline]
    pub fn v_sector(&self, j: usize) -> usize {
        self.v_sector[j]
    }

    /// x sector `Δx` containing `U` column `i`.
    #[inline]
    pub fn u_sector(&self, i: usize) -> usize {
        self.u_sector[i]
    }

    pub fn v_sectors(&self) -> &[usize] {
        &self.v_sector
    }

    pub fn u_sectors(&self) -> &[usize] {
        &self.u_sector
    }

    /// Dense `U Λ Vᵀ`.
    pub fn reconstruct(&self, dz: usize, dx: usize) -> DMatrix<f64> {
        &self.u * self.factor(dz, dx).to_dense() * self.v.transpose()
    }

    /// Largest `|UᵀU − I|` and `|VᵀV − I|` entry.
    pub fn orthogonality_error(&self) -> f64 {
        let dim = self.size.dim();
        let id = DMatrix::<f64>::identity(dim, dim);
        let eu = (self.u.tr_mul(&self.u) - &id).abs().max();
        let ev = (self.v.tr_mul(&self.v) - &id).abs().max();
        eu.max(ev)
    }

    fn basis_matrix(&self, basis: Basis) -> Result<&DMatrix<f64>> {
        match basis {
            Basis::V => Ok(&self.v),
            Basis::U => Ok(&self.u),
            other => Err(domain(format!("no joint-SVD basis matrix for {other:?}"))),
        }
    }

    fn check_size(&self, state: &TwoEnsembleState) -> Result<()> {
        if state.size() != self.size {
            return Err(domain(format!(
                "state has N={} but the decomposition has N={}",
                state.size().n(),
                self.size.n()
            )));
        }
        Ok(())
    }

    /// Expresses a z-basis state in the `V` or `U` basis (`φ = Vᵀψ`).
    pub fn from_z(&self, state: &TwoEnsembleState, target: Basis) -> Result<TwoEnsembleState> {
        self.check_size(state)?;
        if state.basis() != Basis::Z {
            return Err(Error::BasisMismatch { expected: Basis::Z, found: state.basis() });
        }
        let m = self.basis_matrix(target)?;
        let amps = real_mat_vec(m, state.amplitudes(), true);
        TwoEnsembleState::from_amplitudes(self.size, target, amps)
    }

    pub fn to_vbasis(&self, state: &TwoEnsembleState) -> Result<TwoEnsembleState> {
        match state.basis() {
            Basis::V => Ok(state.clone()),
            Basis::Z => self.from_z(state, Basis::V),
            Basis::U => self.from_z(&self.to_z(state)?, Basis::V),
            other => Err(Error::BasisMismatch { expected: Basis::Z, found: other }),
        }
    }

    /// Converts a `V`- or `U`-basis state back to the z basis.
    pub fn to_z(&self, state: &TwoEnsembleState) -> Result<TwoEnsembleState> {
        self.check_size(state)?;
        if state.basis() == Basis::Z {
            return Ok(state.clone());
        }
        let m = self.basis_matrix(state.basis())?;
        let amps = real_mat_vec(m, state.amplitudes(), false);
        TwoEnsembleState::from_amplitudes(self.size, Basis::Z, amps)
    }
}

/// `M x` or `Mᵀ x` for a real matrix and complex vector.
pub(crate) fn real_mat_vec(m: &DMatrix<f64>, x: &[Complex64], transpose: bool) -> Vec<Complex64> {
    let n = m.nrows();
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    if transpose {
        for (j, o) in out.iter_mut().enumerate() {
            let col = m.column(j);
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, xi) in x.iter().enumerate() {
                acc += xi * col[i];
            }
            *o = acc;
        }
    } else {
        for (j, xj) in x.iter().enumerate() {
            if xj.norm_sqr() == 0.0 {
                continue;
            }
            let col = m.column(j);
            for (i, o) in out.iter_mut().enumerate() {
                *o += xj * col[i];
            }
        }
    }
    out
}

/// `R_{ΔzΔx} = P⁽ᶻ⁾ P⁽ˣ⁾ P⁽ᶻ⁾`, dense.
pub fn gram_matrix(size: EnsembleSize, dz: usize, dx: usize) -> Result<DMatrix<f64>> {
    let pz = projector_matrix(&ProjectorSpec::z(size, dz)?)?;
    let px = projector_matrix(&ProjectorSpec::x(size, dx)?)?;
    Ok(&pz * px * &pz)
}

/// Dense `T_{ΔzΔx} = P⁽ˣ⁾_{Δx} P⁽ᶻ⁾_{Δz}`.
pub fn two_projector_matrix(size: EnsembleSize, dz: usize, dx: usize) -> Result<DMatrix<f64>> {
    let pz = projector_matrix(&ProjectorSpec::z(size, dz)?)?;
    let px = projector_matrix(&ProjectorSpec::x(size, dx)?)?;
    Ok(px * pz)
}

/// Largest `‖[R, R′]‖_max` over all pairs of Gram matrices.
pub fn verify_commuting_family(size: EnsembleSize) -> Result<f64> {
    let d = size.local_dim();
    let mut rs = Vec::with_capacity(d * d);
    for dz in 0..d {
        for dx in 0..d {
            rs.push(gram_matrix(size, dz, dx)?);
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..rs.len() {
        for j in i + 1..rs.len() {
            let c = &rs[i] * &rs[j] - &rs[j] * &rs[i];
            worst = worst.max(c.abs().max());
        }
    }
    Ok(worst)
}

/// Per-sector data: rows of `W = 𝒰⊗𝒰` restricted to one z sector, split by
/// x sector (`g[b]` is `|x-sector b| × |z-sector a|`).
struct SectorBlocks {
    idx: Vec<usize>,
    g: Vec<DMatrix<f64>>,
}

fn sector_indices(size: EnsembleSize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); size.local_dim()];
    for i in 0..size.dim() {
        out[size.sector(i)].push(i);
    }
    out
}

fn sector_blocks(size: EnsembleSize, u: &DMatrix<f64>, sectors: &[Vec<usize>], a: usize) -> SectorBlocks {
    let d = size.local_dim();
    let idx = sectors[a].clone();
    let w = |i: usize, m: usize| {
        let (i1, i2) = (i % d, i / d);
        let (m1, m2) = (m % d, m / d);
        u[(i2, m2)] * u[(i1, m1)]
    };
    let g = sectors
        .iter()
        .map(|rows_b| DMatrix::from_fn(rows_b.len(), idx.len(), |r, c| w(idx[c], rows_b[r])))
        .collect();
    SectorBlocks { idx, g }
}

fn sym_eigen_sorted(h: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap_or(Ordering::Equal));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(eig.eigenvectors.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

/// Orthonormal basis of `range(q)` from Gram–Schmidt of `q qᵀ eᵢ`, ascending `i`.
fn canonical_block(q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, m) = q.shape();
    let proj = q * q.transpose();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(m);
    for i in 0..n {
        if basis.len() == m {
            break;
        }
        let mut w: DVector<f64> = proj.column(i).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b, 1.0);
            }
        }
        let nrm = w.norm();
        if nrm > 1e-6 {
            basis.push(w / nrm);
        }
    }
    if basis.len() != m {
        return Err(Error::Structural(format!("degenerate block of size {m} spans only {}", basis.len())));
    }
    Ok(DMatrix::from_columns(&basis))
}

fn is_scalar(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    let mean = m.trace() / n as f64;
    for c in 0..n {
        for r in 0..n {
            let target = if r == c { mean } else { 0.0 };
            if (m[(r, c)] - target).abs() > SCALAR_TOL {
                return false;
            }
        }
    }
    true
}

/// Simultaneously diagonalizes `{qᵀ gᵀ g q}` over the columns of `q`.
fn diagonalize<R: Rng + ?Sized>(g: &[DMatrix<f64>], q: DMatrix<f64>, rng: &mut R, depth: usize) -> Result<DMatrix<f64>> {
    let m = q.ncols();
    if m == 1 {
        return Ok(q);
    }
    if depth > MAX_DEPTH {
        return Err(Error::Structural("joint diagonalization did not split a cluster".into()));
    }
    let restricted: Vec<DMatrix<f64>> = g
        .iter()
        .map(|gb| {
            let gq = gb * &q;
            gq.tr_mul(&gq)
        })
        .collect();
    if restricted.iter().all(is_scalar) {
        return canonical_block(&q);
    }
    let mut h = DMatrix::zeros(m, m);
    for r in &restricted {
        h += r * rng.random_range(1.0..2.0);
    }
    let (vals, vecs) = sym_eigen_sorted(h);
    let rotated = &q * vecs;
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut start = 0;
    for end in 1..=m {
        if end == m || vals[end] - vals[end - 1] > CLUSTER_TOL {
            let block = rotated.columns(start, end - start).into_owned();
            let sub = diagonalize(g, block, rng, depth + 1)?;
            cols.extend(sub.column_iter().map(|c| c.into_owned()));
            start = end;
        }
    }
    Ok(DMatrix::from_columns(&cols))
}

fn off_diagonal_residual(g: &[DMatrix<f64>], e: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for gb in g {
        let ge = gb * e;
        let m = ge.tr_mul(&ge);
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if r != c {
                    worst = worst.max(m[(r, c)].abs());
                }
            }
        }
    }
    worst
}

fn fix_sign(col: &mut [f64]) -> bool {
    if let Some(first) = col.iter().find(|x| x.abs() > SIGN_EPS) {
        if *first < 0.0 {
            col.iter_mut().for_each(|x| *x = -*x);
            return true;
        }
    }
    false
}

/// Descending lexicographic comparison of `σ²` profiles with tolerance.
fn profile_order(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if (x - y).abs() > 1e-9 {
            return y.partial_cmp(x).unwrap_or(Ordering::Equal);
        }
    }
    Ordering::Equal
}

struct VColumn {
    sector: usize,
    /// Coefficients over the sector's indices.
    local: DVector<f64>,
    /// `σ²` toward each x sector.
    profile: Vec<f64>,
}

fn sector_v_columns<R: Rng + ?Sized>(blocks: &SectorBlocks, a: usize, rng: &mut R) -> Result<Vec<VColumn>> {
    let n = blocks.idx.len();
    let mut last = f64::NAN;
    for _ in 0..MAX_RETRIES {
        let e = diagonalize(&blocks.g, DMatrix::identity(n, n), rng, 0)?;
        let resid = off_diagonal_residual(&blocks.g, &e);
        last = resid;
        if resid >= EPS_DIAG {
            continue;
        }
        let mut cols: Vec<VColumn> = e
            .column_iter()
            .map(|c| {
                let mut local: DVector<f64> = c.into_owned();
                fix_sign(local.as_mut_slice());
                let profile = blocks.g.iter().map(|gb| (gb * &local).norm_squared()).collect();
                VColumn { sector: a, local, profile }
            })
            .collect();
        cols.sort_by(|x, y| profile_order(&x.profile, &y.profile));
        return Ok(cols);
    }
    Err(Error::Structural(format!(
        "z sector {a}: joint diagonalization residual {last:.3e} after {MAX_RETRIES} attempts"
    )))
}

/// Applies `W = u ⊗ u` (or `Wᵀ`) to a real vector, mode-wise.
fn apply_w(u: &DMatrix<f64>, x: &[f64], transpose: bool) -> Vec<f64> {
    let d = u.nrows();
    let xm = DMatrix::from_row_slice(d, d, x);
    let y = if transpose { u.transpose() * xm * u } else { u * xm * u.transpose() };
    let mut out = Vec::with_capacity(d * d);
    for r in 0..d {
        for c in 0..d {
            out.push(y[(r, c)]);
        }
    }
    out
}

struct Candidate {
    dz: usize,
    dx: usize,
    vcol: usize,
    /// `mask_Δx(Wᵀ v)` in x-sector-local coordinates.
    z: DVector<f64>,
    sigma: f64,
}

/// Builds `U`, `V` and every `Λ` for ensembles of size `size`.
pub fn compute_joint_svd<R: Rng + ?Sized>(size: EnsembleSize, rng: &mut R) -> Result<JointSvd> {
    compute_joint_svd_with_eps(size, EPS_LAMBDA, rng)
}

pub fn compute_joint_svd_with_eps<R: Rng + ?Sized>(size: EnsembleSize, eps: f64, rng: &mut R) -> Result<JointSvd> {
    if size.n() > JSVD_LIMIT {
        return Err(Error::DenseLimit { n: size.n(), limit: JSVD_LIMIT });
    }
    let d = size.local_dim();
    let dim = size.dim();
    let u1 = rotation_matrix_real(size, FRAC_PI_2);
    let sectors = sector_indices(size);

    // V, sector by sector
    let mut blocks = Vec::with_capacity(d);
    let mut vcols: Vec<VColumn> = Vec::with_capacity(dim);
    for a in 0..d {
        let b = sector_blocks(size, &u1, &sectors, a);
        vcols.extend(sector_v_columns(&b, a, rng)?);
        blocks.push(b);
    }
    let mut v = DMatrix::zeros(dim, dim);
    for (j, col) in vcols.iter().enumerate() {
        for (l, &gi) in blocks[col.sector].idx.iter().enumerate() {
            v[(gi, j)] = col.local[l];
        }
    }

    // candidate images T v, grouped per x sector
    let mut cands: Vec<Candidate> = Vec::new();
    for dz in 0..d {
        for dx in 0..d {
            for (j, col) in vcols.iter().enumerate() {
                if col.sector != dz {
                    continue;
                }
                let z = &blocks[dz].g[dx] * &col.local;
                let sigma = z.norm();
                if sigma > eps {
                    cands.push(Candidate { dz, dx, vcol: j, z, sigma });
                }
            }
        }
    }

    // representatives per x sector, largest σ first
    let mut reps: Vec<Vec<DVector<f64>>> = vec![Vec::new(); d];
    let mut group = vec![(0usize, 0usize); cands.len()];
    let mut by_sigma: Vec<usize> = (0..cands.len()).collect();
    by_sigma.sort_by(|&a, &b| cands[b].sigma.partial_cmp(&cands[a].sigma).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    for &ci in &by_sigma {
        let c = &cands[ci];
        let sector_reps = &mut reps[c.dx];
        let mut found = None;
        for (ri, r) in sector_reps.iter().enumerate() {
            let ov = r.dot(&c.z);
            if ov.abs() > eps {
                let resid = (&c.z - r * ov).norm();
                if resid > 1e-9 {
                    return Err(Error::Structural(format!(
                        "image of V column {} under T({},{}) is not aligned with a single U column (residual {resid:.2e})",
                        c.vcol, c.dz, c.dx
                    )));
                }
                found = Some(ri);
                break;
            }
        }
        let ri = match found {
            Some(ri) => ri,
            None => {
                sector_reps.push(&c.z / c.sigma);
                sector_reps.len() - 1
            }
        };
        group[ci] = (c.dx, ri);
    }

    // number U columns by first appearance in (Δz, Δx, V column) order
    let mut numbering: Vec<Vec<usize>> = reps.iter().map(|r| vec![usize::MAX; r.len()]).collect();
    let mut next = 0;
    for &(dx, ri) in &group {
        if numbering[dx][ri] == usize::MAX {
            numbering[dx][ri] = next;
            next += 1;
        }
    }
    if next != dim {
        return Err(Error::Structural(format!("found {next} U columns, expected {dim}")));
    }

    let mut u = DMatrix::zeros(dim, dim);
    for dx in 0..d {
        for ri in 0..reps[dx].len() {
            let mut frame = vec![0.0; dim];
            for (l, &gi) in sectors[dx].iter().enumerate() {
                frame[gi] = reps[dx][ri][l];
            }
            let mut col = apply_w(&u1, &frame, false);
            if fix_sign(&mut col) {
                reps[dx][ri] *= -1.0;
            }
            u.set_column(numbering[dx][ri], &DVector::from_vec(col));
        }
    }

    let mut triples: Vec<Vec<(u32, u32, f64)>> = vec![Vec::new(); d * d];
    for (ci, c) in cands.iter().enumerate() {
        let (dx, ri) = group[ci];
        let amp = reps[dx][ri].dot(&c.z);
        if amp.abs() > eps {
            triples[c.dz * d + c.dx].push((numbering[dx][ri] as u32, c.vcol as u32, amp));
        }
    }
    for t in &mut triples {
        t.sort_by_key(|e| e.1);
    }
    JointSvd::from_parts(size, u, v, &triples, eps)
}

/// Largest `‖U Λ Vᵀ − T‖_max` over all `(Δz, Δx)`.
pub fn reconstruction_error(jsvd: &JointSvd) -> Result<f64> {
    let size = jsvd.size();
    if size.n() > DENSE_LIMIT {
        return Err(Error::DenseLimit { n: size.n(), limit: DENSE_LIMIT });
    }
    let d = size.local_dim();
    let mut worst: f64 = 0.0;
    for dz in 0..d {
        for dx in 0..d {
            let t = two_projector_matrix(size, dz, dx)?;
            worst = worst.max((jsvd.reconstruct(dz, dx) - t).abs().max());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use alloc::collections::BTreeSet;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn size(n: usize) -> EnsembleSize {
        EnsembleSize::new(n).unwrap()
    }

    fn jsvd(n: usize) -> JointSvd {
        compute_joint_svd(size(n), &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    }

    #[test]
    fn two_projector_products_match_fixtures() {
        let sz = size(2);
        assert!((two_projector_matrix(sz, 0, 0).unwrap() - reference::t00()).abs().max() < 1e-12);
        assert!((two_projector_matrix(sz, 2, 2).unwrap() - reference::t22()).abs().max() < 1e-12);
        let t = reference::t00();
        assert!((gram_matrix(sz, 0, 0).unwrap() - t.transpose() * &t).abs().max() < 1e-12);
    }

    #[test]
    fn lambda_fixture_structure() {
        let j = jsvd(2);
        let l00: Vec<_> = j.factor(0, 0).triples().iter().map(|&(r, c, a)| (r, c, a.abs())).collect();
        assert_eq!(l00.len(), 2);
        assert_eq!((l00[0].0, l00[0].1), (0, 0));
        assert!((l00[0].2 - 1.0).abs() < 1e-12);
        assert_eq!((l00[1].0, l00[1].1), (1, 1));
        assert!((l00[1].2 - 0.5).abs() < 1e-12);
        let l22 = j.factor(2, 2).triples();
        assert_eq!(l22.len(), 1);
        assert_eq!((l22[0].0, l22[0].1), (3, 7));
        assert!((l22[0].2.abs() - 0.5).abs() < 1e-12);
        assert!(reconstruction_error(&j).unwrap() < 1e-12);
        let r = j.reconstruct(0, 0);
        assert!((r[(0, 0)] - 3.0 / 8.0).abs() < 1e-12);
        assert!((r[(4, 4)] - 0.5).abs() < 1e-12);
        assert!((r[(2, 0)] + 1.0 / 8.0).abs() < 1e-12);
    }

    #[test]
    fn u_and_v_match_fixtures_up_to_signed_permutation() {
        let j = jsvd(2);
        assert_eq!(reference::abs_columns(j.u()), reference::abs_columns(&reference::u_n2()));
        assert_eq!(reference::abs_columns(j.v()), reference::abs_columns(&reference::v_n2()));
        // fixtures are themselves a valid decomposition
        let uf = reference::u_n2();
        let vf = reference::v_n2();
        assert!((uf.tr_mul(&uf) - DMatrix::<f64>::identity(9, 9)).abs().max() < 1e-12);
        assert!((vf.tr_mul(&vf) - DMatrix::<f64>::identity(9, 9)).abs().max() < 1e-12);
    }

    #[test]
    fn permutation_examples() {
        let j = jsvd(2);
        let l00 = j.factor(0, 0);
        let (k, a) = l00.permute_forward(0).unwrap();
        assert_eq!(k, 0);
        assert!((a.abs() - 1.0).abs() < 1e-12);
        let l22 = j.factor(2, 2);
        let (k, a) = l22.permute_forward(7).unwrap();
        assert_eq!(k, 3);
        assert!((a.abs() - 0.5).abs() < 1e-12);
        assert_eq!(l22.permute_forward(0), None);
        assert_eq!(l22.permute_inverse(3).unwrap().0, 7);
        assert_eq!(l00.permute_inverse(0).unwrap().0, 0);
        assert_eq!(l22.permute_inverse(0), None);
    }

    #[test]
    fn factors_reconstruct_all_products() {
        for n in 1..=6 {
            let j = jsvd(n);
            assert!(j.orthogonality_error() < 1e-12, "n={n}");
            assert!(reconstruction_error(&j).unwrap() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn rank_matches_gram_eigenvalue_count() {
        for n in [2, 3, 4] {
            let j = jsvd(n);
            for dz in 0..=n {
                for dx in 0..=n {
                    let ev = gram_matrix(size(n), dz, dx).unwrap().symmetric_eigen().eigenvalues;
                    let rank = ev.iter().filter(|&&e| e > 1e-9).count();
                    assert_eq!(j.factor(dz, dx).nnz(), rank, "n={n} ({dz},{dx})");
                    let tr: f64 = ev.iter().sum();
                    let s2: f64 = j.factor(dz, dx).triples().iter().map(|t| t.2 * t.2).sum();
                    assert!((tr - s2).abs() < 1e-10);
                    for (_, _, a) in j.factor(dz, dx).triples() {
                        assert!(a.abs() > 0.0 && a.abs() <= 1.0 + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn commuting_family() {
        assert!(verify_commuting_family(size(2)).unwrap() < 1e-12);
        for n in 1..=6 {
            assert!(verify_commuting_family(size(n)).unwrap() < 1e-11, "n={n}");
        }
        let a = gram_matrix(size(3), 1, 2).unwrap();
        let b = gram_matrix(size(3), 2, 2).unwrap();
        assert_eq!((&a * &b).abs().max(), 0.0);
    }

    #[test]
    fn gram_matrix_spectrum_in_unit_interval() {
        for (dz, dx) in [(0, 0), (1, 2), (3, 3)] {
            let g = gram_matrix(size(3), dz, dx).unwrap();
            assert!((&g - g.transpose()).abs().max() < 1e-13);
            for e in g.symmetric_eigen().eigenvalues.iter() {
                assert!(*e > -1e-12 && *e < 1.0 + 1e-12);
            }
        }
        assert!(gram_matrix(size(13), 0, 0).is_err());
    }

    #[test]
    fn inverse_map_matches_dense_transpose() {
        for n in 1..=3 {
            let j = jsvd(n);
            let dim = size(n).dim();
            for f in j.factors() {
                let dense_t = f.to_dense().transpose();
                for k in 0..dim {
                    let mut e = DVector::zeros(dim);
                    e[k] = 1.0;
                    let expect = &dense_t * e;
                    let mut got = DVector::zeros(dim);
                    if let Some((c, a)) = f.permute_inverse(k) {
                        got[c] = a;
                    }
                    assert!((expect - got).abs().max() < 1e-15);
                }
                let image: BTreeSet<usize> = (0..dim).filter_map(|k| f.permute_forward(k).map(|x| x.0)).collect();
                let domain: BTreeSet<usize> = (0..dim).filter(|&k| f.permute_inverse(k).is_some()).collect();
                assert_eq!(image, domain);
            }
        }
    }

    #[test]
    fn triples_round_trip_and_validation() {
        let j = jsvd(3);
        let triples: Vec<_> = j.factors().iter().map(|f| f.triples()).collect();
        let again = JointSvd::from_parts(size(3), j.u().clone(), j.v().clone(), &triples, EPS_LAMBDA).unwrap();
        assert_eq!(again, j);
        assert!(LambdaFactor::from_triples(4, &[(0, 1, 0.5), (0, 2, 0.5)], EPS_LAMBDA).is_err());
        assert!(LambdaFactor::from_triples(4, &[(0, 1, 0.5), (2, 1, 0.5)], EPS_LAMBDA).is_err());
        assert!(LambdaFactor::from_triples(4, &[(0, 1, 1e-12)], EPS_LAMBDA).is_err());
        assert!(LambdaFactor::from_triples(4, &[(0, 1, 1.5)], EPS_LAMBDA).is_err());
    }

    #[test]
    fn v_columns_live_in_single_sectors() {
        let n = 4;
        let j = jsvd(n);
        let sz = size(n);
        for c in 0..sz.dim() {
            for i in 0..sz.dim() {
                if sz.sector(i) != j.v_sector(c) {
                    assert_eq!(j.v()[(i, c)], 0.0);
                }
            }
        }
        let mut prev = 0;
        for c in 0..sz.dim() {
            assert!(j.v_sector(c) >= prev);
            prev = j.v_sector(c);
        }
    }

    #[test]
    fn basis_conversion_round_trip() {
        let j = jsvd(3);
        let st = crate::ensemble::spin_coherent_pair(size(3), 0.8, 0.3);
        let v = j.to_vbasis(&st).unwrap();
        assert_eq!(v.basis(), Basis::V);
        assert!(j.to_z(&v).unwrap().max_abs_diff(&st) < 1e-12);
        let u = j.from_z(&st, Basis::U).unwrap();
        assert!(j.to_vbasis(&u).unwrap().max_abs_diff(&v) < 1e-12);
    }

    #[test]
    fn limit_is_enforced() {
        let r = compute_joint_svd(size(34), &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::DenseLimit { n: 34, limit: 33 })));
    }

    #[test]
    #[ignore = "slow; run with --ignored"]
    fn builds_at_figure_scale() {
        for n in [20, 30] {
            let j = jsvd(n);
            assert!(j.orthogonality_error() < 1e-10, "n={n}");
            let smallest = j.factors().iter().flat_map(|f| f.triples()).map(|t| t.2.abs()).fold(1.0, f64::min);
            assert!((smallest - libm::pow(2.0, -(n as f64 - 1.0))).abs() < 1e-6 * smallest, "{smallest}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn decomposition_is_seed_invariant(n in 1usize..=5, seed in 0u64..1_000_000) {
            let a = jsvd(n);
            let b = compute_joint_svd(size(n), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(reconstruction_error(&b).unwrap() < 1e-10);
            prop_assert!((a.u() - b.u()).abs().max() < 1e-8);
            prop_assert!((a.v() - b.v()).abs().max() < 1e-8);
            for (fa, fb) in a.factors().iter().zip(b.factors()) {
                let (ta, tb) = (fa.triples(), fb.triples());
                prop_assert_eq!(ta.len(), tb.len());
                for (x, y) in ta.iter().zip(&tb) {
                    prop_assert_eq!((x.0, x.1), (y.0, y.1));
                    prop_assert!((x.2 - y.2).abs() < 1e-8);
                }
            }
        }
    }
}
