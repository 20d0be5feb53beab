//! Reference engine for stroboscopic projection sequences: alternating
//! z/x projections applied one after another on the full state vector.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::ensemble::{rotation_matrix, Basis, EnsembleSize, SpinAxis, TwoEnsembleState};
use crate::error::{domain, Error, Result};
use crate::povm::{delta_from_outcome, povm_apply, DeltaEstimate, OutcomeTable, PhotonOutcome, PovmParams};
use crate::projectors::{check_delta, mask_in_place, projector_matrix, Frame, ProjectorBasis, ProjectorSpec};

/// Conditional probabilities below this are dropped from the sampling support.
pub const MIN_BRANCH_PROB: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Z,
    X,
}

impl Axis {
    /// Basis of the `i`-th projection (0-based) of a sequence.
    pub fn of_step(i: usize) -> Self {
        if i % 2 == 0 {
            Axis::Z
        } else {
            Axis::X
        }
    }

    pub fn projector_basis(self) -> ProjectorBasis {
        match self {
            Axis::Z => ProjectorBasis::Z,
            Axis::X => ProjectorBasis::X,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::Z => "z",
            Axis::X => "x",
        }
    }
}

/// Chronological list of projection outcomes, alternating z, x, z, ...
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OutcomeSequence {
    size: EnsembleSize,
    entries: Vec<(Axis, usize)>,
}

impl OutcomeSequence {
    pub fn new(size: EnsembleSize, entries: Vec<(Axis, usize)>) -> Result<Self> {
        for (i, &(axis, delta)) in entries.iter().enumerate() {
            if axis != Axis::of_step(i) {
                return Err(Error::Contract(format!(
                    "projection {i} is in the {} basis; sequences alternate z, x, ... starting with z",
                    axis.label()
                )));
            }
            check_delta(size, delta)?;
        }
        Ok(Self { size, entries })
    }

    /// Offsets in chronological order; bases are assigned z, x, z, ...
    pub fn from_deltas(size: EnsembleSize, deltas: &[usize]) -> Result<Self> {
        Self::new(size, deltas.iter().enumerate().map(|(i, &d)| (Axis::of_step(i), d)).collect())
    }

    pub fn all_zero(size: EnsembleSize, len: usize) -> Self {
        Self { size, entries: (0..len).map(|i| (Axis::of_step(i), 0)).collect() }
    }

    pub fn empty(size: EnsembleSize) -> Self {
        Self { size, entries: Vec::new() }
    }

    #[inline]
    pub fn size(&self) -> EnsembleSize {
        self.size
    }

    #[inline]
    pub fn entries(&self) -> &[(Axis, usize)] {
        &self.entries
    }

    pub fn deltas(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.1).collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True for `2L + 1` projections (ending in z).
    #[inline]
    pub fn is_odd(&self) -> bool {
        self.entries.len() % 2 == 1
    }

    /// `L`, with `len = 2L` or `2L + 1`.
    #[inline]
    pub fn rounds(&self) -> usize {
        self.entries.len() / 2
    }

    pub fn push(&mut self, delta: usize) -> Result<()> {
        check_delta(self.size, delta)?;
        self.entries.push((Axis::of_step(self.entries.len()), delta));
        Ok(())
    }
}

/// Every sequence of `len` projections, in lexicographic order of offsets.
pub fn enumerate_sequences(size: EnsembleSize, len: usize) -> Vec<OutcomeSequence> {
    let base = size.local_dim();
    let count = base.pow(len as u32);
    (0..count)
        .map(|mut c| {
            let mut deltas = vec![0; len];
            for slot in deltas.iter_mut().rev() {
                *slot = c % base;
                c /= base;
            }
            OutcomeSequence::from_deltas(size, &deltas).expect("offsets in range")
        })
        .collect()
}

fn require_z(state: &TwoEnsembleState) -> Result<()> {
    if state.basis() != Basis::Z {
        return Err(Error::BasisMismatch { expected: Basis::Z, found: state.basis() });
    }
    Ok(())
}

fn check_size(state: &TwoEnsembleState, seq: &OutcomeSequence) -> Result<()> {
    if state.size() != seq.size() {
        return Err(domain(format!("sequence for N={} applied to N={} state", seq.size().n(), state.size().n())));
    }
    Ok(())
}

/// `T_Δ⃗ |ψ⟩`, unnormalized, in the z basis.
pub fn apply_sequence(state: &TwoEnsembleState, seq: &OutcomeSequence) -> Result<TwoEnsembleState> {
    require_z(state)?;
    check_size(state, seq)?;
    let size = state.size();
    let x_frame = Frame::new(size, ProjectorBasis::X);
    let mut cur = state.clone();
    for &(axis, delta) in seq.entries() {
        cur = match axis {
            Axis::Z => Frame::Identity.project(&cur, delta),
            Axis::X => x_frame.project(&cur, delta),
        };
    }
    Ok(cur)
}

/// `‖T_Δ⃗ ψ‖² / ‖ψ‖²`.
pub fn sequence_probability(state: &TwoEnsembleState, seq: &OutcomeSequence) -> Result<f64> {
    if !(state.norm_sq() > 0.0) {
        return Err(domain("sequence probability of a zero-norm state"));
    }
    Ok(apply_sequence(state, seq)?.norm_sq() / state.norm_sq())
}

/// Dense `T_Δ⃗ = P_last ⋯ P_first`.
pub fn dense_sequence_operator(seq: &OutcomeSequence) -> Result<DMatrix<f64>> {
    let size = seq.size();
    let d = size.dim();
    let mut t = DMatrix::identity(d, d);
    for &(axis, delta) in seq.entries() {
        let p = projector_matrix(&ProjectorSpec::new(size, delta, axis.projector_basis())?)?;
        t = p * t;
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub sequence: OutcomeSequence,
    /// Normalized state after each projection.
    pub step_states: Vec<TwoEnsembleState>,
    /// Conditional probability of each drawn outcome.
    pub step_probs: Vec<f64>,
    pub joint_prob: f64,
}

impl TrajectoryRecord {
    pub fn final_state(&self) -> Option<&TwoEnsembleState> {
        self.step_states.last()
    }
}

/// Picks an index from unnormalized weights, ignoring those whose share is
/// below [`MIN_BRANCH_PROB`]. Returns the index and its conditional probability.
pub(crate) fn draw_branch<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<(usize, f64)> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(domain("no branch carries probability"));
    }
    let support: f64 = weights.iter().filter(|&&w| w / total >= MIN_BRANCH_PROB).sum();
    let u = rng.random::<f64>() * support;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in weights.iter().enumerate() {
        if w / total < MIN_BRANCH_PROB {
            continue;
        }
        acc += w;
        last = Some(i);
        if u < acc {
            return Ok((i, w / total));
        }
    }
    let i = last.expect("support is nonempty");
    Ok((i, weights[i] / total))
}

/// Splits a state into its `|k1 − k2|` sector weights.
fn sector_weights(size: EnsembleSize, amps: &[Complex64]) -> Vec<f64> {
    let mut w = vec![0.0; size.local_dim()];
    for (i, a) in amps.iter().enumerate() {
        w[size.sector(i)] += a.norm_sqr();
    }
    w
}

/// Samples `total_projections` alternating z/x projective outcomes from
/// their conditional distributions, renormalizing after each step.
pub fn sample_trajectory<R: Rng + ?Sized>(
    state: &TwoEnsembleState,
    total_projections: usize,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    require_z(state)?;
    let size = state.size();
    let u = crate::ensemble::rotation_matrix_real(size, core::f64::consts::FRAC_PI_2);
    let ut = u.transpose();
    let mut cur = state.normalized()?;
    let mut seq = OutcomeSequence::empty(size);
    let mut step_states = Vec::with_capacity(total_projections);
    let mut step_probs = Vec::with_capacity(total_projections);
    for step in 0..total_projections {
        let axis = Axis::of_step(step);
        let framed = match axis {
            Axis::Z => cur.clone(),
            Axis::X => cur.apply_local_real(&ut),
        };
        let mut amps = framed.into_amplitudes();
        let weights = sector_weights(size, &amps);
        let (delta, p) = draw_branch(&weights, rng)?;
        mask_in_place(size, &mut amps, delta);
        let mut next = TwoEnsembleState::from_amplitudes(size, Basis::Z, amps)?;
        if axis == Axis::X {
            next = next.apply_local_real(&u);
        }
        cur = next.normalized()?;
        seq.push(delta)?;
        step_states.push(cur.clone());
        step_probs.push(p);
    }
    let joint_prob = step_probs.iter().product();
    Ok(TrajectoryRecord { sequence: seq, step_states, step_probs, joint_prob })
}

/// One step of a finite-`α` trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmStep {
    pub axis: Axis,
    pub outcome: PhotonOutcome,
    /// `None` when no photons were detected.
    pub estimate: Option<DeltaEstimate>,
    pub cond_prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PovmTrajectory {
    pub steps: Vec<PovmStep>,
    /// Normalized state after each step.
    pub step_states: Vec<TwoEnsembleState>,
    pub final_state: TwoEnsembleState,
}

/// Alternating z/x photon-counting measurements at finite `α`, each outcome
/// drawn from the exact truncated distribution.
pub fn sample_povm_trajectory<R: Rng + ?Sized>(
    state: &TwoEnsembleState,
    steps: usize,
    params: &PovmParams,
    rng: &mut R,
) -> Result<PovmTrajectory> {
    require_z(state)?;
    let size = state.size();
    let u = crate::ensemble::rotation_matrix_real(size, core::f64::consts::FRAC_PI_2);
    let ut = u.transpose();
    let mut cur = state.normalized()?;
    let mut out = Vec::with_capacity(steps);
    let mut step_states = Vec::with_capacity(steps);
    for step in 0..steps {
        let axis = Axis::of_step(step);
        let framed = match axis {
            Axis::Z => cur.clone(),
            Axis::X => cur.apply_local_real(&ut),
        };
        let table = OutcomeTable::build(&framed, params)?;
        let outcome = table.sample(rng);
        let mut next = povm_apply(&framed, outcome, params)?;
        let cond_prob = next.norm_sq();
        if axis == Axis::X {
            next = next.apply_local_real(&u);
        }
        cur = next.normalized()?;
        let estimate = if outcome.total() > 0 { Some(delta_from_outcome(outcome, params.tau())?) } else { None };
        out.push(PovmStep { axis, outcome, estimate, cond_prob });
        step_states.push(cur.clone());
    }
    Ok(PovmTrajectory { steps: out, step_states, final_state: cur })
}

/// `p(k1, k2) = |⟨k1⁽ˡ¹⁾, k2⁽ˡ²⁾|ψ⟩|² / ‖ψ‖²`, rows indexed by `k1`.
pub fn basis_probabilities(state: &TwoEnsembleState, axis1: SpinAxis, axis2: SpinAxis) -> Result<DMatrix<f64>> {
    require_z(state)?;
    if !(state.norm_sq() > 0.0) {
        return Err(domain("basis probabilities of a zero-norm state"));
    }
    let size = state.size();
    let (t1, p1) = axis1.angles();
    let (t2, p2) = axis2.angles();
    let u1 = rotation_matrix(size, t1, p1).adjoint();
    let u2 = rotation_matrix(size, t2, p2).adjoint();
    let rotated = state.apply_local(&u1, &u2);
    let d = size.local_dim();
    let inv = 1.0 / state.norm_sq();
    Ok(DMatrix::from_fn(d, d, |k1, k2| rotated.amplitude(k1, k2).norm_sqr() * inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{binomial, entanglement_entropy, epr_state, fidelity_to, fock_state, xx_polarized};
    use crate::projectors::apply_projector;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn size(n: usize) -> EnsembleSize {
        EnsembleSize::new(n).unwrap()
    }

    fn random_state(sz: EnsembleSize, rng: &mut ChaCha8Rng) -> TwoEnsembleState {
        let mut r = || <ChaCha8Rng as rand::Rng>::random::<f64>(rng) - 0.5;
        let amps = (0..sz.dim()).map(|_| Complex64::new(r(), r())).collect();
        TwoEnsembleState::from_amplitudes(sz, Basis::Z, amps).unwrap().normalized().unwrap()
    }

    #[test]
    fn sequence_validation() {
        let sz = size(3);
        assert!(OutcomeSequence::new(sz, vec![(Axis::X, 0)]).is_err());
        assert!(matches!(
            OutcomeSequence::new(sz, vec![(Axis::Z, 0), (Axis::Z, 1)]),
            Err(Error::Contract(_))
        ));
        assert!(OutcomeSequence::from_deltas(sz, &[0, 4]).is_err());
        let s = OutcomeSequence::from_deltas(sz, &[1, 2, 3]).unwrap();
        assert!(s.is_odd());
        assert_eq!(s.rounds(), 1);
        assert_eq!(enumerate_sequences(sz, 2).len(), 16);
    }

    #[test]
    fn empty_and_single_sequences() {
        let sz = size(4);
        let st = xx_polarized(sz);
        assert_eq!(apply_sequence(&st, &OutcomeSequence::empty(sz)).unwrap(), st);
        let one = apply_sequence(&st, &OutcomeSequence::from_deltas(sz, &[0]).unwrap()).unwrap();
        let direct = apply_projector(&st, &ProjectorSpec::z(sz, 0).unwrap()).unwrap();
        assert!(one.max_abs_diff(&direct) < 1e-15);
        let p = sequence_probability(&xx_polarized(size(2)), &OutcomeSequence::from_deltas(size(2), &[0]).unwrap())
            .unwrap();
        assert!((p - 0.375).abs() < 1e-14);
    }

    #[test]
    fn sequence_probabilities_sum_to_one() {
        let sz = size(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for st in [xx_polarized(sz), random_state(sz, &mut rng)] {
            for len in 1..=3 {
                let total: f64 = enumerate_sequences(sz, len).iter().map(|s| sequence_probability(&st, s).unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-10, "len {len}: {total}");
            }
        }
    }

    #[test]
    fn dense_operator_completeness_and_agreement() {
        for n in 1..=3 {
            let sz = size(n);
            let d = sz.dim();
            for len in 1..=3 {
                let mut sum = DMatrix::zeros(d, d);
                for s in enumerate_sequences(sz, len) {
                    let t = dense_sequence_operator(&s).unwrap();
                    sum += t.transpose() * &t;
                }
                assert!((sum - DMatrix::identity(d, d)).abs().max() < 1e-10);
            }
        }
        let sz = size(3);
        let st = xx_polarized(sz);
        let s = OutcomeSequence::from_deltas(sz, &[1, 2, 1]).unwrap();
        let dense = dense_sequence_operator(&s).unwrap().map(|x| Complex64::new(x, 0.0))
            * nalgebra::DVector::from_column_slice(st.amplitudes());
        let got = apply_sequence(&st, &s).unwrap();
        for (a, b) in got.amplitudes().iter().zip(dense.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn sequence_operator_is_not_idempotent() {
        let s = OutcomeSequence::from_deltas(size(2), &[0, 0]).unwrap();
        let t = dense_sequence_operator(&s).unwrap();
        assert!((&t * &t - &t).abs().max() > 0.1);
    }

    #[test]
    fn epr_convergence_of_all_zero_sequence() {
        let sz = size(20);
        let st = xx_polarized(sz);
        let epr = epr_state(sz);
        let emax = libm::log2(21.0);
        let mut prev_e = 0.0;
        let mut fids = Vec::new();
        let mut probs = Vec::new();
        for l in 0..=30 {
            let out = apply_sequence(&st, &OutcomeSequence::all_zero(sz, 2 * l + 1)).unwrap();
            let e = entanglement_entropy(&out).unwrap();
            assert!(e >= prev_e - 1e-9, "L={l}: {e} < {prev_e}");
            prev_e = e;
            fids.push(fidelity_to(&out, &epr).unwrap());
            probs.push(out.norm_sq());
        }
        assert!(fids[6] > 0.99, "{}", fids[6]);
        assert!((prev_e / emax - 1.0).abs() < 0.01);
        assert!((probs[0] - binomial(40, 20) / libm::pow(4.0, 20.0)).abs() < 1e-12);
        // converged probability is the EPR overlap of the initial state
        assert!((probs[30] - 1.0 / 21.0).abs() < 1e-6, "{}", probs[30]);
    }

    #[test]
    fn basis_probability_examples() {
        let n = 4;
        let sz = size(n);
        let epr = epr_state(sz);
        for axis in [SpinAxis::Z, SpinAxis::X] {
            let p = basis_probabilities(&epr, axis, axis).unwrap();
            for k1 in 0..=n {
                for k2 in 0..=n {
                    let e = if k1 == k2 { 1.0 / (n + 1) as f64 } else { 0.0 };
                    assert!((p[(k1, k2)] - e).abs() < 1e-12);
                }
            }
        }
        let p = basis_probabilities(&xx_polarized(sz), SpinAxis::Z, SpinAxis::X).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-12);
        assert!(basis_probabilities(&TwoEnsembleState::zero(sz, Basis::Z), SpinAxis::Z, SpinAxis::Z).is_err());

        // converged all-zero state: correlated in z and x, anticorrelated in y
        let sz = size(10);
        let conv = apply_sequence(&xx_polarized(sz), &OutcomeSequence::all_zero(sz, 21)).unwrap();
        for (axis, anti) in [(SpinAxis::Z, false), (SpinAxis::X, false), (SpinAxis::Y, true)] {
            let p = basis_probabilities(&conv, axis, axis).unwrap();
            for k1 in 0..=10 {
                let row = p.row(k1);
                let argmax = (0..=10).max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
                assert_eq!(argmax, if anti { 10 - k1 } else { k1 }, "{axis:?} row {k1}");
            }
        }
    }

    #[test]
    fn trajectory_from_eigenstate() {
        let sz = size(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let rec = sample_trajectory(&fock_state(sz, 1, 3).unwrap(), 1, &mut rng).unwrap();
            assert_eq!(rec.sequence.deltas(), vec![2]);
            assert!((rec.step_probs[0] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn trajectory_frequencies_match_exhaustive_probabilities() {
        let sz = size(2);
        let st = xx_polarized(sz);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let runs = 10_000;
        let mut counts = alloc::collections::BTreeMap::new();
        for _ in 0..runs {
            let rec = sample_trajectory(&st, 3, &mut rng).unwrap();
            let exact = sequence_probability(&st, &rec.sequence).unwrap();
            assert!((rec.joint_prob - exact).abs() < 1e-10);
            *counts.entry(rec.sequence.deltas()).or_insert(0u32) += 1;
        }
        for s in enumerate_sequences(sz, 3) {
            let p = sequence_probability(&st, &s).unwrap();
            let got = *counts.get(&s.deltas()).unwrap_or(&0) as f64;
            let mean = p * runs as f64;
            let sd = libm::sqrt(mean * (1.0 - p));
            assert!((got - mean).abs() <= 3.0 * sd + 1.0, "{:?}: {got} vs {mean}", s.deltas());
        }
    }

    #[test]
    fn trajectories_are_seed_deterministic() {
        let sz = size(3);
        let st = xx_polarized(sz);
        let a = sample_trajectory(&st, 7, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = sample_trajectory(&st, 7, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn povm_trajectory_in_bright_limit_tracks_projections() {
        let sz = size(4);
        let params = PovmParams::sharp(30.0, sz).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let traj = sample_povm_trajectory(&xx_polarized(sz), 3, &params, &mut rng).unwrap();
        assert_eq!(traj.steps.len(), 3);
        assert!(traj.final_state.is_normalized());
        for s in &traj.steps {
            assert!(s.cond_prob > 0.0 && s.cond_prob <= 1.0);
            assert!(s.estimate.unwrap().residual < 0.5);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn conditional_probabilities_telescope(n in 1usize..=5, steps in 1usize..=7, seed in 0u64..10_000) {
            let sz = size(n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let st = random_state(sz, &mut rng);
            let rec = sample_trajectory(&st, steps, &mut rng).unwrap();
            let exact = sequence_probability(&st, &rec.sequence).unwrap();
            prop_assert!((rec.joint_prob - exact).abs() < 1e-10);
            for s in &rec.step_states {
                prop_assert!(s.is_normalized());
            }
        }
    }
}
