//! Fast evaluation of projection sequences by index recursion through the
//! `Λ` partial permutations. Each `V`-basis index follows one path of at
//! most `2L` lookups, so a whole sequence costs `O((N+1)² L)` once the
//! state is expressed in the `V` basis.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::ensemble::{Basis, TwoEnsembleState};
use crate::error::{domain, Result};
use crate::jsvd::JointSvd;
use crate::strobe::OutcomeSequence;

/// One `(z, x)` half-step of a recursion path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    /// Index entering the step.
    pub from: usize,
    /// Index after the step.
    pub to: usize,
    /// Accumulated coefficient after the step.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecursionResult {
    /// `None` when some step hits an unmapped index.
    pub final_index: Option<usize>,
    pub coefficient: f64,
    pub trace: Option<Vec<TraceStep>>,
}

/// Output basis of a sequence: `V` for odd length (and the empty sequence),
/// `U` for even length.
pub fn output_basis(seq: &OutcomeSequence) -> Basis {
    if seq.is_empty() || seq.is_odd() {
        Basis::V
    } else {
        Basis::U
    }
}

fn check(jsvd: &JointSvd, seq: &OutcomeSequence) -> Result<()> {
    if jsvd.size() != seq.size() {
        return Err(domain(format!(
            "sequence for N={} with a decomposition for N={}",
            seq.size().n(),
            jsvd.size().n()
        )));
    }
    Ok(())
}

/// Follows `V`-basis index `k` through `seq`.
pub fn recurse(jsvd: &JointSvd, k: usize, seq: &OutcomeSequence, with_trace: bool) -> Result<RecursionResult> {
    check(jsvd, seq)?;
    if k >= jsvd.size().dim() {
        return Err(domain(format!("index {k} outside the basis")));
    }
    Ok(recurse_unchecked(jsvd, k, &seq.deltas(), with_trace))
}

fn recurse_unchecked(jsvd: &JointSvd, k: usize, deltas: &[usize], with_trace: bool) -> RecursionResult {
    let mut trace = if with_trace { Some(Vec::new()) } else { None };
    let dead = |trace| RecursionResult { final_index: None, coefficient: 0.0, trace };
    match deltas.len() {
        0 => return RecursionResult { final_index: Some(k), coefficient: 1.0, trace },
        1 => {
            return if jsvd.v_sector(k) == deltas[0] {
                RecursionResult { final_index: Some(k), coefficient: 1.0, trace }
            } else {
                dead(trace)
            };
        }
        _ => {}
    }
    let odd = deltas.len() % 2 == 1;
    let pairs = deltas.len() / 2;
    let full_rounds = if odd { pairs } else { pairs - 1 };
    let mut idx = k;
    let mut coef = 1.0;
    let push = |trace: &mut Option<Vec<TraceStep>>, from, to, coefficient| {
        if let Some(t) = trace.as_mut() {
            t.push(TraceStep { from, to, coefficient });
        }
    };
    for l in 0..full_rounds {
        let (z, x, z_next) = (deltas[2 * l], deltas[2 * l + 1], deltas[2 * l + 2]);
        let Some((up, a)) = jsvd.factor(z, x).permute_forward(idx) else {
            return dead(trace);
        };
        coef *= a;
        push(&mut trace, idx, up, coef);
        let Some((down, b)) = jsvd.factor(z_next, x).permute_inverse(up) else {
            return dead(trace);
        };
        coef *= b;
        push(&mut trace, up, down, coef);
        idx = down;
    }
    if !odd {
        let (z, x) = (deltas[2 * pairs - 2], deltas[2 * pairs - 1]);
        let Some((up, a)) = jsvd.factor(z, x).permute_forward(idx) else {
            return dead(trace);
        };
        coef *= a;
        push(&mut trace, idx, up, coef);
        idx = up;
    }
    RecursionResult { final_index: Some(idx), coefficient: coef, trace }
}

/// Final index and coefficient for every `V`-basis index.
pub fn recurse_all(jsvd: &JointSvd, seq: &OutcomeSequence) -> Result<Vec<(Option<usize>, f64)>> {
    check(jsvd, seq)?;
    let deltas = seq.deltas();
    Ok((0..jsvd.size().dim())
        .map(|k| {
            let r = recurse_unchecked(jsvd, k, &deltas, false);
            (r.final_index, r.coefficient)
        })
        .collect())
}

/// Scatters `A(k) φ_k` to `r(k)` for a state already in the `V` basis.
pub fn apply_in_vbasis(jsvd: &JointSvd, phi: &TwoEnsembleState, seq: &OutcomeSequence) -> Result<TwoEnsembleState> {
    if phi.basis() != Basis::V {
        return Err(crate::error::Error::BasisMismatch { expected: Basis::V, found: phi.basis() });
    }
    let map = recurse_all(jsvd, seq)?;
    let mut out = vec![Complex64::new(0.0, 0.0); phi.amplitudes().len()];
    for (k, (dest, coef)) in map.into_iter().enumerate() {
        if let Some(r) = dest {
            out[r] = phi.amplitudes()[k] * coef;
        }
    }
    TwoEnsembleState::from_amplitudes(phi.size(), output_basis(seq), out)
}

/// `T_Δ⃗ |ψ⟩` in the `V` (odd length) or `U` (even length) basis, unnormalized.
pub fn fast_apply_sequence(state: &TwoEnsembleState, seq: &OutcomeSequence, jsvd: &JointSvd) -> Result<TwoEnsembleState> {
    check(jsvd, seq)?;
    let phi = jsvd.to_vbasis(state)?;
    apply_in_vbasis(jsvd, &phi, seq)
}

/// `Σ_k |A(k) φ_k|² / ‖φ‖²`.
pub fn fast_sequence_probability(state: &TwoEnsembleState, seq: &OutcomeSequence, jsvd: &JointSvd) -> Result<f64> {
    if !(state.norm_sq() > 0.0) {
        return Err(domain("sequence probability of a zero-norm state"));
    }
    Ok(fast_apply_sequence(state, seq, jsvd)?.norm_sq() / state.norm_sq())
}
