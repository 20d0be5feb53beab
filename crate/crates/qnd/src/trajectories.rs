//! Batches of sampled measurement trajectories, one JSON record each.
//!
//! Trajectory `i` draws from ChaCha8 seeded with the run seed on stream `i`,
//! so records do not depend on the thread count.

use num_complex::Complex64;
use qnd_core::ensemble::{epr_state, xx_polarized, Basis, EnsembleSize, TwoEnsembleState};
use qnd_core::jsvd::JointSvd;
use qnd_core::povm::PovmParams;
use qnd_core::strobe::{sample_povm_trajectory, sample_trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// Stream reserved for drawing random initial states.
pub const STATE_STREAM: u64 = u64::MAX;

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Normalized state with real and imaginary parts uniform in `[-1/2, 1/2)`.
pub fn random_state<R: Rng + ?Sized>(size: EnsembleSize, rng: &mut R) -> Result<TwoEnsembleState> {
    let amps = (0..size.dim())
        .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    Ok(TwoEnsembleState::from_amplitudes(size, Basis::Z, amps)?.normalized()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Initial {
    Xx,
    Random,
    Epr,
}

impl Initial {
    pub fn label(self) -> &'static str {
        match self {
            Initial::Xx => "xx",
            Initial::Random => "random",
            Initial::Epr => "epr",
        }
    }
}

pub fn initial_state(initial: Initial, size: EnsembleSize, seed: u64) -> Result<TwoEnsembleState> {
    match initial {
        Initial::Xx => Ok(xx_polarized(size)),
        Initial::Epr => Ok(epr_state(size)),
        Initial::Random => random_state(size, &mut rng_for(seed, STATE_STREAM)),
    }
}

/// Index and weight of the largest `|amplitude|²` of a state expressed in
/// `V` (odd step count) or `U` (even).
pub fn dominant(jsvd: &JointSvd, state: &TwoEnsembleState, steps: usize) -> Result<(usize, f64)> {
    let target = if steps % 2 == 1 { Basis::V } else { Basis::U };
    let b = jsvd.from_z(state, target)?;
    let norm = b.norm_sq();
    Ok(b.amplitudes().iter().map(|a| a.norm_sqr() / norm).enumerate().fold((0, -1.0), |best, (k, w)| {
        if w > best.1 {
            (k, w)
        } else {
            best
        }
    }))
}

#[derive(Debug, Clone)]
pub struct Batch {
    pub size: EnsembleSize,
    pub initial: Initial,
    pub count: usize,
    pub steps: usize,
    pub seed: u64,
    /// Photon-counting measurements instead of ideal projectors.
    pub finite: Option<PovmParams>,
    pub threads: usize,
}

fn one(batch: &Batch, psi0: &TwoEnsembleState, jsvd: &JointSvd, index: usize) -> Result<Value> {
    let mut rng = rng_for(batch.seed, index as u64);
    let (mut rec, last) = match &batch.finite {
        None => {
            let t = sample_trajectory(psi0, batch.steps, &mut rng)?;
            let last = t.final_state().cloned().unwrap_or_else(|| psi0.clone());
            let v = json!({
                "index": index,
                "deltas": t.sequence.deltas(),
                "stepProbs": t.step_probs,
                "jointProb": t.joint_prob,
            });
            (v, last)
        }
        Some(params) => {
            let t = sample_povm_trajectory(psi0, batch.steps, params, &mut rng)?;
            let outcomes: Vec<[u64; 2]> = t.steps.iter().map(|s| [s.outcome.n_c, s.outcome.n_d]).collect();
            let estimates: Vec<Option<u64>> = t.steps.iter().map(|s| s.estimate.map(|e| e.delta)).collect();
            let probs: Vec<f64> = t.steps.iter().map(|s| s.cond_prob).collect();
            let v = json!({
                "index": index,
                "outcomes": outcomes,
                "deltaEstimates": estimates,
                "stepProbs": probs,
            });
            (v, t.final_state)
        }
    };
    let (k, w) = dominant(jsvd, &last, batch.steps)?;
    rec["dominantIndex"] = json!(k);
    rec["dominantWeight"] = json!(w);
    rec["finalBasis"] = json!(if batch.steps % 2 == 1 { "V" } else { "U" });
    Ok(rec)
}

/// Runs the batch on `threads` workers; records come back in index order.
pub fn run_batch(batch: &Batch, jsvd: &JointSvd) -> Result<Vec<Value>> {
    if jsvd.size() != batch.size {
        return Err(Error::Config("decomposition size differs from batch size".into()));
    }
    let psi0 = initial_state(batch.initial, batch.size, batch.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(batch.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..batch.count).into_par_iter().map(|i| one(batch, &psi0, jsvd, i)).collect())
}

/// JSON-lines text: a header object followed by one record per line.
pub fn render_jsonl(header: Value, records: &[Value]) -> String {
    let mut s = serde_json::to_string(&json!({ "header": header })).expect("header serializes");
    s.push('\n');
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::build;

    fn batch(threads: usize, finite: bool) -> Batch {
        let size = EnsembleSize::new(3).unwrap();
        Batch {
            size,
            initial: Initial::Random,
            count: 12,
            steps: 5,
            seed: 42,
            finite: finite.then(|| PovmParams::sharp(4.0, size).unwrap()),
            threads,
        }
    }

    #[test]
    fn records_do_not_depend_on_thread_count() {
        let j = build(3).unwrap();
        for finite in [false, true] {
            let a = run_batch(&batch(1, finite), &j).unwrap();
            let b = run_batch(&batch(4, finite), &j).unwrap();
            assert_eq!(render_jsonl(json!({}), &a), render_jsonl(json!({}), &b));
            assert_eq!(a.len(), 12);
        }
    }

    #[test]
    fn joint_probability_is_the_product_of_steps() {
        let j = build(3).unwrap();
        for r in run_batch(&batch(2, false), &j).unwrap() {
            let p: f64 = r["stepProbs"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).product();
            assert!((p - r["jointProb"].as_f64().unwrap()).abs() < 1e-15);
            assert_eq!(r["deltas"].as_array().unwrap().len(), 5);
        }
    }

    #[test]
    fn streams_differ_between_trajectories() {
        let a: Vec<f64> = (0..4).map(|i| rng_for(1, i).random()).collect();
        assert!(a.windows(2).all(|w| w[0] != w[1]));
        assert_eq!(rng_for(1, 2).random::<u64>(), rng_for(1, 2).random::<u64>());
    }
}
