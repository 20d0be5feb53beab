//! Photon-counting POVM of the Mach–Zehnder QND readout.
//!
//! Every amplitude `ψ_{k1k2}` is multiplied by `C_{nc,nd}[(k1 − k2)τ]`.
//! C-function magnitudes are evaluated in log space so that bright light
//! (`α ~ 50`, photon numbers in the thousands) neither overflows nor
//! underflows before the final exponentiation.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::ensemble::{ln_factorial, Basis, EnsembleSize, TwoEnsembleState};
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhotonOutcome {
    pub n_c: u64,
    pub n_d: u64,
}

impl PhotonOutcome {
    pub fn new(n_c: u64, n_d: u64) -> Self {
        Self { n_c, n_d }
    }

    #[inline]
    pub fn total(self) -> u64 {
        self.n_c + self.n_d
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PovmParams {
    alpha: f64,
    tau: f64,
    n_max: u64,
}

impl PovmParams {
    /// Real coherent amplitude `alpha ≥ 0`, interaction time `tau > 0`,
    /// default photon-number cutoff `⌈α² + 10α + 20⌉`.
    pub fn new(alpha: f64, tau: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(domain(format!("alpha must be finite and nonnegative, got {alpha}")));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(domain(format!("tau must be finite and positive, got {tau}")));
        }
        let n_max = libm::ceil(alpha * alpha + 10.0 * alpha + 20.0) as u64;
        Ok(Self { alpha, tau, n_max })
    }

    /// `τ = π / 2N`, the sharp-projection time.
    pub fn sharp(alpha: f64, size: EnsembleSize) -> Result<Self> {
        Self::new(alpha, sharp_tau(size))
    }

    pub fn with_n_max(mut self, n_max: u64) -> Self {
        self.n_max = n_max;
        self
    }

    #[inline]
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    #[inline]
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Cutoff on `n_c + n_d`.
    #[inline]
    pub fn n_max(&self) -> u64 {
        self.n_max
    }
}

pub fn sharp_tau(size: EnsembleSize) -> f64 {
    PI / (2.0 * size.n() as f64)
}

/// Sign and natural log of `|x|^k`, with `0⁰ = 1`.
fn signed_log_pow(x: f64, k: u64) -> (f64, f64) {
    if k == 0 {
        return (1.0, 0.0);
    }
    if x == 0.0 {
        return (0.0, f64::NEG_INFINITY);
    }
    let sign = if x < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
    (sign, k as f64 * libm::log(x.abs()))
}

fn from_log(sign: f64, log_mag: f64) -> f64 {
    if sign == 0.0 || log_mag == f64::NEG_INFINITY {
        0.0
    } else {
        sign * libm::exp(log_mag)
    }
}

/// `ln(α^n e^{−α²/2})`.
fn log_light(alpha: f64, n: u64) -> f64 {
    let (_, l) = signed_log_pow(alpha, n);
    l - alpha * alpha / 2.0
}

/// `C_{nc,nd}(χ) = α^{nc+nd} e^{−α²/2} cos^{nc}χ sin^{nd}χ / √(nc! nd!)`.
pub fn c_function(n_c: u64, n_d: u64, chi: f64, alpha: f64) -> f64 {
    let (sc, lc) = signed_log_pow(libm::cos(chi), n_c);
    let (ss, ls) = signed_log_pow(libm::sin(chi), n_d);
    let ll = log_light(alpha, n_c + n_d);
    let lf = 0.5 * (ln_factorial(n_c as usize) + ln_factorial(n_d as usize));
    let sign = if alpha == 0.0 && n_c + n_d > 0 { 0.0 } else { sc * ss };
    from_log(sign, ll + lc + ls - lf)
}

/// Bright-light Gaussian form of the C-function, valid for `n_d ≥ 1`.
pub fn c_function_bright(n_c: u64, n_d: u64, chi: f64, alpha: f64) -> Result<f64> {
    if n_d == 0 {
        return Err(domain("bright-light form requires n_d >= 1; use c_function_nd0"));
    }
    let s2 = libm::sin(2.0 * chi);
    let s2sq = s2 * s2;
    if s2.abs() < 1e-12 {
        return Err(Error::SingularInput(format!("sin 2chi = 0 at chi = {chi}")));
    }
    let n = (n_c + n_d) as f64;
    let (sc, _) = signed_log_pow(libm::cos(chi), n_c);
    let (ss, _) = signed_log_pow(libm::sin(chi), n_d);
    let sin_sq = libm::sin(chi) * libm::sin(chi);
    let dev = sin_sq - n_d as f64 / n;
    let log_mag = log_light(alpha, n_c + n_d) - 0.5 * ln_factorial((n_c + n_d) as usize)
        - 0.25 * libm::log(PI / 2.0 * n * s2sq)
        - n / s2sq * dev * dev;
    let sign = if alpha == 0.0 { 0.0 } else { sc * ss };
    Ok(from_log(sign, log_mag))
}

/// Bright-light form for `n_d = 0`: `α^{nc} e^{−α²/2} e^{−nc sin²χ / 2} / √(nc!)`.
pub fn c_function_nd0(n_c: u64, chi: f64, alpha: f64) -> f64 {
    let s = libm::sin(chi);
    let log_mag = log_light(alpha, n_c) - 0.5 * ln_factorial(n_c as usize) - n_c as f64 * s * s / 2.0;
    let sign = if alpha == 0.0 && n_c > 0 { 0.0 } else { 1.0 };
    from_log(sign, log_mag)
}

/// `C_{nc,nd}[Δτ]` for every offset magnitude `Δ = 0..=N`.
fn c_by_offset(size: EnsembleSize, outcome: PhotonOutcome, params: &PovmParams) -> Vec<f64> {
    (0..=size.n())
        .map(|d| c_function(outcome.n_c, outcome.n_d, d as f64 * params.tau, params.alpha))
        .collect()
}

fn require_z(state: &TwoEnsembleState) -> Result<()> {
    if state.basis() != Basis::Z {
        return Err(Error::BasisMismatch { expected: Basis::Z, found: state.basis() });
    }
    Ok(())
}

/// `M_{nc,nd}(τ) |ψ⟩`, applied as a diagonal scaling. Unnormalized.
pub fn povm_apply(state: &TwoEnsembleState, outcome: PhotonOutcome, params: &PovmParams) -> Result<TwoEnsembleState> {
    require_z(state)?;
    let size = state.size();
    let c = c_by_offset(size, outcome, params);
    let n = size.n() as i64;
    let amps = state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let (k1, k2) = size.split(i);
            let signed = k1 as i64 - k2 as i64;
            // C is odd in χ for odd n_d
            let flip = if signed < 0 && outcome.n_d % 2 == 1 { -1.0 } else { 1.0 };
            debug_assert!(signed.abs() <= n);
            a * (flip * c[signed.unsigned_abs() as usize])
        })
        .collect();
    TwoEnsembleState::from_amplitudes(size, Basis::Z, amps)
}

/// Weight of a Z-basis state on each offset magnitude `|k1 − k2|`.
pub fn offset_weights(state: &TwoEnsembleState) -> Result<Vec<f64>> {
    require_z(state)?;
    let size = state.size();
    let mut w = alloc::vec![0.0; size.local_dim()];
    for (i, a) in state.amplitudes().iter().enumerate() {
        w[size.sector(i)] += a.norm_sqr();
    }
    Ok(w)
}

/// `Σ |ψ_{k1k2} C[(k1−k2)τ]|²`.
pub fn outcome_probability(state: &TwoEnsembleState, outcome: PhotonOutcome, params: &PovmParams) -> Result<f64> {
    let w = offset_weights(state)?;
    let c = c_by_offset(state.size(), outcome, params);
    Ok(w.iter().zip(&c).map(|(w, c)| w * c * c).sum())
}

/// Flattened outcome distribution over the truncated grid
/// `n_c + n_d ≤ n_max`, for inverse-CDF sampling.
#[derive(Debug, Clone)]
pub struct OutcomeTable {
    outcomes: Vec<PhotonOutcome>,
    cumulative: Vec<f64>,
    mass: f64,
}

impl OutcomeTable {
    pub fn build(state: &TwoEnsembleState, params: &PovmParams) -> Result<Self> {
        let w = offset_weights(state)?;
        let norm: f64 = w.iter().sum();
        if !(norm > 0.0) {
            return Err(domain("outcome table of a zero-norm state"));
        }
        let chis: Vec<f64> = (0..w.len()).map(|d| d as f64 * params.tau).collect();
        let mut outcomes = Vec::new();
        let mut cumulative = Vec::new();
        let mut acc = 0.0;
        for total in 0..=params.n_max {
            for n_d in 0..=total {
                let n_c = total - n_d;
                let p: f64 = w
                    .iter()
                    .zip(&chis)
                    .filter(|(w, _)| **w > 0.0)
                    .map(|(w, &chi)| {
                        let c = c_function(n_c, n_d, chi, params.alpha);
                        w * c * c
                    })
                    .sum::<f64>()
                    / norm;
                if p > 0.0 {
                    acc += p;
                    outcomes.push(PhotonOutcome::new(n_c, n_d));
                    cumulative.push(acc);
                }
            }
        }
        if acc < 1.0 - 1e-9 {
            return Err(Error::Truncation { n_max: params.n_max, mass: acc });
        }
        Ok(Self { outcomes, cumulative, mass: acc })
    }

    /// Probability mass captured by the truncated grid.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// `(outcome, probability)` pairs with nonzero probability.
    pub fn iter(&self) -> impl Iterator<Item = (PhotonOutcome, f64)> + '_ {
        self.outcomes.iter().zip(&self.cumulative).scan(0.0, |prev, (o, &c)| {
            let p = c - *prev;
            *prev = c;
            Some((*o, p))
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PhotonOutcome {
        let u = rng.random::<f64>() * self.mass;
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.outcomes[idx.min(self.outcomes.len() - 1)]
    }
}

/// Draws one photon outcome from the exact truncated distribution.
pub fn sample_outcome<R: Rng + ?Sized>(
    state: &TwoEnsembleState,
    params: &PovmParams,
    rng: &mut R,
) -> Result<PhotonOutcome> {
    Ok(OutcomeTable::build(state, params)?.sample(rng))
}

/// Offset inferred from a photon outcome via the Gaussian peak condition
/// `sin²(Δτ) = n_d / (n_c + n_d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaEstimate {
    /// Nearest-integer magnitude.
    pub delta: u64,
    /// Unrounded magnitude.
    pub raw: f64,
    /// `|raw − delta|`.
    pub residual: f64,
}

impl DeltaEstimate {
    /// `(+Δ, −Δ)`.
    pub fn candidates(&self) -> (i64, i64) {
        (self.delta as i64, -(self.delta as i64))
    }
}

pub fn delta_from_outcome(outcome: PhotonOutcome, tau: f64) -> Result<DeltaEstimate> {
    if outcome.total() == 0 {
        return Err(Error::UndefinedOffset);
    }
    if !(tau > 0.0) {
        return Err(domain(format!("tau must be positive, got {tau}")));
    }
    let ratio = outcome.n_d as f64 / outcome.total() as f64;
    let raw = libm::asin(libm::sqrt(ratio)) / tau;
    let delta = libm::round(raw);
    Ok(DeltaEstimate { delta: delta as u64, raw, residual: (raw - delta).abs() })
}

/// `Σ_{nc+nd ≤ n_max} |C_{nc,nd}(χ)|²`.
pub fn truncated_norm(chi: f64, params: &PovmParams) -> f64 {
    let mut acc = 0.0;
    for total in 0..=params.n_max {
        for n_d in 0..=total {
            let c = c_function(total - n_d, n_d, chi, params.alpha);
            acc += c * c;
        }
    }
    acc
}

/// Largest deviation of the diagonal of `Σ M†M` from one over all basis
/// states of `size`.
pub fn completeness_residual(size: EnsembleSize, params: &PovmParams) -> f64 {
    // M†M is diagonal and depends only on |k1 − k2|
    (0..=size.n())
        .map(|d| (truncated_norm(d as f64 * params.tau, params) - 1.0).abs())
        .fold(0.0, f64::max)
}
