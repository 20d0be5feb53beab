//! Verification suites. Each check reports its worst residual against a
//! threshold over a range of ensemble sizes.

use std::f64::consts::PI;

use qnd_core::ensemble::{epr_state, xx_polarized, Basis, DensityMatrix, EnsembleSize};
use qnd_core::fast::{fast_apply_sequence, fast_sequence_probability};
use qnd_core::jsvd::{reconstruction_error, two_projector_matrix, verify_commuting_family, JointSvd};
use qnd_core::mixed::{build_transition_matrix, run_rounds, steady_state};
use qnd_core::povm::{completeness_residual, sharp_tau, truncated_norm, PovmParams};
use qnd_core::projectors::{apply_projector, projector_property_residuals, ProjectorBasis, ProjectorSpec};
use qnd_core::reference;
use qnd_core::strobe::{apply_sequence, enumerate_sequences, sequence_probability, OutcomeSequence};
use qnd_core::vbasis::{classify_sectors, entanglement_spectrum, expected_sector_size, sector_counts, vbasis_state};
use rand::Rng;
use serde_json::{json, Value};

use crate::cache;
use crate::error::Result;
use crate::trajectories::{random_state, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Povm,
    Projectors,
    Svd,
    Fast,
    Mixed,
    Vbasis,
    #[value(name = "appendixB")]
    AppendixB,
    All,
}

impl Suite {
    pub const EACH: [Suite; 7] =
        [Suite::Povm, Suite::Projectors, Suite::Svd, Suite::Fast, Suite::Mixed, Suite::Vbasis, Suite::AppendixB];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Povm => "povm",
            Suite::Projectors => "projectors",
            Suite::Svd => "svd",
            Suite::Fast => "fast",
            Suite::Mixed => "mixed",
            Suite::Vbasis => "vbasis",
            Suite::AppendixB => "appendixB",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub check: String,
    pub n_range: (usize, usize),
    pub max_residual: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn new(suite: &'static str, check: &str, n_range: (usize, usize), max_residual: f64, threshold: f64) -> Self {
        let pass = max_residual.is_finite() && max_residual < threshold;
        Self { suite, check: check.into(), n_range, max_residual, threshold, pass }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "suite": self.suite,
            "check": self.check,
            "nRange": [self.n_range.0, self.n_range.1],
            "maxResidual": self.max_residual,
            "threshold": self.threshold,
            "pass": self.pass,
        })
    }
}

fn size(n: usize) -> Result<EnsembleSize> {
    Ok(EnsembleSize::new(n)?)
}

fn worst(xs: impl IntoIterator<Item = f64>) -> f64 {
    xs.into_iter().fold(0.0, |a, b| if b.is_nan() || a.is_nan() { f64::NAN } else { a.max(b) })
}

fn povm() -> Result<Vec<Check>> {
    let s = "povm";
    let mut norm = 0.0f64;
    for alpha in [0.5, 1.0, 2.0, 3.0] {
        let params = PovmParams::new(alpha, 1.0)?;
        for i in 0..100 {
            let chi = PI * i as f64 / 99.0;
            norm = norm.max((truncated_norm(chi, &params) - 1.0).abs());
        }
    }
    let mut diag = 0.0f64;
    for n in 1..=10 {
        let sz = size(n)?;
        for alpha in [1.0, 2.0, 3.0] {
            diag = diag.max(completeness_residual(sz, &PovmParams::new(alpha, sharp_tau(sz))?));
        }
    }
    Ok(vec![
        Check::new(s, "photon-number completeness over chi grid, alpha<=3", (0, 0), norm, 1e-10),
        Check::new(s, "diagonal completeness, alpha<=3", (1, 10), diag, 1e-8),
    ])
}

/// `C(2n, n)` in exact integer arithmetic.
fn central_binomial(n: usize) -> u128 {
    (1..=n as u128).fold(1, |acc, i| acc * (n as u128 + i) / i)
}

fn projectors() -> Result<Vec<Check>> {
    let s = "projectors";
    let mut r = [0.0f64; 4];
    for n in 1..=8 {
        for basis in [ProjectorBasis::Z, ProjectorBasis::X] {
            let q = projector_property_residuals(size(n)?, basis)?;
            for i in 0..4 {
                r[i] = r[i].max(q[i]);
            }
        }
    }
    let mut single = 0.0f64;
    for n in 1..=12 {
        let sz = size(n)?;
        let p = apply_projector(&xx_polarized(sz), &ProjectorSpec::z(sz, 0)?)?.norm_sq();
        let expect = central_binomial(n) as f64 / 4f64.powi(n as i32);
        single = single.max((p - expect).abs());
    }
    Ok(vec![
        Check::new(s, "idempotence", (1, 8), r[0], 1e-12),
        Check::new(s, "symmetry", (1, 8), r[1], 1e-12),
        Check::new(s, "mutual orthogonality", (1, 8), r[2], 1e-12),
        Check::new(s, "completeness", (1, 8), r[3], 1e-12),
        Check::new(s, "single zero-offset projection of xx state", (1, 12), single, 1e-12),
    ])
}

fn svd() -> Result<Vec<Check>> {
    let s = "svd";
    let mut comm = 0.0f64;
    let mut recon = 0.0f64;
    let mut orth = 0.0f64;
    for n in 1..=6 {
        comm = comm.max(verify_commuting_family(size(n)?)?);
        let j = cache::build(n)?;
        recon = recon.max(reconstruction_error(&j)?);
        orth = orth.max(j.orthogonality_error());
    }
    Ok(vec![
        Check::new(s, "commutators of the R family", (1, 6), comm, 1e-11),
        Check::new(s, "reconstruction U Lambda V^T", (1, 6), recon, 1e-12),
        Check::new(s, "orthogonality of U and V", (1, 6), orth, 1e-12),
    ])
}

fn compare(j: &JointSvd, seq: &OutcomeSequence, st: &qnd_core::ensemble::TwoEnsembleState) -> Result<(f64, f64)> {
    let naive = apply_sequence(st, seq)?;
    let fast = j.to_z(&fast_apply_sequence(st, seq, j)?)?;
    let dp = (sequence_probability(st, seq)? - fast_sequence_probability(st, seq, j)?).abs();
    Ok((naive.max_abs_diff(&fast), dp))
}

fn fast(seed: u64) -> Result<Vec<Check>> {
    let s = "fast";
    let (mut ex_state, mut ex_prob) = (0.0f64, 0.0f64);
    for n in 1..=3 {
        let j = cache::build(n)?;
        let st = random_state(j.size(), &mut rng_for(seed, n as u64))?;
        for len in 0..=3 {
            for seq in enumerate_sequences(j.size(), len) {
                let (a, b) = compare(&j, &seq, &st)?;
                ex_state = ex_state.max(a);
                ex_prob = ex_prob.max(b);
            }
        }
    }
    let (mut rs, mut rp) = (0.0f64, 0.0f64);
    let builds: Vec<JointSvd> = (1..=5).map(cache::build).collect::<Result<_>>()?;
    let mut rng = rng_for(seed, 1000);
    for _ in 0..200 {
        let j = &builds[rng.random_range(0..5)];
        let n = j.size().n();
        let len = rng.random_range(1..=11);
        let deltas: Vec<usize> = (0..len).map(|_| rng.random_range(0..=n)).collect();
        let seq = OutcomeSequence::from_deltas(j.size(), &deltas)?;
        let st = random_state(j.size(), &mut rng)?;
        let (a, b) = compare(j, &seq, &st)?;
        rs = rs.max(a);
        rp = rp.max(b);
    }
    Ok(vec![
        Check::new(s, "exhaustive sequences up to length 3: state", (1, 3), ex_state, 1e-10),
        Check::new(s, "exhaustive sequences up to length 3: probability", (1, 3), ex_prob, 1e-10),
        Check::new(s, "200 random sequences up to length 11: state", (1, 5), rs, 1e-10),
        Check::new(s, "200 random sequences up to length 11: probability", (1, 5), rp, 1e-10),
    ])
}

fn mixed(seed: u64) -> Result<Vec<Check>> {
    let s = "mixed";
    let (mut agree, mut drift, mut resid, mut unital) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut neg = 0.0f64;
    for n in [2, 5] {
        let j = cache::build(n)?;
        let sz = j.size();
        let a = build_transition_matrix(&j);
        let states = [
            DensityMatrix::from_pure(&xx_polarized(sz))?,
            DensityMatrix::from_pure(&random_state(sz, &mut rng_for(seed, n as u64))?)?,
            DensityMatrix::maximally_mixed(sz, Basis::Z),
        ];
        for rho0 in &states {
            let out = run_rounds(rho0, 200, &j)?;
            let fp = steady_state(&a, &out.diagonals[0])?;
            agree = agree.max(fp.distribution.max_abs_diff(out.diagonals.last().expect("rounds ran")));
            drift = drift.max(worst(out.trace_drift.iter().copied()));
            resid = resid.max(fp.residual);
            neg = neg.max(-out.final_rho.min_eigenvalue());
        }
        let m = DensityMatrix::maximally_mixed(sz, Basis::V);
        let r = qnd_core::mixed::full_round(&m, &j)?;
        unital = unital.max(worst((r.entries() - m.entries()).iter().map(|c| c.norm())));
    }
    Ok(vec![
        Check::new(s, "iterated vs transition-matrix fixed point", (2, 5), agree, 1e-8),
        Check::new(s, "trace drift per half round", (2, 5), drift, 1e-12),
        Check::new(s, "eigen-residual of fixed point", (2, 5), resid, 1e-10),
        Check::new(s, "negative eigenvalue after 200 rounds", (2, 5), neg, 1e-9),
        Check::new(s, "maximally mixed state is fixed", (2, 5), unital, 1e-12),
    ])
}

fn vbasis() -> Result<Vec<Check>> {
    let s = "vbasis";
    let (mut count, mut epr, mut noon, mut range) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for n in [2, 5, 10] {
        let j = cache::build(n)?;
        let sz = j.size();
        let counts = sector_counts(&classify_sectors(&j)?, sz);
        for (d, c) in counts.iter().enumerate() {
            count = count.max((*c as f64 - expected_sector_size(sz, d) as f64).abs());
        }
        let target = epr_state(sz);
        let mut best = 0.0f64;
        for l in classify_sectors(&j)?.into_iter().filter(|l| l.sector == 0) {
            best = best.max(vbasis_state(&j, l.index)?.inner(&target).norm_sqr());
        }
        epr = epr.max(1.0 - best);
        for e in entanglement_spectrum(&j)? {
            if e.sector == n {
                noon = noon.max((e.entropy - 1.0).abs());
            }
            // Distance outside (0, 1]; a zero entropy counts as a full miss.
            let out = if e.normalized <= 0.0 { 1.0 } else { (e.normalized - 1.0).max(0.0) };
            range = range.max(out);
        }
    }
    Ok(vec![
        Check::new(s, "sector sizes", (2, 10), count, 0.5),
        Check::new(s, "EPR column in sector 0 (1 - overlap)", (2, 10), epr, 1e-8),
        Check::new(s, "NOON sector entropy is 1 bit", (2, 10), noon, 1e-10),
        Check::new(s, "normalized entropies in (0, 1]", (2, 10), range, 1e-12),
    ])
}

fn appendix_b() -> Result<Vec<Check>> {
    let s = "appendixB";
    let sz = size(2)?;
    let t00 = (two_projector_matrix(sz, 0, 0)? - reference::t00()).amax();
    let t22 = (two_projector_matrix(sz, 2, 2)? - reference::t22()).amax();
    let j = cache::build(2)?;
    let lam = |dz: usize, dx: usize, want: &[(u32, u32, f64)]| {
        let got = j.factor(dz, dx).triples();
        if got.len() != want.len() {
            return f64::INFINITY;
        }
        worst(got.iter().zip(want).map(|(g, w)| {
            if (g.0, g.1) == (w.0, w.1) {
                (g.2.abs() - w.2).abs()
            } else {
                f64::INFINITY
            }
        }))
    };
    let l00 = lam(0, 0, &reference::LAMBDA00_ABS);
    let l22 = lam(2, 2, &reference::LAMBDA22_ABS);
    let u = reference::signed_permutation_distance(j.u(), &reference::u_n2(), 1e-9);
    let v = reference::signed_permutation_distance(j.v(), &reference::v_n2(), 1e-9);
    let recon = reconstruction_error(&j)?;
    Ok(vec![
        Check::new(s, "T00 entries", (2, 2), t00, 1e-12),
        Check::new(s, "T22 entries", (2, 2), t22, 1e-12),
        Check::new(s, "|Lambda00| support and values", (2, 2), l00, 1e-12),
        Check::new(s, "|Lambda22| support and values", (2, 2), l22, 1e-12),
        Check::new(s, "U up to signed column permutation", (2, 2), u, 1e-10),
        Check::new(s, "V up to signed column permutation", (2, 2), v, 1e-10),
        Check::new(s, "reconstruction", (2, 2), recon, 1e-12),
    ])
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    match suite {
        Suite::Povm => povm(),
        Suite::Projectors => projectors(),
        Suite::Svd => svd(),
        Suite::Fast => fast(seed),
        Suite::Mixed => mixed(seed),
        Suite::Vbasis => vbasis(),
        Suite::AppendixB => appendix_b(),
        Suite::All => {
            let mut all = Vec::new();
            for s in Suite::EACH {
                all.extend(run_suite(s, seed)?);
            }
            Ok(all)
        }
    }
}

pub fn report(suite: Suite, seed: u64, checks: &[Check]) -> Value {
    json!({
        "suite": suite.name(),
        "seed": seed,
        "toolVersion": crate::output::TOOL_VERSION,
        "pass": checks.iter().all(|c| c.pass),
        "checks": checks.iter().map(Check::to_json).collect::<Vec<_>>(),
    })
}
