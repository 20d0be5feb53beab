//! Figure data tables. Each figure yields one table per panel; figures 5
//! to 10 read the joint SVD from the cache.

use std::f64::consts::PI;
use std::fs;
use std::path::PathBuf;

use qnd_core::ensemble::{
    entanglement_entropy, epr_state, fidelity_to, xx_polarized, Basis, DensityMatrix, EnsembleSize, SpinAxis,
    TwoEnsembleState,
};
use qnd_core::fast::{fast_apply_sequence, fast_sequence_probability};
use qnd_core::jsvd::JointSvd;
use qnd_core::mixed::run_rounds;
use qnd_core::povm::{c_function, sharp_tau, PovmParams};
use qnd_core::strobe::{basis_probabilities, sample_povm_trajectory, sample_trajectory, OutcomeSequence};
use qnd_core::vbasis::{amplitude_map, entanglement_spectrum, select_column};
use serde_json::{json, Value};

use crate::cache;
use crate::config::RunConfig;
use crate::error::{io_err, Error, Result};
use crate::output::{fmt_f64, Cell, Table, TOOL_VERSION};
use crate::trajectories::{random_state, render_jsonl, rng_for, STATE_STREAM};

pub const FIGURES: [u32; 8] = [2, 3, 5, 6, 7, 8, 9, 10];

/// A panel table plus its file stem.
pub struct Panel {
    pub stem: String,
    pub table: Table,
}

pub struct FigureData {
    pub panels: Vec<Panel>,
    /// Extra JSON-lines files (stem, contents).
    pub records: Vec<(String, String)>,
}

struct Meta<'a> {
    id: u32,
    cfg: &'a RunConfig,
}

impl Meta<'_> {
    fn table(&self, panel: &str, n: usize, alpha: Option<f64>, tau: Option<f64>, columns: &[&str]) -> Table {
        let mut t = Table::new(columns);
        let opt = |x: Option<f64>| x.map(fmt_f64).unwrap_or_else(|| "none".into());
        t.meta("figureId", self.id)
            .meta("panel", panel)
            .meta("N", n)
            .meta("alpha", opt(alpha))
            .meta("tau", opt(tau))
            .meta("seed", self.cfg.seed)
            .meta("toolVersion", TOOL_VERSION);
        t
    }

    fn panel(&self, panel: &str, table: Table) -> Panel {
        Panel { stem: format!("fig{}{panel}", self.id), table }
    }
}

fn size(n: usize) -> Result<EnsembleSize> {
    Ok(EnsembleSize::new(n)?)
}

fn jsvd_for(cfg: &RunConfig, n: usize) -> Result<JointSvd> {
    cache::load_or_build(&cfg.cache_dir, n, cfg.build_cache)
}

/// C-function heatmaps over `(k1, k2)`.
fn figure2(m: &Meta) -> Result<FigureData> {
    let n = m.cfg.n_or(30);
    let alpha = m.cfg.alpha_or(50.0);
    let sz = size(n)?;
    let nf = n as f64;
    let a2 = (alpha * alpha).round() as u64;
    let a1 = alpha.round() as u64;
    let panels = [
        ("a", PI / (8.0 * nf), a2, 0),
        ("b", PI / (2.0 * nf), a2, 0),
        ("c", PI / 8.0, a2, 0),
        ("d", PI / (2.0 * nf), a2.saturating_sub(a1), a1),
    ];
    let mut out = Vec::new();
    for (p, tau, nc, nd) in panels {
        let mut t = m.table(p, n, Some(alpha), Some(tau), &["k1", "k2", "C"]);
        t.meta("n_c", nc).meta("n_d", nd);
        for i in 0..sz.dim() {
            let (k1, k2) = sz.split(i);
            let chi = (k1 as f64 - k2 as f64) * tau;
            t.push(vec![k1.into(), k2.into(), c_function(nc, nd, chi, alpha).into()]);
        }
        out.push(m.panel(p, t));
    }
    Ok(FigureData { panels: out, records: Vec::new() })
}

/// Outcome probabilities `|C_{nc,nd}(Δτ)|²` versus signed offset, at the
/// most likely total photon number `round(α²)`.
fn figure3(m: &Meta) -> Result<FigureData> {
    let n = m.cfg.n_or(30);
    let alpha = m.cfg.alpha_or(10.0);
    let nf = n as f64;
    let total = (alpha * alpha).round() as u64;
    let mut out = Vec::new();
    for (p, tau) in [("a", m.cfg.tau.unwrap_or(PI / (2.0 * nf))), ("b", 1.0 / nf.sqrt())] {
        let mut t = m.table(p, n, Some(alpha), Some(tau), &["delta", "n_c", "n_d", "probability"]);
        t.meta("photons", total);
        for delta in -(n as i64)..=(n as i64) {
            for nd in 0..=total {
                let c = c_function(total - nd, nd, delta as f64 * tau, alpha);
                t.push(vec![delta.into(), (total - nd).into(), nd.into(), (c * c).into()]);
            }
        }
        out.push(m.panel(p, t));
    }
    Ok(FigureData { panels: out, records: Vec::new() })
}

/// State after `2L+1` all-zero projections of the xx-polarized state, in
/// the z basis and normalized, together with the sequence probability.
fn all_zero_state(j: &JointSvd, rounds: usize) -> Result<(TwoEnsembleState, f64)> {
    let psi0 = xx_polarized(j.size());
    let seq = OutcomeSequence::all_zero(j.size(), 2 * rounds + 1);
    let p = fast_sequence_probability(&psi0, &seq, j)?;
    let st = j.to_z(&fast_apply_sequence(&psi0, &seq, j)?)?.normalized()?;
    Ok((st, p))
}

fn figure5(m: &Meta) -> Result<FigureData> {
    let n = m.cfg.n_or(20);
    let rounds = m.cfg.rounds_or(30);
    let j = jsvd_for(m.cfg, n)?;
    let epr = epr_state(j.size());
    let emax = ((n + 1) as f64).log2();
    let mut a = m.table("a", n, None, None, &["L", "k", "amplitude"]);
    let mut b = m.table("b", n, None, None, &["L", "projections", "fidelity", "entanglement", "probability"]);
    for l in 0..=rounds {
        let (st, p) = all_zero_state(&j, l)?;
        for k in 0..=n {
            a.push(vec![l.into(), k.into(), st.amplitude(k, k).re.into()]);
        }
        let f = fidelity_to(&st, &epr)?;
        let e = entanglement_entropy(&st)? / emax;
        b.push(vec![l.into(), (2 * l + 1).into(), f.into(), e.into(), p.into()]);
    }
    Ok(FigureData { panels: vec![m.panel("a", a), m.panel("b", b)], records: Vec::new() })
}

fn figure6(m: &Meta) -> Result<FigureData> {
    let n = m.cfg.n_or(15);
    let j = jsvd_for(m.cfg, n)?;
    let mut out = Vec::new();
    for (p, l) in [("a", 1usize), ("b", 2), ("c", 6)] {
        let (st, _) = all_zero_state(&j, l)?;
        let mut t = m.table(p, n, None, None, &["basis", "k1", "k2", "probability"]);
        t.meta("L", l);
        for (label, axis) in [("x", SpinAxis::X), ("y", SpinAxis::Y), ("z", SpinAxis::Z)] {
            let probs = basis_probabilities(&st, axis, axis)?;
            for k2 in 0..=n {
                for k1 in 0..=n {
                    t.push(vec![label.into(), k1.into(), k2.into(), probs[(k1, k2)].into()]);
                }
            }
        }
        out.push(m.panel(p, t));
    }
    Ok(FigureData { panels: out, records: Vec::new() })
}

fn basis_weights(j: &JointSvd, st: &TwoEnsembleState, target: Basis) -> Result<Vec<f64>> {
    let b = j.from_z(st, target)?;
    let norm = b.norm_sq();
    Ok(b.amplitudes().iter().map(|a| a.norm_sqr() / norm).collect())
}

/// Single stochastic trajectories; the `V`-basis distribution after every
/// odd number of projections.
fn figure7(m: &Meta) -> Result<FigureData> {
    let n = m.cfg.n_or(5);
    let rounds = m.cfg.rounds_or(10);
    let steps = 2 * rounds + 1;
    let j = jsvd_for(m.cfg, n)?;
    let sz = j.size();
    let random = random_state(sz, &mut rng_for(m.cfg.seed, STATE_STREAM))?;
    let xx = xx_polarized(sz);
    let params = if m.cfg.finite_alpha {
        let tau = m.cfg.tau.unwrap_or_else(|| sharp_tau(sz));
        Some(PovmParams::new(m.cfg.alpha_or(10.0), tau)?)
    } else {
        None
    };
    let mut panels = Vec::new();
    let mut records = Vec::new();
    for (stream, (p, label, psi0)) in [("a", "random", &random), ("b", "random", &random), ("c", "xx", &xx), ("d", "xx", &xx)]
        .into_iter()
        .enumerate()
    {
        let mut rng = rng_for(m.cfg.seed, stream as u64);
        let (states, mut rec): (Vec<TwoEnsembleState>, Value) = match &params {
            None => {
                let t = sample_trajectory(psi0, steps, &mut rng)?;
                let rec = json!({ "deltas": t.sequence.deltas(), "stepProbs": t.step_probs, "jointProb": t.joint_prob });
                (t.step_states, rec)
            }
            Some(params) => {
                let t = sample_povm_trajectory(psi0, steps, params, &mut rng)?;
                let outcomes: Vec<[u64; 2]> = t.steps.iter().map(|s| [s.outcome.n_c, s.outcome.n_d]).collect();
                let est: Vec<Option<u64>> = t.steps.iter().map(|s| s.estimate.map(|e| e.delta)).collect();
                (t.step_states, json!({ "outcomes": outcomes, "deltaEstimates": est }))
            }
        };
        rec["panel"] = json!(p);
        rec["initial"] = json!(label);
        records.push(rec);
        let alpha = params.as_ref().map(|q| q.alpha());
        let tau = params.as_ref().map(|q| q.tau());
        let mut t = m.table(p, n, alpha, tau, &["projections", "index", "probability"]);
        t.meta("initial", label).meta("measurement", if params.is_some() { "photon-counting" } else { "projector" });
        for (s, st) in states.iter().enumerate().filter(|(s, _)| s % 2 == 0) {
            for (k, w) in basis_weights(&j, st, Basis::V)?.into_iter().enumerate() {
                t.push(vec![(s + 1).into(), k.into(), w.into()]);
            }
        }
        panels.push(m.panel(p, t));
    }
    let header = json!({
        "figureId": 7, "N": n, "seed": m.cfg.seed, "toolVersion": TOOL_VERSION,
        "alpha": params.as_ref().map(|q| q.alpha()), "tau": params.as_ref().map(|q| q.tau()),
    });
    Ok(FigureData { panels, records: vec![("fig7_trajectories".into(), render_jsonl(header, &records))] })
}

/// Outcome-averaged `V`-basis diagonal per round.
fn figure8(m: &Meta) -> Result<FigureData> {
    let n = m.cfg.n_or(5);
    let rounds = m.cfg.rounds_or(20);
    let j = jsvd_for(m.cfg, n)?;
    let sz = j.size();
    let random = random_state(sz, &mut rng_for(m.cfg.seed, STATE_STREAM))?;
    let mut out = Vec::new();
    for (p, label, psi0) in [("a", "random", random), ("b", "xx", xx_polarized(sz))] {
        let res = run_rounds(&DensityMatrix::from_pure(&psi0)?, rounds, &j)?;
        let mut t = m.table(p, n, None, None, &["round", "index", "weight"]);
        t.meta("initial", label);
        for (l, d) in res.diagonals.iter().enumerate() {
            for (k, w) in d.values().iter().enumerate() {
                t.push(vec![l.into(), k.into(), (*w).into()]);
            }
        }
        out.push(m.panel(p, t));
    }
    Ok(FigureData { panels: out, records: Vec::new() })
}

/// Amplitude maps of selected `V` columns, chosen by (sector, rank by
/// descending entropy).
fn figure9(m: &Meta) -> Result<FigureData> {
    let n = m.cfg.n_or(10);
    let j = jsvd_for(m.cfg, n)?;
    let spec = entanglement_spectrum(&j)?;
    let mut out = Vec::new();
    for (p, sector, rank) in [("a", 0usize, 0usize), ("b", 0, 1), ("c", 1, 0), ("d", 3, 0)] {
        let Some(col) = select_column(&spec, sector, rank) else {
            continue;
        };
        let e = spec.iter().find(|e| e.index == col).map(|e| e.normalized).unwrap_or(f64::NAN);
        let mut t = m.table(p, n, None, None, &["k1", "k2", "amplitude"]);
        t.meta("column", col).meta("sector", sector).meta("rank", rank).meta("E_over_Emax", fmt_f64(e));
        for (k1, k2, a) in amplitude_map(&j, col)? {
            t.push(vec![k1.into(), k2.into(), a.into()]);
        }
        out.push(m.panel(p, t));
    }
    Ok(FigureData { panels: out, records: Vec::new() })
}

fn figure10(m: &Meta) -> Result<FigureData> {
    let sizes: Vec<(&str, usize)> = match m.cfg.n {
        Some(n) => vec![("a", n)],
        None => vec![("a", 5), ("b", 10)],
    };
    let mut out = Vec::new();
    for (p, n) in sizes {
        let j = jsvd_for(m.cfg, n)?;
        let mut t = m.table(p, n, None, None, &["index", "sector", "E_over_Emax"]);
        for e in entanglement_spectrum(&j)? {
            t.push(vec![e.index.into(), e.sector.into(), Cell::Float(e.normalized)]);
        }
        out.push(m.panel(p, t));
    }
    Ok(FigureData { panels: out, records: Vec::new() })
}

pub fn figure_data(id: u32, cfg: &RunConfig) -> Result<FigureData> {
    cfg.validate()?;
    let m = Meta { id, cfg };
    match id {
        2 => figure2(&m),
        3 => figure3(&m),
        5 => figure5(&m),
        6 => figure6(&m),
        7 => figure7(&m),
        8 => figure8(&m),
        9 => figure9(&m),
        10 => figure10(&m),
        other => Err(Error::InvalidFigure(other)),
    }
}

/// Writes every panel (and record file) under `cfg.out`.
pub fn run_figure(id: u32, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let data = figure_data(id, cfg)?;
    let mut paths = Vec::new();
    for p in &data.panels {
        paths.push(p.table.write(&cfg.out, &p.stem, cfg.format)?);
    }
    for (stem, text) in &data.records {
        let path = cfg.out.join(format!("{stem}.jsonl"));
        fs::write(&path, text).map_err(io_err(&path))?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(dir: &std::path::Path) -> RunConfig {
        RunConfig { cache_dir: dir.join("cache"), out: dir.join("out"), build_cache: true, seed: 9, ..Default::default() }
    }

    fn column(t: &Table, name: &str) -> Vec<f64> {
        let i = t.columns().iter().position(|c| c == name).unwrap();
        t.rows()
            .iter()
            .map(|r| match &r[i] {
                Cell::Float(f) => *f,
                Cell::Int(k) => *k as f64,
                Cell::Text(_) => f64::NAN,
            })
            .collect()
    }

    #[test]
    fn unknown_figure_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(figure_data(4, &cfg(dir.path())), Err(Error::InvalidFigure(4))));
    }

    #[test]
    fn cache_is_required_without_build_flag() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig { build_cache: false, n: Some(2), ..cfg(dir.path()) };
        assert!(matches!(figure_data(8, &c), Err(Error::MissingCache { .. })));
        assert!(figure_data(2, &c).is_ok());
    }

    /// Largest `|C|` over cells with `|k1 - k2| = delta`.
    fn band(t: &Table, delta: f64) -> f64 {
        let (k1, k2, c) = (column(t, "k1"), column(t, "k2"), column(t, "C"));
        (0..c.len()).filter(|&i| (k1[i] - k2[i]).abs() == delta).map(|i| c[i].abs()).fold(0.0, f64::max)
    }

    #[test]
    fn figure2_bands_narrow_with_interaction_time() {
        let dir = tempfile::tempdir().unwrap();
        let d = figure_data(2, &cfg(dir.path())).unwrap();
        assert_eq!(d.panels.len(), 4);
        let (a, b) = (&d.panels[0].table, &d.panels[1].table);
        assert!(band(b, 0.0) > 0.0);
        assert!(band(b, 1.0) < 0.1 * band(b, 0.0));
        assert!(band(b, 3.0) < 1e-6 * band(b, 0.0));
        assert!(band(a, 1.0) / band(a, 0.0) > band(b, 1.0) / band(b, 0.0));
    }

    #[test]
    fn figure5_table_tracks_convergence() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig { rounds: Some(8), ..cfg(dir.path()) };
        let d = figure_data(5, &c).unwrap();
        let b = &d.panels[1].table;
        let f = column(b, "fidelity");
        assert!(f[6] > 0.99);
        assert!(f.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn figure8_weights_sum_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig { rounds: Some(3), ..cfg(dir.path()) };
        let d = figure_data(8, &c).unwrap();
        let t = &d.panels[1].table;
        let w = column(t, "weight");
        let r = column(t, "round");
        for l in 0..=3 {
            let s: f64 = w.iter().zip(&r).filter(|(_, &x)| x == l as f64).map(|(w, _)| w).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn figure7_is_reproducible_and_seed_dependent() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig { rounds: Some(4), ..cfg(dir.path()) };
        let a = figure_data(7, &c).unwrap();
        let b = figure_data(7, &c).unwrap();
        let other = figure_data(7, &RunConfig { seed: 10, ..c.clone() }).unwrap();
        assert_eq!(a.records, b.records);
        for (x, y) in a.panels.iter().zip(&b.panels) {
            assert_eq!(x.table.to_csv(), y.table.to_csv());
        }
        assert_ne!(a.records, other.records);
        let fin = figure_data(7, &RunConfig { finite_alpha: true, ..c }).unwrap();
        assert!(fin.records[0].1.contains("deltaEstimates"));
    }

    #[test]
    fn figure10_single_panel_with_explicit_n() {
        let dir = tempfile::tempdir().unwrap();
        let c = RunConfig { n: Some(3), ..cfg(dir.path()) };
        let d = figure_data(10, &c).unwrap();
        assert_eq!(d.panels.len(), 1);
        let e = column(&d.panels[0].table, "E_over_Emax");
        assert_eq!(e.len(), 16);
        assert!(e.iter().all(|&x| x > 0.0 && x <= 1.0 + 1e-12));
    }
}
