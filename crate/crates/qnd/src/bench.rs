//! Wall-clock comparison of dense sequence application against the index
//! recursion. Timings vary between runs; only the layout is fixed.

use std::hint::black_box;
use std::path::Path;
use std::time::Instant;

use qnd_core::ensemble::{xx_polarized, EnsembleSize};
use qnd_core::fast::fast_apply_sequence;
use qnd_core::strobe::{apply_sequence, OutcomeSequence};

use crate::cache;
use crate::error::{Error, Result};
use crate::output::{Table, TOOL_VERSION};

pub const DEFAULT_SIZES: [usize; 5] = [2, 5, 10, 20, 30];
pub const DEFAULT_ROUNDS: usize = 100;
pub const MIN_REPS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub rounds: usize,
    pub naive_ms: f64,
    pub fast_ms: f64,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.naive_ms / self.fast_ms
    }
}

fn median_ms(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..reps)
        .map(|_| {
            let start = Instant::now();
            f();
            start.elapsed().as_secs_f64() * 1e3
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[t.len() / 2]
}

/// Times `2L+1` all-zero projections on the xx-polarized state. The
/// decomposition comes from the cache when present and is built in memory
/// otherwise; its cost is not part of `fast_ms`.
pub fn run(sizes: &[usize], rounds: usize, reps: usize, cache_dir: &Path) -> Result<Vec<BenchRow>> {
    if reps < MIN_REPS {
        return Err(Error::Config(format!("at least {MIN_REPS} repetitions are required")));
    }
    let mut rows = Vec::new();
    for &n in sizes {
        let size = EnsembleSize::new(n)?;
        let j = match cache::load(cache_dir, n) {
            Ok(j) => j,
            Err(Error::MissingCache { .. }) => cache::build(n)?,
            Err(e) => return Err(e),
        };
        let psi = xx_polarized(size);
        let seq = OutcomeSequence::all_zero(size, 2 * rounds + 1);
        let naive_ms = median_ms(reps, || {
            black_box(apply_sequence(black_box(&psi), &seq).expect("valid sequence"));
        });
        let fast_ms = median_ms(reps, || {
            black_box(fast_apply_sequence(black_box(&psi), &seq, &j).expect("valid sequence"));
        });
        rows.push(BenchRow { n, rounds, naive_ms, fast_ms });
    }
    Ok(rows)
}

pub fn table(rows: &[BenchRow], reps: usize) -> Table {
    let mut t = Table::new(&["N", "L", "naive_ms", "fast_ms", "speedup"]);
    t.meta("reps", reps).meta("statistic", "median").meta("toolVersion", TOOL_VERSION);
    for r in rows {
        t.push(vec![r.n.into(), r.rounds.into(), r.naive_ms.into(), r.fast_ms.into(), r.speedup().into()]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_has_one_row_per_size() {
        let dir = tempfile::tempdir().unwrap();
        let rows = run(&[2, 3], 4, 5, dir.path()).unwrap();
        assert_eq!(rows.iter().map(|r| r.n).collect::<Vec<_>>(), [2, 3]);
        assert!(rows.iter().all(|r| r.naive_ms >= 0.0 && r.fast_ms >= 0.0));
        assert_eq!(table(&rows, 5).rows().len(), 2);
        assert!(run(&[2], 1, 2, dir.path()).is_err());
    }
}
