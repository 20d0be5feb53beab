use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qnd::bench;
use qnd::cache;
use qnd::error::io_err;
use qnd::figures;
use qnd::output::{Format, TOOL_VERSION};
use qnd::trajectories::{self, Batch, Initial};
use qnd::verify::{self, Suite};
use qnd::{Error, Result, RunConfig};
use qnd_core::ensemble::EnsembleSize;
use qnd_core::povm::{sharp_tau, PovmParams};
use serde_json::json;

#[derive(Parser)]
#[command(name = "qnd", version, about = "QND projection sequences on two atomic ensembles")]
struct Cli {
    /// Directory holding decomposition cache files.
    #[arg(long, global = true, env = cache::ENV_DIR, default_value = ".qnd-cache")]
    cache_dir: PathBuf,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Atoms per ensemble.
    #[arg(long = "n")]
    n: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Interaction time; defaults to pi/2N where applicable.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Projection rounds L.
    #[arg(long, short = 'L')]
    rounds: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Build missing decompositions instead of failing.
    #[arg(long)]
    build_cache: bool,
    /// Photon-counting measurements at finite alpha instead of projectors.
    #[arg(long)]
    finite_alpha: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write figure data tables.
    Figure {
        id: u32,
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Sample a batch of trajectories as JSON lines.
    Trajectories {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        count: usize,
        /// Projections per trajectory; defaults to 2L+1.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long, value_enum, default_value_t = Initial::Random)]
        initial: Initial,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run verification suites and print a JSON report.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time dense against recursive sequence application.
    Bench {
        /// Sizes to time (repeatable).
        #[arg(long = "n")]
        n: Vec<usize>,
        #[arg(long, short = 'L', default_value_t = bench::DEFAULT_ROUNDS)]
        rounds: usize,
        #[arg(long, default_value_t = bench::MIN_REPS)]
        reps: usize,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Manage decomposition cache files.
    Cache {
        #[command(subcommand)]
        op: CacheOp,
    },
}

#[derive(Subcommand)]
enum CacheOp {
    Build {
        #[arg(long = "n", required = true)]
        n: Vec<usize>,
    },
    Inspect {
        #[arg(long = "n")]
        n: usize,
    },
    /// Remove cache files (only N when given).
    Clear {
        #[arg(long = "n")]
        n: Option<usize>,
    },
}

fn config(common: &Common, out: PathBuf, cache_dir: PathBuf) -> RunConfig {
    RunConfig {
        n: common.n,
        alpha: common.alpha,
        tau: common.tau,
        seed: common.seed,
        rounds: common.rounds,
        out,
        format: common.format,
        threads: common.threads,
        build_cache: common.build_cache,
        finite_alpha: common.finite_alpha,
        cache_dir,
    }
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(io_err(dir))?;
            }
            fs::write(path, text).map_err(io_err(path))
        }
        None => std::io::stdout().write_all(text.as_bytes()).map_err(io_err("<stdout>")),
    }
}

fn run(cli: Cli) -> Result<bool> {
    let cache_dir = cli.cache_dir;
    match cli.cmd {
        Cmd::Figure { id, common, out } => {
            let cfg = config(&common, out, cache_dir);
            for p in figures::run_figure(id, &cfg)? {
                println!("{}", p.display());
            }
        }
        Cmd::Trajectories { common, count, steps, initial, out } => {
            let cfg = config(&common, PathBuf::new(), cache_dir);
            cfg.validate()?;
            let n = cfg.n_or(5);
            let size = EnsembleSize::new(n)?;
            let steps = steps.unwrap_or(2 * cfg.rounds_or(10) + 1);
            let finite = if cfg.finite_alpha {
                Some(PovmParams::new(cfg.alpha_or(10.0), cfg.tau.unwrap_or_else(|| sharp_tau(size)))?)
            } else {
                None
            };
            let j = cache::load_or_build(&cfg.cache_dir, n, cfg.build_cache)?;
            let batch = Batch { size, initial, count, steps, seed: cfg.seed, finite, threads: cfg.threads };
            let records = trajectories::run_batch(&batch, &j)?;
            let header = json!({
                "N": n, "count": count, "steps": steps, "initial": initial.label(), "seed": cfg.seed,
                "alpha": batch.finite.as_ref().map(|p| p.alpha()), "tau": batch.finite.as_ref().map(|p| p.tau()),
                "toolVersion": TOOL_VERSION,
            });
            emit(&trajectories::render_jsonl(header, &records), out.as_ref())?;
        }
        Cmd::Verify { suite, seed, out } => {
            let checks = verify::run_suite(suite, seed)?;
            let report = verify::report(suite, seed, &checks);
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            emit(&text, out.as_ref())?;
            return Ok(checks.iter().all(|c| c.pass));
        }
        Cmd::Bench { n, rounds, reps, format, out } => {
            let sizes = if n.is_empty() { bench::DEFAULT_SIZES.to_vec() } else { n };
            let rows = bench::run(&sizes, rounds, reps, &cache_dir)?;
            emit(&bench::table(&rows, reps).render(format), out.as_ref())?;
        }
        Cmd::Cache { op } => match op {
            CacheOp::Build { n } => {
                for n in n {
                    let path = cache::save(&cache_dir, &cache::build(n)?)?;
                    println!("{}", path.display());
                }
            }
            CacheOp::Inspect { n } => print!("{}", cache::inspect(&cache::load(&cache_dir, n)?)),
            CacheOp::Clear { n } => {
                for p in cache::clear(&cache_dir, n)? {
                    println!("removed {}", p.display());
                }
            }
        },
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, Error::Checksum(_)) {
                eprintln!("hint: run `qnd cache clear` and rebuild");
            }
            ExitCode::from(2)
        }
    }
}
