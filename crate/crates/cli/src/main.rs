use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use contmeas::ensemble::persist::{
    load_stats, write_checkpoints, write_replay_csv, write_replay_json, write_run,
};
use contmeas::ensemble::{run_ensemble, Ensemble, EnsembleStats, Experiment};

/// Output directory used when neither `--out` nor `output.dir` is given.
const OUT_DIR_ENV: &str = "CONTMEAS_OUT_DIR";
const FALLBACK_OUT_DIR: &str = "contmeas-out";

#[derive(Parser)]
#[command(
    name = "contmeas",
    version,
    about = "Weak-measurement chains and measurement diffusions"
)]
struct Cli {
    /// Print more detail (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Override a config key, e.g. `--set master_seed=3` or `--set sde.dt=1e-4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble and write stats, summary and checkpoint tables.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        /// Output directory (default: `output.dir`, then $CONTMEAS_OUT_DIR, then ./contmeas-out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 0 uses every core. Results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Check a config and its Kraus file without writing anything.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Re-run one trajectory with its full noise log.
    Replay {
        #[command(flatten)]
        config: ConfigArgs,
        /// Trajectory index.
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Keep every k-th point of continuous paths.
        #[arg(long, default_value_t = 1)]
        every: u64,
        /// Output directory, resolved as for `run`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a stats file and write its plot table.
    Report {
        /// stats.json written by `run`.
        stats: PathBuf,
        /// Plot table path (default: report.csv next to the stats file).
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>, exp: &Experiment) -> PathBuf {
    flag.or_else(|| exp.config.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(FALLBACK_OUT_DIR))
}

fn load(args: &ConfigArgs) -> Result<Experiment> {
    Ok(Experiment::load(&args.config, &args.overrides)?)
}

fn print_report(stats: &EnsembleStats) {
    println!(
        "mode {}  trajectories {}  master seed {}",
        stats.mode, stats.trajectories, stats.master_seed
    );
    println!(
        "{:>7} {:>8} {:>10} {:>21} {:>10} {:>8}",
        "outcome", "count", "frequency", "wilson 95%", "target", "z"
    );
    for f in &stats.frequencies {
        let z = f
            .z_score
            .map(|z| format!("{z:.2}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:>7} {:>8} {:>10.5} {:>10.5}..{:<10.5} {:>10.5} {:>8}",
            f.outcome, f.count, f.frequency, f.wilson_low, f.wilson_high, f.target, z
        );
    }
    let unterminated = stats.unterminated as f64 / stats.trajectories.max(1) as f64;
    if stats.unterminated > 0 {
        println!(
            "warning: {} of {} trajectories unterminated (fraction {:.4})",
            stats.unterminated, stats.trajectories, unterminated
        );
    }
    println!(
        "martingale max |z| {:.2}{}",
        stats.martingale.max_abs_z,
        if stats.martingale.flagged {
            " (flagged)"
        } else {
            ""
        }
    );
    for (m, row) in stats.martingale.rows.iter().zip(&stats.moments.rows) {
        println!(
            "  {} {:>8}: moment {:.3e}  mean [{}]",
            stats.checkpoint_unit,
            m.checkpoint,
            row.mean,
            m.mean
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        );
    }
    println!(
        "moment at termination {:.3e}, trend {}",
        stats.moments.terminal_mean,
        if stats.moments.non_increasing {
            "non-increasing"
        } else {
            "not monotone"
        }
    );
    if let Some(f) = &stats.fidelity {
        println!(
            "post-state fidelity: mean {:.6}, min {:.6}, {:.2}% at least 0.999",
            f.mean,
            f.min,
            100.0 * f.fraction_at_least_0_999
        );
    }
    if stats.acceptance.passed {
        println!("acceptance: pass");
    } else {
        println!("acceptance: FAIL");
        for r in &stats.acceptance.reasons {
            println!("  {r}");
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let verbose = cli.verbose;
    match cli.command {
        Command::Run {
            config,
            out,
            workers,
        } => {
            let mut exp = load(&config)?;
            if let Some(w) = workers {
                exp.config.workers = w;
            }
            let dir = out_dir(out, &exp);
            let cfg = exp.config.clone();
            let run = run_ensemble(exp)?;
            let written = write_run(&dir, &cfg, &run)?;
            print_report(&run.stats);
            if verbose > 0 {
                println!(
                    "{:.2} s on {} workers ({:.0} trajectories/s)",
                    run.meta.wall_clock_seconds, run.meta.workers, run.meta.trajectories_per_second
                );
                for p in &written {
                    println!("wrote {}", p.display());
                }
            } else {
                println!("wrote {}", dir.display());
            }
            Ok(if run.stats.acceptance.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Validate { config } => {
            let exp = load(&config)?;
            println!(
                "{}: ok ({} mode, dimension {}, {} outcomes, p0 = {:?})",
                config.config.display(),
                exp.config.mode,
                exp.kraus.dim(),
                exp.kraus.len(),
                exp.p0.components()
            );
            if verbose > 0 {
                print!("{}", exp.config.to_toml_string()?);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay {
            config,
            index,
            every,
            out,
        } => {
            let exp = load(&config)?;
            let dir = out_dir(out, &exp);
            let ensemble = Ensemble::new(exp)?;
            let record = ensemble.replay(index, every.max(1))?;
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let json = dir.join(format!("replay_{index}.json"));
            let csv = dir.join(format!("replay_{index}.csv"));
            write_replay_json(&json, &record)?;
            write_replay_csv(&csv, &record)?;
            println!("wrote {} and {}", json.display(), csv.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { stats, csv } => {
            let loaded = load_stats(&stats)?;
            print_report(&loaded);
            let table = csv.unwrap_or_else(|| sibling(&stats, "report.csv"));
            write_checkpoints(&table, &loaded)?;
            println!("wrote {}", table.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or_else(|| Path::new(".")).join(name)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
