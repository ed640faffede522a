//! Output files of an ensemble run and their readers.
//!
//! A run directory holds `stats.json`, `summary.csv`, `checkpoints.csv`,
//! `run_meta.json`, the resolved `config.toml` and, on request,
//! `trajectories.jsonl`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{EnsembleRun, ReplayRecord, RunMeta};
use super::stats::{EnsembleStats, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::sde::moment_functional;
use crate::simplex::SimplexPoint;

pub const STATS_FILE: &str = "stats.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const CHECKPOINTS_FILE: &str = "checkpoints.csv";
pub const META_FILE: &str = "run_meta.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const TRAJECTORIES_FILE: &str = "trajectories.jsonl";

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub index: u64,
    pub terminal_outcome: Option<usize>,
    pub steps: u64,
    pub time: f64,
    pub fidelity: Option<f64>,
    pub final_moment: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|e| Error::format(path, e.to_string()))?;
    out.write_all(b"\n")
        .and_then(|_| out.flush())
        .map_err(|e| Error::io(path, e))
}

/// Writes every output file of `run` into `dir`, creating it if needed.
/// Returns the paths written.
pub fn write_run(dir: &Path, config: &ExperimentConfig, run: &EnsembleRun) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let path = dir.join(STATS_FILE);
    write_json(&path, &run.stats)?;
    written.push(path);

    let path = dir.join(SUMMARY_FILE);
    let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
    for s in &run.summaries {
        w.serialize(SummaryRow {
            index: s.index,
            terminal_outcome: s.terminal_outcome,
            steps: s.steps,
            time: s.time,
            fidelity: s.fidelity,
            final_moment: s.final_moment,
        })
        .map_err(|e| csv_error(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    written.push(path);

    let path = dir.join(CHECKPOINTS_FILE);
    write_checkpoints(&path, &run.stats)?;
    written.push(path);

    let path = dir.join(META_FILE);
    write_json(&path, &run.meta)?;
    written.push(path);

    let path = dir.join(CONFIG_FILE);
    let text = config.to_toml_string()?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    written.push(path);

    if config.output.trajectories_jsonl {
        let path = dir.join(TRAJECTORIES_FILE);
        let mut out = create(&path)?;
        for s in &run.summaries {
            serde_json::to_writer(&mut out, s).map_err(|e| Error::format(&path, e.to_string()))?;
            out.write_all(b"\n").map_err(|e| Error::io(&path, e))?;
        }
        out.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Plot-ready table: checkpoint, mean moment functional and mean martingale
/// coordinates with their z-scores.
pub fn write_checkpoints(path: &Path, stats: &EnsembleStats) -> Result<()> {
    let n = stats.p0.len();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec![
        stats.checkpoint_unit.clone(),
        "moment_mean".into(),
        "moment_std_error".into(),
    ];
    header.extend((1..=n).map(|i| format!("mean_{i}")));
    header.extend((1..=n).map(|i| format!("z_{i}")));
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (m, moment) in stats.martingale.rows.iter().zip(&stats.moments.rows) {
        let mut row = vec![
            m.checkpoint.to_string(),
            moment.mean.to_string(),
            moment.std_error.to_string(),
        ];
        row.extend(m.mean.iter().map(f64::to_string));
        row.extend(
            m.z_scores
                .iter()
                .map(|z| z.map(|z| z.to_string()).unwrap_or_default()),
        );
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `stats.json`, rejecting other format versions.
pub fn load_stats(path: &Path) -> Result<EnsembleStats> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == u64::from(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(Error::format(
                path,
                format!("format_version {v} is not supported (expected {FORMAT_VERSION})"),
            ))
        }
        None => return Err(Error::format(path, "missing format_version")),
    }
    serde_json::from_value(value).map_err(|e| Error::format(path, e.to_string()))
}

pub fn load_meta(path: &Path) -> Result<RunMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_error(path, e)))
        .collect()
}

/// Writes a replayed path as CSV: `t, x_1..x_n, moment` with the moment taken
/// of x̃ = x ⋆ p⁰. Chains use the step index for `t`.
pub fn write_replay_csv(path: &Path, record: &ReplayRecord) -> Result<()> {
    let (times, xs, p0): (Vec<f64>, &[SimplexPoint], &SimplexPoint) = match record {
        ReplayRecord::Chain(c) => ((0..c.xs.len()).map(|i| i as f64).collect(), &c.xs, &c.p0),
        ReplayRecord::Continuous(t) => (t.times.clone(), &t.xs, &t.p0),
    };
    let n = p0.dim();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x_{i}")));
    header.push("moment".into());
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for (t, x) in times.iter().zip(xs) {
        let tilde = x.star(p0)?;
        let mut row = vec![t.to_string()];
        row.extend(x.components().iter().map(f64::to_string));
        row.push(moment_functional(tilde.components()).to_string());
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a replay record as pretty JSON.
pub fn write_replay_json(path: &Path, record: &ReplayRecord) -> Result<()> {
    write_json(path, record)
}
