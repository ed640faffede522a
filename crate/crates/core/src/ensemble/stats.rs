//! Ensemble statistics: terminal frequencies with Wilson intervals,
//! martingale z-scores and the collapse (moment) diagnostic.

use serde::{Deserialize, Serialize};

use super::config::Mode;
use crate::error::{Error, Result};
use crate::seed::StreamSeed;

/// Bumped whenever the stats layout changes.
pub const FORMAT_VERSION: u32 = 1;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Martingale z-scores above this are flagged.
pub const MARTINGALE_FLAG_Z: f64 = 4.0;

/// Frequencies further than this many standard errors from p⁰ fail
/// acceptance.
pub const ACCEPTANCE_Z: f64 = 4.0;

/// Largest tolerated unterminated fraction.
pub const MAX_UNTERMINATED_FRACTION: f64 = 0.01;

/// What one trajectory contributes to the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub index: u64,
    pub seed: StreamSeed,
    pub terminal_outcome: Option<usize>,
    pub steps: u64,
    pub time: f64,
    /// Fidelity of the final state to the strong-measurement post-state of
    /// the terminal outcome, when the mode tracks a quantum state.
    pub fidelity: Option<f64>,
    /// Martingale coordinates at each checkpoint (frozen after stopping).
    pub checkpoint_values: Vec<Vec<f64>>,
    /// Moment functional of x̃ at each checkpoint.
    pub checkpoint_moments: Vec<f64>,
    pub final_values: Vec<f64>,
    pub final_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFrequency {
    pub outcome: usize,
    pub count: u64,
    pub frequency: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub target: f64,
    /// (frequency − target) in binomial standard errors; `None` when the
    /// target is deterministic.
    pub z_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleRow {
    pub checkpoint: f64,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
    /// `None` where the sample is degenerate and the mean misses p⁰.
    pub z_scores: Vec<Option<f64>>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub rows: Vec<MartingaleRow>,
    pub flagged: bool,
    pub max_abs_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub checkpoint: f64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub rows: Vec<MomentRow>,
    /// Mean over trajectories of the moment functional where each stopped.
    pub terminal_mean: f64,
    /// True when the checkpoint means never increase.
    pub non_increasing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelitySummary {
    pub count: u64,
    pub mean: f64,
    pub min: f64,
    pub fraction_at_least_0_999: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acceptance {
    pub passed: bool,
    pub max_abs_z: f64,
    pub unterminated_fraction: f64,
    pub reasons: Vec<String>,
}

/// Everything reported about one ensemble. Serialized output depends only
/// on the config and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub format_version: u32,
    pub mode: Mode,
    pub master_seed: u64,
    pub trajectories: u64,
    pub p0: Vec<f64>,
    pub checkpoint_unit: String,
    pub checkpoints: Vec<f64>,
    pub terminal_counts: Vec<u64>,
    pub unterminated: u64,
    pub frequencies: Vec<OutcomeFrequency>,
    pub martingale: MartingaleReport,
    pub moments: MomentReport,
    pub fidelity: Option<FidelitySummary>,
    pub acceptance: Acceptance,
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (count, sum) = values
        .clone()
        .fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    if count == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / count as f64;
    if count < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    let var = ss / (count - 1) as f64;
    (mean, (var / count as f64).sqrt())
}

/// Per-checkpoint z-scores of the ensemble mean against p⁰.
///
/// `samples[t][c]` holds the martingale coordinates of trajectory t at
/// checkpoint c.
pub fn martingale_check(
    samples: &[Vec<Vec<f64>>],
    p0: &[f64],
    checkpoints: &[f64],
) -> Result<MartingaleReport> {
    for (t, s) in samples.iter().enumerate() {
        if s.len() != checkpoints.len() {
            return Err(Error::Domain(format!(
                "trajectory {t} has {} checkpoint records, expected {}",
                s.len(),
                checkpoints.len()
            )));
        }
        if let Some(bad) = s.iter().find(|v| v.len() != p0.len()) {
            return Err(Error::DimensionMismatch {
                expected: p0.len(),
                found: bad.len(),
            });
        }
    }
    let mut rows = Vec::with_capacity(checkpoints.len());
    let mut max_abs_z: f64 = 0.0;
    let mut any_flag = false;
    for (c, &checkpoint) in checkpoints.iter().enumerate() {
        let mut mean = Vec::with_capacity(p0.len());
        let mut std_error = Vec::with_capacity(p0.len());
        let mut z_scores = Vec::with_capacity(p0.len());
        let mut flagged = false;
        for (i, &target) in p0.iter().enumerate() {
            let (m, se) = mean_and_se(samples.iter().map(|s| s[c][i]));
            let z = if se > 0.0 {
                Some((m - target) / se)
            } else if (m - target).abs() <= 1e-12 {
                Some(0.0)
            } else {
                None
            };
            match z {
                Some(z) => {
                    max_abs_z = max_abs_z.max(z.abs());
                    flagged |= z.abs() > MARTINGALE_FLAG_Z;
                }
                None => flagged = true,
            }
            mean.push(m);
            std_error.push(se);
            z_scores.push(z);
        }
        any_flag |= flagged;
        rows.push(MartingaleRow {
            checkpoint,
            mean,
            std_error,
            z_scores,
            flagged,
        });
    }
    Ok(MartingaleReport {
        rows,
        flagged: any_flag,
        max_abs_z,
    })
}

impl EnsembleStats {
    /// Folds trajectory summaries (in index order) into the report.
    pub fn from_summaries(
        mode: Mode,
        master_seed: u64,
        p0: &[f64],
        checkpoints: &[f64],
        summaries: &[TrajectorySummary],
    ) -> Result<Self> {
        let n = p0.len();
        let mut terminal_counts = vec![0u64; n];
        let mut unterminated = 0u64;
        for s in summaries {
            match s.terminal_outcome {
                Some(k) if k < n => terminal_counts[k] += 1,
                Some(k) => return Err(Error::Domain(format!("terminal outcome {k} out of range"))),
                None => unterminated += 1,
            }
        }
        let total = summaries.len() as u64;
        let terminated = total - unterminated;
        let frequencies: Vec<OutcomeFrequency> = terminal_counts
            .iter()
            .enumerate()
            .map(|(k, &count)| {
                let frequency = if terminated > 0 {
                    count as f64 / terminated as f64
                } else {
                    0.0
                };
                let (wilson_low, wilson_high) = wilson_interval(count, terminated);
                let target = p0[k];
                let var = target * (1.0 - target) / terminated.max(1) as f64;
                let z_score = (var > 0.0).then(|| (frequency - target) / var.sqrt());
                OutcomeFrequency {
                    outcome: k,
                    count,
                    frequency,
                    wilson_low,
                    wilson_high,
                    target,
                    z_score,
                }
            })
            .collect();

        let samples: Vec<Vec<Vec<f64>>> = summaries
            .iter()
            .map(|s| s.checkpoint_values.clone())
            .collect();
        let martingale = martingale_check(&samples, p0, checkpoints)?;

        let rows: Vec<MomentRow> = checkpoints
            .iter()
            .enumerate()
            .map(|(c, &checkpoint)| {
                let (mean, std_error) =
                    mean_and_se(summaries.iter().map(|s| s.checkpoint_moments[c]));
                MomentRow {
                    checkpoint,
                    mean,
                    std_error,
                }
            })
            .collect();
        let non_increasing = rows.windows(2).all(|w| w[1].mean <= w[0].mean);
        let (terminal_mean, _) = mean_and_se(summaries.iter().map(|s| s.final_moment));
        let moments = MomentReport {
            rows,
            terminal_mean,
            non_increasing,
        };

        let fids: Vec<f64> = summaries.iter().filter_map(|s| s.fidelity).collect();
        let fidelity = (!fids.is_empty()).then(|| FidelitySummary {
            count: fids.len() as u64,
            mean: fids.iter().sum::<f64>() / fids.len() as f64,
            min: fids.iter().copied().fold(f64::INFINITY, f64::min),
            fraction_at_least_0_999: fids.iter().filter(|f| **f >= 0.999).count() as f64
                / fids.len() as f64,
        });

        let unterminated_fraction = if total > 0 {
            unterminated as f64 / total as f64
        } else {
            0.0
        };
        let mut reasons = Vec::new();
        let mut max_abs_z: f64 = 0.0;
        for f in &frequencies {
            match f.z_score {
                Some(z) => {
                    max_abs_z = max_abs_z.max(z.abs());
                    if z.abs() > ACCEPTANCE_Z {
                        reasons.push(format!(
                            "outcome {}: frequency {:.5} is {:.2} standard errors from {:.5}",
                            f.outcome, f.frequency, z, f.target
                        ));
                    }
                }
                None if f.frequency != f.target && terminated > 0 => reasons.push(format!(
                    "outcome {}: frequency {:.5} but the target {} is deterministic",
                    f.outcome, f.frequency, f.target
                )),
                None => {}
            }
        }
        if terminated == 0 {
            reasons.push("no trajectory terminated".into());
        }
        if unterminated_fraction > MAX_UNTERMINATED_FRACTION {
            reasons.push(format!(
                "unterminated fraction {unterminated_fraction:.4} exceeds {MAX_UNTERMINATED_FRACTION}"
            ));
        }
        Ok(Self {
            format_version: FORMAT_VERSION,
            mode,
            master_seed,
            trajectories: total,
            p0: p0.to_vec(),
            checkpoint_unit: mode.checkpoint_unit().to_string(),
            checkpoints: checkpoints.to_vec(),
            terminal_counts,
            unterminated,
            frequencies,
            martingale,
            moments,
            fidelity,
            acceptance: Acceptance {
                passed: reasons.is_empty(),
                max_abs_z,
                unterminated_fraction,
                reasons,
            },
        })
    }
}
