//! Parallel, reproducible ensemble execution.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Experiment, Mode};
use super::stats::{EnsembleStats, TrajectorySummary};
use crate::discrete::{
    reconstruct_state, run_chain, ChainRecord, ChainWalker, CollapseBasis, WeakOperatorSet,
};
use crate::error::{Error, Result};
use crate::generalized::{finish_generalized, run_commuting_qsd, MeasurementMap};
use crate::operators::state::{apply_and_normalize, fidelity};
use crate::operators::QuantumState;
use crate::sde::{
    checkpoint_step, moment_functional, run_coupled_projective, run_trajectory, SdeWalker,
    Trajectory,
};
use crate::seed::{wiener_increments, StreamSeed};
use crate::simplex::SimplexPoint;

/// Mode-specific data shared by every trajectory.
enum Engine {
    Discrete {
        set: WeakOperatorSet,
        basis: Option<CollapseBasis>,
    },
    Continuous,
    ProjectiveQsd,
    Generalized(MeasurementMap),
    CommutingQsd(MeasurementMap),
}

/// An experiment ready to simulate trajectories by index.
pub struct Ensemble {
    experiment: Experiment,
    engine: Engine,
}

/// Timing and pool data kept apart from the stats so that stats stay
/// reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub wall_clock_seconds: f64,
    pub workers: usize,
    pub trajectories_per_second: f64,
}

/// Output of [`run_ensemble`].
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub stats: EnsembleStats,
    pub summaries: Vec<TrajectorySummary>,
    pub meta: RunMeta,
}

/// A single trajectory re-run with full recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplayRecord {
    Chain(ChainRecord),
    Continuous(Trajectory),
}

impl Ensemble {
    pub fn new(experiment: Experiment) -> Result<Self> {
        let engine = match experiment.config.mode {
            Mode::Discrete => {
                let set = WeakOperatorSet::symmetric(
                    experiment.kraus.clone(),
                    experiment.config.chain.lambda,
                )?;
                let basis = CollapseBasis::new(&experiment.psi0, &experiment.kraus).ok();
                Engine::Discrete { set, basis }
            }
            Mode::Continuous => Engine::Continuous,
            Mode::ProjectiveQsd => Engine::ProjectiveQsd,
            Mode::Generalized => {
                Engine::Generalized(MeasurementMap::new(experiment.kraus.clone())?)
            }
            Mode::CommutingQsd => {
                Engine::CommutingQsd(MeasurementMap::new(experiment.kraus.clone())?)
            }
        };
        Ok(Self { experiment, engine })
    }

    pub fn experiment(&self) -> &Experiment {
        &self.experiment
    }

    pub fn seed(&self, index: u64) -> StreamSeed {
        StreamSeed::new(self.experiment.config.master_seed, index)
    }

    fn target_fidelity(&self, k: usize, state: &QuantumState) -> Result<f64> {
        let (target, _) =
            apply_and_normalize(self.experiment.kraus.operator(k), &self.experiment.psi0)?;
        fidelity(&target, state)
    }

    /// Simulates trajectory `index`; the result depends only on the config,
    /// the master seed and `index`.
    pub fn simulate(&self, index: u64) -> Result<TrajectorySummary> {
        let cfg = &self.experiment.config;
        let p0 = &self.experiment.p0;
        let seed = self.seed(index);
        let checkpoints = &cfg.checkpoints;
        let mut values = Vec::with_capacity(checkpoints.len());
        let mut moments = Vec::with_capacity(checkpoints.len());
        let mut record = |v: &[f64]| {
            moments.push(moment_functional(v));
            values.push(v.to_vec());
        };
        let summary =
            |terminal_outcome, steps, time, fidelity, values, moments, final_values: Vec<f64>| {
                TrajectorySummary {
                    index,
                    seed,
                    terminal_outcome,
                    steps,
                    time,
                    fidelity,
                    checkpoint_values: values,
                    checkpoint_moments: moments,
                    final_moment: moment_functional(&final_values),
                    final_values,
                }
            };
        match &self.engine {
            Engine::Discrete { set, basis } => {
                let chain = cfg.chain.chain_config();
                let mut rng = seed.rng();
                let mut walker = ChainWalker::new(set, p0)?;
                let run_to = |walker: &mut ChainWalker, rng: &mut _, until: u64| {
                    while walker.steps_taken() < until && walker.collapsed(chain.eps_stop).is_none()
                    {
                        walker.advance(rng);
                    }
                };
                for &c in checkpoints {
                    run_to(&mut walker, &mut rng, (c as u64).min(chain.max_steps));
                    record(walker.tilde());
                }
                run_to(&mut walker, &mut rng, chain.max_steps);
                let terminal = walker.collapsed(chain.eps_stop);
                let fid = match (terminal, basis) {
                    (Some(k), Some(basis)) => {
                        let x = walker.x()?;
                        Some(self.target_fidelity(k, &reconstruct_state(&x, basis)?)?)
                    }
                    _ => None,
                };
                let steps = walker.steps_taken();
                Ok(summary(
                    terminal,
                    steps,
                    steps as f64,
                    fid,
                    values,
                    moments,
                    walker.tilde().to_vec(),
                ))
            }
            Engine::Continuous | Engine::Generalized(_) => {
                let e = SimplexPoint::identity(p0.dim())?;
                let mut walker = SdeWalker::new(&e, p0, cfg.sde)?;
                let mut rng = seed.rng();
                let mut dw = vec![0.0; p0.dim()];
                let max_steps = cfg.sde.max_steps();
                let mut run_to = |walker: &mut SdeWalker, until: u64| -> Result<()> {
                    while walker.steps() < until && !walker.finished() {
                        wiener_increments(&mut rng, cfg.sde.dt, &mut dw);
                        walker.step(&dw)?;
                    }
                    Ok(())
                };
                for &t in checkpoints {
                    run_to(&mut walker, checkpoint_step(t, cfg.sde.dt).min(max_steps))?;
                    record(walker.tilde());
                }
                run_to(&mut walker, max_steps)?;
                let fid = match &self.engine {
                    Engine::Generalized(map) => {
                        finish_generalized(&self.experiment.psi0, map, &walker, seed)?
                            .fidelity_to_target
                    }
                    _ => None,
                };
                Ok(summary(
                    walker.collapsed(),
                    walker.steps(),
                    walker.time(),
                    fid,
                    values,
                    moments,
                    walker.tilde().to_vec(),
                ))
            }
            Engine::ProjectiveQsd => {
                let run = run_coupled_projective(
                    &self.experiment.psi0,
                    &self.experiment.kraus,
                    &cfg.sde,
                    seed,
                    checkpoints,
                )?;
                for c in &run.checkpoints {
                    moments.push(moment_functional(&c.tilde));
                    values.push(c.weights.clone());
                }
                let fid = match run.terminal_outcome {
                    Some(k) => Some(self.target_fidelity(k, &run.final_state)?),
                    None => None,
                };
                let time = run.steps as f64 * cfg.sde.dt;
                Ok(summary(
                    run.terminal_outcome,
                    run.steps,
                    time,
                    fid,
                    values,
                    moments,
                    run.terminal.tilde.clone(),
                ))
            }
            Engine::CommutingQsd(map) => {
                let run =
                    run_commuting_qsd(&self.experiment.psi0, map, &cfg.sde, seed, checkpoints)?;
                for c in &run.checkpoints {
                    record(&c.tilde);
                }
                let fid = match run.terminal_index {
                    Some(k) => Some(self.target_fidelity(k, &run.final_state)?),
                    None => None,
                };
                let time = run.steps as f64 * cfg.sde.dt;
                Ok(summary(
                    run.terminal_index,
                    run.steps,
                    time,
                    fid,
                    values,
                    moments,
                    run.terminal.tilde.clone(),
                ))
            }
        }
    }

    /// Re-runs one trajectory keeping every outcome or noise draw. The
    /// classical path matches what [`Ensemble::simulate`] saw for every mode
    /// except commuting_qsd, whose path is driven by the state itself.
    pub fn replay(&self, index: u64, record_every: u64) -> Result<ReplayRecord> {
        let cfg = &self.experiment.config;
        let seed = self.seed(index);
        match &self.engine {
            Engine::Discrete { set, .. } => Ok(ReplayRecord::Chain(run_chain(
                &self.experiment.psi0,
                set,
                &cfg.chain.chain_config(),
                seed,
            )?)),
            Engine::CommutingQsd(_) => Err(Error::Domain(
                "commuting_qsd paths depend on the integrated state and cannot be replayed from noise alone".into(),
            )),
            _ => {
                let e = SimplexPoint::identity(self.experiment.p0.dim())?;
                Ok(ReplayRecord::Continuous(run_trajectory(&e, &self.experiment.p0, &cfg.sde, seed, record_every)?))
            }
        }
    }
}

/// Runs every trajectory of the experiment on `workers` threads (0 lets the
/// pool decide) and folds the results in index order.
pub fn run_ensemble(experiment: Experiment) -> Result<EnsembleRun> {
    let workers = experiment.config.workers;
    let ensemble = Ensemble::new(experiment)?;
    let cfg = &ensemble.experiment.config;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let started = Instant::now();
    let summaries: Vec<TrajectorySummary> = pool.install(|| {
        (0..cfg.trajectories)
            .into_par_iter()
            .map(|i| ensemble.simulate(i))
            .collect::<Result<Vec<_>>>()
    })?;
    let elapsed = started.elapsed().as_secs_f64();
    let stats = EnsembleStats::from_summaries(
        cfg.mode,
        cfg.master_seed,
        ensemble.experiment.p0.components(),
        &cfg.checkpoints,
        &summaries,
    )?;
    Ok(EnsembleRun {
        stats,
        summaries,
        meta: RunMeta {
            wall_clock_seconds: elapsed,
            workers: pool.current_num_threads(),
            trajectories_per_second: cfg.trajectories as f64 / elapsed.max(1e-9),
        },
    })
}
