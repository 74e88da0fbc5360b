//! The N-replication disturbance benchmark: per-seed fairness, normalized
//! costs, and per-controller aggregates.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::costs::eval_goal_cost;
use crate::error::{Error, Result};
use crate::gaussian::TrajDist;
use crate::harness::disturbance::{make_disturbance, DisturbanceKind, DisturbanceLevel, DisturbanceSpec};
use crate::harness::tasks::Task;
use crate::ilqr::{extract_distribution, ilqr_solve, ILQRSolution};
use crate::tracking::{run_closed_loop, ControllerKind, TrackerConfig};

/// A planned long-horizon task ready for tracking runs.
pub struct PlanSetup {
    pub task: Task,
    pub plan: ILQRSolution,
    pub dist: TrajDist,
}

impl PlanSetup {
    /// Solves the long-horizon problem and extracts its distribution. A plan
    /// failure aborts the experiment with the solver diagnostic.
    pub fn prepare(task: Task) -> Result<Self> {
        let plan = ilqr_solve(&task.model, &task.cost, &task.x0, &task.u_init, &task.settings)
            .map_err(|e| Error::SolverFailure(format!("long-horizon plan failed: {e}")))?;
        let ilqr_dist = extract_distribution(&plan, &task.model, &task.cost)?;
        let dist = ilqr_dist.traj_dist()?;
        Ok(PlanSetup { task, plan, dist })
    }

    pub fn tracker_config(&self, warm_start: bool) -> TrackerConfig {
        let mut cfg = TrackerConfig::new(
            self.task.short_horizon,
            self.task.cost.q_terminal.clone(),
            self.task.cost.r.clone(),
        );
        cfg.obstacles = self.task.cost.obstacles.clone();
        cfg.warm_start = warm_start;
        cfg
    }
}

/// Full experiment specification for one `(system, kind, level)` cell.
pub struct ExperimentSpec {
    pub task: Task,
    pub disturbance: DisturbanceSpec,
    pub controllers: Vec<ControllerKind>,
    pub replications: usize,
    pub master_seed: u64,
    pub jobs: usize,
    pub warm_start: bool,
}

/// One closed-loop run within a replication.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub controller: ControllerKind,
    pub seed: u64,
    pub raw_cost: Option<f64>,
    pub normalized_cost: Option<f64>,
    pub diverged: bool,
}

#[derive(Clone, Debug)]
pub struct ControllerStats {
    pub controller: ControllerKind,
    pub mean_normalized: f64,
    pub std_normalized: f64,
    pub included: usize,
    pub excluded: usize,
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub system: String,
    pub kind: DisturbanceKind,
    pub level: DisturbanceLevel,
    pub records: Vec<RunRecord>,
    pub stats: Vec<ControllerStats>,
    /// Seeds where every controller diverged (dropped from the records).
    pub dropped_seeds: usize,
}

impl ExperimentResult {
    pub fn stats_for(&self, controller: ControllerKind) -> Option<&ControllerStats> {
        self.stats.iter().find(|s| s.controller == controller)
    }
}

/// Runs one replication: every controller faces the identical disturbance
/// realization.
fn run_replication(
    setup: &PlanSetup,
    cfg: &TrackerConfig,
    controllers: &[ControllerKind],
    disturbance: &DisturbanceSpec,
    seed: u64,
) -> Result<Vec<RunRecord>> {
    let horizon = setup.task.grid.steps();
    let vel_dim = setup.task.model.velocity_indices().len();
    let perturbations = make_disturbance(disturbance, vel_dim, horizon, seed)?;

    let mut records = Vec::with_capacity(controllers.len());
    for &controller in controllers {
        let outcome = run_closed_loop(
            &setup.plan,
            &setup.dist,
            controller,
            &setup.task.model,
            cfg,
            &perturbations,
        )?;
        let raw_cost = if outcome.diverged {
            None
        } else {
            let cost = eval_goal_cost(&setup.task.cost, &setup.task.model, &outcome.trajectory)?;
            if cost.is_finite() {
                Some(cost)
            } else {
                None
            }
        };
        records.push(RunRecord {
            controller,
            seed,
            raw_cost,
            normalized_cost: None,
            diverged: raw_cost.is_none(),
        });
    }

    // Normalize by the per-seed minimum over the included controllers.
    let min = records
        .iter()
        .filter_map(|r| r.raw_cost)
        .fold(f64::INFINITY, f64::min);
    if min.is_finite() {
        for r in records.iter_mut() {
            r.normalized_cost = r.raw_cost.map(|c| c / min);
        }
    }
    Ok(records)
}

/// Runs the full replication benchmark for one experiment cell.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    let setup = PlanSetup::prepare(spec.task.clone())?;
    run_experiment_with_setup(&setup, spec)
}

/// Variant that reuses an existing plan (several disturbance cells share one
/// long-horizon solve).
pub fn run_experiment_with_setup(setup: &PlanSetup, spec: &ExperimentSpec) -> Result<ExperimentResult> {
    if spec.controllers.is_empty() {
        return Err(Error::Contract("experiment needs at least one controller".into()));
    }
    let cfg = setup.tracker_config(spec.warm_start);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let mut per_seed: Vec<(u64, Result<Vec<RunRecord>>)> = pool.install(|| {
        (0..spec.replications as u64)
            .into_par_iter()
            .map(|i| {
                let seed = spec.master_seed.wrapping_add(i);
                (seed, run_replication(setup, &cfg, &spec.controllers, &spec.disturbance, seed))
            })
            .collect()
    });
    per_seed.sort_by_key(|(seed, _)| *seed);

    let mut records = Vec::new();
    let mut dropped_seeds = 0usize;
    for (_, outcome) in per_seed {
        let mut seed_records = outcome?;
        if seed_records.iter().all(|r| r.diverged) {
            dropped_seeds += 1;
            continue;
        }
        records.append(&mut seed_records);
    }

    let stats = spec
        .controllers
        .iter()
        .map(|&controller| {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.controller == controller)
                .filter_map(|r| r.normalized_cost)
                .collect();
            let excluded = records
                .iter()
                .filter(|r| r.controller == controller && r.diverged)
                .count();
            let n = values.len();
            let mean = if n > 0 { values.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let var = if n > 0 {
                values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64
            } else {
                f64::NAN
            };
            ControllerStats {
                controller,
                mean_normalized: mean,
                std_normalized: var.sqrt(),
                included: n,
                excluded,
            }
        })
        .collect();

    Ok(ExperimentResult {
        system: setup.task.model.name().to_string(),
        kind: spec.disturbance.kind,
        level: spec.disturbance.level,
        records,
        stats,
        dropped_seeds,
    })
}

/// Draws joint trajectory samples from a planned distribution (the data
/// behind the distribution figures).
pub fn sample_state_trajectories(
    setup: &PlanSetup,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<DVector<f64>>>> {
    let nx = setup.task.model.nx();
    let horizon = setup.task.grid.steps();
    let joints = setup.dist.base().sample(count, seed)?;
    Ok(joints
        .into_iter()
        .map(|joint| {
            (0..=horizon)
                .map(|t| joint.rows(t * nx, nx).clone_owned())
                .collect()
        })
        .collect())
}
