//! Config file schema (TOML) and its translation into runnable tasks.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::costs::{EndEffectorGoal, GoalCostSpec, Obstacle};
use crate::error::{Error, Result};
use crate::harness::disturbance::{default_magnitude, DisturbanceKind, DisturbanceLevel, DisturbanceSpec};
use crate::harness::tasks::Task;
use crate::systems::SystemModel;
use crate::trajectory::TimeGrid;

pub const SCHEMA_VERSION: u32 = 1;

/// Every key accepted by the config schema, kept adjacent to the structs so
/// the documentation lint can check the reference covers them all.
pub const CONFIG_KEYS: &[&str] = &[
    "schema_version",
    "system.name",
    "system.dt",
    "system.params",
    "horizon.steps",
    "horizon.short",
    "cost.x_goal",
    "cost.q_diag",
    "cost.q_scalar",
    "cost.r_diag",
    "cost.r_scalar",
    "cost.qt_diag",
    "cost.qt_scalar",
    "cost.obstacles",
    "cost.obstacles.center",
    "cost.obstacles.radius",
    "cost.obstacles.weight",
    "cost.ee_goal",
    "cost.ee_goal.target",
    "cost.ee_goal.stage_weight",
    "cost.ee_goal.terminal_weight",
    "initial.x0",
    "initial.u_init",
    "solver.max_iterations",
    "solver.cost_tol_rel",
    "solver.grad_tol",
    "mpc.warm_start",
    "mpc.max_iterations",
    "mpc.cost_tol_rel",
    "mpc.grad_tol",
    "disturbance.kind",
    "disturbance.level",
    "disturbance.seed",
    "disturbance.window",
    "disturbance.magnitudes.impulse",
    "disturbance.magnitudes.time_varying",
    "experiment.replications",
    "experiment.master_seed",
    "experiment.jobs",
    "output.dir",
];

/// Command-line flags, mirrored in the reference for the same lint.
pub const CLI_FLAGS: &[&str] = &[
    "--config",
    "--seed",
    "--out",
    "--controller",
    "--level",
    "--jobs",
    "--samples",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
    pub dt: Option<f64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    pub steps: Option<usize>,
    pub short: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub center: Vec<f64>,
    pub radius: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EeGoalConfig {
    pub target: Vec<f64>,
    #[serde(default)]
    pub stage_weight: f64,
    pub terminal_weight: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub x_goal: Option<Vec<f64>>,
    pub q_diag: Option<Vec<f64>>,
    pub q_scalar: Option<f64>,
    pub r_diag: Option<Vec<f64>>,
    pub r_scalar: Option<f64>,
    pub qt_diag: Option<Vec<f64>>,
    pub qt_scalar: Option<f64>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleConfig>,
    pub ee_goal: Option<EeGoalConfig>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub x0: Option<Vec<f64>>,
    /// "zeros", "hover", or unset (task default).
    pub u_init: Option<String>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iterations: Option<usize>,
    pub cost_tol_rel: Option<f64>,
    pub grad_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcConfig {
    pub warm_start: Option<bool>,
    pub max_iterations: Option<usize>,
    pub cost_tol_rel: Option<f64>,
    pub grad_tol: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnitudesConfig {
    pub impulse: Option<[f64; 3]>,
    pub time_varying: Option<[f64; 3]>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceConfig {
    /// "impulse", "time_varying", or "both".
    pub kind: Option<String>,
    pub level: Option<String>,
    pub seed: Option<u64>,
    pub window: Option<[usize; 2]>,
    #[serde(default)]
    pub magnitudes: MagnitudesConfig,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub replications: Option<usize>,
    pub master_seed: Option<u64>,
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub system: SystemConfig,
    #[serde(default)]
    pub horizon: Option<HorizonConfig>,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub disturbance: DisturbanceConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// A fully resolved configuration ready to run.
#[derive(Clone, Debug)]
pub struct ResolvedConfig {
    pub task: Task,
    pub mpc_warm_start: bool,
    pub disturbance_kinds: Vec<DisturbanceKind>,
    pub level: DisturbanceLevel,
    pub disturbance_seed: u64,
    pub disturbance_window: Option<(usize, usize)>,
    pub magnitudes_impulse: [f64; 3],
    pub magnitudes_time_varying: [f64; 3],
    pub replications: usize,
    pub master_seed: u64,
    pub jobs: usize,
    pub output_dir: String,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(format!("config parse: {e}")))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    /// Resolves the config against the system's preset task: explicit keys
    /// override the preset, everything else keeps the tuned defaults.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let mut task = crate::harness::tasks::preset(&self.system.name)?;

        if self.system.dt.is_some() || !self.system.params.is_empty() {
            let dt = self.system.dt.unwrap_or(task.model.dt());
            task.model = SystemModel::from_config(&self.system.name, dt, &self.system.params)?;
        }
        let nx = task.model.nx();
        let nu = task.model.nu();

        let mut steps = task.grid.steps();
        if let Some(h) = &self.horizon {
            if let Some(s) = h.steps {
                steps = s;
            }
            if let Some(short) = h.short {
                task.short_horizon = short;
            }
        }
        task.grid = TimeGrid::new(steps, task.model.dt())?;
        if task.short_horizon == 0 || task.short_horizon > steps {
            return Err(Error::Config(format!(
                "horizon.short must lie in 1..={steps}, got {}",
                task.short_horizon
            )));
        }

        task.cost = self.build_cost(&task, nx, nu)?;
        if let Some(x0) = &self.initial.x0 {
            if x0.len() != nx {
                return Err(Error::Config(format!("initial.x0 must have {nx} entries, got {}", x0.len())));
            }
            task.x0 = DVector::from_column_slice(x0);
        }
        task.u_init = match self.initial.u_init.as_deref() {
            None => resize_controls(&task.u_init, steps, nu),
            Some("zeros") => vec![DVector::zeros(nu); steps],
            Some("hover") => {
                let hover = hover_controls(&task.model)?;
                vec![hover; steps]
            }
            Some(other) => return Err(Error::Config(format!("unknown initial.u_init '{other}'"))),
        };

        if let Some(v) = self.solver.max_iterations {
            task.settings.max_iterations = v;
        }
        if let Some(v) = self.solver.cost_tol_rel {
            task.settings.cost_tol_rel = v;
        }
        if let Some(v) = self.solver.grad_tol {
            task.settings.grad_tol = v;
        }

        let disturbance_kinds = match self.disturbance.kind.as_deref() {
            None | Some("both") => vec![DisturbanceKind::Impulse, DisturbanceKind::TimeVarying],
            Some("impulse") => vec![DisturbanceKind::Impulse],
            Some("time_varying") => vec![DisturbanceKind::TimeVarying],
            Some(other) => return Err(Error::Config(format!("unknown disturbance.kind '{other}'"))),
        };
        let level = match self.disturbance.level.as_deref() {
            None | Some("medium") => DisturbanceLevel::Medium,
            Some("small") => DisturbanceLevel::Small,
            Some("large") => DisturbanceLevel::Large,
            Some(other) => return Err(Error::Config(format!("unknown disturbance.level '{other}'"))),
        };
        let system = task.model.name().to_string();
        let defaults = |kind: DisturbanceKind| -> [f64; 3] {
            [
                default_magnitude(&system, kind, DisturbanceLevel::Small),
                default_magnitude(&system, kind, DisturbanceLevel::Medium),
                default_magnitude(&system, kind, DisturbanceLevel::Large),
            ]
        };

        lint_weight_separation(&task.cost);

        Ok(ResolvedConfig {
            mpc_warm_start: self.mpc.warm_start.unwrap_or(true),
            disturbance_kinds,
            level,
            disturbance_seed: self.disturbance.seed.unwrap_or(0),
            disturbance_window: self.disturbance.window.map(|w| (w[0], w[1])),
            magnitudes_impulse: self
                .disturbance
                .magnitudes
                .impulse
                .unwrap_or_else(|| defaults(DisturbanceKind::Impulse)),
            magnitudes_time_varying: self
                .disturbance
                .magnitudes
                .time_varying
                .unwrap_or_else(|| defaults(DisturbanceKind::TimeVarying)),
            replications: self.experiment.replications.unwrap_or(50),
            master_seed: self.experiment.master_seed.unwrap_or(1234),
            jobs: self.experiment.jobs.unwrap_or(2),
            output_dir: self.output.dir.clone().unwrap_or_else(|| "out".to_string()),
            task,
        })
    }

    fn build_cost(&self, task: &Task, nx: usize, nu: usize) -> Result<GoalCostSpec> {
        let c = &self.cost;
        let matrix_from = |diag: &Option<Vec<f64>>, scalar: &Option<f64>, n: usize, fallback: &DMatrix<f64>, key: &str| -> Result<DMatrix<f64>> {
            match (diag, scalar) {
                (Some(d), _) => {
                    if d.len() != n {
                        return Err(Error::Config(format!("{key} must have {n} entries, got {}", d.len())));
                    }
                    Ok(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
                }
                (None, Some(s)) => Ok(DMatrix::identity(n, n) * *s),
                (None, None) => Ok(fallback.clone()),
            }
        };
        let x_goal = match &c.x_goal {
            Some(g) => {
                if g.len() != nx {
                    return Err(Error::Config(format!("cost.x_goal must have {nx} entries, got {}", g.len())));
                }
                DVector::from_column_slice(g)
            }
            None => task.cost.x_goal.clone(),
        };
        let q = matrix_from(&c.q_diag, &c.q_scalar, nx, &task.cost.q, "cost.q_diag")?;
        let r = matrix_from(&c.r_diag, &c.r_scalar, nu, &task.cost.r, "cost.r_diag")?;
        let q_terminal = matrix_from(&c.qt_diag, &c.qt_scalar, nx, &task.cost.q_terminal, "cost.qt_diag")?;
        let obstacles = if c.obstacles.is_empty() {
            task.cost.obstacles.clone()
        } else {
            c.obstacles
                .iter()
                .map(|o| Obstacle {
                    center: DVector::from_column_slice(&o.center),
                    radius: o.radius,
                    weight: o.weight,
                })
                .collect()
        };
        let ee_goal = match &c.ee_goal {
            Some(g) => Some(EndEffectorGoal {
                target: DVector::from_column_slice(&g.target),
                stage_weight: g.stage_weight,
                terminal_weight: g.terminal_weight,
            }),
            None => task.cost.ee_goal.clone(),
        };
        let spec = GoalCostSpec { x_goal, q, r, q_terminal, obstacles, ee_goal };
        spec.validate(nx, nu)?;
        Ok(spec)
    }

    /// Builds the disturbance spec for one `(kind, level)` cell of this
    /// config.
    pub fn disturbance_spec(resolved: &ResolvedConfig, kind: DisturbanceKind, level: DisturbanceLevel) -> Result<DisturbanceSpec> {
        let magnitudes = match kind {
            DisturbanceKind::Impulse => resolved.magnitudes_impulse,
            DisturbanceKind::TimeVarying => resolved.magnitudes_time_varying,
        };
        let mut spec = DisturbanceSpec::new(kind, level, magnitudes[level.index()])?;
        spec.seed = resolved.disturbance_seed;
        spec.window = resolved.disturbance_window;
        Ok(spec)
    }
}

fn resize_controls(controls: &[DVector<f64>], steps: usize, nu: usize) -> Vec<DVector<f64>> {
    (0..steps)
        .map(|t| {
            controls
                .get(t.min(controls.len().saturating_sub(1)))
                .cloned()
                .unwrap_or_else(|| DVector::zeros(nu))
        })
        .collect()
}

fn hover_controls(model: &SystemModel) -> Result<DVector<f64>> {
    match model {
        SystemModel::Quadcopter(p) => Ok(p.hover_thrusts()),
        SystemModel::Bicopter(p) => Ok(p.hover_thrusts()),
        other => Err(Error::Config(format!(
            "initial.u_init = \"hover\" is not defined for system '{}'",
            other.name()
        ))),
    }
}

/// The running weight is meant to be much smaller than the terminal weight;
/// warn (do not fail) when that separation is missing.
fn lint_weight_separation(cost: &GoalCostSpec) {
    let q_max = cost.q.diagonal().amax();
    let qt_max = cost.q_terminal.diagonal().amax();
    if qt_max > 0.0 && q_max > 0.1 * qt_max {
        log::warn!(
            target: "config",
            "running weight ({q_max:.3e}) is not much smaller than the terminal weight ({qt_max:.3e}); \
             the trajectory distribution will be narrow everywhere"
        );
    }
}
