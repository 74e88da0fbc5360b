//! Command-line interface: `plan`, `sample`, `track`, `bench`, `check`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::harness::config::{Config, ResolvedConfig};
use crate::harness::disturbance::{make_disturbance, DisturbanceLevel};
use crate::harness::experiment::{
    run_experiment_with_setup, sample_state_trajectories, ExperimentSpec, PlanSetup,
};
use crate::harness::export::{
    export_results, write_trajectory_dump, DumpHeader, ExportFormat,
};
use crate::tracking::{run_closed_loop, ControllerKind};

#[derive(Parser)]
#[command(
    name = "trajdist",
    about = "Trajectory optimization with Gaussian trajectory distributions and distribution-tracking MPC",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the long-horizon problem and dump the plan with its marginal
    /// standard deviations, plus the convergence trace.
    Plan {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Draw trajectory samples from the planned distribution.
    Sample {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of samples to draw.
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// One closed-loop tracking run under the configured disturbance.
    Track {
        #[command(flatten)]
        common: CommonArgs,
        /// Controller: ilqr_feed | mpc_mean | mpc_marg | mpc_cond.
        #[arg(long)]
        controller: String,
        /// Disturbance level override: small | medium | large.
        #[arg(long)]
        level: Option<String>,
    },
    /// Full replication benchmark (controllers x levels) with CSV/JSON
    /// exports.
    Bench {
        #[command(flatten)]
        common: CommonArgs,
        /// Restrict to one level: small | medium | large.
        #[arg(long)]
        level: Option<String>,
        /// Restrict to one controller.
        #[arg(long)]
        controller: Option<String>,
        /// Worker pool width.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the built-in self-tests.
    Check,
}

fn parse_level(s: &str) -> Result<DisturbanceLevel> {
    match s {
        "small" => Ok(DisturbanceLevel::Small),
        "medium" => Ok(DisturbanceLevel::Medium),
        "large" => Ok(DisturbanceLevel::Large),
        other => Err(Error::Config(format!("unknown level '{other}'"))),
    }
}

fn load_resolved(common: &CommonArgs) -> Result<ResolvedConfig> {
    let config = Config::load(&common.config)?;
    let mut resolved = config.resolve()?;
    if let Some(seed) = common.seed {
        resolved.master_seed = seed;
    }
    if let Some(out) = &common.out {
        resolved.output_dir = out.display().to_string();
    }
    Ok(resolved)
}

fn ensure_out_dir(resolved: &ResolvedConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&resolved.output_dir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    Ok(dir)
}

fn dump_plan(setup: &PlanSetup, dir: &Path) -> Result<PathBuf> {
    let ilqr_dist = crate::ilqr::extract_distribution(&setup.plan, &setup.task.model, &setup.task.cost)?;
    let stds: Vec<DVector<f64>> = (0..=setup.task.grid.steps())
        .map(|t| ilqr_dist.marginal_std(t))
        .collect();
    let header = DumpHeader {
        system: setup.task.model.name().to_string(),
        nx: setup.task.model.nx(),
        nu: setup.task.model.nu(),
        horizon: setup.task.grid.steps(),
        dt: setup.task.grid.dt(),
    };
    let path = dir.join("plan.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    write_trajectory_dump(file, &header, &setup.plan.trajectory, Some(&stds))?;

    let trace_path = dir.join("plan_trace.csv");
    let mut trace = String::from("iteration,cost,alpha,reg,grad_inf\n");
    for rec in &setup.plan.trace {
        trace.push_str(&format!(
            "{},{:.17e},{},{:.17e},{:.17e}\n",
            rec.iteration,
            rec.cost,
            rec.alpha.map(|a| a.to_string()).unwrap_or_default(),
            rec.reg,
            rec.grad_inf
        ));
    }
    std::fs::write(&trace_path, trace).map_err(|e| Error::io(trace_path.display().to_string(), e))?;
    Ok(path)
}

fn cmd_plan(common: &CommonArgs) -> Result<()> {
    let resolved = load_resolved(common)?;
    let dir = ensure_out_dir(&resolved)?;
    let setup = PlanSetup::prepare(resolved.task.clone())?;
    let path = dump_plan(&setup, &dir)?;
    println!(
        "plan: {} steps, cost {:.6e}, {} iterations, converged={}, wrote {}",
        setup.task.grid.steps(),
        setup.plan.final_cost,
        setup.plan.iterations,
        setup.plan.converged,
        path.display()
    );
    Ok(())
}

fn cmd_sample(common: &CommonArgs, samples: usize) -> Result<()> {
    let resolved = load_resolved(common)?;
    let dir = ensure_out_dir(&resolved)?;
    let setup = PlanSetup::prepare(resolved.task.clone())?;
    dump_plan(&setup, &dir)?;
    let trajectories = sample_state_trajectories(&setup, samples, resolved.master_seed)?;
    let path = dir.join("samples.csv");
    let mut out = String::from("sample,t");
    for i in 0..setup.task.model.nx() {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for (s, traj) in trajectories.iter().enumerate() {
        for (t, x) in traj.iter().enumerate() {
            out.push_str(&format!("{s},{t}"));
            for v in x.iter() {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push('\n');
        }
    }
    std::fs::write(&path, out).map_err(|e| Error::io(path.display().to_string(), e))?;
    println!("sample: wrote {} trajectories to {}", samples, path.display());
    Ok(())
}

fn cmd_track(common: &CommonArgs, controller: &str, level: Option<&str>) -> Result<()> {
    let resolved = load_resolved(common)?;
    let dir = ensure_out_dir(&resolved)?;
    let kind = ControllerKind::parse(controller)?;
    let level = level.map(parse_level).transpose()?.unwrap_or(resolved.level);
    let setup = PlanSetup::prepare(resolved.task.clone())?;
    let cfg = setup.tracker_config(resolved.mpc_warm_start);

    let dist_kind = resolved.disturbance_kinds[0];
    let spec = Config::disturbance_spec(&resolved, dist_kind, level)?;
    let perturbations = make_disturbance(
        &spec,
        setup.task.model.velocity_indices().len(),
        setup.task.grid.steps(),
        resolved.master_seed,
    )?;
    let outcome = run_closed_loop(&setup.plan, &setup.dist, kind, &setup.task.model, &cfg, &perturbations)?;
    let raw_cost = if outcome.diverged {
        f64::NAN
    } else {
        crate::costs::eval_goal_cost(&setup.task.cost, &setup.task.model, &outcome.trajectory)?
    };

    let header = DumpHeader {
        system: setup.task.model.name().to_string(),
        nx: setup.task.model.nx(),
        nu: setup.task.model.nu(),
        horizon: outcome.trajectory.horizon(),
        dt: setup.task.grid.dt(),
    };
    let path = dir.join(format!("track_{}.csv", kind.label()));
    let file = std::fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?;
    write_trajectory_dump(file, &header, &outcome.trajectory, None)?;

    let telemetry_path = dir.join(format!("track_{}_telemetry.csv", kind.label()));
    let mut telemetry = String::from("tau,q_min_eig,q_max_eig,inner_iterations,controls_applied\n");
    for rec in &outcome.telemetry {
        telemetry.push_str(&format!(
            "{},{},{},{},{}\n",
            rec.tau,
            rec.q_min_eig.map(|v| format!("{v:.6e}")).unwrap_or_default(),
            rec.q_max_eig.map(|v| format!("{v:.6e}")).unwrap_or_default(),
            rec.inner_iterations.map(|v| v.to_string()).unwrap_or_default(),
            rec.controls_applied
        ));
    }
    std::fs::write(&telemetry_path, telemetry)
        .map_err(|e| Error::io(telemetry_path.display().to_string(), e))?;

    println!(
        "track: controller={} kind={} level={} diverged={} raw_cost={raw_cost:.6e} wrote {}",
        kind.label(),
        dist_kind.label(),
        level.label(),
        outcome.diverged,
        path.display()
    );
    Ok(())
}

fn cmd_bench(
    common: &CommonArgs,
    level: Option<&str>,
    controller: Option<&str>,
    jobs: Option<usize>,
) -> Result<()> {
    let resolved = load_resolved(common)?;
    let dir = ensure_out_dir(&resolved)?;
    let levels = match level {
        Some(l) => vec![parse_level(l)?],
        None => DisturbanceLevel::ALL.to_vec(),
    };
    let controllers = match controller {
        Some(c) => vec![ControllerKind::parse(c)?],
        None => ControllerKind::ALL.to_vec(),
    };
    let jobs = jobs.unwrap_or(resolved.jobs);

    let setup = PlanSetup::prepare(resolved.task.clone())?;
    let mut results = Vec::new();
    for &kind in &resolved.disturbance_kinds {
        for &level in &levels {
            let spec = ExperimentSpec {
                task: resolved.task.clone(),
                disturbance: Config::disturbance_spec(&resolved, kind, level)?,
                controllers: controllers.clone(),
                replications: resolved.replications,
                master_seed: resolved.master_seed,
                jobs,
                warm_start: resolved.mpc_warm_start,
            };
            let result = run_experiment_with_setup(&setup, &spec)?;
            for stat in &result.stats {
                println!(
                    "bench: {} {} {} {:<10} mean={:.3} std={:.3} included={} excluded={}",
                    result.system,
                    result.kind.label(),
                    result.level.label(),
                    stat.controller.label(),
                    stat.mean_normalized,
                    stat.std_normalized,
                    stat.included,
                    stat.excluded
                );
            }
            results.push(result);
        }
    }

    let csv_path = dir.join("bench_runs.csv");
    export_results(&results, &csv_path, ExportFormat::Csv)?;
    let json_path = dir.join("bench_summary.json");
    export_results(&results, &json_path, ExportFormat::Json)?;
    println!("bench: wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_check() -> Result<()> {
    let outcomes = crate::harness::check::run_all();
    let mut failed = 0;
    for o in &outcomes {
        println!("check {}: {} ({})", o.name, if o.passed { "ok" } else { "FAIL" }, o.detail);
        if !o.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(Error::SolverFailure(format!("{failed} self-test(s) failed")));
    }
    Ok(())
}

fn error_record(err: &Error) -> String {
    let kind = match err {
        Error::Dimension { .. } => "dimension",
        Error::NonFinite { .. } => "non_finite",
        Error::Contract(_) => "contract",
        Error::SolverFailure(_) => "solver_failure",
        Error::Distribution(_) => "distribution",
        Error::InvalidCovariance(_) => "invalid_covariance",
        Error::Config(_) => "config",
        Error::Controller { .. } => "controller",
        Error::Io { .. } => "io",
    };
    serde_json::json!({ "error": { "kind": kind, "message": err.to_string() } }).to_string()
}

/// Entry point shared by the binary and the integration tests. Exit codes:
/// 0 success, 2 usage/config errors, 1 runtime failures.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests exit 0 through clap's printer.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::Plan { common } => cmd_plan(common),
        Command::Sample { common, samples } => cmd_sample(common, *samples),
        Command::Track { common, controller, level } => {
            cmd_track(common, controller, level.as_deref())
        }
        Command::Bench { common, level, controller, jobs } => {
            cmd_bench(common, level.as_deref(), controller.as_deref(), *jobs)
        }
        Command::Check => cmd_check(),
    };
    match outcome {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", error_record(&err));
            match err {
                Error::Config(_) | Error::Io { .. } => 2,
                _ => 1,
            }
        }
    }
}
