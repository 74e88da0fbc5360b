use trajdist::harness::disturbance::{default_magnitude, DisturbanceKind, DisturbanceLevel, DisturbanceSpec};
use trajdist::harness::experiment::{run_experiment_with_setup, ExperimentSpec, PlanSetup};
use trajdist::harness::tasks;
use trajdist::systems::{QuadcopterParams, SystemModel};
use trajdist::ilqr::extract_distribution;
use nalgebra::{DMatrix, DVector};

fn diag(label: &str, params: QuadcopterParams, q_pos: f64, r: f64) {
    let mut task = tasks::quadcopter_reach();
    let hover = params.hover_thrusts();
    task.model = SystemModel::Quadcopter(params);
    task.u_init = vec![hover; 150];
    task.cost.x_goal = DVector::from_vec(vec![3.0, 2.4, 1.2, 0.0,0.0,0.0, 0.0,0.0,0.0, 0.0,0.0,0.0]);
    let mut qd = vec![q_pos; 3]; qd.extend(vec![q_pos/2.0;3]); qd.extend(vec![q_pos/10.0;6]);
    task.cost.q = DMatrix::from_diagonal(&DVector::from_column_slice(&qd));
    task.cost.r = DMatrix::identity(4,4) * r;
    task.cost.obstacles[0].center = DVector::from_vec(vec![1.5, 1.2, 0.6]);
    task.cost.obstacles[0].radius = 0.4;
    let setup = match PlanSetup::prepare(task.clone()) { Ok(s)=>s, Err(e)=>{ println!("{label}: PLAN FAILED {e}"); return; } };
    let d = extract_distribution(&setup.plan, &task.model, &task.cost).unwrap();
    let s75 = d.marginal_std(75); let s150 = d.marginal_std(150);
    let vmax = setup.plan.trajectory.states.iter().map(|x| x.rows(6,3).amax()).fold(0.0f64, f64::max);
    println!("{label}: iters={} conv={} cost={:.3e} vmax={:.2} mid=({:.2},{:.2},{:.2}) term=({:.3})",
        setup.plan.iterations, setup.plan.converged, setup.plan.final_cost, vmax, s75[0],s75[1],s75[2], s150[0]);
    for kind in [DisturbanceKind::Impulse, DisturbanceKind::TimeVarying] {
        for level in [DisturbanceLevel::Medium, DisturbanceLevel::Large] {
            let mut dd = DisturbanceSpec::new(kind, level, default_magnitude("quadcopter", kind, level)).unwrap();
            dd.seed = 0;
            let spec = ExperimentSpec { task: task.clone(), disturbance: dd,
                controllers: trajdist::tracking::ControllerKind::ALL.to_vec(),
                replications: 6, master_seed: 1234, jobs: 2, warm_start: true };
            let result = run_experiment_with_setup(&setup, &spec).unwrap();
            print!("  {:?} {:?}:", kind, level);
            for s in &result.stats { print!(" {}={:.2}±{:.2}[x{}]", &s.controller.label()[..7], s.mean_normalized, s.std_normalized, s.excluded); }
            println!();
        }
    }
}

#[test]
fn diag_scan3() {
    let agile = QuadcopterParams::default();
    let heavy = QuadcopterParams { mass: 1.0, arm: 0.12, inertia_x: 0.02, inertia_y: 0.02, inertia_z: 0.035, ..QuadcopterParams::default() };
    diag("I agile q.2 r.02 far", agile, 0.2, 0.02);
    diag("J heavy q.2 r.02 far", heavy, 0.2, 0.02);
    diag("K heavy q.1 r.02 far", heavy, 0.1, 0.02);
}
