//! Plan on the default world and drive the plan with the PD tracker.
//!
//! `cargo run --release --example closed_loop_drive`

use terranav::harness::{gen_world, plan_task, start_state, track, PipelineConfig, TrackParams, WorldRef};
use terranav::vehicle::VehicleModel;

fn main() -> terranav::Result<()> {
    let v = VehicleModel::pickup();
    let config = PipelineConfig::default();
    let world = gen_world(&WorldRef { preset: "default".into(), seed: 0 }.spec()?)?;
    let (start, goal) = ((10, 10), (110, 100));
    let plan = plan_task(start, goal, &world.map, &v, &config)?;
    println!("{} checkpoints, predicted {:.2} s", plan.path.checkpoints.len(), plan.predicted_time);

    let init = start_state(&plan.path.checkpoints, &v, &world.map)?;
    let params = TrackParams { cell_size: world.map.cell_size(), ..config.track };
    let run = track(&plan.path.checkpoints, &plan.speeds, &v, &world.map, init, &config.gains, &params)?;
    println!(
        "success {} ({:?}), actual {:.2} s, ratio {:.3}, max cross-track {:.2} m",
        run.success,
        run.failure,
        run.actual_time,
        run.time_ratio().unwrap_or(f64::NAN),
        run.max_cross_track
    );
    for s in run.trajectory.iter().step_by(run.trajectory.len().max(10) / 10) {
        println!("  t {:6.2}  ({:6.2}, {:6.2})  v {:5.2} / {:5.2}", s.t, s.x, s.y, s.speed, s.target_speed);
    }
    Ok(())
}
