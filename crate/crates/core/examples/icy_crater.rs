//! The icy-crater scenario: the friction-aware plan detours over rock while a
//! planner assuming mu = 0.8 drives into the icy valley and gets stuck.
//!
//! `cargo run --release --example icy_crater`

use terranav::harness::{gen_world, plan_task, run_on_map, PipelineConfig, Variant, WorldSpec};
use terranav::vehicle::VehicleModel;

fn main() -> terranav::Result<()> {
    let v = VehicleModel::pickup();
    let base = PipelineConfig::default();
    let world = gen_world(&WorldSpec::icy_crater())?;
    let (start, goal) = WorldSpec::icy_crater_start_goal();
    for variant in [Variant::FrictionAware, Variant::ConstMu(0.8)] {
        let config = variant.configure(&base);
        let plan = plan_task(start, goal, &world.map, &v, &config)?;
        let detour = plan.path.checkpoints.iter().map(|p| (p.y - 20.0).abs()).fold(0.0, f64::max);
        let run = run_on_map(start, goal, &world.map, &v, &config)?;
        println!(
            "{:>14}: widest detour {detour:4.1} m, predicted {:5.1} s -> success {} {:?} after {:.1} s",
            variant.name(),
            plan.predicted_time,
            run.success,
            run.failure,
            run.actual_time
        );
    }
    Ok(())
}
