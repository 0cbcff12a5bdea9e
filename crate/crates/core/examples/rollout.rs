//! Accelerate the pickup on grass, then coast, and print the speed and slip.
//!
//! `cargo run --example rollout`

use terranav::dynamics::{rollout, rpm_for_speed, FlatTerrain, RigidState, SimConfig, StepInput};
use terranav::friction::StribeckCoeffs;
use terranav::vehicle::VehicleModel;

fn main() -> terranav::Result<()> {
    let v = VehicleModel::pickup();
    let ground = FlatTerrain { coeffs: StribeckCoeffs::new(0.8, 0.65, 0.5, 0.02)? };
    let s0 = RigidState::level(0.0, 0.0, 0.6, 0.0);
    // Locked wheels near zero slip are stiff; at the 0.01 s default the final
    // stop chatters at a few cm/s.
    let dt = 0.005;
    let mut inputs = vec![StepInput::straight(rpm_for_speed(&v, 6.0)); 600];
    inputs.extend(vec![StepInput::idle(); 400]);
    let traj = rollout(&s0, &inputs, &v, &ground, inputs.len(), SimConfig { dt, ..SimConfig::default() })?;
    println!("   t      x     speed   slip(FL)");
    for (i, (s, e)) in traj.states.iter().zip(&traj.evals).enumerate().step_by(50) {
        let t = (i + 1) as f64 * dt;
        println!("{t:5.2}  {:6.2}  {:6.3}  {:7.3}", s.t.x, s.v.norm(), e.wheels[0].v_rel.norm());
    }
    Ok(())
}
