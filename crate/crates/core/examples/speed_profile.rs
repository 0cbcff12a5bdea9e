//! Minimum-time speeds along an S-bend on grass and on ice.
//!
//! `cargo run --example speed_profile`

use nalgebra::Vector2;
use terranav::friction::StribeckCoeffs;
use terranav::map::{GridMap, GridSpec};
use terranav::speed::{constraint_eval, optimize, SpeedParams};
use terranav::vehicle::VehicleModel;

fn main() -> terranav::Result<()> {
    let v = VehicleModel::pickup();
    let params = SpeedParams::default();
    let pts: Vec<Vector2<f64>> = (0..=40).map(|i| Vector2::new(5.0 + i as f64, 30.0 + 8.0 * (i as f64 / 40.0 * std::f64::consts::TAU).sin())).collect();
    let spec = GridSpec::new(60, 60, 1.0, [0.0, 0.0])?;
    for (name, s) in [("grass", StribeckCoeffs::new(0.8, 0.65, 0.5, 0.02)?), ("ice", StribeckCoeffs::new(0.12, 0.1, 0.5, 0.0)?)] {
        let map = GridMap::uniform(spec, s, 0.0, 0.005);
        let profile = optimize(&pts, &map, &v, &params)?;
        let report = constraint_eval(&profile.speeds, &pts, &map, &v, &params)?;
        let vmax = profile.speeds.iter().copied().fold(0.0, f64::max);
        println!("{name}: {:?}, predicted {:.2} s, top speed {vmax:.2} m/s, feasible {}", profile.status, profile.predicted_time, report.feasible(1e-6));
        let row: Vec<String> = profile.speeds.iter().step_by(4).map(|s| format!("{s:.1}")).collect();
        println!("  speeds every 4th checkpoint: {}", row.join(" "));
    }
    Ok(())
}
