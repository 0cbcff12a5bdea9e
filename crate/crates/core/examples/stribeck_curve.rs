//! Tabulate a Stribeck curve and the speed and slope limits it implies.
//!
//! `cargo run --example stribeck_curve`

use terranav::dynamics::GRAVITY;
use terranav::friction::{max_climb_angle_at, safe_steering_speed, StribeckCoeffs};

fn main() -> terranav::Result<()> {
    let grass = StribeckCoeffs::new(0.8, 0.65, 0.5, 0.02)?;
    println!("v_rel    mu     dmu/dv");
    for i in 0..=20 {
        let v = 0.1 * i as f64;
        println!("{v:5.2}  {:.4}  {:+.4}", grass.mu(v), grass.dmu_dv(v));
    }
    let mu = grass.mu(1.0);
    println!("\nat 1 m/s slip: mu = {mu:.3}");
    for r in [5.0, 10.0, 20.0, 40.0] {
        println!("  safe speed on r = {r:>4} m: {:.2} m/s", safe_steering_speed(r, GRAVITY, mu)?);
    }
    println!("  steepest climb: {:.1} deg", max_climb_angle_at(&grass, 1.0)?);
    Ok(())
}
