//! Derived mass properties of the built-in pickup and its static load split.
//!
//! `cargo run --example vehicle_properties`

use terranav::dynamics::{weight_transfer, TerrainContact};
use terranav::vehicle::{VehicleModel, Wheel};

fn main() -> terranav::Result<()> {
    let v = VehicleModel::pickup();
    let com = v.com();
    println!("mass {:.0} kg, {} points", v.total_mass(), v.points().len());
    println!("COM ({:.3}, {:.3}, {:.3}) m", com.x, com.y, com.z);
    println!("wheelbase {:.2} m, track {:.2} m, wheel radius {:.2} m", v.wheelbase(), v.track_width(), v.wheel_radius());
    println!("inertia about COM:{:.1}", v.inertia());

    for (label, theta, a_long) in [("level, at rest", 0.0, 0.0), ("braking 3 m/s^2", 0.0, -3.0), ("20 deg climb", 20f64.to_radians(), 0.0)] {
        let loads = weight_transfer(&v, &TerrainContact::from_slope(&v, theta, 0.0), a_long, 0.0)?;
        let per: Vec<String> = Wheel::ALL.iter().map(|w| format!("{} {:.0} N", w.name(), loads.magnitudes[w.index()])).collect();
        println!("{label:>16}: {}", per.join(", "));
    }
    Ok(())
}
