//! Bin a synthetic point cloud into elevation and roughness layers, assemble
//! a map and round-trip it through the on-disk bundle.
//!
//! `cargo run --example build_map`

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terranav::map::{elevation_from_points, roughness_from_points, GridMap, GridSpec};

fn main() -> terranav::Result<()> {
    let spec = GridSpec::new(20, 20, 0.5, [0.0, 0.0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // A gentle ramp with a bumpy gravel strip across x in [4, 6].
    let points: Vec<Vector3<f64>> = (0..20_000)
        .map(|_| {
            let (x, y) = (rng.random_range(0.0..10.0), rng.random_range(0.0..10.0));
            let bump = if (4.0..6.0).contains(&x) { rng.random_range(-0.08..0.08) } else { rng.random_range(-0.005..0.005) };
            Vector3::new(x, y, 0.1 * x + bump)
        })
        .collect();
    let el = elevation_from_points(&points, &spec);
    let rl = roughness_from_points(&points, &spec);
    let sl = vec![[0.8, 0.65, 0.5, 0.02]; spec.len()];
    let map = GridMap::from_layers(spec, sl, el, rl)?;

    println!("row y=10: elevation and roughness by column");
    for x in (0..20).step_by(2) {
        println!("  x={x:>2}: z {:.3} m, sigma {:.4}", map.elevation((x, 10)), map.roughness((x, 10)));
    }
    let dir = std::env::temp_dir().join("terranav_build_map");
    map.write_bundle(&dir)?;
    let back = GridMap::read_bundle(&dir)?;
    println!("bundle written to {} and read back ({}x{})", dir.display(), back.width(), back.height());
    Ok(())
}
