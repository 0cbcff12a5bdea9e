//! Plan across the benchmark world with and without friction and steering
//! costs and compare the paths.
//!
//! `cargo run --release --example plan_path`

use terranav::harness::{gen_world, WorldSpec};
use terranav::planner::{plan, PlannerParams};

fn main() -> terranav::Result<()> {
    let world = gen_world(&WorldSpec::benchmark_mixed(1))?;
    let (start, goal) = ((6, 6), (56, 54));
    let base = PlannerParams::default();
    for (name, params) in [
        ("friction-aware", base),
        ("constant mu 0.8", PlannerParams { const_mu: Some(0.8), ..base }),
        ("no steering cost", PlannerParams { w_t: 0.0, ..base }),
    ] {
        let path = plan(start, goal, &world.map, &params)?;
        let ice = path.vertices.iter().filter(|v| world.map.stribeck(v.cell())[1] < 0.3).count();
        println!(
            "{name:>16}: cost {:7.2}, {} vertices, {} heading changes, {} on low-friction cells, {} expanded",
            path.total_cost,
            path.vertices.len(),
            path.heading_changes(),
            ice,
            path.expanded_nodes
        );
    }
    Ok(())
}
