//! Benchmark the planner variants on random tasks over the two synthetic
//! worlds. Pass the number of tasks per world (default 5).
//!
//! `cargo run --release --example benchmark -- 10`

use terranav::config::EvalConfig;
use terranav::harness::{draw_suite, evaluate, failure_counts, run_suite, PipelineConfig};
use terranav::vehicle::VehicleModel;

fn main() -> terranav::Result<()> {
    let per_world: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5);
    let v = VehicleModel::pickup();
    let base = PipelineConfig::default();
    let ec = EvalConfig::default();
    let suite = draw_suite(&ec.worlds, per_world, ec.min_distance, 0, &v, &base)?;
    println!("{} tasks", suite.tasks.len());
    println!("{:>16}  success  avg time  time ratio  failures", "variant");
    for variant in &ec.variants {
        let results = run_suite(&suite.tasks, &v, &variant.configure(&base))?;
        let m = evaluate(&results)?;
        let fails: Vec<String> = failure_counts(&results).iter().filter(|(_, n)| *n > 0).map(|(f, n)| format!("{f:?} {n}")).collect();
        println!(
            "{:>16}  {:>3}/{:<3}  {:>8.2}  {:>10.3}  {}",
            variant.name(),
            m.successes,
            m.tasks,
            m.avg_time.unwrap_or(f64::NAN),
            m.time_ratio.unwrap_or(f64::NAN),
            fails.join(", ")
        );
    }
    Ok(())
}
