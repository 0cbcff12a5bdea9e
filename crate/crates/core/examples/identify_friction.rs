//! Recover Stribeck coefficients from a synthetic drive log with IMU noise,
//! then write the pseudo-labels into a map.
//!
//! `cargo run --release --example identify_friction`

use terranav::dynamics::RigidState;
use terranav::friction::StribeckCoeffs;
use terranav::harness::{gen_log, LogNoise, Schedule};
use terranav::ident::{fit_cells, initial_variables, pseudo_labels, solve_lower, IdentParams, IdentProblem};
use terranav::map::{GridMap, GridSpec};
use terranav::vehicle::VehicleModel;

fn main() -> terranav::Result<()> {
    let v = VehicleModel::pickup();
    let spec = GridSpec::new(120, 20, 0.5, [-5.0, -5.0])?;
    let truth = StribeckCoeffs::new(0.9, 0.7, 0.5, 0.05)?;
    let world = GridMap::uniform(spec, truth, 0.0, 0.0);
    let prior = GridMap::uniform(spec, StribeckCoeffs::new(0.7, 0.5, 0.6, 0.02)?, 0.0, 0.0);

    let mut init = RigidState::level(0.0, 0.0, 0.6, 0.0);
    init.v.x = 8.0;
    let noise = LogNoise { accel: 0.1, ..Default::default() };
    let log = gen_log(&v, &Schedule::slip_sine_with_mean(0.6), &world, init, 200, 0.01, noise, 1)?;

    let vars = initial_variables(&log, &v, &prior)?;
    let problem = IdentProblem::new(&log, &v, &prior, &vars, IdentParams::default())?;
    let sol = solve_lower(&problem, &vars)?;
    println!("{:?} after {} iterations, cost {:.3e} -> {:.3e}", sol.status, sol.iterations, sol.initial_cost, sol.cost);

    let labels = pseudo_labels(&sol.vars, &v);
    let names = ["mu_s", "mu_d", "v_s", "mu_v"];
    for (k, name) in names.iter().enumerate() {
        let mut x: Vec<f64> = labels.iter().map(|l| l.s[k]).collect();
        x.sort_by(f64::total_cmp);
        println!("{name:>5}: truth {:.3}, prior {:.3}, median estimate {:.3}", truth.to_array()[k], prior.stribeck((0, 0))[k], x[x.len() / 2]);
    }
    let fit = fit_cells(&labels, &prior);
    println!("updated {} cells from {} labels", fit.updated_cells, labels.len());
    Ok(())
}
