use super::lm::{dense_jacobian, structured_jacobian};
use super::*;
use crate::friction::StribeckCoeffs;
use crate::harness::{gen_log, LogNoise, Schedule};
use crate::map::GridSpec;

const TRUTH: [f64; 4] = [0.9, 0.7, 0.5, 0.05];
const PRIOR: [f64; 4] = [0.7, 0.5, 0.6, 0.02];

fn world(s: [f64; 4]) -> GridMap {
    let spec = GridSpec::new(120, 20, 0.5, [-5.0, -5.0]).unwrap();
    GridMap::uniform(spec, StribeckCoeffs::from_array(s).unwrap(), 0.0, 0.0)
}

fn drive(mean_slip: f64, n: usize, noise: LogNoise) -> DriveLog {
    let mut init = RigidState::level(0.0, 0.0, 0.6, 0.0);
    init.v.x = 8.0;
    let truth = world(TRUTH);
    gen_log(&VehicleModel::pickup(), &Schedule::slip_sine_with_mean(mean_slip), &truth, init, n, 0.01, noise, 1).unwrap()
}

fn problem<'a>(log: &'a DriveLog, vehicle: &'a VehicleModel, map: &GridMap, params: IdentParams) -> (IdentProblem<'a>, IdentVariables) {
    let vars = initial_variables(log, vehicle, map).unwrap();
    (IdentProblem::new(log, vehicle, map, &vars, params).unwrap(), vars)
}

fn median_mu_d(vars: &IdentVariables) -> f64 {
    let mut v: Vec<f64> = vars.s.iter().flatten().map(|s| s[1]).collect();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn ground_truth_variables_have_zero_residuals() {
    let log = drive(0.5, 60, LogNoise::default());
    let v = VehicleModel::pickup();
    let (p, vars) = problem(&log, &v, &world(TRUTH), IdentParams::default());
    let r = residual_stack(&vars, &p).unwrap();
    assert_eq!(r.len(), 59 * 36 + 14);
    assert!(r.amax() < 1e-8, "max residual {}", r.amax());
}

#[test]
fn constant_coefficients_below_bound_have_no_smoothness_residual() {
    let log = drive(0.5, 5, LogNoise::default());
    let v = VehicleModel::pickup();
    let (p, vars) = problem(&log, &v, &world(TRUTH), IdentParams::default());
    let r = residual_stack(&vars, &p).unwrap();
    for i in 0..4 {
        let s_block = &r.as_slice()[i * 36 + 20..i * 36 + 36];
        assert!(s_block.iter().all(|x| *x == 0.0));
    }
}

#[test]
fn smoothness_penalizes_only_excess_above_bound() {
    let log = drive(0.5, 3, LogNoise::default());
    let v = VehicleModel::pickup();
    let (p, mut vars) = problem(&log, &v, &world(TRUTH), IdentParams::default());
    // mu_s 20% above its bound of 2 on every step: only the squared excess remains.
    for s in vars.s.iter_mut().flatten() {
        s[0] = 2.4;
    }
    let r = residual_stack(&vars, &p).unwrap();
    let c_s0 = r[20];
    assert!((c_s0 - 10.0 * 0.2f64.powi(2)).abs() < 1e-12);
}

#[test]
fn velocity_perturbation_touches_only_adjacent_residuals() {
    let log = drive(0.5, 8, LogNoise::default());
    let v = VehicleModel::pickup();
    let (p, vars) = problem(&log, &v, &world(TRUTH), IdentParams::default());
    let base = residual_stack(&vars, &p).unwrap();
    let mut moved = vars.clone();
    moved.states[4].v.x += 1e-3;
    let diff = residual_stack(&moved, &p).unwrap() - base;
    let changed: Vec<usize> = (0..diff.len()).filter(|&k| diff[k].abs() > 0.0).collect();
    for &k in &changed {
        let (block, off) = (k / 36, k % 36);
        let ok = (block == 4 && off < 6) || (block == 4 && (14..17).contains(&off)) || (block == 3 && (14..17).contains(&off));
        assert!(ok, "residual {k} (block {block}, offset {off}) changed");
    }
    assert!(changed.iter().any(|&k| k / 36 == 3));
    assert!(changed.iter().any(|&k| k / 36 == 4 && k % 36 < 6));
}

#[test]
fn structured_jacobian_matches_dense_differences() {
    let log = drive(0.5, 10, LogNoise::default());
    let v = VehicleModel::pickup();
    let params = IdentParams { tying: WheelTying::Never, ..Default::default() };
    let (p, vars) = problem(&log, &v, &world(PRIOR), params);
    let blocks = structured_jacobian(&p, &vars).unwrap();
    let j = dense_jacobian(&p, &blocks);
    let n = p.n_vars();
    assert_eq!(j.ncols(), n);
    let base = vars.clone();
    for k in 0..n {
        let mut e = DVector::zeros(n);
        // Step sizes follow the magnitude of each coordinate so that the
        // zero-slip deadband is straddled the same way the solver does.
        let h = 1e-5 * if k >= n - N_GLOBAL { 1e3 } else {
            let (i, local) = (k / (STEP_BASE + 16), k % (STEP_BASE + 16));
            p.coord_scale(&p.step_vars(&base, i), local)
        };
        e[k] = h;
        let plus = residual_stack(&p.apply(&vars, &e), &p).unwrap();
        e[k] = -h;
        let minus = residual_stack(&p.apply(&vars, &e), &p).unwrap();
        let fd = (plus - minus) / (2.0 * h);
        let col = j.column(k);
        let err = (&fd - col).norm();
        assert!(err <= 1e-4 * fd.norm().max(1e-6), "column {k}: err {err:.3e}, norm {:.3e}", fd.norm());
    }
}

#[test]
fn aggressive_noiseless_drive_recovers_dynamic_friction() {
    let log = drive(0.6, 200, LogNoise::default());
    let v = VehicleModel::pickup();
    let (p, vars) = problem(&log, &v, &world(PRIOR), IdentParams::default());
    let sol = solve_lower(&p, &vars).unwrap();
    let mu_d = median_mu_d(&sol.vars);
    assert!((mu_d - TRUTH[1]).abs() / TRUTH[1] < 0.05, "mu_d {mu_d}, status {:?}, iters {}", sol.status, sol.iterations);
    assert!(sol.iterations < 50, "{} iterations, status {:?}, cost {:e}, mu_d {mu_d}", sol.iterations, sol.status, sol.cost);
    for w in sol.trace.windows(2) {
        assert!(w[1].cost <= w[0].cost);
    }
}

#[test]
fn rpm_only_weights_leave_coefficients_untouched() {
    let log = drive(0.5, 30, LogNoise { rpm: 2.0, ..Default::default() });
    let v = VehicleModel::pickup();
    let params = IdentParams { weights: IdentWeights::rpm_only(), ..Default::default() };
    let (p, mut vars) = problem(&log, &v, &world(PRIOR), params);
    for r in vars.rpm.iter_mut().flatten() {
        *r += 5.0;
    }
    let sol = solve_lower(&p, &vars).unwrap();
    assert_eq!(sol.vars.s, vars.s);
    assert!(sol.cost < 1e-12 * sol.initial_cost);
    for (a, b) in sol.vars.rpm.iter().flatten().zip(log.rpm_meas.iter().flatten()) {
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn solve_is_deterministic() {
    let log = drive(0.5, 40, LogNoise { accel: 0.05, ..Default::default() });
    let v = VehicleModel::pickup();
    let (p, vars) = problem(&log, &v, &world(PRIOR), IdentParams::default());
    let a = solve_lower(&p, &vars).unwrap();
    let b = solve_lower(&p, &vars).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.vars, b.vars);
}

#[test]
fn dynamics_loss_vanishes_at_truth_and_has_exact_gradient() {
    let log = drive(0.5, 40, LogNoise::default());
    let v = VehicleModel::pickup();
    let map = world(TRUTH);
    assert!(dynamics_loss(TRUTH, &log, 0..40, &v, &map, 1.0).unwrap() < 1e-12);
    for s in [PRIOR, [1.1, 0.6, 0.3, 0.1]] {
        let (_, g) = dynamics_loss_grad(s, &log, 5..30, &v, &map, 1.0).unwrap();
        for c in 0..4 {
            let h = 1e-5;
            let (mut sp, mut sm) = (s, s);
            sp[c] += h;
            sm[c] -= h;
            let fd = (dynamics_loss(sp, &log, 5..30, &v, &map, 1.0).unwrap() - dynamics_loss(sm, &log, 5..30, &v, &map, 1.0).unwrap()) / (2.0 * h);
            assert!((g[c] - fd).abs() <= 1e-4 * fd.abs().max(1e-8), "channel {c}: {} vs {fd}", g[c]);
        }
    }
}

#[test]
fn huber_and_prior_examples() {
    let r = Vector3::new(0.5, 0.0, 0.0);
    assert_eq!(huber(&r, 1.0), 0.125);
    assert_eq!(huber(&Vector3::new(3.0, 0.0, 0.0), 1.0), 2.5);
    assert_eq!(prior_loss(&TRUTH, &TRUTH), 0.0);
    let shifted = TRUTH.map(|x| x + 0.1);
    assert!((prior_loss(&shifted, &TRUTH) - 0.1).abs() < 1e-12);
    let (a, b) = ([0.3, 1.2, 0.4, 0.0], [0.9, 0.7, 0.8, 0.05]);
    let naive = ((0.3f64 - 0.9).abs() + (1.2f64 - 0.7).abs() + (0.4f64 - 0.8).abs() + 0.05) / 4.0;
    assert!((prior_loss(&a, &b) - naive).abs() < 1e-15);
    assert_eq!(combined_loss(2.0, 0.5, 0.1), 2.05);
}

#[test]
fn same_prior_ties_wheels_on_uniform_map() {
    let log = drive(0.5, 4, LogNoise::default());
    let v = VehicleModel::pickup();
    let (p, _) = problem(&log, &v, &world(PRIOR), IdentParams::default());
    assert_eq!(p.groups(0), [0, 0, 0, 0]);
    let (p, _) = problem(&log, &v, &world(PRIOR), IdentParams { tying: WheelTying::SameCell, ..Default::default() });
    assert_eq!(p.groups(0), [0, 1, 2, 3]);
}

