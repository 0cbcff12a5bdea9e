use std::io::Write;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{evaluate, step_with, RigidState, StepEval, WheelTerrain, GRAVITY};
use crate::error::{Error, Result};
use crate::friction::StribeckCoeffs;
use crate::vehicle::{VehicleModel, Wheel};

/// Controls applied during one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInput {
    pub rpm: [f64; 4],
    /// Wheel rolling directions in the vehicle frame.
    pub dirs: [Vector3<f64>; 4],
}

impl StepInput {
    pub fn straight(rpm: f64) -> Self {
        Self { rpm: [rpm; 4], dirs: [Vector3::x(); 4] }
    }

    pub fn idle() -> Self {
        Self::straight(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainSample {
    pub normal: Vector3<f64>,
    pub coeffs: StribeckCoeffs,
}

/// Terrain lookup by world xy.
pub trait Terrain {
    fn sample(&self, xy: Vector2<f64>) -> Result<TerrainSample>;
}

/// Level ground with uniform friction.
#[derive(Debug, Clone, Copy)]
pub struct FlatTerrain {
    pub coeffs: StribeckCoeffs,
}

impl Terrain for FlatTerrain {
    fn sample(&self, _xy: Vector2<f64>) -> Result<TerrainSample> {
        Ok(TerrainSample { normal: Vector3::z(), coeffs: self.coeffs })
    }
}

/// Infinite tilted plane with uniform friction.
#[derive(Debug, Clone, Copy)]
pub struct PlaneTerrain {
    pub coeffs: StribeckCoeffs,
    pub normal: Vector3<f64>,
}

impl PlaneTerrain {
    /// Plane rising at `grade_rad` along the world direction `uphill_yaw`.
    pub fn incline(coeffs: StribeckCoeffs, grade_rad: f64, uphill_yaw: f64) -> Self {
        let (s, c) = grade_rad.sin_cos();
        let normal = Vector3::new(-s * uphill_yaw.cos(), -s * uphill_yaw.sin(), c);
        Self { coeffs, normal }
    }

    /// Height of the plane through the origin at `xy`.
    pub fn height(&self, xy: Vector2<f64>) -> f64 {
        -(self.normal.x * xy.x + self.normal.y * xy.y) / self.normal.z
    }
}

impl Terrain for PlaneTerrain {
    fn sample(&self, _xy: Vector2<f64>) -> Result<TerrainSample> {
        Ok(TerrainSample { normal: self.normal, coeffs: self.coeffs })
    }
}

/// Source of the acceleration used by weight transfer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum LoadTransfer {
    /// Previous step's computed acceleration.
    #[default]
    Lagged,
    /// Re-evaluate with the freshly computed acceleration until it settles.
    FixedPoint { iters: usize, tol: f64 },
}

impl LoadTransfer {
    pub fn refined() -> Self {
        LoadTransfer::FixedPoint { iters: 3, tol: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub g: f64,
    pub load_transfer: LoadTransfer,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 0.01, g: GRAVITY, load_transfer: LoadTransfer::Lagged }
    }
}

/// Stateful stepper used both by open-loop rollouts and closed-loop tracking.
pub struct Simulator<'a, T: Terrain + ?Sized> {
    vehicle: &'a VehicleModel,
    terrain: &'a T,
    pub state: RigidState,
    /// Acceleration carried into the next load-transfer evaluation.
    pub accel_prev: Vector3<f64>,
    pub config: SimConfig,
}

impl<'a, T: Terrain + ?Sized> Simulator<'a, T> {
    pub fn new(vehicle: &'a VehicleModel, terrain: &'a T, initial: RigidState, config: SimConfig) -> Self {
        Self { vehicle, terrain, state: initial, accel_prev: Vector3::zeros(), config }
    }

    pub fn vehicle(&self) -> &VehicleModel {
        self.vehicle
    }

    pub fn wheel_terrain(&self, state: &RigidState) -> Result<[WheelTerrain; 4]> {
        let mut out = [WheelTerrain { normal: Vector3::z(), coeffs: [0.0; 4] }; 4];
        for w in Wheel::ALL {
            let p = state.wheel_position(self.vehicle, w);
            let s = self.terrain.sample(Vector2::new(p.x, p.y))?;
            out[w.index()] = WheelTerrain { normal: s.normal, coeffs: s.coeffs.to_array() };
        }
        Ok(out)
    }

    /// Engine evaluation at the current state without integrating.
    pub fn evaluate(&self, input: &StepInput) -> Result<StepEval> {
        let terrain = self.wheel_terrain(&self.state)?;
        let eval_at = |a: &Vector3<f64>| {
            evaluate(
                &self.state,
                self.vehicle,
                &self.vehicle.inertia(),
                &input.rpm,
                &input.dirs,
                &terrain,
                a,
                self.config.g,
            )
        };
        let mut eval = eval_at(&self.accel_prev)?;
        if let LoadTransfer::FixedPoint { iters, tol } = self.config.load_transfer {
            for _ in 0..iters {
                let next = eval_at(&eval.accel)?;
                let delta = (next.accel - eval.accel).norm();
                eval = next;
                if delta <= tol {
                    break;
                }
            }
        }
        Ok(eval)
    }

    /// Advance one step; returns the evaluation that drove it.
    pub fn step(&mut self, input: &StepInput) -> Result<StepEval> {
        let eval = self.evaluate(input)?;
        self.state = step_with(
            &self.state,
            &eval.force,
            &eval.torque,
            self.vehicle.total_mass(),
            &self.vehicle.inertia(),
            self.config.dt,
        )?;
        self.accel_prev = eval.accel;
        Ok(eval)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// States after each step (the initial state is not included).
    pub states: Vec<RigidState>,
    pub evals: Vec<StepEval>,
}

/// Open-loop rollout of `n_steps` steps.
pub fn rollout<T: Terrain + ?Sized>(
    initial: &RigidState,
    inputs: &[StepInput],
    vehicle: &VehicleModel,
    terrain: &T,
    n_steps: usize,
    config: SimConfig,
) -> Result<Trajectory> {
    if inputs.len() < n_steps {
        return Err(Error::LengthMismatch(format!(
            "{} inputs for {} steps",
            inputs.len(),
            n_steps
        )));
    }
    let mut sim = Simulator::new(vehicle, terrain, *initial, config);
    let mut traj = Trajectory { states: Vec::with_capacity(n_steps), evals: Vec::with_capacity(n_steps) };
    for (i, input) in inputs.iter().take(n_steps).enumerate() {
        let eval = sim.step(input).map_err(|e| Error::Rollout { step: i, source: Box::new(e) })?;
        traj.states.push(sim.state);
        traj.evals.push(eval);
    }
    Ok(traj)
}

/// `step, t_xyz, q_wxyz, v_xyz, omega_xyz`.
pub fn write_trajectory_csv<W: Write>(mut out: W, states: &[RigidState]) -> Result<()> {
    writeln!(out, "step,tx,ty,tz,qw,qx,qy,qz,vx,vy,vz,wx,wy,wz")?;
    for (i, s) in states.iter().enumerate() {
        let q = s.q.quaternion();
        writeln!(
            out,
            "{i},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.t.x, s.t.y, s.t.z, q.w, q.i, q.j, q.k, s.v.x, s.v.y, s.v.z, s.omega.x, s.omega.y, s.omega.z
        )?;
    }
    Ok(())
}

/// Per-wheel normal load, skid speed and friction coefficient.
pub fn write_wheel_csv<W: Write>(mut out: W, evals: &[StepEval]) -> Result<()> {
    writeln!(out, "step,wheel,f_n,v_rel,mu")?;
    for (i, e) in evals.iter().enumerate() {
        for w in Wheel::ALL {
            let k = w.index();
            writeln!(out, "{i},{},{},{},{}", w.name(), e.loads.magnitudes[k], e.wheels[k].v_rel.norm(), e.mu[k])?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{edge_speed, rpm_for_speed, step};

    fn grippy() -> FlatTerrain {
        FlatTerrain { coeffs: StribeckCoeffs::new(1.0, 0.9, 0.5, 0.0).unwrap() }
    }

    #[test]
    fn zero_input_stays_put() {
        let v = VehicleModel::pickup();
        let s0 = RigidState::level(0.0, 0.0, 0.6, 0.4);
        let traj = rollout(&s0, &[StepInput::idle(); 50], &v, &grippy(), 50, SimConfig::default()).unwrap();
        assert_eq!(traj.states.len(), 50);
        for s in &traj.states {
            assert!((s.t - s0.t).norm() < 1e-9);
            assert!(s.q.angle_to(&s0.q) < 1e-9);
        }
    }

    #[test]
    fn short_input_is_length_error() {
        let v = VehicleModel::pickup();
        let s0 = RigidState::level(0.0, 0.0, 0.6, 0.0);
        assert!(matches!(
            rollout(&s0, &[StepInput::idle(); 3], &v, &grippy(), 4, SimConfig::default()),
            Err(Error::LengthMismatch(_))
        ));
    }

    /// Point-mass longitudinal model: `m dv/dt = mu(v_e - v) m g`.
    fn scalar_oracle(s: &StribeckCoeffs, v_e: f64, dt: f64, n: usize) -> Vec<f64> {
        let mut v = 0.0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let slip = v_e - v;
            let a = if slip.abs() < crate::dynamics::EPS_V { 0.0 } else { s.mu(slip.abs()) * GRAVITY * slip.signum() };
            v += a * dt;
            out.push(v);
        }
        out
    }

    #[test]
    fn constant_rpm_matches_longitudinal_oracle() {
        let v = VehicleModel::pickup();
        let terrain = grippy();
        let rpm = rpm_for_speed(&v, 4.0);
        let n = 1000;
        // Small enough that the explicit friction response does not overshoot.
        let cfg = SimConfig { dt: 0.002, load_transfer: LoadTransfer::refined(), ..SimConfig::default() };
        let s0 = RigidState::level(0.0, 0.0, 0.6, 0.0);
        let traj = rollout(&s0, &vec![StepInput::straight(rpm); n], &v, &terrain, n, cfg).unwrap();
        let oracle = scalar_oracle(&terrain.coeffs, edge_speed(&v, rpm), cfg.dt, n);
        let mut last_x = s0.t.x;
        for (s, vo) in traj.states.iter().zip(&oracle) {
            assert!(s.t.x >= last_x - 1e-12);
            last_x = s.t.x;
            assert!(s.v.x <= edge_speed(&v, rpm) + 1e-9);
            assert!((s.v.x - vo).abs() < 1e-6, "{} vs {}", s.v.x, vo);
        }
        assert!(traj.states.last().unwrap().v.x > 3.9);
    }

    #[test]
    fn energy_drift_without_friction_is_small() {
        let v = VehicleModel::pickup();
        let mut s = RigidState::level(0.0, 0.0, 0.6, 0.0);
        s.v = Vector3::new(3.0, 1.0, 0.0);
        s.omega = Vector3::new(0.0, 0.0, 0.5);
        let energy = |s: &RigidState| {
            let iw = crate::dynamics::world_inertia(&s.q, &v.inertia());
            0.5 * v.total_mass() * s.v.norm_squared() + 0.5 * s.omega.dot(&(iw * s.omega)) + v.total_mass() * GRAVITY * s.t.z
        };
        let e0 = energy(&s);
        for _ in 0..1000 {
            let c = crate::dynamics::TerrainContact::flat(&v);
            let loads = crate::dynamics::weight_transfer(&v, &c, 0.0, 0.0).unwrap();
            let loads = loads.with_normals(&[s.q * Vector3::z(); 4]);
            let (f, tau) = crate::dynamics::net_wrench(&v, &s.q, &loads, &[Vector3::zeros(); 4], GRAVITY);
            s = step(&s, &f, &tau, &v, 0.01).unwrap();
        }
        assert!(((energy(&s) - e0) / e0).abs() < 0.01);
    }

    #[test]
    fn rollout_error_carries_step_index() {
        let v = VehicleModel::pickup();
        let terrain = PlaneTerrain::incline(StribeckCoeffs::constant(0.5).unwrap(), 1.7, 0.0);
        let s0 = RigidState::level(0.0, 0.0, 0.6, 0.0);
        match rollout(&s0, &[StepInput::idle(); 2], &v, &terrain, 2, SimConfig::default()) {
            Err(Error::Rollout { step: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trajectory_csv_has_one_row_per_state() {
        let v = VehicleModel::pickup();
        let s0 = RigidState::level(0.0, 0.0, 0.6, 0.0);
        let traj = rollout(&s0, &[StepInput::straight(50.0); 20], &v, &grippy(), 20, SimConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&mut buf, &traj.states).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 21);
        let mut buf = Vec::new();
        write_wheel_csv(&mut buf, &traj.evals).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 81);
    }
}
