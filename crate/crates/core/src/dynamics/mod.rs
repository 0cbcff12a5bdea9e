//! Vehicle-terrain reasoning engine: weight transfer, skid velocity, Stribeck
//! friction, net wrench and the semi-implicit Euler integrator.

mod metrics;
mod rollout;

pub use metrics::{trajectory_errors, TrajectoryErrors};
pub use rollout::{
    rollout, write_trajectory_csv, write_wheel_csv, FlatTerrain, LoadTransfer, PlaneTerrain, SimConfig,
    Simulator, StepInput, Terrain, TerrainSample, Trajectory,
};

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::friction::StribeckCoeffs;
use crate::vehicle::{VehicleModel, Wheel};

pub const GRAVITY: f64 = 9.81;

/// Skid speeds below this produce no friction (avoids 0/0 in the direction).
pub const EPS_V: f64 = 1e-9;

const MAX_INERTIA_CONDITION: f64 = 1e12;

/// Pose and world-frame velocities. `t` is the world position of the COM and
/// `q` rotates vehicle-frame vectors into the world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidState {
    pub t: Vector3<f64>,
    pub q: UnitQuaternion<f64>,
    pub v: Vector3<f64>,
    pub omega: Vector3<f64>,
}

impl RigidState {
    pub fn at_rest(t: Vector3<f64>, q: UnitQuaternion<f64>) -> Self {
        Self { t, q, v: Vector3::zeros(), omega: Vector3::zeros() }
    }

    /// Level pose at `(x, y, z)` with the given yaw.
    pub fn level(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::at_rest(Vector3::new(x, y, z), UnitQuaternion::from_euler_angles(0.0, 0.0, yaw))
    }

    pub fn heading(&self) -> Vector3<f64> {
        self.q * Vector3::x()
    }

    pub fn yaw(&self) -> f64 {
        let h = self.heading();
        h.y.atan2(h.x)
    }

    /// World position of a vehicle-frame point.
    pub fn world_point(&self, vehicle: &VehicleModel, body: &Vector3<f64>) -> Vector3<f64> {
        self.t + self.q * (body - vehicle.com())
    }

    pub fn wheel_position(&self, vehicle: &VehicleModel, w: Wheel) -> Vector3<f64> {
        self.world_point(vehicle, &vehicle.contact(w))
    }
}

/// Slope geometry under the vehicle.
///
/// `theta` is the pitch of the vehicle heading on the contact plane and `phi`
/// the roll about it, so the normal component of gravity is `g cos(theta)
/// cos(phi)`. Lever arms are measured along the contact plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainContact {
    pub theta: f64,
    pub phi: f64,
    pub normal: Vector3<f64>,
    pub h: f64,
    pub d_f: f64,
    pub d_r: f64,
    pub d_l: f64,
    pub d_r_lat: f64,
}

impl TerrainContact {
    /// Level ground under a level vehicle.
    pub fn flat(vehicle: &VehicleModel) -> Self {
        Self::from_slope(vehicle, 0.0, 0.0)
    }

    /// Vehicle sitting on a plane pitched by `theta` (nose up positive) and
    /// rolled by `phi` (left side up positive), expressed in a heading-aligned
    /// frame where the heading is +x.
    pub fn from_slope(vehicle: &VehicleModel, theta: f64, phi: f64) -> Self {
        let normal = Vector3::new(-theta.sin() * phi.cos(), -phi.sin(), theta.cos() * phi.cos());
        Self::with_angles(vehicle, theta, phi, normal.normalize())
    }

    /// Contact from the vehicle orientation and the terrain normal under it.
    pub fn from_orientation(vehicle: &VehicleModel, q: &UnitQuaternion<f64>, normal: &Vector3<f64>) -> Result<Self> {
        let n = normal
            .try_normalize(1e-12)
            .ok_or_else(|| Error::domain("terrain normal has zero length"))?;
        let (f, l) = contact_frame(q, &n)?;
        let theta = f.z.clamp(-1.0, 1.0).asin();
        let phi = l.z.atan2(n.z);
        Ok(Self::with_angles(vehicle, theta, phi, n))
    }

    fn with_angles(vehicle: &VehicleModel, theta: f64, phi: f64, normal: Vector3<f64>) -> Self {
        let g = vehicle.contact_geometry();
        Self {
            theta,
            phi,
            normal,
            h: g.height,
            d_f: g.d_front,
            d_r: g.d_rear,
            d_l: g.d_left,
            d_r_lat: g.d_right,
        }
    }

    /// `cos(theta) cos(phi)`, the fraction of gravity pressing into the plane.
    pub fn normal_gravity_fraction(&self) -> f64 {
        self.theta.cos() * self.phi.cos()
    }
}

/// Forward and left unit vectors of the vehicle heading projected onto the
/// plane with normal `n`.
pub fn contact_frame(q: &UnitQuaternion<f64>, n: &Vector3<f64>) -> Result<(Vector3<f64>, Vector3<f64>)> {
    let x = q * Vector3::x();
    let f = (x - n * x.dot(n))
        .try_normalize(1e-9)
        .ok_or_else(|| Error::domain("vehicle heading is parallel to the terrain normal"))?;
    Ok((f, n.cross(&f)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelLoads {
    /// Front-to-rear normal force ratio.
    pub beta: f64,
    /// Left-to-right normal force ratio.
    pub gamma: f64,
    pub magnitudes: [f64; 4],
    pub f_n: [Vector3<f64>; 4],
}

impl WheelLoads {
    pub fn total(&self) -> f64 {
        self.magnitudes.iter().sum()
    }

    /// Same magnitudes, directed along per-wheel normals.
    pub fn with_normals(mut self, normals: &[Vector3<f64>; 4]) -> Self {
        for k in 0..4 {
            self.f_n[k] = normals[k] * self.magnitudes[k];
        }
        self
    }
}

/// Normal load split from the moment balance about the front, rear, left and
/// right contact lines.
///
/// `a_long` and `a_lat` are the in-plane accelerations along the vehicle
/// heading and to its left. Moments about the rear line give
/// `F_front = M (d_r g_n - h (a_long + g sin theta)) / (d_f + d_r)` with
/// `g_n = g cos theta cos phi`; the lateral split is the same analysis across
/// the track.
pub fn weight_transfer(vehicle: &VehicleModel, contact: &TerrainContact, a_long: f64, a_lat: f64) -> Result<WheelLoads> {
    weight_transfer_g(vehicle, contact, a_long, a_lat, GRAVITY)
}

pub fn weight_transfer_g(
    vehicle: &VehicleModel,
    contact: &TerrainContact,
    a_long: f64,
    a_lat: f64,
    g: f64,
) -> Result<WheelLoads> {
    let c = contact;
    let g_n = g * c.normal_gravity_fraction();
    if !(g_n > 0.0) {
        return Err(Error::domain(format!(
            "vehicle is not resting on the slope (theta={}, phi={})",
            c.theta, c.phi
        )));
    }
    if !a_long.is_finite() || !a_lat.is_finite() {
        return Err(Error::domain("non-finite acceleration in weight transfer"));
    }
    let e_long = a_long + g * c.theta.sin();
    let e_lat = a_lat + g * c.theta.cos() * c.phi.sin();
    let wheelbase = c.d_f + c.d_r;
    let track = c.d_l + c.d_r_lat;

    // Fractions of the total normal load carried by each axle / side.
    let front = (c.d_r * g_n - c.h * e_long) / (wheelbase * g_n);
    let rear = (c.d_f * g_n + c.h * e_long) / (wheelbase * g_n);
    let left = (c.d_r_lat * g_n - c.h * e_lat) / (track * g_n);
    let right = (c.d_l * g_n + c.h * e_lat) / (track * g_n);

    let total = vehicle.total_mass() * g_n;
    let magnitudes = [front * left * total, front * right * total, rear * left * total, rear * right * total];
    for w in Wheel::ALL {
        let m = magnitudes[w.index()];
        if m < 0.0 || !m.is_finite() {
            return Err(Error::InfeasibleLoad { wheel: w, magnitude: m });
        }
    }
    let beta = front / rear;
    let gamma = left / right;
    Ok(WheelLoads {
        beta,
        gamma,
        magnitudes,
        f_n: magnitudes.map(|m| c.normal * m),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WheelState {
    pub rpm: f64,
    /// Unit rolling direction in the world frame.
    pub dir: Vector3<f64>,
    pub v_rel: Vector3<f64>,
}

/// Rolling speed of the wheel edge for a given RPM.
pub fn edge_speed(vehicle: &VehicleModel, rpm: f64) -> f64 {
    2.0 * std::f64::consts::PI * vehicle.wheel_radius() * rpm / 60.0
}

/// RPM that rolls the wheel edge at `speed`.
pub fn rpm_for_speed(vehicle: &VehicleModel, speed: f64) -> f64 {
    speed * 60.0 / (2.0 * std::f64::consts::PI * vehicle.wheel_radius())
}

/// `v_e - v_c` for one wheel. `dir_body` is the wheel rolling direction in
/// the vehicle frame.
pub fn skid_velocity(
    state: &RigidState,
    vehicle: &VehicleModel,
    wheel: Wheel,
    rpm: f64,
    dir_body: &Vector3<f64>,
) -> Vector3<f64> {
    let lever = state.q * vehicle.lever_arm(wheel);
    let v_c = state.v + state.omega.cross(&lever);
    let dir = state.q * dir_body.normalize();
    dir * edge_speed(vehicle, rpm) - v_c
}

/// Friction opposing the skid velocity, `-mu(|v_rel|) F_N v_rel / |v_rel|`.
pub fn friction_force(s: &StribeckCoeffs, v_rel: &Vector3<f64>, f_n_mag: f64) -> Vector3<f64> {
    let speed = v_rel.norm();
    if speed < EPS_V {
        return Vector3::zeros();
    }
    -v_rel * (s.mu(speed) * f_n_mag / speed)
}

/// `F = M g + sum(F_N + F_f)` and `tau = sum(lever x (F_N + F_f))` with lever
/// arms rotated into the world by `q`.
pub fn net_wrench(
    vehicle: &VehicleModel,
    q: &UnitQuaternion<f64>,
    loads: &WheelLoads,
    frictions: &[Vector3<f64>; 4],
    g: f64,
) -> (Vector3<f64>, Vector3<f64>) {
    let mut force = Vector3::new(0.0, 0.0, -vehicle.total_mass() * g);
    let mut torque = Vector3::zeros();
    for w in Wheel::ALL {
        let k = w.index();
        let f = loads.f_n[k] + frictions[k];
        force += f;
        torque += (q * vehicle.lever_arm(w)).cross(&f);
    }
    (force, torque)
}

/// `R I R^T`, the body inertia expressed in world axes.
pub fn world_inertia(q: &UnitQuaternion<f64>, inertia_body: &Matrix3<f64>) -> Matrix3<f64> {
    let r = q.to_rotation_matrix();
    r.matrix() * inertia_body * r.matrix().transpose()
}

/// `I_W^-1 tau`, rejecting ill-conditioned inertia.
pub fn angular_acceleration(
    q: &UnitQuaternion<f64>,
    inertia_body: &Matrix3<f64>,
    torque: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let iw = world_inertia(q, inertia_body);
    let sv = iw.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_INERTIA_CONDITION) {
        return Err(Error::SingularInertia { condition });
    }
    iw.lu().solve(torque).ok_or(Error::SingularInertia { condition })
}

/// One semi-implicit Euler step.
pub fn step(
    state: &RigidState,
    force: &Vector3<f64>,
    torque: &Vector3<f64>,
    vehicle: &VehicleModel,
    dt: f64,
) -> Result<RigidState> {
    step_with(state, force, torque, vehicle.total_mass(), &vehicle.inertia(), dt)
}

/// [`step`] with explicit mass and body inertia.
pub fn step_with(
    state: &RigidState,
    force: &Vector3<f64>,
    torque: &Vector3<f64>,
    mass: f64,
    inertia_body: &Matrix3<f64>,
    dt: f64,
) -> Result<RigidState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::domain(format!("time step must be > 0, got {dt}")));
    }
    let a = force / mass;
    let alpha = angular_acceleration(&state.q, inertia_body, torque)?;
    let v = state.v + a * dt;
    let omega = state.omega + alpha * dt;
    let t = state.t + v * dt;
    Ok(RigidState { t, q: integrate_quaternion(&state.q, &omega, dt), v, omega })
}

/// `Normalize(q + 0.5 [omega, 0] q dt)` for a world-frame rate.
pub fn integrate_quaternion(q: &UnitQuaternion<f64>, omega: &Vector3<f64>, dt: f64) -> UnitQuaternion<f64> {
    let qq = q.quaternion();
    let dq = Quaternion::from_imag(*omega) * qq * (0.5 * dt);
    UnitQuaternion::new_normalize(qq + dq)
}

/// Everything the engine computes for one state before integrating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepEval {
    pub contact: TerrainContact,
    pub loads: WheelLoads,
    pub wheels: [WheelState; 4],
    pub mu: [f64; 4],
    pub friction: [Vector3<f64>; 4],
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub accel: Vector3<f64>,
    pub alpha: Vector3<f64>,
}

/// Per-wheel terrain data used by [`evaluate`].
#[derive(Debug, Clone, Copy)]
pub struct WheelTerrain {
    pub normal: Vector3<f64>,
    pub coeffs: [f64; 4],
}

/// Chain weight transfer, skid velocity, friction and wrench for one state.
///
/// `accel_hint` is the world acceleration fed to the load transfer (lagged,
/// iterated or measured). Stribeck coefficients are passed as raw arrays so
/// the identifier can evaluate unvalidated iterates.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    state: &RigidState,
    vehicle: &VehicleModel,
    inertia_body: &Matrix3<f64>,
    rpm: &[f64; 4],
    dirs_body: &[Vector3<f64>; 4],
    terrain: &[WheelTerrain; 4],
    accel_hint: &Vector3<f64>,
    g: f64,
) -> Result<StepEval> {
    let mean_n = terrain.iter().fold(Vector3::zeros(), |acc, w| acc + w.normal);
    let contact = TerrainContact::from_orientation(vehicle, &state.q, &mean_n)?;
    let (f, l) = contact_frame(&state.q, &contact.normal)?;
    let loads = weight_transfer_g(vehicle, &contact, accel_hint.dot(&f), accel_hint.dot(&l), g)?
        .with_normals(&terrain.map(|w| w.normal.normalize()));
    eval_with_loads(state, vehicle, inertia_body, rpm, dirs_body, terrain, contact, loads, g)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn eval_with_loads(
    state: &RigidState,
    vehicle: &VehicleModel,
    inertia_body: &Matrix3<f64>,
    rpm: &[f64; 4],
    dirs_body: &[Vector3<f64>; 4],
    terrain: &[WheelTerrain; 4],
    contact: TerrainContact,
    loads: WheelLoads,
    g: f64,
) -> Result<StepEval> {
    let mut wheels = [WheelState { rpm: 0.0, dir: Vector3::x(), v_rel: Vector3::zeros() }; 4];
    let mut mu = [0.0; 4];
    let mut friction = [Vector3::zeros(); 4];
    for w in Wheel::ALL {
        let k = w.index();
        let v_rel = skid_velocity(state, vehicle, w, rpm[k], &dirs_body[k]);
        let speed = v_rel.norm();
        mu[k] = crate::friction::stribeck_raw(speed, terrain[k].coeffs);
        // The contact patch slides over the ground at v_c - v_e = -v_rel, and
        // friction opposes that sliding, pulling the body toward wheel speed.
        if speed >= EPS_V {
            friction[k] = v_rel * (mu[k] * loads.magnitudes[k] / speed);
        }
        wheels[k] = WheelState { rpm: rpm[k], dir: state.q * dirs_body[k].normalize(), v_rel };
    }
    let (force, torque) = net_wrench(vehicle, &state.q, &loads, &friction, g);
    let accel = force / vehicle.total_mass();
    let alpha = angular_acceleration(&state.q, inertia_body, &torque)?;
    Ok(StepEval { contact, loads, wheels, mu, friction, force, torque, accel, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::MassPoint;
    use proptest::prelude::*;

    fn centered_vehicle() -> VehicleModel {
        let mut pts = Vec::new();
        for x in [-1.5, 1.5] {
            for y in [-0.8, 0.8] {
                for z in [-0.2, 0.2] {
                    pts.push(MassPoint { position: Vector3::new(x, y, z), mass: 250.0 });
                }
            }
        }
        let c = [
            Vector3::new(1.5, 0.8, -0.6),
            Vector3::new(1.5, -0.8, -0.6),
            Vector3::new(-1.5, 0.8, -0.6),
            Vector3::new(-1.5, -0.8, -0.6),
        ];
        VehicleModel::new(pts, c, [Vector3::x(); 4], 0.35).unwrap()
    }

    #[test]
    fn level_centered_load_is_quarter_weight() {
        let v = centered_vehicle();
        let loads = weight_transfer(&v, &TerrainContact::flat(&v), 0.0, 0.0).unwrap();
        let quarter = v.total_mass() * GRAVITY / 4.0;
        for m in loads.magnitudes {
            assert!((m - quarter).abs() < 1e-9);
        }
        assert!((loads.beta - 1.0).abs() < 1e-12);
        assert!((loads.gamma - 1.0).abs() < 1e-12);
    }

    #[test]
    fn level_static_beta_is_lever_ratio() {
        let v = VehicleModel::pickup();
        let c = TerrainContact::flat(&v);
        let loads = weight_transfer(&v, &c, 0.0, 0.0).unwrap();
        // Static moment balance: the axle nearer the COM carries more.
        assert!((loads.beta - c.d_r / c.d_f).abs() < 1e-12);
        assert!(loads.beta > 1.0);
    }

    #[test]
    fn braking_loads_front_and_climbing_loads_rear() {
        let v = centered_vehicle();
        let flat = TerrainContact::flat(&v);
        let brake = weight_transfer(&v, &flat, -3.0, 0.0).unwrap();
        assert!(brake.beta > 1.0);
        let uphill = TerrainContact::from_slope(&v, 0.2, 0.0);
        let climb = weight_transfer(&v, &uphill, 0.0, 0.0).unwrap();
        assert!(climb.beta < 1.0);
        let left_turn = weight_transfer(&v, &flat, 0.0, 4.0).unwrap();
        assert!(left_turn.gamma < 1.0, "a left turn loads the right side");
    }

    #[test]
    fn tip_over_is_an_error() {
        let v = VehicleModel::pickup();
        let flat = TerrainContact::flat(&v);
        let err = weight_transfer(&v, &flat, 0.0, 30.0).unwrap_err();
        assert!(matches!(err, Error::InfeasibleLoad { .. }));
        assert!(weight_transfer(&v, &TerrainContact::from_slope(&v, 1.6, 0.0), 0.0, 0.0).is_err());
    }

    /// Torque of contact normals and the effective body force (gravity minus
    /// inertial) about a line through `anchor` along `axis`, in the slope frame.
    fn line_torque(c: &TerrainContact, m: f64, loads: &WheelLoads, a_long: f64, a_lat: f64, anchor: Vector3<f64>, axis: Vector3<f64>) -> f64 {
        let g = GRAVITY;
        let pos = [
            Vector3::new(c.d_f, c.d_l, 0.0),
            Vector3::new(c.d_f, -c.d_r_lat, 0.0),
            Vector3::new(-c.d_r, c.d_l, 0.0),
            Vector3::new(-c.d_r, -c.d_r_lat, 0.0),
        ];
        let body_force = Vector3::new(
            -m * (a_long + g * c.theta.sin()),
            -m * (a_lat + g * c.theta.cos() * c.phi.sin()),
            -m * g * c.theta.cos() * c.phi.cos(),
        );
        let mut tau = (Vector3::new(0.0, 0.0, c.h) - anchor).cross(&body_force);
        for k in 0..4 {
            tau += (pos[k] - anchor).cross(&Vector3::new(0.0, 0.0, loads.magnitudes[k]));
        }
        tau.dot(&axis)
    }

    proptest! {
        #[test]
        fn moment_balance_about_every_contact_line(
            theta in -0.3f64..0.3, phi in -0.2f64..0.2,
            a_long in -2.0f64..2.0, a_lat in -2.0f64..2.0,
            shift_x in -0.3f64..0.3, shift_y in -0.2f64..0.2,
        ) {
            let base = VehicleModel::pickup();
            let pts: Vec<_> = base.points().iter().map(|p| MassPoint { position: p.position + Vector3::new(shift_x, shift_y, 0.0), mass: p.mass }).collect();
            let v = VehicleModel::new(pts, *base.contacts(), [Vector3::x(); 4], 0.35).unwrap();
            let c = TerrainContact::from_slope(&v, theta, phi);
            let loads = weight_transfer(&v, &c, a_long, a_lat).unwrap();
            let m = v.total_mass();
            let lines = [
                (Vector3::new(-c.d_r, 0.0, 0.0), Vector3::y()),
                (Vector3::new(c.d_f, 0.0, 0.0), Vector3::y()),
                (Vector3::new(0.0, c.d_l, 0.0), Vector3::x()),
                (Vector3::new(0.0, -c.d_r_lat, 0.0), Vector3::x()),
            ];
            for (anchor, axis) in lines {
                let t = line_torque(&c, m, &loads, a_long, a_lat, anchor, axis);
                prop_assert!(t.abs() < 1e-8, "residual torque {t}");
            }
            let expect = m * GRAVITY * c.normal_gravity_fraction();
            prop_assert!((loads.total() - expect).abs() < 1e-9 * expect);
        }

        #[test]
        fn friction_never_exceeds_coulomb_bound(vx in -3.0f64..3.0, vy in -3.0f64..3.0, vz in -1.0f64..1.0, n in 0.0f64..5000.0) {
            let s = StribeckCoeffs::new(0.9, 0.7, 0.5, 0.05).unwrap();
            let v_rel = Vector3::new(vx, vy, vz);
            let f = friction_force(&s, &v_rel, n);
            prop_assert!(f.dot(&v_rel) <= 1e-12);
            let bound = s.mu(v_rel.norm()) * n;
            prop_assert!(f.norm() <= bound * (1.0 + 1e-12) + 1e-12);
            if v_rel.norm() >= EPS_V {
                prop_assert!((f.norm() - bound).abs() <= 1e-9 * (1.0 + bound));
            }
        }

        #[test]
        fn quaternion_stays_unit(wx in -5.0f64..5.0, wy in -5.0f64..5.0, wz in -5.0f64..5.0, tx in -1e3f64..1e3, tz in -1e3f64..1e3) {
            let v = VehicleModel::pickup();
            let mut s = RigidState::level(0.0, 0.0, 0.0, 0.3);
            s.omega = Vector3::new(wx, wy, wz);
            for _ in 0..50 {
                s = step(&s, &Vector3::zeros(), &Vector3::new(tx, 0.0, tz), &v, 0.01).unwrap();
                prop_assert!((s.q.quaternion().norm() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn skid_velocity_examples() {
        let v = VehicleModel::pickup();
        let rest = RigidState::level(0.0, 0.0, 0.0, 0.0);
        assert_eq!(skid_velocity(&rest, &v, Wheel::FL, 0.0, &Vector3::x()), Vector3::zeros());

        let mut moving = rest;
        moving.v = Vector3::new(5.0, 0.0, 0.0);
        let rpm = rpm_for_speed(&v, 5.0);
        for w in Wheel::ALL {
            assert!(skid_velocity(&moving, &v, w, rpm, &Vector3::x()).norm() < 1e-12);
        }

        let mut spin = rest;
        spin.omega = Vector3::new(0.0, 0.0, 1.0);
        let lever = v.lever_arm(Wheel::FL);
        // omega x r for omega = z: (-r_y, r_x, 0)
        let expect = -Vector3::new(-lever.y, lever.x, 0.0);
        assert!((skid_velocity(&spin, &v, Wheel::FL, 0.0, &Vector3::x()) - expect).norm() < 1e-12);
    }

    #[test]
    fn friction_force_examples() {
        let s = StribeckCoeffs::new(0.9, 0.7, 0.5, 0.05).unwrap();
        assert_eq!(friction_force(&s, &Vector3::zeros(), 1000.0), Vector3::zeros());
        let mu1 = crate::friction::stribeck_mu(1.0, &s).unwrap();
        let f = friction_force(&s, &Vector3::new(1.0, 0.0, 0.0), 1000.0);
        assert!((f - Vector3::new(-mu1 * 1000.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn static_equilibrium_has_zero_wrench() {
        let v = centered_vehicle();
        let loads = weight_transfer(&v, &TerrainContact::flat(&v), 0.0, 0.0).unwrap();
        let (f, tau) = net_wrench(&v, &UnitQuaternion::identity(), &loads, &[Vector3::zeros(); 4], GRAVITY);
        assert!(f.norm() < 1e-9);
        assert!(tau.norm() < 1e-9);
    }

    #[test]
    fn single_wheel_torque_is_lever_cross_force() {
        let v = VehicleModel::pickup();
        let loads = WheelLoads { beta: 1.0, gamma: 1.0, magnitudes: [0.0; 4], f_n: [Vector3::zeros(); 4] };
        let f = Vector3::new(10.0, -20.0, 5.0);
        let mut fr = [Vector3::zeros(); 4];
        fr[Wheel::RL.index()] = f;
        let (_, tau) = net_wrench(&v, &UnitQuaternion::identity(), &loads, &fr, GRAVITY);
        assert!((tau - v.lever_arm(Wheel::RL).cross(&f)).norm() < 1e-12);
    }

    #[test]
    fn net_wrench_matches_componentwise_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let v = VehicleModel::pickup();
        for _ in 0..50 {
            let q = UnitQuaternion::from_euler_angles(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-3.0..3.0));
            let mut rv = || Vector3::new(rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3), rng.random_range(-1e3..1e3));
            let f_n = [rv(), rv(), rv(), rv()];
            let fr = [rv(), rv(), rv(), rv()];
            let loads = WheelLoads { beta: 1.0, gamma: 1.0, magnitudes: [0.0; 4], f_n };
            let (force, tau) = net_wrench(&v, &q, &loads, &fr, GRAVITY);
            let r = q.to_rotation_matrix().into_inner();
            let mut fo = [0.0, 0.0, -v.total_mass() * GRAVITY];
            let mut to = [0.0; 3];
            for k in 0..4 {
                let lb = v.contacts()[k] - v.com();
                let lw: Vec<f64> = (0..3).map(|i| (0..3).map(|j| r[(i, j)] * lb[j]).sum()).collect();
                let ff: Vec<f64> = (0..3).map(|i| f_n[k][i] + fr[k][i]).collect();
                for i in 0..3 {
                    fo[i] += ff[i];
                }
                to[0] += lw[1] * ff[2] - lw[2] * ff[1];
                to[1] += lw[2] * ff[0] - lw[0] * ff[2];
                to[2] += lw[0] * ff[1] - lw[1] * ff[0];
            }
            for i in 0..3 {
                assert!((force[i] - fo[i]).abs() < 1e-10 * (1.0 + fo[i].abs()));
                assert!((tau[i] - to[i]).abs() < 1e-10 * (1.0 + to[i].abs()));
            }
        }
    }

    #[test]
    fn free_fall_uses_new_velocity() {
        let v = VehicleModel::pickup();
        let s0 = RigidState::level(1.0, 2.0, 3.0, 0.0);
        let dt = 0.01;
        let f = Vector3::new(0.0, 0.0, -v.total_mass() * GRAVITY);
        let s1 = step(&s0, &f, &Vector3::zeros(), &v, dt).unwrap();
        assert!((s1.v - Vector3::new(0.0, 0.0, -GRAVITY * dt)).norm() < 1e-12);
        assert!((s1.t - (s0.t + s1.v * dt)).norm() < 1e-12);
        assert!(s1.q.angle_to(&s0.q) < 1e-12);
    }

    #[test]
    fn spin_up_matches_analytic_rate() {
        let v = VehicleModel::pickup();
        let izz = v.inertia()[(2, 2)];
        let tau = Vector3::new(0.0, 0.0, 500.0);
        let run = |dt: f64, n: usize| {
            let mut s = RigidState::level(0.0, 0.0, 0.0, 0.0);
            for _ in 0..n {
                s = step(&s, &Vector3::zeros(), &tau, &v, dt).unwrap();
            }
            s
        };
        let coarse = run(0.01, 100);
        let fine = run(0.0001, 10_000);
        let analytic = 500.0 / izz * 1.0;
        assert!((coarse.omega.z - analytic).abs() < 1e-9 * analytic);
        assert!((fine.omega.z - analytic).abs() < 1e-9 * analytic);
        assert!((coarse.yaw() - fine.yaw()).abs() < 0.01 * analytic);
    }

    #[test]
    fn singular_inertia_detected() {
        let err = angular_acceleration(&UnitQuaternion::identity(), &Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)), &Vector3::x()).unwrap_err();
        assert!(matches!(err, Error::SingularInertia { .. }));
    }

    #[test]
    fn world_inertia_rotates_principal_axes() {
        let ib = Matrix3::from_diagonal(&Vector3::new(1.0, 2.0, 3.0));
        let q = UnitQuaternion::from_euler_angles(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let iw = world_inertia(&q, &ib);
        // Body x now points along world y.
        assert!((iw[(1, 1)] - 1.0).abs() < 1e-12);
        assert!((iw[(0, 0)] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn orientation_contact_reads_pitch_and_roll() {
        let v = VehicleModel::pickup();
        let theta: f64 = 0.2;
        // Plane rising along +x; vehicle facing +x climbs.
        let n = Vector3::new(-theta.sin(), 0.0, theta.cos());
        let q = UnitQuaternion::from_euler_angles(0.0, -theta, 0.0);
        let c = TerrainContact::from_orientation(&v, &q, &n).unwrap();
        assert!((c.theta - theta).abs() < 1e-12);
        assert!(c.phi.abs() < 1e-12);
        // Facing +y on the same plane: pure roll, left side (toward -x) lower.
        let q = UnitQuaternion::from_euler_angles(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let c = TerrainContact::from_orientation(&v, &q, &n).unwrap();
        assert!(c.theta.abs() < 1e-12);
        assert!((c.phi + theta).abs() < 1e-12);
    }
}
