use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{rpm_for_speed, FlatTerrain, PlaneTerrain, RigidState, SimConfig, Simulator, StepInput, Terrain};
use crate::error::{Error, Result};
use crate::map::GridMap;
use crate::vehicle::VehicleModel;

/// Terrain that also knows its surface height, so the tracker can keep the
/// body on the ground.
pub trait Ground: Terrain {
    fn height(&self, xy: Vector2<f64>) -> f64;
    fn surface_normal(&self, xy: Vector2<f64>) -> Result<Vector3<f64>> {
        Ok(self.sample(xy)?.normal)
    }
}

impl Ground for GridMap {
    fn height(&self, xy: Vector2<f64>) -> f64 {
        self.height_at(xy)
    }
}

impl Ground for FlatTerrain {
    fn height(&self, _xy: Vector2<f64>) -> f64 {
        0.0
    }
}

impl Ground for PlaneTerrain {
    fn height(&self, xy: Vector2<f64>) -> f64 {
        PlaneTerrain::height(self, xy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackGains {
    pub kp_speed: f64,
    pub kd_speed: f64,
    pub kp_heading: f64,
    pub kd_heading: f64,
}

impl Default for TrackGains {
    fn default() -> Self {
        Self { kp_speed: 0.8, kd_speed: 0.1, kp_heading: 2.0, kd_heading: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackParams {
    /// Integration step. Smaller than the open-loop default because the
    /// friction response near zero slip is stiff.
    pub dt: f64,
    pub lookahead: f64,
    pub max_steer_deg: f64,
    /// The speed target is read this far ahead of the vehicle, plus
    /// `lead_time` times its speed, while the profile accelerates.
    pub lead_distance: f64,
    pub lead_time: f64,
    pub stuck_speed: f64,
    pub stuck_time: f64,
    /// Distance from the path beyond which the run is abandoned, m.
    pub off_path: f64,
    /// Success radius around the goal in cells.
    pub success_cells: f64,
    pub cell_size: f64,
    /// Give up after `time_factor * predicted + time_extra` seconds.
    pub time_factor: f64,
    pub time_extra: f64,
    /// Keep every n-th state in the recorded trajectory.
    pub record_every: usize,
}

impl Default for TrackParams {
    fn default() -> Self {
        Self {
            dt: 0.002,
            lookahead: 3.0,
            max_steer_deg: 35.0,
            lead_distance: 0.5,
            lead_time: 0.3,
            stuck_speed: 0.05,
            stuck_time: 5.0,
            off_path: 5.0,
            success_cells: 2.0,
            cell_size: 1.0,
            time_factor: 3.0,
            time_extra: 20.0,
            record_every: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Failure {
    TipOver,
    Stuck,
    OffPath,
    Infeasible,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
    pub speed: f64,
    pub target_speed: f64,
    pub cross_track: f64,
    pub steer: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub success: bool,
    pub failure: Option<Failure>,
    pub actual_time: f64,
    pub predicted_time: f64,
    pub max_cross_track: f64,
    pub max_speed: f64,
    pub trajectory: Vec<TrackSample>,
}

impl RunResult {
    /// Actual over predicted time; defined only on success.
    pub fn time_ratio(&self) -> Option<f64> {
        (self.success && self.predicted_time > 0.0).then(|| self.actual_time / self.predicted_time)
    }

    pub fn infeasible(predicted_time: f64) -> Self {
        Self {
            success: false,
            failure: Some(Failure::Infeasible),
            actual_time: 0.0,
            predicted_time,
            max_cross_track: 0.0,
            max_speed: 0.0,
            trajectory: vec![],
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x,y,z,yaw,speed,target_speed,cross_track,steer")?;
        for s in &self.trajectory {
            writeln!(out, "{},{},{},{},{},{},{},{},{}", s.t, s.x, s.y, s.z, s.yaw, s.speed, s.target_speed, s.cross_track, s.steer)?;
        }
        Ok(())
    }
}

/// Polyline with cumulative arc length and per-vertex speeds.
struct Reference<'a> {
    pts: &'a [Vector2<f64>],
    s: Vec<f64>,
    speeds: &'a [f64],
}

impl<'a> Reference<'a> {
    fn new(pts: &'a [Vector2<f64>], speeds: &'a [f64]) -> Self {
        let mut s = vec![0.0];
        for w in pts.windows(2) {
            s.push(s.last().unwrap() + (w[1] - w[0]).norm());
        }
        Self { pts, s, speeds }
    }

    fn length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    /// Closest point on segments `from..` within a forward window; returns
    /// (segment, arc length, distance).
    fn project(&self, p: Vector2<f64>, from: usize) -> (usize, f64, f64) {
        let last = self.pts.len() - 1;
        let mut best = (from.min(last.saturating_sub(1)), self.s[from.min(last)], f64::INFINITY);
        for i in from.saturating_sub(1)..last.min(from + 40) {
            let (a, b) = (self.pts[i], self.pts[i + 1]);
            let ab = b - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let d = (p - (a + ab * t)).norm();
            if d < best.2 {
                best = (i, self.s[i] + t * ab.norm(), d);
            }
        }
        best
    }

    fn point_at(&self, s: f64) -> Vector2<f64> {
        let s = s.clamp(0.0, self.length());
        let i = match self.s.partition_point(|&x| x <= s) {
            0 => 0,
            k => (k - 1).min(self.pts.len() - 2),
        };
        let d = self.s[i + 1] - self.s[i];
        let t = if d > 0.0 { (s - self.s[i]) / d } else { 0.0 };
        self.pts[i] + (self.pts[i + 1] - self.pts[i]) * t
    }

    /// Inside the success radius and near the end of the path. The
    /// arc-length gate keeps paths that pass their own end from finishing
    /// early.
    fn arrived(&self, p: Vector2<f64>, s: f64, radius: f64) -> bool {
        (p - *self.pts.last().unwrap()).norm() <= radius && s >= self.length() - 2.0 * radius
    }

    /// Planned time until the path enters the success radius, so that it
    /// measures the same event as the run.
    fn arrival_time(&self, radius: f64) -> f64 {
        let len = self.length();
        let step = (radius / 50.0).max(1e-3);
        let mut s_hit = len;
        let mut s = (len - 2.0 * radius).max(0.0);
        while s < len {
            if self.arrived(self.point_at(s), s, radius) {
                s_hit = s;
                break;
            }
            s += step;
        }
        // v^2 is linear within a segment, so each piece takes 2 ds / (v_a + v_b).
        let mut t = 0.0;
        for i in 0..self.pts.len() - 1 {
            let (a, b) = (self.s[i], self.s[i + 1].min(s_hit));
            if b <= a {
                break;
            }
            let (va, vb) = (self.speed_at(a), self.speed_at(b));
            if va + vb > 0.0 {
                t += 2.0 * (b - a) / (va + vb);
            } else {
                return f64::INFINITY;
            }
        }
        t
    }

    /// Constant acceleration between checkpoints: `v^2` is linear in arc
    /// length, matching the planner's force model.
    fn speed_at(&self, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let i = match self.s.partition_point(|&x| x <= s) {
            0 => 0,
            k => (k - 1).min(self.pts.len() - 2),
        };
        let d = self.s[i + 1] - self.s[i];
        let t = if d > 0.0 { (s - self.s[i]) / d } else { 0.0 };
        let (w0, w1) = (self.speeds[i].powi(2), self.speeds[i + 1].powi(2));
        (w0 + (w1 - w0) * t).max(0.0).sqrt()
    }
}

fn wrap(a: f64) -> f64 {
    let t = (a + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI);
    t - std::f64::consts::PI
}

/// Per-wheel rolling directions and edge speeds of an ideal Ackermann
/// vehicle turning about the rear axle line. `u` is the rear-axle center
/// speed and `delta` the bicycle steering angle.
pub fn ackermann(vehicle: &VehicleModel, u: f64, delta: f64) -> StepInput {
    let l = vehicle.wheelbase();
    let b = 0.5 * vehicle.track_width();
    if delta.abs() < 1e-9 {
        return StepInput::straight(rpm_for_speed(vehicle, u));
    }
    let r = l / delta.tan();
    // Wheel order FL, FR, RL, RR; left is +y.
    let lateral = [b, -b, b, -b];
    let mut out = StepInput::straight(0.0);
    for k in 0..4 {
        let rw = r - lateral[k];
        let (dir, radius) = if k < 2 {
            let ang = (l / rw).atan();
            (Vector3::new(ang.cos(), ang.sin(), 0.0), (rw * rw + l * l).sqrt() * rw.signum())
        } else {
            (Vector3::x(), rw)
        };
        out.dirs[k] = dir;
        out.rpm[k] = rpm_for_speed(vehicle, u * radius / r);
    }
    out
}

/// Snap the body onto the surface: COM at ride height above the local
/// ground, body z along the normal, no velocity into the ground and only
/// yaw rate about the normal. The dynamics are planar on the contact plane
/// and carry no suspension, so this replaces the vertical constraint.
fn project_to_ground<G: Ground + ?Sized>(state: &mut RigidState, ground: &G, ride: f64) -> Result<()> {
    let xy = Vector2::new(state.t.x, state.t.y);
    let n = ground.surface_normal(xy)?;
    let h = state.heading();
    let x = h - n * h.dot(&n);
    if x.norm() < 1e-9 {
        return Err(Error::domain("heading is normal to the ground"));
    }
    let x = x.normalize();
    let y = n.cross(&x);
    let rot = Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, n]));
    state.q = UnitQuaternion::from_rotation_matrix(&rot);
    state.t.z = ground.height(xy) + ride / n.z;
    state.v -= n * state.v.dot(&n);
    state.omega = n * state.omega.dot(&n);
    Ok(())
}

/// Height of the COM above the contact plane.
pub fn ride_height(vehicle: &VehicleModel) -> f64 {
    -vehicle.contacts().iter().map(|c| c.z - vehicle.com().z).sum::<f64>() / 4.0
}

/// Rest pose on the ground at `xy` facing `yaw`.
pub fn pose_on_ground<G: Ground + ?Sized>(xy: Vector2<f64>, yaw: f64, vehicle: &VehicleModel, ground: &G) -> Result<RigidState> {
    let mut s = RigidState::level(xy.x, xy.y, 0.0, yaw);
    project_to_ground(&mut s, ground, ride_height(vehicle))?;
    Ok(s)
}

/// Initial state at rest on the ground at the first checkpoint, facing the
/// second.
pub fn start_state<G: Ground + ?Sized>(checkpoints: &[Vector2<f64>], vehicle: &VehicleModel, ground: &G) -> Result<RigidState> {
    if checkpoints.len() < 2 {
        return Err(Error::domain("tracking needs at least two checkpoints"));
    }
    let d = checkpoints[1] - checkpoints[0];
    pose_on_ground(checkpoints[0], d.y.atan2(d.x), vehicle, ground)
}

/// Follow `checkpoints` at the speeds of `profile` from `initial` until the
/// vehicle enters the success radius of the last checkpoint, or one of the
/// failure rules fires. The reported prediction is the planned time to the
/// same radius.
#[allow(clippy::too_many_arguments)]
pub fn track<G: Ground + ?Sized>(
    checkpoints: &[Vector2<f64>],
    profile: &[f64],
    vehicle: &VehicleModel,
    ground: &G,
    initial: RigidState,
    gains: &TrackGains,
    params: &TrackParams,
) -> Result<RunResult> {
    if checkpoints.len() < 2 || profile.len() != checkpoints.len() {
        return Err(Error::LengthMismatch(format!("{} checkpoints with {} speeds", checkpoints.len(), profile.len())));
    }
    let reference = Reference::new(checkpoints, profile);
    let radius = params.success_cells * params.cell_size;
    let predicted_time = reference.arrival_time(radius);
    let ride = ride_height(vehicle);
    let max_steer = params.max_steer_deg.to_radians();
    let limit = params.time_factor * predicted_time + params.time_extra;
    let config = SimConfig { dt: params.dt, ..SimConfig::default() };

    let mut sim = Simulator::new(vehicle, ground, initial, config);
    let mut seg = 0;
    let (mut e_h_prev, mut e_v_prev) = (None::<f64>, None::<f64>);
    let mut delta_prev = 0.0;
    let (mut stuck_for, mut t) = (0.0, 0.0);
    let (mut max_ct, mut max_speed) = (0.0f64, 0.0f64);
    let mut trajectory = Vec::new();
    let mut step = 0usize;

    let finish = |success: bool, failure: Option<Failure>, t: f64, max_ct: f64, max_speed: f64, trajectory: Vec<TrackSample>| RunResult {
        success,
        failure,
        actual_time: t,
        predicted_time,
        max_cross_track: max_ct,
        max_speed,
        trajectory,
    };

    loop {
        let st = sim.state;
        let pos = Vector2::new(st.t.x, st.t.y);
        let heading = st.heading();
        let speed = st.v.dot(&heading);
        let (s_seg, s_arc, ct) = reference.project(pos, seg);
        seg = s_seg;
        max_ct = max_ct.max(ct);
        max_speed = max_speed.max(st.v.norm());

        if reference.arrived(pos, s_arc, radius) {
            return Ok(finish(true, None, t, max_ct, max_speed, trajectory));
        }
        if ct > params.off_path {
            return Ok(finish(false, Some(Failure::OffPath), t, max_ct, max_speed, trajectory));
        }
        if t > limit || stuck_for > params.stuck_time {
            return Ok(finish(false, Some(Failure::Stuck), t, max_ct, max_speed, trajectory));
        }

        let look = reference.point_at(s_arc + params.lookahead);
        let to = look - pos;
        let e_h = wrap(to.y.atan2(to.x) - heading.y.atan2(heading.x));
        let de_h = e_h_prev.map_or(0.0, |p| (e_h - p) / params.dt);
        let delta = (gains.kp_heading * e_h + gains.kd_heading * de_h).clamp(-max_steer, max_steer);

        // Leading the profile only while it accelerates lets the vehicle
        // start from rest without braking early for the goal.
        let here = reference.speed_at(s_arc);
        let v_t = here.max(reference.speed_at(s_arc + params.lead_distance + params.lead_time * speed.max(0.0)));
        let e_v = v_t - speed;
        let de_v = e_v_prev.map_or(0.0, |p| (e_v - p) / params.dt);
        // With a zero target the derivative term fights the deceleration and
        // would hold a slow creep, and the lookahead point collapses onto the
        // vehicle; lock the wheels at the last steering angle instead.
        let (u, delta) = if v_t > 0.0 { ((v_t + gains.kp_speed * e_v + gains.kd_speed * de_v).max(0.0), delta) } else { (0.0, delta_prev) };
        let input = ackermann(vehicle, u, delta);
        delta_prev = delta;

        if step.is_multiple_of(params.record_every.max(1)) {
            trajectory.push(TrackSample { t, x: st.t.x, y: st.t.y, z: st.t.z, yaw: st.yaw(), speed, target_speed: v_t, cross_track: ct, steer: delta });
        }

        match sim.step(&input) {
            Ok(_) => {}
            Err(Error::InfeasibleLoad { .. }) => return Ok(finish(false, Some(Failure::TipOver), t, max_ct, max_speed, trajectory)),
            Err(Error::OutOfBounds { .. }) => return Ok(finish(false, Some(Failure::OffPath), t, max_ct, max_speed, trajectory)),
            Err(e) => return Err(e),
        }
        if project_to_ground(&mut sim.state, ground, ride).is_err() {
            return Ok(finish(false, Some(Failure::TipOver), t, max_ct, max_speed, trajectory));
        }
        e_h_prev = Some(e_h);
        e_v_prev = Some(e_v);
        t += params.dt;
        step += 1;
        stuck_for = if sim.state.v.norm() < params.stuck_speed { stuck_for + params.dt } else { 0.0 };
    }
}
