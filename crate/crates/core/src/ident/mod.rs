//! Friction identification from IMU and wheel-speed logs.
//!
//! The lower-level problem refines per-step Stribeck coefficients together
//! with orientations, velocities, wheel RPMs, normal loads and the inertia
//! tensor so that the reasoning engine reproduces the logged accelerations.
//! The refined coefficients become pseudo-labels that [`fit_cells`] writes
//! back into the map's friction layer.

mod banded;
mod cells;
mod lm;

pub use banded::BorderedBlockTridiag;
pub use cells::{fit_cells, pseudo_labels, read_pseudo_labels_csv, write_pseudo_labels_csv, CellFit, PseudoLabel};
pub use lm::{solve_lower, LmStatus, LowerSolution, TraceEntry};

use nalgebra::{DVector, Matrix3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    eval_with_loads, integrate_quaternion, weight_transfer_g, RigidState, TerrainContact, WheelLoads, WheelTerrain,
    GRAVITY,
};
use crate::error::{Error, Result};
use crate::friction::stribeck_partials_raw;
use crate::map::GridMap;
use crate::vehicle::{VehicleModel, Wheel};

/// IMU and wheel-speed stream sampled every `dt`.
///
/// IMU quantities are body-frame kinematic values: `a_imu` is the world
/// acceleration rotated into the body (no gravity), `alpha_imu` the forward
/// difference of consecutive gyro samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveLog {
    pub dt: f64,
    /// Pose and velocity at the first sample.
    pub initial: RigidState,
    pub a_imu: Vec<Vector3<f64>>,
    pub alpha_imu: Vec<Vector3<f64>>,
    pub omega_imu: Vec<Vector3<f64>>,
    pub rpm_meas: Vec<[f64; 4]>,
    /// Commanded wheel rolling directions in the vehicle frame.
    pub dirs: Vec<[Vector3<f64>; 4]>,
    /// Ground-truth state at each sample, when known.
    #[serde(default)]
    pub gt: Option<Vec<RigidState>>,
}

impl DriveLog {
    pub fn len(&self) -> usize {
        self.a_imu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_imu.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let lens = [self.alpha_imu.len(), self.omega_imu.len(), self.rpm_meas.len(), self.dirs.len()];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::LengthMismatch(format!("log streams have lengths {n} and {lens:?}")));
        }
        if let Some(gt) = &self.gt {
            if gt.len() != n {
                return Err(Error::LengthMismatch(format!("{} ground-truth states for {n} samples", gt.len())));
            }
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::domain(format!("log dt must be > 0, got {}", self.dt)));
        }
        let finite = |v: &Vector3<f64>| v.iter().all(|x| x.is_finite());
        if !self.a_imu.iter().chain(&self.alpha_imu).chain(&self.omega_imu).all(finite)
            || !self.rpm_meas.iter().flatten().all(|x| x.is_finite())
        {
            return Err(Error::domain("log contains non-finite samples"));
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let log: DriveLog = serde_json::from_str(s)?;
        log.validate()?;
        Ok(log)
    }
}

/// Per-family diagonal weights; each residual is scaled by `sqrt(W)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentWeights {
    pub a: [f64; 3],
    pub alpha: [f64; 3],
    pub v: [f64; 3],
    pub q: [f64; 3],
    pub s: [f64; 4],
    pub w: [f64; 4],
    /// Pull of each normal magnitude toward weight transfer under the
    /// measured acceleration. Four loads against three equilibrium equations
    /// leave a diagonal warp mode the IMU cannot see; this keeps it pinned.
    pub n: [f64; 4],
}

impl Default for IdentWeights {
    /// `v` is `1 / dt^2` at 100 Hz, which puts the velocity-consistency
    /// residual in the same units as `a`. With unit weight a slow velocity
    /// drift is nearly free and shifts every slip speed at once, so IMU noise
    /// gets fitted by trading `mu_d` against `mu_v`.
    fn default() -> Self {
        Self { a: [1.0; 3], alpha: [1.0; 3], v: [1e4; 3], q: [10.0; 3], s: [100.0; 4], w: [0.1; 4], n: [1e-6; 4] }
    }
}

impl IdentWeights {
    /// Everything zero except the RPM-measurement family.
    pub fn rpm_only() -> Self {
        Self { a: [0.0; 3], alpha: [0.0; 3], v: [0.0; 3], q: [0.0; 3], s: [0.0; 4], w: [0.1; 4], n: [0.0; 4] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmParams {
    pub max_iters: usize,
    /// Initial Marquardt damping relative to the normal-matrix diagonal.
    pub damping_init: f64,
    pub damping_scale: f64,
    /// Stop when the step is this small relative to the variables.
    pub tol: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tol: f64,
}

impl Default for LmParams {
    fn default() -> Self {
        Self { max_iters: 100, damping_init: 1e-3, damping_scale: 10.0, tol: 1e-10, cost_tol: 1e-10 }
    }
}

/// When the four wheels of one step share a single coefficient set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WheelTying {
    /// Wheels over the same map cell share coefficients.
    SameCell,
    /// Wheels whose cells carry the same prior coefficients share them.
    #[default]
    SamePrior,
    /// Every wheel has its own coefficients.
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentParams {
    pub weights: IdentWeights,
    pub s_max: [f64; 4],
    pub lambda_prior: f64,
    pub huber_delta: f64,
    pub lm: LmParams,
    pub tying: WheelTying,
}

impl Default for IdentParams {
    fn default() -> Self {
        Self {
            weights: IdentWeights::default(),
            s_max: [2.0, 2.0, 5.0, 1.0],
            lambda_prior: 0.1,
            huber_delta: 1.0,
            lm: LmParams::default(),
            tying: WheelTying::default(),
        }
    }
}

impl IdentParams {
    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        let all = w.a.iter().chain(&w.alpha).chain(&w.v).chain(&w.q).chain(&w.s).chain(&w.w).chain(&w.n);
        if all.clone().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::Config("identification weights must be finite and >= 0".into()));
        }
        if self.s_max.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::Config("s_max entries must be > 0".into()));
        }
        if !(self.huber_delta > 0.0) || !(self.lambda_prior >= 0.0) {
            return Err(Error::Config("huber_delta must be > 0 and lambda_prior >= 0".into()));
        }
        if !(self.lm.damping_scale > 1.0) || !(self.lm.damping_init > 0.0) {
            return Err(Error::Config("LM damping must be > 0 with scale > 1".into()));
        }
        Ok(())
    }
}

/// Everything the lower level refines. Positions follow the initial dead
/// reckoning and stay fixed: no constraint family involves them beyond the
/// choice of terrain under each wheel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentVariables {
    pub states: Vec<RigidState>,
    pub rpm: Vec<[f64; 4]>,
    pub f_n: Vec<[f64; 4]>,
    /// Raw `[mu_s, mu_d, v_s, mu_v]` per step and wheel.
    pub s: Vec<[[f64; 4]; 4]>,
    pub inertia: Matrix3<f64>,
}

impl IdentVariables {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Initial guess: orientations and velocities dead-reckoned from the IMU,
/// RPMs from their measurement, loads from weight transfer under the measured
/// acceleration, coefficients from the map's friction layer.
pub fn initial_variables(log: &DriveLog, vehicle: &VehicleModel, map: &GridMap) -> Result<IdentVariables> {
    initial_variables_g(log, vehicle, map, GRAVITY)
}

pub fn initial_variables_g(log: &DriveLog, vehicle: &VehicleModel, map: &GridMap, g: f64) -> Result<IdentVariables> {
    log.validate()?;
    let n = log.len();
    if n < 2 {
        return Err(Error::domain("identification needs at least two samples"));
    }
    let mut states = Vec::with_capacity(n);
    let mut s = log.initial;
    s.omega = s.q * log.omega_imu[0];
    states.push(s);
    for i in 0..n - 1 {
        let omega_next = s.q * log.omega_imu[i + 1];
        let v = s.v + s.q * log.a_imu[i] * log.dt;
        let q = integrate_quaternion(&s.q, &omega_next, log.dt);
        s = RigidState { t: s.t + v * log.dt, q, v, omega: omega_next };
        states.push(s);
    }
    let mut f_n = Vec::with_capacity(n);
    let mut coeffs = Vec::with_capacity(n);
    for (i, st) in states.iter().enumerate() {
        let normals = wheel_normals(st, vehicle, map);
        let loads = measured_loads(st, vehicle, &normals, &(st.q * log.a_imu[i]), g)?;
        f_n.push(loads.magnitudes);
        let mut sw = [[0.0; 4]; 4];
        for w in Wheel::ALL {
            let p = st.wheel_position(vehicle, w);
            sw[w.index()] = map.stribeck_at(Vector2::new(p.x, p.y))?.to_array();
        }
        coeffs.push(sw);
    }
    Ok(IdentVariables { states, rpm: log.rpm_meas.clone(), f_n, s: coeffs, inertia: vehicle.inertia() })
}

fn wheel_normals(state: &RigidState, vehicle: &VehicleModel, map: &GridMap) -> [Vector3<f64>; 4] {
    Wheel::ALL.map(|w| {
        let p = state.wheel_position(vehicle, w);
        map.normal_at(Vector2::new(p.x, p.y))
    })
}

/// Weight transfer under a given world acceleration, directed along
/// per-wheel normals.
fn measured_loads(
    state: &RigidState,
    vehicle: &VehicleModel,
    normals: &[Vector3<f64>; 4],
    accel: &Vector3<f64>,
    g: f64,
) -> Result<WheelLoads> {
    let mean_n = normals.iter().fold(Vector3::zeros(), |a, n| a + n);
    let contact = TerrainContact::from_orientation(vehicle, &state.q, &mean_n)?;
    let (f, l) = crate::dynamics::contact_frame(&state.q, &contact.normal)?;
    Ok(weight_transfer_g(vehicle, &contact, accel.dot(&f), accel.dot(&l), g)?.with_normals(normals))
}

/// One step's slice of the variables.
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepVars {
    pub state: RigidState,
    pub rpm: [f64; 4],
    pub f_n: [f64; 4],
    pub s: [[f64; 4]; 4],
}

/// Number of local coordinates per step before the coefficient groups:
/// rotation (3), velocity (3), RPM (4), normal loads (4).
pub(crate) const STEP_BASE: usize = 14;
/// Lowest value each coefficient channel is projected to after a step.
const S_FLOOR: [f64; 4] = [1e-6, 1e-6, 1e-6, 0.0];
/// Inertia parameters `(Ixx, Iyy, Izz, Ixy, Ixz, Iyz)`.
pub(crate) const N_GLOBAL: usize = 6;
/// Residuals every step carries: `C_a` (3), `C_alpha` (3), `C_w` (4), `C_n` (4).
pub(crate) const LOCAL_RESIDUALS: usize = 14;

pub(crate) fn inertia_params(i: &Matrix3<f64>) -> [f64; 6] {
    [i[(0, 0)], i[(1, 1)], i[(2, 2)], i[(0, 1)], i[(0, 2)], i[(1, 2)]]
}

pub(crate) fn inertia_from_params(p: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(p[0], p[3], p[4], p[3], p[1], p[5], p[4], p[5], p[2])
}

/// A log bound to its vehicle, terrain normals and coefficient grouping.
pub struct IdentProblem<'a> {
    pub log: &'a DriveLog,
    pub vehicle: &'a VehicleModel,
    pub params: IdentParams,
    pub g: f64,
    normals: Vec<[Vector3<f64>; 4]>,
    /// Coefficient group of each wheel at each step.
    groups: Vec<[usize; 4]>,
    n_groups: Vec<usize>,
    sqrt_w: IdentWeights,
}

impl<'a> IdentProblem<'a> {
    /// Terrain normals and wheel grouping are frozen at the positions of
    /// `vars`.
    pub fn new(log: &'a DriveLog, vehicle: &'a VehicleModel, map: &GridMap, vars: &IdentVariables, params: IdentParams) -> Result<Self> {
        params.validate()?;
        log.validate()?;
        if vars.len() != log.len() || vars.rpm.len() != log.len() || vars.f_n.len() != log.len() || vars.s.len() != log.len() {
            return Err(Error::LengthMismatch(format!("{} variable steps for {} log samples", vars.len(), log.len())));
        }
        let mut normals = Vec::with_capacity(vars.len());
        let mut groups = Vec::with_capacity(vars.len());
        let mut n_groups = Vec::with_capacity(vars.len());
        for st in &vars.states {
            normals.push(wheel_normals(st, vehicle, map));
            let cells: Vec<_> = Wheel::ALL
                .iter()
                .map(|&w| {
                    let p = st.wheel_position(vehicle, w);
                    map.cell_at(Vector2::new(p.x, p.y))
                })
                .collect::<Result<_>>()?;
            let mut g = [0usize; 4];
            let mut count = 0;
            for k in 0..4 {
                let same = |j: usize| match params.tying {
                    WheelTying::Never => false,
                    WheelTying::SameCell => cells[j] == cells[k],
                    WheelTying::SamePrior => map.stribeck(cells[j]) == map.stribeck(cells[k]),
                };
                match (0..k).find(|&j| same(j)) {
                    Some(j) => g[k] = g[j],
                    None => {
                        g[k] = count;
                        count += 1;
                    }
                }
            }
            groups.push(g);
            n_groups.push(count);
        }
        let w = &params.weights;
        let sq3 = |a: [f64; 3]| a.map(f64::sqrt);
        let sq4 = |a: [f64; 4]| a.map(f64::sqrt);
        let sqrt_w = IdentWeights { a: sq3(w.a), alpha: sq3(w.alpha), v: sq3(w.v), q: sq3(w.q), s: sq4(w.s), w: sq4(w.w), n: sq4(w.n) };
        Ok(Self { log, vehicle, params, g: GRAVITY, normals, groups, n_groups, sqrt_w })
    }

    pub fn len(&self) -> usize {
        self.log.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log.is_empty()
    }

    pub fn groups(&self, i: usize) -> [usize; 4] {
        self.groups[i]
    }

    pub(crate) fn block_size(&self, i: usize) -> usize {
        STEP_BASE + 4 * self.n_groups[i]
    }

    pub(crate) fn block_sizes(&self) -> Vec<usize> {
        (0..self.len()).map(|i| self.block_size(i)).collect()
    }

    pub(crate) fn residual_len(&self, i: usize) -> usize {
        if i + 1 < self.len() {
            LOCAL_RESIDUALS + 22
        } else {
            LOCAL_RESIDUALS
        }
    }

    pub(crate) fn step_vars(&self, vars: &IdentVariables, i: usize) -> StepVars {
        StepVars { state: vars.states[i], rpm: vars.rpm[i], f_n: vars.f_n[i], s: vars.s[i] }
    }

    /// Move local coordinate `k` of step `i` by `h`. The first step's
    /// orientation and velocity are pinned to the logged initial state: every
    /// kinematic residual is a difference between steps, so without an anchor
    /// a common velocity offset or tilt trades freely against the friction.
    pub(crate) fn perturb(&self, sv: &mut StepVars, i: usize, k: usize, h: f64) {
        if i == 0 && k < 6 {
            return;
        }
        match k {
            0..=2 => {
                let mut d = Vector3::zeros();
                d[k] = h;
                sv.state.q *= UnitQuaternion::from_scaled_axis(d);
            }
            3..=5 => sv.state.v[k - 3] += h,
            6..=9 => sv.rpm[k - 6] += h,
            10..=13 => sv.f_n[k - 10] += h,
            _ => {
                let (grp, c) = ((k - STEP_BASE) / 4, (k - STEP_BASE) % 4);
                for w in 0..4 {
                    if self.groups[i][w] == grp {
                        sv.s[w][c] += h;
                    }
                }
            }
        }
    }

    /// Typical magnitude of coordinate `k`, for finite-difference steps.
    pub(crate) fn coord_scale(&self, sv: &StepVars, k: usize) -> f64 {
        match k {
            0..=2 => 1.0,
            3..=5 => sv.state.v[k - 3].abs().max(1.0),
            6..=9 => sv.rpm[k - 6].abs().max(1.0),
            10..=13 => sv.f_n[k - 10].abs().max(1.0),
            _ => 1.0,
        }
    }

    /// Apply a full update vector (steps in order, then inertia).
    pub fn apply(&self, vars: &IdentVariables, delta: &DVector<f64>) -> IdentVariables {
        let mut out = vars.clone();
        let mut off = 0;
        for i in 0..self.len() {
            let mut sv = self.step_vars(vars, i);
            let n = self.block_size(i);
            if i > 0 {
                let d = Vector3::new(delta[off], delta[off + 1], delta[off + 2]);
                sv.state.q *= UnitQuaternion::from_scaled_axis(d);
            }
            for k in 3..n {
                self.perturb(&mut sv, i, k, delta[off + k]);
            }
            // Projection onto valid curves: positive mu_s, mu_d, v_s and
            // nonnegative mu_v. The upper bound stays soft, through C_s.
            for c in sv.s.iter_mut() {
                for k in 0..4 {
                    c[k] = c[k].max(S_FLOOR[k]);
                }
            }
            out.states[i] = sv.state;
            out.rpm[i] = sv.rpm;
            out.f_n[i] = sv.f_n;
            out.s[i] = sv.s;
            off += n;
        }
        let mut p = inertia_params(&vars.inertia);
        for (k, pk) in p.iter_mut().enumerate() {
            *pk += delta[off + k];
        }
        out.inertia = inertia_from_params(&p);
        out
    }

    pub fn n_vars(&self) -> usize {
        self.block_sizes().iter().sum::<usize>() + N_GLOBAL
    }

    /// Residual block of step `i`: `C_a, C_alpha, C_w, C_n` and, except for
    /// the last step, `C_v, C_q, C_s`, all scaled by `sqrt(W)`.
    pub(crate) fn block_residuals(
        &self,
        i: usize,
        cur: &StepVars,
        next: Option<&StepVars>,
        inertia: &Matrix3<f64>,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        let log = self.log;
        let sw = &self.sqrt_w;
        let q = cur.state.q;
        let a_meas = q * log.a_imu[i];
        let alpha_meas = q * log.alpha_imu[i];
        let eval = self.engine(i, cur, inertia)?;
        let c_a = eval.0 - a_meas;
        let c_alpha = eval.1 - alpha_meas;
        for k in 0..3 {
            out.push(sw.a[k] * c_a[k]);
        }
        for k in 0..3 {
            out.push(sw.alpha[k] * c_alpha[k]);
        }
        for k in 0..4 {
            out.push(sw.w[k] * (cur.rpm[k] - log.rpm_meas[i][k]));
        }
        if sw.n.iter().any(|x| *x > 0.0) {
            let wt = measured_loads(&cur.state, self.vehicle, &self.normals[i], &a_meas, self.g)?;
            for k in 0..4 {
                out.push(sw.n[k] * (cur.f_n[k] - wt.magnitudes[k]));
            }
        } else {
            out.extend([0.0; 4]);
        }
        if let Some(nx) = next {
            let c_v = (nx.state.v - cur.state.v) - a_meas * log.dt;
            for k in 0..3 {
                out.push(sw.v[k] * c_v[k]);
            }
            let omega = q * log.omega_imu[i + 1];
            let pred = integrate_quaternion(&q, &omega, log.dt);
            let c_q = (nx.state.q.inverse() * pred).scaled_axis();
            for k in 0..3 {
                out.push(sw.q[k] * c_q[k]);
            }
            let s_max = self.params.s_max;
            for w in 0..4 {
                for c in 0..4 {
                    let over = (cur.s[w][c] / s_max[c] - 1.0).max(0.0);
                    out.push(sw.s[c] * (over * over + (nx.s[w][c] - cur.s[w][c])));
                }
            }
        }
        Ok(())
    }

    /// Engine acceleration and angular acceleration at step `i` with the
    /// variables' loads and coefficients.
    fn engine(&self, i: usize, sv: &StepVars, inertia: &Matrix3<f64>) -> Result<(Vector3<f64>, Vector3<f64>)> {
        let mut state = sv.state;
        state.omega = state.q * self.log.omega_imu[i];
        let normals = &self.normals[i];
        let terrain: [WheelTerrain; 4] = std::array::from_fn(|k| WheelTerrain { normal: normals[k], coeffs: sv.s[k] });
        let loads = WheelLoads { beta: f64::NAN, gamma: f64::NAN, magnitudes: sv.f_n, f_n: std::array::from_fn(|k| normals[k] * sv.f_n[k]) };
        let contact = TerrainContact::flat(self.vehicle);
        let e = eval_with_loads(&state, self.vehicle, inertia, &sv.rpm, &self.log.dirs[i], &terrain, contact, loads, self.g)?;
        Ok((e.accel, e.alpha))
    }

    pub fn residuals(&self, vars: &IdentVariables) -> Result<DVector<f64>> {
        if vars.len() != self.len() {
            return Err(Error::LengthMismatch(format!("{} variable steps for {} log samples", vars.len(), self.len())));
        }
        let mut out = Vec::new();
        for i in 0..self.len() {
            let cur = self.step_vars(vars, i);
            let next = (i + 1 < self.len()).then(|| self.step_vars(vars, i + 1));
            self.block_residuals(i, &cur, next.as_ref(), &vars.inertia, &mut out)?;
        }
        Ok(DVector::from_vec(out))
    }

    /// `sum r^2` over the scaled residual stack.
    pub fn cost(&self, vars: &IdentVariables) -> Result<f64> {
        Ok(self.residuals(vars)?.norm_squared())
    }
}

/// Weighted residual stack of `vars` against the log.
pub fn residual_stack(vars: &IdentVariables, problem: &IdentProblem) -> Result<DVector<f64>> {
    problem.residuals(vars)
}

/// Componentwise Huber loss summed over a vector.
pub fn huber(r: &Vector3<f64>, delta: f64) -> f64 {
    r.iter()
        .map(|x| {
            let a = x.abs();
            if a <= delta {
                0.5 * x * x
            } else {
                delta * (a - 0.5 * delta)
            }
        })
        .sum()
}

fn huber_grad(r: &Vector3<f64>, delta: f64) -> Vector3<f64> {
    r.map(|x| x.clamp(-delta, delta))
}

/// `Huber(a_est, a_gt) + Huber(alpha_est, alpha_gt)` summed over `window`,
/// with `s` on every wheel and loads from weight transfer under the logged
/// acceleration. Needs ground-truth states in the log. Also returns the
/// gradient with respect to the four coefficients.
pub fn dynamics_loss_grad(
    s: [f64; 4],
    log: &DriveLog,
    window: std::ops::Range<usize>,
    vehicle: &VehicleModel,
    map: &GridMap,
    huber_delta: f64,
) -> Result<(f64, [f64; 4])> {
    let gt = log.gt.as_ref().ok_or_else(|| Error::domain("dynamics loss needs ground-truth states"))?;
    if window.is_empty() || window.end > log.len() {
        return Err(Error::domain(format!("window {window:?} invalid for {} samples", log.len())));
    }
    let inertia = vehicle.inertia();
    let mut loss = 0.0;
    let mut grad = [0.0; 4];
    for i in window {
        let st = gt[i];
        let normals = wheel_normals(&st, vehicle, map);
        let a_gt = st.q * log.a_imu[i];
        let alpha_gt = st.q * log.alpha_imu[i];
        let loads = measured_loads(&st, vehicle, &normals, &a_gt, GRAVITY)?;
        let terrain: [WheelTerrain; 4] = std::array::from_fn(|k| WheelTerrain { normal: normals[k], coeffs: s });
        let contact = TerrainContact::flat(vehicle);
        let e = eval_with_loads(&st, vehicle, &inertia, &log.rpm_meas[i], &log.dirs[i], &terrain, contact, loads, GRAVITY)?;
        let (ra, rw) = (e.accel - a_gt, e.alpha - alpha_gt);
        loss += huber(&ra, huber_delta) + huber(&rw, huber_delta);
        let (ga, gw) = (huber_grad(&ra, huber_delta), huber_grad(&rw, huber_delta));
        let iw_inv = crate::dynamics::world_inertia(&st.q, &inertia)
            .try_inverse()
            .ok_or(Error::SingularInertia { condition: f64::INFINITY })?;
        for w in Wheel::ALL {
            let k = w.index();
            let v_rel = e.wheels[k].v_rel;
            let speed = v_rel.norm();
            if speed < crate::dynamics::EPS_V {
                continue;
            }
            let dir = v_rel / speed * loads.magnitudes[k];
            let lever = st.q * vehicle.lever_arm(w);
            let dmu = stribeck_partials_raw(speed, s);
            for c in 0..4 {
                let df = dir * dmu[c];
                let da = df / vehicle.total_mass();
                let dalpha = iw_inv * lever.cross(&df);
                grad[c] += ga.dot(&da) + gw.dot(&dalpha);
            }
        }
    }
    Ok((loss, grad))
}

pub fn dynamics_loss(
    s: [f64; 4],
    log: &DriveLog,
    window: std::ops::Range<usize>,
    vehicle: &VehicleModel,
    map: &GridMap,
    huber_delta: f64,
) -> Result<f64> {
    Ok(dynamics_loss_grad(s, log, window, vehicle, map, huber_delta)?.0)
}

/// Mean absolute channel difference between predicted and typical
/// coefficients.
pub fn prior_loss(s_pred: &[f64; 4], s_prior: &[f64; 4]) -> f64 {
    s_pred.iter().zip(s_prior).map(|(a, b)| (a - b).abs()).sum::<f64>() / 4.0
}

/// `L_d + lambda L_p`.
pub fn combined_loss(l_d: f64, l_p: f64, lambda: f64) -> f64 {
    l_d + lambda * l_p
}

#[cfg(test)]
mod tests;
