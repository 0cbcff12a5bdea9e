use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::{rpm_for_speed, LoadTransfer, RigidState, SimConfig, Simulator, StepInput, Terrain};
use crate::error::{Error, Result};
use crate::ident::DriveLog;
use crate::vehicle::VehicleModel;

/// Control source for a synthetic drive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Precomputed inputs, one per step.
    Open(Vec<StepInput>),
    /// Wheels driven at the current forward speed plus `amplitude sin(2 pi f
    /// t)`, so the longitudinal slip follows the sine exactly.
    SlipSine { amplitude: f64, frequency: f64 },
}

impl Schedule {
    fn input(&self, i: usize, t: f64, state: &RigidState, vehicle: &VehicleModel) -> Result<StepInput> {
        match self {
            Schedule::Open(v) => v.get(i).copied().ok_or_else(|| Error::LengthMismatch(format!("schedule has {} inputs, step {i} requested", v.len()))),
            Schedule::SlipSine { amplitude, frequency } => {
                let forward = state.v.dot(&state.heading());
                let edge = forward + amplitude * (2.0 * std::f64::consts::PI * frequency * t).sin();
                Ok(StepInput::straight(rpm_for_speed(vehicle, edge)))
            }
        }
    }

    /// Mean absolute commanded slip of a sine schedule.
    pub fn mean_slip(&self) -> Option<f64> {
        match self {
            Schedule::SlipSine { amplitude, .. } => Some(2.0 * amplitude.abs() / std::f64::consts::PI),
            Schedule::Open(_) => None,
        }
    }

    /// Sine schedule whose mean absolute slip is `mean`.
    pub fn slip_sine_with_mean(mean: f64) -> Self {
        Schedule::SlipSine { amplitude: mean * std::f64::consts::PI / 2.0, frequency: 1.0 }
    }
}

/// Zero-mean Gaussian noise levels per channel.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct LogNoise {
    pub accel: f64,
    pub gyro: f64,
    pub rpm: f64,
}

/// Simulate `n` samples from `initial` and record body-frame IMU and RPM
/// streams. Loads are iterated to consistency with the recorded
/// acceleration, so a noiseless log is reproduced exactly by the engine.
#[allow(clippy::too_many_arguments)]
pub fn gen_log<T: Terrain + ?Sized>(
    vehicle: &VehicleModel,
    schedule: &Schedule,
    terrain: &T,
    initial: RigidState,
    n: usize,
    dt: f64,
    noise: LogNoise,
    seed: u64,
) -> Result<DriveLog> {
    if n < 2 {
        return Err(Error::domain("a log needs at least two samples"));
    }
    let config = SimConfig { dt, load_transfer: LoadTransfer::FixedPoint { iters: 40, tol: 1e-13 }, ..Default::default() };
    let mut sim = Simulator::new(vehicle, terrain, initial, config);
    let mut gt = Vec::with_capacity(n);
    let mut a_imu = Vec::with_capacity(n);
    let mut omega_imu = Vec::with_capacity(n + 1);
    let mut rpm_meas = Vec::with_capacity(n);
    let mut dirs = Vec::with_capacity(n);
    for i in 0..n {
        let state = sim.state;
        let input = schedule.input(i, i as f64 * dt, &state, vehicle)?;
        let eval = sim.step(&input).map_err(|e| Error::Rollout { step: i, source: Box::new(e) })?;
        gt.push(state);
        a_imu.push(state.q.inverse() * eval.accel);
        omega_imu.push(state.q.inverse() * state.omega);
        rpm_meas.push(input.rpm);
        dirs.push(input.dirs);
    }
    omega_imu.push(sim.state.q.inverse() * sim.state.omega);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jitter = |sigma: f64, v: &mut Vector3<f64>| {
        if sigma > 0.0 {
            let d = Normal::new(0.0, sigma).expect("sigma checked positive");
            for x in v.iter_mut() {
                *x += d.sample(&mut rng);
            }
        }
    };
    for a in a_imu.iter_mut() {
        jitter(noise.accel, a);
    }
    for w in omega_imu.iter_mut() {
        jitter(noise.gyro, w);
    }
    if noise.rpm > 0.0 {
        let d = Normal::new(0.0, noise.rpm).map_err(|e| Error::Config(e.to_string()))?;
        for r in rpm_meas.iter_mut().flatten() {
            *r += d.sample(&mut rng);
        }
    }
    let alpha_imu = omega_imu.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    omega_imu.truncate(n);
    Ok(DriveLog { dt, initial, a_imu, alpha_imu, omega_imu, rpm_meas, dirs, gt: Some(gt) })
}
