use serde::{Deserialize, Serialize};

use super::RigidState;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryErrors {
    /// RMS translation error over all steps, metres.
    pub ate: f64,
    /// Rotation error at the final step, degrees.
    pub rre: f64,
    /// Translation error at the final step, metres.
    pub rte: f64,
}

pub fn trajectory_errors(est: &[RigidState], gt: &[RigidState]) -> Result<TrajectoryErrors> {
    if est.len() != gt.len() || est.len() < 2 {
        return Err(Error::LengthMismatch(format!(
            "trajectories of length {} and {} (need equal and >= 2)",
            est.len(),
            gt.len()
        )));
    }
    let sq: f64 = est.iter().zip(gt).map(|(a, b)| (a.t - b.t).norm_squared()).sum();
    let (a, b) = (est.last().unwrap(), gt.last().unwrap());
    Ok(TrajectoryErrors {
        ate: (sq / est.len() as f64).sqrt(),
        rre: rotation_angle(&(a.q.inverse() * b.q)).to_degrees(),
        rte: (a.t - b.t).norm(),
    })
}

/// Geodesic angle, accurate near zero unlike `acos` of the real part.
fn rotation_angle(q: &nalgebra::UnitQuaternion<f64>) -> f64 {
    let q = q.quaternion();
    2.0 * q.imag().norm().atan2(q.w.abs())
}
