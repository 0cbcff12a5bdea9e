//! Stribeck friction curve and the closed-form kinematic limits derived from it.
//!
//! The curve maps wheel slip speed to a friction coefficient:
//!
//! ```text
//! mu(v) = sqrt(2e) (mu_s - mu_d) exp(-(v/v_s)^2) (v/v_s)
//!       + mu_d tanh(10 sqrt(2) v / v_s)
//!       + mu_v v
//! ```
//!
//! The first term peaks at `v = v_s / sqrt(2)` with height `mu_s - mu_d`, so with
//! the tanh term saturated the curve tops out near `mu_s` before relaxing to
//! `mu_d` at high slip.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `sqrt(2 e)`.
pub(crate) fn sqrt_two_e() -> f64 {
    (2.0 * std::f64::consts::E).sqrt()
}

const TANH_GAIN: f64 = 10.0 * std::f64::consts::SQRT_2;

/// The four coefficients of a Stribeck friction curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStribeck", into = "RawStribeck")]
pub struct StribeckCoeffs {
    mu_s: f64,
    mu_d: f64,
    v_s: f64,
    mu_v: f64,
}

#[derive(Serialize, Deserialize)]
struct RawStribeck {
    mu_s: f64,
    mu_d: f64,
    v_s: f64,
    mu_v: f64,
}

impl TryFrom<RawStribeck> for StribeckCoeffs {
    type Error = Error;

    fn try_from(raw: RawStribeck) -> Result<Self> {
        StribeckCoeffs::new(raw.mu_s, raw.mu_d, raw.v_s, raw.mu_v)
    }
}

impl From<StribeckCoeffs> for RawStribeck {
    fn from(s: StribeckCoeffs) -> Self {
        RawStribeck { mu_s: s.mu_s, mu_d: s.mu_d, v_s: s.v_s, mu_v: s.mu_v }
    }
}

impl StribeckCoeffs {
    /// Validated constructor. Requires `mu_s >= mu_d > 0`, `v_s > 0`, `mu_v >= 0`.
    pub fn new(mu_s: f64, mu_d: f64, v_s: f64, mu_v: f64) -> Result<Self> {
        Self::check_basic(mu_s, mu_d, v_s, mu_v)?;
        if mu_s < mu_d {
            return Err(Error::InvalidCoefficients(format!(
                "static coefficient {mu_s} below dynamic coefficient {mu_d}"
            )));
        }
        Ok(Self { mu_s, mu_d, v_s, mu_v })
    }

    /// Like [`StribeckCoeffs::new`] but accepts `mu_s < mu_d` with a logged warning.
    ///
    /// Identification can legitimately land on an inverted curve when the log
    /// never excites the static hump.
    pub fn new_allow_inverted(mu_s: f64, mu_d: f64, v_s: f64, mu_v: f64) -> Result<Self> {
        Self::check_basic(mu_s, mu_d, v_s, mu_v)?;
        if mu_s < mu_d {
            log::warn!("inverted Stribeck curve accepted: mu_s={mu_s} < mu_d={mu_d}");
        }
        Ok(Self { mu_s, mu_d, v_s, mu_v })
    }

    /// Constant-friction curve: `mu_s = mu_d = mu`, no viscous term.
    pub fn constant(mu: f64) -> Result<Self> {
        Self::new(mu, mu, 0.5, 0.0)
    }

    fn check_basic(mu_s: f64, mu_d: f64, v_s: f64, mu_v: f64) -> Result<()> {
        if ![mu_s, mu_d, v_s, mu_v].iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidCoefficients("non-finite component".into()));
        }
        if mu_s <= 0.0 || mu_d <= 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "friction coefficients must be positive (mu_s={mu_s}, mu_d={mu_d})"
            )));
        }
        if v_s <= 0.0 {
            return Err(Error::InvalidCoefficients(format!("Stribeck velocity {v_s} must be > 0")));
        }
        if mu_v < 0.0 {
            return Err(Error::InvalidCoefficients(format!("viscous coefficient {mu_v} must be >= 0")));
        }
        Ok(())
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.mu_s, self.mu_d, self.v_s, self.mu_v]
    }

    pub fn mu_s(&self) -> f64 {
        self.mu_s
    }
    pub fn mu_d(&self) -> f64 {
        self.mu_d
    }
    pub fn v_s(&self) -> f64 {
        self.v_s
    }
    pub fn mu_v(&self) -> f64 {
        self.mu_v
    }

    /// Friction coefficient at slip speed `v` (no domain check; `v` is taken as given).
    pub fn mu(&self, v: f64) -> f64 {
        stribeck_raw(v, self.to_array())
    }

    /// Analytic `d mu / d v`.
    pub fn dmu_dv(&self, v: f64) -> f64 {
        stribeck_dv_raw(v, self.to_array())
    }

    /// Analytic partial derivatives of `mu(v)` with respect to
    /// `(mu_s, mu_d, v_s, mu_v)`.
    pub fn partials(&self, v: f64) -> [f64; 4] {
        stribeck_partials_raw(v, self.to_array())
    }

    /// Channel-wise mean of two curves (edge-cost averaging).
    pub fn midpoint(&self, other: &StribeckCoeffs) -> StribeckCoeffs {
        StribeckCoeffs {
            mu_s: 0.5 * (self.mu_s + other.mu_s),
            mu_d: 0.5 * (self.mu_d + other.mu_d),
            v_s: 0.5 * (self.v_s + other.v_s),
            mu_v: 0.5 * (self.mu_v + other.mu_v),
        }
    }

    /// Multiply the friction channels (`mu_s`, `mu_d`) by `k > 0`.
    pub fn scaled_friction(&self, k: f64) -> Result<StribeckCoeffs> {
        StribeckCoeffs::new(self.mu_s * k, self.mu_d * k, self.v_s, self.mu_v)
    }
}

/// Unchecked curve evaluation on a raw `[mu_s, mu_d, v_s, mu_v]` array.
pub(crate) fn stribeck_raw(v: f64, s: [f64; 4]) -> f64 {
    let [mu_s, mu_d, v_s, mu_v] = s;
    let x = v / v_s;
    sqrt_two_e() * (mu_s - mu_d) * (-x * x).exp() * x + mu_d * (TANH_GAIN * x).tanh() + mu_v * v
}

pub(crate) fn stribeck_dv_raw(v: f64, s: [f64; 4]) -> f64 {
    let [mu_s, mu_d, v_s, mu_v] = s;
    let x = v / v_s;
    let sech2 = 1.0 - (TANH_GAIN * x).tanh().powi(2);
    (sqrt_two_e() * (mu_s - mu_d) * (-x * x).exp() * (1.0 - 2.0 * x * x) + mu_d * TANH_GAIN * sech2)
        / v_s
        + mu_v
}

pub(crate) fn stribeck_partials_raw(v: f64, s: [f64; 4]) -> [f64; 4] {
    let [mu_s, mu_d, v_s, _] = s;
    let x = v / v_s;
    let hump = sqrt_two_e() * (-x * x).exp() * x;
    let th = (TANH_GAIN * x).tanh();
    // d x / d v_s = -x / v_s
    let dx_dvs = -x / v_s;
    let dhump_dx = sqrt_two_e() * (-x * x).exp() * (1.0 - 2.0 * x * x);
    let dvs = (mu_s - mu_d) * dhump_dx * dx_dvs + mu_d * TANH_GAIN * (1.0 - th * th) * dx_dvs;
    [hump, th - hump, dvs, v]
}

/// Friction coefficient at slip speed `v_rel >= 0`.
pub fn stribeck_mu(v_rel: f64, s: &StribeckCoeffs) -> Result<f64> {
    if !v_rel.is_finite() || v_rel < 0.0 {
        return Err(Error::domain(format!("slip speed must be finite and >= 0, got {v_rel}")));
    }
    Ok(s.mu(v_rel))
}

/// Highest steady-turn speed the friction can support: `sqrt(r g mu)`.
pub fn safe_steering_speed(r: f64, g: f64, mu: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::domain(format!("turn radius must be > 0, got {r}")));
    }
    if !(mu >= 0.0) || !(g >= 0.0) {
        return Err(Error::domain(format!("need mu >= 0 and g >= 0 (mu={mu}, g={g})")));
    }
    Ok((r * g * mu).sqrt())
}

/// Steepest climbable slope in degrees: `atan(mu)`.
pub fn max_climb_angle(mu: f64) -> Result<f64> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::domain(format!("friction coefficient must be >= 0, got {mu}")));
    }
    Ok(mu.atan().to_degrees())
}

/// [`max_climb_angle`] with the coefficient read off the curve at slip speed `v_rel`.
pub fn max_climb_angle_at(s: &StribeckCoeffs, v_rel: f64) -> Result<f64> {
    max_climb_angle(stribeck_mu(v_rel, s)?)
}
