//! Four-wheeled vehicle as a rigid cloud of mass points.
//!
//! Vehicle frame: x forward, y left, z up. Wheel contact points sit below the
//! chassis so that the wheels touch the ground when the chassis is level.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Wheel {
    FL,
    FR,
    RL,
    RR,
}

impl Wheel {
    pub const ALL: [Wheel; 4] = [Wheel::FL, Wheel::FR, Wheel::RL, Wheel::RR];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Wheel::FL => "FL",
            Wheel::FR => "FR",
            Wheel::RL => "RL",
            Wheel::RR => "RR",
        }
    }

    pub fn from_name(name: &str) -> Option<Wheel> {
        Wheel::ALL.into_iter().find(|w| w.name() == name)
    }

    pub fn is_front(self) -> bool {
        matches!(self, Wheel::FL | Wheel::FR)
    }

    pub fn is_left(self) -> bool {
        matches!(self, Wheel::FL | Wheel::RL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassPoint {
    pub position: Vector3<f64>,
    pub mass: f64,
}

impl MassPoint {
    pub fn new(position: Vector3<f64>, mass: f64) -> Result<Self> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidVehicle(format!("mass must be positive, got {mass}")));
        }
        if !position.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidVehicle("non-finite mass point position".into()));
        }
        Ok(Self { position, mass })
    }
}

/// Sum of point masses.
pub fn total_mass(points: &[MassPoint]) -> Result<f64> {
    if points.is_empty() {
        return Err(Error::EmptyPoints);
    }
    Ok(points.iter().map(|p| p.mass).sum())
}

/// Mass-weighted mean position.
pub fn center_of_mass(points: &[MassPoint]) -> Result<Vector3<f64>> {
    let m = total_mass(points)?;
    let weighted = points.iter().fold(Vector3::zeros(), |acc, p| acc + p.position * p.mass);
    Ok(weighted / m)
}

/// Rotational inertia about `com`: `sum m (|d|^2 I - d d^T)`.
pub fn inertia_matrix(points: &[MassPoint], com: &Vector3<f64>) -> Matrix3<f64> {
    points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p.position - com;
        acc + (Matrix3::identity() * d.norm_squared() - d * d.transpose()) * p.mass
    })
}

/// Longitudinal/lateral lever arms of the contact patch relative to the COM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactGeometry {
    /// COM to front axle, along x.
    pub d_front: f64,
    /// COM to rear axle, along x.
    pub d_rear: f64,
    /// COM to left wheel line, along y.
    pub d_left: f64,
    /// COM to right wheel line, along y.
    pub d_right: f64,
    /// COM height above the contact plane.
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleModel {
    points: Vec<MassPoint>,
    contacts: [Vector3<f64>; 4],
    wheel_dirs: [Vector3<f64>; 4],
    wheel_radius: f64,
    total_mass: f64,
    com: Vector3<f64>,
    inertia: Matrix3<f64>,
}

impl VehicleModel {
    pub fn new(
        points: Vec<MassPoint>,
        contacts: [Vector3<f64>; 4],
        wheel_dirs: [Vector3<f64>; 4],
        wheel_radius: f64,
    ) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::InvalidVehicle(format!(
                "need at least 4 mass points, got {}",
                points.len()
            )));
        }
        if !(wheel_radius > 0.0) || !wheel_radius.is_finite() {
            return Err(Error::InvalidVehicle(format!("wheel radius must be > 0, got {wheel_radius}")));
        }
        let mut dirs = wheel_dirs;
        for d in dirs.iter_mut() {
            let n = d.norm();
            if !(n > 1e-12) || !n.is_finite() {
                return Err(Error::InvalidVehicle("zero or non-finite wheel direction".into()));
            }
            *d /= n;
        }
        let mut v = Self {
            points,
            contacts,
            wheel_dirs: dirs,
            wheel_radius,
            total_mass: 0.0,
            com: Vector3::zeros(),
            inertia: Matrix3::zeros(),
        };
        v.recompute()?;
        let g = v.contact_geometry();
        if !(v.wheelbase() > 1e-6) || !(v.track_width() > 1e-6) {
            return Err(Error::InvalidVehicle("wheelbase and track width must be positive".into()));
        }
        if !(g.height > 0.0) {
            return Err(Error::InvalidVehicle(format!(
                "COM must sit above the contact plane (h = {})",
                g.height
            )));
        }
        Ok(v)
    }

    /// Twelve-point pickup: 2000 kg, wheelbase 3.0 m, track 1.6 m, COM 0.6 m
    /// above ground, wheel radius 0.35 m. Engine mass biases the COM forward.
    pub fn pickup() -> Self {
        let mut points = Vec::with_capacity(12);
        for (x, m) in [(1.8, 200.0), (0.0, 150.0), (-1.8, 150.0)] {
            for y in [-0.7, 0.7] {
                for z in [-0.3, 0.3] {
                    points.push(MassPoint { position: Vector3::new(x, y, z), mass: m });
                }
            }
        }
        let contacts = [
            Vector3::new(1.5, 0.8, -0.6),
            Vector3::new(1.5, -0.8, -0.6),
            Vector3::new(-1.5, 0.8, -0.6),
            Vector3::new(-1.5, -0.8, -0.6),
        ];
        Self::new(points, contacts, [Vector3::x(); 4], 0.35).expect("pickup preset is valid")
    }

    fn recompute(&mut self) -> Result<()> {
        self.total_mass = total_mass(&self.points)?;
        self.com = center_of_mass(&self.points)?;
        self.inertia = inertia_matrix(&self.points, &self.com);
        Ok(())
    }

    pub fn set_points(&mut self, points: Vec<MassPoint>) -> Result<()> {
        let old = std::mem::replace(&mut self.points, points);
        if let Err(e) = self.recompute() {
            self.points = old;
            self.recompute()?;
            return Err(e);
        }
        Ok(())
    }

    pub fn points(&self) -> &[MassPoint] {
        &self.points
    }
    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }
    pub fn com(&self) -> Vector3<f64> {
        self.com
    }
    pub fn inertia(&self) -> Matrix3<f64> {
        self.inertia
    }
    pub fn wheel_radius(&self) -> f64 {
        self.wheel_radius
    }
    pub fn contact(&self, w: Wheel) -> Vector3<f64> {
        self.contacts[w.index()]
    }
    pub fn contacts(&self) -> &[Vector3<f64>; 4] {
        &self.contacts
    }
    /// Default (unsteered) wheel rolling directions.
    pub fn wheel_dirs(&self) -> &[Vector3<f64>; 4] {
        &self.wheel_dirs
    }

    /// Contact point relative to the COM, vehicle frame.
    pub fn lever_arm(&self, w: Wheel) -> Vector3<f64> {
        self.contacts[w.index()] - self.com
    }

    pub fn wheelbase(&self) -> f64 {
        let c = &self.contacts;
        0.5 * (c[0].x + c[1].x) - 0.5 * (c[2].x + c[3].x)
    }

    pub fn track_width(&self) -> f64 {
        let c = &self.contacts;
        0.5 * (c[0].y + c[2].y) - 0.5 * (c[1].y + c[3].y)
    }

    /// Midpoint of the rear axle in the vehicle frame.
    pub fn rear_axle_center(&self) -> Vector3<f64> {
        0.5 * (self.contacts[2] + self.contacts[3])
    }

    pub fn contact_geometry(&self) -> ContactGeometry {
        let c = &self.contacts;
        let front_x = 0.5 * (c[0].x + c[1].x);
        let rear_x = 0.5 * (c[2].x + c[3].x);
        let left_y = 0.5 * (c[0].y + c[2].y);
        let right_y = 0.5 * (c[1].y + c[3].y);
        let ground_z = 0.25 * (c[0].z + c[1].z + c[2].z + c[3].z);
        ContactGeometry {
            d_front: front_x - self.com.x,
            d_rear: self.com.x - rear_x,
            d_left: left_y - self.com.y,
            d_right: self.com.y - right_y,
            height: self.com.z - ground_z,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let raw: VehicleFile = serde_json::from_str(s)?;
        raw.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&VehicleFile::from(self))?)
    }
}

#[derive(Serialize, Deserialize)]
struct PointEntry {
    xyz: [f64; 3],
    mass: f64,
}

#[derive(Serialize, Deserialize)]
struct VehicleFile {
    points: Vec<PointEntry>,
    contacts: BTreeMap<String, [f64; 3]>,
    wheel_radius: f64,
    #[serde(default)]
    wheel_dirs: Option<BTreeMap<String, [f64; 3]>>,
}

fn wheel_table(map: &BTreeMap<String, [f64; 3]>, what: &str) -> Result<[Vector3<f64>; 4]> {
    let mut out = [Vector3::zeros(); 4];
    for w in Wheel::ALL {
        let v = map
            .get(w.name())
            .ok_or_else(|| Error::InvalidVehicle(format!("missing {what} entry for {}", w.name())))?;
        out[w.index()] = Vector3::from(*v);
    }
    Ok(out)
}

impl TryFrom<VehicleFile> for VehicleModel {
    type Error = Error;

    fn try_from(f: VehicleFile) -> Result<Self> {
        let points = f
            .points
            .iter()
            .map(|p| MassPoint::new(Vector3::from(p.xyz), p.mass))
            .collect::<Result<Vec<_>>>()?;
        let contacts = wheel_table(&f.contacts, "contacts")?;
        let dirs = match &f.wheel_dirs {
            Some(d) => wheel_table(d, "wheel_dirs")?,
            None => [Vector3::x(); 4],
        };
        VehicleModel::new(points, contacts, dirs, f.wheel_radius)
    }
}

impl From<&VehicleModel> for VehicleFile {
    fn from(v: &VehicleModel) -> Self {
        let table = |arr: &[Vector3<f64>; 4]| {
            Wheel::ALL
                .iter()
                .map(|w| (w.name().to_string(), arr[w.index()].into()))
                .collect::<BTreeMap<_, _>>()
        };
        VehicleFile {
            points: v.points.iter().map(|p| PointEntry { xyz: p.position.into(), mass: p.mass }).collect(),
            contacts: table(&v.contacts),
            wheel_radius: v.wheel_radius,
            wheel_dirs: Some(table(&v.wheel_dirs)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(n: usize, seed: u64) -> Vec<MassPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| MassPoint {
                position: Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0), rng.random_range(-0.5..1.0)),
                mass: rng.random_range(0.1..50.0),
            })
            .collect()
    }

    #[test]
    fn mass_examples() {
        let one = [MassPoint { position: Vector3::new(1.0, 2.0, 3.0), mass: 10.0 }];
        assert_eq!(total_mass(&one).unwrap(), 10.0);
        assert_eq!(center_of_mass(&one).unwrap(), Vector3::new(1.0, 2.0, 3.0));
        let four = vec![MassPoint { position: Vector3::zeros(), mass: 2.5 }; 4];
        assert_eq!(total_mass(&four).unwrap(), 10.0);
        assert!(matches!(total_mass(&[]), Err(Error::EmptyPoints)));
        assert!(matches!(center_of_mass(&[]), Err(Error::EmptyPoints)));
    }

    #[test]
    fn mass_and_com_match_naive_oracle() {
        let pts = random_cloud(1000, 7);
        let mut m = 0.0;
        let mut sx = [0.0; 3];
        for p in &pts {
            m += p.mass;
            for k in 0..3 {
                sx[k] += p.mass * p.position[k];
            }
        }
        let tm = total_mass(&pts).unwrap();
        assert!((tm - m).abs() <= 1e-12 * m);
        let com = center_of_mass(&pts).unwrap();
        for k in 0..3 {
            assert!((com[k] - sx[k] / m).abs() <= 1e-12 * (1.0 + com[k].abs()));
        }
    }

    #[test]
    fn square_com_is_center() {
        let pts: Vec<_> = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)]
            .iter()
            .map(|&(x, y)| MassPoint { position: Vector3::new(x + 5.0, y - 2.0, 0.3), mass: 3.0 })
            .collect();
        let com = center_of_mass(&pts).unwrap();
        assert!((com - Vector3::new(5.0, -2.0, 0.3)).norm() < 1e-15);
    }

    #[test]
    fn inertia_examples() {
        let at_com = vec![MassPoint { position: Vector3::new(1.0, 1.0, 1.0), mass: 4.0 }; 3];
        assert_eq!(inertia_matrix(&at_com, &Vector3::new(1.0, 1.0, 1.0)), Matrix3::zeros());

        let (m, d) = (3.0, 0.7);
        let pair = [
            MassPoint { position: Vector3::new(d, 0.0, 0.0), mass: m },
            MassPoint { position: Vector3::new(-d, 0.0, 0.0), mass: m },
        ];
        let i = inertia_matrix(&pair, &Vector3::zeros());
        let expect = Matrix3::from_diagonal(&Vector3::new(0.0, 2.0 * m * d * d, 2.0 * m * d * d));
        assert!((i - expect).norm() < 1e-12);
    }

    #[test]
    fn inertia_matches_elementwise_oracle() {
        let pts = random_cloud(200, 11);
        let com = center_of_mass(&pts).unwrap();
        let i = inertia_matrix(&pts, &com);
        let mut oracle = [[0.0f64; 3]; 3];
        let mut trace_sum = 0.0;
        for p in &pts {
            let d = [p.position.x - com.x, p.position.y - com.y, p.position.z - com.z];
            let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            trace_sum += p.mass * r2;
            for a in 0..3 {
                for b in 0..3 {
                    let kron = if a == b { 1.0 } else { 0.0 };
                    oracle[a][b] += p.mass * (r2 * kron - d[a] * d[b]);
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                assert!((i[(a, b)] - oracle[a][b]).abs() < 1e-9 * (1.0 + oracle[a][b].abs()));
                assert_eq!(i[(a, b)], i[(b, a)]);
            }
        }
        assert!((i.trace() - 2.0 * trace_sum).abs() < 1e-9 * trace_sum);
    }

    #[test]
    fn pickup_preset_geometry() {
        let v = VehicleModel::pickup();
        assert_eq!(v.points().len(), 12);
        assert!((v.total_mass() - 2000.0).abs() < 1e-9);
        assert!((v.wheelbase() - 3.0).abs() < 1e-12);
        assert!((v.track_width() - 1.6).abs() < 1e-12);
        let g = v.contact_geometry();
        assert!((g.height - 0.6).abs() < 1e-12);
        assert!((g.d_front + g.d_rear - 3.0).abs() < 1e-12);
        assert!(g.d_front < g.d_rear, "engine mass moves the COM forward");
        let eig = v.inertia().symmetric_eigenvalues();
        assert!(eig.iter().all(|&e| e > 0.0));
    }

    #[test]
    fn vehicle_json_round_trip_and_errors() {
        let v = VehicleModel::pickup();
        let s = v.to_json_string().unwrap();
        let back = VehicleModel::from_json_str(&s).unwrap();
        assert_eq!(back, v);
        let j: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert!(j["contacts"]["FL"].is_array());
        assert!(j["points"][0]["xyz"].is_array());

        let bad = s.replace("\"RR\"", "\"XX\"");
        assert!(VehicleModel::from_json_str(&bad).is_err());
    }

    #[test]
    fn degenerate_contacts_rejected() {
        let v = VehicleModel::pickup();
        let mut c = *v.contacts();
        c[0].x = -1.5;
        c[1].x = -1.5;
        assert!(VehicleModel::new(v.points().to_vec(), c, [Vector3::x(); 4], 0.35).is_err());
    }

    proptest! {
        #[test]
        fn inertia_translation_invariant(seed in 0u64..1000, dx in -10.0f64..10.0, dy in -10.0f64..10.0, dz in -10.0f64..10.0) {
            let pts = random_cloud(20, seed);
            let shift = Vector3::new(dx, dy, dz);
            let moved: Vec<_> = pts.iter().map(|p| MassPoint { position: p.position + shift, mass: p.mass }).collect();
            let c0 = center_of_mass(&pts).unwrap();
            let c1 = center_of_mass(&moved).unwrap();
            prop_assert!((c1 - c0 - shift).norm() < 1e-9);
            let i0 = inertia_matrix(&pts, &c0);
            let i1 = inertia_matrix(&moved, &c1);
            prop_assert!((i1 - i0).norm() < 1e-7 * (1.0 + i0.norm()));
        }

        #[test]
        fn inertia_eigenvalues_nonnegative(seed in 0u64..1000) {
            let pts = random_cloud(15, seed);
            let c = center_of_mass(&pts).unwrap();
            let eig = inertia_matrix(&pts, &c).symmetric_eigenvalues();
            prop_assert!(eig.iter().all(|&e| e >= -1e-9));
        }
    }
}
