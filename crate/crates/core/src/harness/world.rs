use std::collections::BTreeMap;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::friction::StribeckCoeffs;
use crate::map::{GridMap, GridSpec};

/// Ground-truth properties of one terrain type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainType {
    pub coeffs: StribeckCoeffs,
    /// Mean roughness of the type's cells; individual cells vary by ±50%.
    pub roughness: f64,
}

/// Terrain type over a polygon. Later regions paint over earlier ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub polygon: Vec<[f64; 2]>,
    pub terrain: String,
}

impl Region {
    pub fn rect(min: [f64; 2], max: [f64; 2], terrain: &str) -> Self {
        Self { polygon: vec![min, [max[0], min[1]], max, [min[0], max[1]]], terrain: terrain.into() }
    }

    fn contains(&self, p: Vector2<f64>) -> bool {
        let poly = &self.polygon;
        let mut inside = false;
        let mut j = poly.len() - 1;
        for i in 0..poly.len() {
            let (a, b) = (poly[i], poly[j]);
            if (a[1] > p.y) != (b[1] > p.y) && p.x < (b[0] - a[0]) * (p.y - a[1]) / (b[1] - a[1]) + a[0] {
                inside = !inside;
            }
            j = i;
        }
        inside
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hill {
    pub center: [f64; 2],
    /// Gaussian standard deviation, m.
    pub sigma: f64,
    /// Peak height, m (negative for a depression).
    pub height: f64,
}

/// Elevation shape in world coordinates, before noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Heightfield {
    Flat,
    /// Plane through the origin rising at `grade_deg` toward `uphill_yaw_deg`.
    Incline { grade_deg: f64, uphill_yaw_deg: f64 },
    /// Paraboloid bowl.
    Crater { center: [f64; 2], radius: f64, depth: f64 },
    /// Cosine ridge along the segment `from`-`to`.
    Ridge { from: [f64; 2], to: [f64; 2], height: f64, half_width: f64 },
    Hills { hills: Vec<Hill> },
    /// Ramp rising by `rise` between `x0` and `x1`, with a dip of `depth`
    /// across the corridor `|y - y_center| < half_width`, fading to zero over
    /// `taper`.
    Valley { x0: f64, x1: f64, rise: f64, depth: f64, y_center: f64, half_width: f64, taper: f64 },
    Sum { parts: Vec<Heightfield> },
}

impl Heightfield {
    pub fn height(&self, p: Vector2<f64>) -> f64 {
        match self {
            Heightfield::Flat => 0.0,
            Heightfield::Incline { grade_deg, uphill_yaw_deg } => {
                let dir = Vector2::new(uphill_yaw_deg.to_radians().cos(), uphill_yaw_deg.to_radians().sin());
                grade_deg.to_radians().tan() * p.dot(&dir)
            }
            Heightfield::Crater { center, radius, depth } => {
                let r2 = (p - Vector2::from(*center)).norm_squared() / (radius * radius);
                if r2 < 1.0 {
                    -depth * (1.0 - r2)
                } else {
                    0.0
                }
            }
            Heightfield::Ridge { from, to, height, half_width } => {
                let (a, b) = (Vector2::from(*from), Vector2::from(*to));
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                let d = (p - (a + ab * t)).norm();
                if d < *half_width {
                    height * 0.5 * (1.0 + (std::f64::consts::PI * d / half_width).cos())
                } else {
                    0.0
                }
            }
            Heightfield::Hills { hills } => hills
                .iter()
                .map(|h| h.height * (-(p - Vector2::from(h.center)).norm_squared() / (2.0 * h.sigma * h.sigma)).exp())
                .sum(),
            Heightfield::Valley { x0, x1, rise, depth, y_center, half_width, taper } => {
                let s = ((p.x - x0) / (x1 - x0)).clamp(0.0, 1.0);
                let off = (p.y - y_center).abs();
                let across = if off <= *half_width {
                    1.0
                } else if off < half_width + taper {
                    0.5 * (1.0 + (std::f64::consts::PI * (off - half_width) / taper).cos())
                } else {
                    0.0
                };
                rise * s - depth * (std::f64::consts::PI * s).sin() * across
            }
            Heightfield::Sum { parts } => parts.iter().map(|h| h.height(p)).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub origin: [f64; 2],
}

impl GridConfig {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.width, self.height, self.cell_size, self.origin)
    }
}

/// Recipe for a synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub seed: u64,
    pub grid: GridConfig,
    pub types: BTreeMap<String, TerrainType>,
    pub regions: Vec<Region>,
    pub heightfield: Heightfield,
    /// Amplitude of uniform per-cell elevation noise, m.
    #[serde(default)]
    pub noise: f64,
}

/// Generated map with its ground-truth type mask (indices into `type_names`).
#[derive(Debug, Clone)]
pub struct World {
    pub map: GridMap,
    pub type_names: Vec<String>,
}

impl World {
    pub fn type_of(&self, name: &str) -> Option<u8> {
        self.type_names.iter().position(|n| n == name).map(|i| i as u8)
    }
}

pub fn gen_world(spec: &WorldSpec) -> Result<World> {
    let grid = spec.grid.spec()?;
    if spec.types.is_empty() || spec.regions.is_empty() {
        return Err(Error::InvalidWorld("a world needs at least one terrain type and one region".into()));
    }
    let type_names: Vec<String> = spec.types.keys().cloned().collect();
    let mut region_types = Vec::with_capacity(spec.regions.len());
    for r in &spec.regions {
        if r.polygon.len() < 3 {
            return Err(Error::InvalidWorld(format!("region '{}' has fewer than 3 vertices", r.terrain)));
        }
        let k = type_names
            .iter()
            .position(|n| *n == r.terrain)
            .ok_or_else(|| Error::InvalidWorld(format!("region refers to unknown terrain type '{}'", r.terrain)))?;
        region_types.push(k);
    }
    if !(spec.noise >= 0.0) {
        return Err(Error::InvalidWorld("elevation noise must be >= 0".into()));
    }
    for (name, t) in &spec.types {
        if !(t.roughness >= 0.0) {
            return Err(Error::InvalidWorld(format!("terrain type '{name}' has negative roughness")));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = grid.len();
    let (mut sl, mut el, mut rl, mut types) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for y in 0..grid.height {
        for x in 0..grid.width {
            let c = grid.center(x, y);
            let k = spec
                .regions
                .iter()
                .zip(&region_types)
                .rev()
                .find(|(r, _)| r.contains(c))
                .map(|(_, &k)| k)
                .ok_or_else(|| Error::InvalidWorld(format!("cell ({x}, {y}) at ({:.2}, {:.2}) is not covered by any region", c.x, c.y)))?;
            let t = &spec.types[&type_names[k]];
            // Draw both numbers for every cell so the stream does not depend
            // on which layers are non-zero.
            let (u_r, u_z): (f64, f64) = (rng.random(), rng.random());
            sl.push(t.coeffs.to_array());
            rl.push(t.roughness * (0.5 + u_r));
            el.push(spec.heightfield.height(c) + spec.noise * (2.0 * u_z - 1.0));
            types.push(k as u8);
        }
    }
    let mut map = GridMap::from_layers(grid, sl, el, rl)?;
    map.set_types(types)?;
    Ok(World { map, type_names })
}

fn coeffs(mu_s: f64, mu_d: f64, v_s: f64, mu_v: f64) -> StribeckCoeffs {
    StribeckCoeffs::new(mu_s, mu_d, v_s, mu_v).expect("preset coefficients are valid")
}

/// Preset terrain types shared by the built-in worlds.
pub fn preset_types() -> BTreeMap<String, TerrainType> {
    BTreeMap::from([
        ("asphalt".to_string(), TerrainType { coeffs: coeffs(1.0, 0.9, 0.5, 0.01), roughness: 0.002 }),
        ("grass".to_string(), TerrainType { coeffs: coeffs(0.8, 0.65, 0.5, 0.02), roughness: 0.01 }),
        ("mud".to_string(), TerrainType { coeffs: coeffs(0.5, 0.4, 0.5, 0.05), roughness: 0.02 }),
        ("rock".to_string(), TerrainType { coeffs: coeffs(0.95, 0.85, 0.5, 0.01), roughness: 0.03 }),
        ("ice".to_string(), TerrainType { coeffs: coeffs(0.12, 0.1, 0.5, 0.0), roughness: 0.001 }),
    ])
}

impl WorldSpec {
    fn extent(&self) -> ([f64; 2], [f64; 2]) {
        let g = &self.grid;
        (g.origin, [g.origin[0] + g.width as f64 * g.cell_size, g.origin[1] + g.height as f64 * g.cell_size])
    }

    /// Level world of a single terrain type.
    pub fn flat(width: usize, height: usize, cell_size: f64, terrain: TerrainType) -> Self {
        let grid = GridConfig { width, height, cell_size, origin: [0.0, 0.0] };
        let mut s = Self {
            seed: 0,
            grid,
            types: BTreeMap::from([("ground".to_string(), terrain)]),
            regions: vec![],
            heightfield: Heightfield::Flat,
            noise: 0.0,
        };
        let (lo, hi) = s.extent();
        s.regions.push(Region::rect(lo, hi, "ground"));
        s
    }

    /// Level world split at `x = split` into two terrain types.
    pub fn two_region(width: usize, height: usize, cell_size: f64, split: f64, left: &str, right: &str) -> Self {
        let grid = GridConfig { width, height, cell_size, origin: [0.0, 0.0] };
        let mut s = Self { seed: 0, grid, types: preset_types(), regions: vec![], heightfield: Heightfield::Flat, noise: 0.0 };
        let (lo, hi) = s.extent();
        s.regions.push(Region::rect(lo, [split, hi[1]], left));
        s.regions.push(Region::rect([split, lo[1]], hi, right));
        s
    }

    /// An icy valley cuts straight between start and goal: it dips and then
    /// climbs steeply onto a plateau. A rocky detour around it rises gently.
    /// The ramp starts and ends inside the ice's x-range, so the ice corners
    /// that a smoothed detour may clip are level.
    /// Start `(5, 20)`, goal `(55, 20)` in cells of 1 m.
    pub fn icy_crater() -> Self {
        let grid = GridConfig { width: 60, height: 40, cell_size: 1.0, origin: [0.0, 0.0] };
        let mut s = Self {
            seed: 7,
            grid,
            types: preset_types(),
            regions: vec![],
            heightfield: Heightfield::Valley { x0: 14.0, x1: 44.0, rise: 9.0, depth: 3.0, y_center: 20.0, half_width: 5.0, taper: 5.0 },
            noise: 0.0,
        };
        let (lo, hi) = s.extent();
        s.regions.push(Region::rect(lo, hi, "grass"));
        s.regions.push(Region::rect([12.0, 4.0], [46.0, 36.0], "rock"));
        s.regions.push(Region::rect([11.0, 9.5], [47.0, 30.5], "ice"));
        s
    }

    pub fn icy_crater_start_goal() -> ((usize, usize), (usize, usize)) {
        ((5, 20), (55, 20))
    }

    /// Benchmark world A: grass with mud patches and gentle hills.
    pub fn benchmark_patches(seed: u64) -> Self {
        let grid = GridConfig { width: 64, height: 64, cell_size: 1.0, origin: [0.0, 0.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = Self { seed, grid, types: preset_types(), regions: vec![], heightfield: Heightfield::Flat, noise: 0.02 };
        let (lo, hi) = s.extent();
        s.regions.push(Region::rect(lo, hi, "grass"));
        for _ in 0..6 {
            let (cx, cy, r) = (rng.random_range(8.0..56.0), rng.random_range(8.0..56.0), rng.random_range(4.0..9.0));
            let polygon = (0..8)
                .map(|k| {
                    let a = k as f64 * std::f64::consts::FRAC_PI_4;
                    [cx + r * a.cos(), cy + r * a.sin()]
                })
                .collect();
            s.regions.push(Region { polygon, terrain: "mud".into() });
        }
        let hills = (0..5)
            .map(|_| Hill {
                center: [rng.random_range(0.0..64.0), rng.random_range(0.0..64.0)],
                sigma: rng.random_range(5.0..10.0),
                height: rng.random_range(-1.5..2.0),
            })
            .collect();
        s.heightfield = Heightfield::Hills { hills };
        s
    }

    /// Benchmark world B: asphalt strips through rock, with ice sheets and a
    /// ridge.
    pub fn benchmark_mixed(seed: u64) -> Self {
        let grid = GridConfig { width: 64, height: 64, cell_size: 1.0, origin: [0.0, 0.0] };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut s = Self { seed, grid, types: preset_types(), regions: vec![], heightfield: Heightfield::Flat, noise: 0.02 };
        let (lo, hi) = s.extent();
        s.regions.push(Region::rect(lo, hi, "rock"));
        s.regions.push(Region::rect([0.0, 28.0], [64.0, 36.0], "asphalt"));
        s.regions.push(Region::rect([28.0, 0.0], [36.0, 64.0], "asphalt"));
        for _ in 0..3 {
            let (x, y) = (rng.random_range(4.0..48.0), rng.random_range(4.0..48.0));
            let (w, h) = (rng.random_range(6.0..12.0), rng.random_range(6.0..12.0));
            s.regions.push(Region::rect([x, y], [x + w, y + h], "ice"));
        }
        let a = [rng.random_range(0.0..20.0), rng.random_range(40.0..64.0)];
        let b = [rng.random_range(40.0..64.0), rng.random_range(0.0..24.0)];
        s.heightfield = Heightfield::Sum {
            parts: vec![
                Heightfield::Ridge { from: a, to: b, height: 1.5, half_width: 8.0 },
                Heightfield::Hills { hills: vec![Hill { center: [rng.random_range(10.0..54.0), rng.random_range(10.0..54.0)], sigma: 8.0, height: -1.5 }] },
            ],
        };
        s
    }
}

impl Default for WorldSpec {
    /// 128 x 128 cells of 0.5 m: grass and mud over gentle hills.
    fn default() -> Self {
        let mut s = Self::benchmark_patches(0);
        s.grid = GridConfig { width: 128, height: 128, cell_size: 0.5, origin: [0.0, 0.0] };
        s
    }
}
