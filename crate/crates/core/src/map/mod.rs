//! Layered 2.5D grid: Stribeck coefficients, elevation and roughness.

mod build;

pub use build::{elevation_from_points, fit_plane, plane_normal, roughness_from_points};

use std::io::Write;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Terrain, TerrainSample};
use crate::error::{Error, Result};
use crate::friction::StribeckCoeffs;

/// Cell index `(x, y)`; `x` runs along world x.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    /// World coordinates of the lower-left corner of cell (0, 0).
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(width: usize, height: usize, cell_size: f64, origin: [f64; 2]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidWorld(format!("grid must be non-empty ({width}x{height})")));
        }
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::InvalidWorld(format!("cell size must be > 0, got {cell_size}")));
        }
        Ok(Self { width, height, cell_size, origin })
    }

    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn in_bounds(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height
    }

    /// Continuous cell coordinates (cell centers at half-integers).
    fn grid_coords(&self, wx: f64, wy: f64) -> (f64, f64) {
        ((wx - self.origin[0]) / self.cell_size, (wy - self.origin[1]) / self.cell_size)
    }

    pub fn cell_of(&self, wx: f64, wy: f64) -> Option<Cell> {
        let (gx, gy) = self.grid_coords(wx, wy);
        let (x, y) = (gx.floor(), gy.floor());
        if x.is_finite() && y.is_finite() && self.in_bounds(x as i64, y as i64) {
            Some((x as usize, y as usize))
        } else {
            None
        }
    }

    pub fn center(&self, x: usize, y: usize) -> Vector2<f64> {
        Vector2::new(
            self.origin[0] + (x as f64 + 0.5) * self.cell_size,
            self.origin[1] + (y as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn extent(&self) -> Vector2<f64> {
        Vector2::new(self.width as f64 * self.cell_size, self.height as f64 * self.cell_size)
    }
}

/// Grid layers. NaN marks cells without data.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    spec: GridSpec,
    sl: Vec<[f64; 4]>,
    el: Vec<f64>,
    rl: Vec<f64>,
    types: Option<Vec<u8>>,
}

impl GridMap {
    /// All layers no-data.
    pub fn empty(spec: GridSpec) -> Self {
        let n = spec.len();
        Self { spec, sl: vec![[f64::NAN; 4]; n], el: vec![f64::NAN; n], rl: vec![f64::NAN; n], types: None }
    }

    pub fn uniform(spec: GridSpec, coeffs: StribeckCoeffs, elevation: f64, roughness: f64) -> Self {
        let n = spec.len();
        Self { spec, sl: vec![coeffs.to_array(); n], el: vec![elevation; n], rl: vec![roughness; n], types: None }
    }

    pub fn from_layers(spec: GridSpec, sl: Vec<[f64; 4]>, el: Vec<f64>, rl: Vec<f64>) -> Result<Self> {
        let n = spec.len();
        if sl.len() != n || el.len() != n || rl.len() != n {
            return Err(Error::LengthMismatch(format!(
                "layers of {}, {}, {} cells for a {n}-cell grid",
                sl.len(),
                el.len(),
                rl.len()
            )));
        }
        if rl.iter().any(|&r| r < 0.0) {
            return Err(Error::InvalidWorld("negative roughness".into()));
        }
        Ok(Self { spec, sl, el, rl, types: None })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }
    pub fn width(&self) -> usize {
        self.spec.width
    }
    pub fn height(&self) -> usize {
        self.spec.height
    }
    pub fn cell_size(&self) -> f64 {
        self.spec.cell_size
    }

    pub fn elevation_layer(&self) -> &[f64] {
        &self.el
    }
    pub fn roughness_layer(&self) -> &[f64] {
        &self.rl
    }
    pub fn stribeck_layer(&self) -> &[[f64; 4]] {
        &self.sl
    }
    pub fn types(&self) -> Option<&[u8]> {
        self.types.as_deref()
    }
    pub fn set_types(&mut self, types: Vec<u8>) -> Result<()> {
        if types.len() != self.spec.len() {
            return Err(Error::LengthMismatch(format!("type mask of {} cells", types.len())));
        }
        self.types = Some(types);
        Ok(())
    }
    pub fn type_at(&self, c: Cell) -> Option<u8> {
        self.types.as_ref().map(|t| t[self.spec.index(c.0, c.1)])
    }

    pub fn elevation(&self, c: Cell) -> f64 {
        self.el[self.spec.index(c.0, c.1)]
    }
    pub fn roughness(&self, c: Cell) -> f64 {
        self.rl[self.spec.index(c.0, c.1)]
    }
    pub fn stribeck(&self, c: Cell) -> [f64; 4] {
        self.sl[self.spec.index(c.0, c.1)]
    }

    pub fn set_elevation(&mut self, c: Cell, z: f64) {
        let i = self.spec.index(c.0, c.1);
        self.el[i] = z;
    }
    pub fn set_roughness(&mut self, c: Cell, r: f64) {
        let i = self.spec.index(c.0, c.1);
        self.rl[i] = if r.is_nan() { r } else { r.max(0.0) };
    }
    pub fn set_stribeck(&mut self, c: Cell, s: [f64; 4]) {
        let i = self.spec.index(c.0, c.1);
        self.sl[i] = s;
    }

    pub fn set_elevation_layer(&mut self, el: Vec<f64>) -> Result<()> {
        if el.len() != self.spec.len() {
            return Err(Error::LengthMismatch(format!("elevation layer of {} cells", el.len())));
        }
        self.el = el;
        Ok(())
    }
    pub fn set_roughness_layer(&mut self, rl: Vec<f64>) -> Result<()> {
        if rl.len() != self.spec.len() {
            return Err(Error::LengthMismatch(format!("roughness layer of {} cells", rl.len())));
        }
        self.rl = rl;
        Ok(())
    }

    /// Stribeck coefficients of the cell containing `xy` (nearest-cell lookup).
    pub fn stribeck_at(&self, xy: Vector2<f64>) -> Result<StribeckCoeffs> {
        let c = self.cell_at(xy)?;
        self.stribeck_cell(c)
    }

    pub fn stribeck_cell(&self, c: Cell) -> Result<StribeckCoeffs> {
        let s = self.stribeck(c);
        if s.iter().any(|v| v.is_nan()) {
            return Err(Error::NoData { x: c.0, y: c.1 });
        }
        StribeckCoeffs::new_allow_inverted(s[0], s[1], s[2], s[3])
    }

    /// Channel-wise mean of the two cells' coefficients.
    pub fn edge_stribeck(&self, p: Cell, q: Cell) -> Result<StribeckCoeffs> {
        Ok(self.stribeck_cell(p)?.midpoint(&self.stribeck_cell(q)?))
    }

    pub fn cell_at(&self, xy: Vector2<f64>) -> Result<Cell> {
        self.spec.cell_of(xy.x, xy.y).ok_or_else(|| {
            let (gx, gy) = self.spec.grid_coords(xy.x, xy.y);
            Error::OutOfBounds { x: gx.floor() as i64, y: gy.floor() as i64 }
        })
    }

    fn planar_distance(&self, p: Cell, q: Cell) -> f64 {
        (self.spec.center(q.0, q.1) - self.spec.center(p.0, p.1)).norm()
    }

    /// Signed grade `(EL_Q - EL_P) / |PQ|` between cell centers.
    pub fn slope_along(&self, p: Cell, q: Cell) -> Result<f64> {
        let (zp, zq) = (self.elevation(p), self.elevation(q));
        if zp.is_nan() {
            return Err(Error::NoData { x: p.0, y: p.1 });
        }
        if zq.is_nan() {
            return Err(Error::NoData { x: q.0, y: q.1 });
        }
        let d = self.planar_distance(p, q);
        if d == 0.0 {
            return Ok(0.0);
        }
        Ok((zq - zp) / d)
    }

    /// Central-difference gradient at a cell. Missing neighbours fall back to
    /// a one-sided difference, then to zero; the second value counts axes
    /// that had no usable neighbours.
    pub fn gradient(&self, c: Cell) -> (Vector2<f64>, usize) {
        let z0 = self.elevation(c);
        let h = self.spec.cell_size;
        let mut fallbacks = 0;
        let mut axis = |dx: i64, dy: i64| -> f64 {
            let at = |k: i64| -> Option<f64> {
                let (x, y) = (c.0 as i64 + k * dx, c.1 as i64 + k * dy);
                if !self.spec.in_bounds(x, y) {
                    return None;
                }
                let z = self.elevation((x as usize, y as usize));
                (!z.is_nan()).then_some(z)
            };
            match (at(-1), at(1), (!z0.is_nan()).then_some(z0)) {
                (Some(a), Some(b), _) => (b - a) / (2.0 * h),
                (None, Some(b), Some(z)) => (b - z) / h,
                (Some(a), None, Some(z)) => (z - a) / h,
                _ => {
                    fallbacks += 1;
                    0.0
                }
            }
        };
        let g = Vector2::new(axis(1, 0), axis(0, 1));
        (g, fallbacks)
    }

    /// Absolute cross grade at the midpoint of PQ: the mean gradient of the
    /// two cells projected onto the direction perpendicular to PQ.
    pub fn slope_perp(&self, p: Cell, q: Cell) -> f64 {
        self.slope_perp_counted(p, q).0
    }

    pub fn slope_perp_counted(&self, p: Cell, q: Cell) -> (f64, usize) {
        let (gp, fp) = self.gradient(p);
        let (gq, fq) = self.gradient(q);
        let d = self.spec.center(q.0, q.1) - self.spec.center(p.0, p.1);
        let n = d.norm();
        if n == 0.0 {
            return (0.0, fp + fq);
        }
        let perp = Vector2::new(-d.y, d.x) / n;
        (((gp + gq) * 0.5).dot(&perp).abs(), fp + fq)
    }

    /// Bilinear elevation between cell centers, clamped at the border.
    /// No-data corners are replaced by the mean of the valid ones.
    pub fn height_at(&self, xy: Vector2<f64>) -> f64 {
        let (gx, gy) = self.spec.grid_coords(xy.x, xy.y);
        let fx = (gx - 0.5).clamp(0.0, (self.spec.width - 1) as f64);
        let fy = (gy - 0.5).clamp(0.0, (self.spec.height - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.spec.width - 1), (y0 + 1).min(self.spec.height - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let z = [self.elevation((x0, y0)), self.elevation((x1, y0)), self.elevation((x0, y1)), self.elevation((x1, y1))];
        let valid: Vec<f64> = z.iter().copied().filter(|v| !v.is_nan()).collect();
        if valid.is_empty() {
            return 0.0;
        }
        let fill = valid.iter().sum::<f64>() / valid.len() as f64;
        let z = z.map(|v| if v.is_nan() { fill } else { v });
        (z[0] * (1.0 - tx) + z[1] * tx) * (1.0 - ty) + (z[2] * (1.0 - tx) + z[3] * tx) * ty
    }

    /// Upward unit normal of the plane fitted through the 3x3 block of
    /// elevation cell centers around `xy`. Level when the fit is degenerate.
    pub fn normal_at(&self, xy: Vector2<f64>) -> Vector3<f64> {
        let (gx, gy) = self.spec.grid_coords(xy.x, xy.y);
        let cx = (gx.floor() as i64).clamp(0, self.spec.width as i64 - 1);
        let cy = (gy.floor() as i64).clamp(0, self.spec.height as i64 - 1);
        let mut pts = Vec::with_capacity(9);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (x, y) = (cx + dx, cy + dy);
                if !self.spec.in_bounds(x, y) {
                    continue;
                }
                let z = self.elevation((x as usize, y as usize));
                if z.is_nan() {
                    continue;
                }
                let c = self.spec.center(x as usize, y as usize);
                pts.push(Vector3::new(c.x, c.y, z));
            }
        }
        let refs: Vec<_> = pts.iter().collect();
        match fit_plane(&refs) {
            Some(([a, b, _], _)) => plane_normal(a, b),
            None => Vector3::z(),
        }
    }

    pub fn write_bundle(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut layers = vec![("el", self.el.clone()), ("rl", self.rl.clone())];
        for (k, name) in SL_NAMES.iter().enumerate() {
            layers.push((name, self.sl.iter().map(|s| s[k]).collect()));
        }
        if let Some(t) = &self.types {
            layers.push(("types", t.iter().map(|&v| v as f64).collect()));
        }
        let header = BundleHeader {
            width: self.spec.width,
            height: self.spec.height,
            cell_size: self.spec.cell_size,
            origin: self.spec.origin,
            no_data: "NaN".into(),
            layers: layers.iter().map(|(n, _)| LayerEntry { name: n.to_string(), file: format!("{n}.f32") }).collect(),
        };
        std::fs::write(dir.join("header.json"), serde_json::to_string_pretty(&header)?)?;
        for (name, data) in &layers {
            let mut bytes = Vec::with_capacity(data.len() * 4);
            for v in data {
                bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            std::fs::write(dir.join(format!("{name}.f32")), bytes)?;
        }
        Ok(())
    }

    pub fn read_bundle(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let header: BundleHeader = serde_json::from_str(&std::fs::read_to_string(dir.join("header.json"))?)?;
        let spec = GridSpec::new(header.width, header.height, header.cell_size, header.origin)?;
        let read = |name: &str| -> Result<Option<Vec<f64>>> {
            let Some(entry) = header.layers.iter().find(|l| l.name == name) else {
                return Ok(None);
            };
            let bytes = std::fs::read(dir.join(&entry.file))?;
            if bytes.len() != spec.len() * 4 {
                return Err(Error::LengthMismatch(format!("layer {name} has {} bytes", bytes.len())));
            }
            Ok(Some(bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64).collect()))
        };
        let req = |name: &str| read(name)?.ok_or_else(|| Error::InvalidWorld(format!("bundle lacks layer {name}")));
        let el = req("el")?;
        let rl = req("rl")?;
        let chans = SL_NAMES.iter().map(|n| req(n)).collect::<Result<Vec<_>>>()?;
        let sl = (0..spec.len()).map(|i| [chans[0][i], chans[1][i], chans[2][i], chans[3][i]]).collect();
        let mut map = GridMap::from_layers(spec, sl, el, rl)?;
        if let Some(t) = read("types")? {
            map.types = Some(t.iter().map(|&v| v as u8).collect());
        }
        Ok(map)
    }

    /// One row per cell for plotting.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,y,cx,cy,elevation,roughness,mu_s,mu_d,v_s,mu_v,type")?;
        for y in 0..self.spec.height {
            for x in 0..self.spec.width {
                let c = self.spec.center(x, y);
                let s = self.stribeck((x, y));
                let t = self.type_at((x, y)).map(|t| t.to_string()).unwrap_or_default();
                writeln!(
                    out,
                    "{x},{y},{},{},{},{},{},{},{},{},{t}",
                    c.x,
                    c.y,
                    self.elevation((x, y)),
                    self.roughness((x, y)),
                    s[0],
                    s[1],
                    s[2],
                    s[3]
                )?;
            }
        }
        Ok(())
    }
}

const SL_NAMES: [&str; 4] = ["sl_mu_s", "sl_mu_d", "sl_v_s", "sl_mu_v"];

#[derive(Serialize, Deserialize)]
struct LayerEntry {
    name: String,
    file: String,
}

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    width: usize,
    height: usize,
    cell_size: f64,
    origin: [f64; 2],
    no_data: String,
    layers: Vec<LayerEntry>,
}

/// Ground truth for the simulator: per-wheel local plane normal and the
/// Stribeck coefficients of the cell under the wheel.
impl Terrain for GridMap {
    fn sample(&self, xy: Vector2<f64>) -> Result<TerrainSample> {
        Ok(TerrainSample { normal: self.normal_at(xy), coeffs: self.stribeck_at(xy)? })
    }
}
