use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::PlanVertex;
use crate::map::GridMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothParams {
    /// Arc-length spacing of the output checkpoints, metres.
    pub spacing: f64,
    /// Keep every `stride`-th cell center as a spline control point.
    pub stride: usize,
    /// Dense samples per spline segment before resampling.
    pub samples_per_segment: usize,
}

impl Default for SmoothParams {
    fn default() -> Self {
        Self { spacing: 1.0, stride: 4, samples_per_segment: 24 }
    }
}

/// Centripetal Catmull-Rom through decimated cell centers, resampled at fixed
/// arc length. Falls back to the raw polyline when any point of the spline
/// lands on an impassable cell.
pub fn smooth(vertices: &[PlanVertex], map: &GridMap, sigma_th: f64, params: &SmoothParams) -> Vec<Vector2<f64>> {
    let centers: Vec<_> = vertices.iter().map(|v| map.spec().center(v.x, v.y)).collect();
    if centers.len() < 2 {
        return centers;
    }
    let stride = params.stride.max(1);
    let mut control: Vec<_> = centers.iter().step_by(stride).copied().collect();
    if (centers.len() - 1) % stride != 0 {
        control.push(*centers.last().unwrap());
    }
    let dense = catmull_rom(&control, params.samples_per_segment.max(2));
    let passable = |p: &Vector2<f64>| match map.spec().cell_of(p.x, p.y) {
        Some(c) => map.roughness(c) < sigma_th,
        None => false,
    };
    if dense.iter().all(passable) {
        resample(&dense, params.spacing)
    } else {
        log::debug!("spline crosses an impassable cell; using the polyline");
        resample(&centers, params.spacing)
    }
}

fn catmull_rom(control: &[Vector2<f64>], per_segment: usize) -> Vec<Vector2<f64>> {
    if control.len() < 3 {
        return control.to_vec();
    }
    let n = control.len();
    let first = control[0] * 2.0 - control[1];
    let last = control[n - 1] * 2.0 - control[n - 2];
    let at = |i: isize| -> Vector2<f64> {
        if i < 0 {
            first
        } else if i as usize >= n {
            last
        } else {
            control[i as usize]
        }
    };
    let mut out = vec![control[0]];
    for i in 0..n - 1 {
        let (p0, p1, p2, p3) = (at(i as isize - 1), at(i as isize), at(i as isize + 1), at(i as isize + 2));
        let knot = |a: &Vector2<f64>, b: &Vector2<f64>| (b - a).norm().sqrt().max(1e-9);
        let t1 = knot(&p0, &p1);
        let t2 = t1 + knot(&p1, &p2);
        let t3 = t2 + knot(&p2, &p3);
        for k in 1..=per_segment {
            let t = t1 + (t2 - t1) * k as f64 / per_segment as f64;
            let lerp = |a: &Vector2<f64>, b: &Vector2<f64>, ta: f64, tb: f64| a * ((tb - t) / (tb - ta)) + b * ((t - ta) / (tb - ta));
            let a1 = lerp(&p0, &p1, 0.0, t1);
            let a2 = lerp(&p1, &p2, t1, t2);
            let a3 = lerp(&p2, &p3, t2, t3);
            let b1 = lerp(&a1, &a2, 0.0, t2);
            let b2 = lerp(&a2, &a3, t1, t3);
            out.push(lerp(&b1, &b2, t1, t2));
        }
    }
    *out.last_mut().unwrap() = control[n - 1];
    out
}

/// Evenly spaced points along a polyline, endpoints kept exactly. At least
/// one interior point is emitted for any non-degenerate curve.
pub(crate) fn resample(poly: &[Vector2<f64>], spacing: f64) -> Vec<Vector2<f64>> {
    if poly.len() < 2 {
        return poly.to_vec();
    }
    let mut cum = vec![0.0];
    for w in poly.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    if total < 1e-12 {
        return vec![poly[0]];
    }
    let segments = ((total / spacing).ceil() as usize).max(2);
    let step = total / segments as f64;
    let mut out = Vec::with_capacity(segments + 1);
    out.push(poly[0]);
    let mut j = 0;
    for k in 1..segments {
        let s = k as f64 * step;
        while cum[j + 1] < s {
            j += 1;
        }
        let seg = cum[j + 1] - cum[j];
        let u = if seg > 0.0 { (s - cum[j]) / seg } else { 0.0 };
        out.push(poly[j] + (poly[j + 1] - poly[j]) * u);
    }
    out.push(*poly.last().unwrap());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::friction::StribeckCoeffs;
    use crate::map::GridSpec;
    use crate::planner::{Motion, Orientation};

    fn map(w: usize, h: usize) -> GridMap {
        GridMap::uniform(GridSpec::new(w, h, 0.5, [0.0, 0.0]).unwrap(), StribeckCoeffs::constant(0.8).unwrap(), 0.0, 0.0)
    }

    fn walk(start: (usize, usize), moves: &[Orientation]) -> Vec<PlanVertex> {
        let mut v = vec![PlanVertex { x: start.0, y: start.1, o: Orientation::E, m: Motion::D }];
        for &o in moves {
            let last = *v.last().unwrap();
            let (dx, dy) = o.delta();
            v.push(PlanVertex { x: (last.x as i64 + dx) as usize, y: (last.y as i64 + dy) as usize, o, m: Motion::D });
        }
        v
    }

    fn dist_to_polyline(p: &Vector2<f64>, poly: &[Vector2<f64>]) -> f64 {
        poly.windows(2)
            .map(|w| {
                let d = w[1] - w[0];
                let t = ((p - w[0]).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
                (p - (w[0] + d * t)).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn straight_path_gives_collinear_checkpoints() {
        let m = map(20, 5);
        let v = walk((1, 2), &[Orientation::E; 12]);
        let cps = smooth(&v, &m, 0.1, &SmoothParams::default());
        assert_eq!(cps[0], m.spec().center(1, 2));
        assert_eq!(*cps.last().unwrap(), m.spec().center(13, 2));
        assert!(cps.iter().all(|c| (c.y - 1.25).abs() < 1e-12));
        for w in cps.windows(2) {
            assert!((w[1] - w[0]).norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn jog_stays_within_a_cell_of_the_polyline() {
        use Orientation::*;
        let m = map(30, 10);
        let v = walk((1, 3), &[E, E, E, E, E, NE, E, E, E, E, SE, E, E, E, E, E]);
        let poly: Vec<_> = v.iter().map(|p| m.spec().center(p.x, p.y)).collect();
        let cps = smooth(&v, &m, 0.1, &SmoothParams::default());
        assert_eq!(cps[0], poly[0]);
        assert_eq!(cps.last(), poly.last());
        for c in &cps {
            assert!(dist_to_polyline(c, &poly) < 0.5);
        }
    }

    #[test]
    fn rough_cells_force_polyline_fallback() {
        use Orientation::*;
        let mut m = map(20, 12);
        let v = walk((1, 1), &[E, E, E, E, NE, NE, NE, NE, N, N, N, N]);
        // Block the cell the spline would cut through at the corner.
        let plain = smooth(&v, &m, 0.1, &SmoothParams::default());
        let poly: Vec<_> = v.iter().map(|p| m.spec().center(p.x, p.y)).collect();
        for c in &plain {
            let cell = m.spec().cell_of(c.x, c.y).unwrap();
            if !v.iter().any(|p| p.cell() == cell) {
                m.set_roughness(cell, 1.0);
            }
        }
        let fallback = smooth(&v, &m, 0.1, &SmoothParams::default());
        for c in &fallback {
            assert!(dist_to_polyline(c, &poly) < 1e-9);
        }
    }

    #[test]
    fn resample_short_segment_has_interior_point() {
        let pts = resample(&[Vector2::new(0.0, 0.0), Vector2::new(0.5, 0.0)], 1.0);
        assert_eq!(pts.len(), 3);
        assert!((pts[1].x - 0.25).abs() < 1e-12);
    }
}
