use nalgebra::Vector3;

use super::GridSpec;

/// Points binned by cell index; points outside the grid are dropped.
pub(crate) fn bin_points<'a>(points: &'a [Vector3<f64>], spec: &GridSpec) -> Vec<Vec<&'a Vector3<f64>>> {
    let mut bins = vec![Vec::new(); spec.width * spec.height];
    for p in points {
        if let Some((x, y)) = spec.cell_of(p.x, p.y) {
            bins[spec.index(x, y)].push(p);
        }
    }
    bins
}

/// Per-cell mean height; cells without points are NaN.
pub fn elevation_from_points(points: &[Vector3<f64>], spec: &GridSpec) -> Vec<f64> {
    bin_points(points, spec)
        .iter()
        .map(|b| {
            if b.is_empty() {
                f64::NAN
            } else {
                b.iter().map(|p| p.z).sum::<f64>() / b.len() as f64
            }
        })
        .collect()
}

/// Per-cell residual sum of squares of the least-squares plane
/// `z = a x + b y + d`. Cells with fewer than three points or collinear
/// footprints are NaN.
pub fn roughness_from_points(points: &[Vector3<f64>], spec: &GridSpec) -> Vec<f64> {
    bin_points(points, spec).iter().map(|b| plane_fit_rss(b).unwrap_or(f64::NAN)).collect()
}

/// Least-squares plane through `pts`; returns the coefficients `(a, b, d)`
/// of `z = a x + b y + d` and the residual sum of squares.
pub fn fit_plane(pts: &[&Vector3<f64>]) -> Option<([f64; 3], f64)> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let c = pts.iter().fold(Vector3::zeros(), |acc, p| acc + **p) / n;
    // Centered normal equations; the offset decouples from the slopes.
    let (mut sxx, mut sxy, mut syy, mut sxz, mut syz) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy, dz) = (p.x - c.x, p.y - c.y, p.z - c.z);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxz += dx * dz;
        syz += dy * dz;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx + syy).powi(2);
    if !(scale > 0.0) || det <= 1e-12 * scale {
        return None;
    }
    let a = (syy * sxz - sxy * syz) / det;
    let b = (sxx * syz - sxy * sxz) / det;
    let d = c.z - a * c.x - b * c.y;
    let rss = pts.iter().map(|p| (a * p.x + b * p.y + d - p.z).powi(2)).sum();
    Some(([a, b, d], rss))
}

fn plane_fit_rss(pts: &[&Vector3<f64>]) -> Option<f64> {
    fit_plane(pts).map(|(_, rss)| rss)
}

/// Unit upward normal of `z = a x + b y + d`.
pub fn plane_normal(a: f64, b: f64) -> Vector3<f64> {
    Vector3::new(-a, -b, 1.0).normalize()
}
