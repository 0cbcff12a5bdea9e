//! Minimum-time speed assignment along planned checkpoints.
//!
//! The decision variables are the squared speeds `w_i = v_i^2`. In `w` the
//! acceleration `(v_{i+1}^2 - v_i^2) / 2d` is affine, so the friction circle
//! becomes a second-order cone, the traction, roughness and positivity bounds
//! become linear, and travel time `sum 2d / (sqrt w_i + sqrt w_{i+1})` is
//! convex. A log-barrier Newton method then keeps every iterate strictly
//! feasible and converges to the global optimum.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::dynamics::GRAVITY;
use crate::error::{Error, Result};
use crate::map::GridMap;
use crate::vehicle::VehicleModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    /// Newton iterations summed over all barrier stages.
    pub max_iters: usize,
    /// Target duality gap relative to the travel time.
    pub tol: f64,
    pub constraint_tol: f64,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self { max_iters: 2000, tol: 1e-9, constraint_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpeedParams {
    /// Maximum traction force, N.
    pub f_th: f64,
    /// Roughness to maximum speed as `(sigma, v)` breakpoints, interpolated
    /// linearly and held constant past the last one.
    pub phi: Vec<[f64; 2]>,
    pub g: f64,
    /// Lower bound on interior speeds.
    pub v_min: f64,
    /// Upper bound used only to seed the solver.
    pub v_cap: f64,
    /// Slip speed at which checkpoint friction is evaluated.
    pub v_rel_plan: f64,
    /// Replace every checkpoint's friction by a constant (baseline planners).
    pub const_mu: Option<f64>,
    pub solver: SolverParams,
}

impl Default for SpeedParams {
    fn default() -> Self {
        Self {
            f_th: 15000.0,
            phi: vec![[0.0, 15.0], [0.1, 1.0]],
            g: GRAVITY,
            v_min: 0.05,
            v_cap: 15.0,
            v_rel_plan: 1.0,
            const_mu: None,
            solver: SolverParams::default(),
        }
    }
}

impl SpeedParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_th > 0.0) {
            return Err(Error::Config("f_th must be > 0".into()));
        }
        if self.phi.is_empty() || !(self.phi[0][1] > 0.0) {
            return Err(Error::Config("phi needs at least one breakpoint with positive speed".into()));
        }
        for w in self.phi.windows(2) {
            if !(w[1][0] > w[0][0]) || w[1][1] > w[0][1] {
                return Err(Error::Config("phi breakpoints must increase in sigma and not increase in speed".into()));
            }
        }
        if !(self.v_min > 0.0) || !(self.g > 0.0) || !(self.v_cap > 0.0) {
            return Err(Error::Config("v_min, v_cap and g must be > 0".into()));
        }
        if let Some(mu) = self.const_mu {
            if !(mu > 0.0) {
                return Err(Error::Config("const_mu must be > 0".into()));
            }
        }
        Ok(())
    }

    /// Maximum allowed speed at roughness `sigma`.
    pub fn phi_at(&self, sigma: f64) -> f64 {
        let p = &self.phi;
        if sigma <= p[0][0] {
            return p[0][1];
        }
        for w in p.windows(2) {
            if sigma <= w[1][0] {
                let t = (sigma - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + t * (w[1][1] - w[0][1]);
            }
        }
        p[p.len() - 1][1]
    }
}

/// Circumradius of the checkpoints around index `i`; infinite at the
/// endpoints and for collinear triples.
pub fn curvature_radius(checkpoints: &[Vector2<f64>], i: usize) -> Result<f64> {
    let n = checkpoints.len();
    if i >= n {
        return Err(Error::domain(format!("checkpoint index {i} out of range for {n} points")));
    }
    if i == 0 || i + 1 == n {
        return Ok(f64::INFINITY);
    }
    let (a, b, c) = (checkpoints[i - 1], checkpoints[i], checkpoints[i + 1]);
    let (ab, bc, ca) = ((b - a).norm(), (c - b).norm(), (a - c).norm());
    if ab == 0.0 {
        return Err(Error::DuplicatePoints(i - 1));
    }
    if bc == 0.0 {
        return Err(Error::DuplicatePoints(i));
    }
    let cross = (b - a).perp(&(c - a)).abs();
    if cross <= 1e-12 * ab * bc {
        return Ok(f64::INFINITY);
    }
    Ok(ab * bc * ca / (2.0 * cross))
}

/// Terrain and geometry the constraints need at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointTerrain {
    pub mu: f64,
    /// Grade angle of the segment leaving the checkpoint (entering it, for
    /// the last one); positive uphill.
    pub theta: f64,
    pub sigma: f64,
    pub radius: f64,
}

pub fn checkpoint_terrain(checkpoints: &[Vector2<f64>], map: &GridMap, params: &SpeedParams) -> Result<Vec<CheckpointTerrain>> {
    let n = checkpoints.len();
    if n < 2 {
        return Err(Error::domain("need at least two checkpoints"));
    }
    (0..n)
        .map(|i| {
            let p = checkpoints[i];
            let cell = map.cell_at(p)?;
            let mu = match params.const_mu {
                Some(mu) => mu,
                None => map.stribeck_cell(cell)?.mu(params.v_rel_plan),
            };
            let sigma = map.roughness(cell);
            if sigma.is_nan() || map.elevation(cell).is_nan() {
                return Err(Error::NoData { x: cell.0, y: cell.1 });
            }
            let (a, b) = if i + 1 < n { (p, checkpoints[i + 1]) } else { (checkpoints[i - 1], p) };
            let d = (b - a).norm();
            if d == 0.0 {
                return Err(Error::DuplicatePoints(i.min(n - 2)));
            }
            let theta = ((map.height_at(b) - map.height_at(a)) / d).atan();
            Ok(CheckpointTerrain { mu, theta, sigma, radius: curvature_radius(checkpoints, i)? })
        })
        .collect()
}

pub fn segment_lengths(checkpoints: &[Vector2<f64>]) -> Vec<f64> {
    checkpoints.windows(2).map(|w| (w[1] - w[0]).norm()).collect()
}

/// `sum 2 |p_{i+1} - p_i| / (v_{i+1} + v_i)`.
pub fn predicted_time(speeds: &[f64], checkpoints: &[Vector2<f64>]) -> f64 {
    segment_lengths(checkpoints)
        .iter()
        .zip(speeds.windows(2))
        .map(|(d, v)| 2.0 * d / (v[0] + v[1]))
        .sum()
}

/// Gradient of [`predicted_time`] with respect to every speed.
pub fn predicted_time_gradient(speeds: &[f64], checkpoints: &[Vector2<f64>]) -> Vec<f64> {
    let mut g = vec![0.0; speeds.len()];
    for (i, d) in segment_lengths(checkpoints).iter().enumerate() {
        let s = speeds[i] + speeds[i + 1];
        let dt = -2.0 * d / (s * s);
        g[i] += dt;
        g[i + 1] += dt;
    }
    g
}

/// Signed slack of every constraint family at each checkpoint; negative
/// means violated. Force and traction slacks are in newtons, speed slacks in
/// m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    /// `F_f - sqrt(F_c^2 + (F_s + F_a)^2)`.
    pub force: Vec<f64>,
    /// `F_th - (F_s + F_a)`.
    pub traction: Vec<f64>,
    /// `phi(sigma) - v`.
    pub roughness: Vec<f64>,
    /// `-|v|` at the endpoints, `v - v_min` in between.
    pub velocity: Vec<f64>,
}

impl ConstraintReport {
    pub fn min_slack(&self) -> f64 {
        [&self.force, &self.traction, &self.roughness, &self.velocity]
            .iter()
            .flat_map(|v| v.iter())
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }

    pub fn feasible(&self, tol: f64) -> bool {
        self.min_slack() >= -tol
    }

    pub fn summary(&self) -> serde_json::Value {
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        serde_json::json!({
            "force": min(&self.force),
            "traction": min(&self.traction),
            "roughness": min(&self.roughness),
            "velocity": min(&self.velocity),
        })
    }
}

/// In-plane force terms at one checkpoint, per unit mass.
fn force_terms(speeds: &[f64], d: &[f64], t: &CheckpointTerrain, i: usize, g: f64) -> (f64, f64, f64) {
    let v = speeds[i];
    let f_c = if t.radius.is_finite() { v * v / t.radius } else { 0.0 };
    let f_s = -g * t.theta.sin();
    let f_a = if i < d.len() { -(speeds[i + 1] - speeds[i]) * (speeds[i + 1] + speeds[i]) / (2.0 * d[i]) } else { 0.0 };
    (f_c, f_s, f_a)
}

pub fn constraint_report(
    speeds: &[f64],
    checkpoints: &[Vector2<f64>],
    terrain: &[CheckpointTerrain],
    mass: f64,
    params: &SpeedParams,
) -> Result<ConstraintReport> {
    let n = checkpoints.len();
    if speeds.len() != n || terrain.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{} speeds, {} checkpoints, {} terrain samples",
            speeds.len(),
            n,
            terrain.len()
        )));
    }
    let d = segment_lengths(checkpoints);
    let g = params.g;
    let mut r = ConstraintReport {
        force: Vec::with_capacity(n),
        traction: Vec::with_capacity(n),
        roughness: Vec::with_capacity(n),
        velocity: Vec::with_capacity(n),
    };
    for (i, t) in terrain.iter().enumerate() {
        let (f_c, f_s, f_a) = force_terms(speeds, &d, t, i, g);
        let f_f = t.mu * g * t.theta.cos();
        r.force.push(mass * (f_f - f_c.hypot(f_s + f_a)));
        r.traction.push(params.f_th - mass * (f_s + f_a));
        r.roughness.push(params.phi_at(t.sigma) - speeds[i]);
        r.velocity.push(if i == 0 || i + 1 == n { -speeds[i].abs() } else { speeds[i] - params.v_min });
    }
    Ok(r)
}

/// Evaluate every constraint family of `speeds` on the map.
pub fn constraint_eval(
    speeds: &[f64],
    checkpoints: &[Vector2<f64>],
    map: &GridMap,
    vehicle: &VehicleModel,
    params: &SpeedParams,
) -> Result<ConstraintReport> {
    let terrain = checkpoint_terrain(checkpoints, map, params)?;
    constraint_report(speeds, checkpoints, &terrain, vehicle.total_mass(), params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Iteration budget exhausted; the best feasible iterate is returned.
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedProfile {
    pub speeds: Vec<f64>,
    pub predicted_time: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub slacks: ConstraintReport,
}

impl SpeedProfile {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "speeds": self.speeds,
            "predicted_time": self.predicted_time,
            "status": self.status,
            "iterations": self.iterations,
            "slacks_summary": self.slacks.summary(),
        })
    }
}

/// Affine function of the full squared-speed vector.
#[derive(Debug, Clone)]
struct Affine {
    terms: Vec<(usize, f64)>,
    c: f64,
}

impl Affine {
    fn eval(&self, w: &[f64]) -> f64 {
        self.c + self.terms.iter().map(|&(k, a)| a * w[k]).sum::<f64>()
    }
}

enum Constraint {
    /// `a(w) >= 0`.
    Linear(Affine),
    /// `cap^2 - c(w)^2 - e(w)^2 >= 0`. Same set as the friction circle with
    /// `cap > 0`, but smooth at the apex where straight cruising sits.
    Cone { cap: f64, c: Affine, e: Affine },
}

struct Problem {
    n: usize,
    d: Vec<f64>,
    cons: Vec<Constraint>,
}

impl Problem {
    fn new(checkpoints: &[Vector2<f64>], terrain: &[CheckpointTerrain], mass: f64, params: &SpeedParams) -> Self {
        let n = checkpoints.len();
        let d = segment_lengths(checkpoints);
        let g = params.g;
        let mut cons = Vec::new();
        for (i, t) in terrain.iter().enumerate() {
            let mut e = Affine { terms: Vec::new(), c: -g * t.theta.sin() };
            if i + 1 < n {
                e.terms.push((i + 1, -1.0 / (2.0 * d[i])));
                e.terms.push((i, 1.0 / (2.0 * d[i])));
            }
            let c = if t.radius.is_finite() {
                Affine { terms: vec![(i, 1.0 / t.radius)], c: 0.0 }
            } else {
                Affine { terms: Vec::new(), c: 0.0 }
            };
            let cap = t.mu * g * t.theta.cos();
            let traction = Affine { terms: e.terms.iter().map(|&(k, a)| (k, -a)).collect(), c: params.f_th / mass - e.c };
            cons.push(Constraint::Cone { cap, c, e });
            cons.push(Constraint::Linear(traction));
            if i > 0 && i + 1 < n {
                let vmax = params.phi_at(t.sigma);
                cons.push(Constraint::Linear(Affine { terms: vec![(i, -1.0)], c: vmax * vmax }));
                cons.push(Constraint::Linear(Affine { terms: vec![(i, 1.0)], c: -params.v_min * params.v_min }));
            }
        }
        Self { n, d, cons }
    }

    /// Full vector with the fixed zero endpoints around the free interior.
    fn full(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut w = vec![0.0; self.n];
        w[1..self.n - 1].copy_from_slice(x.as_slice());
        w
    }

    fn slacks(&self, w: &[f64]) -> Vec<f64> {
        self.cons
            .iter()
            .map(|c| match c {
                Constraint::Linear(a) => a.eval(w),
                Constraint::Cone { cap, c, e } => {
                    let (cv, ev) = (c.eval(w), e.eval(w));
                    cap * cap - cv * cv - ev * ev
                }
            })
            .collect()
    }

    fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        x.iter().all(|v| *v > 0.0) && self.slacks(&self.full(x)).iter().all(|s| *s > 0.0)
    }

    fn time(&self, x: &DVector<f64>) -> f64 {
        let w = self.full(x);
        self.d.iter().enumerate().map(|(i, d)| 2.0 * d / (w[i].sqrt() + w[i + 1].sqrt())).sum()
    }

    /// Barrier value `t T(x) - sum log s_k(x)`, infinite outside the domain.
    fn barrier(&self, x: &DVector<f64>, t: f64) -> f64 {
        if !self.strictly_feasible(x) {
            return f64::INFINITY;
        }
        t * self.time(x) - self.slacks(&self.full(x)).iter().map(|s| s.ln()).sum::<f64>()
    }

    fn grad_hess(&self, x: &DVector<f64>, t: f64) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.n - 2;
        let w = self.full(x);
        let mut g = DVector::zeros(m);
        let mut h = DMatrix::zeros(m, m);
        let var = |k: usize| -> Option<usize> { (k >= 1 && k + 1 < self.n).then(|| k - 1) };
        let s: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();

        // Travel time: each segment term 2d/u with u = s_i + s_{i+1}.
        for (i, d) in self.d.iter().enumerate() {
            let u = s[i] + s[i + 1];
            let ends = [i, i + 1];
            for &a in &ends {
                let Some(ja) = var(a) else { continue };
                g[ja] += t * (-d / (u * u * s[a]));
                h[(ja, ja)] += t * d / (2.0 * u * u * s[a].powi(3));
                for &b in &ends {
                    if let Some(jb) = var(b) {
                        h[(ja, jb)] += t * d / (u.powi(3) * s[a] * s[b]);
                    }
                }
            }
        }

        let sparse = |a: &Affine| -> Vec<(usize, f64)> { a.terms.iter().filter_map(|&(k, c)| var(k).map(|j| (j, c))).collect() };
        for con in &self.cons {
            match con {
                Constraint::Linear(a) => {
                    let sl = a.eval(&w);
                    let grad = sparse(a);
                    for &(j, c) in &grad {
                        g[j] -= c / sl;
                        for &(k, d) in &grad {
                            h[(j, k)] += c * d / (sl * sl);
                        }
                    }
                }
                Constraint::Cone { cap, c, e } => {
                    let (cv, ev) = (c.eval(&w), e.eval(&w));
                    let sl = cap * cap - cv * cv - ev * ev;
                    let (gc, ge) = (sparse(c), sparse(e));
                    let mut idx: Vec<usize> = gc.iter().chain(&ge).map(|p| p.0).collect();
                    idx.sort_unstable();
                    idx.dedup();
                    let coef = |list: &[(usize, f64)], j: usize| list.iter().filter(|p| p.0 == j).map(|p| p.1).sum::<f64>();
                    let ds: Vec<f64> = idx.iter().map(|&j| -2.0 * (cv * coef(&gc, j) + ev * coef(&ge, j))).collect();
                    for (a, &j) in idx.iter().enumerate() {
                        g[j] -= ds[a] / sl;
                        for (b, &k) in idx.iter().enumerate() {
                            let hs = -2.0 * (coef(&gc, j) * coef(&gc, k) + coef(&ge, j) * coef(&ge, k));
                            h[(j, k)] += ds[a] * ds[b] / (sl * sl) - hs / sl;
                        }
                    }
                }
            }
        }
        (g, h)
    }
}

/// Minimum-time profile over `checkpoints` on `map`.
pub fn optimize(checkpoints: &[Vector2<f64>], map: &GridMap, vehicle: &VehicleModel, params: &SpeedParams) -> Result<SpeedProfile> {
    params.validate()?;
    if checkpoints.len() < 3 {
        return Err(Error::domain(format!("speed planning needs at least 3 checkpoints, got {}", checkpoints.len())));
    }
    let terrain = checkpoint_terrain(checkpoints, map, params)?;
    optimize_on(checkpoints, &terrain, vehicle.total_mass(), params)
}

/// [`optimize`] with precomputed checkpoint terrain.
pub fn optimize_on(
    checkpoints: &[Vector2<f64>],
    terrain: &[CheckpointTerrain],
    mass: f64,
    params: &SpeedParams,
) -> Result<SpeedProfile> {
    let n = checkpoints.len();
    if n < 3 || terrain.len() != n {
        return Err(Error::LengthMismatch(format!("{n} checkpoints, {} terrain samples", terrain.len())));
    }
    let d = segment_lengths(checkpoints);
    if let Some(i) = d.iter().position(|&di| di == 0.0) {
        return Err(Error::DuplicatePoints(i));
    }
    let tol = params.solver.constraint_tol;
    let problem = Problem::new(checkpoints, terrain, mass, params);
    let report = |speeds: &[f64]| constraint_report(speeds, checkpoints, terrain, mass, params);

    // Crawling just above v_min is the most conservative candidate: if it
    // violates a constraint, no profile satisfies it.
    let w_floor = (params.v_min * (1.0 + 1e-3)).powi(2);
    let floor = DVector::from_element(n - 2, w_floor);
    if !problem.strictly_feasible(&floor) {
        let crawl: Vec<f64> = (0..n).map(|i| if i == 0 || i + 1 == n { 0.0 } else { params.v_min }).collect();
        let r = report(&crawl)?;
        let worst = (0..n).min_by(|&a, &b| r.force[a].total_cmp(&r.force[b])).unwrap();
        return Err(Error::Infeasible(format!(
            "constraints violated even at crawl speed; force slack {:.1} N at checkpoint {worst}, min slack {:.3e}",
            r.force[worst],
            r.min_slack()
        )));
    }

    let seed: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                return 0.0;
            }
            let t = &terrain[i];
            let v_turn = if t.radius.is_finite() { (t.mu * params.g * t.radius).sqrt() } else { f64::INFINITY };
            params.phi_at(t.sigma).min(v_turn).min(params.v_cap).max(params.v_min)
        })
        .collect();
    let seed_report = report(&seed)?;
    let seed_time = predicted_time(&seed, checkpoints);
    let seed_feasible = seed_report.feasible(tol);

    // Largest step from the crawl profile toward the seed that stays strictly
    // inside the feasible set (convex, so bisection is exact).
    let target = DVector::from_iterator(n - 2, seed[1..n - 1].iter().map(|v| v * v));
    let along = |lam: f64| &floor + (&target - &floor) * lam;
    let mut x = if problem.strictly_feasible(&target) {
        target.clone()
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if problem.strictly_feasible(&along(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        along(0.99 * lo)
    };

    let n_cons = problem.cons.len() as f64;
    let mut t = n_cons / problem.time(&x).max(1e-9);
    let mut iters = 0;
    let mut status = SolveStatus::MaxIters;
    'outer: while iters < params.solver.max_iters {
        loop {
            if iters >= params.solver.max_iters {
                break 'outer;
            }
            iters += 1;
            let (g, h) = problem.grad_hess(&x, t);
            let Some(chol) = h.clone().cholesky() else {
                log::warn!("barrier Hessian lost definiteness at iteration {iters}");
                break 'outer;
            };
            let dx = -chol.solve(&g);
            let decrement = -g.dot(&dx);
            let f0 = problem.barrier(&x, t);
            // Late stages weigh time by up to ~1e10, so the barrier is only
            // resolved to about 1e-16 |f0|; a decrement below 1e-9 |f0| is
            // centred to far less than the duality gap already targeted.
            if decrement < 1e-9 * (1.0 + f0.abs()) {
                break;
            }
            let mut step = 1.0;
            let mut moved = false;
            while step > 1e-10 {
                let cand = &x + &dx * step;
                if problem.barrier(&cand, t) <= f0 - 0.25 * step * decrement {
                    x = cand;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if n_cons / t < params.solver.tol * problem.time(&x).max(1.0) {
            status = SolveStatus::Optimal;
            break;
        }
        t *= 8.0;
    }

    let mut speeds: Vec<f64> = std::iter::once(0.0).chain(x.iter().map(|w| w.sqrt())).chain(std::iter::once(0.0)).collect();
    let mut time = predicted_time(&speeds, checkpoints);
    if seed_feasible && seed_time < time {
        speeds = seed;
        time = seed_time;
    }
    let slacks = report(&speeds)?;
    if !slacks.feasible(tol) {
        return Err(Error::Infeasible(format!("solver ended at min slack {:.3e}", slacks.min_slack())));
    }
    log::debug!("speed profile: {n} checkpoints, {iters} Newton steps, time {time:.3} s ({status:?})");
    Ok(SpeedProfile { speeds, predicted_time: time, status, iterations: iters, slacks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::friction::StribeckCoeffs;
    use crate::map::GridSpec;
    use rand::{Rng, SeedableRng};

    fn line(n: usize, spacing: f64) -> Vec<Vector2<f64>> {
        (0..n).map(|i| Vector2::new(i as f64 * spacing, 0.0)).collect()
    }

    fn flat(mu: f64, n: usize) -> Vec<CheckpointTerrain> {
        vec![CheckpointTerrain { mu, theta: 0.0, sigma: 0.0, radius: f64::INFINITY }; n]
    }

    #[test]
    fn circumradius_oracle() {
        let on_circle = |a: f64| Vector2::new(5.0 * a.cos() + 1.0, 5.0 * a.sin() - 2.0);
        let pts = [on_circle(0.3), on_circle(1.1), on_circle(2.9)];
        assert!((curvature_radius(&pts, 1).unwrap() - 5.0).abs() < 1e-12);
        // Right isosceles triangle with unit legs: the hypotenuse is a diameter.
        let pts = [Vector2::new(1.0, 0.0), Vector2::new(0.0, 0.0), Vector2::new(0.0, 1.0)];
        assert!((curvature_radius(&pts, 1).unwrap() - 2f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(curvature_radius(&line(3, 1.0), 1).unwrap().is_infinite());
        assert!(curvature_radius(&pts, 0).unwrap().is_infinite());
        let dup = [Vector2::new(0.0, 0.0), Vector2::new(0.0, 0.0), Vector2::new(1.0, 0.0)];
        assert!(matches!(curvature_radius(&dup, 1), Err(Error::DuplicatePoints(0))));
    }

    #[test]
    fn travel_time_arithmetic() {
        let cps = line(3, 10.0);
        assert!((predicted_time(&[0.0, 4.0, 0.0], &cps) - 10.0).abs() < 1e-12);
        let scaled: Vec<_> = cps.iter().map(|p| p * 3.0).collect();
        let v = [0.0, 2.5, 0.0];
        assert_eq!(predicted_time(&v, &scaled), 3.0 * predicted_time(&v, &cps));
    }

    #[test]
    fn time_gradient_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let n = rng.random_range(3..12);
            let cps: Vec<_> = (0..n).map(|i| Vector2::new(i as f64 * rng.random_range(0.5..2.0), rng.random_range(-0.5..0.5))).collect();
            let v: Vec<f64> = (0..n).map(|i| if i == 0 || i + 1 == n { 0.0 } else { rng.random_range(0.5..10.0) }).collect();
            let g = predicted_time_gradient(&v, &cps);
            for k in 1..n - 1 {
                let h = 1e-5;
                let (mut p, mut m) = (v.clone(), v.clone());
                p[k] += h;
                m[k] -= h;
                let fd = (predicted_time(&p, &cps) - predicted_time(&m, &cps)) / (2.0 * h);
                assert!((g[k] - fd).abs() <= 1e-5 * fd.abs(), "{} vs {fd}", g[k]);
            }
        }
    }

    #[test]
    fn zero_profile_violates_only_interior_positivity() {
        let cps = line(6, 1.0);
        let r = constraint_report(&[0.0; 6], &cps, &flat(0.8, 6), 2000.0, &SpeedParams::default()).unwrap();
        assert!(r.force.iter().chain(&r.traction).chain(&r.roughness).all(|s| *s >= 0.0));
        assert!(r.velocity[1..5].iter().all(|s| *s < 0.0));
        assert_eq!(r.velocity[0], 0.0);
        assert_eq!(r.velocity[5], 0.0);
    }

    #[test]
    fn constant_speed_straight_slack_is_full_friction() {
        let cps = line(5, 1.0);
        let v = [0.0, 3.0, 3.0, 3.0, 0.0];
        let r = constraint_report(&v, &cps, &flat(2.0, 5), 2000.0, &SpeedParams::default()).unwrap();
        assert!((r.force[2] - 2.0 * 2000.0 * GRAVITY).abs() < 1e-9);
    }

    #[test]
    fn slacks_match_direct_formulas() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let params = SpeedParams::default();
        let mass = 1800.0;
        for _ in 0..50 {
            let n = rng.random_range(3..10);
            let cps: Vec<_> = (0..n).map(|i| Vector2::new(i as f64 * 1.3, rng.random_range(-0.4..0.4))).collect();
            let terrain: Vec<_> = (0..n)
                .map(|i| CheckpointTerrain {
                    mu: rng.random_range(0.2..1.0),
                    theta: rng.random_range(-0.3..0.3),
                    sigma: rng.random_range(0.0..0.12),
                    radius: curvature_radius(&cps, i).unwrap(),
                })
                .collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..12.0)).collect();
            let r = constraint_report(&v, &cps, &terrain, mass, &params).unwrap();
            for i in 0..n {
                let t = &terrain[i];
                let f_f = t.mu * mass * GRAVITY * t.theta.cos();
                let f_c = if t.radius.is_finite() { mass * v[i] * v[i] / t.radius } else { 0.0 };
                let f_s = -mass * GRAVITY * t.theta.sin();
                let f_a = if i + 1 < n {
                    let d = (cps[i + 1] - cps[i]).norm();
                    -mass * (v[i + 1] - v[i]) * (v[i + 1] + v[i]) / (2.0 * d)
                } else {
                    0.0
                };
                assert!((r.force[i] - (f_f - (f_c * f_c + (f_s + f_a).powi(2)).sqrt())).abs() < 1e-6);
                assert!((r.traction[i] - (params.f_th - f_s - f_a)).abs() < 1e-6);
                let phi = if t.sigma <= 0.1 { 15.0 - 140.0 * t.sigma } else { 1.0 };
                assert!((r.roughness[i] - (phi - v[i])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn optimum_is_feasible_and_beats_seed() {
        let cps = line(30, 1.0);
        let params = SpeedParams::default();
        let p = optimize_on(&cps, &flat(0.6, 30), 2000.0, &params).unwrap();
        assert_eq!(p.status, SolveStatus::Optimal);
        assert!(p.slacks.feasible(1e-6));
        assert_eq!(p.speeds[0], 0.0);
        assert_eq!(p.speeds[29], 0.0);
        assert!(p.speeds[1..29].iter().all(|v| *v >= 0.05 - 1e-9));
        // Bang-bang on a straight: accelerate at mu g, brake at mu g. Each
        // checkpoint bounds the acceleration of the segment it starts, so
        // segment 14-15 is unconstrained by either ramp and both ends sit at
        // v^2 = 2 mu g 14.
        let peak = (2.0 * 0.6 * GRAVITY * 14.0f64).sqrt();
        assert!((p.speeds[14] - peak).abs() < 1e-6, "{:?}", &p.speeds[12..17]);
        assert!((p.speeds[15] - peak).abs() < 1e-6, "{:?}", &p.speeds[12..17]);
        assert!(p.speeds.iter().all(|&v| v <= peak + 1e-6));
    }

    #[test]
    fn doubling_friction_never_slows_the_plan() {
        let cps: Vec<_> = (0..25).map(|i| Vector2::new(i as f64, (i as f64 * 0.3).sin() * 2.0)).collect();
        let params = SpeedParams::default();
        let terrain = |mu: f64| -> Vec<CheckpointTerrain> {
            (0..25).map(|i| CheckpointTerrain { mu, theta: 0.0, sigma: 0.02, radius: curvature_radius(&cps, i).unwrap() }).collect()
        };
        let slow = optimize_on(&cps, &terrain(0.2), 2000.0, &params).unwrap();
        let fast = optimize_on(&cps, &terrain(0.4), 2000.0, &params).unwrap();
        assert!(fast.predicted_time <= slow.predicted_time);
    }

    #[test]
    fn slope_steeper_than_friction_is_infeasible() {
        let cps = line(5, 1.0);
        let mut terrain = flat(0.5, 5);
        terrain[2].theta = 0.6f64.atan();
        let err = optimize_on(&cps, &terrain, 2000.0, &SpeedParams::default()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn optimize_reads_the_map() {
        let spec = GridSpec::new(40, 10, 0.5, [0.0, 0.0]).unwrap();
        let map = GridMap::uniform(spec, StribeckCoeffs::new(0.9, 0.7, 0.5, 0.05).unwrap(), 0.0, 0.05);
        let cps: Vec<_> = (0..15).map(|i| Vector2::new(0.5 + i as f64, 2.5)).collect();
        let p = optimize(&cps, &map, &VehicleModel::pickup(), &SpeedParams::default()).unwrap();
        // Roughness 0.05 caps speed at 8 m/s.
        assert!(p.speeds.iter().all(|v| *v <= 8.0 + 1e-6));
        let r = constraint_eval(&p.speeds, &cps, &map, &VehicleModel::pickup(), &SpeedParams::default()).unwrap();
        assert!(r.feasible(1e-6));
        let baseline = SpeedParams { const_mu: Some(0.8), ..Default::default() };
        let t = checkpoint_terrain(&cps, &map, &baseline).unwrap();
        assert!(t.iter().all(|c| c.mu == 0.8));
    }

    #[test]
    fn deterministic() {
        let cps: Vec<_> = (0..20).map(|i| Vector2::new(i as f64, (i as f64 * 0.2).cos())).collect();
        let terrain: Vec<_> = (0..20).map(|i| CheckpointTerrain { mu: 0.5, theta: 0.05, sigma: 0.01, radius: curvature_radius(&cps, i).unwrap() }).collect();
        let a = optimize_on(&cps, &terrain, 2000.0, &SpeedParams::default()).unwrap();
        let b = optimize_on(&cps, &terrain, 2000.0, &SpeedParams::default()).unwrap();
        assert_eq!(a, b);
    }
}
