//! Steering-aware A* over `(x, y, orientation, last motion)` with
//! friction, slope, roughness and steering edge costs.

mod smooth;

pub use smooth::{smooth, SmoothParams};

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{Cell, GridMap};

/// Eight compass headings, counter-clockwise from east in 45 degree steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    E,
    NE,
    N,
    NW,
    W,
    SW,
    S,
    SE,
}

impl Orientation {
    pub const ALL: [Orientation; 8] = [
        Orientation::E,
        Orientation::NE,
        Orientation::N,
        Orientation::NW,
        Orientation::W,
        Orientation::SW,
        Orientation::S,
        Orientation::SE,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i % 8]
    }

    pub fn left(self) -> Self {
        Self::from_index(self.index() + 1)
    }

    pub fn right(self) -> Self {
        Self::from_index(self.index() + 7)
    }

    pub fn delta(self) -> (i64, i64) {
        [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)][self.index()]
    }

    pub fn is_diagonal(self) -> bool {
        self.index() % 2 == 1
    }

    pub fn yaw(self) -> f64 {
        self.index() as f64 * std::f64::consts::FRAC_PI_4
    }
}

/// Last motion primitive: left turn, straight, right turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Motion {
    L,
    D,
    R,
}

impl Motion {
    pub const ALL: [Motion; 3] = [Motion::L, Motion::D, Motion::R];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Steering factor for a turn into `m_q` after having moved with `m_p`.
pub fn eta(m_p: Motion, m_q: Motion) -> f64 {
    match (m_p, m_q) {
        (_, Motion::D) => 0.0,
        (Motion::L, Motion::L) | (Motion::R, Motion::R) => 4.0,
        (Motion::D, _) => 1.0,
        (Motion::L, Motion::R) | (Motion::R, Motion::L) => 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlanVertex {
    pub x: usize,
    pub y: usize,
    pub o: Orientation,
    pub m: Motion,
}

impl PlanVertex {
    pub fn cell(&self) -> Cell {
        (self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub lambda_v: f64,
    pub lambda_s: f64,
    /// Roughness at or above which cells are impassable.
    pub sigma_th: f64,
    /// Slip speed at which edge friction is evaluated.
    pub v_rel_plan: f64,
    pub w_d: f64,
    pub w_f: f64,
    pub w_s: f64,
    pub w_r: f64,
    pub w_t: f64,
    /// Friction-blind baseline: replace every edge's friction by this value.
    pub const_mu: Option<f64>,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            lambda_v: 1.0,
            lambda_s: 1.0,
            sigma_th: 0.1,
            v_rel_plan: 1.0,
            w_d: 1.0,
            w_f: 1.0,
            w_s: 1.0,
            w_r: 1.0,
            w_t: 1.0,
            const_mu: None,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_v, self.lambda_s, self.v_rel_plan, self.w_d, self.w_f, self.w_s, self.w_r, self.w_t];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config("planner weights must be finite and >= 0".into()));
        }
        if !(self.sigma_th > 0.0) {
            return Err(Error::Config("sigma_th must be > 0".into()));
        }
        if let Some(mu) = self.const_mu {
            if !(mu > 0.0) {
                return Err(Error::Config("const_mu must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Left, straight and right successors that stay on the map.
pub fn successors(v: &PlanVertex, width: usize, height: usize) -> Vec<PlanVertex> {
    let mut out = Vec::with_capacity(3);
    for (o, m) in [(v.o.left(), Motion::L), (v.o, Motion::D), (v.o.right(), Motion::R)] {
        let (dx, dy) = o.delta();
        let (x, y) = (v.x as i64 + dx, v.y as i64 + dy);
        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
            out.push(PlanVertex { x: x as usize, y: y as usize, o, m });
        }
    }
    out
}

/// Edge friction coefficient and mean viscous coefficient.
fn edge_friction(p: Cell, q: Cell, map: &GridMap, params: &PlannerParams) -> Option<(f64, f64)> {
    if let Some(mu) = params.const_mu {
        return Some((mu, 0.0));
    }
    let s = map.edge_stribeck(p, q).ok()?;
    let mu = s.mu(params.v_rel_plan);
    (mu > 0.0).then_some((mu, s.mu_v()))
}

/// Individual cost terms of one edge, before weighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTerms {
    pub d_d: f64,
    pub d_f: f64,
    pub d_s: f64,
    pub d_r: f64,
    pub d_t: f64,
}

impl EdgeTerms {
    pub fn weighted(&self, p: &PlannerParams) -> f64 {
        p.w_d * self.d_d + p.w_f * self.d_f + p.w_s * self.d_s + p.w_r * self.d_r + p.w_t * self.d_t
    }
}

pub fn edge_terms(p: &PlanVertex, q: &PlanVertex, map: &GridMap, params: &PlannerParams) -> EdgeTerms {
    let inf = EdgeTerms { d_d: f64::INFINITY, d_f: f64::INFINITY, d_s: f64::INFINITY, d_r: f64::INFINITY, d_t: 0.0 };
    let (pc, qc) = (p.cell(), q.cell());
    let d_d = if q.o.is_diagonal() { std::f64::consts::SQRT_2 } else { 1.0 };
    let Some((mu, mu_v)) = edge_friction(pc, qc, map, params) else {
        return inf;
    };
    let (rp, rq) = (map.roughness(pc), map.roughness(qc));
    // NaN roughness fails both comparisons and is impassable.
    let d_r = if rp < params.sigma_th && rq < params.sigma_th { 0.5 * (rp + rq) } else { f64::INFINITY };
    let d_s = match map.slope_along(pc, qc) {
        Ok(along) => {
            let perp = map.slope_perp(pc, qc);
            (params.lambda_s * along / mu).exp() + (params.lambda_s * perp / mu).exp()
        }
        Err(_) => f64::INFINITY,
    };
    let d_t = if p.o != q.o { eta(p.m, q.m) / mu } else { 0.0 };
    EdgeTerms { d_d, d_f: 1.0 / mu + params.lambda_v * mu_v, d_s, d_r, d_t }
}

/// Weighted edge cost; infinite when the edge is not traversable.
pub fn edge_cost(p: &PlanVertex, q: &PlanVertex, map: &GridMap, params: &PlannerParams) -> f64 {
    let c = edge_terms(p, q, map, params).weighted(params);
    if c.is_nan() {
        f64::INFINITY
    } else {
        c
    }
}

/// `w_d` times the Euclidean cell distance.
pub fn heuristic(v: Cell, goal: Cell, params: &PlannerParams) -> f64 {
    let dx = v.0 as f64 - goal.0 as f64;
    let dy = v.1 as f64 - goal.1 as f64;
    params.w_d * (dx * dx + dy * dy).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub vertices: Vec<PlanVertex>,
    /// World-frame checkpoints after smoothing.
    pub checkpoints: Vec<Vector2<f64>>,
    pub total_cost: f64,
    pub expanded_nodes: usize,
}

impl Path {
    pub fn heading_changes(&self) -> usize {
        heading_changes(&self.vertices)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "vertices": self.vertices.iter().map(|v| serde_json::json!([v.x, v.y, format!("{:?}", v.o), format!("{:?}", v.m)])).collect::<Vec<_>>(),
            "checkpoints": self.checkpoints.iter().map(|c| [c.x, c.y]).collect::<Vec<_>>(),
            "cost": self.total_cost,
            "expanded_nodes": self.expanded_nodes,
        })
    }
}

pub fn heading_changes(vertices: &[PlanVertex]) -> usize {
    vertices.windows(2).filter(|w| w[0].o != w[1].o).count()
}

pub(crate) fn vertex_id(v: &PlanVertex, width: usize) -> usize {
    ((v.y * width + v.x) * 8 + v.o.index()) * 3 + v.m.index()
}

pub(crate) fn vertex_from_id(id: usize, width: usize) -> PlanVertex {
    let m = Motion::ALL[id % 3];
    let o = Orientation::from_index((id / 3) % 8);
    let cell = id / 24;
    PlanVertex { x: cell % width, y: cell / width, o, m }
}

struct Entry {
    f: f64,
    h: f64,
    seq: u64,
    id: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // Reversed so the max-heap pops the lexicographically smallest (f, h, seq).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Raw A* result before smoothing.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub vertices: Vec<PlanVertex>,
    pub cost: f64,
    pub expanded: usize,
}

pub fn search(start: Cell, goal: Cell, map: &GridMap, params: &PlannerParams) -> Result<SearchResult> {
    params.validate()?;
    let (w, h) = (map.width(), map.height());
    for c in [start, goal] {
        if c.0 >= w || c.1 >= h {
            return Err(Error::OutOfBounds { x: c.0 as i64, y: c.1 as i64 });
        }
    }
    if start == goal {
        let v = PlanVertex { x: start.0, y: start.1, o: Orientation::E, m: Motion::D };
        return Ok(SearchResult { vertices: vec![v], cost: 0.0, expanded: 0 });
    }
    let n = w * h * 24;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let h0 = heuristic(start, goal, params);
    for o in Orientation::ALL {
        let id = vertex_id(&PlanVertex { x: start.0, y: start.1, o, m: Motion::D }, w);
        g[id] = 0.0;
        heap.push(Entry { f: h0, h: h0, seq, id });
        seq += 1;
    }
    let mut expanded = 0;
    while let Some(Entry { id, .. }) = heap.pop() {
        if closed[id] {
            continue;
        }
        closed[id] = true;
        expanded += 1;
        let v = vertex_from_id(id, w);
        if v.cell() == goal {
            let mut path = vec![v];
            let mut cur = id;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                path.push(vertex_from_id(cur, w));
            }
            path.reverse();
            return Ok(SearchResult { vertices: path, cost: g[id], expanded });
        }
        for s in successors(&v, w, h) {
            let sid = vertex_id(&s, w);
            if closed[sid] {
                continue;
            }
            let c = edge_cost(&v, &s, map, params);
            if !c.is_finite() {
                continue;
            }
            let ng = g[id] + c;
            if ng < g[sid] {
                g[sid] = ng;
                parent[sid] = id;
                let hs = heuristic(s.cell(), goal, params);
                heap.push(Entry { f: ng + hs, h: hs, seq, id: sid });
                seq += 1;
            }
        }
    }
    Err(Error::Unreachable(format!(
        "no traversable path from {start:?} to {goal:?} after expanding {expanded} vertices"
    )))
}

/// A* search followed by spline smoothing.
pub fn plan(start: Cell, goal: Cell, map: &GridMap, params: &PlannerParams) -> Result<Path> {
    plan_with(start, goal, map, params, &SmoothParams::default())
}

pub fn plan_with(start: Cell, goal: Cell, map: &GridMap, params: &PlannerParams, sp: &SmoothParams) -> Result<Path> {
    let r = search(start, goal, map, params)?;
    let checkpoints = smooth(&r.vertices, map, params.sigma_th, sp);
    Ok(Path { vertices: r.vertices, checkpoints, total_cost: r.cost, expanded_nodes: r.expanded })
}
