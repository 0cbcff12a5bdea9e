//! Shared generators and oracles for the integration tests.
#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use terranav::map::{Cell, GridMap, GridSpec};
use terranav::planner::{edge_cost, successors, Motion, Orientation, PlanVertex, PlannerParams};

/// Random planner instance: smooth hills, mixed friction, some impassable
/// cells and random cost weights.
pub struct PlanInstance {
    pub map: GridMap,
    pub start: Cell,
    pub goal: Cell,
    pub params: PlannerParams,
}

pub fn random_coeffs(rng: &mut impl Rng) -> [f64; 4] {
    let mu_d = rng.random_range(0.2..1.0);
    [mu_d + rng.random_range(0.0..0.3), mu_d, rng.random_range(0.2..1.5), rng.random_range(0.0..0.1)]
}

pub fn random_map(rng: &mut impl Rng, w: usize, h: usize, cell: f64, amplitude: f64, blocked: f64) -> GridMap {
    let spec = GridSpec::new(w, h, cell, [0.0, 0.0]).unwrap();
    let (kx, ky, ph) = (rng.random_range(0.05..0.6), rng.random_range(0.05..0.6), rng.random_range(0.0..std::f64::consts::TAU));
    let patches: Vec<[f64; 4]> = (0..4).map(|_| random_coeffs(rng)).collect();
    let (mut sl, mut el, mut rl) = (vec![], vec![], vec![]);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64 * cell, y as f64 * cell);
            el.push(amplitude * ((kx * fx + ph).sin() + (ky * fy).cos()) + rng.random_range(-0.02..0.02) * amplitude);
            sl.push(patches[(x * 2 / w.max(1)) + 2 * (y * 2 / h.max(1))]);
            rl.push(if rng.random_bool(blocked) { 0.2 } else { rng.random_range(0.0..0.08) });
        }
    }
    GridMap::from_layers(spec, sl, el, rl).unwrap()
}

pub fn random_plan_instance(seed: u64, max_side: usize) -> PlanInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(2..=max_side);
    let h = rng.random_range(2..=max_side);
    let amplitude = rng.random_range(0.0..1.5);
    let map = random_map(&mut rng, w, h, 1.0, amplitude, 0.15);
    let params = PlannerParams {
        w_d: rng.random_range(0.2..3.0),
        w_f: rng.random_range(0.0..2.0),
        w_s: rng.random_range(0.0..2.0),
        w_r: rng.random_range(0.0..5.0),
        w_t: rng.random_range(0.0..3.0),
        lambda_v: rng.random_range(0.0..2.0),
        lambda_s: rng.random_range(0.1..2.0),
        ..PlannerParams::default()
    };
    let start = (rng.random_range(0..w), rng.random_range(0..h));
    let goal = (rng.random_range(0..w), rng.random_range(0..h));
    PlanInstance { map, start, goal, params }
}

/// Dijkstra over the same vertex graph the planner searches: sources are
/// every orientation at the start with a straight last motion, and any
/// vertex on the goal cell ends the search.
pub fn dijkstra(start: Cell, goal: Cell, map: &GridMap, params: &PlannerParams) -> Option<f64> {
    if start == goal {
        return Some(0.0);
    }
    let mut dist: HashMap<PlanVertex, f64> = HashMap::new();
    let mut heap = BinaryHeap::new();
    for o in Orientation::ALL {
        let v = PlanVertex { x: start.0, y: start.1, o, m: Motion::D };
        dist.insert(v, 0.0);
        heap.push(Reverse((Key(0.0), v)));
    }
    while let Some(Reverse((Key(d), v))) = heap.pop() {
        if d > dist[&v] {
            continue;
        }
        if v.cell() == goal {
            return Some(d);
        }
        for s in successors(&v, map.width(), map.height()) {
            let c = edge_cost(&v, &s, map, params);
            if !c.is_finite() {
                continue;
            }
            let nd = d + c;
            if nd < *dist.get(&s).unwrap_or(&f64::INFINITY) {
                dist.insert(s, nd);
                heap.push(Reverse((Key(nd), s)));
            }
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Key {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&o.0)
    }
}

pub fn all_vertices(w: usize, h: usize) -> impl Iterator<Item = PlanVertex> {
    (0..h).flat_map(move |y| {
        (0..w).flat_map(move |x| Orientation::ALL.into_iter().flat_map(move |o| Motion::ALL.into_iter().map(move |m| PlanVertex { x, y, o, m })))
    })
}

/// Smooth random polyline with roughly unit spacing inside `[margin,
/// extent - margin]`.
pub fn random_checkpoints(rng: &mut impl Rng, n: usize, extent: f64, margin: f64) -> Vec<Vector2<f64>> {
    loop {
        let mut p = Vector2::new(rng.random_range(margin..extent - margin), rng.random_range(margin..extent - margin));
        let mut yaw: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let mut turn = 0.0;
        let mut pts = vec![p];
        for _ in 1..n {
            turn = (turn + rng.random_range(-0.08..0.08f64)).clamp(-0.3, 0.3);
            yaw += turn;
            p += Vector2::new(yaw.cos(), yaw.sin()) * rng.random_range(0.7..1.3);
            pts.push(p);
        }
        if pts.iter().all(|q| q.x > margin && q.y > margin && q.x < extent - margin && q.y < extent - margin) {
            return pts;
        }
    }
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_terranav")
}

/// Run the CLI with `--out out_dir` followed by `args`.
pub fn cli(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(bin()).arg("--out").arg(out_dir).args(args).output().expect("failed to spawn the terranav binary")
}

/// Every file under `dir`, relative path to contents, sorted.
pub fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = vec![];
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
