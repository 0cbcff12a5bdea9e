use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::track::{start_state, track, Failure, RunResult, TrackGains, TrackParams};
use super::world::{gen_world, WorldSpec};
use crate::error::{Error, Result};
use crate::map::{Cell, GridMap};
use crate::planner::{plan_with, Path, PlannerParams, SmoothParams};
use crate::speed::{optimize, predicted_time, SpeedParams, SpeedProfile};
use crate::vehicle::VehicleModel;

/// Named synthetic world and the seed it is generated with.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WorldRef {
    pub preset: String,
    pub seed: u64,
}

impl WorldRef {
    pub fn spec(&self) -> Result<WorldSpec> {
        match self.preset.as_str() {
            "flat" => Ok(WorldSpec { seed: self.seed, ..WorldSpec::flat(120, 40, 0.5, super::world::preset_types()["grass"]) }),
            "icy_crater" => Ok(WorldSpec::icy_crater()),
            "benchmark_patches" => Ok(WorldSpec::benchmark_patches(self.seed)),
            "benchmark_mixed" => Ok(WorldSpec::benchmark_mixed(self.seed)),
            "default" => Ok(WorldSpec { seed: self.seed, ..WorldSpec::default() }),
            other => Err(Error::Config(format!("unknown world preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub world: WorldRef,
    pub start: Cell,
    pub goal: Cell,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSuite {
    pub tasks: Vec<Task>,
}

/// Planner configurations compared in the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    FrictionAware,
    /// Friction-blind: every cell assumed to have this coefficient.
    ConstMu(f64),
    NoSteeringCost,
    /// Friction-aware speeds multiplied by a factor, as an overconfident driver.
    SpeedScaled(f64),
}

impl Variant {
    pub fn name(&self) -> String {
        match self {
            Variant::FrictionAware => "friction_aware".into(),
            Variant::ConstMu(mu) => format!("const_mu_{mu}"),
            Variant::NoSteeringCost => "no_steering_cost".into(),
            Variant::SpeedScaled(k) => format!("speed_x{k}"),
        }
    }

    pub fn configure(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut c = base.clone();
        match *self {
            Variant::FrictionAware => {}
            Variant::ConstMu(mu) => {
                c.planner.const_mu = Some(mu);
                c.speed.const_mu = Some(mu);
            }
            Variant::NoSteeringCost => c.planner.w_t = 0.0,
            Variant::SpeedScaled(k) => c.speed_scale = k,
        }
        c
    }
}

/// Everything needed to turn a task into a closed-loop run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub planner: PlannerParams,
    pub smooth: SmoothParams,
    pub speed: SpeedParams,
    pub gains: TrackGains,
    pub track: TrackParams,
    pub speed_scale: f64,
    /// Clearance beyond the vehicle footprint kept between planned cells and
    /// the map edge, m.
    pub edge_clearance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            planner: PlannerParams::default(),
            smooth: SmoothParams::default(),
            speed: SpeedParams::default(),
            gains: TrackGains::default(),
            track: TrackParams::default(),
            speed_scale: 1.0,
            edge_clearance: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub path: Path,
    pub profile: SpeedProfile,
    /// Profile after `speed_scale`.
    pub speeds: Vec<f64>,
    /// Travel time of `speeds` over the whole path.
    pub predicted_time: f64,
}

/// Copy of `map` whose outer ring is impassable, wide enough that a vehicle
/// centred on any remaining cell keeps its wheels on the map.
pub fn with_keep_out(map: &GridMap, vehicle: &VehicleModel, clearance: f64) -> GridMap {
    let reach = vehicle.contacts().iter().map(|c| (c - vehicle.com()).xy().norm()).fold(0.0, f64::max);
    let ring = ((reach + clearance) / map.cell_size()).ceil() as usize;
    let (w, h) = (map.width(), map.height());
    let mut out = map.clone();
    for y in 0..h {
        for x in 0..w {
            if x < ring || y < ring || x + ring >= w || y + ring >= h {
                out.set_roughness((x, y), f64::NAN);
            }
        }
    }
    out
}

/// Plan a path and its speeds on `map` as the configured planner sees it.
/// Start and goal inside the edge ring are unreachable.
pub fn plan_task(start: Cell, goal: Cell, map: &GridMap, vehicle: &VehicleModel, config: &PipelineConfig) -> Result<PlanOutput> {
    let path = plan_with(start, goal, &with_keep_out(map, vehicle, config.edge_clearance), &config.planner, &config.smooth)?;
    let profile = optimize(&path.checkpoints, map, vehicle, &config.speed)?;
    let speeds: Vec<f64> = profile.speeds.iter().map(|v| v * config.speed_scale).collect();
    let predicted = predicted_time(&speeds, &path.checkpoints);
    Ok(PlanOutput { path, profile, speeds, predicted_time: predicted })
}

/// Plan on the map and drive the plan in closed loop on the same map.
/// Planning failures become `infeasible` runs.
pub fn run_on_map(start: Cell, goal: Cell, map: &GridMap, vehicle: &VehicleModel, config: &PipelineConfig) -> Result<RunResult> {
    let plan = match plan_task(start, goal, map, vehicle, config) {
        Ok(p) => p,
        Err(Error::Infeasible(_) | Error::Unreachable(_)) => return Ok(RunResult::infeasible(0.0)),
        Err(e) => return Err(e),
    };
    let init = start_state(&plan.path.checkpoints, vehicle, map)?;
    let params = TrackParams { cell_size: map.cell_size(), ..config.track };
    track(&plan.path.checkpoints, &plan.speeds, vehicle, map, init, &config.gains, &params)
}

pub fn run_task(task: &Task, vehicle: &VehicleModel, config: &PipelineConfig) -> Result<RunResult> {
    let world = gen_world(&task.world.spec()?)?;
    run_on_map(task.start, task.goal, &world.map, vehicle, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tasks: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Mean actual time over successful runs.
    pub avg_time: Option<f64>,
    /// Mean actual over predicted time over successful runs.
    pub time_ratio: Option<f64>,
}

pub fn evaluate(results: &[RunResult]) -> Result<Metrics> {
    if results.is_empty() {
        return Err(Error::domain("cannot evaluate an empty task suite"));
    }
    let ok: Vec<&RunResult> = results.iter().filter(|r| r.success).collect();
    let mean = |f: &dyn Fn(&RunResult) -> f64| (!ok.is_empty()).then(|| ok.iter().map(|r| f(r)).sum::<f64>() / ok.len() as f64);
    Ok(Metrics {
        tasks: results.len(),
        successes: ok.len(),
        success_rate: ok.len() as f64 / results.len() as f64,
        avg_time: mean(&|r| r.actual_time),
        time_ratio: mean(&|r| r.time_ratio().unwrap_or(f64::NAN)),
    })
}

/// Run every task in parallel; results keep the task order.
pub fn run_suite(tasks: &[Task], vehicle: &VehicleModel, config: &PipelineConfig) -> Result<Vec<RunResult>> {
    tasks.par_iter().map(|t| run_task(t, vehicle, config)).collect()
}

pub fn failure_counts(results: &[RunResult]) -> [(Failure, usize); 4] {
    [Failure::TipOver, Failure::Stuck, Failure::OffPath, Failure::Infeasible].map(|f| (f, results.iter().filter(|r| r.failure == Some(f)).count()))
}

/// Draw `n` start/goal pairs at least `min_dist` cells apart for which the
/// base configuration finds a path and a feasible speed profile. Candidates
/// are drawn from a seeded stream, so the suite is reproducible.
pub fn random_tasks(world: &WorldRef, n: usize, min_dist: f64, seed: u64, vehicle: &VehicleModel, config: &PipelineConfig) -> Result<Vec<Task>> {
    let map = gen_world(&world.spec()?)?.map;
    let (w, h) = (map.width(), map.height());
    let margin = 4usize.min(w / 4).min(h / 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n {
        attempts += 1;
        if attempts > 200 * n.max(1) {
            return Err(Error::domain(format!("found only {} feasible tasks in {attempts} draws", out.len())));
        }
        let mut cell = || (rng.random_range(margin..w - margin), rng.random_range(margin..h - margin));
        let (s, g) = (cell(), cell());
        let d = ((s.0 as f64 - g.0 as f64).powi(2) + (s.1 as f64 - g.1 as f64).powi(2)).sqrt();
        if d < min_dist {
            continue;
        }
        if plan_task(s, g, &map, vehicle, config).is_ok() {
            out.push(Task { world: world.clone(), start: s, goal: g, seed: seed.wrapping_add(out.len() as u64) });
        }
    }
    Ok(out)
}

/// `per_world` tasks on each world; world `k` draws with seed
/// `seed * 1000 + k`.
pub fn draw_suite(worlds: &[WorldRef], per_world: usize, min_dist: f64, seed: u64, vehicle: &VehicleModel, config: &PipelineConfig) -> Result<TaskSuite> {
    let mut tasks = Vec::with_capacity(worlds.len() * per_world);
    for (k, w) in worlds.iter().enumerate() {
        tasks.extend(random_tasks(w, per_world, min_dist, seed.wrapping_mul(1000).wrapping_add(k as u64), vehicle, config)?);
    }
    Ok(TaskSuite { tasks })
}
