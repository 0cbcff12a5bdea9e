//! Command-line front end. Every command resolves its configuration, archives
//! it as `config.json` in the output directory and writes its artifacts next
//! to it. Failures are reported on stderr as one JSON object.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;
use serde::Serialize;
use serde_json::json;

use crate::config::Config;
use crate::dynamics::{rollout, write_trajectory_csv, write_wheel_csv, SimConfig, StepInput};
use crate::error::{Error, Result};
use crate::harness::{
    draw_suite, evaluate, failure_counts, gen_log, gen_world, plan_task, pose_on_ground, run_suite, start_state, track, RunResult, Schedule, TaskSuite,
    TrackParams, Variant, World, WorldRef, WorldSpec,
};
use crate::ident::{fit_cells, initial_variables, pseudo_labels, solve_lower, write_pseudo_labels_csv, DriveLog, IdentProblem};
use crate::map::{Cell, GridMap};

#[derive(Debug, Parser)]
#[command(name = "terranav", version, about = "Friction-aware off-road navigation")]
pub struct Cli {
    /// JSON configuration file layered over the built-in defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; offsets world seeds and seeds log noise and task draws.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Also write CSV files meant for plotting.
    #[arg(long, global = true)]
    pub emit_plots: bool,
    /// Override a config value, e.g. `--set pipeline.planner.w_t=0.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world and write its map bundle.
    GenWorld {
        /// World preset name, overriding `world.preset`.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Open-loop rollout with a constant or scheduled command.
    Simulate {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        rpm: Option<f64>,
        /// Also write per-wheel loads, skid speeds and friction.
        #[arg(long)]
        diagnostics: bool,
        #[command(flatten)]
        map: MapArg,
    },
    /// Identify friction from a drive log and update the map.
    Identify {
        /// Recorded log; a synthetic one is generated when absent.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Write the Levenberg-Marquardt iteration trace.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        map: MapArg,
    },
    /// Plan a path and its speed profile.
    Plan(PlanArgs),
    /// Plan and then drive the plan in closed loop.
    Drive(PlanArgs),
    /// Run the benchmark over planner variants.
    Eval {
        /// Task suite JSON; drawn from the configured worlds when absent.
        #[arg(long)]
        tasks: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct MapArg {
    /// Map bundle directory used instead of the configured world.
    #[arg(long)]
    pub map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[arg(long, value_parser = parse_cell)]
    pub start: Option<Cell>,
    #[arg(long, value_parser = parse_cell)]
    pub goal: Option<Cell>,
    #[arg(long)]
    pub no_steering_cost: bool,
    /// Plan as if every cell had this friction coefficient.
    #[arg(long)]
    pub const_mu: Option<f64>,
    #[command(flatten)]
    pub map: MapArg,
}

fn parse_cell(s: &str) -> std::result::Result<Cell, String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected X,Y, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((p(x)?, p(y)?))
}

/// Parse arguments, run, and return the process exit code.
pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", json!({"error": e.kind(), "message": e.to_string()}));
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let mut overrides = Vec::new();
    if let Some(s) = cli.seed {
        overrides.push(format!("seed={s}"));
    }
    overrides.extend(cli.overrides.iter().cloned());
    if let Command::GenWorld { preset: Some(p) } = &cli.command {
        overrides.push(format!("world.preset={}", serde_json::to_string(p)?));
    }
    let cfg = Config::resolve(cli.config.as_deref(), &overrides)?;
    fs::create_dir_all(&cli.out)?;
    fs::write(cli.out.join("config.json"), cfg.to_json_pretty()? + "\n")?;
    let ctx = Ctx { cfg, out: cli.out, plots: cli.emit_plots };
    match cli.command {
        Command::GenWorld { .. } => ctx.gen_world(),
        Command::Simulate { steps, rpm, diagnostics, map } => ctx.simulate(steps, rpm, diagnostics, map.map.as_deref()),
        Command::Identify { log, trace, map } => ctx.identify(log.or(ctx.cfg.identify.log.clone()), trace, map.map.as_deref()),
        Command::Plan(a) => ctx.plan(&a),
        Command::Drive(a) => ctx.drive(&a),
        Command::Eval { tasks } => ctx.eval(tasks.or(ctx.cfg.eval.tasks.clone())),
    }
}

struct Ctx {
    cfg: Config,
    out: PathBuf,
    plots: bool,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

impl Ctx {
    /// World reference with the master seed folded in.
    fn seeded(&self, w: &WorldRef) -> WorldRef {
        WorldRef { preset: w.preset.clone(), seed: w.seed.wrapping_add(self.cfg.seed) }
    }

    fn world_spec(&self) -> Result<WorldSpec> {
        match &self.cfg.world_spec {
            Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
            None => self.seeded(&self.cfg.world).spec(),
        }
    }

    fn map(&self, dir: Option<&Path>) -> Result<GridMap> {
        match dir {
            Some(d) => GridMap::read_bundle(d),
            None => Ok(gen_world(&self.world_spec()?)?.map),
        }
    }

    fn gen_world(&self) -> Result<()> {
        let spec = self.world_spec()?;
        let World { map, type_names } = gen_world(&spec)?;
        map.write_bundle(self.out.join("map"))?;
        write_json(&self.out.join("world_spec.json"), &spec)?;
        write_json(&self.out.join("type_names.json"), &type_names)?;
        if self.plots {
            let mut f = create(&self.out.join("map.csv"))?;
            map.write_csv(&mut f)?;
            f.flush()?;
        }
        Ok(())
    }

    fn simulate(&self, steps: Option<usize>, rpm: Option<f64>, diagnostics: bool, map_dir: Option<&Path>) -> Result<()> {
        let sc = &self.cfg.simulate;
        let vehicle = self.cfg.vehicle()?;
        let map = self.map(map_dir)?;
        let steps = steps.unwrap_or(sc.steps);
        let inputs: Vec<StepInput> = match &sc.schedule {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
            None => vec![StepInput::straight(rpm.unwrap_or(sc.rpm)); steps],
        };
        let mut init = pose_on_ground(Vector2::from(sc.start), sc.yaw_deg.to_radians(), &vehicle, &map)?;
        init.v = init.heading() * sc.initial_speed;
        let traj = rollout(&init, &inputs, &vehicle, &map, steps, SimConfig { dt: sc.dt, ..Default::default() })?;
        let mut f = create(&self.out.join("trajectory.csv"))?;
        write_trajectory_csv(&mut f, &traj.states)?;
        f.flush()?;
        if diagnostics {
            let mut f = create(&self.out.join("wheels.csv"))?;
            write_wheel_csv(&mut f, &traj.evals)?;
            f.flush()?;
        }
        Ok(())
    }

    fn identify(&self, log_path: Option<PathBuf>, trace: bool, map_dir: Option<&Path>) -> Result<()> {
        let ic = &self.cfg.identify;
        let vehicle = self.cfg.vehicle()?;
        let truth = gen_world(&self.seeded(&ic.world).spec()?)?.map;
        let log = match &log_path {
            Some(p) => DriveLog::from_json_str(&fs::read_to_string(p)?)?,
            None => {
                let mut init = pose_on_ground(Vector2::from(ic.start), 0.0, &vehicle, &truth)?;
                init.v = init.heading() * ic.initial_speed;
                let schedule = Schedule::slip_sine_with_mean(ic.mean_slip);
                let log = gen_log(&vehicle, &schedule, &truth, init, ic.steps, ic.dt, ic.noise, self.cfg.seed)?;
                write_json(&self.out.join("log.json"), &log)?;
                log
            }
        };
        let prior = match map_dir {
            Some(d) => GridMap::read_bundle(d)?,
            None => {
                let mut m = truth.clone();
                for y in 0..m.height() {
                    for x in 0..m.width() {
                        m.set_stribeck((x, y), ic.prior);
                    }
                }
                m
            }
        };
        let vars = initial_variables(&log, &vehicle, &prior)?;
        let problem = IdentProblem::new(&log, &vehicle, &prior, &vars, ic.params)?;
        let sol = solve_lower(&problem, &vars)?;
        let labels = pseudo_labels(&sol.vars, &vehicle);
        let mut f = create(&self.out.join("labels.csv"))?;
        write_pseudo_labels_csv(&mut f, &labels)?;
        f.flush()?;
        let fit = fit_cells(&labels, &prior);
        fit.map.write_bundle(self.out.join("map"))?;
        if trace {
            write_json(&self.out.join("lm_trace.json"), &sol.trace)?;
        }
        let median: Vec<f64> = (0..4)
            .map(|c| {
                let mut v: Vec<f64> = labels.iter().map(|l| l.s[c]).collect();
                v.sort_by(f64::total_cmp);
                v[v.len() / 2]
            })
            .collect();
        let summary = json!({
            "status": sol.status,
            "iterations": sol.iterations,
            "initial_cost": sol.initial_cost,
            "cost": sol.cost,
            "samples": log.len(),
            "median_coefficients": median,
            "updated_cells": fit.updated_cells,
            "skipped_labels": fit.skipped,
        });
        write_json(&self.out.join("identify.json"), &summary)
    }

    fn pipeline(&self, a: &PlanArgs) -> crate::harness::PipelineConfig {
        let mut c = self.cfg.pipeline.clone();
        if a.no_steering_cost {
            c = Variant::NoSteeringCost.configure(&c);
        }
        if let Some(mu) = a.const_mu {
            c = Variant::ConstMu(mu).configure(&c);
        }
        c
    }

    fn endpoints(&self, a: &PlanArgs) -> (Cell, Cell) {
        (a.start.unwrap_or(self.cfg.plan.start), a.goal.unwrap_or(self.cfg.plan.goal))
    }

    fn plan(&self, a: &PlanArgs) -> Result<()> {
        let vehicle = self.cfg.vehicle()?;
        let map = self.map(a.map.map.as_deref())?;
        let (start, goal) = self.endpoints(a);
        let config = self.pipeline(a);
        let (path, profile, speeds, predicted) = if start == goal {
            // Already there: a single checkpoint and nothing to drive.
            if start.0 >= map.width() || start.1 >= map.height() {
                return Err(Error::OutOfBounds { x: start.0 as i64, y: start.1 as i64 });
            }
            let c = map.spec().center(start.0, start.1);
            let path = json!({"vertices": [[start.0, start.1, "E", "D"]], "checkpoints": [[c.x, c.y]], "cost": 0.0, "expanded_nodes": 0});
            let profile = json!({"speeds": [0.0], "predicted_time": 0.0, "status": "trivial", "iterations": 0});
            (path, profile, vec![(c, 0.0)], 0.0)
        } else {
            let p = plan_task(start, goal, &map, &vehicle, &config)?;
            let rows = p.path.checkpoints.iter().copied().zip(p.speeds.iter().copied()).collect();
            (p.path.to_json(), p.profile.to_json(), rows, p.predicted_time)
        };
        let dir = self.out.join("plan");
        fs::create_dir_all(&dir)?;
        write_json(&dir.join("path.json"), &path)?;
        write_json(&dir.join("profile.json"), &profile)?;
        let mut f = create(&dir.join("checkpoints.csv"))?;
        writeln!(f, "i,x,y,v")?;
        for (i, (c, v)) in speeds.iter().enumerate() {
            writeln!(f, "{i},{},{},{v}", c.x, c.y)?;
        }
        f.flush()?;
        log::info!("planned {} checkpoints, predicted time {predicted:.3} s", speeds.len());
        Ok(())
    }

    fn drive(&self, a: &PlanArgs) -> Result<()> {
        let vehicle = self.cfg.vehicle()?;
        let map = self.map(a.map.map.as_deref())?;
        let (start, goal) = self.endpoints(a);
        let config = self.pipeline(a);
        let mut run = if start == goal {
            if start.0 >= map.width() || start.1 >= map.height() {
                return Err(Error::OutOfBounds { x: start.0 as i64, y: start.1 as i64 });
            }
            RunResult { success: true, failure: None, actual_time: 0.0, predicted_time: 0.0, max_cross_track: 0.0, max_speed: 0.0, trajectory: vec![] }
        } else {
            let p = plan_task(start, goal, &map, &vehicle, &config)?;
            let init = start_state(&p.path.checkpoints, &vehicle, &map)?;
            let params = TrackParams { cell_size: map.cell_size(), ..config.track };
            track(&p.path.checkpoints, &p.speeds, &vehicle, &map, init, &config.gains, &params)?
        };
        if self.plots {
            let mut f = create(&self.out.join("trajectory.csv"))?;
            run.write_csv(&mut f)?;
            f.flush()?;
        }
        run.trajectory.clear();
        let mut v = serde_json::to_value(&run)?;
        v.as_object_mut().unwrap().remove("trajectory");
        v["time_ratio"] = json!(run.time_ratio());
        write_json(&self.out.join("run.json"), &v)
    }

    fn eval(&self, tasks_path: Option<PathBuf>) -> Result<()> {
        let ec = &self.cfg.eval;
        let vehicle = self.cfg.vehicle()?;
        let suite = match &tasks_path {
            Some(p) => serde_json::from_str::<TaskSuite>(&fs::read_to_string(p)?)?,
            None => {
                let worlds: Vec<WorldRef> = ec.worlds.iter().map(|w| self.seeded(w)).collect();
                draw_suite(&worlds, ec.tasks_per_world, ec.min_distance, self.cfg.seed, &vehicle, &self.cfg.pipeline)?
            }
        };
        write_json(&self.out.join("tasks.json"), &suite)?;
        let mut csv = create(&self.out.join("results.csv"))?;
        writeln!(csv, "variant,task,preset,start_x,start_y,goal_x,goal_y,success,failure,actual_time,predicted_time,time_ratio,max_cross_track")?;
        let mut summary = serde_json::Map::new();
        for variant in &ec.variants {
            let name = variant.name();
            let runs = run_suite(&suite.tasks, &vehicle, &variant.configure(&self.cfg.pipeline))?;
            for (i, (t, r)) in suite.tasks.iter().zip(&runs).enumerate() {
                let failure = r.failure.map(|f| serde_json::to_value(f).unwrap().as_str().unwrap_or("").to_string()).unwrap_or_default();
                let ratio = r.time_ratio().map(|x| x.to_string()).unwrap_or_default();
                writeln!(
                    csv,
                    "{name},{i},{},{},{},{},{},{},{failure},{},{},{ratio},{}",
                    t.world.preset, t.start.0, t.start.1, t.goal.0, t.goal.1, r.success, r.actual_time, r.predicted_time, r.max_cross_track
                )?;
                if self.plots {
                    let dir = self.out.join("trajectories");
                    fs::create_dir_all(&dir)?;
                    let mut f = create(&dir.join(format!("{name}_{i}.csv")))?;
                    r.write_csv(&mut f)?;
                    f.flush()?;
                }
            }
            let metrics = evaluate(&runs)?;
            let failures: serde_json::Map<String, serde_json::Value> =
                failure_counts(&runs).iter().map(|(f, n)| (serde_json::to_value(f).unwrap().as_str().unwrap_or("").to_string(), json!(n))).collect();
            summary.insert(name, json!({"variant": variant, "metrics": metrics, "failures": failures}));
        }
        csv.flush()?;
        write_json(&self.out.join("summary.json"), &summary)
    }
}
