//! Resolved experiment configuration: built-in defaults, overlaid by a JSON
//! file, overlaid by command-line settings.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::harness::{LogNoise, PipelineConfig, Variant, WorldRef};
use crate::ident::IdentParams;
use crate::map::Cell;
use crate::vehicle::VehicleModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub steps: usize,
    pub dt: f64,
    /// Constant RPM on all wheels, used when no schedule file is given.
    pub rpm: f64,
    pub start: [f64; 2],
    pub yaw_deg: f64,
    pub initial_speed: f64,
    /// JSON array of step inputs replacing the constant command.
    pub schedule: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { steps: 20, dt: 0.01, rpm: 0.0, start: [10.0, 10.0], yaw_deg: 0.0, initial_speed: 0.0, schedule: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyConfig {
    /// Ground-truth world the synthetic log is driven on.
    pub world: WorldRef,
    /// A recorded log; when absent a synthetic one is generated.
    pub log: Option<PathBuf>,
    pub steps: usize,
    pub dt: f64,
    pub mean_slip: f64,
    pub initial_speed: f64,
    pub start: [f64; 2],
    pub noise: LogNoise,
    /// Coefficients assumed everywhere before identification.
    pub prior: [f64; 4],
    pub params: IdentParams,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            world: WorldRef { preset: "flat".into(), seed: 0 },
            log: None,
            steps: 200,
            dt: 0.01,
            mean_slip: 0.6,
            initial_speed: 8.0,
            start: [2.0, 10.0],
            noise: LogNoise::default(),
            prior: [0.7, 0.5, 0.6, 0.02],
            params: IdentParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub start: Cell,
    pub goal: Cell,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { start: (10, 10), goal: (110, 100) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Task suite file; when absent tasks are drawn on `worlds`.
    pub tasks: Option<PathBuf>,
    pub worlds: Vec<WorldRef>,
    pub tasks_per_world: usize,
    /// Minimum start-goal distance in cells.
    pub min_distance: f64,
    pub variants: Vec<Variant>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tasks: None,
            worlds: vec![WorldRef { preset: "benchmark_patches".into(), seed: 1 }, WorldRef { preset: "benchmark_mixed".into(), seed: 1 }],
            tasks_per_world: 10,
            min_distance: 25.0,
            variants: vec![Variant::FrictionAware, Variant::ConstMu(0.8), Variant::NoSteeringCost, Variant::SpeedScaled(1.25)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub seed: u64,
    /// Vehicle description file; the built-in pickup when absent.
    pub vehicle: Option<PathBuf>,
    /// World used by gen-world, simulate, plan and drive.
    pub world: WorldRef,
    /// JSON world spec replacing `world`.
    pub world_spec: Option<PathBuf>,
    pub pipeline: PipelineConfig,
    pub simulate: SimulateConfig,
    pub identify: IdentifyConfig,
    pub plan: PlanConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            vehicle: None,
            world: WorldRef { preset: "default".into(), seed: 0 },
            world_spec: None,
            pipeline: PipelineConfig::default(),
            simulate: SimulateConfig::default(),
            identify: IdentifyConfig::default(),
            plan: PlanConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Recursively overlay `top` onto `base`; objects merge key by key and
/// everything else is replaced.
pub fn merge(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Apply `a.b.c=value`. The value is parsed as JSON and taken as a plain
/// string when that fails.
pub fn set_path(tree: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got {assignment:?}")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    for key in path.split('.') {
        if key.is_empty() {
            return Err(Error::Config(format!("empty key in {path:?}")));
        }
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        node = node.as_object_mut().unwrap().entry(key.to_string()).or_insert(Value::Null);
    }
    *node = value;
    Ok(())
}

impl Config {
    /// Defaults, then `file`, then `overrides` in order.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut tree = serde_json::to_value(Config::default())?;
        if let Some(p) = file {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            if !v.is_object() {
                return Err(Error::Config(format!("{}: config must be a JSON object", p.display())));
            }
            merge(&mut tree, v);
        }
        for o in overrides {
            set_path(&mut tree, o)?;
        }
        let cfg: Config = serde_json::from_value(tree).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline.planner.validate()?;
        self.pipeline.speed.validate()?;
        self.identify.params.validate()?;
        if !(self.simulate.dt > 0.0) || !(self.identify.dt > 0.0) || !(self.pipeline.track.dt > 0.0) {
            return Err(Error::Config("time steps must be > 0".into()));
        }
        if !(self.pipeline.speed_scale > 0.0) {
            return Err(Error::Config("speed_scale must be > 0".into()));
        }
        Ok(())
    }

    pub fn vehicle(&self) -> Result<VehicleModel> {
        match &self.vehicle {
            Some(p) => VehicleModel::load(p),
            None => Ok(VehicleModel::pickup()),
        }
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn merge_is_deep() {
        let mut a = json!({"x": 1, "o": {"p": 1, "q": 2}});
        merge(&mut a, json!({"o": {"q": 3, "r": 4}, "y": [1]}));
        assert_eq!(a, json!({"x": 1, "o": {"p": 1, "q": 3, "r": 4}, "y": [1]}));
    }

    #[test]
    fn set_path_parses_json_or_string() {
        let mut a = json!({});
        set_path(&mut a, "a.b=0.5").unwrap();
        set_path(&mut a, "a.c=mud").unwrap();
        set_path(&mut a, "d=[1,2]").unwrap();
        assert_eq!(a, json!({"a": {"b": 0.5, "c": "mud"}, "d": [1, 2]}));
        assert!(set_path(&mut a, "novalue").is_err());
    }

    #[test]
    fn precedence_is_cli_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("c.json");
        std::fs::write(&f, r#"{"seed": 5, "pipeline": {"planner": {"w_t": 2.0}}, "plan": {"goal": [3, 4]}}"#).unwrap();
        let c = Config::resolve(Some(&f), &["seed=9".into()]).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.pipeline.planner.w_t, 2.0);
        assert_eq!(c.pipeline.planner.w_d, 1.0);
        assert_eq!(c.plan.goal, (3, 4));
        assert_eq!(c.plan.start, PlanConfig::default().start);
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = Config::resolve(None, &[]).unwrap();
        assert_eq!(c, Config::default());
        let back: Config = serde_json::from_str(&c.to_json_pretty().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(Config::resolve(None, &["pipeline.speed.f_th=-1".into()]).is_err());
        assert!(Config::resolve(None, &["plan.goal=\"x\"".into()]).is_err());
    }
}
