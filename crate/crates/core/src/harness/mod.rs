//! Synthetic worlds, drive logs, closed-loop tracking and benchmark metrics.
mod eval;
mod log;
mod track;
mod world;

pub use eval::{
    draw_suite, evaluate, failure_counts, plan_task, random_tasks, run_on_map, run_suite, run_task, with_keep_out, Metrics, PipelineConfig, PlanOutput, Task, TaskSuite, Variant,
    WorldRef,
};
pub use log::{gen_log, LogNoise, Schedule};
pub use track::{ackermann, pose_on_ground, ride_height, start_state, track, Failure, Ground, RunResult, TrackGains, TrackParams, TrackSample};
pub use world::{gen_world, preset_types, GridConfig, Heightfield, Hill, Region, TerrainType, World, WorldSpec};
