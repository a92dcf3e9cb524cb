//! Per-run metrics: coverage over time, distances, endurance accounting and
//! mission-level outcomes.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::geom::Pose;

/// One coverage sample: time plus union / ground / aerial fractions of the
/// ground-truth free volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageSample {
    pub t: f64,
    pub union: f64,
    pub ground: f64,
    pub aerial: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metrics {
    pub coverage: Vec<CoverageSample>,
    pub final_coverage: f64,
    pub ground_distance: f64,
    pub aerial_distance: f64,
    pub ground_elapsed: f64,
    pub aerial_elapsed: f64,
    pub time_to_completion: Option<f64>,
    pub deployment_time: Option<f64>,
    pub deployment_pose: Option<Pose>,
    pub coloc_converged: Option<bool>,
    pub coloc_residual: Option<f64>,
    pub coloc_iterations: Option<u32>,
    /// 1 - |symmetric difference| / |union| over the two agents' feature
    /// point sets at mission end; 1.0 means point-set identical.
    pub map_consistency: Option<f64>,
    pub deploy_count: u32,
    pub completed: bool,
    pub fault: bool,
    pub cap_exceeded: bool,
}

impl Metrics {
    /// First time the union coverage reaches `fraction`.
    pub fn time_to_coverage(&self, fraction: f64) -> Option<f64> {
        self.coverage.iter().find(|s| s.union >= fraction).map(|s| s.t)
    }

    /// Key=value summary, one entry per line, stable order.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("final_coverage", format_f64(self.final_coverage));
        kv("ground_distance_m", format_f64(self.ground_distance));
        kv("aerial_distance_m", format_f64(self.aerial_distance));
        kv("ground_elapsed_s", format_f64(self.ground_elapsed));
        kv("aerial_elapsed_s", format_f64(self.aerial_elapsed));
        kv(
            "time_to_completion_s",
            self.time_to_completion.map_or(String::from("none"), format_f64),
        );
        kv("deploy_count", alloc::format!("{}", self.deploy_count));
        kv("deployment_time_s", self.deployment_time.map_or(String::from("none"), format_f64));
        kv(
            "deployment_pose",
            self.deployment_pose.map_or(String::from("none"), |p| {
                alloc::format!("({},{},{})", format_f64(p.position.x), format_f64(p.position.y), format_f64(p.position.z))
            }),
        );
        kv(
            "coloc_converged",
            self.coloc_converged.map_or(String::from("none"), |b| String::from(if b { "true" } else { "false" })),
        );
        kv("coloc_residual_m", self.coloc_residual.map_or(String::from("none"), format_f64));
        kv(
            "coloc_iterations",
            self.coloc_iterations.map_or(String::from("none"), |i| alloc::format!("{i}")),
        );
        kv("map_consistency", self.map_consistency.map_or(String::from("none"), format_f64));
        kv("completed", String::from(if self.completed { "true" } else { "false" }));
        kv("fault", String::from(if self.fault { "true" } else { "false" }));
        kv("cap_exceeded", String::from(if self.cap_exceeded { "true" } else { "false" }));
        out
    }
}

pub fn format_f64(v: f64) -> String {
    alloc::format!("{v:.3}")
}
