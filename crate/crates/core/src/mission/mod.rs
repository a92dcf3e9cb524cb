//! Two-agent discrete-time mission executive.
//!
//! Drives both agents through sense / integrate / plan cycles, runs the
//! marsupial deployment state machine (region selection, handoff,
//! co-localization, takeoff), accounts endurance with auto-homing, carries
//! inter-agent traffic over a latency/loss channel, and records a
//! deterministic event log plus metrics. A scenario and a seed fully
//! determine every byte of the output.

pub mod channel;
pub mod metrics;

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::features::{extract_features, FeatureParams};
use crate::geom::{Aabb, Pose, Vec3};
use crate::graph::{ExplorationGraph, GraphKind, VertexId, VolumetricGain};
use crate::grid::{CellState, VoxelGrid};
use crate::mapstore::UnifiedMap;
use crate::marsupial::{
    decode_handoff, encode_handoff, identify_deployment_regions, make_handoff, modulate_aerial_gain,
    select_deployment, update_deployment_graph, DeploymentGraph, DeploymentRegion, HandoffPackage,
};
use crate::math;
use crate::planner::{
    auto_home, best_local_path, build_local_graph, detect_frontiers, evaluate_graph_gains, try_insert_global,
    update_global_graph, Frontier, PlannerParams,
};
use crate::registration::colocalize;
use crate::robot::{RobotKind, RobotSpec};
use crate::scenario::{DeployPolicy, ScenarioError, ScenarioSpec, TeamConfig};
use crate::sensing::{integrate_scan, raycast_scan, ScanPointCloud};
use crate::traverse::{stand_at, traversable, TraverseOptions};

pub use channel::{AgentId, Channel, Message};
pub use metrics::{CoverageSample, Metrics};

const EPS: f64 = 1e-12;
/// Tolerance on "agent is at its return pose": twice the voxel resolution.
const SYNC_SESSION_TIMEOUT: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentMode {
    Carried,
    Exploring,
    MovingToDeploy,
    Deploying,
    Colocalizing,
    Homing,
    Landed,
    Done,
    Fault,
}

impl AgentMode {
    pub fn name(self) -> &'static str {
        match self {
            AgentMode::Carried => "carried",
            AgentMode::Exploring => "exploring",
            AgentMode::MovingToDeploy => "moving_to_deploy",
            AgentMode::Deploying => "deploying",
            AgentMode::Colocalizing => "colocalizing",
            AgentMode::Homing => "homing",
            AgentMode::Landed => "landed",
            AgentMode::Done => "done",
            AgentMode::Fault => "fault",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, AgentMode::Landed | AgentMode::Done | AgentMode::Fault)
    }

    fn consumes_endurance(self) -> bool {
        matches!(
            self,
            AgentMode::Exploring
                | AgentMode::MovingToDeploy
                | AgentMode::Deploying
                | AgentMode::Colocalizing
                | AgentMode::Homing
        )
    }
}

/// Full per-agent state: platform, pose, maps, graphs, mode and the runtime
/// bookkeeping of the executive.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub id: AgentId,
    pub robot: RobotSpec,
    pub planner: PlannerParams,
    pub pose: Pose,
    pub map: VoxelGrid,
    pub features: UnifiedMap,
    pub global: ExplorationGraph,
    pub mode: AgentMode,
    pub elapsed: f64,
    pub distance_traveled: f64,
    /// Designated return pose (mission start for the carrier, deployment
    /// point for the passenger).
    pub home_pose: Pose,

    path: Vec<Pose>,
    path_next: usize,
    rng: ChaCha8Rng,
    visited_frontiers: BTreeSet<VertexId>,

    // Carrier-side marsupial state.
    pub deployment_graph: DeploymentGraph,
    pub deployed: bool,
    pending_region: Option<DeploymentRegion>,
    handoff_bytes: Option<Vec<u8>>,
    handoff_sent_at: Option<f64>,
    handoff_acked: bool,
    ceded_zones: Vec<Vec3>,

    // Passenger-side state.
    pub handoff: Option<HandoffPackage>,
    coloc_attempts: u32,
}

impl AgentState {
    fn new(
        id: AgentId,
        robot: RobotSpec,
        planner: PlannerParams,
        pose: Pose,
        mode: AgentMode,
        world: &VoxelGrid,
        features: UnifiedMap,
        seed_stream: u64,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(seed_stream);
        let kind = match id {
            AgentId::Ground => GraphKind::GlobalGround,
            AgentId::Aerial => GraphKind::GlobalAerial,
        };
        Self {
            id,
            robot,
            planner,
            pose,
            map: world.blank_copy(),
            features,
            global: ExplorationGraph::new(kind),
            mode,
            elapsed: 0.0,
            distance_traveled: 0.0,
            home_pose: pose,
            path: Vec::new(),
            path_next: 0,
            rng,
            visited_frontiers: BTreeSet::new(),
            deployment_graph: DeploymentGraph::new(),
            deployed: false,
            pending_region: None,
            handoff_bytes: None,
            handoff_sent_at: None,
            handoff_acked: false,
            ceded_zones: Vec::new(),
            handoff: None,
            coloc_attempts: 0,
        }
    }

    fn init_home_vertex(&mut self) {
        let id = self.global.add_vertex(self.pose);
        self.global.vertex_mut(id).home = true;
        self.home_pose = self.pose;
    }

    fn current_vertex(&self) -> Option<VertexId> {
        self.global.nearest_vertex(&self.pose.position)
    }
}

/// The complete mission state; the simulation is a fold of [`MissionState::step`].
#[derive(Debug, Clone)]
pub struct MissionState {
    pub scenario: ScenarioSpec,
    pub seed: u64,
    pub time: f64,
    pub ground: Option<AgentState>,
    pub aerial: Option<AgentState>,
    pub channel: Channel,
    pub events: Vec<String>,

    rng: ChaCha8Rng,
    truth_free: Vec<bool>,
    union_observed: Vec<bool>,
    denominator: usize,
    union_count: usize,
    ground_count: usize,
    aerial_count: usize,
    coverage: Vec<CoverageSample>,

    deploy_count: u32,
    deployment_time: Option<f64>,
    deployment_pose: Option<Pose>,
    coloc_result: Option<(bool, f64, u32)>,
    odom_drift: Vec3,
    sync_last_attempt: f64,
    sync_active_since: Option<f64>,
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct MissionOutcome {
    pub metrics: Metrics,
    pub events: Vec<String>,
    pub state: MissionState,
}

impl MissionState {
    pub fn new(scenario: ScenarioSpec, seed: u64) -> Self {
        let world = &scenario.world;
        let cell_count = world.cell_count();
        let [nx, ny, _] = world.dims();
        let mut truth_free = alloc::vec![false; cell_count];
        let mut denominator = 0usize;
        for (c, s) in world.iter() {
            if s == CellState::Free {
                truth_free[(c[2] * ny + c[1]) * nx + c[0]] = true;
                denominator += 1;
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0);
        let start = scenario.start_pose;
        let anchor = start.position;
        let team = scenario.config.mission.team;

        let ground = (team != TeamConfig::AerialOnly).then(|| {
            let mut g = AgentState::new(
                AgentId::Ground,
                scenario.ground,
                scenario.config.planner_ground,
                start,
                AgentMode::Exploring,
                world,
                UnifiedMap::new(scenario.config.mission.block_edge, world.resolution(), anchor, 0),
                1,
                seed,
            );
            g.init_home_vertex();
            g
        });
        let aerial = (team != TeamConfig::GroundOnly).then(|| {
            let (pose, mode) = match team {
                TeamConfig::AerialOnly => (
                    Pose::new(start.position + Vec3::new(0.0, 0.0, 0.5), start.yaw),
                    AgentMode::Exploring,
                ),
                _ => (scenario.extrinsics.apply(&start), AgentMode::Carried),
            };
            let mut a = AgentState::new(
                AgentId::Aerial,
                scenario.aerial,
                scenario.config.planner_aerial,
                pose,
                mode,
                world,
                UnifiedMap::new(scenario.config.mission.block_edge, world.resolution(), anchor, 1),
                2,
                seed,
            );
            if mode == AgentMode::Exploring {
                a.init_home_vertex();
            }
            a
        });

        let cfg = &scenario.config.mission;
        let mut st = Self {
            channel: Channel::new(cfg.channel_latency, cfg.channel_drop),
            scenario,
            seed,
            time: 0.0,
            ground,
            aerial,
            events: Vec::new(),
            rng,
            truth_free,
            union_observed: alloc::vec![false; cell_count],
            denominator,
            union_count: 0,
            ground_count: 0,
            aerial_count: 0,
            coverage: Vec::new(),
            deploy_count: 0,
            deployment_time: None,
            deployment_pose: None,
            coloc_result: None,
            odom_drift: Vec3::zeros(),
            sync_last_attempt: -1e9,
            sync_active_since: None,
        };
        let team_name = match st.scenario.config.mission.team {
            TeamConfig::Marsupial => "marsupial",
            TeamConfig::GroundOnly => "ground_only",
            TeamConfig::AerialOnly => "aerial_only",
        };
        st.log(
            "mission",
            "start",
            &alloc::format!(" seed={} team={} policy={}", st.seed, team_name, policy_name(st.scenario.config.mission.policy)),
        );
        // Initial scans so the first planning cycles see a map.
        if let Some(mut a) = st.ground.take() {
            st.waypoint_sense(&mut a);
            st.ground = Some(a);
        }
        if let Some(mut a) = st.aerial.take() {
            if a.mode == AgentMode::Exploring {
                st.waypoint_sense(&mut a);
            }
            st.aerial = Some(a);
        }
        st
    }

    fn log(&mut self, agent: &str, event: &str, detail: &str) {
        self.events
            .push(alloc::format!("t={:.3} agent={} event={}{}", self.time, agent, event, detail));
    }

    pub fn finished(&self) -> bool {
        let ground_done = self.ground.as_ref().map_or(true, |g| g.mode.is_terminal());
        let aerial_done = self.aerial.as_ref().map_or(true, |a| {
            a.mode.is_terminal() || (a.mode == AgentMode::Carried && ground_done)
        });
        ground_done && aerial_done
    }

    /// Advance the simulation by one time step.
    pub fn step(&mut self) {
        for (to, msg) in self.channel.deliver(self.time) {
            self.handle_message(to, msg);
        }
        if let Some(mut a) = self.ground.take() {
            self.update_agent(&mut a);
            self.ground = Some(a);
        }
        if let Some(mut a) = self.aerial.take() {
            self.update_agent(&mut a);
            self.aerial = Some(a);
        }
        self.maybe_sync();
        if self.scenario.config.mission.odom_sigma > 0.0 {
            let s = self.scenario.config.mission.odom_sigma;
            let (gx, gy) = (self.gauss(), self.gauss());
            self.odom_drift += Vec3::new(gx * s, gy * s, 0.0);
        }
        self.time += self.scenario.config.mission.dt;
    }

    // -----------------------------------------------------------------
    // Agent update
    // -----------------------------------------------------------------

    fn update_agent(&mut self, a: &mut AgentState) {
        match a.mode {
            AgentMode::Carried => {
                if let Some(g) = &self.ground {
                    a.pose = self.scenario.extrinsics.apply(&g.pose);
                }
            }
            AgentMode::Exploring | AgentMode::MovingToDeploy | AgentMode::Homing => self.advance_along_path(a),
            AgentMode::Deploying => self.deploying_step(a),
            AgentMode::Colocalizing => self.coloc_step(a),
            AgentMode::Landed | AgentMode::Done | AgentMode::Fault => {}
        }
        if a.mode.consumes_endurance() {
            a.elapsed += self.scenario.config.mission.dt;
            if a.elapsed > a.robot.endurance + EPS {
                self.set_mode(a, AgentMode::Fault);
                self.log(a.id.name(), "fault", " reason=endurance_exhausted");
            }
        }
    }

    fn set_mode(&mut self, a: &mut AgentState, mode: AgentMode) {
        if a.mode != mode {
            self.log(
                a.id.name(),
                "mode",
                &alloc::format!(" from={} to={} pos={}", a.mode.name(), mode.name(), fmt_pos(&a.pose.position)),
            );
            a.mode = mode;
        }
    }

    fn advance_along_path(&mut self, a: &mut AgentState) {
        let dt = self.scenario.config.mission.dt;
        let mut budget = a.robot.nominal_speed * dt;
        loop {
            if a.path_next >= a.path.len() {
                self.on_path_complete(a);
                break;
            }
            let target = a.path[a.path_next].position;
            let delta = target - a.pose.position;
            let d = delta.norm();
            if d <= budget + EPS {
                let yaw = if d > 1e-9 { math::atan2(delta.y, delta.x) } else { a.pose.yaw };
                a.pose = Pose::new(target, yaw);
                a.distance_traveled += d;
                budget -= d;
                a.path_next += 1;
                let mode_before = a.mode;
                self.waypoint_sense(a);
                self.check_endurance_homing(a);
                if a.mode != mode_before {
                    break;
                }
                if a.path_next >= a.path.len() {
                    self.on_path_complete(a);
                    break;
                }
                if budget <= EPS {
                    break;
                }
            } else {
                let dir = delta / d;
                a.pose = Pose::new(a.pose.position + dir * budget, math::atan2(dir.y, dir.x));
                a.distance_traveled += budget;
                break;
            }
        }
    }

    /// Scan, integrate, extract features, track coverage.
    fn waypoint_sense(&mut self, a: &mut AgentState) {
        let Ok(mut scan) = raycast_scan(&self.scenario.world, &a.pose, &a.robot.sensor) else {
            self.set_mode(a, AgentMode::Fault);
            self.log(a.id.name(), "fault", " reason=pose_out_of_bounds");
            return;
        };
        if self.scenario.config.mission.range_jitter_sigma > 0.0 {
            self.jitter_scan(&mut scan);
        }
        let integ = integrate_scan(&mut a.map, &a.pose, &scan);
        self.note_observed(a.id, &integ.newly_observed_cells);
        let feats = extract_features(&scan, &a.pose, &FeatureParams::default());
        a.features.insert_points(&feats);
        self.push_coverage_sample();
        let newly = integ.newly_observed();
        let cov = self.union_fraction();
        self.log(
            a.id.name(),
            "scan",
            &alloc::format!(" pos={} newly={} coverage={:.4}", fmt_pos(&a.pose.position), newly, cov),
        );
    }

    fn jitter_scan(&mut self, scan: &mut ScanPointCloud) {
        let sigma = self.scenario.config.mission.range_jitter_sigma;
        for r in scan.returns.iter_mut() {
            if r.hit {
                let d = r.point.norm();
                if d > 1e-9 {
                    let noisy = (d + self.gauss() * sigma).max(0.05);
                    r.point *= noisy / d;
                }
            }
        }
    }

    fn gauss(&mut self) -> f64 {
        use rand::Rng;
        let u1: f64 = self.rng.random_range(1e-12..1.0);
        let u2: f64 = self.rng.random_range(0.0..1.0);
        math::sqrt(-2.0 * libm::log(u1)) * math::cos(math::TAU * u2)
    }

    /// Switch to homing when the remaining endurance approaches the
    /// estimated return time.
    fn check_endurance_homing(&mut self, a: &mut AgentState) {
        if !matches!(a.mode, AgentMode::Exploring | AgentMode::MovingToDeploy) {
            return;
        }
        let Some(cv) = a.current_vertex() else { return };
        let Ok((_, len)) = auto_home(&a.global, cv) else { return };
        let approach = (a.global.vertex(cv).pose.position - a.pose.position).norm();
        let est = (len + approach) / a.robot.nominal_speed;
        let remaining = a.robot.endurance - a.elapsed;
        if remaining <= self.scenario.config.mission.homing_safety * est {
            self.log(
                a.id.name(),
                "homing_start",
                &alloc::format!(" reason=endurance remaining={:.1} est_return={:.1}", remaining, est),
            );
            self.start_homing(a);
        }
    }

    fn start_homing(&mut self, a: &mut AgentState) {
        let Some(cv) = a.current_vertex() else {
            self.set_mode(a, AgentMode::Fault);
            self.log(a.id.name(), "fault", " reason=no_global_graph");
            return;
        };
        match auto_home(&a.global, cv) {
            Ok((ids, _len)) => {
                let mut poses: Vec<Pose> = ids.iter().map(|id| a.global.vertex(*id).pose).collect();
                // Final exact leg to the designated return pose.
                if poses.last().map_or(true, |p| p.distance(&a.home_pose) > 1e-9) {
                    poses.push(a.home_pose);
                }
                a.path = poses;
                a.path_next = 0;
                self.set_mode(a, AgentMode::Homing);
            }
            Err(e) => {
                self.set_mode(a, AgentMode::Fault);
                self.log(a.id.name(), "fault", &alloc::format!(" reason=homing_failed detail={e}"));
            }
        }
    }

    fn on_path_complete(&mut self, a: &mut AgentState) {
        match a.mode {
            AgentMode::Homing => {
                let terminal = match a.id {
                    AgentId::Ground => AgentMode::Done,
                    AgentId::Aerial => AgentMode::Landed,
                };
                self.set_mode(a, terminal);
                self.log(
                    a.id.name(),
                    if terminal == AgentMode::Done { "done" } else { "landed" },
                    &alloc::format!(" pos={}", fmt_pos(&a.pose.position)),
                );
            }
            AgentMode::MovingToDeploy => {
                a.deployed = true;
                self.set_mode(a, AgentMode::Deploying);
            }
            AgentMode::Exploring => self.plan_cycle(a),
            _ => {}
        }
    }

    // -----------------------------------------------------------------
    // Planning
    // -----------------------------------------------------------------

    fn plan_cycle(&mut self, a: &mut AgentState) {
        let params = a.planner;
        let cfg_m = self.scenario.config.marsupial;
        let aerial_clip: Option<Aabb> = a.handoff.as_ref().map(|h| h.exploration_bbox);
        let mut gain_clip = Aabb::centered(&a.pose.position, &params.local_bbox);
        if let Some(hb) = &aerial_clip {
            gain_clip = gain_clip.intersection(hb);
        }

        let built = build_local_graph(&a.map, &a.pose, &a.robot, &params, &mut a.rng, aerial_clip.as_ref());
        let (local, best_ids, best_gain) = match built {
            Ok(mut local) => {
                let h_opt = a.handoff.as_ref();
                let scorer = move |g: &VolumetricGain, p: &Pose| match h_opt {
                    Some(h) => modulate_aerial_gain(g, p, h, &cfg_m),
                    None => g.volume,
                };
                evaluate_graph_gains(&mut local, &a.map, &a.robot.sensor, &params, Some(&gain_clip), &scorer);
                let (ids, gain) = best_local_path(&local, &params);
                (local, ids, gain)
            }
            Err(e) => {
                self.log(a.id.name(), "plan_degenerate", &alloc::format!(" detail={e}"));
                let kind = match a.robot.kind {
                    RobotKind::Ground => GraphKind::LocalGround,
                    RobotKind::Aerial => GraphKind::LocalAerial,
                };
                (ExplorationGraph::new(kind), Vec::new(), 0.0)
            }
        };

        let path_poses: Vec<Pose> = best_ids.iter().map(|id| local.vertex(*id).pose).collect();
        let path_len = polyline_len(&path_poses);
        let complete = best_gain < params.completion_gain_threshold || path_len < a.map.resolution() * 0.5;
        self.log(
            a.id.name(),
            "plan",
            &alloc::format!(
                " vertices={} best_gain={:.3} path_len={:.2} complete={}",
                local.len(),
                best_gain,
                path_len,
                complete
            ),
        );

        let executed: Vec<Pose> = if complete { alloc::vec![a.pose] } else { path_poses.clone() };
        update_global_graph(&mut a.global, &local, &executed, &a.map, &a.robot, &params);
        if a.id == AgentId::Ground && !a.deployed && self.scenario.config.mission.team == TeamConfig::Marsupial {
            update_deployment_graph(
                &mut a.deployment_graph,
                &a.map,
                &self.scenario.aerial.sensor,
                &executed,
                &a.robot,
                &cfg_m,
                &mut a.rng,
            );
        }

        if !complete {
            a.path = path_poses;
            a.path_next = 1;
            return;
        }
        self.completion_branch(a);
    }

    fn completion_branch(&mut self, a: &mut AgentState) {
        let params = a.planner;
        let cfg = self.scenario.config.mission;
        let cfg_m = self.scenario.config.marsupial;
        let current = try_insert_global(&mut a.global, &a.pose, &a.map, &a.robot, &params)
            .or_else(|| a.current_vertex())
            .expect("global graph has at least the home vertex");

        let frontiers = {
            let h_opt = a.handoff.as_ref();
            let scorer = move |g: &VolumetricGain, p: &Pose| match h_opt {
                Some(h) => modulate_aerial_gain(g, p, h, &cfg_m),
                None => g.volume,
            };
            detect_frontiers(&mut a.global, &a.map, &a.robot.sensor, &params, &a.pose, &scorer)
        };
        let pursuable: Vec<Frontier> = frontiers
            .into_iter()
            .filter(|f| {
                if a.visited_frontiers.contains(&f.id) {
                    return false;
                }
                let vp = a.global.vertex(f.id).pose.position;
                !a.ceded_zones.iter().any(|z| {
                    (z - f.unknown_centroid).norm() < cfg.deconflict_radius || (z - vp).norm() < cfg.deconflict_radius
                })
            })
            .collect();

        // Deployment gate: carrier with the passenger still aboard, at local
        // completion, when its own reachable work is exhausted or splits
        // into diverging directions.
        if a.id == AgentId::Ground && !a.deployed && cfg.team == TeamConfig::Marsupial {
            let clusters = cluster_frontiers(&pursuable, cfg.divergence_dist);
            if clusters.len() != 1 {
                let exclusion: Vec<Pose> = if clusters.is_empty() {
                    Vec::new()
                } else {
                    // Retain the top-priority cluster for the carrier; cede
                    // the rest to the passenger.
                    clusters[0]
                        .iter()
                        .map(|&i| a.global.vertex(pursuable[i].id).pose)
                        .collect()
                };
                let regions = identify_deployment_regions(
                    &a.deployment_graph,
                    &a.pose,
                    &exclusion,
                    &a.global,
                    params.completion_gain_threshold,
                    &cfg_m,
                );
                if let Some((region, ids, len)) = select_deployment(&a.global, &regions, current) {
                    self.log(
                        a.id.name(),
                        "deploy_select",
                        &alloc::format!(
                            " center={} members={} gain={:.2} path_len={:.2}",
                            fmt_pos(&region.center),
                            region.member_ids.len(),
                            region.aggregate_gain,
                            len
                        ),
                    );
                    let mut poses: Vec<Pose> = ids.iter().map(|id| a.global.vertex(*id).pose).collect();
                    // Walk the final leg to the member vertex nearest the
                    // region center when directly reachable.
                    let member = region
                        .member_ids
                        .iter()
                        .map(|m| a.deployment_graph.graph.vertex(*m).pose)
                        .min_by(|x, y| {
                            (x.position - region.center)
                                .norm()
                                .partial_cmp(&(y.position - region.center).norm())
                                .unwrap_or(core::cmp::Ordering::Equal)
                        });
                    if let Some(member) = member {
                        let from = poses.last().copied().unwrap_or(a.pose);
                        if traversable(&a.map, &from, &member, &a.robot, &TraverseOptions::default()) {
                            poses.push(member);
                        }
                    }
                    a.ceded_zones.push(region.center);
                    a.pending_region = Some(region);
                    a.path = poses;
                    a.path_next = 0;
                    self.set_mode(a, AgentMode::MovingToDeploy);
                    return;
                }
            }
        }

        if let Some(f) = pursuable.first() {
            self.log(
                a.id.name(),
                "frontier",
                &alloc::format!(
                    " vertex={} score={:.3} pos={}",
                    f.id.0,
                    f.score,
                    fmt_pos(&a.global.vertex(f.id).pose.position)
                ),
            );
            a.visited_frontiers.insert(f.id);
            a.path = self.frontier_path(a, f, current);
            a.path_next = 0;
            return;
        }

        self.log(a.id.name(), "exploration_complete", "");
        self.start_homing(a);
    }

    /// Shortest path to a frontier plus an extension toward its unknown
    /// volume, so the robot walks far enough for the local stage to see the
    /// gain on arrival.
    fn frontier_path(&mut self, a: &mut AgentState, f: &Frontier, current: VertexId) -> Vec<Pose> {
        let mut poses: Vec<Pose> = match a.global.shortest_path(current, f.id) {
            Ok((ids, _)) if !ids.is_empty() => ids.iter().map(|id| a.global.vertex(*id).pose).collect(),
            _ => alloc::vec![a.global.vertex(f.id).pose],
        };
        let opts = TraverseOptions::default();
        let hop = (a.planner.edge_radius / 2.0).max(a.map.resolution());
        let steps = (self.scenario.config.mission.frontier_extension / hop) as usize;
        let anchor = *poses.last().expect("non-empty");
        let mut dir = f.unknown_centroid - anchor.position;
        if a.robot.kind == RobotKind::Ground {
            dir.z = 0.0;
        }
        if dir.norm() < 1e-6 {
            return poses;
        }
        dir = dir.normalize();
        let bbox = a
            .handoff
            .as_ref()
            .map(|h| h.exploration_bbox)
            .unwrap_or(self.scenario.global_bbox);
        let mut prev = anchor;
        for s in 1..=steps {
            let raw = anchor.position + dir * (s as f64 * hop);
            let candidate = match a.robot.kind {
                RobotKind::Ground => match stand_at(&a.map, raw.x, raw.y, prev.position.z, &opts) {
                    Some(z) => Pose::at(raw.x, raw.y, z, 0.0),
                    None => break,
                },
                RobotKind::Aerial => Pose::new(raw, 0.0),
            };
            if !bbox.contains(&candidate.position) {
                break;
            }
            if !traversable(&a.map, &prev, &candidate, &a.robot, &opts) {
                break;
            }
            poses.push(candidate);
            prev = candidate;
        }
        poses
    }

    // -----------------------------------------------------------------
    // Deployment / co-localization
    // -----------------------------------------------------------------

    fn deploying_step(&mut self, a: &mut AgentState) {
        let cfg = self.scenario.config.mission;
        if a.handoff_bytes.is_none() {
            let pkg = make_handoff(
                &a.deployment_graph,
                &a.features,
                &a.pose,
                &self.scenario.global_bbox,
                cfg.direction,
            );
            let bytes = encode_handoff(&pkg);
            self.deploy_count += 1;
            self.deployment_time = Some(self.time);
            self.deployment_pose = Some(a.pose);
            let center = a.pending_region.as_ref().map(|r| r.center).unwrap_or(a.pose.position);
            self.log(
                a.id.name(),
                "deploy",
                &alloc::format!(" pos={} region_center={} bytes={}", fmt_pos(&a.pose.position), fmt_pos(&center), bytes.len()),
            );
            a.handoff_bytes = Some(bytes);
        }
        if !a.handoff_acked {
            let due = a
                .handoff_sent_at
                .map_or(true, |t| self.time - t >= cfg.handoff_retry - EPS);
            if due {
                let bytes = a.handoff_bytes.clone().expect("created above");
                let n = bytes.len();
                let sent = self.channel.send(self.time, AgentId::Aerial, Message::Handoff(bytes), &mut self.rng);
                self.log(
                    a.id.name(),
                    if sent { "handoff_sent" } else { "handoff_dropped" },
                    &alloc::format!(" bytes={n}"),
                );
                a.handoff_sent_at = Some(self.time);
            }
            return;
        }
        // Wait for the passenger to be airborne (or to have faulted).
        let aerial_mode = self.aerial.as_ref().map(|x| x.mode);
        let airborne_or_over = matches!(
            aerial_mode,
            Some(AgentMode::Exploring | AgentMode::Homing | AgentMode::Landed | AgentMode::Fault)
        );
        if !airborne_or_over {
            return;
        }
        match cfg.policy {
            DeployPolicy::Continue => {
                a.path.clear();
                a.path_next = 0;
                self.set_mode(a, AgentMode::Exploring);
            }
            DeployPolicy::Home => self.start_homing(a),
            DeployPolicy::Wait => {
                if matches!(aerial_mode, Some(AgentMode::Landed | AgentMode::Fault)) {
                    self.start_homing(a);
                }
            }
        }
    }

    fn coloc_step(&mut self, a: &mut AgentState) {
        let cfg = self.scenario.config;
        a.coloc_attempts += 1;
        let Ok(scan) = raycast_scan(&self.scenario.world, &a.pose, &a.robot.sensor) else {
            self.set_mode(a, AgentMode::Fault);
            return;
        };
        let reported_ground = match &self.ground {
            Some(g) => Pose::new(g.pose.position + self.odom_drift, g.pose.yaw),
            None => a.pose,
        };
        let res = colocalize(&scan, &a.features, &reported_ground, &self.scenario.extrinsics, &cfg.registration);
        self.coloc_result = Some((res.converged, res.residual, res.iterations_used));
        self.log(
            a.id.name(),
            "coloc",
            &alloc::format!(
                " attempt={} converged={} iterations={} residual={:.4}",
                a.coloc_attempts,
                res.converged,
                res.iterations_used,
                res.residual
            ),
        );
        if res.converged {
            a.init_home_vertex();
            self.log(a.id.name(), "takeoff", &alloc::format!(" pos={}", fmt_pos(&a.pose.position)));
            self.set_mode(a, AgentMode::Exploring);
            self.waypoint_sense(a);
        } else if a.coloc_attempts >= cfg.mission.coloc_retries {
            self.set_mode(a, AgentMode::Fault);
            self.log(a.id.name(), "fault", " reason=colocalization_failed");
        }
    }

    // -----------------------------------------------------------------
    // Messaging
    // -----------------------------------------------------------------

    fn handle_message(&mut self, to: AgentId, msg: Message) {
        match (to, msg) {
            (AgentId::Aerial, Message::Handoff(bytes)) => {
                let Some(mut a) = self.aerial.take() else { return };
                match decode_handoff(&bytes) {
                    Ok(pkg) if a.mode == AgentMode::Carried => {
                        let _ = a.features.merge_blocks(&pkg.blocks);
                        a.handoff = Some(pkg);
                        self.log(a.id.name(), "handoff_received", &alloc::format!(" bytes={}", bytes.len()));
                        let sent = self.channel.send(self.time, AgentId::Ground, Message::HandoffAck, &mut self.rng);
                        if !sent {
                            self.log(a.id.name(), "handoff_ack_dropped", "");
                        }
                        self.set_mode(&mut a, AgentMode::Colocalizing);
                    }
                    Ok(_) => {
                        // Duplicate delivery after a lost ack: just re-ack.
                        let _ = self.channel.send(self.time, AgentId::Ground, Message::HandoffAck, &mut self.rng);
                    }
                    Err(e) => self.log(a.id.name(), "handoff_malformed", &alloc::format!(" detail={e}")),
                }
                self.aerial = Some(a);
            }
            (AgentId::Ground, Message::HandoffAck) => {
                if let Some(g) = self.ground.as_mut() {
                    g.handoff_acked = true;
                }
                self.log("ground", "handoff_ack", "");
            }
            (to, Message::SyncRequest(summary)) => {
                let Some(me) = self.take_agent(to) else { return };
                match me.features.diff_blocks(&summary) {
                    Ok(hashes) => {
                        let blocks = me.features.payloads(hashes.iter().copied());
                        let done = blocks.is_empty();
                        let reply = Message::SyncBlocks {
                            blocks,
                            summary: me.features.summary(),
                            done,
                        };
                        let n = hashes.len();
                        let _ = self.channel.send(self.time, other(to), reply, &mut self.rng);
                        self.log(to.name(), "sync_reply", &alloc::format!(" blocks={n}"));
                    }
                    Err(e) => self.log(to.name(), "sync_error", &alloc::format!(" detail={e}")),
                }
                self.put_agent(to, me);
            }
            (to, Message::SyncBlocks { blocks, summary, done }) => {
                let Some(mut me) = self.take_agent(to) else { return };
                let merged = me.features.merge_blocks(&blocks).unwrap_or(0);
                match me.features.diff_blocks(&summary) {
                    Ok(d) if d.is_empty() && done => {
                        self.sync_active_since = None;
                        self.log(to.name(), "sync_done", &alloc::format!(" merged={merged}"));
                    }
                    Ok(d) => {
                        let reply = Message::SyncBlocks {
                            blocks: me.features.payloads(d.iter().copied()),
                            summary: me.features.summary(),
                            done: d.is_empty(),
                        };
                        let _ = self.channel.send(self.time, other(to), reply, &mut self.rng);
                        self.log(to.name(), "sync_continue", &alloc::format!(" merged={merged} sending={}", d.len()));
                    }
                    Err(e) => self.log(to.name(), "sync_error", &alloc::format!(" detail={e}")),
                }
                self.put_agent(to, me);
            }
            _ => {}
        }
    }

    fn take_agent(&mut self, id: AgentId) -> Option<AgentState> {
        match id {
            AgentId::Ground => self.ground.take(),
            AgentId::Aerial => self.aerial.take(),
        }
    }

    fn put_agent(&mut self, id: AgentId, a: AgentState) {
        match id {
            AgentId::Ground => self.ground = Some(a),
            AgentId::Aerial => self.aerial = Some(a),
        }
    }

    /// Kick off a bidirectional map sync when the agents are in radio range
    /// and the passenger operates (or has landed); covers both the periodic
    /// in-mission sharing and the reunion merge.
    fn maybe_sync(&mut self) {
        let cfg = self.scenario.config.mission;
        let (Some(g), Some(air)) = (&self.ground, &self.aerial) else { return };
        if air.handoff.is_none() {
            return;
        }
        if matches!(air.mode, AgentMode::Carried | AgentMode::Colocalizing | AgentMode::Fault) {
            return;
        }
        if (g.pose.position - air.pose.position).norm() > cfg.comm_range {
            return;
        }
        if let Some(since) = self.sync_active_since {
            if self.time - since < SYNC_SESSION_TIMEOUT {
                return;
            }
            self.sync_active_since = None;
        }
        if self.time - self.sync_last_attempt < cfg.sync_interval {
            return;
        }
        self.sync_last_attempt = self.time;
        self.sync_active_since = Some(self.time);
        let summary = g.features.summary();
        let _ = self.channel.send(self.time, AgentId::Aerial, Message::SyncRequest(summary), &mut self.rng);
        self.log("ground", "sync_request", "");
    }

    // -----------------------------------------------------------------
    // Coverage and metrics
    // -----------------------------------------------------------------

    fn note_observed(&mut self, id: AgentId, cells: &[[usize; 3]]) {
        let [nx, ny, _] = self.scenario.world.dims();
        for c in cells {
            let li = (c[2] * ny + c[1]) * nx + c[0];
            if !self.truth_free[li] {
                continue;
            }
            match id {
                AgentId::Ground => self.ground_count += 1,
                AgentId::Aerial => self.aerial_count += 1,
            }
            if !self.union_observed[li] {
                self.union_observed[li] = true;
                self.union_count += 1;
            }
        }
    }

    fn union_fraction(&self) -> f64 {
        if self.denominator == 0 {
            return 1.0;
        }
        self.union_count as f64 / self.denominator as f64
    }

    fn push_coverage_sample(&mut self) {
        let d = self.denominator.max(1) as f64;
        self.coverage.push(CoverageSample {
            t: self.time,
            union: self.union_count as f64 / d,
            ground: self.ground_count as f64 / d,
            aerial: self.aerial_count as f64 / d,
        });
    }

    /// Agent-map coverage of the truth-free voxels inside a metric box;
    /// used by scenario-level analyses.
    pub fn coverage_in_box(&self, map: &VoxelGrid, bbox: &Aabb) -> f64 {
        let mut denom = 0usize;
        let mut seen = 0usize;
        for (c, s) in self.scenario.world.iter() {
            if s != CellState::Free {
                continue;
            }
            let center = self.scenario.world.center(c);
            if !bbox.contains(&center) {
                continue;
            }
            denom += 1;
            if map.state(c).is_known() {
                seen += 1;
            }
        }
        if denom == 0 {
            1.0
        } else {
            seen as f64 / denom as f64
        }
    }

    fn finalize(mut self, cap_exceeded: bool) -> MissionOutcome {
        self.push_coverage_sample();
        let fault = [&self.ground, &self.aerial]
            .iter()
            .any(|a| a.as_ref().map_or(false, |a| a.mode == AgentMode::Fault));

        let tol = 2.0 * self.scenario.world.resolution();
        let ground_ok = self.ground.as_ref().map_or(true, |g| {
            g.mode == AgentMode::Done && (g.pose.position - g.home_pose.position).norm() <= tol
        });
        let aerial_ok = self.aerial.as_ref().map_or(true, |a| match a.mode {
            AgentMode::Landed => {
                let designated = a.handoff.as_ref().map(|h| h.return_pose).unwrap_or(a.home_pose);
                (a.pose.position - designated.position).norm() <= tol
            }
            AgentMode::Carried => ground_ok,
            _ => false,
        });
        let completed = !fault && !cap_exceeded && ground_ok && aerial_ok;

        let map_consistency = match (&self.ground, &self.aerial) {
            (Some(g), Some(a)) if a.handoff.is_some() => {
                let gs = g.features.content_set();
                let as_ = a.features.content_set();
                let union = gs.union(&as_).count();
                let inter = gs.intersection(&as_).count();
                Some(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
            }
            _ => None,
        };

        let metrics = Metrics {
            coverage: self.coverage.clone(),
            final_coverage: self.union_fraction(),
            ground_distance: self.ground.as_ref().map_or(0.0, |g| g.distance_traveled),
            aerial_distance: self.aerial.as_ref().map_or(0.0, |a| a.distance_traveled),
            ground_elapsed: self.ground.as_ref().map_or(0.0, |g| g.elapsed),
            aerial_elapsed: self.aerial.as_ref().map_or(0.0, |a| a.elapsed),
            time_to_completion: (!cap_exceeded).then_some(self.time),
            deployment_time: self.deployment_time,
            deployment_pose: self.deployment_pose,
            coloc_converged: self.coloc_result.map(|r| r.0),
            coloc_residual: self.coloc_result.map(|r| r.1),
            coloc_iterations: self.coloc_result.map(|r| r.2),
            map_consistency,
            deploy_count: self.deploy_count,
            completed,
            fault,
            cap_exceeded,
        };
        self.log(
            "mission",
            "end",
            &alloc::format!(
                " t={:.1} coverage={:.4} completed={} fault={} cap_exceeded={}",
                self.time,
                metrics.final_coverage,
                completed,
                fault,
                cap_exceeded
            ),
        );
        MissionOutcome {
            metrics,
            events: self.events.clone(),
            state: self,
        }
    }
}

/// Run a mission to termination (all agents terminal) or to the mission cap.
pub fn run_mission(scenario: &ScenarioSpec, seed: u64) -> Result<MissionOutcome, ScenarioError> {
    scenario.validate()?;
    let mut st = MissionState::new(scenario.clone(), seed);
    let cfg = st.scenario.config.mission;
    let cap = cfg.mission_cap_factor * (st.scenario.ground.endurance + st.scenario.aerial.endurance);
    while !st.finished() && st.time <= cap {
        st.step();
    }
    let cap_exceeded = !st.finished();
    Ok(st.finalize(cap_exceeded))
}

/// Run the scenario under each team configuration with the same seed.
pub fn compare_runs(scenario: &ScenarioSpec, seed: u64) -> Result<Vec<(&'static str, MissionOutcome)>, ScenarioError> {
    let mut out = Vec::new();
    for (name, team) in [
        ("ground_only", TeamConfig::GroundOnly),
        ("aerial_only", TeamConfig::AerialOnly),
        ("marsupial", TeamConfig::Marsupial),
    ] {
        let mut s = scenario.clone();
        s.config.mission.team = team;
        out.push((name, run_mission(&s, seed)?));
    }
    Ok(out)
}

/// Text table for compare runs: one row per configuration.
pub fn render_compare(rows: &[(&'static str, MissionOutcome)]) -> String {
    use core::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>9} {:>12} {:>12} {:>12} {:>8}",
        "config", "coverage", "t_95 (s)", "ground (m)", "aerial (m)", "deploys"
    );
    for (name, run) in rows {
        let t95 = run
            .metrics
            .time_to_coverage(0.95)
            .map_or(String::from("-"), |t| alloc::format!("{t:.1}"));
        let _ = writeln!(
            out,
            "{:<12} {:>9.4} {:>12} {:>12.1} {:>12.1} {:>8}",
            name, run.metrics.final_coverage, t95, run.metrics.ground_distance, run.metrics.aerial_distance, run.metrics.deploy_count
        );
    }
    out
}

fn other(id: AgentId) -> AgentId {
    match id {
        AgentId::Ground => AgentId::Aerial,
        AgentId::Aerial => AgentId::Ground,
    }
}

fn policy_name(p: DeployPolicy) -> &'static str {
    match p {
        DeployPolicy::Continue => "continue",
        DeployPolicy::Wait => "wait",
        DeployPolicy::Home => "home",
    }
}

fn fmt_pos(p: &Vec3) -> String {
    alloc::format!("({:.3},{:.3},{:.3})", p.x, p.y, p.z)
}

fn polyline_len(poses: &[Pose]) -> f64 {
    poses.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// Single-linkage clusters of frontiers by unknown-centroid proximity;
/// cluster 0 contains the top-priority frontier.
fn cluster_frontiers(frontiers: &[Frontier], linkage: f64) -> Vec<Vec<usize>> {
    let n = frontiers.len();
    if n == 0 {
        return Vec::new();
    }
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut r = i;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = i;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if (frontiers[a].unknown_centroid - frontiers[b].unknown_centroid).norm() <= linkage {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    let mut unique: Vec<usize> = roots.clone();
    unique.sort_unstable();
    unique.dedup();
    unique
        .into_iter()
        .map(|r| (0..n).filter(|&i| roots[i] == r).collect())
        .collect()
}

