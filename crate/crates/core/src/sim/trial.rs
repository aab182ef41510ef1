//! The per-trial execution loop: plan a route from the instruction, then
//! repeatedly localize, propose short-horizon trajectories, pick one, and
//! advance — resetting to the route with a time penalty whenever autonomous
//! execution fails.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffusion::{
    generate_candidates, make_schedule, CandidateSet, ConditioningContext, MlpNoisePredictor,
    SchedulerParams, Trajectory,
};
use crate::geom::{
    distance_to_polyline, polyline_length, polyline_point_at, project_on_segment, WorldPoint,
};
use crate::raster::ProbabilityRaster;
use crate::seed::{self, stage};
use crate::sim::optimal::geodesic_length;
use crate::sim::worldgen::route_polyline;
use crate::sim::{SimError, World};
use crate::topo::NodeId;
use crate::traversability::{score_path, select_best, WaypointWeightParams};
use crate::vlp::{
    plan_route, similarity_matrix, EmbeddingProvider, LandmarkExtractor, RuleBasedExtractor,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyMode {
    /// Trajectory sampler alone; candidates picked by subgoal distance.
    LpOnly,
    /// Map scoring alone over the single straight segment to the subgoal.
    GpOnly,
    /// Full policy: sampled candidates scored against the map.
    LpGp,
}

impl PolicyMode {
    pub const ALL: [PolicyMode; 3] = [PolicyMode::LpOnly, PolicyMode::GpOnly, PolicyMode::LpGp];

    pub fn label(&self) -> &'static str {
        match self {
            PolicyMode::LpOnly => "LP_ONLY",
            PolicyMode::GpOnly => "GP_ONLY",
            PolicyMode::LpGp => "LP_GP",
        }
    }

    /// Whether this variant samples trajectory candidates (and therefore
    /// needs a trained noise predictor).
    pub fn uses_sampler(&self) -> bool {
        matches!(self, PolicyMode::LpOnly | PolicyMode::LpGp)
    }

    /// Whether this variant scores candidates against a traversability map
    /// (and therefore needs one).
    pub fn uses_map(&self) -> bool {
        matches!(self, PolicyMode::GpOnly | PolicyMode::LpGp)
    }
}

impl std::fmt::Display for PolicyMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// When the loop declares that autonomy failed and resets the robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterventionLimits {
    /// Lateral distance from the planned route that counts as lost, meters.
    pub deviation_m: f64,
    /// Steps of history examined for the stall check.
    pub stall_window: usize,
    /// Minimum net progress along the route over that window, meters.
    pub stall_epsilon_m: f64,
}

impl Default for InterventionLimits {
    fn default() -> Self {
        Self {
            deviation_m: 5.0,
            stall_window: 30,
            stall_epsilon_m: 0.05,
        }
    }
}

/// Everything configurable about one policy run. `new` fills the benchmark
/// defaults; fields are public so experiments can vary them.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub mode: PolicyMode,
    /// Overrides the world's own instruction when set.
    pub instruction: Option<String>,
    /// Route-length penalty weight in the instruction planner.
    pub beta_cost: f64,
    /// Candidates sampled per replanning cycle.
    pub k_candidates: usize,
    pub schedule: SchedulerParams,
    pub weight_params: WaypointWeightParams,
    /// Forward speed, m/s.
    pub speed: f64,
    /// Control period, seconds.
    pub dt: f64,
    /// Steps between replanning cycles.
    pub replan_interval: usize,
    /// How far ahead along the route the moving subgoal sits, meters.
    pub lookahead_m: f64,
    /// Obstacles inside this range are seen and folded into maps, meters.
    pub sense_radius_m: f64,
    pub limits: InterventionLimits,
    /// Simulated seconds charged per intervention.
    pub time_penalty_s: f64,
    pub timeout_s: f64,
    /// Arriving within this distance of the goal finishes the task, meters.
    pub goal_radius_m: f64,
    /// Hop radius for localization against a prior node.
    pub hop_window: usize,
    /// Policy-level salt mixed into every trial's seed.
    pub seed: u64,
}

impl PolicyConfig {
    pub fn new(mode: PolicyMode) -> Self {
        Self {
            mode,
            instruction: None,
            beta_cost: 0.05,
            k_candidates: 8,
            schedule: make_schedule(50, 1e-4, 0.02).expect("default schedule is valid"),
            weight_params: WaypointWeightParams::default(),
            speed: 1.5,
            dt: 0.25,
            replan_interval: 4,
            lookahead_m: 4.0,
            sense_radius_m: 8.0,
            limits: InterventionLimits::default(),
            time_penalty_s: 10.0,
            timeout_s: 1200.0,
            goal_radius_m: 1.0,
            hop_window: 2,
            seed: 0,
        }
    }
}

/// Trained artifacts a policy may need; which ones are required depends on
/// the mode.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialAssets<'a> {
    pub noise_predictor: Option<&'a MlpNoisePredictor>,
    /// Believed global traversability, as produced by the map classifier.
    pub traversability_map: Option<&'a ProbabilityRaster>,
}

impl TrialAssets<'_> {
    pub fn none() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub pose: WorldPoint,
    /// Direction of travel, radians.
    pub heading: f64,
    /// Simulated seconds since trial start; never decreases.
    pub time: f64,
    /// Meters traveled (including resets); never decreases.
    pub odometer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionCause {
    OffTraversable,
    ObstacleCollision,
    RouteDeviation,
    Stalled,
}

/// One control-cycle record; intervention resets append one with the cause
/// set. Serialized as JSON lines by the bench runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEvent {
    pub t: f64,
    pub pose: WorldPoint,
    pub mode: PolicyMode,
    pub selected_candidate: usize,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub intervention_cause: Option<InterventionCause>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub interventions: u32,
    pub actual_path_length: f64,
    /// Length of the shortest traversable path into the goal's arrival
    /// radius — the lower bound any successful run is measured against.
    pub optimal_path_length: f64,
    pub sim_time: f64,
    pub reached_goal: bool,
    pub planned_route: Vec<NodeId>,
    pub events: Vec<TrialEvent>,
}

/// Rolling record of remaining route distance, from which the stall check
/// reads net progress.
#[derive(Debug, Clone, Default)]
pub struct InterventionMonitor {
    remaining: VecDeque<f64>,
}

const MONITOR_CAPACITY: usize = 1024;

impl InterventionMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, remaining_route_m: f64) {
        if self.remaining.len() == MONITOR_CAPACITY {
            self.remaining.pop_front();
        }
        self.remaining.push_back(remaining_route_m);
    }

    pub fn reset(&mut self) {
        self.remaining.clear();
    }

    /// Net route progress over the last `window` steps, or `None` until
    /// enough history exists.
    pub fn progress(&self, window: usize) -> Option<f64> {
        if window == 0 || self.remaining.len() < window + 1 {
            return None;
        }
        let newest = *self.remaining.back()?;
        let oldest = self.remaining[self.remaining.len() - 1 - window];
        Some(oldest - newest)
    }
}

/// Advance the robot `speed * dt` meters along the selected trajectory
/// (world-frame waypoints), consuming vertices in order. A zero-length or
/// exhausted trajectory leaves the pose in place while time still advances.
pub fn step(
    _world: &World,
    robot: &RobotState,
    selected: &Trajectory,
    dt: f64,
    speed: f64,
) -> RobotState {
    assert!(dt > 0.0, "time must advance");
    assert!(speed >= 0.0, "speed must be non-negative");
    let mut pose = robot.pose;
    let mut heading = robot.heading;
    let mut budget = speed * dt;
    let mut traveled = 0.0;
    for w in &selected.waypoints {
        if budget <= 1e-12 {
            break;
        }
        let target = WorldPoint::new(w[0], w[1]);
        let d = pose.distance(&target);
        if d < 1e-12 {
            continue;
        }
        let (dx, dy) = target.sub(&pose);
        heading = dy.atan2(dx);
        if budget >= d {
            pose = target;
            budget -= d;
            traveled += d;
        } else {
            pose = pose.add_offset(dx / d * budget, dy / d * budget);
            traveled += budget;
            budget = 0.0;
        }
    }
    RobotState {
        pose,
        heading,
        time: robot.time + dt,
        odometer: robot.odometer + traveled,
    }
}

/// First failure that applies, checked in severity order: the robot is on
/// blocked ground or inside a mover, it strayed from the planned route, or
/// it stopped making progress.
pub fn detect_intervention(
    world: &World,
    robot: &RobotState,
    route: &[WorldPoint],
    monitor: &InterventionMonitor,
    limits: &InterventionLimits,
) -> Option<InterventionCause> {
    if !world.is_traversable(&robot.pose) {
        return Some(InterventionCause::OffTraversable);
    }
    for o in &world.obstacles {
        if o.position(robot.time).distance(&robot.pose) < o.radius {
            return Some(InterventionCause::ObstacleCollision);
        }
    }
    if !route.is_empty() && distance_to_polyline(&robot.pose, route).0 > limits.deviation_m {
        return Some(InterventionCause::RouteDeviation);
    }
    if let Some(progress) = monitor.progress(limits.stall_window) {
        if progress < limits.stall_epsilon_m {
            return Some(InterventionCause::Stalled);
        }
    }
    None
}

/// Arc-length spacing of the candidate reset points along the route.
const RESET_SAMPLE_M: f64 = 0.25;

/// The operator surrogate: place the robot at the nearest traversable point
/// on the planned route and charge a fixed time penalty. The same failure may
/// recur — every recurrence bills another penalty, so a policy that cannot
/// pass an obstacle burns its time budget instead of ghosting through.
pub fn apply_intervention(
    world: &World,
    robot: &RobotState,
    route: &[WorldPoint],
    penalty_s: f64,
) -> Result<RobotState, SimError> {
    let total = polyline_length(route);
    let samples = (total / RESET_SAMPLE_M).ceil().max(1.0) as usize;
    let mut best: Option<(f64, WorldPoint)> = None;
    for i in 0..=samples {
        let arc = total * i as f64 / samples as f64;
        let p = polyline_point_at(route, arc);
        if !world.is_traversable(&p) {
            continue;
        }
        let d = p.distance(&robot.pose);
        if best.is_none_or(|(bd, _)| d < bd - 1e-12) {
            best = Some((d, p));
        }
    }
    let Some((_, target)) = best else {
        return Err(SimError::NoTraversablePointOnRoute);
    };
    Ok(RobotState {
        pose: target,
        heading: robot.heading,
        time: robot.time + penalty_s,
        odometer: robot.odometer + robot.pose.distance(&target),
    })
}

/// Nearest point (by arc length) on `route` to `p`. With `around`, only arcs
/// in `[around - back, around + fwd]` compete, which keeps tracking monotone
/// when distant route sections pass nearby.
fn nearest_arc(
    route: &[WorldPoint],
    p: &WorldPoint,
    around: Option<f64>,
    back: f64,
    fwd: f64,
) -> f64 {
    let Some(center) = around else {
        return distance_to_polyline(p, route).1;
    };
    let lo = (center - back).max(0.0);
    let hi = center + fwd;
    let mut best: Option<(f64, f64)> = None;
    let mut arc = 0.0;
    for win in route.windows(2) {
        let seg = win[0].distance(&win[1]);
        let (a0, a1) = (arc, arc + seg);
        arc = a1;
        if a1 < lo {
            continue;
        }
        if a0 > hi {
            break;
        }
        let (_, t) = project_on_segment(p, &win[0], &win[1]);
        let cand = (a0 + t * seg).clamp(lo.max(a0), hi.min(a1));
        let d = p.distance(&polyline_point_at(route, cand));
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, cand));
        }
    }
    match best {
        Some((_, a)) => a,
        None => distance_to_polyline(p, route).1,
    }
}

/// Margin added around sensed movers when stamping them into maps, meters.
const OBSTACLE_CLEARANCE_M: f64 = 0.4;

fn sensed_disks(world: &World, robot: &RobotState, sense_radius: f64) -> Vec<(WorldPoint, f64)> {
    world
        .obstacles
        .iter()
        .filter_map(|o| {
            let p = o.position(robot.time);
            (p.distance(&robot.pose) <= sense_radius)
                .then_some((p, o.radius + OBSTACLE_CLEARANCE_M))
        })
        .collect()
}

/// Spacing of the 3×3 occupancy summary the trajectory model conditions on.
pub(super) const PATCH_SPACING_M: f64 = 1.5;

/// The local observation: a 3×3 grid of free/blocked samples around
/// `center`, row-major bottom to top, with sensed movers stamped in.
pub(super) fn sense_patch(
    traversable: &ProbabilityRaster,
    disks: &[(WorldPoint, f64)],
    center: &WorldPoint,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(9);
    for dy in [-PATCH_SPACING_M, 0.0, PATCH_SPACING_M] {
        for dx in [-PATCH_SPACING_M, 0.0, PATCH_SPACING_M] {
            let p = center.add_offset(dx, dy);
            let free = matches!(traversable.sample_prob(&p), Ok(v) if v > 0.5)
                && !disks.iter().any(|(c, r)| c.distance(&p) <= *r);
            out.push(if free { 1.0 } else { 0.0 });
        }
    }
    out
}

/// Straight-segment fallback candidate: waypoints marching toward `offset`
/// at 0.5 m spacing, holding at the target once reached.
fn straight_candidate(offset: [f64; 2], n_waypoints: usize) -> Trajectory {
    let dist = offset[0].hypot(offset[1]);
    if dist < 1e-9 {
        return Trajectory::zeros(n_waypoints);
    }
    let (ux, uy) = (offset[0] / dist, offset[1] / dist);
    let waypoints = (1..=n_waypoints)
        .map(|i| {
            let d = (i as f64 * 0.5).min(dist);
            [d * ux, d * uy]
        })
        .collect();
    Trajectory { waypoints }
}

/// Run one complete trial of `policy` on `world`. Deterministic in
/// `(world.rng_seed, policy.seed, trial_seed)`; a timeout is a result
/// (`reached_goal == false`), not an error.
pub fn run_trial(
    world: &World,
    policy: &PolicyConfig,
    assets: &TrialAssets,
    trial_seed: u64,
) -> Result<TrialResult, SimError> {
    let predictor = if policy.mode.uses_sampler() {
        Some(
            assets
                .noise_predictor
                .ok_or(SimError::MissingAsset("a trained trajectory model"))?,
        )
    } else {
        None
    };
    let belief = if policy.mode.uses_map() {
        let map = assets
            .traversability_map
            .ok_or(SimError::MissingAsset("a traversability map"))?;
        if map.georef() != world.traversable.georef() {
            return Err(SimError::MalformedWorld(
                "traversability map does not cover this world".into(),
            ));
        }
        Some(map)
    } else {
        None
    };

    // --- instruction → route ---
    let provider = world.provider();
    let instruction = policy.instruction.as_deref().unwrap_or(&world.instruction);
    let landmarks = RuleBasedExtractor.extract(instruction)?;
    let sim = similarity_matrix(&world.graph, &landmarks, &provider)?;

    let base = seed::derive(world.rng_seed, stage::BENCH_TRIAL, trial_seed);
    let mut loc_rng =
        ChaCha8Rng::seed_from_u64(seed::derive(base, stage::TRIAL_LOCALIZE, policy.seed));
    let mut cand_rng =
        ChaCha8Rng::seed_from_u64(seed::derive(base, stage::TRIAL_DIFFUSION, policy.seed));

    let spawn_node = world.route_nodes[0];
    let spawn_tag = &world.node_tags[&spawn_node];
    let look: u64 = loc_rng.gen();
    let observation = provider.embed_image(&world.view_ref(spawn_tag, look));
    let v_start = world.graph.localize(&observation, None, policy.hop_window)?;
    let distances = world.graph.shortest_distances(v_start)?;
    // beta trades similarity (unit scale) against walk cost; edge costs are
    // meters, so express it per average hop to keep the trade scale-free
    let edges = world.graph.edges();
    let mean_edge_cost = if edges.is_empty() {
        1.0
    } else {
        edges.iter().map(|e| e.cost).sum::<f64>() / edges.len() as f64
    };
    let beta = policy.beta_cost / mean_edge_cost.max(1e-9);
    let planned = plan_route(&world.graph, &sim, &distances, v_start, beta)?;
    let route = route_polyline(&world.traversable, &world.graph, &planned.nodes)?;
    let route_len = polyline_length(&route);

    let optimal_path_length = geodesic_length(&world.traversable, &world.spawn, &world.goal)
        .ok_or_else(|| {
            SimError::MalformedWorld("no traversable path from spawn to goal".into())
        })?
        - policy.goal_radius_m;
    let optimal_path_length = optimal_path_length.max(1e-9);

    // --- execution loop ---
    let mut robot = RobotState {
        pose: world.spawn,
        heading: 0.0,
        time: 0.0,
        odometer: 0.0,
    };
    let mut monitor = InterventionMonitor::new();
    let mut events = Vec::new();
    let mut interventions: u32 = 0;
    let mut reached = robot.pose.distance(&world.goal) <= policy.goal_radius_m;
    let mut exec: Vec<WorldPoint> = Vec::new();
    let mut s_hat: Option<f64> = None;
    let mut s_true = nearest_arc(&route, &robot.pose, None, 0.0, 0.0);
    let mut last_selection = (0usize, 0.0f64);
    let mut steps_since_replan = usize::MAX / 2;

    while !reached && robot.time < policy.timeout_s - 1e-9 {
        if steps_since_replan >= policy.replan_interval {
            // the robot plans from where it believes it is
            let nx: f64 = StandardNormal.sample(&mut loc_rng);
            let ny: f64 = StandardNormal.sample(&mut loc_rng);
            let p_hat = robot.pose.add_offset(
                world.localization_sigma * nx,
                world.localization_sigma * ny,
            );
            let s = nearest_arc(&route, &p_hat, s_hat, 3.0, 9.0);
            s_hat = Some(s);
            let carrot = polyline_point_at(&route, s + policy.lookahead_m);
            let goal_offset = [carrot.x - p_hat.x, carrot.y - p_hat.y];

            let sensed = sensed_disks(world, &robot, policy.sense_radius_m);
            let patch = sense_patch(&world.traversable, &sensed, &robot.pose);

            let candidates = match policy.mode {
                PolicyMode::GpOnly => CandidateSet {
                    candidates: vec![straight_candidate(goal_offset, 8)],
                    rng_seed: 0,
                },
                _ => {
                    let context = ConditioningContext {
                        observation_features: patch,
                        goal_offset,
                        localization: p_hat,
                    };
                    let p = predictor.expect("checked on entry");
                    generate_candidates(
                        p,
                        &context,
                        &policy.schedule,
                        policy.k_candidates,
                        cand_rng.gen(),
                    )?
                }
            };

            let (index, score) = match policy.mode {
                PolicyMode::LpOnly => {
                    // nearest endpoint to the subgoal; negated distance so
                    // larger is better like the map score
                    let mut best = (0usize, f64::INFINITY);
                    for (i, c) in candidates.candidates.iter().enumerate() {
                        let end = c.waypoints.last().copied().unwrap_or([0.0, 0.0]);
                        let d = (end[0] - goal_offset[0]).hypot(end[1] - goal_offset[1]);
                        if d < best.1 {
                            best = (i, d);
                        }
                    }
                    (best.0, -best.1)
                }
                PolicyMode::GpOnly | PolicyMode::LpGp => {
                    let stamped = belief
                        .expect("checked on entry")
                        .with_zeroed_disks(&sensed);
                    let (index, chosen) = select_best(
                        &candidates,
                        &stamped,
                        &p_hat,
                        &carrot,
                        &policy.weight_params,
                    );
                    let score =
                        score_path(&chosen, &stamped, &p_hat, &carrot, &policy.weight_params);
                    (index, score)
                }
            };

            // belief only steers the choice; the body executes in its own
            // frame, so estimate error becomes real tracking error
            exec = candidates.candidates[index]
                .waypoints
                .iter()
                .map(|w| robot.pose.add_offset(w[0], w[1]))
                .collect();
            last_selection = (index, score);
            steps_since_replan = 0;
            events.push(TrialEvent {
                t: robot.time,
                pose: robot.pose,
                mode: policy.mode,
                selected_candidate: index,
                score,
                intervention_cause: None,
            });
        }

        let before = robot.pose;
        let selected = Trajectory {
            waypoints: exec.iter().map(|p| [p.x, p.y]).collect(),
        };
        let prev_odometer = robot.odometer;
        robot = step(world, &robot, &selected, policy.dt, policy.speed);
        steps_since_replan += 1;

        // drop waypoints the step consumed
        let traveled = robot.odometer - prev_odometer;
        let mut cum = 0.0;
        let mut prev = before;
        let mut consumed = 0;
        for w in &exec {
            cum += prev.distance(w);
            if cum <= traveled + 1e-9 {
                consumed += 1;
                prev = *w;
            } else {
                break;
            }
        }
        exec.drain(..consumed);

        if robot.pose.distance(&world.goal) <= policy.goal_radius_m {
            reached = true;
            break;
        }

        s_true = nearest_arc(&route, &robot.pose, Some(s_true), 2.0, 2.0);
        monitor.record(route_len - s_true);

        if let Some(cause) = detect_intervention(world, &robot, &route, &monitor, &policy.limits)
        {
            robot = apply_intervention(world, &robot, &route, policy.time_penalty_s)?;
            interventions += 1;
            monitor.reset();
            s_true = nearest_arc(&route, &robot.pose, None, 0.0, 0.0);
            s_hat = Some(s_true);
            exec.clear();
            steps_since_replan = usize::MAX / 2;
            events.push(TrialEvent {
                t: robot.time,
                pose: robot.pose,
                mode: policy.mode,
                selected_candidate: last_selection.0,
                score: last_selection.1,
                intervention_cause: Some(cause),
            });
            if robot.pose.distance(&world.goal) <= policy.goal_radius_m {
                reached = true;
            }
        }
    }

    Ok(TrialResult {
        interventions,
        actual_path_length: robot.odometer,
        optimal_path_length,
        sim_time: robot.time,
        reached_goal: reached,
        planned_route: planned.nodes,
        events,
    })
}
