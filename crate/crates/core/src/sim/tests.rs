use std::collections::BTreeMap;

use super::trial::sense_patch;
use super::worldgen::route_polyline;
use super::*;
use crate::diffusion::{train_noise_predictor, Trajectory};
use crate::geom::{polyline_length, WorldPoint};
use crate::raster::{FeatureRaster, GeoRef, ProbabilityRaster};
use crate::sim::optimal::{geodesic_length, grid_path};
use crate::topo::{TopoEdge, TopoNode, TopologyGraph};
use crate::vlp::{EmbeddingProvider, LandmarkExtractor, RuleBasedExtractor, TagOracleProvider};

// ---------------------------------------------------------------------------
// hand-built corridor fixtures
// ---------------------------------------------------------------------------

/// Optional blocked band across the corridor, with an optional gap.
struct Wall {
    x: f64,
    thickness: f64,
    /// `Some(center)` leaves a gap of `door_half` either side of `center`.
    door_center_y: Option<f64>,
    door_half: f64,
}

/// A 60 m × 20 m fully traversable strip at 0.5 m resolution with a
/// two-node graph spanning it: spawn node "kiosk" at (5, 10), goal node
/// "pond" at (55, 10). The instruction names the goal.
fn corridor_world(wall: Option<Wall>) -> World {
    let georef = GeoRef::new(0.0, 0.0, 0.5, 120, 40);
    let mut cells = vec![1.0f32; georef.cell_count()];
    if let Some(w) = &wall {
        for row in 0..georef.height {
            for col in 0..georef.width {
                let c = georef.cell_center(row, col);
                let in_band = c.x >= w.x && c.x < w.x + w.thickness;
                let in_door = w
                    .door_center_y
                    .map(|center| (c.y - center).abs() <= w.door_half)
                    .unwrap_or(false);
                if in_band && !in_door {
                    cells[row * georef.width + col] = 0.0;
                }
            }
        }
    }
    let traversable = ProbabilityRaster::new(georef, cells).unwrap();
    let features =
        FeatureRaster::new(georef, 3, vec![0.0; georef.cell_count() * 3]).unwrap();

    let vocab = vec!["kiosk".to_string(), "pond".to_string()];
    let provider = TagOracleProvider::new(vocab.clone());
    let node = |id: u32, pose: WorldPoint, tag: &str| {
        let refs: Vec<String> = (0..2).map(|k| view_ref_string(0.0, None, tag, k)).collect();
        let embeddings = refs.iter().map(|r| provider.embed_image(r)).collect();
        TopoNode {
            id,
            pose,
            embeddings,
            image_refs: refs,
        }
    };
    let graph = TopologyGraph::new(
        provider.dim(),
        vec![
            node(0, WorldPoint::new(5.0, 10.0), "kiosk"),
            node(1, WorldPoint::new(55.0, 10.0), "pond"),
        ],
        vec![TopoEdge {
            from: 0,
            to: 1,
            cost: 50.0,
        }],
    )
    .unwrap();

    World {
        kind: WorldKind::Structured,
        traversable,
        features,
        obstacles: Vec::new(),
        graph,
        landmark_vocab: vocab,
        node_tags: BTreeMap::from([(0, "kiosk".to_string()), (1, "pond".to_string())]),
        view_ambiguity: 0.0,
        view_background: None,
        localization_sigma: 0.0,
        spawn: WorldPoint::new(5.0, 10.0),
        goal: WorldPoint::new(55.0, 10.0),
        instruction: "go to the pond.".to_string(),
        route_nodes: vec![0, 1],
        rng_seed: 99,
    }
}

fn resting_robot(pose: WorldPoint) -> RobotState {
    RobotState {
        pose,
        heading: 0.0,
        time: 0.0,
        odometer: 0.0,
    }
}

// ---------------------------------------------------------------------------
// world generation
// ---------------------------------------------------------------------------

#[test]
fn world_too_small_is_rejected() {
    for kind in [WorldKind::Structured, WorldKind::Unstructured] {
        let err = generate_world(kind, MIN_WORLD_CELLS - 1, 1).unwrap_err();
        assert!(matches!(err, SimError::SizeTooSmall { got, .. } if got == MIN_WORLD_CELLS - 1));
    }
}

#[test]
fn structured_generation_is_deterministic() {
    let a = generate_world(WorldKind::Structured, 200, 7).unwrap();
    let b = generate_world(WorldKind::Structured, 200, 7).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unstructured_generation_is_deterministic() {
    let a = generate_world(WorldKind::Unstructured, 200, 3).unwrap();
    let b = generate_world(WorldKind::Unstructured, 200, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn different_seeds_make_different_worlds() {
    let a = generate_world(WorldKind::Structured, 200, 1).unwrap();
    let b = generate_world(WorldKind::Structured, 200, 2).unwrap();
    assert_ne!(a, b);
}

/// Edges of the structured graph run along carved corridors, so nearly all
/// points sampled on them must be traversable.
#[test]
fn structured_edges_follow_corridors() {
    let world = generate_world(WorldKind::Structured, 200, 5).unwrap();
    let mut total = 0usize;
    let mut free = 0usize;
    for edge in world.graph.edges() {
        let a = world.graph.node(edge.from).unwrap().pose;
        let b = world.graph.node(edge.to).unwrap().pose;
        let length = a.distance(&b);
        let steps = (length / 0.5).ceil() as usize;
        for i in 0..=steps {
            let t = i as f64 / steps as f64;
            let p = WorldPoint::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y));
            total += 1;
            if world.is_traversable(&p) {
                free += 1;
            }
        }
    }
    assert!(total > 0);
    let ratio = free as f64 / total as f64;
    assert!(ratio >= 0.95, "only {:.1}% of edge points free", ratio * 100.0);
}

fn mean_cross_node_similarity(world: &World) -> f64 {
    let nodes: Vec<_> = world.graph.nodes().collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..nodes.len() {
        for j in (i + 1)..nodes.len() {
            let mut best = f32::NEG_INFINITY;
            for u in &nodes[i].embeddings {
                for v in &nodes[j].embeddings {
                    let dot: f32 = u.iter().zip(v).map(|(a, b)| a * b).sum();
                    best = best.max(dot);
                }
            }
            sum += f64::from(best);
            pairs += 1;
        }
    }
    sum / pairs as f64
}

/// Unstructured terrain looks samey: distinct places resemble each other
/// more than distinct structured landmarks do.
#[test]
fn unstructured_views_are_more_mutually_similar() {
    let s = generate_world(WorldKind::Structured, 200, 11).unwrap();
    let u = generate_world(WorldKind::Unstructured, 200, 11).unwrap();
    let sim_s = mean_cross_node_similarity(&s);
    let sim_u = mean_cross_node_similarity(&u);
    assert!(
        sim_u > sim_s,
        "unstructured {sim_u:.3} should exceed structured {sim_s:.3}"
    );
}

#[test]
fn structured_route_length_sits_in_band() {
    for seed in 0..3 {
        let world = generate_world(WorldKind::Structured, 500, seed).unwrap();
        let poly = route_polyline(&world.traversable, &world.graph, &world.route_nodes).unwrap();
        let len = polyline_length(&poly);
        assert!(
            (405.0..=450.0).contains(&len),
            "seed {seed}: route length {len:.1} outside band"
        );
    }
}

#[test]
fn unstructured_route_length_sits_in_band() {
    for seed in 0..2 {
        let world = generate_world(WorldKind::Unstructured, 600, seed).unwrap();
        let poly = route_polyline(&world.traversable, &world.graph, &world.route_nodes).unwrap();
        let len = polyline_length(&poly);
        assert!(
            (405.0..=450.0).contains(&len),
            "seed {seed}: route length {len:.1} outside band"
        );
    }
}

/// The instruction must decompose into tags that name route nodes, ending at
/// the goal — otherwise no policy can follow it.
#[test]
fn instruction_names_route_landmarks_in_order() {
    for (kind, size) in [
        (WorldKind::Structured, 200),
        (WorldKind::Unstructured, 200),
    ] {
        let world = generate_world(kind, size, 13).unwrap();
        let tags = RuleBasedExtractor.extract(&world.instruction).unwrap();
        let tags = tags.as_slice();
        assert!(!tags.is_empty());
        for tag in tags {
            assert!(
                world.landmark_vocab.contains(tag),
                "{kind}: extracted {tag:?} not in vocabulary"
            );
            assert!(
                world
                    .route_nodes
                    .iter()
                    .any(|n| world.node_tags[n] == *tag),
                "{kind}: extracted {tag:?} names no route node"
            );
        }
        let goal_tag = &world.node_tags[world.route_nodes.last().unwrap()];
        assert_eq!(tags.last().unwrap(), goal_tag, "{kind}: last landmark must be the goal");
    }
}

#[test]
fn generated_worlds_are_well_formed() {
    for (kind, size) in [
        (WorldKind::Structured, 200),
        (WorldKind::Unstructured, 200),
    ] {
        let world = generate_world(kind, size, 21).unwrap();
        assert!(world.landmark_vocab.len() >= 2);
        assert!(!world.obstacles.is_empty(), "{kind}: wants moving obstacles");
        for o in &world.obstacles {
            assert!(o.radius > 0.0 && o.speed > 0.0);
            assert!(o.loop_length() > 0.0);
        }
        assert!(world.is_traversable(&world.spawn), "{kind}: spawn blocked");
        assert!(world.is_traversable(&world.goal), "{kind}: goal blocked");
        assert_eq!(
            world.graph.node(world.route_nodes[0]).unwrap().pose,
            world.spawn
        );
        assert_eq!(
            world
                .graph
                .node(*world.route_nodes.last().unwrap())
                .unwrap()
                .pose,
            world.goal
        );
        // the route itself must be walkable
        let len = geodesic_length(&world.traversable, &world.spawn, &world.goal);
        assert!(len.is_some(), "{kind}: goal unreachable from spawn");
    }
}

// ---------------------------------------------------------------------------
// kinematics
// ---------------------------------------------------------------------------

#[test]
fn step_moves_fixed_distance_along_straight_line() {
    let world = corridor_world(None);
    let robot = resting_robot(WorldPoint::new(5.0, 10.0));
    let traj = Trajectory {
        waypoints: vec![[10.0, 10.0]],
    };
    let next = step(&world, &robot, &traj, 0.25, 1.5);
    assert!((next.pose.x - 5.375).abs() < 1e-12);
    assert!((next.pose.y - 10.0).abs() < 1e-12);
    assert!((next.odometer - 0.375).abs() < 1e-12);
    assert!((next.time - 0.25).abs() < 1e-12);
    assert!(next.heading.abs() < 1e-12);
}

#[test]
fn step_with_empty_trajectory_only_advances_time() {
    let world = corridor_world(None);
    let robot = resting_robot(WorldPoint::new(5.0, 10.0));
    let next = step(&world, &robot, &Trajectory { waypoints: vec![] }, 0.25, 1.5);
    assert_eq!(next.pose, robot.pose);
    assert_eq!(next.odometer, 0.0);
    assert!((next.time - 0.25).abs() < 1e-12);

    // a trajectory of coincident points behaves the same way
    let degenerate = Trajectory {
        waypoints: vec![[5.0, 10.0], [5.0, 10.0]],
    };
    let next = step(&world, &robot, &degenerate, 0.25, 1.5);
    assert_eq!(next.pose, robot.pose);
    assert_eq!(next.odometer, 0.0);
}

#[test]
fn step_follows_corners_and_tracks_odometer() {
    let world = corridor_world(None);
    let mut robot = resting_robot(WorldPoint::new(5.0, 10.0));
    // 0.2 m east then a right-angle turn north
    let traj = Trajectory {
        waypoints: vec![[5.2, 10.0], [5.2, 12.0]],
    };
    robot = step(&world, &robot, &traj, 0.25, 1.5);
    // 0.375 m of travel: 0.2 along x, 0.175 up y
    assert!((robot.pose.x - 5.2).abs() < 1e-12);
    assert!((robot.pose.y - 10.175).abs() < 1e-12);
    assert!((robot.odometer - 0.375).abs() < 1e-12);
    assert!((robot.heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);

    // odometer accumulates exactly over repeated steps
    let mut total = robot.odometer;
    let mut prev = robot.pose;
    for _ in 0..4 {
        robot = step(&world, &robot, &Trajectory { waypoints: vec![[5.2, 12.0]] }, 0.25, 1.5);
        total += robot.pose.distance(&prev);
        prev = robot.pose;
    }
    assert!((robot.odometer - total).abs() < 1e-9);
}

#[test]
fn obstacle_patrol_is_periodic() {
    let o = DynamicObstacle {
        loop_points: vec![WorldPoint::new(0.0, 0.0), WorldPoint::new(4.0, 0.0)],
        speed: 2.0,
        radius: 0.9,
        phase: 0.0,
    };
    assert!((o.loop_length() - 8.0).abs() < 1e-12);
    let period = o.loop_length() / o.speed;
    assert_eq!(o.position(0.0), WorldPoint::new(0.0, 0.0));
    assert_eq!(o.position(1.0), WorldPoint::new(2.0, 0.0));
    // past the far end it walks back along the return leg
    let back = o.position(3.0);
    assert!((back.x - 2.0).abs() < 1e-9 && back.y.abs() < 1e-9);
    for t in [0.3, 1.7, 2.9] {
        let a = o.position(t);
        let b = o.position(t + period);
        assert!(a.distance(&b) < 1e-9, "not periodic at t={t}");
    }
}

// ---------------------------------------------------------------------------
// intervention detection and resets
// ---------------------------------------------------------------------------

fn straight_route() -> Vec<WorldPoint> {
    vec![WorldPoint::new(5.0, 10.0), WorldPoint::new(55.0, 10.0)]
}

#[test]
fn detect_nothing_when_tracking_cleanly() {
    let world = corridor_world(None);
    let robot = resting_robot(WorldPoint::new(20.0, 10.5));
    let monitor = InterventionMonitor::new();
    let cause = detect_intervention(
        &world,
        &robot,
        &straight_route(),
        &monitor,
        &InterventionLimits::default(),
    );
    assert_eq!(cause, None);
}

#[test]
fn detect_off_traversable_ground() {
    let world = corridor_world(Some(Wall {
        x: 30.0,
        thickness: 1.5,
        door_center_y: None,
        door_half: 0.0,
    }));
    let robot = resting_robot(WorldPoint::new(30.6, 10.0));
    let cause = detect_intervention(
        &world,
        &robot,
        &straight_route(),
        &InterventionMonitor::new(),
        &InterventionLimits::default(),
    );
    assert_eq!(cause, Some(InterventionCause::OffTraversable));
}

#[test]
fn detect_obstacle_overlap_uses_current_time() {
    let mut world = corridor_world(None);
    world.obstacles.push(DynamicObstacle {
        loop_points: vec![WorldPoint::new(20.0, 8.0), WorldPoint::new(20.0, 12.0)],
        speed: 1.0,
        radius: 0.9,
        phase: 0.0,
    });
    // at t = 2 the mover sits at (20, 10), right on the route
    let mut robot = resting_robot(WorldPoint::new(20.0, 10.5));
    robot.time = 2.0;
    let cause = detect_intervention(
        &world,
        &robot,
        &straight_route(),
        &InterventionMonitor::new(),
        &InterventionLimits::default(),
    );
    assert_eq!(cause, Some(InterventionCause::ObstacleCollision));
    // at t = 0 it is 2.5 m away — no overlap
    robot.time = 0.0;
    let cause = detect_intervention(
        &world,
        &robot,
        &straight_route(),
        &InterventionMonitor::new(),
        &InterventionLimits::default(),
    );
    assert_eq!(cause, None);
}

#[test]
fn detect_route_deviation_beyond_limit() {
    let world = corridor_world(None);
    let robot = resting_robot(WorldPoint::new(20.0, 15.2));
    let cause = detect_intervention(
        &world,
        &robot,
        &straight_route(),
        &InterventionMonitor::new(),
        &InterventionLimits::default(),
    );
    assert_eq!(cause, Some(InterventionCause::RouteDeviation));
}

#[test]
fn detect_stall_needs_a_full_window() {
    let world = corridor_world(None);
    let robot = resting_robot(WorldPoint::new(20.0, 10.0));
    let limits = InterventionLimits::default();
    let mut monitor = InterventionMonitor::new();
    for _ in 0..limits.stall_window {
        monitor.record(30.0);
    }
    // only `window` records: not enough history yet
    assert_eq!(
        detect_intervention(&world, &robot, &straight_route(), &monitor, &limits),
        None
    );
    monitor.record(30.0);
    assert_eq!(
        detect_intervention(&world, &robot, &straight_route(), &monitor, &limits),
        Some(InterventionCause::Stalled)
    );
    // steady progress clears it
    let mut moving = InterventionMonitor::new();
    for i in 0..=limits.stall_window {
        moving.record(30.0 - 0.3 * i as f64);
    }
    assert_eq!(
        detect_intervention(&world, &robot, &straight_route(), &moving, &limits),
        None
    );
}

#[test]
fn reset_moves_to_nearest_route_point_and_charges_time() {
    let world = corridor_world(None);
    let mut robot = resting_robot(WorldPoint::new(20.0, 13.0));
    robot.time = 100.0;
    robot.odometer = 42.0;
    let after = apply_intervention(&world, &robot, &straight_route(), 10.0).unwrap();
    // nearest point on the straight route is directly below
    assert!(after.pose.distance(&WorldPoint::new(20.0, 10.0)) < 0.26);
    assert!((after.time - 110.0).abs() < 1e-12);
    assert!(after.odometer >= robot.odometer + 2.9, "teleport distance counts");
}

#[test]
fn reset_fails_when_no_route_point_is_traversable() {
    let mut world = corridor_world(None);
    let georef = *world.traversable.georef();
    world.traversable = ProbabilityRaster::uniform(georef, 0.0).unwrap();
    let robot = resting_robot(WorldPoint::new(20.0, 13.0));
    let err = apply_intervention(&world, &robot, &straight_route(), 10.0).unwrap_err();
    assert!(matches!(err, SimError::NoTraversablePointOnRoute));
}

#[test]
fn reset_on_route_stays_put_but_still_charges_time() {
    let world = corridor_world(None);
    let robot = resting_robot(WorldPoint::new(20.0, 10.0));
    let after = apply_intervention(&world, &robot, &straight_route(), 10.0).unwrap();
    assert!(after.pose.distance(&robot.pose) < 1e-9);
    assert!((after.time - 10.0).abs() < 1e-12);
    assert_eq!(after.odometer, robot.odometer);
}

// ---------------------------------------------------------------------------
// shortest paths
// ---------------------------------------------------------------------------

#[test]
fn geodesic_on_open_ground_is_nearly_straight() {
    let world = corridor_world(None);
    let a = WorldPoint::new(6.0, 6.0);
    let b = WorldPoint::new(52.0, 14.0);
    let len = geodesic_length(&world.traversable, &a, &b).unwrap();
    let direct = a.distance(&b);
    assert!(len >= direct - 1e-9);
    assert!(len <= direct * 1.01, "geodesic {len:.2} vs direct {direct:.2}");
}

#[test]
fn geodesic_detours_around_walls_or_fails_when_sealed() {
    let doored = corridor_world(Some(Wall {
        x: 30.0,
        thickness: 1.5,
        door_center_y: Some(16.0),
        door_half: 1.5,
    }));
    let a = WorldPoint::new(6.0, 10.0);
    let b = WorldPoint::new(52.0, 10.0);
    let len = geodesic_length(&doored.traversable, &a, &b).unwrap();
    let direct = a.distance(&b);
    assert!(len > direct + 0.5, "must detour through the gap: {len:.2} vs {direct:.2}");

    let sealed = corridor_world(Some(Wall {
        x: 30.0,
        thickness: 1.5,
        door_center_y: None,
        door_half: 0.0,
    }));
    assert_eq!(geodesic_length(&sealed.traversable, &a, &b), None);
}

#[test]
fn grid_path_cannot_cut_blocked_corners() {
    // two blocked cells pinch the only diagonal: without corner cutting the
    // quadrant is unreachable
    let georef = GeoRef::new(0.0, 0.0, 1.0, 4, 4);
    let mut cells = vec![1.0f32; 16];
    // wall along the anti-diagonal except where exactly one diagonal squeeze
    // would exist between (1,2) and (2,1)
    for (r, c) in [(0, 3), (1, 2), (3, 0), (2, 1)] {
        cells[r * 4 + c] = 0.0;
    }
    // free diagonal neighbors (1,1)/(2,2) remain, but crossing between them
    // would cut the corner between the two blocked cells
    let raster = ProbabilityRaster::new(georef, cells).unwrap();
    let from = WorldPoint::new(0.5, 0.5);
    let to = WorldPoint::new(3.5, 3.5);
    assert!(grid_path(&raster, &from, &to).is_none());
}

// ---------------------------------------------------------------------------
// training-set extraction
// ---------------------------------------------------------------------------

#[test]
fn expert_dataset_is_deterministic_and_well_shaped() {
    let world = generate_world(WorldKind::Structured, 200, 17).unwrap();
    let a = local_planner_dataset(&world, 40, 5).unwrap();
    let b = local_planner_dataset(&world, 40, 5).unwrap();
    assert_eq!(a.len(), 40);
    assert_eq!(a, b);
    let c = local_planner_dataset(&world, 40, 6).unwrap();
    assert_ne!(a, c, "different seeds should differ");

    let mut free = 0usize;
    let mut total = 0usize;
    for (ctx, traj) in &a {
        assert_eq!(traj.waypoints.len(), 8);
        assert_eq!(ctx.observation_features.len(), 9);
        let goal_dist = ctx.goal_offset[0].hypot(ctx.goal_offset[1]);
        assert!((1.0..8.0).contains(&goal_dist), "subgoal at {goal_dist:.2} m");
        // consecutive waypoints no farther apart than the resample spacing
        let mut prev = [0.0, 0.0];
        for w in &traj.waypoints {
            let d = (w[0] - prev[0]).hypot(w[1] - prev[1]);
            assert!(d <= 0.5 + 1e-9, "waypoint spacing {d:.3}");
            prev = *w;
            total += 1;
            let p = ctx.localization.add_offset(w[0], w[1]);
            if world.is_traversable(&p) {
                free += 1;
            }
        }
    }
    assert!(
        free as f64 >= total as f64 * 0.95,
        "experts should stay on traversable ground ({free}/{total})"
    );
}

#[test]
fn terrain_dataset_is_balanced_and_labeled() {
    let world = generate_world(WorldKind::Structured, 200, 19).unwrap();
    let samples = traversability_dataset(&world, 60, 2).unwrap();
    assert_eq!(samples.len(), 120);
    let positives = samples.iter().filter(|s| s.traversed).count();
    assert_eq!(positives, 60);
    for s in &samples {
        assert_eq!(s.features.len(), world.features.channels());
        assert!(s.features.iter().all(|v| v.is_finite()));
    }
    assert_eq!(samples, traversability_dataset(&world, 60, 2).unwrap());
}

#[test]
fn sensed_obstacles_blank_the_patch() {
    let world = corridor_world(None);
    let center = WorldPoint::new(20.0, 10.0);
    let clear = sense_patch(&world.traversable, &[], &center);
    assert_eq!(clear, vec![1.0; 9]);
    let disks = [(WorldPoint::new(21.5, 10.0), 1.0)];
    let blocked = sense_patch(&world.traversable, &disks, &center);
    // the east-middle sample sits inside the disk
    assert_eq!(blocked[5], 0.0);
    assert_eq!(blocked[4], 1.0);
}

// ---------------------------------------------------------------------------
// full trials
// ---------------------------------------------------------------------------

#[test]
fn straight_corridor_trial_reaches_goal_without_interventions() {
    let world = corridor_world(None);
    let policy = PolicyConfig::new(PolicyMode::GpOnly);
    let assets = TrialAssets {
        noise_predictor: None,
        traversability_map: Some(&world.traversable),
    };
    let result = run_trial(&world, &policy, &assets, 1).unwrap();
    assert!(result.reached_goal);
    assert_eq!(result.interventions, 0);
    assert!(!result.events.is_empty());
    assert!(result.actual_path_length >= result.optimal_path_length - 1e-9);
    assert!(
        result.actual_path_length <= result.optimal_path_length * 1.1,
        "straight corridor should be walked nearly optimally: {:.2} vs {:.2}",
        result.actual_path_length,
        result.optimal_path_length
    );
    // time consistent with constant speed plus no penalties
    let expected = result.actual_path_length / policy.speed;
    assert!((result.sim_time - expected).abs() <= 2.0 * policy.dt + 1e-9);
    assert_eq!(result.planned_route, vec![0, 1]);
}

#[test]
fn trial_results_are_bit_reproducible() {
    let world = corridor_world(None);
    let policy = PolicyConfig::new(PolicyMode::GpOnly);
    let assets = TrialAssets {
        noise_predictor: None,
        traversability_map: Some(&world.traversable),
    };
    let a = run_trial(&world, &policy, &assets, 7).unwrap();
    let b = run_trial(&world, &policy, &assets, 7).unwrap();
    assert_eq!(a, b);
}

#[test]
fn missing_assets_are_reported() {
    let world = corridor_world(None);
    let err = run_trial(
        &world,
        &PolicyConfig::new(PolicyMode::LpOnly),
        &TrialAssets::none(),
        1,
    )
    .unwrap_err();
    assert!(matches!(err, SimError::MissingAsset(_)));

    let err = run_trial(
        &world,
        &PolicyConfig::new(PolicyMode::GpOnly),
        &TrialAssets::none(),
        1,
    )
    .unwrap_err();
    assert!(matches!(err, SimError::MissingAsset(_)));
}

#[test]
fn unreachable_goal_is_a_malformed_world() {
    let world = corridor_world(Some(Wall {
        x: 30.0,
        thickness: 1.5,
        door_center_y: None,
        door_half: 0.0,
    }));
    let policy = PolicyConfig::new(PolicyMode::GpOnly);
    let assets = TrialAssets {
        noise_predictor: None,
        traversability_map: Some(&world.traversable),
    };
    let result = run_trial(&world, &policy, &assets, 1);
    assert!(matches!(result, Err(SimError::MalformedWorld(_))));
}

#[test]
fn blocked_gap_leads_to_interventions_and_penalties() {
    // the route legitimately bends through the wall's only gap, but a patrol
    // loitering in that gap seals it at execution time; the single straight
    // candidate cannot swerve, so every approach ends in a collision reset
    let mut world = corridor_world(Some(Wall {
        x: 30.0,
        thickness: 1.5,
        door_center_y: Some(16.5),
        door_half: 1.6,
    }));
    world.obstacles.push(DynamicObstacle {
        loop_points: vec![WorldPoint::new(30.0, 16.3), WorldPoint::new(30.0, 16.7)],
        speed: 0.05,
        radius: 1.8,
        phase: 0.0,
    });
    let mut policy = PolicyConfig::new(PolicyMode::GpOnly);
    policy.timeout_s = 300.0;
    let assets = TrialAssets {
        noise_predictor: None,
        traversability_map: Some(&world.traversable),
    };
    let result = run_trial(&world, &policy, &assets, 2).unwrap();
    // every reset re-places the robot on the route beside the patrol, which
    // hits it again: crossing the seal costs a long chain of interventions
    assert!(
        result.interventions >= 3,
        "expected a chain of collision resets, got {}",
        result.interventions
    );
    assert!(
        result.sim_time >= f64::from(result.interventions) * policy.time_penalty_s,
        "each intervention charges its penalty"
    );
    // event log records the causes with non-decreasing timestamps
    let causes = result
        .events
        .iter()
        .filter(|e| e.intervention_cause.is_some())
        .count();
    assert_eq!(causes as u32, result.interventions);
    for pair in result.events.windows(2) {
        assert!(pair[1].t >= pair[0].t - 1e-9);
    }
}

#[test]
fn running_out_of_time_is_an_outcome_not_an_error() {
    let world = corridor_world(None);
    let mut policy = PolicyConfig::new(PolicyMode::GpOnly);
    policy.timeout_s = 10.0; // the goal is 50 m away at 1.5 m/s
    let assets = TrialAssets {
        noise_predictor: None,
        traversability_map: Some(&world.traversable),
    };
    let result = run_trial(&world, &policy, &assets, 3).unwrap();
    assert!(!result.reached_goal);
    assert!(result.sim_time <= policy.timeout_s + policy.dt + 1e-9);
    assert!(!result.events.is_empty());
}

/// The headline ablation mechanic: trajectory diversity plus map scoring
/// threads a gap that endpoint-only selection keeps missing.
#[test]
fn map_scoring_beats_endpoint_selection_at_a_wall_gap() {
    let world = corridor_world(Some(Wall {
        x: 30.0,
        thickness: 1.5,
        door_center_y: Some(13.0),
        door_half: 1.6,
    }));
    // learn short-horizon behavior from this world's own expert paths,
    // which bend through the gap
    let dataset = local_planner_dataset(&world, 260, 4).unwrap();
    assert!(dataset.len() >= 200, "need a usable expert set");
    let schedule = crate::diffusion::make_schedule(50, 1e-4, 0.02).unwrap();
    let (predictor, losses) = train_noise_predictor(&dataset, &schedule, 700, 12).unwrap();
    assert!(losses.last().unwrap() < &losses[0]);

    let assets = TrialAssets {
        noise_predictor: Some(&predictor),
        traversability_map: Some(&world.traversable),
    };
    let mut with_map = 0u32;
    let mut without_map = 0u32;
    for trial_seed in 0..3 {
        let full = run_trial(
            &world,
            &PolicyConfig::new(PolicyMode::LpGp),
            &assets,
            trial_seed,
        )
        .unwrap();
        let lp = run_trial(
            &world,
            &PolicyConfig::new(PolicyMode::LpOnly),
            &assets,
            trial_seed,
        )
        .unwrap();
        with_map += full.interventions;
        without_map += lp.interventions;
    }
    assert!(
        with_map < without_map,
        "map-scored selection should need fewer resets ({with_map} vs {without_map})"
    );
}

// ---------------------------------------------------------------------------
// world files
// ---------------------------------------------------------------------------

#[test]
fn world_bundle_roundtrips_exactly() {
    let world = generate_world(WorldKind::Structured, 200, 23).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.world");
    save_world(&world, &path).unwrap();
    let loaded = load_world(&path).unwrap();
    assert_eq!(world, loaded);
}

#[test]
fn loading_garbage_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.world");
    std::fs::write(&path, b"WRLD9\nnot a world").unwrap();
    assert!(matches!(
        load_world(&path),
        Err(SimError::MalformedWorld(_))
    ));
    std::fs::write(&path, b"WR").unwrap();
    assert!(load_world(&path).is_err());
}

/// Diagnostic, not an invariant: run with `--ignored --nocapture` to inspect
/// unstructured generation (graph size, route length) across seeds.
#[test]
#[ignore = "diagnostic printout for tuning, asserts nothing beyond success"]
fn unstructured_generation_diagnostics() {
    for seed in 0..3 {
        match generate_world(WorldKind::Unstructured, 600, seed) {
            Ok(world) => {
                let poly =
                    route_polyline(&world.traversable, &world.graph, &world.route_nodes).unwrap();
                println!(
                    "seed {seed}: {} nodes / {} edges, route {:.1} m over {} nodes",
                    world.graph.len(),
                    world.graph.edges().len(),
                    polyline_length(&poly),
                    world.route_nodes.len()
                );
            }
            Err(e) => println!("seed {seed}: FAILED: {e}"),
        }
    }
}
