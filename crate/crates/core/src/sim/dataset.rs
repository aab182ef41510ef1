//! Training-set extraction from generated worlds: expert short-horizon
//! trajectories for the trajectory sampler, and labeled terrain cells for
//! the map classifier.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::diffusion::{ConditioningContext, Trajectory};
use crate::geom::{polyline_length, polyline_point_at, WorldPoint};
use crate::raster::{GeoRef, ProbabilityRaster};
use crate::seed::{self, stage};
use crate::sim::optimal::{grid_path, string_pull};
use crate::sim::trial::sense_patch;
use crate::sim::worldgen::route_polyline;
use crate::sim::{SimError, World};
use crate::traversability::TrainSample;

/// Horizon of one expert snippet: subgoal distance ahead along the route.
const HORIZON_M: f64 = 4.0;
/// Waypoints per expert trajectory, matching the sampler's output shape.
const EXPERT_WAYPOINTS: usize = 8;
/// Waypoint spacing of the resampled expert trajectory.
const WAYPOINT_SPACING_M: f64 = 0.5;
/// Half-extent of the local planning window used to compute experts.
const LOCAL_HALF_M: f64 = 7.75;
const LOCAL_RES_M: f64 = 0.5;
/// Fraction of samples that get a synthetic blocker pushed onto the route
/// ahead, so the expert demonstrates avoidance, not just line-following.
const BLOCKER_PROB: f64 = 0.4;

/// Expert conditioning/trajectory pairs for training the local trajectory
/// sampler. Poses are scattered along (and jittered off) the world's route;
/// targets are shortest traversable paths to a subgoal 4 m ahead, expressed
/// robot-centrically.
pub fn local_planner_dataset(
    world: &World,
    count: usize,
    seed: u64,
) -> Result<Vec<(ConditioningContext, Trajectory)>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(world.rng_seed, stage::DATASET_LP, seed));
    let route = route_polyline(&world.traversable, &world.graph, &world.route_nodes)?;
    let route_len = polyline_length(&route);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    let attempt_cap = count.saturating_mul(60).max(1000);
    while out.len() < count && attempts < attempt_cap {
        attempts += 1;
        let arc = rng.gen_range(0.0..(route_len - HORIZON_M).max(1e-6));
        let anchor = polyline_point_at(&route, arc);
        let carrot = polyline_point_at(&route, arc + HORIZON_M);

        // jitter the start pose off the route a little; experts must also
        // apply from imperfect positions
        let mut pose = None;
        for _ in 0..8 {
            let jx: f64 = StandardNormal.sample(&mut rng);
            let jy: f64 = StandardNormal.sample(&mut rng);
            let p = anchor.add_offset(0.5 * jx, 0.5 * jy);
            if world.is_traversable(&p) {
                pose = Some(p);
                break;
            }
        }
        let Some(pose) = pose else { continue };

        let blocker = if rng.gen_bool(BLOCKER_PROB) {
            let along = arc + rng.gen_range(1.2..2.6);
            let on_route = polyline_point_at(&route, along);
            let center = on_route.add_offset(
                rng.gen_range(-0.6..0.6),
                rng.gen_range(-0.6..0.6),
            );
            let radius = rng.gen_range(0.8..1.0);
            Some((center, radius))
        } else {
            None
        };

        let sample = expert_sample(world, &pose, &carrot, blocker)
            // a blocker can seal the corridor; the clear-path variant of the
            // same scene is still a valid demonstration
            .or_else(|| blocker.and_then(|_| expert_sample(world, &pose, &carrot, None)));
        if let Some(pair) = sample {
            out.push(pair);
        }
    }
    Ok(out)
}

/// Compute one expert pair, or `None` if no traversable path to the subgoal
/// exists in the local window.
fn expert_sample(
    world: &World,
    pose: &WorldPoint,
    carrot: &WorldPoint,
    blocker: Option<(WorldPoint, f64)>,
) -> Option<(ConditioningContext, Trajectory)> {
    let local = local_window(world, pose, blocker);
    let path = grid_path(&local, pose, carrot)?;
    let pulled = string_pull(&local, &path, LOCAL_RES_M * 0.4);

    // resample to fixed-size robot-centric waypoints, holding at the end
    let total = polyline_length(&pulled);
    let waypoints = (1..=EXPERT_WAYPOINTS)
        .map(|i| {
            let d = (i as f64 * WAYPOINT_SPACING_M).min(total);
            let p = polyline_point_at(&pulled, d);
            [p.x - pose.x, p.y - pose.y]
        })
        .collect();

    let disks: Vec<(WorldPoint, f64)> = blocker.into_iter().collect();
    let context = ConditioningContext {
        observation_features: sense_patch(&world.traversable, &disks, pose),
        goal_offset: [carrot.x - pose.x, carrot.y - pose.y],
        localization: *pose,
    };
    Some((context, Trajectory { waypoints }))
}

/// Ground-truth occupancy in a window around `pose`, with the synthetic
/// blocker stamped in. Cells outside the world count as blocked.
fn local_window(
    world: &World,
    pose: &WorldPoint,
    blocker: Option<(WorldPoint, f64)>,
) -> ProbabilityRaster {
    let cells_per_side = (2.0 * LOCAL_HALF_M / LOCAL_RES_M).round() as usize;
    let georef = GeoRef::new(
        pose.x - LOCAL_HALF_M,
        pose.y - LOCAL_HALF_M,
        LOCAL_RES_M,
        cells_per_side,
        cells_per_side,
    );
    let mut cells = Vec::with_capacity(georef.cell_count());
    for row in 0..georef.height {
        for col in 0..georef.width {
            let center = georef.cell_center(row, col);
            cells.push(if world.is_traversable(&center) { 1.0 } else { 0.0 });
        }
    }
    let raster = ProbabilityRaster::new(georef, cells).expect("cells match georef");
    match blocker {
        Some(disk) => raster.with_zeroed_disks(&[disk]),
        None => raster,
    }
}

/// Balanced labeled cells for the map classifier: traversed cells along the
/// demonstration route against untraversable cells sampled globally.
pub fn traversability_dataset(
    world: &World,
    per_class: usize,
    seed: u64,
) -> Result<Vec<TrainSample>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(world.rng_seed, stage::DATASET_GP, seed));
    let route = route_polyline(&world.traversable, &world.graph, &world.route_nodes)?;
    let route_len = polyline_length(&route);
    let georef = *world.features.georef();
    let mut out = Vec::with_capacity(per_class * 2);

    let mut positives = 0usize;
    let mut guard = 0usize;
    while positives < per_class && guard < per_class * 200 {
        guard += 1;
        let arc = rng.gen_range(0.0..route_len);
        let p = polyline_point_at(&route, arc).add_offset(
            rng.gen_range(-1.2..1.2),
            rng.gen_range(-1.2..1.2),
        );
        if !world.is_traversable(&p) {
            continue;
        }
        let Ok((row, col)) = georef.world_to_cell(&p) else {
            continue;
        };
        out.push(TrainSample {
            features: world
                .features
                .features_at(row, col)
                .iter()
                .map(|&v| f64::from(v))
                .collect(),
            traversed: true,
        });
        positives += 1;
    }

    let mut negatives = 0usize;
    guard = 0;
    while negatives < per_class && guard < per_class * 200 {
        guard += 1;
        let row = rng.gen_range(0..georef.height);
        let col = rng.gen_range(0..georef.width);
        if world.traversable.get(row, col) > 0.5 {
            continue;
        }
        out.push(TrainSample {
            features: world
                .features
                .features_at(row, col)
                .iter()
                .map(|&v| f64::from(v))
                .collect(),
            traversed: false,
        });
        negatives += 1;
    }
    Ok(out)
}
