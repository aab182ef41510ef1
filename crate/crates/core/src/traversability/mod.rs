//! Global scoring layer: weights candidate waypoints by goal distance and
//! orientation, scores candidates against a traversability probability map,
//! and picks the best one. The map itself comes from a small per-cell
//! classifier trained with a focal loss (see [`model`]).

mod io;
mod model;

pub use io::{load_model, load_samples, save_model, save_samples, write_training_log};
pub use model::{
    focal_loss, focal_loss_dp, predict_map, train_traversability, FocalLossParams, TrainSample,
    TraversabilityModel,
};

use crate::diffusion::{CandidateSet, Trajectory};
use crate::geom::WorldPoint;
use crate::raster::ProbabilityRaster;

#[derive(Debug, thiserror::Error)]
pub enum TraversabilityError {
    #[error("training needs both traversable and non-traversable samples")]
    DegenerateDataset,
    #[error("model expects {expected} features, got {got}")]
    FeatureDimMismatch { expected: usize, got: usize },
    #[error("sample features must be finite")]
    NonFiniteFeature,
    #[error("malformed model checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error("malformed sample set at line {line}: {message}")]
    MalformedDataset { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Shape of the per-waypoint weight: exponential decay in distance-to-goal
/// times a cosine window on the bearing relative to the goal direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaypointWeightParams {
    /// e-folding distance of the goal-distance decay, meters.
    pub distance_scale: f64,
    /// Lower bound of the orientation factor, so waypoints behind the robot
    /// still count a little.
    pub orientation_floor: f64,
}

impl Default for WaypointWeightParams {
    fn default() -> Self {
        Self {
            distance_scale: 10.0,
            orientation_floor: 0.1,
        }
    }
}

/// Weight in [0,1] for one waypoint:
/// exp(−‖point − goal‖/scale) · max(floor, (1 + cos θ)/2)
/// with θ the angle at the robot between the waypoint and the goal. The
/// orientation factor is 1 when the waypoint or the goal coincides with the
/// robot (no bearing defined).
pub fn waypoint_weight(
    point: &WorldPoint,
    robot: &WorldPoint,
    goal: &WorldPoint,
    params: &WaypointWeightParams,
) -> f64 {
    debug_assert!(params.distance_scale > 0.0);
    let distance_factor = (-point.distance(goal) / params.distance_scale).exp();
    let (ax, ay) = point.sub(robot);
    let (bx, by) = goal.sub(robot);
    let na = (ax * ax + ay * ay).sqrt();
    let nb = (bx * bx + by * by).sqrt();
    let orientation = if na == 0.0 || nb == 0.0 {
        1.0
    } else {
        let cos = ((ax * bx + ay * by) / (na * nb)).clamp(-1.0, 1.0);
        (params.orientation_floor).max((1.0 + cos) / 2.0)
    };
    distance_factor * orientation
}

/// Sum over waypoints of map probability × waypoint weight. Waypoints
/// outside the raster extent contribute nothing. Summation is fixed
/// left-to-right so the result is independent of any evaluation parallelism.
pub fn score_path(
    candidate: &Trajectory,
    raster: &ProbabilityRaster,
    robot: &WorldPoint,
    goal: &WorldPoint,
    params: &WaypointWeightParams,
) -> f64 {
    let mut score = 0.0;
    for &[x, y] in &candidate.waypoints {
        let point = WorldPoint::new(x, y);
        if let Ok(p) = raster.sample_prob(&point) {
            score += f64::from(p) * waypoint_weight(&point, robot, goal, params);
        }
    }
    score
}

/// Argmax of [`score_path`] over a candidate set fresh from the trajectory
/// generator: candidates are robot-centric offsets and are shifted to the
/// world frame around `robot` before scoring. Ties go to the smallest index.
/// Returns the winning index and the winner's world-frame waypoints.
pub fn select_best(
    candidates: &CandidateSet,
    raster: &ProbabilityRaster,
    robot: &WorldPoint,
    goal: &WorldPoint,
    params: &WaypointWeightParams,
) -> (usize, Trajectory) {
    assert!(
        !candidates.candidates.is_empty(),
        "candidate set must be non-empty"
    );
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    let mut best_world = None;
    for (k, candidate) in candidates.candidates.iter().enumerate() {
        let world = Trajectory {
            waypoints: candidate
                .to_world(robot)
                .iter()
                .map(|p| [p.x, p.y])
                .collect(),
        };
        let s = score_path(&world, raster, robot, goal, params);
        if s > best_score {
            best = k;
            best_score = s;
            best_world = Some(world);
        }
    }
    (best, best_world.expect("non-empty candidate set"))
}
