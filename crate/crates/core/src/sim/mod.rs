//! Deterministic 2-D navigation benchmark: seeded world generators, a robot
//! execution loop with receding-horizon replanning, dynamic obstacles, and
//! automated intervention handling standing in for a human operator.

mod dataset;
mod optimal;
#[cfg(test)]
mod tests;
mod trial;
mod wio;
mod worldgen;

pub use dataset::{local_planner_dataset, traversability_dataset};
pub use optimal::geodesic_length;
pub use trial::{
    apply_intervention, detect_intervention, run_trial, step, InterventionCause,
    InterventionLimits, InterventionMonitor, PolicyConfig, PolicyMode, RobotState, TrialAssets,
    TrialEvent, TrialResult,
};
pub use wio::{load_world, save_world};
pub use worldgen::{generate_world, MIN_WORLD_CELLS};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geom::{polyline_length, polyline_point_at, WorldPoint};
use crate::raster::{FeatureRaster, ProbabilityRaster};
use crate::topo::{NodeId, TopologyGraph};
use crate::vlp::TagOracleProvider;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("world needs at least {min}×{min} cells, got {got}×{got}")]
    SizeTooSmall { min: usize, got: usize },
    #[error("no traversable point anywhere on the planned route")]
    NoTraversablePointOnRoute,
    #[error("instruction cannot be routed: {0}")]
    RoutePlanning(#[from] crate::vlp::VlpError),
    #[error("policy mode needs {0} but none was supplied")]
    MissingAsset(&'static str),
    #[error("graph error: {0}")]
    Graph(#[from] crate::topo::GraphError),
    #[error("malformed world file: {0}")]
    MalformedWorld(String),
    #[error("raster error: {0}")]
    Raster(#[from] crate::raster::RasterError),
    #[error("trajectory sampling failed: {0}")]
    Diffusion(#[from] crate::diffusion::DiffusionError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    Structured,
    Unstructured,
}

impl std::fmt::Display for WorldKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WorldKind::Structured => write!(f, "structured"),
            WorldKind::Unstructured => write!(f, "unstructured"),
        }
    }
}

/// A mover patrolling a closed loop at constant speed. Its position is a
/// pure function of simulated time, which keeps trials replayable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    /// Loop vertices; the segment from the last vertex back to the first
    /// closes the loop implicitly.
    pub loop_points: Vec<WorldPoint>,
    pub speed: f64,
    pub radius: f64,
    /// Arc-length offset at t = 0, meters.
    pub phase: f64,
}

impl DynamicObstacle {
    fn closed(&self) -> Vec<WorldPoint> {
        let mut pts = self.loop_points.clone();
        if let Some(first) = self.loop_points.first() {
            pts.push(*first);
        }
        pts
    }

    pub fn loop_length(&self) -> f64 {
        polyline_length(&self.closed())
    }

    pub fn position(&self, time: f64) -> WorldPoint {
        let closed = self.closed();
        let total = polyline_length(&closed);
        if total <= 0.0 {
            return self.loop_points[0];
        }
        let arc = (self.phase + self.speed * time).rem_euclid(total);
        polyline_point_at(&closed, arc)
    }
}

/// Everything a trial needs: ground-truth terrain, the feature channels the
/// map classifier trains on, patrolling obstacles, the place graph, and the
/// instructed task.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub kind: WorldKind,
    /// Ground truth: cells are exactly 1.0 (traversable) or 0.0.
    pub traversable: ProbabilityRaster,
    pub features: FeatureRaster,
    pub obstacles: Vec<DynamicObstacle>,
    pub graph: TopologyGraph,
    /// Tag vocabulary backing the embedding provider.
    pub landmark_vocab: Vec<String>,
    /// Tag name of each graph node.
    pub node_tags: BTreeMap<NodeId, String>,
    /// View-embedding ambiguity baked into the node images (also used for
    /// runtime observations).
    pub view_ambiguity: f64,
    /// Shared-background scene name for view refs, if the terrain is
    /// monotonous.
    pub view_background: Option<String>,
    /// Standard deviation of the metric pose estimate, meters.
    pub localization_sigma: f64,
    pub spawn: WorldPoint,
    pub goal: WorldPoint,
    pub instruction: String,
    /// Node route the instruction describes, spawn node first.
    pub route_nodes: Vec<NodeId>,
    pub rng_seed: u64,
}

impl World {
    pub fn is_traversable(&self, point: &WorldPoint) -> bool {
        matches!(self.traversable.sample_prob(point), Ok(p) if p > 0.5)
    }

    pub fn provider(&self) -> TagOracleProvider {
        TagOracleProvider::new(self.landmark_vocab.clone())
    }

    /// Obstacle footprints at a given time, for stamping onto live maps.
    pub fn obstacle_disks(&self, time: f64) -> Vec<(WorldPoint, f64)> {
        self.obstacles
            .iter()
            .map(|o| (o.position(time), o.radius))
            .collect()
    }

    /// The ref string for what a robot standing at a node tagged `tag` sees,
    /// sharing the world's ambiguity and backdrop. `sample` distinguishes
    /// repeated looks at the same place.
    pub fn view_ref(&self, tag: &str, sample: u64) -> String {
        view_ref_string(
            self.view_ambiguity,
            self.view_background.as_deref(),
            tag,
            sample,
        )
    }
}

/// Shared view-ref formatting so stored node images and runtime observations
/// come from the same camera model.
pub(crate) fn view_ref_string(
    ambiguity: f64,
    background: Option<&str>,
    tag: &str,
    sample: u64,
) -> String {
    match background {
        Some(bg) => format!("view:{tag};amb={ambiguity};bg={bg};i={sample}"),
        None => format!("view:{tag};amb={ambiguity};i={sample}"),
    }
}
