//! Core algorithms for kitenav: language-conditioned route selection over a
//! topology graph, diffusion-based local trajectory proposals, traversability
//! scoring of those proposals against a learned global map, and a
//! deterministic simulation benchmark that measures the combined policy.

pub mod diffusion;
pub mod geom;
pub mod bench;
pub mod metrics;
pub mod opt;
pub mod raster;
pub mod report;
pub mod seed;
pub mod sim;
pub mod stats;
pub mod topo;
pub mod traversability;
pub mod vlp;

pub use geom::WorldPoint;
pub use raster::{FeatureRaster, GeoRef, ProbabilityRaster, RasterError};
pub use topo::{GraphError, NodeId, TopoEdge, TopoNode, TopologyGraph};
pub use traversability::{
    FocalLossParams, TraversabilityError, TraversabilityModel, WaypointWeightParams,
};
pub use vlp::{
    EmbeddingProvider, LandmarkExtractor, LandmarkList, OptimalPath, SimilarityMatrix, VlpError,
};
