//! World bundle files: a `WRLD1` magic line, a JSON metadata line, then the
//! terrain raster, feature raster, and place graph as length-prefixed blocks.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::geom::WorldPoint;
use crate::raster::{FeatureRaster, ProbabilityRaster};
use crate::topo::{NodeId, TopologyGraph};

use super::{DynamicObstacle, SimError, World, WorldKind};

const MAGIC: &[u8] = b"WRLD1\n";

/// Everything that is not one of the three bulk blocks.
#[derive(Serialize, Deserialize)]
struct Meta {
    kind: WorldKind,
    obstacles: Vec<DynamicObstacle>,
    landmark_vocab: Vec<String>,
    node_tags: BTreeMap<NodeId, String>,
    view_ambiguity: f64,
    view_background: Option<String>,
    localization_sigma: f64,
    spawn: WorldPoint,
    goal: WorldPoint,
    instruction: String,
    route_nodes: Vec<NodeId>,
    rng_seed: u64,
}

fn write_block(w: &mut impl Write, bytes: &[u8]) -> std::io::Result<()> {
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(bytes)
}

fn read_block(r: &mut impl Read) -> Result<Vec<u8>, SimError> {
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len);
    if len > (1 << 32) {
        return Err(SimError::MalformedWorld(format!(
            "block length {len} is implausibly large"
        )));
    }
    let mut bytes = vec![0u8; len as usize];
    r.read_exact(&mut bytes)?;
    Ok(bytes)
}

pub fn save_world(world: &World, path: &Path) -> Result<(), SimError> {
    let meta = Meta {
        kind: world.kind,
        obstacles: world.obstacles.clone(),
        landmark_vocab: world.landmark_vocab.clone(),
        node_tags: world.node_tags.clone(),
        view_ambiguity: world.view_ambiguity,
        view_background: world.view_background.clone(),
        localization_sigma: world.localization_sigma,
        spawn: world.spawn,
        goal: world.goal,
        instruction: world.instruction.clone(),
        route_nodes: world.route_nodes.clone(),
        rng_seed: world.rng_seed,
    };
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    let meta_line =
        serde_json::to_vec(&meta).map_err(|e| SimError::MalformedWorld(e.to_string()))?;
    w.write_all(&meta_line)?;
    w.write_all(b"\n")?;
    write_block(&mut w, &world.traversable.to_bytes())?;
    write_block(&mut w, &world.features.to_bytes())?;
    write_block(&mut w, &world.graph.to_json_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load_world(path: &Path) -> Result<World, SimError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; MAGIC.len()];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(SimError::MalformedWorld(
            "not a world bundle (bad magic)".into(),
        ));
    }
    let mut meta_line = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        r.read_exact(&mut byte)?;
        if byte[0] == b'\n' {
            break;
        }
        meta_line.push(byte[0]);
        if meta_line.len() > (1 << 24) {
            return Err(SimError::MalformedWorld("unterminated metadata line".into()));
        }
    }
    let meta: Meta =
        serde_json::from_slice(&meta_line).map_err(|e| SimError::MalformedWorld(e.to_string()))?;

    let traversable = ProbabilityRaster::from_bytes(&read_block(&mut r)?)
        .map_err(|e| SimError::MalformedWorld(format!("terrain block: {e}")))?;
    let features = FeatureRaster::from_bytes(&read_block(&mut r)?)
        .map_err(|e| SimError::MalformedWorld(format!("feature block: {e}")))?;
    let graph = TopologyGraph::from_json_bytes(&read_block(&mut r)?)
        .map_err(|e| SimError::MalformedWorld(format!("graph block: {e}")))?;

    let world = World {
        kind: meta.kind,
        traversable,
        features,
        obstacles: meta.obstacles,
        graph,
        landmark_vocab: meta.landmark_vocab,
        node_tags: meta.node_tags,
        view_ambiguity: meta.view_ambiguity,
        view_background: meta.view_background,
        localization_sigma: meta.localization_sigma,
        spawn: meta.spawn,
        goal: meta.goal,
        instruction: meta.instruction,
        route_nodes: meta.route_nodes,
        rng_seed: meta.rng_seed,
    };
    validate(&world)?;
    Ok(world)
}

fn validate(world: &World) -> Result<(), SimError> {
    if world.landmark_vocab.len() < 2 {
        return Err(SimError::MalformedWorld(
            "vocabulary needs at least two tags".into(),
        ));
    }
    if world.route_nodes.is_empty() {
        return Err(SimError::MalformedWorld("empty route".into()));
    }
    for id in &world.route_nodes {
        if world.graph.node(*id).is_none() {
            return Err(SimError::MalformedWorld(format!(
                "route references missing node {id}"
            )));
        }
        if !world.node_tags.contains_key(id) {
            return Err(SimError::MalformedWorld(format!(
                "route node {id} has no tag"
            )));
        }
    }
    for o in &world.obstacles {
        if o.loop_points.is_empty() || o.radius <= 0.0 || o.speed < 0.0 {
            return Err(SimError::MalformedWorld("degenerate obstacle".into()));
        }
    }
    Ok(())
}
