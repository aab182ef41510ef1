//! Topology graph of previously visited places. Each node stores the pose of
//! a place and the embeddings of the first-person images captured there;
//! edges carry metric traversal costs. The graph answers shortest-path
//! distance queries and embedding-based localization.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::WorldPoint;

pub type NodeId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("duplicate node id {0}")]
    DuplicateNodeId(NodeId),
    #[error("edge {from}–{to} references a missing node")]
    DanglingEdge { from: NodeId, to: NodeId },
    #[error("self-loop edge at node {0}")]
    SelfLoop(NodeId),
    #[error("duplicate edge between {a} and {b}")]
    DuplicateEdge { a: NodeId, b: NodeId },
    #[error("edge {from}–{to} has non-finite or negative cost {cost}")]
    BadEdgeCost { from: NodeId, to: NodeId, cost: f64 },
    #[error("node {0} stores no embeddings")]
    MissingEmbeddings(NodeId),
    #[error("node {0} stores an embedding that is not unit length")]
    NotUnitNorm(NodeId),
    #[error("embedding dimension {got} where {expected} expected")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("malformed graph file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A place: pose plus the embeddings of the images stored for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopoNode {
    pub id: NodeId,
    pub pose: WorldPoint,
    /// One unit-norm vector per stored image, all of the graph's dimension.
    pub embeddings: Vec<Vec<f32>>,
    pub image_refs: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopoEdge {
    pub from: NodeId,
    pub to: NodeId,
    /// Traversal cost in meters; the edge is usable in both directions.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologyGraph {
    embedding_dim: usize,
    nodes: BTreeMap<NodeId, TopoNode>,
    edges: Vec<TopoEdge>,
    // neighbor lists sorted by id, so every traversal order is reproducible
    adjacency: BTreeMap<NodeId, Vec<(NodeId, f64)>>,
}

impl TopologyGraph {
    /// Validates and indexes the graph. Rejects duplicate ids, dangling or
    /// duplicated edges, self-loops, bad costs, and embeddings that are
    /// missing, mis-sized, or not unit length.
    pub fn new(
        embedding_dim: usize,
        nodes: Vec<TopoNode>,
        edges: Vec<TopoEdge>,
    ) -> Result<Self, GraphError> {
        let mut map = BTreeMap::new();
        for node in nodes {
            if node.embeddings.is_empty() {
                return Err(GraphError::MissingEmbeddings(node.id));
            }
            for emb in &node.embeddings {
                if emb.len() != embedding_dim {
                    return Err(GraphError::DimensionMismatch {
                        expected: embedding_dim,
                        got: emb.len(),
                    });
                }
                let norm: f32 = emb.iter().map(|v| v * v).sum::<f32>().sqrt();
                if (norm - 1.0).abs() > 1e-6 {
                    return Err(GraphError::NotUnitNorm(node.id));
                }
            }
            let id = node.id;
            if map.insert(id, node).is_some() {
                return Err(GraphError::DuplicateNodeId(id));
            }
        }

        let mut seen_pairs = BTreeSet::new();
        let mut adjacency: BTreeMap<NodeId, Vec<(NodeId, f64)>> =
            map.keys().map(|&id| (id, Vec::new())).collect();
        for edge in &edges {
            if edge.from == edge.to {
                return Err(GraphError::SelfLoop(edge.from));
            }
            if !map.contains_key(&edge.from) || !map.contains_key(&edge.to) {
                return Err(GraphError::DanglingEdge {
                    from: edge.from,
                    to: edge.to,
                });
            }
            if !edge.cost.is_finite() || edge.cost < 0.0 {
                return Err(GraphError::BadEdgeCost {
                    from: edge.from,
                    to: edge.to,
                    cost: edge.cost,
                });
            }
            let pair = (edge.from.min(edge.to), edge.from.max(edge.to));
            if !seen_pairs.insert(pair) {
                return Err(GraphError::DuplicateEdge {
                    a: pair.0,
                    b: pair.1,
                });
            }
            adjacency.get_mut(&edge.from).unwrap().push((edge.to, edge.cost));
            adjacency.get_mut(&edge.to).unwrap().push((edge.from, edge.cost));
        }
        for list in adjacency.values_mut() {
            list.sort_by(|a, b| a.0.cmp(&b.0));
        }

        Ok(Self {
            embedding_dim,
            nodes: map,
            edges,
            adjacency,
        })
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Option<&TopoNode> {
        self.nodes.get(&id)
    }

    /// Nodes in ascending id order.
    pub fn nodes(&self) -> impl Iterator<Item = &TopoNode> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.keys().copied()
    }

    pub fn edges(&self) -> &[TopoEdge] {
        &self.edges
    }

    /// Neighbors of `id` with edge costs, ascending by neighbor id.
    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, f64)] {
        self.adjacency.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Dijkstra from `start`; unreachable nodes are absent from the result.
    pub fn shortest_distances(&self, start: NodeId) -> Result<BTreeMap<NodeId, f64>, GraphError> {
        if !self.nodes.contains_key(&start) {
            return Err(GraphError::UnknownNode(start));
        }
        let mut dist = BTreeMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(start, 0.0);
        heap.push(HeapEntry {
            dist: 0.0,
            node: start,
        });
        while let Some(HeapEntry { dist: d, node }) = heap.pop() {
            if d > dist[&node] {
                continue; // stale entry
            }
            for &(next, cost) in self.neighbors(node) {
                let nd = d + cost;
                if dist.get(&next).is_none_or(|&cur| nd < cur) {
                    dist.insert(next, nd);
                    heap.push(HeapEntry {
                        dist: nd,
                        node: next,
                    });
                }
            }
        }
        Ok(dist)
    }

    /// Node ids within `hops` edges of `center`, including `center` itself.
    pub fn nodes_within_hops(&self, center: NodeId, hops: usize) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(center);
        queue.push_back((center, 0usize));
        while let Some((node, depth)) = queue.pop_front() {
            if depth == hops {
                continue;
            }
            for &(next, _) in self.neighbors(node) {
                if seen.insert(next) {
                    queue.push_back((next, depth + 1));
                }
            }
        }
        seen
    }

    /// Returns the node whose stored embeddings best match `observation`
    /// (max dot product over the node's images). With a prior, only nodes
    /// within `hop_window` hops of it compete. Ties go to the smallest id.
    pub fn localize(
        &self,
        observation: &[f32],
        prior: Option<NodeId>,
        hop_window: usize,
    ) -> Result<NodeId, GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        if observation.len() != self.embedding_dim {
            return Err(GraphError::DimensionMismatch {
                expected: self.embedding_dim,
                got: observation.len(),
            });
        }
        let window: Option<BTreeSet<NodeId>> = match prior {
            Some(p) => {
                if !self.nodes.contains_key(&p) {
                    return Err(GraphError::UnknownNode(p));
                }
                Some(self.nodes_within_hops(p, hop_window))
            }
            None => None,
        };
        let mut best: Option<(f32, NodeId)> = None;
        for node in self.nodes.values() {
            if let Some(w) = &window {
                if !w.contains(&node.id) {
                    continue;
                }
            }
            let score = node
                .embeddings
                .iter()
                .map(|e| dot(e, observation))
                .fold(f32::NEG_INFINITY, f32::max);
            // strict > keeps the smallest id on ties (ascending iteration)
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, node.id));
            }
        }
        Ok(best.expect("window always contains the prior").1)
    }

    pub fn save(&self, path: &Path) -> Result<(), GraphError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_json_bytes())?;
        Ok(())
    }

    /// Loads and re-validates, so structural defects in the file (duplicate
    /// ids, dangling edges) surface as their own errors.
    pub fn load(path: &Path) -> Result<Self, GraphError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_json_bytes(&bytes)
    }

    /// The JSON graph document as bytes, for embedding in bundle files.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let file = GraphFile {
            embedding_dim: self.embedding_dim,
            nodes: self.nodes.values().cloned().collect(),
            edges: self.edges.clone(),
        };
        serde_json::to_vec(&file).expect("graph serialization cannot fail")
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self, GraphError> {
        let file: GraphFile =
            serde_json::from_slice(bytes).map_err(|e| GraphError::MalformedFile(e.to_string()))?;
        Self::new(file.embedding_dim, file.nodes, file.edges)
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    embedding_dim: usize,
    nodes: Vec<TopoNode>,
    edges: Vec<TopoEdge>,
}

struct HeapEntry {
    dist: f64,
    node: NodeId,
}

// min-heap on distance; id breaks exact ties so pop order is deterministic
impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .partial_cmp(&self.dist)
            .expect("edge costs are finite")
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}

impl Eq for HeapEntry {}
