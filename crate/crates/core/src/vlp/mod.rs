//! Language-conditioned route selection: extract ordered landmarks from an
//! instruction, score every graph node against every landmark, and search the
//! product space (node, landmarks matched so far) for the route that
//! maximizes matched similarity minus a length penalty, visiting landmarks in
//! instruction order.

mod extract;
mod providers;

pub use extract::{LandmarkExtractor, RuleBasedExtractor};
pub use providers::{HashEmbeddingProvider, TagOracleProvider};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, BTreeMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topo::{dot, NodeId, TopologyGraph};

#[derive(Debug, Error)]
pub enum VlpError {
    #[error("no landmarks could be extracted from the instruction")]
    NoLandmarksFound,
    #[error("landmark list must not be empty")]
    EmptyLandmarkList,
    #[error("embedding dimension {got} where {expected} expected")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("similarity matrix shape {rows}×{cols} does not match {nodes} nodes × {landmarks} landmarks")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        nodes: usize,
        landmarks: usize,
    },
    #[error("similarity matrix contains a non-finite score")]
    NonFiniteScore,
    #[error("unknown node id {0}")]
    UnknownNode(NodeId),
    #[error("landmark {landmark} has no positively scored node reachable from the start")]
    Unreachable { landmark: usize },
}

/// Ordered landmark phrases, first-to-last as they appear in the instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkList {
    landmarks: Vec<String>,
}

impl LandmarkList {
    pub fn new(landmarks: Vec<String>) -> Result<Self, VlpError> {
        if landmarks.is_empty() {
            return Err(VlpError::EmptyLandmarkList);
        }
        Ok(Self { landmarks })
    }

    pub fn as_slice(&self) -> &[String] {
        &self.landmarks
    }

    pub fn len(&self) -> usize {
        self.landmarks.len()
    }

    pub fn is_empty(&self) -> bool {
        false // constructor rejects empty lists
    }
}

/// Deterministic stand-in for a vision–language encoder pair: both directions
/// map into the same d-dimensional unit sphere.
pub trait EmbeddingProvider: Sync {
    fn dim(&self) -> usize;
    fn embed_image(&self, image_ref: &str) -> Vec<f32>;
    fn embed_text(&self, text: &str) -> Vec<f32>;
}

/// Node × landmark similarity scores. Row r holds node `node_index[r]`;
/// column j holds landmark j of the list.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    node_index: Vec<NodeId>,
    node_rows: BTreeMap<NodeId, usize>,
    landmarks: LandmarkList,
    values: Vec<f64>, // row-major
}

impl SimilarityMatrix {
    pub fn from_rows(
        node_index: Vec<NodeId>,
        landmarks: LandmarkList,
        values: Vec<f64>,
    ) -> Result<Self, VlpError> {
        if values.len() != node_index.len() * landmarks.len() {
            return Err(VlpError::ShapeMismatch {
                rows: values.len() / landmarks.len().max(1),
                cols: landmarks.len(),
                nodes: node_index.len(),
                landmarks: landmarks.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VlpError::NonFiniteScore);
        }
        let node_rows = node_index
            .iter()
            .enumerate()
            .map(|(row, &id)| (id, row))
            .collect();
        Ok(Self {
            node_index,
            node_rows,
            landmarks,
            values,
        })
    }

    pub fn node_ids(&self) -> &[NodeId] {
        &self.node_index
    }

    pub fn landmarks(&self) -> &LandmarkList {
        &self.landmarks
    }

    pub fn landmark_count(&self) -> usize {
        self.landmarks.len()
    }

    /// Score of (node, landmark j); None when the node has no row.
    pub fn get(&self, node: NodeId, landmark: usize) -> Option<f64> {
        let row = *self.node_rows.get(&node)?;
        Some(self.values[row * self.landmarks.len() + landmark])
    }

    /// CSV dump: header of landmark phrases, one row per node id.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("node");
        for l in self.landmarks.as_slice() {
            write!(out, ",{}", l.replace(',', ";")).unwrap();
        }
        out.push('\n');
        for (row, &id) in self.node_index.iter().enumerate() {
            write!(out, "{id}").unwrap();
            for j in 0..self.landmarks.len() {
                write!(out, ",{:.6}", self.values[row * self.landmarks.len() + j]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Best-scoring image–landmark similarity per node: the score of landmark j
/// at node i is the max dot product over the node's stored embeddings with
/// the landmark's text embedding. Text embeddings are computed once each.
pub fn similarity_matrix(
    graph: &TopologyGraph,
    landmarks: &LandmarkList,
    provider: &dyn EmbeddingProvider,
) -> Result<SimilarityMatrix, VlpError> {
    if provider.dim() != graph.embedding_dim() {
        return Err(VlpError::DimensionMismatch {
            expected: graph.embedding_dim(),
            got: provider.dim(),
        });
    }
    let text_embeddings: Vec<Vec<f32>> = landmarks
        .as_slice()
        .iter()
        .map(|l| provider.embed_text(l))
        .collect();
    for t in &text_embeddings {
        if t.len() != graph.embedding_dim() {
            return Err(VlpError::DimensionMismatch {
                expected: graph.embedding_dim(),
                got: t.len(),
            });
        }
    }
    let mut node_index = Vec::with_capacity(graph.len());
    let mut values = Vec::with_capacity(graph.len() * landmarks.len());
    for node in graph.nodes() {
        node_index.push(node.id);
        for text in &text_embeddings {
            let s = node
                .embeddings
                .iter()
                .map(|e| dot(e, text))
                .fold(f32::NEG_INFINITY, f32::max);
            values.push(s as f64);
        }
    }
    SimilarityMatrix::from_rows(node_index, landmarks.clone(), values)
}

/// A walk through the graph that matches every landmark in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalPath {
    /// Visited nodes from the start node to the final match, consecutive
    /// pairs adjacent in the graph.
    pub nodes: Vec<NodeId>,
    /// For each landmark, the node where it was matched; positions along
    /// `nodes` are non-decreasing.
    pub matched_landmarks: Vec<NodeId>,
    /// Matched similarity total minus `beta_cost` times the walk length.
    pub total_value: f64,
    /// Metric length of the walk, meters.
    pub path_length: f64,
}

/// Searches the layered product space (graph node, landmarks matched so far).
/// Landmark j may be matched at node v only when its similarity there is
/// strictly positive and v is reachable (present in `distances`, which must
/// come from `shortest_distances(graph, v_start)`).
///
/// Exact ties are resolved by a fixed total order: higher value, then shorter
/// metric length, then fewer visited nodes, then lexicographically smaller
/// node sequence, then lexicographically smaller match assignment.
pub fn plan_route(
    graph: &TopologyGraph,
    sim: &SimilarityMatrix,
    distances: &BTreeMap<NodeId, f64>,
    v_start: NodeId,
    beta_cost: f64,
) -> Result<OptimalPath, VlpError> {
    if graph.node(v_start).is_none() || !distances.contains_key(&v_start) {
        return Err(VlpError::UnknownNode(v_start));
    }
    let n = sim.landmark_count();
    for node in graph.nodes() {
        if sim.get(node.id, 0).is_none() {
            return Err(VlpError::ShapeMismatch {
                rows: sim.node_ids().len(),
                cols: n,
                nodes: graph.len(),
                landmarks: n,
            });
        }
    }
    for j in 0..n {
        let feasible = distances
            .keys()
            .any(|&v| sim.get(v, j).is_some_and(|s| s > 0.0));
        if !feasible {
            return Err(VlpError::Unreachable { landmark: j });
        }
    }

    // layers[k] holds the best label per node with k landmarks matched
    let mut layers: Vec<BTreeMap<NodeId, Label>> = vec![BTreeMap::new(); n + 1];
    layers[0].insert(
        v_start,
        Label {
            value: 0.0,
            length: 0.0,
            parent: Parent::Start,
        },
    );

    for k in 0..=n {
        relax_layer(graph, distances, beta_cost, &mut layers, k);
        if k == n {
            break;
        }
        // project: match landmark k at any node where it scores positively
        let seeds: Vec<(NodeId, Label)> = layers[k]
            .iter()
            .filter_map(|(&v, label)| {
                let s = sim.get(v, k).expect("shape checked above");
                (s > 0.0).then_some((
                    v,
                    Label {
                        value: label.value + s,
                        length: label.length,
                        parent: Parent::Match,
                    },
                ))
            })
            .collect();
        for (v, label) in seeds {
            if improves(&layers, k + 1, v, &label) {
                layers[k + 1].insert(v, label);
            }
        }
    }

    // moving after the final match only worsens the label, so the optimum is
    // the best final-layer label as projected
    let mut best: Option<NodeId> = None;
    for &v in layers[n].keys() {
        match best {
            None => best = Some(v),
            Some(b) => {
                let cand = layers[n][&v];
                if label_better(&layers, n, v, &cand, b) {
                    best = Some(v);
                }
            }
        }
    }
    let end = best.expect("feasibility check guarantees a complete assignment");
    let label = layers[n][&end];
    let (nodes, matched_landmarks) = reconstruct(&layers, n, end, label.parent);
    Ok(OptimalPath {
        nodes,
        matched_landmarks,
        total_value: label.value,
        path_length: label.length,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Label {
    value: f64,
    length: f64,
    parent: Parent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Parent {
    Start,
    /// Arrived along an edge from `from`, same layer.
    Move { from: NodeId },
    /// Matched a landmark here, coming from the previous layer at this node.
    Match,
}

/// Dijkstra within one layer; arc weights (beta·cost, cost) are non-negative,
/// so labels finalize in pop order apart from tie refinements, which re-push.
fn relax_layer(
    graph: &TopologyGraph,
    distances: &BTreeMap<NodeId, f64>,
    beta_cost: f64,
    layers: &mut [BTreeMap<NodeId, Label>],
    k: usize,
) {
    let mut heap: BinaryHeap<PqEntry> = layers[k]
        .iter()
        .map(|(&node, label)| PqEntry {
            value: label.value,
            length: label.length,
            node,
        })
        .collect();
    while let Some(entry) = heap.pop() {
        let cur = layers[k][&entry.node];
        if entry.value != cur.value || entry.length != cur.length {
            continue; // stale
        }
        for &(next, cost) in graph.neighbors(entry.node) {
            if !distances.contains_key(&next) {
                continue;
            }
            let cand = Label {
                value: cur.value - beta_cost * cost,
                length: cur.length + cost,
                parent: Parent::Move { from: entry.node },
            };
            if improves(layers, k, next, &cand) {
                layers[k].insert(next, cand);
                heap.push(PqEntry {
                    value: cand.value,
                    length: cand.length,
                    node: next,
                });
            }
        }
    }
}

/// True when `cand` at (k, node) beats the stored label in the tie order.
fn improves(layers: &[BTreeMap<NodeId, Label>], k: usize, node: NodeId, cand: &Label) -> bool {
    match layers[k].get(&node) {
        None => true,
        Some(_) => label_better_in_place(layers, k, node, cand),
    }
}

fn label_better_in_place(
    layers: &[BTreeMap<NodeId, Label>],
    k: usize,
    node: NodeId,
    cand: &Label,
) -> bool {
    let inc = layers[k][&node];
    match cand
        .value
        .partial_cmp(&inc.value)
        .expect("scores are finite")
    {
        Ordering::Greater => return true,
        Ordering::Less => return false,
        Ordering::Equal => {}
    }
    match cand.length.partial_cmp(&inc.length).expect("finite") {
        Ordering::Less => return true,
        Ordering::Greater => return false,
        Ordering::Equal => {}
    }
    // exact tie on (value, length): compare walks
    let (cand_nodes, cand_matches) = reconstruct(layers, k, node, cand.parent);
    let (inc_nodes, inc_matches) = reconstruct(layers, k, node, inc.parent);
    walk_order(&cand_nodes, &cand_matches, &inc_nodes, &inc_matches) == Ordering::Less
}

/// Compares candidate end node `a` against incumbent `b`, both in layer k.
fn label_better(
    layers: &[BTreeMap<NodeId, Label>],
    k: usize,
    a: NodeId,
    a_label: &Label,
    b: NodeId,
) -> bool {
    let b_label = layers[k][&b];
    match a_label.value.partial_cmp(&b_label.value).expect("finite") {
        Ordering::Greater => return true,
        Ordering::Less => return false,
        Ordering::Equal => {}
    }
    match a_label.length.partial_cmp(&b_label.length).expect("finite") {
        Ordering::Less => return true,
        Ordering::Greater => return false,
        Ordering::Equal => {}
    }
    let (a_nodes, a_matches) = reconstruct(layers, k, a, a_label.parent);
    let (b_nodes, b_matches) = reconstruct(layers, k, b, b_label.parent);
    walk_order(&a_nodes, &a_matches, &b_nodes, &b_matches) == Ordering::Less
}

/// Fewer nodes first, then node sequence, then match assignment. Node-count
/// first keeps the order concatenation-compatible (no prefix flips).
fn walk_order(
    a_nodes: &[NodeId],
    a_matches: &[NodeId],
    b_nodes: &[NodeId],
    b_matches: &[NodeId],
) -> Ordering {
    a_nodes
        .len()
        .cmp(&b_nodes.len())
        .then_with(|| a_nodes.cmp(b_nodes))
        .then_with(|| a_matches.cmp(b_matches))
}

/// Walks parents back to the start. `parent` is the label's own parent link,
/// so labels not yet stored can be reconstructed too.
fn reconstruct(
    layers: &[BTreeMap<NodeId, Label>],
    k: usize,
    node: NodeId,
    parent: Parent,
) -> (Vec<NodeId>, Vec<NodeId>) {
    let mut rev_nodes = Vec::new();
    let mut rev_matches = Vec::new();
    let (mut k, mut v, mut p) = (k, node, parent);
    loop {
        match p {
            Parent::Start => {
                rev_nodes.push(v);
                break;
            }
            Parent::Move { from } => {
                rev_nodes.push(v);
                v = from;
            }
            Parent::Match => {
                rev_matches.push(v);
                k -= 1;
            }
        }
        p = layers[k][&v].parent;
    }
    rev_nodes.reverse();
    rev_matches.reverse();
    (rev_nodes, rev_matches)
}

struct PqEntry {
    value: f64,
    length: f64,
    node: NodeId,
}

// max-heap pops the best label: highest value, then shortest, then lowest id
impl Ord for PqEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .partial_cmp(&other.value)
            .expect("scores are finite")
            .then_with(|| {
                other
                    .length
                    .partial_cmp(&self.length)
                    .expect("lengths are finite")
            })
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for PqEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for PqEntry {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value && self.length == other.length && self.node == other.node
    }
}

impl Eq for PqEntry {}

#[cfg(test)]
mod tests;
