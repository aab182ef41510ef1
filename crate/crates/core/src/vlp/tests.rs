use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geom::WorldPoint;
use crate::topo::{TopoEdge, TopoNode, TopologyGraph};

fn basis(dim: usize, axis: usize) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[axis] = 1.0;
    v
}

fn plain_node(id: NodeId) -> TopoNode {
    TopoNode {
        id,
        pose: WorldPoint::new(id as f64, 0.0),
        embeddings: vec![basis(2, 0)],
        image_refs: vec![format!("img:{id}")],
    }
}

/// Path graph 0–1–…–(n−1) with the given edge costs.
fn path_graph(costs: &[f64]) -> TopologyGraph {
    let nodes = (0..=costs.len() as NodeId).map(plain_node).collect();
    let edges = costs
        .iter()
        .enumerate()
        .map(|(i, &cost)| TopoEdge {
            from: i as NodeId,
            to: i as NodeId + 1,
            cost,
        })
        .collect();
    TopologyGraph::new(2, nodes, edges).unwrap()
}

fn landmarks(names: &[&str]) -> LandmarkList {
    LandmarkList::new(names.iter().map(|s| s.to_string()).collect()).unwrap()
}

fn matrix(graph: &TopologyGraph, names: &[&str], values: Vec<f64>) -> SimilarityMatrix {
    SimilarityMatrix::from_rows(graph.node_ids().collect(), landmarks(names), values).unwrap()
}

/// Checks structural validity and recomputes the objective from scratch.
fn assert_valid_path(
    graph: &TopologyGraph,
    sim: &SimilarityMatrix,
    path: &OptimalPath,
    v_start: NodeId,
    beta: f64,
) {
    assert_eq!(path.nodes[0], v_start);
    let mut length = 0.0;
    for w in path.nodes.windows(2) {
        let cost = graph
            .neighbors(w[0])
            .iter()
            .find(|(n, _)| *n == w[1])
            .unwrap_or_else(|| panic!("nodes {} and {} not adjacent", w[0], w[1]))
            .1;
        length += cost;
    }
    assert!((length - path.path_length).abs() < 1e-9);
    assert_eq!(path.matched_landmarks.len(), sim.landmark_count());
    // match nodes must appear along the walk at non-decreasing positions
    let mut pos = 0;
    let mut total = 0.0;
    for (j, &m) in path.matched_landmarks.iter().enumerate() {
        let offset = path.nodes[pos..]
            .iter()
            .position(|&v| v == m)
            .unwrap_or_else(|| panic!("landmark {j} matched at {m}, not on the walk in order"));
        pos += offset;
        let s = sim.get(m, j).expect("matched node has a row");
        assert!(s > 0.0, "matched landmark {j} at {m} with score {s}");
        total += s;
    }
    assert!((total - beta * path.path_length - path.total_value).abs() < 1e-9);
}

/// Exhaustive reference: every ordered assignment of landmarks to positively
/// scored reachable nodes, connected by shortest paths.
fn brute_force_value(
    graph: &TopologyGraph,
    sim: &SimilarityMatrix,
    v_start: NodeId,
    beta: f64,
) -> Option<f64> {
    let reachable = graph.shortest_distances(v_start).unwrap();
    let all_pairs: BTreeMap<NodeId, BTreeMap<NodeId, f64>> = reachable
        .keys()
        .map(|&v| (v, graph.shortest_distances(v).unwrap()))
        .collect();
    let n = sim.landmark_count();
    let nodes: Vec<NodeId> = reachable.keys().copied().collect();
    let mut assignment = vec![0 as NodeId; n];
    let mut best: Option<f64> = None;
    enumerate(
        graph, sim, v_start, beta, &nodes, &all_pairs, &mut assignment, 0, &mut best,
    );
    best
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    graph: &TopologyGraph,
    sim: &SimilarityMatrix,
    v_start: NodeId,
    beta: f64,
    nodes: &[NodeId],
    all_pairs: &BTreeMap<NodeId, BTreeMap<NodeId, f64>>,
    assignment: &mut Vec<NodeId>,
    depth: usize,
    best: &mut Option<f64>,
) {
    if depth == sim.landmark_count() {
        let mut length = 0.0;
        let mut prev = v_start;
        let mut score = 0.0;
        for (j, &v) in assignment.iter().enumerate() {
            match all_pairs[&prev].get(&v) {
                Some(&d) => length += d,
                None => return,
            }
            score += sim.get(v, j).unwrap();
            prev = v;
        }
        let value = score - beta * length;
        if best.is_none_or(|b| value > b) {
            *best = Some(value);
        }
        return;
    }
    for &v in nodes {
        if sim.get(v, depth).is_some_and(|s| s > 0.0) {
            assignment[depth] = v;
            enumerate(
                graph, sim, v_start, beta, nodes, all_pairs, assignment, depth + 1, best,
            );
        }
    }
}

#[test]
fn similarity_tag_oracle_exact_scores() {
    let provider = TagOracleProvider::new(vec!["gate".into(), "bench".into()]);
    let node = TopoNode {
        id: 0,
        pose: WorldPoint::new(0.0, 0.0),
        embeddings: vec![provider.embed_image("tag:gate")],
        image_refs: vec!["tag:gate".into()],
    };
    let graph = TopologyGraph::new(2, vec![node], vec![]).unwrap();
    let sim = similarity_matrix(&graph, &landmarks(&["gate", "bench"]), &provider).unwrap();
    assert_eq!(sim.get(0, 0), Some(1.0));
    assert_eq!(sim.get(0, 1), Some(0.0));
}

#[test]
fn similarity_takes_max_over_node_images() {
    // two stored views whose dots with the landmark text are 0.2 and 0.7
    let provider = TagOracleProvider::new(vec!["gate".into(), "bench".into()]);
    let e = |x: f32| vec![x, (1.0 - x * x).sqrt()];
    let node = TopoNode {
        id: 0,
        pose: WorldPoint::new(0.0, 0.0),
        embeddings: vec![e(0.2), e(0.7)],
        image_refs: vec!["a".into(), "b".into()],
    };
    let graph = TopologyGraph::new(2, vec![node], vec![]).unwrap();
    let sim = similarity_matrix(&graph, &landmarks(&["gate"]), &provider).unwrap();
    let got = sim.get(0, 0).unwrap();
    assert!((got - 0.7).abs() < 1e-6, "expected max rule, got {got}");
}

#[test]
fn similarity_matches_direct_dot_oracle() {
    let provider = HashEmbeddingProvider::new(16);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let nodes: Vec<TopoNode> = (0..4)
        .map(|id| {
            let refs: Vec<String> = (0..rng.gen_range(1..=3))
                .map(|i| format!("img:{id}:{i}"))
                .collect();
            TopoNode {
                id,
                pose: WorldPoint::new(id as f64, 0.0),
                embeddings: refs.iter().map(|r| provider.embed_image(r)).collect(),
                image_refs: refs,
            }
        })
        .collect();
    let graph = TopologyGraph::new(16, nodes, vec![]).unwrap();
    let names = landmarks(&["water tower", "gate"]);
    let sim = similarity_matrix(&graph, &names, &provider).unwrap();
    for node in graph.nodes() {
        for (j, name) in names.as_slice().iter().enumerate() {
            let text = provider.embed_text(name);
            let expect = node
                .embeddings
                .iter()
                .map(|e| dot(e, &text) as f64)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(sim.get(node.id, j), Some(expect));
        }
    }
}

#[test]
fn similarity_rejects_dimension_mismatch() {
    let graph = path_graph(&[1.0]);
    let provider = HashEmbeddingProvider::new(16); // graph dim is 2
    assert!(matches!(
        similarity_matrix(&graph, &landmarks(&["gate"]), &provider),
        Err(VlpError::DimensionMismatch { expected: 2, got: 16 })
    ));
}

#[test]
fn similarity_entries_bounded_for_unit_providers() {
    let provider = HashEmbeddingProvider::new(8);
    let nodes: Vec<TopoNode> = (0..6)
        .map(|id| {
            let r = format!("img:{id}");
            TopoNode {
                id,
                pose: WorldPoint::new(id as f64, 0.0),
                embeddings: vec![provider.embed_image(&r)],
                image_refs: vec![r],
            }
        })
        .collect();
    let graph = TopologyGraph::new(8, nodes, vec![]).unwrap();
    let sim = similarity_matrix(&graph, &landmarks(&["a", "b", "c"]), &provider).unwrap();
    for &id in sim.node_ids() {
        for j in 0..3 {
            let s = sim.get(id, j).unwrap();
            assert!((-1.0 - 1e-6..=1.0 + 1e-6).contains(&s));
        }
    }
}

#[test]
fn zero_beta_single_landmark_goes_to_argmax() {
    let graph = path_graph(&[1.0, 1.0, 1.0]);
    let sim = matrix(&graph, &["gate"], vec![0.1, 0.4, 0.9, 0.3]);
    let d = graph.shortest_distances(0).unwrap();
    let path = plan_route(&graph, &sim, &d, 0, 0.0).unwrap();
    assert_eq!(path.nodes, vec![0, 1, 2]);
    assert_eq!(path.matched_landmarks, vec![2]);
    assert!((path.total_value - 0.9).abs() < 1e-12);
    assert_valid_path(&graph, &sim, &path, 0, 0.0);
}

#[test]
fn five_node_path_two_landmarks_matches_oracle() {
    let graph = path_graph(&[2.0, 3.0, 1.0, 4.0]);
    let sim = matrix(
        &graph,
        &["barn", "pond"],
        vec![
            0.2, 0.1, //
            0.5, 0.2, //
            0.3, 0.1, //
            0.9, 0.6, //
            0.4, 0.8,
        ],
    );
    let d = graph.shortest_distances(0).unwrap();
    let beta = 0.1;
    let path = plan_route(&graph, &sim, &d, 0, beta).unwrap();
    let oracle = brute_force_value(&graph, &sim, 0, beta).unwrap();
    assert!((path.total_value - oracle).abs() < 1e-9);
    assert_valid_path(&graph, &sim, &path, 0, beta);
}

#[test]
fn unreachable_when_only_positive_node_is_disconnected() {
    // component A: 0–1; component B: 2; landmark "silo" positive only at 2
    let nodes = vec![plain_node(0), plain_node(1), plain_node(2)];
    let edges = vec![TopoEdge { from: 0, to: 1, cost: 1.0 }];
    let graph = TopologyGraph::new(2, nodes, edges).unwrap();
    let sim = matrix(
        &graph,
        &["gate", "silo"],
        vec![
            0.9, 0.0, //
            0.5, 0.0, //
            0.1, 1.0,
        ],
    );
    let d = graph.shortest_distances(0).unwrap();
    assert!(matches!(
        plan_route(&graph, &sim, &d, 0, 0.05),
        Err(VlpError::Unreachable { landmark: 1 })
    ));
}

#[test]
fn matching_respects_instruction_order() {
    // landmark 0 scores best far from start, landmark 1 best near it; the
    // planner must still match 0 before 1
    let graph = path_graph(&[1.0, 1.0, 1.0]);
    let sim = matrix(
        &graph,
        &["far thing", "near thing"],
        vec![
            0.1, 0.8, //
            0.1, 0.1, //
            0.1, 0.1, //
            0.9, 0.2,
        ],
    );
    let d = graph.shortest_distances(0).unwrap();
    let path = plan_route(&graph, &sim, &d, 0, 0.01).unwrap();
    assert_valid_path(&graph, &sim, &path, 0, 0.01);
    let oracle = brute_force_value(&graph, &sim, 0, 0.01).unwrap();
    assert!((path.total_value - oracle).abs() < 1e-9);
    // unordered matching would collect 0.9 + 0.8; ordered cannot
    assert!(path.total_value < 1.7 - 0.01 * 3.0);
}

#[test]
fn exact_ties_prefer_smaller_node_ids() {
    // star: 0 center, spokes to 1 and 2 of equal cost and equal score
    let nodes = vec![plain_node(0), plain_node(1), plain_node(2)];
    let edges = vec![
        TopoEdge { from: 0, to: 1, cost: 1.0 },
        TopoEdge { from: 0, to: 2, cost: 1.0 },
    ];
    let graph = TopologyGraph::new(2, nodes, edges).unwrap();
    let sim = matrix(&graph, &["gate"], vec![0.0, 0.5, 0.5]);
    let d = graph.shortest_distances(0).unwrap();
    let path = plan_route(&graph, &sim, &d, 0, 0.05).unwrap();
    assert_eq!(path.nodes, vec![0, 1]);
    assert_eq!(path.matched_landmarks, vec![1]);
}

#[test]
fn matches_may_share_a_node() {
    let graph = path_graph(&[1.0, 1.0]);
    let sim = matrix(
        &graph,
        &["a", "b"],
        vec![
            0.1, 0.1, //
            0.9, 0.9, //
            0.2, 0.2,
        ],
    );
    let d = graph.shortest_distances(0).unwrap();
    let path = plan_route(&graph, &sim, &d, 0, 0.1).unwrap();
    assert_eq!(path.matched_landmarks, vec![1, 1]);
    assert_valid_path(&graph, &sim, &path, 0, 0.1);
}

/// Ring of `n` nodes plus a few chords, all positive costs.
fn random_test_graph(seed: u64, n: NodeId) -> TopologyGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = (0..n).map(plain_node).collect();
    let mut edges: Vec<TopoEdge> = (0..n)
        .map(|i| TopoEdge {
            from: i,
            to: (i + 1) % n,
            cost: rng.gen_range(0.5..5.0),
        })
        .collect();
    if n > 3 {
        for _ in 0..2 {
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            let pair = (a.min(b), a.max(b));
            let exists = edges
                .iter()
                .any(|e| (e.from.min(e.to), e.from.max(e.to)) == pair);
            if a != b && !exists {
                edges.push(TopoEdge {
                    from: a,
                    to: b,
                    cost: rng.gen_range(0.5..5.0),
                });
            }
        }
    }
    TopologyGraph::new(2, nodes, edges).unwrap()
}

/// Random scores in [−0.5, 1.0) with at least one positive entry per column.
fn random_scores(rng: &mut ChaCha8Rng, graph: &TopologyGraph, names: &[&str]) -> SimilarityMatrix {
    let n_nodes = graph.len();
    let n = names.len();
    let mut values: Vec<f64> = (0..n_nodes * n).map(|_| rng.gen_range(-0.5..1.0)).collect();
    for j in 0..n {
        if !(0..n_nodes).any(|r| values[r * n + j] > 0.0) {
            let r = rng.gen_range(0..n_nodes);
            values[r * n + j] = rng.gen_range(0.1..1.0);
        }
    }
    SimilarityMatrix::from_rows(
        graph.node_ids().collect(),
        landmarks(names),
        values,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn equals_brute_force_on_small_graphs(seed in 0u64..10_000, n in 3u32..=7, lm in 1usize..=3) {
        let graph = random_test_graph(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let names: Vec<&str> = ["a", "b", "c"][..lm].to_vec();
        let sim = random_scores(&mut rng, &graph, &names);
        let beta = rng.gen_range(0.0..0.3);
        let d = graph.shortest_distances(0).unwrap();
        let path = plan_route(&graph, &sim, &d, 0, beta).unwrap();
        let oracle = brute_force_value(&graph, &sim, 0, beta).unwrap();
        prop_assert!((path.total_value - oracle).abs() < 1e-9,
            "planner {} vs oracle {}", path.total_value, oracle);
        assert_valid_path(&graph, &sim, &path, 0, beta);
    }

    // larger beta never yields a longer route
    #[test]
    fn route_length_monotone_in_beta(seed in 0u64..10_000, n in 3u32..=7) {
        let graph = random_test_graph(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xbe7a);
        let n_nodes = graph.len();
        let values: Vec<f64> = (0..n_nodes * 2).map(|_| rng.gen_range(0.05..1.0)).collect();
        let sim = SimilarityMatrix::from_rows(
            graph.node_ids().collect(),
            landmarks(&["a", "b"]),
            values,
        ).unwrap();
        let d = graph.shortest_distances(0).unwrap();
        let low = plan_route(&graph, &sim, &d, 0, 0.02).unwrap();
        let high = plan_route(&graph, &sim, &d, 0, 0.2).unwrap();
        prop_assert!(high.path_length <= low.path_length + 1e-9);
    }

    // a uniform score shift cannot change the chosen route when every entry
    // stays positive (same matches are eligible, objective shifts uniformly)
    #[test]
    fn positive_shift_keeps_route(seed in 0u64..10_000, n in 3u32..=7, c in 0.01f64..0.5) {
        let graph = random_test_graph(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51f7);
        let n_nodes = graph.len();
        let values: Vec<f64> = (0..n_nodes * 2).map(|_| rng.gen_range(0.05..1.0)).collect();
        let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
        let ids: Vec<NodeId> = graph.node_ids().collect();
        let sim = SimilarityMatrix::from_rows(ids.clone(), landmarks(&["a", "b"]), values).unwrap();
        let sim_shifted =
            SimilarityMatrix::from_rows(ids, landmarks(&["a", "b"]), shifted).unwrap();
        let d = graph.shortest_distances(0).unwrap();
        let base = plan_route(&graph, &sim, &d, 0, 0.1).unwrap();
        let moved = plan_route(&graph, &sim_shifted, &d, 0, 0.1).unwrap();
        prop_assert_eq!(&base.nodes, &moved.nodes);
        prop_assert_eq!(&base.matched_landmarks, &moved.matched_landmarks);
        prop_assert!((moved.total_value - base.total_value - 2.0 * c).abs() < 1e-9);
    }
}
