//! Heterogeneous user-comment graph: construction, seeded neighbor sampling,
//! validation, and versioned serialization.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::Dataset;

/// Comment-comment predecessor edges per comment.
pub const MAX_PREDECESSORS: usize = 10;
/// Default sample size for comment-kind neighborhoods.
pub const DEFAULT_COMMENT_SAMPLE: usize = 10;
/// Default sample size for user-kind neighborhoods (one author per comment).
pub const DEFAULT_USER_SAMPLE: usize = 1;

const GRAPH_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed graph file: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported graph format version {0}")]
    UnsupportedVersion(u32),
    #[error("graph payload checksum mismatch")]
    ChecksumMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    User,
    Comment,
}

/// Index into the graph's node table.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeIndex(pub usize);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    /// User id or comment id, depending on kind.
    pub payload_id: String,
}

/// Immutable heterogeneous graph over users and comments.
///
/// User nodes come first (sorted by user id), then comment nodes (sorted by
/// comment id). Neighbor lists are partitioned by neighbor kind and sorted
/// ascending; comment-comment adjacency is symmetric, with the directed
/// earlier-comment relation kept separately in `predecessors`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeteroGraph {
    pub(crate) nodes: Vec<Node>,
    pub(crate) user_index: BTreeMap<String, NodeIndex>,
    pub(crate) comment_index: BTreeMap<String, NodeIndex>,
    pub(crate) user_neighbors: Vec<Vec<NodeIndex>>,
    pub(crate) comment_neighbors: Vec<Vec<NodeIndex>>,
    pub(crate) predecessors: Vec<Vec<NodeIndex>>,
}

impl HeteroGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, index: NodeIndex) -> &Node {
        &self.nodes[index.0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeIndex, &Node)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeIndex(i), n))
    }

    pub fn user_node(&self, user_id: &str) -> Option<NodeIndex> {
        self.user_index.get(user_id).copied()
    }

    pub fn comment_node(&self, comment_id: &str) -> Option<NodeIndex> {
        self.comment_index.get(comment_id).copied()
    }

    /// Neighbors of `node` having the requested kind, ascending by index.
    pub fn neighbors(&self, node: NodeIndex, kind: NodeKind) -> &[NodeIndex] {
        match kind {
            NodeKind::User => &self.user_neighbors[node.0],
            NodeKind::Comment => &self.comment_neighbors[node.0],
        }
    }

    /// Directed earlier-comment edges; empty for user nodes.
    pub fn predecessors(&self, node: NodeIndex) -> &[NodeIndex] {
        &self.predecessors[node.0]
    }
}

/// Builds the graph for a dataset.
///
/// Each comment gets one edge to its author and directed edges to up to
/// [`MAX_PREDECESSORS`] comments of the same news that are strictly earlier
/// in (timestamp, id) order, nearest in time first with timestamp ties broken
/// by ascending id. The comment-comment adjacency used for aggregation is the
/// symmetric closure of those directed edges.
pub fn build_graph(dataset: &Dataset) -> HeteroGraph {
    debug_assert!(dataset.integrity_violations().is_empty());

    let mut nodes = Vec::new();
    let mut user_index = BTreeMap::new();
    for user_id in dataset.users.keys() {
        user_index.insert(user_id.clone(), NodeIndex(nodes.len()));
        nodes.push(Node {
            kind: NodeKind::User,
            payload_id: user_id.clone(),
        });
    }
    let mut comment_index = BTreeMap::new();
    for comment_id in dataset.comments.keys() {
        comment_index.insert(comment_id.clone(), NodeIndex(nodes.len()));
        nodes.push(Node {
            kind: NodeKind::Comment,
            payload_id: comment_id.clone(),
        });
    }

    let n = nodes.len();
    let mut user_neighbors = vec![Vec::new(); n];
    let mut comment_neighbors = vec![Vec::new(); n];
    let mut predecessors = vec![Vec::new(); n];

    for comment in dataset.comments.values() {
        let c = comment_index[&comment.id];
        let u = user_index[&comment.user_id];
        user_neighbors[c.0].push(u);
        comment_neighbors[u.0].push(c);
    }

    for news in &dataset.news {
        let ordered = dataset.comments_for_news(&news.id);
        for (pos, comment) in ordered.iter().enumerate() {
            let c = comment_index[&comment.id];
            let mut candidates: Vec<_> = ordered[..pos].to_vec();
            candidates.sort_by(|a, b| b.timestamp.cmp(&a.timestamp).then(a.id.cmp(&b.id)));
            let chosen: Vec<NodeIndex> = candidates
                .iter()
                .take(MAX_PREDECESSORS)
                .map(|p| comment_index[&p.id])
                .collect();
            for &p in &chosen {
                comment_neighbors[c.0].push(p);
                comment_neighbors[p.0].push(c);
            }
            predecessors[c.0] = chosen;
        }
    }

    for list in user_neighbors.iter_mut().chain(comment_neighbors.iter_mut()) {
        list.sort_unstable();
        list.dedup();
    }

    HeteroGraph {
        nodes,
        user_index,
        comment_index,
        user_neighbors,
        comment_neighbors,
        predecessors,
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn sample_seed(seed: u64, node: NodeIndex, kind: NodeKind) -> u64 {
    let kind_tag = match kind {
        NodeKind::User => 0x55,
        NodeKind::Comment => 0xCC,
    };
    splitmix64(splitmix64(seed ^ node.0 as u64) ^ kind_tag)
}

/// Samples up to `sample_size` neighbors of the given kind, uniformly without
/// replacement, deterministic in (seed, node, kind). Neighborhoods that fit
/// are returned whole; results are ascending by node index.
pub fn sample_neighbors(
    graph: &HeteroGraph,
    node: NodeIndex,
    kind: NodeKind,
    sample_size: usize,
    seed: u64,
) -> Vec<NodeIndex> {
    assert!(sample_size >= 1, "sample_size must be at least 1");
    let neighbors = graph.neighbors(node, kind);
    if neighbors.len() <= sample_size {
        return neighbors.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, node, kind));
    let mut picked: Vec<NodeIndex> = rand::seq::index::sample(&mut rng, neighbors.len(), sample_size)
        .into_iter()
        .map(|i| neighbors[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Structural summary plus any invariant violations.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub user_nodes: usize,
    pub comment_nodes: usize,
    pub user_comment_edges: usize,
    pub comment_comment_pairs: usize,
    pub isolated_nodes: usize,
    pub user_comment_degree_histogram: BTreeMap<usize, usize>,
    pub comment_comment_degree_histogram: BTreeMap<usize, usize>,
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every structural invariant and tallies degrees.
pub fn validate_graph(graph: &HeteroGraph) -> ValidationReport {
    let mut report = ValidationReport {
        user_nodes: 0,
        comment_nodes: 0,
        user_comment_edges: 0,
        comment_comment_pairs: 0,
        isolated_nodes: 0,
        user_comment_degree_histogram: BTreeMap::new(),
        comment_comment_degree_histogram: BTreeMap::new(),
        violations: Vec::new(),
    };

    let mut comment_degree_sum = 0;
    for (index, node) in graph.nodes() {
        let users = graph.neighbors(index, NodeKind::User);
        let comments = graph.neighbors(index, NodeKind::Comment);
        if users.is_empty() && comments.is_empty() {
            report.isolated_nodes += 1;
        }
        match node.kind {
            NodeKind::User => {
                report.user_nodes += 1;
                *report
                    .user_comment_degree_histogram
                    .entry(comments.len())
                    .or_insert(0) += 1;
                if !users.is_empty() {
                    report
                        .violations
                        .push(format!("user {} has user-kind neighbors", node.payload_id));
                }
                for &c in comments {
                    if graph.node(c).kind != NodeKind::Comment {
                        report.violations.push(format!(
                            "user {} lists a non-comment as comment neighbor",
                            node.payload_id
                        ));
                    }
                }
            }
            NodeKind::Comment => {
                report.comment_nodes += 1;
                report.user_comment_edges += users.len();
                comment_degree_sum += comments.len();
                *report
                    .comment_comment_degree_histogram
                    .entry(comments.len())
                    .or_insert(0) += 1;
                if users.len() != 1 {
                    report.violations.push(format!(
                        "comment {} has {} user neighbors, expected 1 (comment-user not one-to-one)",
                        node.payload_id,
                        users.len()
                    ));
                }
                if graph.predecessors(index).len() > MAX_PREDECESSORS {
                    report.violations.push(format!(
                        "comment {} has {} predecessor edges, limit {}",
                        node.payload_id,
                        graph.predecessors(index).len(),
                        MAX_PREDECESSORS
                    ));
                }
                for &other in comments {
                    if !graph.neighbors(other, NodeKind::Comment).contains(&index) {
                        report.violations.push(format!(
                            "comment-comment edge {} -> {} is not symmetric",
                            node.payload_id,
                            graph.node(other).payload_id
                        ));
                    }
                }
            }
        }
    }
    report.comment_comment_pairs = comment_degree_sum / 2;
    report
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    format_version: u32,
    checksum: String,
    graph: HeteroGraph,
}

fn graph_checksum(graph: &HeteroGraph) -> String {
    let body = serde_json::to_vec(graph).expect("graph serializes");
    let digest = Sha256::digest(&body);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Writes the graph with a version/checksum manifest, atomically.
pub fn save_graph(path: &Path, graph: &HeteroGraph) -> Result<(), GraphError> {
    let file = GraphFile {
        format_version: GRAPH_FORMAT_VERSION,
        checksum: graph_checksum(graph),
        graph: graph.clone(),
    };
    let bytes = serde_json::to_vec(&file)?;
    let tmp = path.with_extension("graph.tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_graph(path: &Path) -> Result<HeteroGraph, GraphError> {
    let bytes = fs::read(path)?;
    let file: GraphFile = serde_json::from_slice(&bytes)?;
    if file.format_version != GRAPH_FORMAT_VERSION {
        return Err(GraphError::UnsupportedVersion(file.format_version));
    }
    if graph_checksum(&file.graph) != file.checksum {
        return Err(GraphError::ChecksumMismatch);
    }
    Ok(file.graph)
}
