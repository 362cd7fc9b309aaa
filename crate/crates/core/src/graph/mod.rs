//! Labeled undirected graphs and graph-classification datasets.

mod synthetic;
mod tu;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synthetic::{generate_synthetic, PLANTED_SIZE};
pub use tu::{load_tu_dataset, write_tu_dataset};

/// Node label type. Unlabeled datasets use node degree.
pub type Label = u32;

/// Undirected simple graph with one integer label per node.
///
/// Edges are stored once, endpoints sorted, and the edge list itself is
/// sorted, so two graphs built from the same edge set compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledGraph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    node_labels: Vec<Label>,
}

impl LabeledGraph {
    /// Builds a graph, normalizing edge orientation and dropping duplicates.
    /// Self-loops and out-of-range endpoints are rejected.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        node_labels: Vec<Label>,
    ) -> Result<Self> {
        if node_labels.len() != num_nodes {
            return Err(Error::invalid(format!(
                "{} node labels for {} nodes",
                node_labels.len(),
                num_nodes
            )));
        }
        let mut list = Vec::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop on node {u}")));
            }
            list.push((u.min(v), u.max(v)));
        }
        list.sort_unstable();
        list.dedup();
        Ok(Self {
            num_nodes,
            edges: list,
            node_labels,
        })
    }

    /// Graph whose nodes all carry label 0.
    pub fn uniform(num_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::new(num_nodes, edges, vec![0; num_nodes])
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_labels(&self) -> &[Label] {
        &self.node_labels
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_nodes];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }

    /// Replaces every node label with the node's degree.
    pub fn with_degree_labels(mut self) -> Self {
        self.node_labels = self.degrees().into_iter().map(|d| d as Label).collect();
        self
    }

    /// Relabels nodes so that old node `perm[i]` becomes new node `i`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::invalid("permutation length differs from node count"));
        }
        let mut inverse = vec![usize::MAX; self.num_nodes];
        for (new, &old) in perm.iter().enumerate() {
            if old >= self.num_nodes || inverse[old] != usize::MAX {
                return Err(Error::invalid("not a permutation"));
            }
            inverse[old] = new;
        }
        let labels = perm.iter().map(|&old| self.node_labels[old]).collect();
        Self::new(
            self.num_nodes,
            self.edges.iter().map(|&(u, v)| (inverse[u], inverse[v])),
            labels,
        )
    }
}

/// The subgraph induced by `nodes`, reindexed in the given order.
pub fn induced_subgraph(g: &LabeledGraph, nodes: &[usize]) -> Result<LabeledGraph> {
    if nodes.is_empty() {
        return Err(Error::invalid("induced subgraph of an empty node set"));
    }
    let mut position = vec![usize::MAX; g.num_nodes];
    for (i, &v) in nodes.iter().enumerate() {
        if v >= g.num_nodes {
            return Err(Error::invalid(format!(
                "node {v} out of range for {} nodes",
                g.num_nodes
            )));
        }
        if position[v] != usize::MAX {
            return Err(Error::invalid(format!("node {v} listed twice")));
        }
        position[v] = i;
    }
    let edges = g.edges.iter().filter_map(|&(u, v)| {
        let (pu, pv) = (position[u], position[v]);
        (pu != usize::MAX && pv != usize::MAX).then_some((pu, pv))
    });
    let labels = nodes.iter().map(|&v| g.node_labels[v]).collect();
    LabeledGraph::new(nodes.len(), edges, labels)
}

/// How a dataset's node labels were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeLabelSource {
    /// Read from `{name}_node_labels.txt` or produced by a generator.
    Given,
    /// The dataset ships without node labels; each label is the node degree.
    Degree,
}

/// A collection of graphs with contiguous class labels `0..num_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDataset {
    pub name: String,
    pub graphs: Vec<LabeledGraph>,
    pub class_labels: Vec<usize>,
    pub num_classes: usize,
    pub node_labels: NodeLabelSource,
    /// Generator seed; 0 for datasets read from disk.
    pub rng_seed: u64,
}

impl GraphDataset {
    pub fn new(
        name: impl Into<String>,
        graphs: Vec<LabeledGraph>,
        class_labels: Vec<usize>,
        node_labels: NodeLabelSource,
        rng_seed: u64,
    ) -> Result<Self> {
        if graphs.len() != class_labels.len() {
            return Err(Error::invalid(format!(
                "{} graphs but {} class labels",
                graphs.len(),
                class_labels.len()
            )));
        }
        if graphs.is_empty() {
            return Err(Error::invalid("dataset has no graphs"));
        }
        let num_classes = class_labels.iter().max().map_or(0, |&c| c + 1);
        let mut seen = vec![false; num_classes];
        for &c in &class_labels {
            seen[c] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::invalid(format!("class {missing} has no graphs")));
        }
        Ok(Self {
            name: name.into(),
            graphs,
            class_labels,
            num_classes,
            node_labels,
            rng_seed,
        })
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &c in &self.class_labels {
            counts[c] += 1;
        }
        counts
    }
}
