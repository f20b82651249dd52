//! Graph data, ingestion, synthetic generation and the overlapping
//! federated partitioner.

mod io;
mod overlap;
mod partition;
mod sbm;

use std::collections::HashSet;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

pub use io::{load_graph, parse_edges, parse_nodes, write_partition_dump, LoadReport};
pub use overlap::{average_node_overlap, true_overlap_matrices};
pub use partition::{partition, partition_nodes, OverlapProfile, PartitionSpec};
pub use sbm::{generate_sbm, SbmParams};

/// Undirected, unweighted, self-loop-free adjacency in compressed sparse row
/// form. Neighbor lists are sorted and every edge is stored in both rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Adjacency {
    /// Builds a symmetric adjacency from an edge list. Self-loops and
    /// duplicate edges are dropped; either orientation of an edge suffices.
    ///
    /// Panics if an endpoint is `>= num_nodes`.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for (u, v) in edges {
            assert!(
                u < num_nodes && v < num_nodes,
                "edge ({u}, {v}) out of range for {num_nodes} nodes"
            );
            if u == v {
                continue;
            }
            rows[u].push(v);
            rows[v].push(u);
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for mut row in rows {
            row.sort_unstable();
            row.dedup();
            neighbors.extend_from_slice(&row);
            offsets.push(neighbors.len());
        }
        Self { offsets, neighbors }
    }

    pub fn empty(num_nodes: usize) -> Self {
        Self {
            offsets: vec![0; num_nodes + 1],
            neighbors: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Stored nonzeros; twice the number of undirected edges.
    pub fn nnz(&self) -> usize {
        self.neighbors.len()
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .copied()
                .filter(move |&v| v > u)
                .map(move |v| (u, v))
        })
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.num_nodes()).all(|u| {
            self.neighbors(u)
                .iter()
                .all(|&v| v != u && self.has_edge(v, u))
        })
    }

    /// Adjacency of the subgraph induced by `nodes`; local index `i` refers
    /// to `nodes[i]`.
    pub fn induced(&self, nodes: &[usize]) -> Adjacency {
        let mut local = vec![usize::MAX; self.num_nodes()];
        for (i, &g) in nodes.iter().enumerate() {
            local[g] = i;
        }
        let mut offsets = Vec::with_capacity(nodes.len() + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for &g in nodes {
            let start = neighbors.len();
            neighbors.extend(
                self.neighbors(g)
                    .iter()
                    .map(|&h| local[h])
                    .filter(|&l| l != usize::MAX),
            );
            neighbors[start..].sort_unstable();
            offsets.push(neighbors.len());
        }
        Adjacency { offsets, neighbors }
    }
}

/// The full graph: node features, labels and topology. Node ids are the
/// dense row indices `0..num_nodes`.
#[derive(Debug, Clone)]
pub struct GlobalGraph {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
    adjacency: Adjacency,
}

impl GlobalGraph {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        num_classes: usize,
        adjacency: Adjacency,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || adjacency.num_nodes() != n {
            return Err(Error::validation(format!(
                "inconsistent sizes: {} feature rows, {} labels, {} adjacency rows",
                n,
                labels.len(),
                adjacency.num_nodes()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::validation(format!(
                "node {i} has label {l} but num_classes = {num_classes}"
            )));
        }
        if let Some((i, _)) = features
            .axis_iter(Axis(0))
            .enumerate()
            .find(|(_, row)| row.iter().any(|x| !x.is_finite()))
        {
            return Err(Error::validation(format!("node {i} has a non-finite feature")));
        }
        if !adjacency.is_symmetric() {
            return Err(Error::validation("adjacency must be symmetric and loop-free"));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn adjacency(&self) -> &Adjacency {
        &self.adjacency
    }

    pub fn node_ids(&self) -> std::ops::Range<usize> {
        0..self.num_nodes()
    }
}

/// One client's share of the global graph: a node subset together with the
/// features, labels and induced topology it inherits.
#[derive(Debug, Clone)]
pub struct ClientSubgraph {
    pub client_id: usize,
    /// Sorted global node ids.
    pub node_ids: Vec<usize>,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub adjacency: Adjacency,
}

impl ClientSubgraph {
    pub fn induced(graph: &GlobalGraph, client_id: usize, mut node_ids: Vec<usize>) -> Self {
        node_ids.sort_unstable();
        node_ids.dedup();
        let features = graph.features().select(Axis(0), &node_ids);
        let labels = node_ids.iter().map(|&g| graph.labels()[g]).collect();
        let adjacency = graph.adjacency().induced(&node_ids);
        Self {
            client_id,
            node_ids,
            features,
            labels,
            adjacency,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn local_index(&self, global_id: usize) -> Option<usize> {
        self.node_ids.binary_search(&global_id).ok()
    }

    /// Edges as unordered pairs of global ids.
    pub fn global_edges(&self) -> HashSet<(usize, usize)> {
        self.adjacency
            .edges()
            .map(|(u, v)| (self.node_ids[u], self.node_ids[v]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn from_edges_symmetrizes_and_drops_loops() {
        let adj = Adjacency::from_edges(3, [(0, 1), (1, 2), (2, 1), (0, 0)]);
        assert_eq!(adj.nnz(), 4);
        assert_eq!(adj.num_edges(), 2);
        assert!(adj.has_edge(1, 0));
        assert!(!adj.has_edge(0, 0));
        assert!(adj.is_symmetric());
        assert_eq!(adj.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn induced_keeps_only_internal_edges() {
        let adj = Adjacency::from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3)]);
        let sub = adj.induced(&[1, 2, 3]);
        assert_eq!(sub.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn global_graph_rejects_bad_labels() {
        let err = GlobalGraph::new(
            array![[0.0], [1.0]],
            vec![0, 3],
            2,
            Adjacency::empty(2),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn client_subgraph_matches_global_restriction() {
        let adj = Adjacency::from_edges(5, [(0, 1), (1, 2), (3, 4), (0, 4)]);
        let graph = GlobalGraph::new(
            Array2::from_shape_fn((5, 2), |(i, j)| (i * 2 + j) as f64),
            vec![0, 1, 0, 1, 0],
            2,
            adj,
        )
        .unwrap();
        let sub = ClientSubgraph::induced(&graph, 0, vec![4, 0, 1]);
        assert_eq!(sub.node_ids, vec![0, 1, 4]);
        assert_eq!(sub.features.row(2).to_vec(), vec![8.0, 9.0]);
        let expected: HashSet<_> = [(0, 1), (0, 4)].into_iter().collect();
        assert_eq!(sub.global_edges(), expected);
    }
}
