//! Ground-truth node and link overlap between client subgraphs.

use std::collections::HashSet;

use ndarray::Array2;

use super::ClientSubgraph;

/// `(node, link)` overlap matrices. `node[[i, k]] = |V_i ∩ V_k| / |V_i|` and
/// `link[[i, k]] = |E_i ∩ E_k| / |E_i|` (0 when client `i` has no edges).
/// Diagonals are 1 by convention.
pub fn true_overlap_matrices(parts: &[ClientSubgraph]) -> (Array2<f64>, Array2<f64>) {
    let p = parts.len();
    let node_sets: Vec<HashSet<usize>> =
        parts.iter().map(|s| s.node_ids.iter().copied().collect()).collect();
    let edge_sets: Vec<HashSet<(usize, usize)>> = parts.iter().map(|s| s.global_edges()).collect();

    let mut nodes = Array2::zeros((p, p));
    let mut links = Array2::zeros((p, p));
    for i in 0..p {
        for k in 0..p {
            if i == k {
                nodes[[i, k]] = 1.0;
                links[[i, k]] = 1.0;
                continue;
            }
            if !node_sets[i].is_empty() {
                let shared = node_sets[i].intersection(&node_sets[k]).count();
                nodes[[i, k]] = shared as f64 / node_sets[i].len() as f64;
            }
            if !edge_sets[i].is_empty() {
                let shared = edge_sets[i].intersection(&edge_sets[k]).count();
                links[[i, k]] = shared as f64 / edge_sets[i].len() as f64;
            }
        }
    }
    (nodes, links)
}

/// Mean of the off-diagonal node overlap ratios.
pub fn average_node_overlap(parts: &[ClientSubgraph]) -> f64 {
    let p = parts.len();
    if p < 2 {
        return 0.0;
    }
    let (nodes, _) = true_overlap_matrices(parts);
    let total: f64 = nodes.sum() - nodes.diag().sum();
    total / (p * (p - 1)) as f64
}
