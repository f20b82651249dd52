//! Overlap estimation on noise-free populations with known overlap.

use std::collections::{HashMap, HashSet};

use fairgfl_core::estimator::{estimate_link_ratio, estimate_node_ratio, match_nodes};
use fairgfl_core::rng::SimRng;
use fairgfl_core::{EstimatorMode, LinkMatrix, SanitizedBatch};
use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};

/// A client as a node list plus an edge set over global ids.
struct Population {
    id: usize,
    nodes: Vec<usize>,
    edges: HashSet<(usize, usize)>,
}

impl Population {
    fn new(id: usize, nodes: Vec<usize>) -> Self {
        Self {
            id,
            nodes,
            edges: HashSet::new(),
        }
    }

    /// Uniform batch of `b` nodes; each node is encoded as its own global id
    /// so equal vectors mean the same node.
    fn batch(&self, b: usize, rng: &mut SimRng) -> SanitizedBatch {
        let rows: Vec<usize> = index::sample(rng, self.nodes.len(), b).into_vec();
        let ids: Vec<usize> = rows.iter().map(|&r| self.nodes[r]).collect();
        let mut nodes = Array2::zeros((b, 1));
        let mut adjacency = LinkMatrix::zeros(b);
        for (x, &u) in ids.iter().enumerate() {
            nodes[[x, 0]] = u as f64;
            for (y, &v) in ids.iter().enumerate().skip(x + 1) {
                if self.edges.contains(&(u.min(v), u.max(v))) {
                    adjacency.set(x, y, true);
                }
            }
        }
        SanitizedBatch {
            client_id: self.id,
            nodes,
            adjacency,
            reported_n: self.nodes.len(),
        }
    }
}

fn mean_node_estimate(a: &Population, b: &Population, batch: usize, draws: usize, mode: EstimatorMode, seed: u64) -> f64 {
    let mut rng = SimRng::seed_from_u64(seed);
    let mut sum = 0.0;
    for _ in 0..draws {
        let (ba, bb) = (a.batch(batch, &mut rng), b.batch(batch, &mut rng));
        let m = match_nodes(&ba, &bb, 0.0);
        sum += estimate_node_ratio(&m, a.nodes.len(), b.nodes.len(), batch, batch, mode).unwrap();
    }
    sum / draws as f64
}

fn node_overlap(a: &Population, b: &Population) -> f64 {
    let set: HashSet<_> = b.nodes.iter().collect();
    a.nodes.iter().filter(|v| set.contains(v)).count() as f64 / a.nodes.len() as f64
}

#[test]
fn corrected_node_estimate_is_calibrated() {
    for (s, overlap) in [0.1, 0.3, 0.5].into_iter().enumerate() {
        let shared = (100.0 * overlap) as usize;
        let a = Population::new(0, (0..100).collect());
        let b = Population::new(1, (100 - shared..200 - shared).collect());
        let truth = node_overlap(&a, &b);
        assert!((truth - overlap).abs() < 1e-12);
        let est = mean_node_estimate(&a, &b, 20, 500, EstimatorMode::Corrected, s as u64);
        assert!(
            (est - truth).abs() <= 0.1 * truth,
            "overlap {overlap}: mean estimate {est}"
        );
    }
}

#[test]
fn paper_scaling_is_biased_for_unequal_clients() {
    // 30 shared nodes; client a holds 100, client b 200.
    let a = Population::new(0, (0..100).collect());
    let b = Population::new(1, (70..270).collect());
    let truth = node_overlap(&a, &b);
    let corrected = mean_node_estimate(&a, &b, 20, 500, EstimatorMode::Corrected, 7);
    let paper = mean_node_estimate(&a, &b, 20, 500, EstimatorMode::Paper, 7);
    assert!((corrected - truth).abs() <= 0.1 * truth, "{corrected}");
    // E[Ñ] = b·30/(100·200), so the literal form gives 30/200 = truth/2.
    assert!((paper - truth / 2.0).abs() <= 0.1 * truth / 2.0, "{paper}");
}

#[test]
fn disjoint_clients_never_match() {
    let a = Population::new(0, (0..100).collect());
    let b = Population::new(1, (100..200).collect());
    assert_eq!(mean_node_estimate(&a, &b, 20, 100, EstimatorMode::Corrected, 3), 0.0);
}

fn random_edges(nodes: &[usize], count: usize, rng: &mut SimRng, avoid: &HashSet<(usize, usize)>) -> HashSet<(usize, usize)> {
    let mut out = HashSet::new();
    while out.len() < count {
        let u = nodes[rng.random_range(0..nodes.len())];
        let v = nodes[rng.random_range(0..nodes.len())];
        let e = (u.min(v), u.max(v));
        if u != v && !avoid.contains(&e) {
            out.insert(e);
        }
    }
    out
}

#[test]
fn forty_percent_shared_links_full_batches() {
    let mut rng = SimRng::seed_from_u64(11);
    let nodes: Vec<usize> = (0..30).collect();
    let mut a = Population::new(0, nodes.clone());
    let mut b = Population::new(1, nodes.clone());
    a.edges = random_edges(&nodes, 50, &mut rng, &HashSet::new());
    let kept: HashSet<_> = a.edges.iter().copied().take(20).collect();
    b.edges = random_edges(&nodes, 30, &mut rng, &a.edges);
    b.edges.extend(kept);

    let (ba, bb) = (a.batch(30, &mut rng), b.batch(30, &mut rng));
    let m = match_nodes(&ba, &bb, 0.0);
    assert_eq!(m.num_matches(), 30);
    for mode in [EstimatorMode::Corrected, EstimatorMode::Paper] {
        let t = estimate_link_ratio(&m, 30, 30, 30, mode);
        assert!((t - 0.4).abs() < 1e-12, "{mode}: {t}");
    }
}

#[test]
fn corrected_link_estimate_is_calibrated() {
    let mut rng = SimRng::seed_from_u64(5);
    let nodes: Vec<usize> = (0..100).collect();
    let mut a = Population::new(0, nodes.clone());
    let mut b = Population::new(1, nodes.clone());
    a.edges = random_edges(&nodes, 400, &mut rng, &HashSet::new());
    let kept: HashSet<_> = a.edges.iter().copied().take(160).collect();
    b.edges = random_edges(&nodes, 240, &mut rng, &a.edges);
    b.edges.extend(kept);

    let draws = 500;
    let mut sum = 0.0;
    for _ in 0..draws {
        let (ba, bb) = (a.batch(50, &mut rng), b.batch(50, &mut rng));
        let m = match_nodes(&ba, &bb, 0.0);
        sum += estimate_link_ratio(&m, 100, 50, 50, EstimatorMode::Corrected);
    }
    let mean = sum / draws as f64;
    assert!((mean - 0.4).abs() <= 0.04, "mean link estimate {mean}");
}

#[test]
fn greedy_matching_is_one_to_one() {
    // Two copies of node 5 in batch b: only one can pair with a's node 5.
    let mk = |id: usize, vals: &[f64]| SanitizedBatch {
        client_id: id,
        nodes: Array2::from_shape_vec((vals.len(), 1), vals.to_vec()).unwrap(),
        adjacency: LinkMatrix::zeros(vals.len()),
        reported_n: 10,
    };
    let m = match_nodes(&mk(0, &[5.0, 9.0]), &mk(1, &[5.0, 5.0, 1.0]), 0.0);
    assert_eq!(m.pairs, vec![(0, 0)]);
    assert_eq!(m.node_fraction, 0.5);
    let counts: HashMap<usize, usize> = m.pairs.iter().fold(HashMap::new(), |mut h, &(_, k)| {
        *h.entry(k).or_default() += 1;
        h
    });
    assert!(counts.values().all(|&c| c == 1));
}
