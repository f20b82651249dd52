//! Fixtures shared by the benchmarks.

use fairgfl_core::{Adjacency, GcnModel, LinkMatrix, NormalizedAdjacency, SanitizedBatch};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random graph with features, labels and a two-layer model sized for it.
pub struct GcnFixture {
    pub adj: NormalizedAdjacency,
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub rows: Vec<usize>,
    pub model: GcnModel,
}

pub fn gcn_fixture(n: usize, feature_dim: usize, hidden: usize, classes: usize, degree: f64) -> GcnFixture {
    let mut r = rng(1);
    let p = (degree / n as f64).min(1.0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if r.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    let adj = NormalizedAdjacency::new(&Adjacency::from_edges(n, edges));
    let features = Array2::from_shape_simple_fn((n, feature_dim), || r.random_range(-1.0..1.0));
    let labels = (0..n).map(|_| r.random_range(0..classes)).collect();
    let model = GcnModel::new(feature_dim, hidden, classes, &mut r);
    GcnFixture {
        adj,
        features,
        labels,
        rows: (0..n).collect(),
        model,
    }
}

/// Sanitized-looking batch with values on a `p`-point grid and random links.
pub fn batch(client: usize, b: usize, d1: usize, p: usize, density: f64, seed: u64) -> SanitizedBatch {
    let mut r = rng(seed);
    let nodes = Array2::from_shape_simple_fn((b, d1), || r.random_range(0..=p) as f64 / p as f64);
    let mut adjacency = LinkMatrix::zeros(b);
    for i in 0..b {
        for j in (i + 1)..b {
            if r.random_bool(density) {
                adjacency.set(i, j, true);
            }
        }
    }
    SanitizedBatch {
        client_id: client,
        nodes,
        adjacency,
        reported_n: 10 * b,
    }
}
