//! Stochastic block model with block-dependent Gaussian features.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use super::{Adjacency, GlobalGraph};
use crate::error::{Error, Result};
use crate::rng::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct SbmParams {
    pub num_blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Minimum Euclidean distance between block means, in units of the
    /// per-coordinate feature standard deviation.
    pub mean_separation: f64,
    pub seed: u64,
}

impl Default for SbmParams {
    fn default() -> Self {
        Self {
            num_blocks: 7,
            nodes_per_block: 60,
            p_in: 0.1,
            p_out: 0.01,
            feature_dim: 32,
            mean_separation: 4.0,
            seed: 0,
        }
    }
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_block < 2 {
            return Err(Error::validation("nodes_per_block must be at least 2"));
        }
        if self.num_blocks == 0 || self.feature_dim == 0 {
            return Err(Error::validation("num_blocks and feature_dim must be positive"));
        }
        if !(0.0 <= self.p_out && self.p_out <= self.p_in && self.p_in <= 1.0) {
            return Err(Error::validation(format!(
                "need 0 <= p_out <= p_in <= 1, got p_in={}, p_out={}",
                self.p_in, self.p_out
            )));
        }
        if !(self.mean_separation.is_finite() && self.mean_separation >= 0.0) {
            return Err(Error::validation("mean_separation must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<GlobalGraph> {
        self.validate()?;
        let mut rng = SimRng::seed_from_u64(self.seed);
        let n = self.num_blocks * self.nodes_per_block;
        let block = |i: usize| i / self.nodes_per_block;

        let means = block_means(self.num_blocks, self.feature_dim, self.mean_separation, &mut rng);

        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                let p = if block(u) == block(v) { self.p_in } else { self.p_out };
                if rng.random_bool(p) {
                    edges.push((u, v));
                }
            }
        }

        let mut features = Array2::zeros((n, self.feature_dim));
        for (i, mut row) in features.outer_iter_mut().enumerate() {
            let mean = means.row(block(i));
            for (x, m) in row.iter_mut().zip(mean.iter()) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = m + z;
            }
        }

        let labels = (0..n).map(block).collect();
        GlobalGraph::new(features, labels, self.num_blocks, Adjacency::from_edges(n, edges))
    }
}

/// Random Gaussian directions rescaled so the closest pair of means sits at
/// exactly `separation`.
fn block_means(blocks: usize, dim: usize, separation: f64, rng: &mut SimRng) -> Array2<f64> {
    let mut means = Array2::from_shape_fn((blocks, dim), |_| {
        let z: f64 = StandardNormal.sample(rng);
        z
    });
    if blocks < 2 {
        means.fill(0.0);
        return means;
    }
    let mut min_dist = f64::INFINITY;
    for a in 0..blocks {
        for b in (a + 1)..blocks {
            let d = (&means.row(a) - &means.row(b)).mapv(|x| x * x).sum().sqrt();
            min_dist = min_dist.min(d);
        }
    }
    if min_dist > 0.0 {
        means *= separation / min_dist;
    }
    means
}

/// Convenience wrapper with the default mean separation of 4 standard
/// deviations.
pub fn generate_sbm(
    num_blocks: usize,
    nodes_per_block: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    seed: u64,
) -> Result<GlobalGraph> {
    SbmParams {
        num_blocks,
        nodes_per_block,
        p_in,
        p_out,
        feature_dim,
        seed,
        ..SbmParams::default()
    }
    .generate()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_probabilities_give_disjoint_triangles() {
        let g = generate_sbm(2, 3, 1.0, 0.0, 4, 1).unwrap();
        let edges: Vec<_> = g.adjacency().edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 2), (3, 4), (3, 5), (4, 5)]);
        assert_eq!(g.labels(), &[0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn uniform_probability_matches_binomial_expectation() {
        // Oracle: edge count ~ Binomial(n(n-1)/2, p); the mean over 100
        // seeds has standard error sigma/10.
        let (blocks, per, p) = (3, 10, 0.2);
        let n = (blocks * per) as f64;
        let pairs = n * (n - 1.0) / 2.0;
        let expected = p * pairs;
        let sigma = (pairs * p * (1.0 - p)).sqrt();
        let mean = (0..100)
            .map(|s| generate_sbm(blocks, per, p, p, 2, s).unwrap().adjacency().num_edges() as f64)
            .sum::<f64>()
            / 100.0;
        assert!(
            (mean - expected).abs() <= 3.0 * sigma / 10.0,
            "mean {mean}, expected {expected} +- {}",
            3.0 * sigma / 10.0
        );
        for s in 0..100 {
            let e = generate_sbm(blocks, per, p, p, 2, s).unwrap().adjacency().num_edges() as f64;
            assert!((e - expected).abs() <= 5.0 * sigma);
        }
    }

    #[test]
    fn same_seed_same_graph() {
        let a = generate_sbm(3, 5, 0.5, 0.1, 6, 42).unwrap();
        let b = generate_sbm(3, 5, 0.5, 0.1, 6, 42).unwrap();
        assert_eq!(a.adjacency(), b.adjacency());
        assert_eq!(a.features(), b.features());
        let c = generate_sbm(3, 5, 0.5, 0.1, 6, 43).unwrap();
        assert_ne!(a.features(), c.features());
    }

    #[test]
    fn rejects_tiny_blocks_and_bad_probabilities() {
        assert!(generate_sbm(2, 1, 0.5, 0.1, 2, 0).is_err());
        assert!(generate_sbm(2, 3, 0.1, 0.5, 2, 0).is_err());
        assert!(generate_sbm(2, 3, 1.5, 0.5, 2, 0).is_err());
    }

    #[test]
    fn block_means_are_separated() {
        let mut rng = SimRng::seed_from_u64(3);
        let means = block_means(7, 32, 4.0, &mut rng);
        for a in 0..7 {
            for b in (a + 1)..7 {
                let d = (&means.row(a) - &means.row(b)).mapv(|x| x * x).sum().sqrt();
                assert!(d >= 4.0 - 1e-9);
            }
        }
    }
}
