//! Quantile mechanism for node elements and randomized response for links.

use ndarray::{Array1, ArrayView1};
use rand::Rng;

use super::LdpParams;
use crate::error::{Error, Result};

/// Probability of each grid output `i / p`, `i = 0..=p`, for a normalized
/// input `x_hat` in `[0, 1]`.
///
/// The unnormalized weight of output `i` is
/// `exp(eps * (1 - floor(p * |x_hat - i/p|) / p))`. The closed-form constant
/// `(e^(eps/p) - 1) / (e^((p+1) eps/p) - 1)` only normalizes these weights
/// when `x_hat` is an endpoint of `[0, 1]`, so the weights are divided by
/// their sum instead. Both the numerator bound and the normalizer stay
/// within a factor `e^eps` across inputs.
pub fn node_output_probabilities(x_hat: f64, epsilon: f64, p: usize) -> Vec<f64> {
    let pf = p as f64;
    let weights: Vec<f64> = (0..=p)
        .map(|i| {
            let gap = (pf * (x_hat - i as f64 / pf).abs() + 1e-12).floor();
            (epsilon * (1.0 - gap / pf)).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Samples one grid value for a normalized input.
pub fn perturb_value<R: Rng + ?Sized>(x_hat: f64, params: &LdpParams, rng: &mut R) -> f64 {
    let p = params.quantiles;
    let probs = node_output_probabilities(x_hat.clamp(0.0, 1.0), params.epsilon_a, p);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, prob) in probs.iter().enumerate() {
        acc += prob;
        if u < acc {
            return i as f64 / p as f64;
        }
    }
    // Rounding left `acc` a hair under 1.
    1.0
}

/// Perturbs an encoded vector whose elements live in `[x_min, x_max]`.
/// Elements outside the range are clamped first.
pub fn perturb_node<R: Rng + ?Sized>(
    x: &ArrayView1<f64>,
    range: (f64, f64),
    params: &LdpParams,
    rng: &mut R,
) -> Result<Array1<f64>> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::validation(format!("invalid encoder range [{lo}, {hi}]")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite encoded value"));
    }
    Ok(x.mapv(|v| {
        let x_hat = (v.clamp(lo, hi) - lo) / (hi - lo);
        perturb_value(x_hat, params, rng)
    }))
}

/// Symmetric, loop-free binary matrix stored as its strict upper triangle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkMatrix {
    n: usize,
    bits: Vec<bool>,
}

impl LinkMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            bits: vec![false; n * n.saturating_sub(1) / 2],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Number of unordered pairs `n (n - 1) / 2`.
    pub fn num_pairs(&self) -> usize {
        self.bits.len()
    }

    /// Position of the pair `{i, j}` (`i != j`) in row-major upper-triangle
    /// order.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        assert!(a != b && b < self.n, "pair ({i}, {j}) invalid for size {}", self.n);
        a * (2 * self.n - a - 1) / 2 + (b - a - 1)
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        i != j && self.bits[self.pair_index(i, j)]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        let idx = self.pair_index(i, j);
        self.bits[idx] = value;
    }

    /// Pairs `(i, j)`, `i < j`, in index order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |i| ((i + 1)..self.n).map(move |j| (i, j)))
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Fraction of upper-triangle entries set; 0 for fewer than 2 nodes.
    pub fn density(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count_ones() as f64 / self.bits.len() as f64
        }
    }

    pub(crate) fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }
}

/// Flips each upper-triangle bit independently with probability `p_e`.
pub fn flip_links<R: Rng + ?Sized>(adj: &LinkMatrix, p_e: f64, rng: &mut R) -> LinkMatrix {
    let mut out = adj.clone();
    for b in out.bits_mut() {
        if rng.random_bool(p_e) {
            *b = !*b;
        }
    }
    out
}

pub fn perturb_links<R: Rng + ?Sized>(adj: &LinkMatrix, params: &LdpParams, rng: &mut R) -> LinkMatrix {
    flip_links(adj, params.flip_probability(), rng)
}

/// Expected density of a matrix of true density `x` after flipping with
/// probability `p_e`.
pub fn expected_density(x: f64, p_e: f64) -> f64 {
    x + p_e - 2.0 * x * p_e
}
