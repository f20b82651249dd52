//! Local differential privacy for uploaded mini-batches.
//!
//! A client encodes each batch node with a server-trained encoder, maps
//! every encoded element to a `(p + 1)`-point grid with the quantile
//! mechanism, flips adjacency bits by randomized response, and then prunes
//! the densest-looking false links using distances between sanitized
//! vectors. Everything after perturbation is post-processing.

mod encoder;
mod mechanism;
mod sanitize;
mod sparsify;

pub use encoder::{train_encoder, Autoencoder, Encoder};
pub use mechanism::{
    expected_density, flip_links, node_output_probabilities, perturb_links, perturb_node,
    perturb_value, LinkMatrix,
};
pub use sanitize::{encode_batch_plain, sanitize_batch, PermanentCache, SanitizedBatch};
pub use sparsify::sparsify_correct;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LdpParams {
    /// Budget per encoded element.
    pub epsilon_a: f64,
    /// Budget per adjacency bit.
    pub epsilon_b: f64,
    /// Grid resolution `p`; outputs lie on `{0, 1/p, .., 1}`.
    pub quantiles: usize,
}

impl Default for LdpParams {
    fn default() -> Self {
        Self {
            epsilon_a: 3.0,
            epsilon_b: 1.0,
            quantiles: 8,
        }
    }
}

impl LdpParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_a > 0.0 && self.epsilon_a.is_finite()) {
            return Err(Error::validation(format!(
                "epsilon_a must be positive and finite, got {}",
                self.epsilon_a
            )));
        }
        if !(self.epsilon_b > 0.0 && self.epsilon_b.is_finite()) {
            return Err(Error::validation(format!(
                "epsilon_b must be positive and finite, got {}",
                self.epsilon_b
            )));
        }
        if self.quantiles == 0 {
            return Err(Error::validation("quantiles must be at least 1"));
        }
        Ok(())
    }

    /// Randomized-response flip probability `1 / (1 + e^eps_b)`.
    pub fn flip_probability(&self) -> f64 {
        1.0 / (1.0 + self.epsilon_b.exp())
    }
}
