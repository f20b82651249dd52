//! Client-side batch sanitization with permanent randomized response.

use std::collections::HashMap;

use ndarray::{Array1, Array2};
use rand::Rng;

use super::{perturb_node, sparsify_correct, Encoder, LdpParams, LinkMatrix};
use crate::error::{Error, Result};
use crate::graph::ClientSubgraph;

/// First perturbation of every node and node pair a client has released.
/// Later releases reuse the stored value, so repeated queries reveal
/// nothing new. A disabled cache stores nothing.
#[derive(Debug, Clone, Default)]
pub struct PermanentCache {
    disabled: bool,
    nodes: HashMap<usize, Array1<f64>>,
    links: HashMap<(usize, usize), bool>,
}

impl PermanentCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn disabled() -> Self {
        Self {
            disabled: true,
            ..Self::default()
        }
    }

    pub fn is_enabled(&self) -> bool {
        !self.disabled
    }

    pub fn cached_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn cached_links(&self) -> usize {
        self.links.len()
    }

    fn node<R: Rng + ?Sized>(
        &mut self,
        global_id: usize,
        make: impl FnOnce(&mut R) -> Result<Array1<f64>>,
        rng: &mut R,
    ) -> Result<Array1<f64>> {
        if self.disabled {
            return make(rng);
        }
        if let Some(v) = self.nodes.get(&global_id) {
            return Ok(v.clone());
        }
        let v = make(rng)?;
        self.nodes.insert(global_id, v.clone());
        Ok(v)
    }

    fn link<R: Rng + ?Sized>(&mut self, pair: (usize, usize), truth: bool, p_e: f64, rng: &mut R) -> bool {
        let key = if pair.0 < pair.1 { pair } else { (pair.1, pair.0) };
        if !self.disabled {
            if let Some(&bit) = self.links.get(&key) {
                return bit;
            }
        }
        let bit = truth ^ rng.random_bool(p_e);
        if !self.disabled {
            self.links.insert(key, bit);
        }
        bit
    }
}

/// What the server receives for one client mini-batch.
#[derive(Debug, Clone, PartialEq)]
pub struct SanitizedBatch {
    pub client_id: usize,
    /// One row per batch node. Under LDP every entry is a grid point `i/p`.
    pub nodes: Array2<f64>,
    pub adjacency: LinkMatrix,
    /// The client's total node count, published as metadata.
    pub reported_n: usize,
}

impl SanitizedBatch {
    pub fn batch_size(&self) -> usize {
        self.nodes.nrows()
    }
}

fn local_indices(sub: &ClientSubgraph, batch: &[usize]) -> Result<Vec<usize>> {
    batch
        .iter()
        .map(|&g| {
            sub.local_index(g).ok_or_else(|| {
                Error::validation(format!("node {g} is not held by client {}", sub.client_id))
            })
        })
        .collect()
}

/// Encodes, perturbs and corrects the batch `batch` (global ids held by
/// `sub`). Cached releases are reused; new ones draw from `rng` in batch
/// order, nodes first, then pairs in upper-triangle order.
pub fn sanitize_batch<R: Rng + ?Sized>(
    sub: &ClientSubgraph,
    batch: &[usize],
    encoder: &Encoder,
    params: &LdpParams,
    cache: &mut PermanentCache,
    rng: &mut R,
) -> Result<SanitizedBatch> {
    let local = local_indices(sub, batch)?;
    let b = batch.len();
    let mut nodes = Array2::zeros((b, encoder.output_dim()));
    for (row, (&g, &l)) in batch.iter().zip(&local).enumerate() {
        let features = sub.features.row(l);
        let v = cache.node(
            g,
            |rng: &mut R| perturb_node(&encoder.encode(&features).view(), encoder.range(), params, rng),
            rng,
        )?;
        nodes.row_mut(row).assign(&v);
    }

    let p_e = params.flip_probability();
    let mut noised = LinkMatrix::zeros(b);
    for i in 0..b {
        for j in (i + 1)..b {
            let truth = sub.adjacency.has_edge(local[i], local[j]);
            let bit = cache.link((batch[i], batch[j]), truth, p_e, rng);
            noised.set(i, j, bit);
        }
    }
    let adjacency = sparsify_correct(&noised, &nodes, p_e);

    Ok(SanitizedBatch {
        client_id: sub.client_id,
        nodes,
        adjacency,
        reported_n: sub.num_nodes(),
    })
}

/// Upload without privacy: normalized encodings and the true induced
/// adjacency of the batch.
pub fn encode_batch_plain(sub: &ClientSubgraph, batch: &[usize], encoder: &Encoder) -> Result<SanitizedBatch> {
    let local = local_indices(sub, batch)?;
    let b = batch.len();
    let mut nodes = Array2::zeros((b, encoder.output_dim()));
    for (row, &l) in local.iter().enumerate() {
        nodes.row_mut(row).assign(&encoder.encode_normalized(&sub.features.row(l)));
    }
    let mut adjacency = LinkMatrix::zeros(b);
    for i in 0..b {
        for j in (i + 1)..b {
            adjacency.set(i, j, sub.adjacency.has_edge(local[i], local[j]));
        }
    }
    Ok(SanitizedBatch {
        client_id: sub.client_id,
        nodes,
        adjacency,
        reported_n: sub.num_nodes(),
    })
}
