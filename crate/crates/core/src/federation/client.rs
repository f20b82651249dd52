//! One client's work in a round: local SGD and the sanitized upload.

use ndarray::Array2;
use rand::seq::index;

use super::{ClientReport, LdpConfig};
use crate::error::Result;
use crate::gcn::{loss, loss_and_grad, sgd_step, GcnModel, NormalizedAdjacency};
use crate::graph::ClientSubgraph;
use crate::ldp::{encode_batch_plain, sanitize_batch, Encoder, PermanentCache};
use crate::rng::SimRng;

/// A client's data with its normalized adjacency precomputed.
#[derive(Debug, Clone)]
pub struct ClientData {
    pub sub: ClientSubgraph,
    pub adj: NormalizedAdjacency,
    /// All local rows, the mask for the full-local-graph loss.
    pub all_rows: Vec<usize>,
}

impl ClientData {
    pub fn new(sub: ClientSubgraph) -> Self {
        let adj = NormalizedAdjacency::new(&sub.adjacency);
        let all_rows = (0..sub.num_nodes()).collect();
        Self { sub, adj, all_rows }
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.sub.features
    }

    /// Loss of `model` over every local node.
    pub fn full_loss(&self, model: &GcnModel) -> Result<f64> {
        loss(model, &self.adj, &self.features().view(), &self.sub.labels, &self.all_rows)
    }
}

/// Uniform sample of `b` indices out of `n`, sorted; everything when
/// `b >= n`.
pub fn sample_batch(n: usize, b: usize, rng: &mut SimRng) -> Vec<usize> {
    if b >= n {
        return (0..n).collect();
    }
    let mut rows = index::sample(rng, n, b).into_vec();
    rows.sort_unstable();
    rows
}

/// Server-side objects a client needs to build its upload.
pub struct UploadContext<'a> {
    pub encoder: &'a Encoder,
    pub ldp: &'a LdpConfig,
}

/// Runs `steps` SGD steps from `w_global` on mini-batches of `batch_size`
/// local nodes (loss masked to the batch, propagation over the whole local
/// graph), then reports the full-local-graph loss. With an upload context,
/// also sanitizes an independently drawn batch.
#[allow(clippy::too_many_arguments)]
pub fn client_round(
    data: &ClientData,
    w_global: &GcnModel,
    steps: usize,
    batch_size: usize,
    lr: f64,
    upload: Option<(&UploadContext<'_>, &mut PermanentCache, &mut SimRng)>,
    train_rng: &mut SimRng,
) -> Result<ClientReport> {
    let n = data.sub.num_nodes();
    let x = data.features().view();
    let mut model = w_global.clone();
    for _ in 0..steps {
        let rows = sample_batch(n, batch_size, train_rng);
        let (_, grads) = loss_and_grad(&model, &data.adj, &x, &data.sub.labels, &rows)?;
        model = sgd_step(&model, &grads, lr);
    }
    let final_loss = data.full_loss(&model)?;

    let batch = match upload {
        Some((ctx, cache, rng)) => {
            let ids: Vec<usize> = sample_batch(n, batch_size, rng)
                .into_iter()
                .map(|r| data.sub.node_ids[r])
                .collect();
            Some(if ctx.ldp.enabled {
                sanitize_batch(&data.sub, &ids, ctx.encoder, &ctx.ldp.params, cache, rng)?
            } else {
                encode_batch_plain(&data.sub, &ids, ctx.encoder)?
            })
        }
        None => None,
    };

    Ok(ClientReport {
        client_id: data.sub.client_id,
        model,
        loss: final_loss,
        batch,
    })
}
