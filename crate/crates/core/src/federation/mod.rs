//! Round-based simulation of clients and server.

mod aggregate;
mod client;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use log::debug;
use rand::seq::{index, SliceRandom};

use crate::error::{Error, Result};
use crate::estimator::{calibrate_tau, estimate_round, EstimatorMode, OverlapState};
use crate::gcn::{GcnModel, NormalizedAdjacency};
use crate::graph::{partition_nodes, ClientSubgraph, GlobalGraph, PartitionSpec};
use crate::ldp::{train_encoder, Encoder, LdpParams, PermanentCache, SanitizedBatch};
use crate::metrics::{evaluate_with, RoundRecord};
use crate::rng::{derive_seed, rng_for, stream};

pub use aggregate::{
    aggregate_fair, aggregate_fedavg, aggregate_qfedavg, fairness_weights, max_loss_report,
    qfedavg_weights, FairOptions,
};
pub use client::{client_round, sample_batch, ClientData, UploadContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    FairGfl,
    FedAvg,
    QFedAvg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::FairGfl, Algorithm::FedAvg, Algorithm::QFedAvg];
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::FairGfl => "fairgfl",
            Algorithm::FedAvg => "fedavg",
            Algorithm::QFedAvg => "qfedavg",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fairgfl" => Ok(Algorithm::FairGfl),
            "fedavg" => Ok(Algorithm::FedAvg),
            "qfedavg" => Ok(Algorithm::QFedAvg),
            _ => Err("fairgfl|fedavg|qfedavg".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    /// `P`
    pub num_clients: usize,
    /// `K`
    pub clients_per_round: usize,
    /// `E`
    pub local_steps: usize,
    /// `J`
    pub rounds: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub beta: f64,
    pub algorithm: Algorithm,
    pub q: f64,
    pub seed: u64,
    pub hidden_dim: usize,
    pub estimator: EstimatorMode,
    pub literal_eq17: bool,
    pub renormalize: bool,
    /// When false the overlap state stays all-zero.
    pub estimate_overlap: bool,
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            num_clients: 10,
            clients_per_round: 5,
            local_steps: 5,
            rounds: 100,
            lr: 0.05,
            batch_size: 32,
            lambda: 0.1,
            alpha: 0.8,
            beta: 0.5,
            algorithm: Algorithm::FairGfl,
            q: 1.0,
            seed: 0,
            hidden_dim: 16,
            estimator: EstimatorMode::Corrected,
            literal_eq17: false,
            renormalize: false,
            estimate_overlap: true,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.into(),
                message,
            })
        };
        if self.num_clients == 0 {
            return bad("P", "must be at least 1".into());
        }
        if self.clients_per_round == 0 || self.clients_per_round > self.num_clients {
            return bad("K", format!("must be in [1, P = {}]", self.num_clients));
        }
        if self.local_steps == 0 {
            return bad("E", "must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("b", "must be at least 1".into());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", "must be >= 0".into());
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("alpha", "must be in [0, 1]".into());
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta", "must be in (0, 1]".into());
        }
        if !(self.q >= 0.0 && self.q.is_finite()) {
            return bad("q", "must be >= 0".into());
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn fair_options(&self) -> FairOptions {
        FairOptions {
            lambda: self.lambda,
            renormalize: self.renormalize,
            literal_eq17: self.literal_eq17,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdpConfig {
    /// Off: uploads carry raw normalized encodings and true adjacency.
    pub enabled: bool,
    pub params: LdpParams,
    pub encoder_dim: usize,
    pub encoder_epochs: usize,
    pub permanent_cache: bool,
    /// Percentile of same-node sanitization distances used as the matching
    /// threshold.
    pub tau_percentile: f64,
}

impl Default for LdpConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            params: LdpParams::default(),
            encoder_dim: 16,
            encoder_epochs: 100,
            permanent_cache: true,
            tau_percentile: 5.0,
        }
    }
}

/// Everything a run needs besides the graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub partition: PartitionSpec,
    pub fed: FedConfig,
    pub ldp: LdpConfig,
    /// Fraction of nodes held out for testing, never given to clients.
    pub test_fraction: f64,
    /// Fraction of nodes given to the server for encoder training.
    pub public_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            partition: PartitionSpec::default(),
            fed: FedConfig::default(),
            ldp: LdpConfig::default(),
            test_fraction: 0.2,
            public_fraction: 0.05,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.fed.validate()?;
        self.partition.validate()?;
        if self.partition.num_clients != self.fed.num_clients {
            return Err(Error::validation(format!(
                "partition has {} clients, federation expects {}",
                self.partition.num_clients, self.fed.num_clients
            )));
        }
        if self.ldp.enabled {
            self.ldp.params.validate()?;
        }
        let f = self.test_fraction + self.public_fraction;
        if !(0.0..1.0).contains(&self.test_fraction) || !(0.0..1.0).contains(&self.public_fraction) || f >= 1.0 {
            return Err(Error::validation(format!(
                "test_fraction + public_fraction = {f} must be below 1"
            )));
        }
        if self.ldp.encoder_dim == 0 {
            return Err(Error::validation("encoder_dim must be at least 1"));
        }
        Ok(())
    }
}

/// A client's contribution to one round.
#[derive(Debug, Clone)]
pub struct ClientReport {
    pub client_id: usize,
    pub model: GcnModel,
    /// Full-local-graph loss after local training.
    pub loss: f64,
    pub batch: Option<SanitizedBatch>,
}

/// Held-out node sets and client partition of one run.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub test_nodes: Vec<usize>,
    pub public_nodes: Vec<usize>,
    pub clients: Vec<ClientSubgraph>,
}

/// Draws the test and public sets, then partitions the remaining nodes.
pub fn split_data(graph: &GlobalGraph, cfg: &ExperimentConfig) -> Result<DataSplit> {
    let n = graph.num_nodes();
    let mut ids: Vec<usize> = graph.node_ids().collect();
    ids.shuffle(&mut rng_for(cfg.fed.seed, &[stream::SPLIT]));
    let n_test = (cfg.test_fraction * n as f64).round() as usize;
    let n_public = ((cfg.public_fraction * n as f64).round() as usize).max(1);
    if n_test + n_public >= n {
        return Err(Error::validation(format!("graph of {n} nodes too small to split")));
    }
    let mut test_nodes = ids[..n_test].to_vec();
    let mut public_nodes = ids[n_test..n_test + n_public].to_vec();
    test_nodes.sort_unstable();
    public_nodes.sort_unstable();
    let clients = partition_nodes(graph, &ids[n_test + n_public..], &cfg.partition)?;
    Ok(DataSplit {
        test_nodes,
        public_nodes,
        clients,
    })
}

/// Result of [`run_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<RoundRecord>,
    pub model: GcnModel,
    /// Overlap state after every round (empty unless overlap is estimated).
    pub overlap_history: Vec<OverlapState>,
    pub tau: f64,
    pub split: DataSplit,
}

/// Everything fixed before round 0.
pub struct Setup {
    pub split: DataSplit,
    pub clients: Vec<ClientData>,
    pub encoder: Encoder,
    pub tau: f64,
    pub initial_model: GcnModel,
    global_adj: NormalizedAdjacency,
}

pub fn prepare(graph: &GlobalGraph, cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate()?;
    let split = split_data(graph, cfg)?;
    let seed = cfg.fed.seed;
    let public = graph.features().select(ndarray::Axis(0), &split.public_nodes);
    let encoder = train_encoder(&public.view(), cfg.ldp.encoder_dim, cfg.ldp.encoder_epochs, derive_seed(seed, &[stream::ENCODER]))?;
    let tau = if cfg.ldp.enabled {
        calibrate_tau(
            &encoder,
            &public.view(),
            &cfg.ldp.params,
            cfg.ldp.tau_percentile,
            &mut rng_for(seed, &[stream::TAU]),
        )?
    } else {
        // Unperturbed encodings of one node coincide exactly.
        1e-9
    };
    let initial_model = GcnModel::new(
        graph.feature_dim(),
        cfg.fed.hidden_dim,
        graph.num_classes(),
        &mut rng_for(seed, &[stream::MODEL_INIT]),
    );
    let clients = split.clients.iter().cloned().map(ClientData::new).collect();
    Ok(Setup {
        split,
        clients,
        encoder,
        tau,
        initial_model,
        global_adj: NormalizedAdjacency::new(graph.adjacency()),
    })
}

/// Uniform sample of `k` of `p` clients for `round`, sorted.
pub fn sample_clients(seed: u64, round: usize, p: usize, k: usize) -> Vec<usize> {
    let mut rng = rng_for(seed, &[stream::CLIENT_SAMPLING, round as u64]);
    let mut ids = index::sample(&mut rng, p, k).into_vec();
    ids.sort_unstable();
    ids
}

pub fn run_experiment(graph: &GlobalGraph, cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let setup = prepare(graph, cfg)?;
    run_prepared(graph, cfg, setup)
}

/// Runs all rounds on an already prepared setup.
pub fn run_prepared(graph: &GlobalGraph, cfg: &ExperimentConfig, setup: Setup) -> Result<ExperimentOutput> {
    let fed = &cfg.fed;
    let seed = fed.seed;
    let estimating = fed.algorithm == Algorithm::FairGfl && fed.estimate_overlap;
    let mut state = OverlapState::new(fed.num_clients, fed.alpha, fed.beta, setup.tau)?;
    let mut caches: Vec<PermanentCache> = (0..fed.num_clients)
        .map(|_| {
            if cfg.ldp.permanent_cache {
                PermanentCache::new()
            } else {
                PermanentCache::disabled()
            }
        })
        .collect();
    let upload_ctx = UploadContext {
        encoder: &setup.encoder,
        ldp: &cfg.ldp,
    };

    let mut model = setup.initial_model.clone();
    let mut records = Vec::with_capacity(fed.rounds);
    let mut overlap_history = Vec::new();
    let x = graph.features().view();

    for round in 0..fed.rounds {
        let started = Instant::now();
        let round_err = |e: Error| Error::Round {
            round,
            source: Box::new(e),
        };
        let sampled = sample_clients(seed, round, fed.num_clients, fed.clients_per_round);

        let mut reports = Vec::with_capacity(sampled.len());
        for &c in &sampled {
            let mut train_rng = rng_for(seed, &[stream::LOCAL_TRAINING, round as u64, c as u64]);
            let mut upload_rng = rng_for(seed, &[stream::SANITIZE, round as u64, c as u64]);
            let upload = if estimating {
                Some((&upload_ctx, &mut caches[c], &mut upload_rng))
            } else {
                None
            };
            let report = client_round(&setup.clients[c], &model, fed.local_steps, fed.batch_size, fed.lr, upload, &mut train_rng)
                .map_err(|e| Error::Client {
                    round,
                    client: c,
                    source: Box::new(e),
                })?;
            reports.push(report);
        }

        if estimating {
            let batches: Vec<SanitizedBatch> = reports.iter().filter_map(|r| r.batch.clone()).collect();
            let est = estimate_round(&batches, setup.tau, fed.estimator).map_err(round_err)?;
            state.update(&est);
            overlap_history.push(state.clone());
        }

        model = match fed.algorithm {
            Algorithm::FairGfl => aggregate_fair(&model, &reports, &state, fed.fair_options()),
            Algorithm::FedAvg => aggregate_fedavg(&model, &reports),
            Algorithm::QFedAvg => aggregate_qfedavg(&model, &reports, fed.q, fed.lr),
        };
        if !model.is_finite() {
            return Err(round_err(Error::numeric("aggregated model is not finite")));
        }

        let (test_loss, test_acc) = if setup.split.test_nodes.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            evaluate_with(&model, &setup.global_adj, &x, graph.labels(), &setup.split.test_nodes).map_err(round_err)?
        };
        let losses = setup
            .clients
            .iter()
            .map(|c| c.full_loss(&model))
            .collect::<Result<Vec<f64>>>()
            .map_err(round_err)?;
        let record = RoundRecord::new(
            round,
            &fed.algorithm.to_string(),
            test_loss,
            test_acc,
            losses,
            started.elapsed().as_millis() as u64,
        );
        debug!(
            "round {round}: test_acc {:.3} loss_var {:.4} entropy {:.4}",
            record.test_acc, record.loss_variance, record.loss_entropy
        );
        records.push(record);
    }

    Ok(ExperimentOutput {
        records,
        model,
        overlap_history,
        tau: setup.tau,
        split: setup.split,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_sbm;

    fn small() -> (GlobalGraph, ExperimentConfig) {
        let g = generate_sbm(3, 20, 0.2, 0.02, 8, 1).unwrap();
        let mut cfg = ExperimentConfig::default();
        cfg.fed.num_clients = 4;
        cfg.fed.clients_per_round = 2;
        cfg.fed.rounds = 3;
        cfg.fed.batch_size = 8;
        cfg.partition.num_clients = 4;
        cfg.ldp.encoder_dim = 4;
        cfg.ldp.encoder_epochs = 5;
        (g, cfg)
    }

    #[test]
    fn zero_rounds_leave_model_untouched() {
        let (g, mut cfg) = small();
        cfg.fed.rounds = 0;
        let setup = prepare(&g, &cfg).unwrap();
        let init = setup.initial_model.clone();
        let out = run_prepared(&g, &cfg, setup).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.model, init);
    }

    #[test]
    fn runs_are_reproducible() {
        let (g, cfg) = small();
        let a = run_experiment(&g, &cfg).unwrap();
        let b = run_experiment(&g, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.per_client_losses, y.per_client_losses);
        }
        assert_eq!(a.overlap_history, b.overlap_history);
    }

    #[test]
    fn split_sets_are_disjoint_from_clients() {
        let (g, cfg) = small();
        let split = split_data(&g, &cfg).unwrap();
        for c in &split.clients {
            for v in &c.node_ids {
                assert!(split.test_nodes.binary_search(v).is_err());
                assert!(split.public_nodes.binary_search(v).is_err());
            }
        }
        assert_eq!(split.test_nodes.len(), 12);
        assert_eq!(split.public_nodes.len(), 3);
    }

    #[test]
    fn config_validation() {
        let (_, mut cfg) = small();
        cfg.fed.clients_per_round = 0;
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
        cfg.fed.clients_per_round = 5;
        assert!(cfg.validate().is_err());
        cfg.fed.clients_per_round = 2;
        cfg.partition.num_clients = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
        }
        assert!("fedprox".parse::<Algorithm>().is_err());
    }
}
