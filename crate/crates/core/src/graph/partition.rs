//! Dirichlet-based overlapping partitioner.
//!
//! Eligible nodes are shuffled and split into an overlap pool (fraction `r`)
//! and a non-overlap pool. Non-overlap nodes are dealt out disjointly, per
//! label, in Dirichlet(`alpha_nonoverlap`) proportions across clients. Each
//! client with overlap coefficient `c > 0` then draws, for every label `l`,
//! `share_l * c / (r - c r) * |pool|` nodes (shares ~ Dirichlet(`alpha_overlap`)
//! over labels) without replacement from that label's pool nodes, capped at
//! what the pool holds. Clients draw independently, so pool nodes end up on
//! several clients.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_distr::{Distribution, Gamma};

use super::{ClientSubgraph, GlobalGraph};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// How the configured overlap coefficient is spread over clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapProfile {
    /// Every client uses the coefficient.
    Uniform,
    /// Clients cycle through no (0), low (N) and high (2N) overlap groups.
    Tiered,
}

impl fmt::Display for OverlapProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlapProfile::Uniform => "uniform",
            OverlapProfile::Tiered => "tiered",
        })
    }
}

impl FromStr for OverlapProfile {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "uniform" => Ok(OverlapProfile::Uniform),
            "tiered" => Ok(OverlapProfile::Tiered),
            _ => Err("uniform|tiered".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub num_clients: usize,
    pub overlap_coefficient: f64,
    pub overlap_pool_fraction: f64,
    pub dirichlet_alpha_nonoverlap: f64,
    pub dirichlet_alpha_overlap: f64,
    pub profile: OverlapProfile,
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            num_clients: 10,
            overlap_coefficient: 0.2,
            overlap_pool_fraction: 0.3,
            dirichlet_alpha_nonoverlap: 0.5,
            dirichlet_alpha_overlap: 0.8,
            profile: OverlapProfile::Tiered,
            seed: 0,
        }
    }
}

/// Smallest node count a client is topped up to after the non-overlap deal.
const MIN_CLIENT_NODES: usize = 2;

impl PartitionSpec {
    pub fn client_coefficient(&self, client: usize) -> f64 {
        match self.profile {
            OverlapProfile::Uniform => self.overlap_coefficient,
            OverlapProfile::Tiered => self.overlap_coefficient * (client % 3) as f64,
        }
    }

    /// Multiplier applied to the overlap pool size for one client.
    pub fn overlap_scale(&self, client: usize) -> f64 {
        let c = self.client_coefficient(client);
        if c == 0.0 {
            0.0
        } else {
            let r = self.overlap_pool_fraction;
            c / (r - c * r)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::validation("num_clients must be positive"));
        }
        let r = self.overlap_pool_fraction;
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::validation(format!("overlap_pool_fraction {r} not in (0, 1]")));
        }
        for (name, a) in [
            ("dirichlet_alpha_nonoverlap", self.dirichlet_alpha_nonoverlap),
            ("dirichlet_alpha_overlap", self.dirichlet_alpha_overlap),
        ] {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::validation(format!("{name} must be positive, got {a}")));
            }
        }
        if !(0.0..1.0).contains(&self.overlap_coefficient) {
            return Err(Error::validation(format!(
                "overlap_coefficient {} not in [0, 1)",
                self.overlap_coefficient
            )));
        }
        for client in 0..self.num_clients.min(3) {
            let c = self.client_coefficient(client);
            if c >= 1.0 {
                return Err(Error::validation(format!(
                    "client {client} overlap coefficient {c} must be < 1"
                )));
            }
            let scale = self.overlap_scale(client);
            if !scale.is_finite() || scale < 0.0 {
                return Err(Error::validation(format!("overlap scale {scale} is not finite")));
            }
        }
        Ok(())
    }
}

pub(crate) fn sample_dirichlet(alpha: f64, k: usize, rng: &mut SimRng) -> Vec<f64> {
    if k == 1 {
        return vec![1.0];
    }
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    loop {
        let draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|g| g / total).collect();
        }
    }
}

/// Splits `count` items by `shares` with floors plus largest remainders.
fn apportion(count: usize, shares: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = shares.iter().map(|s| s * count as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|x| x.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(count.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Partitions every node of `graph`.
pub fn partition(graph: &GlobalGraph, spec: &PartitionSpec) -> Result<Vec<ClientSubgraph>> {
    let all: Vec<usize> = graph.node_ids().collect();
    partition_nodes(graph, &all, spec)
}

/// Partitions only the `eligible` nodes (for example, after a test split).
pub fn partition_nodes(
    graph: &GlobalGraph,
    eligible: &[usize],
    spec: &PartitionSpec,
) -> Result<Vec<ClientSubgraph>> {
    spec.validate()?;
    if eligible.is_empty() {
        return Err(Error::validation("cannot partition an empty node set"));
    }
    let p = spec.num_clients;
    if p > eligible.len() {
        return Err(Error::validation(format!(
            "{p} clients but only {} nodes",
            eligible.len()
        )));
    }

    let mut rng = SimRng::seed_from_u64(spec.seed);
    let mut nodes = eligible.to_vec();
    nodes.sort_unstable();
    nodes.dedup();
    nodes.shuffle(&mut rng);

    let pool_len = (spec.overlap_pool_fraction * nodes.len() as f64).round() as usize;
    let (pool, rest) = nodes.split_at(pool_len.min(nodes.len()));

    let num_labels = graph.num_classes();
    let by_label = |set: &[usize]| {
        let mut out = vec![Vec::new(); num_labels];
        for &v in set {
            out[graph.labels()[v]].push(v);
        }
        out
    };

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); p];
    for label_nodes in by_label(rest) {
        let shares = sample_dirichlet(spec.dirichlet_alpha_nonoverlap, p, &mut rng);
        let counts = apportion(label_nodes.len(), &shares);
        let mut it = label_nodes.into_iter();
        for (client, c) in counts.into_iter().enumerate() {
            members[client].extend(it.by_ref().take(c));
        }
    }

    let min_nodes = if rest.len() >= MIN_CLIENT_NODES * p {
        MIN_CLIENT_NODES
    } else {
        usize::from(rest.len() >= p)
    };
    loop {
        let Some(small) = (0..p).find(|&c| members[c].len() < min_nodes) else {
            break;
        };
        let large = (0..p)
            .max_by_key(|&c| (members[c].len(), std::cmp::Reverse(c)))
            .expect("p > 0");
        let moved = members[large].pop().expect("largest client is non-empty");
        members[small].push(moved);
    }

    let pool_by_label = by_label(pool);
    for (client, member) in members.iter_mut().enumerate() {
        let scale = spec.overlap_scale(client);
        if scale == 0.0 {
            continue;
        }
        let shares = sample_dirichlet(spec.dirichlet_alpha_overlap, num_labels, &mut rng);
        for (label_nodes, share) in pool_by_label.iter().zip(shares) {
            let want = (share * scale * pool.len() as f64).round() as usize;
            let take = want.min(label_nodes.len());
            if take == 0 {
                continue;
            }
            member.extend(
                index::sample(&mut rng, label_nodes.len(), take)
                    .into_iter()
                    .map(|i| label_nodes[i]),
            );
        }
    }

    Ok(members
        .into_iter()
        .enumerate()
        .map(|(client, ids)| ClientSubgraph::induced(graph, client, ids))
        .collect())
}
