//! Server-side overlap estimation from sanitized batches.
//!
//! Batches from two clients are matched node-to-node by distance between
//! sanitized vectors. The matched fraction and the links both batches agree
//! on are rescaled by batch/client sizes into node and link overlap ratios,
//! smoothed across rounds, and coupled into one matrix that drives the
//! aggregation weights.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::ldp::{perturb_node, Encoder, LdpParams, SanitizedBatch};

/// One-to-one node matching between two batches.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(row in a, row in b)`, in acceptance order.
    pub pairs: Vec<(usize, usize)>,
    /// Matched fraction of batch `a`.
    pub node_fraction: f64,
    /// Links present in both batches among matched pairs, over the links
    /// of batch `a`.
    pub link_fraction: f64,
}

impl MatchResult {
    pub fn num_matches(&self) -> usize {
        self.pairs.len()
    }
}

fn distance(a: &ArrayView2<f64>, i: usize, b: &ArrayView2<f64>, k: usize) -> f64 {
    a.row(i)
        .iter()
        .zip(b.row(k).iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Greedy matching: every cross pair within distance `tau` (inclusive),
/// taken in ascending distance order (ties by row indices) whenever both
/// rows are still free.
pub fn match_nodes(a: &SanitizedBatch, b: &SanitizedBatch, tau: f64) -> MatchResult {
    let (na, nb) = (a.nodes.view(), b.nodes.view());
    let mut candidates = Vec::new();
    for i in 0..na.nrows() {
        for k in 0..nb.nrows() {
            let d = distance(&na, i, &nb, k);
            if d <= tau {
                candidates.push((d, i, k));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2).cmp(&(y.1, y.2))));

    let mut used_a = vec![false; na.nrows()];
    let mut used_b = vec![false; nb.nrows()];
    let mut pairs = Vec::new();
    for (_, i, k) in candidates {
        if !used_a[i] && !used_b[k] {
            used_a[i] = true;
            used_b[k] = true;
            pairs.push((i, k));
        }
    }

    let node_fraction = if na.nrows() == 0 {
        0.0
    } else {
        pairs.len() as f64 / na.nrows() as f64
    };
    let links_a = a.adjacency.count_ones();
    let link_fraction = if links_a == 0 {
        0.0
    } else {
        let mut shared = 0;
        for (x, &(i1, k1)) in pairs.iter().enumerate() {
            for &(i2, k2) in &pairs[x + 1..] {
                if a.adjacency.get(i1, i2) && b.adjacency.get(k1, k2) {
                    shared += 1;
                }
            }
        }
        shared as f64 / links_a as f64
    };

    MatchResult {
        pairs,
        node_fraction,
        link_fraction,
    }
}

/// Which scaling turns batch-level fractions into client-level ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorMode {
    /// Literal scalings: node `Ñ n_i / b_k`, link `T̃ n_k² / b_i²`.
    Paper,
    /// Unbiased under uniform batch sampling: node `Ñ n_k / b_k`, link
    /// `T̃ (n_k / b_k)²`.
    #[default]
    Corrected,
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorMode::Paper => "paper",
            EstimatorMode::Corrected => "corrected",
        })
    }
}

impl FromStr for EstimatorMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "paper" => Ok(EstimatorMode::Paper),
            "corrected" => Ok(EstimatorMode::Corrected),
            _ => Err("paper|corrected".into()),
        }
    }
}

/// Node overlap ratio of client `i` with client `k`, clamped to `[0, 1]`.
pub fn estimate_node_ratio(
    m: &MatchResult,
    n_i: usize,
    n_k: usize,
    b_i: usize,
    b_k: usize,
    mode: EstimatorMode,
) -> Result<f64> {
    if b_k == 0 {
        return Err(Error::validation("batch of client k is empty"));
    }
    if b_i > n_i || b_k > n_k {
        return Err(Error::validation(format!(
            "batch sizes ({b_i}, {b_k}) exceed client sizes ({n_i}, {n_k})"
        )));
    }
    let scale = match mode {
        EstimatorMode::Paper => n_i as f64 / b_k as f64,
        EstimatorMode::Corrected => n_k as f64 / b_k as f64,
    };
    Ok((m.node_fraction * scale).clamp(0.0, 1.0))
}

/// Third scaling, `Ñ n_i² / (n_k b_k)`, reported by the calibration
/// harness for comparison only.
pub fn appendix_node_ratio(m: &MatchResult, n_i: usize, n_k: usize, b_k: usize) -> f64 {
    let (n_i, n_k, b_k) = (n_i as f64, n_k as f64, b_k as f64);
    (m.node_fraction * n_i * n_i / (n_k * b_k)).clamp(0.0, 1.0)
}

/// Link overlap ratio of client `i` with client `k`, clamped to `[0, 1]`.
/// Returns 0 for empty batches.
pub fn estimate_link_ratio(m: &MatchResult, n_k: usize, b_i: usize, b_k: usize, mode: EstimatorMode) -> f64 {
    let denom = match mode {
        EstimatorMode::Paper => b_i,
        EstimatorMode::Corrected => b_k,
    };
    if denom == 0 {
        return 0.0;
    }
    let r = n_k as f64 / denom as f64;
    (m.link_fraction * r * r).clamp(0.0, 1.0)
}

/// Estimates from one round, keyed by ordered client pair `(i, k)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundEstimates {
    pub node: BTreeMap<(usize, usize), f64>,
    pub link: BTreeMap<(usize, usize), f64>,
}

/// Matches every ordered pair of uploaded batches and estimates both
/// ratios.
pub fn estimate_round(batches: &[SanitizedBatch], tau: f64, mode: EstimatorMode) -> Result<RoundEstimates> {
    let mut est = RoundEstimates::default();
    for a in batches {
        for b in batches {
            if a.client_id == b.client_id || b.batch_size() == 0 {
                continue;
            }
            let m = match_nodes(a, b, tau);
            let key = (a.client_id, b.client_id);
            let (b_i, b_k) = (a.batch_size(), b.batch_size());
            est.node.insert(
                key,
                estimate_node_ratio(&m, a.reported_n, b.reported_n, b_i, b_k, mode)?,
            );
            est.link.insert(key, estimate_link_ratio(&m, b.reported_n, b_i, b_k, mode));
        }
    }
    Ok(est)
}

/// Per-round and accumulated overlap matrices and their coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapState {
    pub n_round: Array2<f64>,
    pub t_round: Array2<f64>,
    pub n_acc: Array2<f64>,
    pub t_acc: Array2<f64>,
    /// `alpha * n_acc + (1 - alpha) * t_acc`.
    pub coupled: Array2<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
}

impl OverlapState {
    /// All-zero state for `p` clients.
    pub fn new(p: usize, alpha: f64, beta: f64, tau: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::validation(format!("alpha {alpha} not in [0, 1]")));
        }
        if !(beta > 0.0 && beta <= 1.0) {
            return Err(Error::validation(format!("beta {beta} not in (0, 1]")));
        }
        let z = Array2::zeros((p, p));
        Ok(Self {
            n_round: z.clone(),
            t_round: z.clone(),
            n_acc: z.clone(),
            t_acc: z.clone(),
            coupled: z,
            alpha,
            beta,
            tau,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.coupled.nrows()
    }

    /// Folds one round in. Only pairs present in `est` change.
    pub fn update(&mut self, est: &RoundEstimates) {
        self.n_round.fill(0.0);
        self.t_round.fill(0.0);
        let beta = self.beta;
        for (&(i, k), &v) in &est.node {
            self.n_round[[i, k]] = v;
            self.n_acc[[i, k]] = beta * v + (1.0 - beta) * self.n_acc[[i, k]];
        }
        for (&(i, k), &v) in &est.link {
            self.t_round[[i, k]] = v;
            self.t_acc[[i, k]] = beta * v + (1.0 - beta) * self.t_acc[[i, k]];
        }
        self.recouple();
    }

    /// Recomputes the coupled matrix from the accumulated ones.
    pub fn recouple(&mut self) {
        let a = self.alpha;
        self.coupled = &self.n_acc * a + &self.t_acc * (1.0 - a);
    }

    /// Sum of client `i`'s coupled ratios with every other client.
    pub fn client_overall_ratio(&self, i: usize) -> f64 {
        self.coupled
            .row(i)
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != i)
            .map(|(_, v)| v)
            .sum()
    }

    /// Writes every matrix in long form: `matrix,i,k,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let ctx = || format!("writing {}", path.display());
        let file = std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut body = String::from("matrix,i,k,value\n");
        for (name, m) in [
            ("N_round", &self.n_round),
            ("T_round", &self.t_round),
            ("N_acc", &self.n_acc),
            ("T_acc", &self.t_acc),
            ("O", &self.coupled),
        ] {
            for ((i, k), v) in m.indexed_iter() {
                body.push_str(&format!("{name},{i},{k},{v}\n"));
            }
        }
        out.write_all(body.as_bytes()).map_err(|e| Error::io(ctx(), e))?;
        out.flush().map_err(|e| Error::io(ctx(), e))
    }
}

/// Minimum number of self-distance samples drawn by [`calibrate_tau`].
pub const CALIBRATION_DRAWS: usize = 1000;

/// Nearest-rank percentile of `values` (`q` in `[0, 100]`).
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty set");
    values.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * values.len() as f64).ceil() as usize;
    values[rank.clamp(1, values.len()) - 1]
}

/// Matching threshold: the `q`-th percentile of distances between two
/// independent sanitizations of the same public node.
pub fn calibrate_tau<R: Rng + ?Sized>(
    encoder: &Encoder,
    public: &ArrayView2<f64>,
    params: &LdpParams,
    q: f64,
    rng: &mut R,
) -> Result<f64> {
    if public.nrows() == 0 {
        return Err(Error::validation("no public nodes to calibrate tau"));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::validation(format!("tau percentile {q} not in [0, 100]")));
    }
    // Small public sets are cycled so low percentiles are not just the minimum.
    let reps = CALIBRATION_DRAWS.div_ceil(public.nrows());
    let mut dists = Vec::with_capacity(reps * public.nrows());
    for row in public.outer_iter() {
        let e = encoder.encode(&row);
        for _ in 0..reps {
            let x = perturb_node(&e.view(), encoder.range(), params, rng)?;
            let y = perturb_node(&e.view(), encoder.range(), params, rng)?;
            dists.push((&x - &y).mapv(|v| v * v).sum().sqrt());
        }
    }
    Ok(percentile(&mut dists, q))
}
