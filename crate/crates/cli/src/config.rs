//! Flat `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are skipped.
//! Every key is optional; missing keys keep their defaults. The manifest
//! written next to each run uses the same syntax and lists every key, so it
//! parses back to the identical configuration.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fairgfl_core::graph::load_graph;
use fairgfl_core::{Error, ExperimentConfig, GlobalGraph, Result, SbmParams};

#[derive(Debug, Clone, PartialEq)]
pub enum Dataset {
    Sbm,
    File { nodes: PathBuf, edges: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub experiment: ExperimentConfig,
    /// Graph generator settings; its seed is replaced by the run seed.
    pub sbm: SbmParams,
    pub dataset: Dataset,
    /// Number of consecutive seeds, starting at `seed`, that multi-run
    /// suites average over.
    pub seeds: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            sbm: SbmParams::default(),
            dataset: Dataset::Sbm,
            seeds: 1,
        }
    }
}

/// Every accepted key, in manifest order.
pub const KEYS: &[&str] = &[
    "P",
    "K",
    "E",
    "J",
    "lr",
    "b",
    "lambda",
    "alpha",
    "beta",
    "algorithm",
    "q",
    "seed",
    "hidden_dim",
    "estimator",
    "literal_eq17",
    "renormalize",
    "estimate_overlap",
    "overlap_coefficient",
    "overlap_pool_fraction",
    "dirichlet_alpha_nonoverlap",
    "dirichlet_alpha_overlap",
    "overlap_profile",
    "ldp",
    "epsilon_a",
    "epsilon_b",
    "quantiles",
    "encoder_dim",
    "encoder_epochs",
    "permanent_cache",
    "tau_percentile",
    "test_fraction",
    "public_fraction",
    "dataset",
    "node_file",
    "edge_file",
    "sbm_blocks",
    "sbm_nodes_per_block",
    "sbm_p_in",
    "sbm_p_out",
    "sbm_feature_dim",
    "sbm_mean_separation",
    "seeds",
];

fn parse<T: FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        key: key.into(),
        message: format!("expected {expected}, got `{value}`"),
    })
}

fn parse_with<T: FromStr<Err = String>>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|expected: String| Error::Config {
        key: key.into(),
        message: format!("expected one of {expected}, got `{value}`"),
    })
}

fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(Error::Config {
            key: key.into(),
            message: format!("expected on|off, got `{value}`"),
        }),
    }
}

fn switch(b: bool) -> String {
    if b { "on" } else { "off" }.to_string()
}

impl SimConfig {
    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        const INT: &str = "a non-negative integer";
        const REAL: &str = "a real number";
        let value = value.trim();
        let fed = &mut self.experiment.fed;
        let part = &mut self.experiment.partition;
        let ldp = &mut self.experiment.ldp;
        match key {
            "P" => {
                fed.num_clients = parse(key, value, INT)?;
                part.num_clients = fed.num_clients;
            }
            "K" => fed.clients_per_round = parse(key, value, INT)?,
            "E" => fed.local_steps = parse(key, value, INT)?,
            "J" => fed.rounds = parse(key, value, INT)?,
            "lr" => fed.lr = parse(key, value, REAL)?,
            "b" => fed.batch_size = parse(key, value, INT)?,
            "lambda" => fed.lambda = parse(key, value, REAL)?,
            "alpha" => fed.alpha = parse(key, value, REAL)?,
            "beta" => fed.beta = parse(key, value, REAL)?,
            "algorithm" => fed.algorithm = parse_with(key, value)?,
            "q" => fed.q = parse(key, value, REAL)?,
            "seed" => {
                fed.seed = parse(key, value, INT)?;
                part.seed = fed.seed;
            }
            "hidden_dim" => fed.hidden_dim = parse(key, value, INT)?,
            "estimator" => fed.estimator = parse_with(key, value)?,
            "literal_eq17" => fed.literal_eq17 = parse_switch(key, value)?,
            "renormalize" => fed.renormalize = parse_switch(key, value)?,
            "estimate_overlap" => fed.estimate_overlap = parse_switch(key, value)?,
            "overlap_coefficient" => part.overlap_coefficient = parse(key, value, REAL)?,
            "overlap_pool_fraction" => part.overlap_pool_fraction = parse(key, value, REAL)?,
            "dirichlet_alpha_nonoverlap" => part.dirichlet_alpha_nonoverlap = parse(key, value, REAL)?,
            "dirichlet_alpha_overlap" => part.dirichlet_alpha_overlap = parse(key, value, REAL)?,
            "overlap_profile" => part.profile = parse_with(key, value)?,
            "ldp" => ldp.enabled = parse_switch(key, value)?,
            "epsilon_a" => ldp.params.epsilon_a = parse(key, value, REAL)?,
            "epsilon_b" => ldp.params.epsilon_b = parse(key, value, REAL)?,
            "quantiles" => ldp.params.quantiles = parse(key, value, INT)?,
            "encoder_dim" => ldp.encoder_dim = parse(key, value, INT)?,
            "encoder_epochs" => ldp.encoder_epochs = parse(key, value, INT)?,
            "permanent_cache" => ldp.permanent_cache = parse_switch(key, value)?,
            "tau_percentile" => ldp.tau_percentile = parse(key, value, REAL)?,
            "test_fraction" => self.experiment.test_fraction = parse(key, value, REAL)?,
            "public_fraction" => self.experiment.public_fraction = parse(key, value, REAL)?,
            "dataset" => {
                self.dataset = match value {
                    "sbm" => Dataset::Sbm,
                    "file" => match &self.dataset {
                        Dataset::File { .. } => self.dataset.clone(),
                        Dataset::Sbm => Dataset::File {
                            nodes: PathBuf::new(),
                            edges: PathBuf::new(),
                        },
                    },
                    _ => {
                        return Err(Error::Config {
                            key: key.into(),
                            message: format!("expected one of sbm|file, got `{value}`"),
                        })
                    }
                }
            }
            "node_file" | "edge_file" => {
                if let Dataset::Sbm = self.dataset {
                    self.dataset = Dataset::File {
                        nodes: PathBuf::new(),
                        edges: PathBuf::new(),
                    };
                }
                if let Dataset::File { nodes, edges } = &mut self.dataset {
                    let slot = if key == "node_file" { nodes } else { edges };
                    *slot = PathBuf::from(value);
                }
            }
            "sbm_blocks" => self.sbm.num_blocks = parse(key, value, INT)?,
            "sbm_nodes_per_block" => self.sbm.nodes_per_block = parse(key, value, INT)?,
            "sbm_p_in" => self.sbm.p_in = parse(key, value, REAL)?,
            "sbm_p_out" => self.sbm.p_out = parse(key, value, REAL)?,
            "sbm_feature_dim" => self.sbm.feature_dim = parse(key, value, INT)?,
            "sbm_mean_separation" => self.sbm.mean_separation = parse(key, value, REAL)?,
            "seeds" => self.seeds = parse(key, value, INT)?,
            _ => {
                return Err(Error::Config {
                    key: key.into(),
                    message: format!("unknown key; valid keys: {}", KEYS.join(", ")),
                })
            }
        }
        Ok(())
    }

    /// Current value of `key` in the syntax [`SimConfig::set`] accepts.
    pub fn get(&self, key: &str) -> Option<String> {
        fn s(v: impl Display) -> String {
            v.to_string()
        }
        let fed = &self.experiment.fed;
        let part = &self.experiment.partition;
        let ldp = &self.experiment.ldp;
        let (nodes, edges) = match &self.dataset {
            Dataset::Sbm => (String::new(), String::new()),
            Dataset::File { nodes, edges } => (s(nodes.display()), s(edges.display())),
        };
        Some(match key {
            "P" => s(fed.num_clients),
            "K" => s(fed.clients_per_round),
            "E" => s(fed.local_steps),
            "J" => s(fed.rounds),
            "lr" => s(fed.lr),
            "b" => s(fed.batch_size),
            "lambda" => s(fed.lambda),
            "alpha" => s(fed.alpha),
            "beta" => s(fed.beta),
            "algorithm" => s(fed.algorithm),
            "q" => s(fed.q),
            "seed" => s(fed.seed),
            "hidden_dim" => s(fed.hidden_dim),
            "estimator" => s(fed.estimator),
            "literal_eq17" => switch(fed.literal_eq17),
            "renormalize" => switch(fed.renormalize),
            "estimate_overlap" => switch(fed.estimate_overlap),
            "overlap_coefficient" => s(part.overlap_coefficient),
            "overlap_pool_fraction" => s(part.overlap_pool_fraction),
            "dirichlet_alpha_nonoverlap" => s(part.dirichlet_alpha_nonoverlap),
            "dirichlet_alpha_overlap" => s(part.dirichlet_alpha_overlap),
            "overlap_profile" => s(part.profile),
            "ldp" => switch(ldp.enabled),
            "epsilon_a" => s(ldp.params.epsilon_a),
            "epsilon_b" => s(ldp.params.epsilon_b),
            "quantiles" => s(ldp.params.quantiles),
            "encoder_dim" => s(ldp.encoder_dim),
            "encoder_epochs" => s(ldp.encoder_epochs),
            "permanent_cache" => switch(ldp.permanent_cache),
            "tau_percentile" => s(ldp.tau_percentile),
            "test_fraction" => s(self.experiment.test_fraction),
            "public_fraction" => s(self.experiment.public_fraction),
            "dataset" => match self.dataset {
                Dataset::Sbm => "sbm".into(),
                Dataset::File { .. } => "file".into(),
            },
            "node_file" => nodes,
            "edge_file" => edges,
            "sbm_blocks" => s(self.sbm.num_blocks),
            "sbm_nodes_per_block" => s(self.sbm.nodes_per_block),
            "sbm_p_in" => s(self.sbm.p_in),
            "sbm_p_out" => s(self.sbm.p_out),
            "sbm_feature_dim" => s(self.sbm.feature_dim),
            "sbm_mean_separation" => s(self.sbm.mean_separation),
            "seeds" => s(self.seeds),
            _ => return None,
        })
    }

    /// Applies an override of the form `key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| Error::Config {
            key: assignment.into(),
            message: "expected key=value".into(),
        })?;
        self.set(key.trim(), value)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if self.seeds == 0 {
            return Err(Error::Config {
                key: "seeds".into(),
                message: "must be at least 1".into(),
            });
        }
        if let Dataset::File { nodes, edges } = &self.dataset {
            if nodes.as_os_str().is_empty() || edges.as_os_str().is_empty() {
                return Err(Error::Config {
                    key: "dataset".into(),
                    message: "file datasets need node_file and edge_file".into(),
                });
            }
        } else {
            self.sbm.validate()?;
        }
        Ok(())
    }

    /// Every key with its resolved value, one `key = value` line each.
    pub fn manifest(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).unwrap_or_default()))
            .collect()
    }

    /// Loads the graph for a run with `seed`.
    pub fn load_graph(&self, seed: u64) -> Result<GlobalGraph> {
        match &self.dataset {
            Dataset::Sbm => SbmParams { seed, ..self.sbm.clone() }.generate(),
            Dataset::File { nodes, edges } => load_graph(nodes, edges).map(|(g, _)| g),
        }
    }
}

/// Parses configuration text; `path` is only used in error messages.
/// The result is not validated.
pub fn parse_config_str(text: &str, path: &Path) -> Result<SimConfig> {
    let mut cfg = SimConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: format!("expected key = value, got `{line}`"),
            });
        };
        let key = key.trim();
        // Empty paths in a manifest mean "not set".
        if value.trim().is_empty() && (key == "node_file" || key == "edge_file") {
            continue;
        }
        cfg.set(key, value)?;
    }
    Ok(cfg)
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        context: format!("reading {}", path.display()),
        source,
    })?;
    let cfg = parse_config_str(&text, path)?;
    cfg.validate()?;
    Ok(cfg)
}
