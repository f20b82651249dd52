//! Experiment suites and their output layout.
//!
//! ```text
//! <out>/manifest.txt                resolved base config and the run list
//! <out>/summary.csv                 final-round metrics, one row per run
//! <out>/means.csv                   the same averaged over seeds
//! <out>/<run>/rounds.csv            one RoundRecord per round
//! <out>/<run>/manifest.txt          the run's own resolved config
//! <out>/<run>/summary.json
//! <out>/<run>/partition.txt         client_id node_id rows
//! <out>/<run>/overlap_estimates/round_NNNN.csv   (fairgfl only)
//! ```
//!
//! A failing run is logged and recorded with status `error`; the other runs
//! still execute.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use log::{error, info};

use fairgfl_core::graph::write_partition_dump;
use fairgfl_core::metrics::{summary, write_records_file};
use fairgfl_core::{run_experiment, Algorithm, Error, GlobalGraph, Result};

use crate::config::SimConfig;

/// Overlap coefficients of the motivation and overlap sweeps.
pub const OVERLAP_GRID: [f64; 5] = [0.0, 0.05, 0.10, 0.15, 0.20];
/// Finite privacy budgets of the privacy sweep; 50 stands in for a very
/// weak guarantee, and an extra run disables LDP altogether.
pub const EPSILON_GRID: [f64; 3] = [1.0, 4.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    Motivation,
    Compare,
    PrivacySweep,
    OverlapSweep,
    Single,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 5] = [
        SuiteKind::Motivation,
        SuiteKind::Compare,
        SuiteKind::PrivacySweep,
        SuiteKind::OverlapSweep,
        SuiteKind::Single,
    ];
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SuiteKind::Motivation => "motivation",
            SuiteKind::Compare => "compare",
            SuiteKind::PrivacySweep => "privacy-sweep",
            SuiteKind::OverlapSweep => "overlap-sweep",
            SuiteKind::Single => "single",
        })
    }
}

impl FromStr for SuiteKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SuiteKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| "motivation|compare|privacy-sweep|overlap-sweep|single".into())
    }
}

/// One experiment of a suite.
#[derive(Debug, Clone)]
pub struct RunSpec {
    /// Directory name; also the seed-free `group` plus `_s<seed>`.
    pub label: String,
    pub group: String,
    pub config: SimConfig,
}

impl RunSpec {
    fn new(group: String, config: SimConfig) -> Self {
        let label = format!("{group}_s{}", config.experiment.fed.seed);
        Self { label, group, config }
    }

    pub fn seed(&self) -> u64 {
        self.config.experiment.fed.seed
    }
}

fn with_seed(base: &SimConfig, seed: u64) -> SimConfig {
    let mut c = base.clone();
    c.experiment.fed.seed = seed;
    c.experiment.partition.seed = seed;
    c
}

/// Expands a suite into its runs, seeds innermost.
pub fn plan(kind: SuiteKind, base: &SimConfig) -> Vec<RunSpec> {
    let first = base.experiment.fed.seed;
    let seeds: Vec<u64> = (0..base.seeds as u64).map(|i| first + i).collect();
    let mut runs = Vec::new();
    let mut push = |group: String, cfg: SimConfig| {
        for &s in &seeds {
            runs.push(RunSpec::new(group.clone(), with_seed(&cfg, s)));
        }
    };
    match kind {
        SuiteKind::Single => push(base.experiment.fed.algorithm.to_string(), base.clone()),
        SuiteKind::Compare => {
            for alg in Algorithm::ALL {
                let mut c = base.clone();
                c.experiment.fed.algorithm = alg;
                push(alg.to_string(), c);
            }
        }
        SuiteKind::Motivation => {
            for n in OVERLAP_GRID {
                let mut c = base.clone();
                c.experiment.fed.algorithm = Algorithm::FedAvg;
                c.experiment.partition.overlap_coefficient = n;
                push(format!("fedavg_N{n}"), c);
            }
        }
        SuiteKind::OverlapSweep => {
            for alg in [Algorithm::FairGfl, Algorithm::FedAvg] {
                for n in OVERLAP_GRID {
                    let mut c = base.clone();
                    c.experiment.fed.algorithm = alg;
                    c.experiment.partition.overlap_coefficient = n;
                    push(format!("{alg}_N{n}"), c);
                }
            }
        }
        SuiteKind::PrivacySweep => {
            let alg = base.experiment.fed.algorithm;
            for eps in EPSILON_GRID {
                let mut c = base.clone();
                c.experiment.ldp.enabled = true;
                c.experiment.ldp.params.epsilon_a = eps;
                push(format!("{alg}_eps{eps}"), c);
            }
            let mut c = base.clone();
            c.experiment.ldp.enabled = false;
            push(format!("{alg}_epsinf"), c);
        }
    }
    runs
}

/// Final-round metrics of one run, or the error that stopped it.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub label: String,
    pub group: String,
    pub seed: u64,
    pub rounds: usize,
    pub test_loss: f64,
    pub test_acc: f64,
    pub loss_variance: f64,
    pub loss_entropy: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub kind: SuiteKind,
    pub runs: Vec<RunOutcome>,
}

impl SuiteReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    /// `(group, runs, mean test loss, mean test acc, mean variance, mean
    /// entropy)` over successful runs, in first-seen group order.
    pub fn means(&self) -> Vec<(String, usize, [f64; 4])> {
        let mut order = Vec::new();
        let mut acc: BTreeMap<&str, (usize, [f64; 4])> = BTreeMap::new();
        for r in self.runs.iter().filter(|r| r.error.is_none()) {
            let e = acc.entry(&r.group).or_insert_with(|| {
                order.push(r.group.clone());
                (0, [0.0; 4])
            });
            e.0 += 1;
            for (s, v) in e.1.iter_mut().zip([r.test_loss, r.test_acc, r.loss_variance, r.loss_entropy]) {
                *s += v;
            }
        }
        order
            .into_iter()
            .map(|g| {
                let (n, sums) = acc[g.as_str()];
                (g, n, sums.map(|s| s / n as f64))
            })
            .collect()
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        context: format!("writing {}", path.display()),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn execute(run: &RunSpec, graph: &GlobalGraph, dir: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write(&dir.join("manifest.txt"), &run.config.manifest())?;
    let out = run_experiment(graph, &run.config.experiment)?;
    write_records_file(&dir.join("rounds.csv"), &out.records)?;
    write(&dir.join("summary.json"), &(summary(&out.records) + "\n"))?;
    write_partition_dump(&dir.join("partition.txt"), &out.split.clients)?;
    if !out.overlap_history.is_empty() {
        let est = dir.join("overlap_estimates");
        fs::create_dir_all(&est).map_err(io_err(&est))?;
        for (round, state) in out.overlap_history.iter().enumerate() {
            state.write_csv(&est.join(format!("round_{round:04}.csv")))?;
        }
    }
    let last = out.records.last();
    let pick = |f: fn(&fairgfl_core::RoundRecord) -> f64| last.map_or(f64::NAN, f);
    Ok(RunOutcome {
        label: run.label.clone(),
        group: run.group.clone(),
        seed: run.seed(),
        rounds: out.records.len(),
        test_loss: pick(|r| r.test_loss),
        test_acc: pick(|r| r.test_acc),
        loss_variance: pick(|r| r.loss_variance),
        loss_entropy: pick(|r| r.loss_entropy),
        error: None,
    })
}

/// Runs every experiment of the suite and writes the output tree.
/// Errors here are about the output directory or the base config; failures
/// of individual runs are reported in the returned [`SuiteReport`].
pub fn run_suite(kind: SuiteKind, base: &SimConfig, out: &Path) -> Result<SuiteReport> {
    base.validate()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let runs = plan(kind, base);

    let mut manifest = format!("# suite: {kind}\n");
    manifest.push_str(&base.manifest());
    for r in &runs {
        manifest.push_str(&format!("# run: {}\n", r.label));
    }
    write(&out.join("manifest.txt"), &manifest)?;

    let mut graphs: BTreeMap<u64, std::result::Result<GlobalGraph, String>> = BTreeMap::new();
    let mut outcomes = Vec::with_capacity(runs.len());
    for run in &runs {
        info!("{kind}: running {}", run.label);
        let graph = graphs
            .entry(run.seed())
            .or_insert_with(|| base.load_graph(run.seed()).map_err(|e| e.to_string()));
        let result = match graph {
            Ok(g) => execute(run, g, &out.join(&run.label)).map_err(|e| e.to_string()),
            Err(e) => Err(e.clone()),
        };
        outcomes.push(match result {
            Ok(o) => o,
            Err(message) => {
                error!("{}: {message}", run.label);
                RunOutcome {
                    label: run.label.clone(),
                    group: run.group.clone(),
                    seed: run.seed(),
                    rounds: 0,
                    test_loss: f64::NAN,
                    test_acc: f64::NAN,
                    loss_variance: f64::NAN,
                    loss_entropy: f64::NAN,
                    error: Some(message),
                }
            }
        });
    }

    let report = SuiteReport { kind, runs: outcomes };
    let mut csv = String::from("label,group,seed,rounds,final_test_loss,final_test_acc,final_loss_var,final_loss_entropy,status\n");
    for r in &report.runs {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.label,
            r.group,
            r.seed,
            r.rounds,
            r.test_loss,
            r.test_acc,
            r.loss_variance,
            r.loss_entropy,
            if r.error.is_some() { "error" } else { "ok" }
        ));
    }
    write(&out.join("summary.csv"), &csv)?;
    let mut means = String::from("group,runs,mean_test_loss,mean_test_acc,mean_loss_var,mean_loss_entropy\n");
    for (g, n, [l, a, v, e]) in report.means() {
        means.push_str(&format!("{g},{n},{l},{a},{v},{e}\n"));
    }
    write(&out.join("means.csv"), &means)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_round_trip() {
        for k in SuiteKind::ALL {
            assert_eq!(k.to_string().parse::<SuiteKind>().unwrap(), k);
        }
        assert!("figure-5".parse::<SuiteKind>().is_err());
    }

    #[test]
    fn plans_cover_grids_and_seeds() {
        let mut base = SimConfig::default();
        base.seeds = 2;
        base.experiment.fed.seed = 10;
        assert_eq!(plan(SuiteKind::Single, &base).len(), 2);
        let compare = plan(SuiteKind::Compare, &base);
        assert_eq!(compare.len(), 6);
        assert_eq!(compare[1].label, "fairgfl_s11");
        assert_eq!(compare[1].config.experiment.partition.seed, 11);
        let motivation = plan(SuiteKind::Motivation, &base);
        assert_eq!(motivation.len(), 10);
        assert!(motivation.iter().all(|r| r.config.experiment.fed.algorithm == Algorithm::FedAvg));
        assert_eq!(plan(SuiteKind::OverlapSweep, &base).len(), 20);
        let privacy = plan(SuiteKind::PrivacySweep, &base);
        assert_eq!(privacy.len(), 8);
        assert!(!privacy.last().unwrap().config.experiment.ldp.enabled);
    }
}
