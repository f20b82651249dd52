//! Fairness and utility metrics and the per-round record format.
//!
//! CSV layout, one row per round:
//! `round,algorithm,test_loss,test_acc,loss_var,loss_entropy,wall_time_ms,loss_0,..,loss_{P-1}`.
//! Floats are written in shortest round-trip form, so reading a file back
//! reproduces the records exactly.

use std::io::{BufRead, Write};
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::gcn::{forward, masked_accuracy, masked_cross_entropy, GcnModel, NormalizedAdjacency};
use crate::graph::GlobalGraph;

/// Population variance `(1/P) Σ (F_i - mean)²`.
pub fn loss_variance(losses: &[f64]) -> f64 {
    if losses.is_empty() {
        return 0.0;
    }
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossEntropy {
    pub value: f64,
    /// Every loss was zero; `value` is then `ln P` by convention.
    pub all_zero: bool,
}

/// Shannon entropy (natural log) of the losses normalized by their sum.
pub fn loss_entropy(losses: &[f64]) -> LossEntropy {
    let total: f64 = losses.iter().sum();
    if total <= 0.0 {
        return LossEntropy {
            value: (losses.len().max(1) as f64).ln(),
            all_zero: true,
        };
    }
    let value = losses
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| {
            let q = l / total;
            -q * q.ln()
        })
        .sum();
    LossEntropy {
        value,
        all_zero: false,
    }
}

/// `(loss, accuracy)` of `model` on the `mask` rows, with propagation over
/// the given adjacency.
pub fn evaluate_with(
    model: &GcnModel,
    adj: &NormalizedAdjacency,
    features: &ArrayView2<f64>,
    labels: &[usize],
    mask: &[usize],
) -> Result<(f64, f64)> {
    if mask.is_empty() {
        return Err(Error::validation("evaluation mask is empty"));
    }
    let (logits, _) = forward(model, adj, features)?;
    Ok((
        masked_cross_entropy(&logits, labels, mask),
        masked_accuracy(&logits, labels, mask),
    ))
}

/// Test loss and accuracy over the whole global graph's adjacency.
pub fn evaluate_global(model: &GcnModel, graph: &GlobalGraph, test_mask: &[usize]) -> Result<(f64, f64)> {
    let adj = NormalizedAdjacency::new(graph.adjacency());
    evaluate_with(model, &adj, &graph.features().view(), graph.labels(), test_mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub algorithm: String,
    pub test_loss: f64,
    pub test_acc: f64,
    pub loss_variance: f64,
    pub loss_entropy: f64,
    pub wall_time_ms: u64,
    pub per_client_losses: Vec<f64>,
}

impl RoundRecord {
    /// Fills the fairness fields from the per-client losses.
    pub fn new(
        round: usize,
        algorithm: &str,
        test_loss: f64,
        test_acc: f64,
        per_client_losses: Vec<f64>,
        wall_time_ms: u64,
    ) -> Self {
        Self {
            round,
            algorithm: algorithm.to_string(),
            test_loss,
            test_acc,
            loss_variance: loss_variance(&per_client_losses),
            loss_entropy: loss_entropy(&per_client_losses).value,
            wall_time_ms,
            per_client_losses,
        }
    }

    pub fn mean_client_loss(&self) -> f64 {
        if self.per_client_losses.is_empty() {
            0.0
        } else {
            self.per_client_losses.iter().sum::<f64>() / self.per_client_losses.len() as f64
        }
    }
}

pub fn csv_header(num_clients: usize) -> String {
    let mut h = String::from("round,algorithm,test_loss,test_acc,loss_var,loss_entropy,wall_time_ms");
    for i in 0..num_clients {
        h.push_str(&format!(",loss_{i}"));
    }
    h
}

pub fn csv_row(r: &RoundRecord) -> String {
    let mut row = format!(
        "{},{},{},{},{},{},{}",
        r.round, r.algorithm, r.test_loss, r.test_acc, r.loss_variance, r.loss_entropy, r.wall_time_ms
    );
    for l in &r.per_client_losses {
        row.push_str(&format!(",{l}"));
    }
    row
}

pub fn write_records<W: Write>(out: &mut W, records: &[RoundRecord]) -> std::io::Result<()> {
    let p = records.first().map_or(0, |r| r.per_client_losses.len());
    writeln!(out, "{}", csv_header(p))?;
    for r in records {
        writeln!(out, "{}", csv_row(r))?;
    }
    Ok(())
}

pub fn write_records_file(path: &Path, records: &[RoundRecord]) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let file = std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut out = std::io::BufWriter::new(file);
    write_records(&mut out, records).map_err(|e| Error::io(ctx(), e))?;
    out.flush().map_err(|e| Error::io(ctx(), e))
}

pub fn read_records<R: BufRead>(reader: R, path: &Path) -> Result<Vec<RoundRecord>> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if lineno == 1 || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 {
            return Err(err(lineno, format!("expected at least 7 fields, found {}", fields.len())));
        }
        let f = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| err(lineno, format!("bad number `{}`", fields[i])))
        };
        let int = |i: usize| -> Result<u64> {
            fields[i]
                .parse()
                .map_err(|_| err(lineno, format!("bad integer `{}`", fields[i])))
        };
        records.push(RoundRecord {
            round: int(0)? as usize,
            algorithm: fields[1].to_string(),
            test_loss: f(2)?,
            test_acc: f(3)?,
            loss_variance: f(4)?,
            loss_entropy: f(5)?,
            wall_time_ms: int(6)?,
            per_client_losses: (7..fields.len()).map(f).collect::<Result<_>>()?,
        });
    }
    Ok(records)
}

/// Final-round metrics as one flat JSON object.
pub fn summary(records: &[RoundRecord]) -> String {
    let Some(last) = records.last() else {
        return "{\"rounds\": 0}".to_string();
    };
    format!(
        "{{\"algorithm\": \"{}\", \"rounds\": {}, \"final_test_loss\": {}, \"final_test_acc\": {}, \
         \"final_loss_var\": {}, \"final_loss_entropy\": {}, \"final_mean_client_loss\": {}, \
         \"total_wall_time_ms\": {}}}",
        last.algorithm,
        records.len(),
        last.test_loss,
        last.test_acc,
        last.loss_variance,
        last.loss_entropy,
        last.mean_client_loss(),
        records.iter().map(|r| r.wall_time_ms).sum::<u64>()
    )
}
