//! Server aggregation rules.
//!
//! All three rules reduce to `w + Σ c_i (w_i - w)` evaluated by one kernel in
//! report order, so rules whose coefficients coincide produce bitwise-equal
//! models.

use super::ClientReport;
use crate::estimator::OverlapState;
use crate::gcn::GcnModel;

/// Options of the fairness-aware rule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FairOptions {
    /// Weight of the max-loss client's update.
    pub lambda: f64,
    /// Divide the fairness weights by their sum instead of by `K`.
    pub renormalize: bool,
    /// Average raw parameters (`Σ c_i w_i`) instead of updates.
    pub literal_eq17: bool,
}

fn combine(w: &GcnModel, reports: &[ClientReport], coeffs: &[f64]) -> GcnModel {
    let mut out = w.clone();
    for (r, &c) in reports.iter().zip(coeffs) {
        out.add_scaled(c, &r.model.delta(w));
    }
    out
}

/// Uniform average of the reported updates.
pub fn aggregate_fedavg(w: &GcnModel, reports: &[ClientReport]) -> GcnModel {
    assert!(!reports.is_empty(), "no reports to aggregate");
    let c = 1.0 / reports.len() as f64;
    combine(w, reports, &vec![c; reports.len()])
}

/// Fairness weight `1 / (1 + O_i)` of every report.
pub fn fairness_weights(reports: &[ClientReport], state: &OverlapState) -> Vec<f64> {
    reports
        .iter()
        .map(|r| 1.0 / (1.0 + state.client_overall_ratio(r.client_id)))
        .collect()
}

/// Index into `reports` of the highest loss; ties go to the lowest client id.
pub fn max_loss_report(reports: &[ClientReport]) -> usize {
    let mut best = 0;
    for (i, r) in reports.iter().enumerate().skip(1) {
        let b = &reports[best];
        if r.loss > b.loss || (r.loss == b.loss && r.client_id < b.client_id) {
            best = i;
        }
    }
    best
}

/// `w + (1/K) Σ q_i Δw_i + λ Δw_max` with `q_i = 1 / (1 + O_i)`.
pub fn aggregate_fair(w: &GcnModel, reports: &[ClientReport], state: &OverlapState, opts: FairOptions) -> GcnModel {
    assert!(!reports.is_empty(), "no reports to aggregate");
    let q = fairness_weights(reports, state);
    let denom = if opts.renormalize {
        q.iter().sum::<f64>()
    } else {
        reports.len() as f64
    };
    let coeffs: Vec<f64> = q.iter().map(|qi| qi * (1.0 / denom)).collect();

    let mut out = if opts.literal_eq17 {
        let mut acc = w.zeros_like();
        for (r, &c) in reports.iter().zip(&coeffs) {
            acc.add_scaled(c, &r.model);
        }
        acc
    } else {
        combine(w, reports, &coeffs)
    };
    // Skipped at zero so a lambda of 0 leaves the sum untouched bit for bit.
    if opts.lambda != 0.0 {
        let m = max_loss_report(reports);
        out.add_scaled(opts.lambda, &reports[m].model.delta(w));
    }
    out
}

/// q-FedAvg coefficients on updates:
/// `c_i = F_i^q / Σ_j (q F_j^(q-1) ‖w - w_j‖² / lr + F_j^q)`.
pub fn qfedavg_weights(w: &GcnModel, reports: &[ClientReport], q: f64, lr: f64) -> Vec<f64> {
    let h: f64 = reports
        .iter()
        .map(|r| {
            let base = r.loss.powf(q);
            if q == 0.0 || r.loss == 0.0 {
                base
            } else {
                q * r.loss.powf(q - 1.0) * r.model.delta(w).norm_sq() / lr + base
            }
        })
        .sum();
    reports
        .iter()
        .map(|r| if h > 0.0 { r.loss.powf(q) / h } else { 0.0 })
        .collect()
}

pub fn aggregate_qfedavg(w: &GcnModel, reports: &[ClientReport], q: f64, lr: f64) -> GcnModel {
    assert!(!reports.is_empty(), "no reports to aggregate");
    combine(w, reports, &qfedavg_weights(w, reports, q, lr))
}
