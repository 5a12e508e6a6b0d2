use std::io::Write;

use serde::Serialize;

use super::auc::eval_auc;
use super::VerticalDataset;
use crate::error::Result;
use crate::model::{full_loss, grad_signal, LossKind, ModelBlock};
use crate::numkit::{axpy, dot, DenseVector};
use crate::protocol::CommLedger;

/// State of a run after one sync round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundMetrics {
    pub sync_round: usize,
    pub total_local_iters: usize,
    pub full_loss: f64,
    /// `‖∇L(Θ)‖²` over the whole training set.
    pub grad_norm_sq: f64,
    /// Held-out AUC for logistic loss, RMSE for squared loss.
    pub eval_metric: Option<f64>,
    pub ledger: CommLedger,
    pub elapsed_ms: f64,
}

pub const METRICS_HEADER: &str =
    "sync_round,total_local_iters,loss,grad_norm_sq,eval_metric,messages,scalars,elapsed_ms";

impl RoundMetrics {
    /// One CSV row; `elapsed_ms` is written as `0` unless `wallclock` is set so
    /// that reruns produce identical files.
    pub fn csv_row(&self, wallclock: bool) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.sync_round,
            self.total_local_iters,
            self.full_loss,
            self.grad_norm_sq,
            self.eval_metric.map(|v| v.to_string()).unwrap_or_default(),
            self.ledger.messages,
            self.ledger.scalars_transferred,
            if wallclock { format!("{:.3}", self.elapsed_ms) } else { "0".into() },
        )
    }
}

pub fn write_metrics_csv<'a, W: Write>(
    mut out: W,
    rows: impl IntoIterator<Item = &'a RoundMetrics>,
    wallclock: bool,
) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_row(wallclock))?;
    }
    Ok(())
}

/// `Hᵢ = Σₖ xᵢᵏθₖ` for every sample, summed in party order.
pub fn total_scores(data: &VerticalDataset, blocks: &[ModelBlock]) -> DenseVector {
    let mut h = vec![0.0; data.n()];
    for (k, b) in blocks.iter().enumerate() {
        let x = data.slice(k);
        for (i, hi) in h.iter_mut().enumerate() {
            *hi += dot(x.row(i), b.theta.as_slice());
        }
    }
    DenseVector::from_raw(h)
}

/// Full-batch `∇ₖL(Θ)` for every block.
pub fn full_gradient(
    loss: LossKind,
    lambda: f64,
    data: &VerticalDataset,
    blocks: &[ModelBlock],
) -> Result<Vec<DenseVector>> {
    let h = total_scores(data, blocks);
    let g = grad_signal(loss, &h, data.labels())?;
    let n = data.n().max(1) as f64;
    Ok(blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let x = data.slice(k);
            let mut acc = vec![0.0; b.dim()];
            for i in 0..data.n() {
                axpy(g[i], x.row(i), &mut acc);
            }
            for (a, t) in acc.iter_mut().zip(b.theta.iter()) {
                *a = *a / n + lambda * t;
            }
            DenseVector::from_raw(acc)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub grad_norm_sq: f64,
    pub eval_metric: Option<f64>,
}

/// Training loss and gradient norm, plus the evaluation metric on `eval`
/// (or on the training set when no held-out set is given).
pub fn evaluate(
    loss: LossKind,
    lambda: f64,
    train: &VerticalDataset,
    eval: Option<&VerticalDataset>,
    blocks: &[ModelBlock],
) -> Result<Evaluation> {
    let h = total_scores(train, blocks);
    let value = full_loss(loss, &h, train.labels(), blocks, lambda)?;
    let grad_norm_sq = full_gradient(loss, lambda, train, blocks)?
        .iter()
        .map(|g| g.dot(g))
        .sum();
    let eval_set = eval.unwrap_or(train);
    let eval_h = if eval.is_some() {
        total_scores(eval_set, blocks)
    } else {
        h
    };
    Ok(Evaluation {
        loss: value,
        grad_norm_sq,
        eval_metric: eval_metric(loss, &eval_h, eval_set.labels()),
    })
}

/// AUC for logistic loss, RMSE for squared loss; `None` when undefined.
pub fn eval_metric(loss: LossKind, scores: &DenseVector, labels: &DenseVector) -> Option<f64> {
    if labels.is_empty() || !scores.is_finite() {
        return None;
    }
    match loss {
        LossKind::Logistic => eval_auc(scores, labels).ok(),
        LossKind::Squared => {
            let mse = scores
                .iter()
                .zip(labels.iter())
                .map(|(h, y)| (h - y) * (h - y))
                .sum::<f64>()
                / labels.len() as f64;
            Some(mse.sqrt())
        }
    }
}
