use super::metrics::eval_metric;
use super::{RoundMetrics, VerticalDataset};
use crate::algorithms::{initial_blocks, lr_at, TrainingConfig};
use crate::error::{Error, Result};
use crate::numkit::{axpy, dot, DenseMatrix, DenseVector};
use crate::protocol::{make_batch_plan, CommLedger};

/// Single-machine run on the concatenated feature matrix.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub theta: DenseVector,
    pub initial: RoundMetrics,
    pub rounds: Vec<RoundMetrics>,
}

/// Minibatch SGD on `[x¹ … xᴷ]` with the same batch schedule, learning
/// rates and starting point a federated run with `cfg` would use. Only the
/// algorithm choice in `cfg` is ignored; every round takes one step.
pub fn centralized_baseline(
    cfg: &TrainingConfig,
    train: &VerticalDataset,
    eval: Option<&VerticalDataset>,
) -> Result<BaselineOutcome> {
    cfg.validate()?;
    if train.parties() != cfg.parties {
        return Err(Error::Config(format!(
            "config names {} parties, dataset has {}",
            cfg.parties,
            train.parties()
        )));
    }
    cfg.loss.validate_labels(train.labels().as_slice())?;
    let x = train.concat_features();
    let x_eval = eval.map(|e| e.concat_features());
    let mut theta: Vec<f64> = initial_blocks(cfg, &train.dims()).into_iter().flat_map(|b| b.into_vec()).collect();
    let plan = make_batch_plan(train.n(), cfg.batch_size, cfg.total_sync_rounds, cfg.sampling, cfg.seed)?;
    let y = train.labels();

    let metrics = |theta: &[f64], round: usize| -> RoundMetrics {
        let n = x.rows();
        let mut loss = 0.0;
        let mut grad = vec![0.0; theta.len()];
        let mut h = Vec::with_capacity(n);
        for i in 0..n {
            let hi = dot(x.row(i), theta);
            loss += cfg.loss.value(hi, y[i]);
            axpy(cfg.loss.derivative(hi, y[i]), x.row(i), &mut grad);
            h.push(hi);
        }
        let nf = n as f64;
        let reg = 0.5 * dot(theta, theta);
        let grad_norm_sq = grad
            .iter()
            .zip(theta)
            .map(|(g, t)| {
                let v = g / nf + cfg.lambda * t;
                v * v
            })
            .sum();
        let metric = match (&x_eval, eval) {
            (Some(xe), Some(e)) => eval_metric(cfg.loss, &scores(xe, theta), e.labels()),
            _ => eval_metric(cfg.loss, &DenseVector::from_raw(h), y),
        };
        RoundMetrics {
            sync_round: round,
            total_local_iters: round,
            full_loss: loss / nf + cfg.lambda * reg,
            grad_norm_sq,
            eval_metric: metric,
            ledger: CommLedger::default(),
            elapsed_ms: 0.0,
        }
    };

    let initial = metrics(&theta, 0);
    let mut rounds = Vec::with_capacity(cfg.total_sync_rounds);
    for t in 0..cfg.total_sync_rounds {
        let batch = plan.batch(t);
        let eta = lr_at(cfg.lr_schedule, cfg.eta0, t, cfg.parties);
        let mut grad = vec![0.0; theta.len()];
        for &i in batch {
            let hi = dot(x.row(i), &theta);
            axpy(cfg.loss.derivative(hi, y[i]), x.row(i), &mut grad);
        }
        let scale = 1.0 / batch.len() as f64;
        for (th, g) in theta.iter_mut().zip(&grad) {
            *th -= eta * (g * scale + cfg.lambda * *th);
        }
        if theta.iter().any(|v| !v.is_finite()) {
            break;
        }
        rounds.push(metrics(&theta, t + 1));
    }
    Ok(BaselineOutcome {
        theta: DenseVector::from_raw(theta),
        initial,
        rounds,
    })
}

fn scores(x: &DenseMatrix, theta: &[f64]) -> DenseVector {
    DenseVector::from_raw((0..x.rows()).map(|i| dot(x.row(i), theta)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{train, AlgoKind, TrainInputs};
    use crate::harness::{equal_split, gen_synthetic, split_vertical, SyntheticSpec, SyntheticTask};
    use crate::model::LossKind;

    fn dataset(k: usize) -> VerticalDataset {
        let d = gen_synthetic(&SyntheticSpec::new(300, 8, SyntheticTask::LogisticSeparable, 0.3, 2)).unwrap();
        split_vertical(&d.features, &d.labels, &equal_split(8, k).unwrap(), k - 1).unwrap()
    }

    #[test]
    fn zero_rounds_yields_initial_only() {
        let ds = dataset(2);
        let cfg = TrainingConfig {
            total_sync_rounds: 0,
            ..TrainingConfig::default()
        };
        let out = centralized_baseline(&cfg, &ds, None).unwrap();
        assert!(out.rounds.is_empty());
        assert!(out.initial.full_loss > 0.0);
    }

    #[test]
    fn fedsgd_matches_baseline() {
        for k in [2, 4] {
            let ds = dataset(k);
            let cfg = TrainingConfig {
                algo: AlgoKind::FedSgd,
                loss: LossKind::Logistic,
                parties: k,
                eta0: 0.5,
                batch_size: 32,
                total_sync_rounds: 40,
                ..TrainingConfig::default()
            };
            let fed = train(&cfg, TrainInputs::new(&ds), &mut ()).unwrap();
            let base = centralized_baseline(&cfg, &ds, None).unwrap();
            assert_eq!(fed.rounds.len(), base.rounds.len());
            for (a, b) in fed.rounds.iter().zip(&base.rounds) {
                assert!((a.full_loss - b.full_loss).abs() <= 1e-12 * b.full_loss.abs(), "{a:?} {b:?}");
            }
        }
    }
}
