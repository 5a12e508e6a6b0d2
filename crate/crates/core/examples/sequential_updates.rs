//! Parties take turns; each sees the others' latest scores.

use fedbcd::algorithms::{train, AlgoKind, TrainInputs, TrainingConfig};
use fedbcd::harness::logistic_task;

fn main() -> fedbcd::Result<()> {
    let task = logistic_task()?;
    for algo in [AlgoKind::FedBcdParallel, AlgoKind::FedBcdSequential] {
        let cfg = TrainingConfig {
            algo,
            total_sync_rounds: 40,
            ..task.config.clone()
        };
        let out = train(&cfg, TrainInputs::new(&task.train).with_eval(&task.eval), &mut ())?;
        let m = out.last();
        println!(
            "{:<9} loss {:.5}  AUC {:.4}  messages {:>4}  scalars {}",
            algo.name(),
            m.full_loss,
            m.eval_metric.unwrap_or(f64::NAN),
            m.ledger.messages,
            m.ledger.scalars_transferred
        );
    }
    Ok(())
}
