use fedbcd::algorithms::{train, AlgoKind, TrainInputs, TrainingConfig};
use fedbcd::harness::logistic_task;

// More local work per exchange on the reference logistic task.
fn main() -> fedbcd::Result<()> {
    let task = logistic_task()?;
    for q in [1, 3, 10] {
        let cfg = TrainingConfig {
            algo: AlgoKind::FedBcdParallel,
            local_iters: q,
            total_sync_rounds: 60,
            ..task.config.clone()
        };
        let out = train(&cfg, TrainInputs::new(&task.train).with_eval(&task.eval), &mut ())?;
        let last = out.last();
        println!(
            "Q={q:<3} loss {:.4}  AUC {:.4}  local iters {}  messages {}",
            last.full_loss,
            last.eval_metric.unwrap_or(f64::NAN),
            last.total_local_iters,
            last.ledger.messages,
        );
        for w in &out.warnings {
            println!("  warning: {w}");
        }
    }
    Ok(())
}
