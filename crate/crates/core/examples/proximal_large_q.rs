use fedbcd::algorithms::{train, AlgoKind, RunStatus, TrainInputs, TrainingConfig};
use fedbcd::harness::large_q_task;

// With Q = 100 and an aggressive step the plain variant blows up;
// the proximal term keeps each block near its anchor.
fn main() -> fedbcd::Result<()> {
    let task = large_q_task()?;
    println!("eta0 = {:.4e}, Q = {}, mu = {}", task.config.eta0, task.config.local_iters, task.config.mu);

    for algo in [AlgoKind::FedBcdParallel, AlgoKind::FedPbcdParallel] {
        let cfg = TrainingConfig {
            algo,
            total_sync_rounds: 40,
            ..task.config.clone()
        };
        let out = train(&cfg, TrainInputs::new(&task.train), &mut ())?;
        let hit = out
            .rounds
            .iter()
            .find(|m| task.target_metric.reached(m, task.target_value))
            .map(|m| m.sync_round);
        let status = match out.status {
            RunStatus::Diverged { round } => format!("diverged at round {round}"),
            _ => format!("final loss {:.4e}", out.last().full_loss),
        };
        println!("{:<10} {status}; target {} reached at {hit:?}", algo.name(), task.target_value);
    }
    Ok(())
}
