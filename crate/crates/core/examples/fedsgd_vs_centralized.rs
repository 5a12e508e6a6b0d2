//! FedSGD over a vertical split follows the centralized SGD trajectory.

use fedbcd::algorithms::{train, AlgoKind, TrainInputs, TrainingConfig};
use fedbcd::harness::{centralized_baseline, gen_synthetic, split_from_widths, split_vertical, SyntheticSpec, SyntheticTask};
use fedbcd::model::LossKind;

fn main() -> fedbcd::Result<()> {
    let data = gen_synthetic(&SyntheticSpec::new(1000, 12, SyntheticTask::LinearNoisy, 0.2, 3))?;
    let split = split_from_widths(&[3, 4, 5]);
    let parties = split_vertical(&data.features, &data.labels, &split, 2)?;

    let cfg = TrainingConfig {
        algo: AlgoKind::FedSgd,
        loss: LossKind::Squared,
        parties: 3,
        eta0: 0.05,
        total_sync_rounds: 50,
        ..TrainingConfig::default()
    };
    let fed = train(&cfg, TrainInputs::new(&parties), &mut ())?;
    let central = centralized_baseline(&cfg, &parties, None)?;

    println!("round  federated        centralized");
    for (a, b) in fed.rounds.iter().zip(&central.rounds).step_by(10) {
        println!("{:>5}  {:<15.10} {:.10}", a.sync_round, a.full_loss, b.full_loss);
    }
    let worst = fed
        .rounds
        .iter()
        .zip(&central.rounds)
        .map(|(a, b)| ((a.full_loss - b.full_loss) / b.full_loss).abs())
        .fold(0.0, f64::max);
    println!("max relative gap {worst:.2e}");
    println!("messages {}, scalars {}", fed.ledger.messages, fed.ledger.scalars_transferred);
    Ok(())
}
