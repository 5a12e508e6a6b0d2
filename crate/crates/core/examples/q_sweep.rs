use fedbcd::algorithms::AlgoKind;
use fedbcd::algorithms::TrainInputs;
use fedbcd::harness::{logistic_task, run_sweep, SweepSpec};

fn main() -> fedbcd::Result<()> {
    let task = logistic_task()?;
    let spec = SweepSpec {
        q_values: vec![1, 2, 5, 10, 25],
        algos: vec![AlgoKind::FedSgd, AlgoKind::FedBcdParallel, AlgoKind::FedBcdSequential],
        target_metric: task.target_metric,
        target_value: task.target_value,
        max_rounds: 300,
    };
    let table = run_sweep(&spec, &task.config, TrainInputs::new(&task.train).with_eval(&task.eval))?;
    print!("{}", table.to_text());
    for w in &table.warnings {
        eprintln!("{w}");
    }
    Ok(())
}
