use std::path::PathBuf;

use fedbcd::algorithms::{train, AlgoKind, TrainInputs, TrainingConfig};
use fedbcd::harness::{evaluate, load_csv_vertical, logistic_task, write_csv_vertical};

// Each party keeps its own CSV file; only the last one holds labels.
fn main() -> fedbcd::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("fedbcd-csv"));
    std::fs::create_dir_all(&dir)?;

    let task = logistic_task()?;
    let (files, labels) = write_csv_vertical(&task.train, &dir)?;
    for f in &files {
        println!("wrote {}", f.display());
    }
    println!("wrote {}", labels.display());

    let data = load_csv_vertical(&files, &labels)?;
    assert_eq!(data.fingerprint(), task.train.fingerprint());
    println!("{} samples, party widths {:?}", data.n(), data.dims());

    let cfg = TrainingConfig {
        algo: AlgoKind::FedBcdParallel,
        total_sync_rounds: 30,
        ..task.config.clone()
    };
    let out = train(&cfg, TrainInputs::new(&data), &mut ())?;
    let ev = evaluate(cfg.loss, cfg.lambda, &data, Some(&task.eval), &out.blocks)?;
    println!("loss {:.4}  held-out AUC {:.4}", ev.loss, ev.eval_metric.unwrap_or(f64::NAN));
    Ok(())
}
