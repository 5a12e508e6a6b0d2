//! Runs the rotated-feature shadow protocol next to the real one and
//! checks that everything the other parties see is unchanged.

use fedbcd::algorithms::{AlgoKind, TrainingConfig};
use fedbcd::harness::logistic_task;
use fedbcd::security_audit::{run_shadow_audit, AuditConfig, AuditControl};

fn main() -> fedbcd::Result<()> {
    let task = logistic_task()?;
    let base = TrainingConfig {
        algo: AlgoKind::FedBcdParallel,
        ..task.config.clone()
    };

    let mut cfg = AuditConfig::new(base, 0);
    cfg.trials = 3;
    cfg.rounds = 30;
    let report = run_shadow_audit(&cfg, &task.train)?;
    println!("orthogonal witness: passed = {}", report.passed);
    for t in &report.trials {
        println!(
            "  trial {} witness {}..  msg dev {:.1e}  theta dev {:.1e}  |X U - X| {:.2}",
            t.trial,
            &t.witness_fingerprint[..12],
            t.max_message_deviation,
            t.max_theta_deviation,
            t.feature_shift
        );
    }

    cfg.control = AuditControl::Shear;
    cfg.trials = 1;
    let report = run_shadow_audit(&cfg, &task.train)?;
    let t = &report.trials[0];
    println!(
        "shear control: passed = {}, first failure at round {:?}, msg dev {:.2e}",
        report.passed, t.first_failure_round, t.max_message_deviation
    );
    Ok(())
}
