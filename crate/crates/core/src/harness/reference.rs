use super::{equal_split, gen_synthetic, split_vertical, SyntheticSpec, SyntheticTask, TargetMetric, VerticalDataset};
use crate::algorithms::{estimate_lipschitz, step_size_bound, AlgoKind, TrainingConfig};
use crate::error::Result;
use crate::model::LossKind;

/// A fixed-seed dataset with the training setup and target it is meant for.
#[derive(Debug, Clone)]
pub struct ReferenceTask {
    pub train: VerticalDataset,
    pub eval: VerticalDataset,
    pub config: TrainingConfig,
    pub target_metric: TargetMetric,
    pub target_value: f64,
}

fn build(spec: &SyntheticSpec, parties: usize, config: TrainingConfig, target: (TargetMetric, f64)) -> Result<ReferenceTask> {
    let data = gen_synthetic(spec)?;
    let split = equal_split(spec.d, parties)?;
    let full = split_vertical(&data.features, &data.labels, &split, parties - 1)?;
    let (train, eval) = full.train_eval_split(0.2, spec.seed)?;
    Ok(ReferenceTask {
        train,
        eval,
        config,
        target_metric: target.0,
        target_value: target.1,
    })
}

/// Seed 7, 2000 samples, 20 features split 10/10, noisy logistic labels,
/// 80/20 held-out split, held-out AUC target 0.85.
pub fn logistic_task() -> Result<ReferenceTask> {
    let spec = SyntheticSpec::new(2000, 20, SyntheticTask::LogisticSeparable, 0.5, 7);
    let config = TrainingConfig {
        algo: AlgoKind::FedBcdParallel,
        loss: LossKind::Logistic,
        parties: 2,
        local_iters: 5,
        eta0: 0.005,
        lambda: 0.01,
        batch_size: 64,
        total_sync_rounds: 200,
        seed: 7,
        init_scale: 0.01,
        ..TrainingConfig::default()
    };
    build(&spec, 2, config, (TargetMetric::AucAbove, 0.85))
}

/// Squared loss on five parties whose features share one strong common
/// factor (pairwise correlation 0.8, scale 0.1). With `Q = 100` and
/// `η = 4×` the step-size bound, the uncorrected parallel updates over-shoot
/// along the shared direction every round; `eta0` is set to that value.
pub fn large_q_task() -> Result<ReferenceTask> {
    let spec = SyntheticSpec {
        feature_scale: 0.1,
        shared_factor: 0.8,
        ..SyntheticSpec::new(2000, 20, SyntheticTask::LinearNoisy, 0.1, 11)
    };
    let mut config = TrainingConfig {
        algo: AlgoKind::FedBcdParallel,
        loss: LossKind::Squared,
        parties: 5,
        local_iters: 100,
        eta0: 1.0,
        lambda: 1e-3,
        mu: 0.1,
        batch_size: 64,
        total_sync_rounds: 200,
        seed: 11,
        init_scale: 0.01,
        ..TrainingConfig::default()
    };
    let mut task = build(&spec, 5, config.clone(), (TargetMetric::LossBelow, 0.0057))?;
    let lips = estimate_lipschitz(&task.train, config.loss, config.lambda);
    config.eta0 = 4.0 * step_size_bound(&lips, config.local_iters)?;
    config.lipschitz = Some(lips);
    task.config = config;
    Ok(task)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let t = logistic_task().unwrap();
        assert_eq!((t.train.n(), t.eval.n()), (1600, 400));
        assert_eq!(t.train.dims(), vec![10, 10]);
        let t = large_q_task().unwrap();
        assert_eq!(t.train.dims(), vec![4; 5]);
        assert!(t.config.lipschitz.is_some());
    }
}
