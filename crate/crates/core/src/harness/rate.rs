use serde::Serialize;

use super::{evaluate, RoundMetrics, VerticalDataset};
use crate::algorithms::{estimate_lipschitz, step_size_bound, train, AlgoKind, LrSchedule, TrainInputs, TrainingConfig, TrainingObserver};
use crate::error::{Error, Result};
use crate::model::{LossKind, ModelBlock};
use crate::numkit::DenseVector;

/// Records `‖∇L(Θʳ)‖²` at every local iteration `r` of a parallel run,
/// `Θʳ` being all blocks after their `r`-th local step.
pub struct GradNormTrace<'a> {
    data: &'a VerticalDataset,
    loss: LossKind,
    lambda: f64,
    q: usize,
    pending: Vec<Vec<Option<DenseVector>>>,
    pub values: Vec<f64>,
    pub error: Option<Error>,
}

impl<'a> GradNormTrace<'a> {
    pub fn new(data: &'a VerticalDataset, cfg: &TrainingConfig, initial: &[DenseVector]) -> Result<Self> {
        let blocks = to_blocks(initial)?;
        let first = evaluate(cfg.loss, cfg.lambda, data, None, &blocks)?.grad_norm_sq;
        let q = cfg.effective_local_iters();
        Ok(Self {
            data,
            loss: cfg.loss,
            lambda: cfg.lambda,
            q,
            pending: vec![vec![None; q]; initial.len()],
            values: vec![first],
            error: None,
        })
    }

    /// Mean over `r = 0..t` (the first `t` iterates).
    pub fn running_average(&self, t: usize) -> Option<f64> {
        (t >= 1 && t <= self.values.len()).then(|| self.values[..t].iter().sum::<f64>() / t as f64)
    }
}

fn to_blocks(thetas: &[DenseVector]) -> Result<Vec<ModelBlock>> {
    thetas
        .iter()
        .enumerate()
        .map(|(k, t)| ModelBlock::new(k, t.clone()))
        .collect()
}

impl TrainingObserver for GradNormTrace<'_> {
    fn on_local_step(&mut self, _round: usize, party: usize, step: usize, theta: &DenseVector) {
        if let Some(slot) = self.pending.get_mut(party).and_then(|p| p.get_mut(step - 1)) {
            *slot = Some(theta.clone());
        }
    }

    fn on_round(&mut self, _m: &RoundMetrics) -> std::ops::ControlFlow<()> {
        for j in 0..self.q {
            let thetas: Option<Vec<DenseVector>> = self.pending.iter_mut().map(|p| p[j].take()).collect();
            let Some(thetas) = thetas else { continue };
            let g = to_blocks(&thetas).and_then(|b| evaluate(self.loss, self.lambda, self.data, None, &b));
            match g {
                Ok(e) => self.values.push(e.grad_norm_sq),
                Err(e) => {
                    self.error = Some(e);
                    return std::ops::ControlFlow::Break(());
                }
            }
        }
        std::ops::ControlFlow::Continue(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    /// Total local iterations `T`.
    pub t: usize,
    /// `Q = S = ⌈√T⌉`.
    pub q: usize,
    pub eta: f64,
    pub rounds: usize,
    /// `(1/T)·Σ_{r<T} ‖∇L(Θʳ)‖²`.
    pub avg_grad_norm_sq: f64,
}

/// Runs the parallel variant at each horizon `T` with `Q = S = ⌈√T⌉` and
/// constant `η = c/√T`. The constant `c` is `√T` times the step-size bound
/// at that `Q`, which does not depend on `T` once `1/L` is not binding.
pub fn rate_shape(data: &VerticalDataset, base: &TrainingConfig, horizons: &[usize]) -> Result<Vec<RatePoint>> {
    let lips = match &base.lipschitz {
        Some(l) => l.clone(),
        None => estimate_lipschitz(data, base.loss, base.lambda),
    };
    horizons
        .iter()
        .map(|&t| {
            let q = (t as f64).sqrt().ceil() as usize;
            if q > data.n() {
                return Err(Error::Config(format!(
                    "horizon T = {t} needs batch size {q} but only {} samples exist",
                    data.n()
                )));
            }
            let sqrt_t = (t as f64).sqrt();
            let c = sqrt_t * step_size_bound(&lips, q)?;
            let rounds = t.div_ceil(q);
            let cfg = TrainingConfig {
                algo: AlgoKind::FedBcdParallel,
                local_iters: q,
                batch_size: q,
                eta0: c / sqrt_t,
                lr_schedule: LrSchedule::Constant,
                total_sync_rounds: rounds,
                lipschitz: Some(lips.clone()),
                ..base.clone()
            };
            let initial = crate::algorithms::initial_blocks(&cfg, &data.dims());
            let mut trace = GradNormTrace::new(data, &cfg, &initial)?;
            let out = train(&cfg, TrainInputs::new(data).with_initial(&initial), &mut trace)?;
            if let Some(e) = trace.error.take() {
                return Err(e);
            }
            if out.diverged() {
                return Err(Error::NumericalDivergence {
                    party: 0,
                    round: out.rounds.len() + 1,
                });
            }
            let avg = trace.running_average(t).ok_or_else(|| {
                Error::Protocol(format!("only {} iterates recorded for T = {t}", trace.values.len()))
            })?;
            Ok(RatePoint {
                t,
                q,
                eta: cfg.eta0,
                rounds,
                avg_grad_norm_sq: avg,
            })
        })
        .collect()
}
