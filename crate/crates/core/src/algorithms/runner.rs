use std::ops::ControlFlow;
use std::time::Instant;

use serde::Serialize;

use super::{lr_at, step_size_bound, AlgoKind, LipschitzEstimate, LocalTrace, TrainingConfig};
use crate::algorithms::local_update_block;
use crate::error::{Error, Result};
use crate::harness::{evaluate, RoundMetrics, VerticalDataset};
use crate::model::{partial_gradient, LossKind, ModelBlock};
use crate::numkit::{gram_max_eigenvalue, DenseVector, SeededRng};
use crate::protocol::{make_batch_plan, BatchPlan, CommLedger, ExchangeMessage, Exchanger, PartyState, PartyView};
use crate::streams;

/// Hooks into a training run. Every method defaults to a no-op.
///
/// Local steps of a parallel phase are reported after the phase ends, in
/// party order, so the call sequence does not depend on the thread count.
pub trait TrainingObserver {
    fn on_message(&mut self, _msg: &ExchangeMessage) {}

    /// `theta` is party `party`'s block after local step `step` (1-based)
    /// of sync round `round` (0-based).
    fn on_local_step(&mut self, _round: usize, _party: usize, _step: usize, _theta: &DenseVector) {}

    fn on_round(&mut self, _metrics: &RoundMetrics) -> ControlFlow<()> {
        ControlFlow::Continue(())
    }
}

impl TrainingObserver for () {}

/// Data a run trains on, plus optional held-out set and starting point.
#[derive(Debug, Clone, Copy)]
pub struct TrainInputs<'a> {
    pub train: &'a VerticalDataset,
    pub eval: Option<&'a VerticalDataset>,
    pub initial: Option<&'a [DenseVector]>,
}

impl<'a> TrainInputs<'a> {
    pub fn new(train: &'a VerticalDataset) -> Self {
        Self {
            train,
            eval: None,
            initial: None,
        }
    }

    pub fn with_eval(mut self, eval: &'a VerticalDataset) -> Self {
        self.eval = Some(eval);
        self
    }

    pub fn with_initial(mut self, initial: &'a [DenseVector]) -> Self {
        self.initial = Some(initial);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// The observer asked to stop after this sync round.
    Stopped { round: usize },
    /// Parameters or loss became non-finite during this sync round; the
    /// outcome holds the state after the previous one.
    Diverged { round: usize },
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutcome {
    pub blocks: Vec<ModelBlock>,
    pub initial: RoundMetrics,
    pub rounds: Vec<RoundMetrics>,
    pub status: RunStatus,
    pub ledger: CommLedger,
    pub lipschitz: LipschitzEstimate,
    pub step_bound: f64,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn last(&self) -> &RoundMetrics {
        self.rounds.last().unwrap_or(&self.initial)
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }
}

/// `θₖ ~ init_scale·N(0, I)` on a per-party stream of the config seed.
pub fn initial_blocks(cfg: &TrainingConfig, dims: &[usize]) -> Vec<DenseVector> {
    dims.iter()
        .enumerate()
        .map(|(k, &d)| {
            let mut rng = SeededRng::new(cfg.seed, streams::INIT + k as u64);
            DenseVector::from_raw(
                (0..d)
                    .map(|_| if cfg.init_scale == 0.0 { 0.0 } else { cfg.init_scale * rng.normal() })
                    .collect(),
            )
        })
        .collect()
}

/// `L = c·λ_max(XᵀX/N) + λ` and `Lₖ = c·λ_max(XₖᵀXₖ/N) + λ`, with `c` the
/// loss curvature bound (1 for squared, ¼ for logistic).
pub fn estimate_lipschitz(data: &VerticalDataset, loss: LossKind, lambda: f64) -> LipschitzEstimate {
    const ITERS: usize = 200;
    let c = loss.curvature_bound();
    let floor = f64::MIN_POSITIVE;
    let l_global = (c * gram_max_eigenvalue(&data.concat_features(), ITERS) + lambda).max(floor);
    let l_blocks = data
        .slices()
        .iter()
        .map(|s| (c * gram_max_eigenvalue(s, ITERS) + lambda).max(floor))
        .collect();
    LipschitzEstimate { l_global, l_blocks }
}

pub fn train(cfg: &TrainingConfig, inputs: TrainInputs<'_>, obs: &mut dyn TrainingObserver) -> Result<RunOutcome> {
    match cfg.algo {
        AlgoKind::FedSgd => run_fedsgd(cfg, inputs, obs),
        AlgoKind::FedBcdParallel | AlgoKind::FedPbcdParallel => run_fedbcd_p(cfg, inputs, obs),
        AlgoKind::FedBcdSequential => run_fedbcd_s(cfg, inputs, obs),
    }
}

/// One exchange and one gradient step per party every sync round.
pub fn run_fedsgd(cfg: &TrainingConfig, inputs: TrainInputs<'_>, obs: &mut dyn TrainingObserver) -> Result<RunOutcome> {
    expect_algo(cfg, &[AlgoKind::FedSgd])?;
    Session::new(cfg, inputs)?.drive(obs, |s, t, obs| {
        let batch = s.plan.batch(t).to_vec();
        let ex = s.exchanger.exchange_linear(t, 0, &s.parties, &batch)?;
        ex.messages.iter().for_each(|m| obs.on_message(m));
        let eta = lr_at(cfg.lr_schedule, cfg.eta0, t, cfg.parties);
        for (p, view) in s.parties.iter_mut().zip(&ex.views) {
            let grad = partial_gradient(&p.block, &p.features, view.signal(), cfg.lambda)?;
            for (th, g) in p.block.theta.as_mut_slice().iter_mut().zip(grad.iter()) {
                *th -= eta * g;
            }
            if !p.block.theta.is_finite() {
                return Err(Error::NumericalDivergence { party: p.id, round: t });
            }
            obs.on_local_step(t, p.id, 1, &p.block.theta);
        }
        Ok(())
    })
}

/// One exchange per sync round, then `Q` local steps by every party against
/// the frozen batch and stale off-block scores. Also runs the proximal variant.
pub fn run_fedbcd_p(cfg: &TrainingConfig, inputs: TrainInputs<'_>, obs: &mut dyn TrainingObserver) -> Result<RunOutcome> {
    expect_algo(cfg, &[AlgoKind::FedBcdParallel, AlgoKind::FedPbcdParallel])?;
    Session::new(cfg, inputs)?.drive(obs, |s, t, obs| {
        let batch = s.plan.batch(t).to_vec();
        let ex = s.exchanger.exchange_linear(t, 0, &s.parties, &batch)?;
        ex.messages.iter().for_each(|m| obs.on_message(m));
        let eta = lr_at(cfg.lr_schedule, cfg.eta0, t, cfg.parties);
        let traces = parallel_local(cfg, &s.parties, &ex.views, eta, t)?;
        for (p, trace) in s.parties.iter_mut().zip(traces) {
            for (j, th) in trace.steps.iter().enumerate() {
                obs.on_local_step(t, p.id, j + 1, th);
            }
            p.block = trace.block;
        }
        Ok(())
    })
}

/// Parties update one after another. Each round opens with a full exchange
/// on the new batch; after party `k`'s `Q` local steps it exchanges with the
/// label party, so the label party's own phase sees every refreshed score.
pub fn run_fedbcd_s(cfg: &TrainingConfig, inputs: TrainInputs<'_>, obs: &mut dyn TrainingObserver) -> Result<RunOutcome> {
    expect_algo(cfg, &[AlgoKind::FedBcdSequential])?;
    Session::new(cfg, inputs)?.drive(obs, |s, t, obs| {
        let batch = s.plan.batch(t).to_vec();
        let ex = s.exchanger.exchange_linear(t, 0, &s.parties, &batch)?;
        ex.messages.iter().for_each(|m| obs.on_message(m));
        let mut views = ex.views;
        let eta = lr_at(cfg.lr_schedule, cfg.eta0, t, cfg.parties);
        for k in 0..s.parties.len() {
            let p = &s.parties[k];
            let trace = local_update_block(
                p,
                &views[k],
                cfg.loss,
                cfg.local_iters,
                eta,
                cfg.lambda,
                0.0,
                &p.block.theta,
                t,
            )?;
            for (j, th) in trace.steps.iter().enumerate() {
                obs.on_local_step(t, k, j + 1, th);
            }
            s.parties[k].block = trace.block;
            let msgs = s.exchanger.exchange_pair(t, k + 1, &s.parties, k, &mut views)?;
            msgs.iter().for_each(|m| obs.on_message(m));
        }
        Ok(())
    })
}

fn expect_algo(cfg: &TrainingConfig, allowed: &[AlgoKind]) -> Result<()> {
    if !allowed.contains(&cfg.algo) {
        return Err(Error::Config(format!(
            "runner for {:?} called with algo {}",
            allowed,
            cfg.algo.name()
        )));
    }
    Ok(())
}

fn parallel_local(
    cfg: &TrainingConfig,
    parties: &[PartyState],
    views: &[PartyView],
    eta: f64,
    round: usize,
) -> Result<Vec<LocalTrace>> {
    let q = cfg.local_iters;
    let mu = cfg.effective_mu();
    let work = |k: usize| {
        let p = &parties[k];
        local_update_block(p, &views[k], cfg.loss, q, eta, cfg.lambda, mu, &p.block.theta, round)
    };
    let k = parties.len();
    if cfg.threads <= 1 || k == 1 {
        return (0..k).map(work).collect();
    }
    let workers = cfg.threads.min(k);
    let mut slots: Vec<Option<Result<LocalTrace>>> = (0..k).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let work = &work;
                scope.spawn(move || {
                    (w..k)
                        .step_by(workers)
                        .map(|i| (i, work(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("local phase worker panicked") {
                slots[i] = Some(r);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every party ran")).collect()
}

struct Session<'a> {
    cfg: &'a TrainingConfig,
    inputs: TrainInputs<'a>,
    parties: Vec<PartyState>,
    plan: BatchPlan,
    exchanger: Exchanger,
    lipschitz: LipschitzEstimate,
    step_bound: f64,
    warnings: Vec<String>,
}

impl<'a> Session<'a> {
    fn new(cfg: &'a TrainingConfig, inputs: TrainInputs<'a>) -> Result<Self> {
        cfg.validate()?;
        let data = inputs.train;
        if data.parties() != cfg.parties {
            return Err(Error::Config(format!(
                "config names {} parties, dataset has {}",
                cfg.parties,
                data.parties()
            )));
        }
        cfg.loss.validate_labels(data.labels().as_slice())?;
        if let Some(eval) = inputs.eval {
            if eval.dims() != data.dims() {
                return Err(Error::Shape("held-out set has a different feature split".into()));
            }
        }
        let init = match inputs.initial {
            Some(blocks) => blocks.to_vec(),
            None => initial_blocks(cfg, &data.dims()),
        };
        if init.len() != cfg.parties || init.iter().zip(data.dims()).any(|(b, d)| b.len() != d) {
            return Err(Error::Shape("initial blocks do not match the feature split".into()));
        }
        let label = data.label_party();
        let parties = init
            .into_iter()
            .enumerate()
            .map(|(k, theta)| {
                Ok(PartyState {
                    id: k,
                    features: data.slice(k).clone(),
                    block: ModelBlock::new(k, theta)?,
                    labels: (k == label).then(|| data.labels().clone()),
                    rng: SeededRng::new(cfg.seed, streams::PARTY + k as u64),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let plan = make_batch_plan(data.n(), cfg.batch_size, cfg.total_sync_rounds, cfg.sampling, cfg.seed)?;
        let lipschitz = match &cfg.lipschitz {
            Some(l) => l.clone(),
            None => estimate_lipschitz(data, cfg.loss, cfg.lambda),
        };
        let step_bound = step_size_bound(&lipschitz, cfg.effective_local_iters())?;
        let mut warnings = Vec::new();
        if cfg.eta0 > step_bound {
            warnings.push(format!(
                "eta0 = {} exceeds the step-size bound {:.6e} for Q = {}; convergence is not guaranteed",
                cfg.eta0,
                step_bound,
                cfg.effective_local_iters()
            ));
        }
        Ok(Self {
            cfg,
            inputs,
            parties,
            plan,
            exchanger: Exchanger::new(cfg.loss),
            lipschitz,
            step_bound,
            warnings,
        })
    }

    fn blocks(&self) -> Vec<ModelBlock> {
        self.parties.iter().map(|p| p.block.clone()).collect()
    }

    fn metrics(&self, sync_round: usize, start: Instant) -> Result<RoundMetrics> {
        let e = evaluate(self.cfg.loss, self.cfg.lambda, self.inputs.train, self.inputs.eval, &self.blocks())?;
        Ok(RoundMetrics {
            sync_round,
            total_local_iters: sync_round * self.cfg.effective_local_iters(),
            full_loss: e.loss,
            grad_norm_sq: e.grad_norm_sq,
            eval_metric: e.eval_metric,
            ledger: self.exchanger.ledger,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    fn drive<F>(mut self, obs: &mut dyn TrainingObserver, mut round: F) -> Result<RunOutcome>
    where
        F: FnMut(&mut Self, usize, &mut dyn TrainingObserver) -> Result<()>,
    {
        let start = Instant::now();
        let initial = self.metrics(0, start)?;
        let mut rounds = Vec::with_capacity(self.cfg.total_sync_rounds);
        let mut status = RunStatus::Completed;
        for t in 0..self.cfg.total_sync_rounds {
            let before = self.blocks();
            let diverged = match round(&mut self, t, obs) {
                Ok(()) => {
                    let m = self.metrics(t + 1, start)?;
                    if m.full_loss.is_finite() && m.grad_norm_sq.is_finite() {
                        let flow = obs.on_round(&m);
                        rounds.push(m);
                        if flow.is_break() {
                            status = RunStatus::Stopped { round: t + 1 };
                            break;
                        }
                        false
                    } else {
                        true
                    }
                }
                Err(Error::NumericalDivergence { .. }) => true,
                Err(e) => return Err(e),
            };
            if diverged {
                for (p, b) in self.parties.iter_mut().zip(before) {
                    p.block = b;
                }
                status = RunStatus::Diverged { round: t + 1 };
                break;
            }
        }
        Ok(RunOutcome {
            blocks: self.blocks(),
            initial,
            rounds,
            status,
            ledger: self.exchanger.ledger,
            lipschitz: self.lipschitz,
            step_bound: self.step_bound,
            warnings: self.warnings,
        })
    }
}
