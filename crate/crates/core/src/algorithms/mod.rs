//! FedSGD, parallel and sequential FedBCD, and the proximal parallel
//! variant, plus learning-rate schedules and the step-size bound under
//! which the parallel variant's averaged gradient norm provably shrinks.

mod local;
mod runner;

pub use local::{local_update_block, LocalTrace};
pub use runner::{
    estimate_lipschitz, initial_blocks, run_fedbcd_p, run_fedbcd_s, run_fedsgd, train, RunOutcome,
    RunStatus, TrainInputs, TrainingObserver,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::LossKind;
use crate::protocol::SamplingMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AlgoKind {
    #[serde(rename = "fedsgd")]
    FedSgd,
    #[serde(rename = "fedbcd_p")]
    FedBcdParallel,
    #[serde(rename = "fedbcd_s")]
    FedBcdSequential,
    #[serde(rename = "fedpbcd_p")]
    FedPbcdParallel,
}

impl AlgoKind {
    pub fn name(self) -> &'static str {
        match self {
            AlgoKind::FedSgd => "fedsgd",
            AlgoKind::FedBcdParallel => "fedbcd_p",
            AlgoKind::FedBcdSequential => "fedbcd_s",
            AlgoKind::FedPbcdParallel => "fedpbcd_p",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "fedsgd" => Ok(AlgoKind::FedSgd),
            "fedbcd_p" => Ok(AlgoKind::FedBcdParallel),
            "fedbcd_s" => Ok(AlgoKind::FedBcdSequential),
            "fedpbcd_p" => Ok(AlgoKind::FedPbcdParallel),
            other => Err(Error::Config(format!(
                "unknown algorithm `{other}` (expected fedsgd, fedbcd_p, fedbcd_s or fedpbcd_p)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `η₀ / √(t+1)`
    InvSqrtT,
    /// `η₀ / √((t+1)·K)`
    InvSqrtTk,
}

/// Learning rate at sync round `t` with `k` parties.
pub fn lr_at(schedule: LrSchedule, eta0: f64, t: usize, k: usize) -> f64 {
    let t1 = (t + 1) as f64;
    match schedule {
        LrSchedule::Constant => eta0,
        LrSchedule::InvSqrtT => eta0 / t1.sqrt(),
        LrSchedule::InvSqrtTk => eta0 / (t1 * k as f64).sqrt(),
    }
}

/// Gradient Lipschitz constants: global `L` and per-block `Lₖ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzEstimate {
    pub l_global: f64,
    pub l_blocks: Vec<f64>,
}

/// `min_k min{ √2 / (2Q·√(Σⱼ Lⱼ² + 3Lₖ²)), 1/L }`.
pub fn step_size_bound(lips: &LipschitzEstimate, q: usize) -> Result<f64> {
    if q == 0 {
        return Err(Error::Config("local iterations Q must be at least 1".into()));
    }
    let all = std::iter::once(lips.l_global).chain(lips.l_blocks.iter().copied());
    if lips.l_blocks.is_empty() || all.clone().any(|l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Config(
            "Lipschitz constants must be positive and finite".into(),
        ));
    }
    let sum_sq: f64 = lips.l_blocks.iter().map(|l| l * l).sum();
    let inv_l = 1.0 / lips.l_global;
    Ok(lips
        .l_blocks
        .iter()
        .map(|lk| {
            let local = std::f64::consts::SQRT_2 / (2.0 * q as f64 * (sum_sq + 3.0 * lk * lk).sqrt());
            local.min(inv_l)
        })
        .fold(f64::INFINITY, f64::min))
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub algo: AlgoKind,
    pub loss: LossKind,
    /// Number of parties `K`.
    pub parties: usize,
    /// Local iterations `Q` per sync round.
    pub local_iters: usize,
    pub eta0: f64,
    pub lambda: f64,
    /// Proximal weight; only read by the proximal variant.
    pub mu: f64,
    pub batch_size: usize,
    pub total_sync_rounds: usize,
    pub lr_schedule: LrSchedule,
    pub sampling: SamplingMode,
    pub seed: u64,
    /// Standard deviation of the Gaussian initial parameters; `0` starts at zero.
    pub init_scale: f64,
    /// Worker threads for the parallel local phase; `1` runs parties in order.
    pub threads: usize,
    /// Supplied constants; estimated from the data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lipschitz: Option<LipschitzEstimate>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            algo: AlgoKind::FedBcdParallel,
            loss: LossKind::Logistic,
            parties: 2,
            local_iters: 5,
            eta0: 0.1,
            lambda: 0.01,
            mu: 0.0,
            batch_size: 64,
            total_sync_rounds: 100,
            lr_schedule: LrSchedule::Constant,
            sampling: SamplingMode::PartitionCycle,
            seed: 7,
            init_scale: 0.01,
            threads: 1,
            lipschitz: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.local_iters < 1 {
            return fail(format!("local_iters must satisfy Q >= 1, got {}", self.local_iters));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return fail(format!("eta0 must be positive, got {}", self.eta0));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.mu >= 0.0 && self.mu.is_finite()) {
            return fail(format!("mu must be >= 0, got {}", self.mu));
        }
        if self.parties < 2 {
            return fail(format!("parties must satisfy K >= 2, got {}", self.parties));
        }
        if self.batch_size < 1 {
            return fail("batch_size must be at least 1".into());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return fail(format!("init_scale must be >= 0, got {}", self.init_scale));
        }
        if self.threads < 1 {
            return fail("threads must be at least 1".into());
        }
        if let Some(l) = &self.lipschitz {
            if l.l_blocks.len() != self.parties {
                return fail(format!(
                    "{} block Lipschitz constants for {} parties",
                    l.l_blocks.len(),
                    self.parties
                ));
            }
            step_size_bound(l, 1)?;
        }
        Ok(())
    }

    /// Local steps each party takes per sync round.
    pub fn effective_local_iters(&self) -> usize {
        match self.algo {
            AlgoKind::FedSgd => 1,
            _ => self.local_iters,
        }
    }

    /// Proximal weight actually applied.
    pub fn effective_mu(&self) -> f64 {
        match self.algo {
            AlgoKind::FedPbcdParallel => self.mu,
            _ => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(k: usize) -> LipschitzEstimate {
        LipschitzEstimate {
            l_global: 1.0,
            l_blocks: vec![1.0; k],
        }
    }

    #[test]
    fn bound_examples() {
        // √2 / (2·√5) and √2 / (10·√5)
        let q1 = step_size_bound(&unit(2), 1).unwrap();
        assert!((q1 - 0.316_227_766_016_838).abs() < 1e-12);
        let q5 = step_size_bound(&unit(2), 5).unwrap();
        assert!((q5 - 0.063_245_553_203_367_6).abs() < 1e-12);
        let mut prev = f64::INFINITY;
        for q in [1, 2, 10, 100, 10_000] {
            let b = step_size_bound(&unit(2), q).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn bound_caps_at_inverse_lipschitz() {
        let l = LipschitzEstimate {
            l_global: 100.0,
            l_blocks: vec![0.01, 0.01],
        };
        assert_eq!(step_size_bound(&l, 1).unwrap(), 0.01);
    }

    #[test]
    fn bound_rejects_nonpositive() {
        let l = LipschitzEstimate {
            l_global: 0.0,
            l_blocks: vec![1.0],
        };
        assert!(matches!(step_size_bound(&l, 1), Err(Error::Config(_))));
        assert!(step_size_bound(&unit(2), 0).is_err());
    }

    #[test]
    fn schedules() {
        assert_eq!(lr_at(LrSchedule::InvSqrtT, 0.1, 0, 2), 0.1);
        assert!((lr_at(LrSchedule::InvSqrtT, 0.1, 3, 2) - 0.05).abs() < 1e-15);
        assert!((lr_at(LrSchedule::InvSqrtTk, 0.1, 3, 4) - 0.025).abs() < 1e-15);
        assert_eq!(lr_at(LrSchedule::Constant, 0.3, 99, 4), 0.3);
    }

    #[test]
    fn config_validation_names_constraint() {
        let cfg = TrainingConfig {
            local_iters: 0,
            ..TrainingConfig::default()
        };
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("Q >= 1"), "{msg}");
        assert!(TrainingConfig {
            parties: 1,
            ..TrainingConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainingConfig {
            mu: -1.0,
            ..TrainingConfig::default()
        }
        .validate()
        .is_err());
        TrainingConfig::default().validate().unwrap();
    }

    #[test]
    fn algo_names_roundtrip() {
        for a in [
            AlgoKind::FedSgd,
            AlgoKind::FedBcdParallel,
            AlgoKind::FedBcdSequential,
            AlgoKind::FedPbcdParallel,
        ] {
            assert_eq!(AlgoKind::parse(a.name()).unwrap(), a);
        }
        assert!(AlgoKind::parse("fedavg").is_err());
    }
}
