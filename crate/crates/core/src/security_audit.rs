//! Shadow-training audit of what a party's exchanged scores reveal.
//!
//! For an orthogonal `U` fixing party `k`'s initial block, training on
//! features `xᵏU` from `Uᵀθₖ⁰` produces exactly the same messages as
//! training on `xᵏ`, while the shadow block tracks `Uᵀθₖ` step for step.
//! The audit runs both trainings and checks this to a tolerance; a shear
//! of the features serves as a control that must be detected.

use serde::{Deserialize, Serialize};

use crate::algorithms::{initial_blocks, train, TrainInputs, TrainingConfig, TrainingObserver};
use crate::error::{Error, Result};
use crate::harness::VerticalDataset;
use crate::numkit::{random_orthogonal, sample_ortho_witness, DenseMatrix, DenseVector, OrthoWitness, SeededRng};
use crate::protocol::ExchangeMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditControl {
    /// Orthogonal witnesses fixing `θₖ⁰`; the audit should pass.
    #[default]
    Orthogonal,
    /// The unit shear `I + e₀e₁ᵀ` (determinant 1, not orthogonal); the
    /// audit should fail.
    Shear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub target_party: usize,
    pub trials: usize,
    pub rounds: usize,
    pub local_iters: usize,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub control: AuditControl,
    pub base: TrainingConfig,
}

impl AuditConfig {
    pub fn new(base: TrainingConfig, target_party: usize) -> Self {
        Self {
            target_party,
            trials: 10,
            rounds: 100,
            local_iters: base.local_iters,
            tol_abs: 1e-9,
            tol_rel: 0.0,
            control: AuditControl::Orthogonal,
            base,
        }
    }

    fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            local_iters: self.local_iters,
            total_sync_rounds: self.rounds,
            ..self.base.clone()
        }
    }
}

/// Largest deviations seen during one sync round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundDeviation {
    pub round: usize,
    pub message: f64,
    pub theta: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialResult {
    pub trial: usize,
    pub witness_fingerprint: String,
    pub max_message_deviation: f64,
    pub max_theta_deviation: f64,
    /// Largest `|x̃ − x|` over the party's feature matrix.
    pub feature_shift: f64,
    pub first_failure_round: Option<usize>,
    pub passed: bool,
    pub rounds: Vec<RoundDeviation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub target_party: usize,
    pub algo: String,
    pub local_iters: usize,
    pub sync_rounds: usize,
    pub control: AuditControl,
    pub tol_abs: f64,
    pub tol_rel: f64,
    pub passed: bool,
    pub trials: Vec<TrialResult>,
}

impl AuditReport {
    pub fn max_message_deviation(&self) -> f64 {
        self.trials.iter().map(|t| t.max_message_deviation).fold(0.0, f64::max)
    }

    pub fn max_theta_deviation(&self) -> f64 {
        self.trials.iter().map(|t| t.max_theta_deviation).fold(0.0, f64::max)
    }
}

/// Every row of `features` right-multiplied by `U`.
pub fn transform_dataset(features: &DenseMatrix, witness: &OrthoWitness) -> Result<DenseMatrix> {
    if witness.dim() != features.cols() {
        return Err(Error::Shape(format!(
            "witness of dimension {} for {} feature columns",
            witness.dim(),
            features.cols()
        )));
    }
    features.matmul(&witness.u)
}

/// `count` pairwise-distinct witnesses fixing `θ⁰`.
///
/// With two coordinates the family is only the identity and one reflection,
/// so `count` must be exactly 2 there and the identity is the first member.
pub fn enumerate_witness_family(theta0: &DenseVector, count: usize, rng: &mut SeededRng) -> Result<Vec<OrthoWitness>> {
    if count < 2 {
        return Err(Error::Config(format!("witness family needs count >= 2, got {count}")));
    }
    let d = theta0.len();
    if d < 2 {
        return Err(Error::DimensionTooSmall {
            required: 2,
            actual: d,
        });
    }
    if d == 2 {
        if count > 2 {
            return Err(Error::Config(format!(
                "only 2 orthogonal maps fix a vector in two dimensions, {count} requested"
            )));
        }
        return Ok(vec![
            OrthoWitness::from_inner(theta0, DenseMatrix::identity(1))?,
            sample_ortho_witness(theta0, rng)?,
        ]);
    }
    let mut out: Vec<OrthoWitness> = Vec::with_capacity(count);
    while out.len() < count {
        let w = OrthoWitness::from_inner(theta0, random_orthogonal(d - 1, rng)?)?;
        if w.is_identity() {
            continue;
        }
        if out.iter().all(|o| o.u.max_abs_diff(&w.u) > crate::numkit::NON_IDENTITY_TOL) {
            out.push(w);
        }
    }
    Ok(out)
}

#[derive(Default)]
struct Transcript {
    party: usize,
    messages: Vec<ExchangeMessage>,
    /// `(round, θₖ)` after every local step of the target party.
    steps: Vec<(usize, DenseVector)>,
}

impl TrainingObserver for Transcript {
    fn on_message(&mut self, msg: &ExchangeMessage) {
        self.messages.push(msg.clone());
    }

    fn on_local_step(&mut self, round: usize, party: usize, _step: usize, theta: &DenseVector) {
        if party == self.party {
            self.steps.push((round, theta.clone()));
        }
    }
}

fn record(cfg: &TrainingConfig, data: &VerticalDataset, init: &[DenseVector], party: usize) -> Result<Transcript> {
    let mut t = Transcript {
        party,
        ..Transcript::default()
    };
    train(cfg, TrainInputs::new(data).with_initial(init), &mut t)?;
    Ok(t)
}

fn shear(d: usize) -> DenseMatrix {
    let mut m = DenseMatrix::identity(d);
    m.set(0, 1, 1.0);
    m
}

/// Trains once on the real data and once per trial on party `k`'s
/// transformed features, comparing every exchanged message and party `k`'s
/// block after every local step.
pub fn run_shadow_audit(cfg: &AuditConfig, data: &VerticalDataset) -> Result<AuditReport> {
    let k = cfg.target_party;
    if k >= data.parties() {
        return Err(Error::Config(format!(
            "target party {k} does not exist ({} parties)",
            data.parties()
        )));
    }
    let d_k = data.dims()[k];
    if d_k < 2 {
        return Err(Error::DimensionTooSmall {
            required: 2,
            actual: d_k,
        });
    }
    if cfg.trials < 1 || cfg.rounds < 1 {
        return Err(Error::Config("audit needs at least one trial and one sync round".into()));
    }
    if !(cfg.tol_abs >= 0.0 && cfg.tol_rel >= 0.0) {
        return Err(Error::Config("audit tolerances must be >= 0".into()));
    }
    let tcfg = cfg.training_config();
    tcfg.validate()?;
    let init = initial_blocks(&tcfg, &data.dims());
    if init[k].norm2() == 0.0 {
        return Err(Error::DegenerateInit(k));
    }
    let original = record(&tcfg, data, &init, k)?;

    let mut trials = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let mut rng = SeededRng::new(tcfg.seed, crate::streams::WITNESS + trial as u64);
        let (map, fingerprint) = match cfg.control {
            AuditControl::Orthogonal => {
                let w = sample_ortho_witness(&init[k], &mut rng)?;
                let f = w.fingerprint();
                (w.u, f)
            }
            AuditControl::Shear => (shear(d_k), "shear".to_string()),
        };
        let features = data.slice(k).matmul(&map)?;
        let feature_shift = features.max_abs_diff(data.slice(k));
        let shadow_data = data.with_slice(k, features)?;
        let map_t = map.transpose();
        let mut shadow_init = init.clone();
        shadow_init[k] = map_t.mul_vec(&init[k])?;
        let shadow = record(&tcfg, &shadow_data, &shadow_init, k)?;
        trials.push(compare(cfg, trial, fingerprint, feature_shift, &original, &shadow, &map_t)?);
    }
    Ok(AuditReport {
        target_party: k,
        algo: tcfg.algo.name().to_string(),
        local_iters: tcfg.effective_local_iters(),
        sync_rounds: cfg.rounds,
        control: cfg.control,
        tol_abs: cfg.tol_abs,
        tol_rel: cfg.tol_rel,
        passed: trials.iter().all(|t| t.passed),
        trials,
    })
}

fn compare(
    cfg: &AuditConfig,
    trial: usize,
    witness_fingerprint: String,
    feature_shift: f64,
    original: &Transcript,
    shadow: &Transcript,
    map_t: &DenseMatrix,
) -> Result<TrialResult> {
    let within = |dev: f64, scale: f64| dev <= cfg.tol_abs + cfg.tol_rel * scale;
    let mut rounds: Vec<RoundDeviation> = (0..cfg.rounds)
        .map(|round| RoundDeviation {
            round,
            message: 0.0,
            theta: 0.0,
            passed: true,
        })
        .collect();
    let last = cfg.rounds - 1;

    let n = original.messages.len().max(shadow.messages.len());
    for i in 0..n {
        let (a, b) = match (original.messages.get(i), shadow.messages.get(i)) {
            (Some(a), Some(b)) => (a, b),
            (Some(m), None) | (None, Some(m)) => {
                let r = &mut rounds[m.round.min(last)];
                r.message = f64::INFINITY;
                r.passed = false;
                continue;
            }
            (None, None) => unreachable!(),
        };
        let same_header = (a.round, a.phase, a.sender, a.receiver, a.kind) == (b.round, b.phase, b.sender, b.receiver, b.kind)
            && a.batch_ids == b.batch_ids
            && a.values.len() == b.values.len();
        let dev = if same_header { a.values.max_abs_diff(&b.values) } else { f64::INFINITY };
        let r = &mut rounds[a.round.min(last)];
        r.message = r.message.max(dev);
        r.passed &= within(dev, a.values.norm_inf());
    }

    let n = original.steps.len().max(shadow.steps.len());
    for i in 0..n {
        match (original.steps.get(i), shadow.steps.get(i)) {
            (Some((round, theta)), Some((_, shadow_theta))) => {
                let expected = map_t.mul_vec(theta)?;
                let dev = expected.max_abs_diff(shadow_theta);
                let r = &mut rounds[(*round).min(last)];
                r.theta = r.theta.max(dev);
                r.passed &= within(dev, expected.norm_inf());
            }
            (Some((round, _)), None) | (None, Some((round, _))) => {
                let r = &mut rounds[(*round).min(last)];
                r.theta = f64::INFINITY;
                r.passed = false;
            }
            (None, None) => unreachable!(),
        }
    }

    let first_failure_round = rounds.iter().find(|r| !r.passed).map(|r| r.round);
    Ok(TrialResult {
        trial,
        witness_fingerprint,
        max_message_deviation: rounds.iter().map(|r| r.message).fold(0.0, f64::max),
        max_theta_deviation: rounds.iter().map(|r| r.theta).fold(0.0, f64::max),
        feature_shift,
        first_failure_round,
        passed: first_failure_round.is_none(),
        rounds,
    })
}
