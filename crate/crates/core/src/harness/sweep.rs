use std::fmt::Write as _;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::RoundMetrics;
use crate::algorithms::{train, AlgoKind, RunStatus, TrainInputs, TrainingConfig, TrainingObserver};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMetric {
    /// Training loss at or below the target.
    LossBelow,
    /// Evaluation AUC at or above the target.
    AucAbove,
}

impl TargetMetric {
    pub fn reached(self, m: &RoundMetrics, value: f64) -> bool {
        match self {
            TargetMetric::LossBelow => m.full_loss <= value,
            TargetMetric::AucAbove => m.eval_metric.is_some_and(|a| a >= value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub q_values: Vec<usize>,
    pub algos: Vec<AlgoKind>,
    pub target_metric: TargetMetric,
    pub target_value: f64,
    pub max_rounds: usize,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.q_values.is_empty() {
            return Err(Error::Config("sweep needs at least one Q value".into()));
        }
        if self.algos.is_empty() {
            return Err(Error::Config("sweep needs at least one algorithm".into()));
        }
        if self.max_rounds < 1 {
            return Err(Error::Config("sweep max_rounds must be at least 1".into()));
        }
        if self.q_values.contains(&0) {
            return Err(Error::Config("sweep Q values must satisfy Q >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub algo: AlgoKind,
    pub q: usize,
    /// First sync round meeting the target; `None` is DNF.
    pub rounds_to_target: Option<usize>,
    pub status: RunStatus,
    pub final_loss: f64,
    pub final_eval_metric: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
    pub max_rounds: usize,
    pub warnings: Vec<String>,
}

impl SweepTable {
    pub fn rounds(&self, algo: AlgoKind, q: usize) -> Option<Option<usize>> {
        self.cells
            .iter()
            .find(|c| c.algo == algo && c.q == q)
            .map(|c| c.rounds_to_target)
    }

    /// `algo,q,rounds_to_target`, DNF written as `max_rounds + 1`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("algo,q,rounds_to_target\n");
        for c in &self.cells {
            let r = c.rounds_to_target.unwrap_or(self.max_rounds + 1);
            writeln!(s, "{},{},{r}", c.algo.name(), c.q).unwrap();
        }
        s
    }

    /// Fixed-width table, DNF shown as `—`.
    pub fn to_text(&self) -> String {
        let mut s = format!("{:<10} {:>6} {:>8}\n", "algo", "Q", "rounds");
        for c in &self.cells {
            let r = c.rounds_to_target.map_or_else(|| "—".to_string(), |r| r.to_string());
            writeln!(s, "{:<10} {:>6} {:>8}", c.algo.name(), c.q, r).unwrap();
        }
        s
    }
}

struct UntilTarget {
    metric: TargetMetric,
    value: f64,
    hit: Option<usize>,
}

impl TrainingObserver for UntilTarget {
    fn on_round(&mut self, m: &RoundMetrics) -> ControlFlow<()> {
        if self.metric.reached(m, self.value) {
            self.hit = Some(m.sync_round);
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    }
}

fn dedup<T: PartialEq + Copy>(xs: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(xs.len());
    for &x in xs {
        if !out.contains(&x) {
            out.push(x);
        }
    }
    out
}

/// Rounds-to-target for every `(algo, Q)` cell. FedSGD gets one cell at
/// `Q = 1`. A cell that diverges or runs out of rounds is DNF.
pub fn run_sweep(spec: &SweepSpec, base: &TrainingConfig, inputs: TrainInputs<'_>) -> Result<SweepTable> {
    spec.validate()?;
    let mut warnings = Vec::new();
    let qs = dedup(&spec.q_values);
    if qs.len() != spec.q_values.len() {
        warnings.push(format!("duplicate Q values removed: {:?} -> {:?}", spec.q_values, qs));
    }
    let algos = dedup(&spec.algos);
    if algos.len() != spec.algos.len() {
        warnings.push("duplicate algorithms removed".to_string());
    }
    let mut cells = Vec::new();
    for &algo in &algos {
        let cell_qs: &[usize] = if algo == AlgoKind::FedSgd { &[1] } else { &qs };
        for &q in cell_qs {
            let cfg = TrainingConfig {
                algo,
                local_iters: q,
                total_sync_rounds: spec.max_rounds,
                ..base.clone()
            };
            let mut obs = UntilTarget {
                metric: spec.target_metric,
                value: spec.target_value,
                hit: None,
            };
            let out = train(&cfg, inputs, &mut obs)?;
            let hit = if spec.target_metric.reached(&out.initial, spec.target_value) {
                Some(0)
            } else {
                obs.hit
            };
            let last = out.last();
            cells.push(SweepCell {
                algo,
                q,
                rounds_to_target: hit,
                status: out.status,
                final_loss: last.full_loss,
                final_eval_metric: last.eval_metric,
            });
        }
    }
    Ok(SweepTable {
        cells,
        max_rounds: spec.max_rounds,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> SweepTable {
        let cell = |q, r| SweepCell {
            algo: AlgoKind::FedBcdParallel,
            q,
            rounds_to_target: r,
            status: RunStatus::Completed,
            final_loss: 0.1,
            final_eval_metric: None,
        };
        SweepTable {
            cells: vec![cell(1, Some(40)), cell(50, None)],
            max_rounds: 100,
            warnings: vec![],
        }
    }

    #[test]
    fn dnf_encodings() {
        let t = table();
        assert_eq!(t.to_csv(), "algo,q,rounds_to_target\nfedbcd_p,1,40\nfedbcd_p,50,101\n");
        assert!(t.to_text().lines().nth(2).unwrap().ends_with('—'));
        assert_eq!(t.rounds(AlgoKind::FedBcdParallel, 50), Some(None));
        assert_eq!(t.rounds(AlgoKind::FedSgd, 1), None);
    }

    #[test]
    fn spec_validation() {
        let spec = SweepSpec {
            q_values: vec![],
            algos: vec![AlgoKind::FedSgd],
            target_metric: TargetMetric::AucAbove,
            target_value: 0.8,
            max_rounds: 10,
        };
        assert!(spec.validate().is_err());
        assert!(SweepSpec { q_values: vec![1], ..spec.clone() }.validate().is_ok());
        assert!(SweepSpec { q_values: vec![1], max_rounds: 0, ..spec }.validate().is_err());
    }
}
