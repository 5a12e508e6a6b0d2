use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{dot, DenseMatrix, DenseVector, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticTask {
    /// `y = sign(x·w* + ε)`
    LogisticSeparable,
    /// `y = x·w* + ε`
    LinearNoisy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub task: SyntheticTask,
    /// Standard deviation of `ε`.
    pub noise: f64,
    pub seed: u64,
    /// Every feature is multiplied by this.
    #[serde(default = "one")]
    pub feature_scale: f64,
    /// Correlation `ρ ∈ [0, 1)` between any two features, through one
    /// factor shared by all columns of a row.
    #[serde(default)]
    pub shared_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl SyntheticSpec {
    pub fn new(n: usize, d: usize, task: SyntheticTask, noise: f64, seed: u64) -> Self {
        Self {
            n,
            d,
            task,
            noise,
            seed,
            feature_scale: 1.0,
            shared_factor: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub features: DenseMatrix,
    pub labels: DenseVector,
    /// The generating weights, `w* ~ N(0, I/d)`.
    pub w_star: DenseVector,
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::Config(format!(
            "synthetic data needs n, d >= 1 (got n = {}, d = {})",
            spec.n, spec.d
        )));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Config(format!("noise must be >= 0, got {}", spec.noise)));
    }
    if !(spec.feature_scale > 0.0 && spec.feature_scale.is_finite()) {
        return Err(Error::Config(format!(
            "feature_scale must be positive, got {}",
            spec.feature_scale
        )));
    }
    if !(0.0..1.0).contains(&spec.shared_factor) {
        return Err(Error::Config(format!(
            "shared_factor must lie in [0, 1), got {}",
            spec.shared_factor
        )));
    }
    let mut rng = SeededRng::new(spec.seed, crate::streams::DATA);
    let w_scale = 1.0 / (spec.d as f64).sqrt();
    let w_star: Vec<f64> = (0..spec.d).map(|_| w_scale * rng.normal()).collect();
    let own = (1.0 - spec.shared_factor).sqrt() * spec.feature_scale;
    let shared = spec.shared_factor.sqrt() * spec.feature_scale;
    let mut x = Vec::with_capacity(spec.n * spec.d);
    let mut y = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let f = rng.normal();
        let start = x.len();
        for _ in 0..spec.d {
            let z = rng.normal();
            x.push(if shared == 0.0 { own * z } else { own * z + shared * f });
        }
        let score = dot(&x[start..], &w_star);
        let eps = spec.noise * rng.normal();
        y.push(match spec.task {
            SyntheticTask::LogisticSeparable => {
                if score + eps >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            SyntheticTask::LinearNoisy => score + eps,
        });
    }
    Ok(SyntheticData {
        features: DenseMatrix::from_raw(spec.n, spec.d, x),
        labels: DenseVector::from_raw(y),
        w_star: DenseVector::from_raw(w_star),
    })
}
