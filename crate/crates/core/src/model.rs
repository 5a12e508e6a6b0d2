//! Losses of the separable form `f(Σₖ xᵢᵏθₖ, yᵢ)`, their derivative with
//! respect to the summed score, and the per-party partial gradients.
//!
//! The regularizer is `γ(θ) = ½‖θ‖²`, so its gradient is `θ` itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::{axpy, dot, DenseMatrix, DenseVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `log(1 + exp(−y·H))` with `y ∈ {−1, +1}`.
    #[serde(alias = "logistic_binary")]
    Logistic,
    /// `½ (H − y)²`.
    #[serde(alias = "squared_error")]
    Squared,
}

impl LossKind {
    pub fn value(self, h: f64, y: f64) -> f64 {
        match self {
            LossKind::Logistic => softplus(-y * h),
            LossKind::Squared => 0.5 * (h - y) * (h - y),
        }
    }

    /// `∂f/∂H` at `(h, y)`.
    pub fn derivative(self, h: f64, y: f64) -> f64 {
        match self {
            LossKind::Logistic => -y * sigmoid(-y * h),
            LossKind::Squared => h - y,
        }
    }

    /// Upper bound on `∂²f/∂H²`.
    pub fn curvature_bound(self) -> f64 {
        match self {
            LossKind::Logistic => 0.25,
            LossKind::Squared => 1.0,
        }
    }

    pub fn validate_labels(self, labels: &[f64]) -> Result<()> {
        for (index, &value) in labels.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::Label {
                    index,
                    value,
                    reason: "labels must be finite",
                });
            }
            if self == LossKind::Logistic && value != 1.0 && value != -1.0 {
                return Err(Error::Label {
                    index,
                    value,
                    reason: "logistic labels must be -1 or +1",
                });
            }
        }
        Ok(())
    }

    /// Moves a derivative `g = f′(H)` to `f′(H + delta)` without the label.
    ///
    /// The label is implied by `g`: for squared loss `f′` is `H − y`, so the
    /// shift is additive; for logistic loss `sign(g) = −y` and
    /// `|g| = 1/(1 + e^{yH})` recovers the margin `yH`.
    pub fn shift_derivative(self, g: f64, delta: f64) -> f64 {
        if delta == 0.0 {
            return g;
        }
        match self {
            LossKind::Squared => g + delta,
            LossKind::Logistic => {
                if g == 0.0 {
                    return 0.0;
                }
                let y = -g.signum();
                let a = g.abs();
                let margin = (-a).ln_1p() - a.ln();
                -y * sigmoid(-(margin + y * delta))
            }
        }
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// One party's parameter block `θₖ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBlock {
    pub party_id: usize,
    pub theta: DenseVector,
}

impl ModelBlock {
    pub fn new(party_id: usize, theta: DenseVector) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::Shape(format!("party {party_id} has an empty block")));
        }
        Ok(Self { party_id, theta })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }
}

/// Per-sample partial scores `Hᵢᵏ = xᵢᵏ·θₖ` over a minibatch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartialScores {
    pub values: DenseVector,
    pub batch_ids: Vec<usize>,
}

/// Per-sample `g(Hᵢ, yᵢ)` over a minibatch, as broadcast by the label party.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradSignal {
    pub values: DenseVector,
    pub batch_ids: Vec<usize>,
}

impl GradSignal {
    pub fn new(values: DenseVector, batch_ids: Vec<usize>) -> Result<Self> {
        if values.len() != batch_ids.len() {
            return Err(Error::Shape(format!(
                "{} signal values for {} samples",
                values.len(),
                batch_ids.len()
            )));
        }
        Ok(Self { values, batch_ids })
    }
}

pub fn partial_scores(
    block: &ModelBlock,
    features: &DenseMatrix,
    batch: &[usize],
) -> Result<PartialScores> {
    if features.cols() != block.dim() {
        return Err(Error::Shape(format!(
            "party {} holds {} feature columns but a block of length {}",
            block.party_id,
            features.cols(),
            block.dim()
        )));
    }
    let mut values = Vec::with_capacity(batch.len());
    for &i in batch {
        if i >= features.rows() {
            return Err(Error::Shape(format!(
                "sample {i} outside 0..{}",
                features.rows()
            )));
        }
        values.push(dot(features.row(i), block.theta.as_slice()));
    }
    Ok(PartialScores {
        values: DenseVector::from_raw(values),
        batch_ids: batch.to_vec(),
    })
}

/// `g(Hᵢ, yᵢ) = ∂f/∂Hᵢ` for every sample.
pub fn grad_signal(loss: LossKind, h_total: &DenseVector, labels: &DenseVector) -> Result<DenseVector> {
    if h_total.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            h_total.len(),
            labels.len()
        )));
    }
    loss.validate_labels(labels.as_slice())?;
    Ok(DenseVector::from_raw(
        h_total
            .iter()
            .zip(labels.iter())
            .map(|(&h, &y)| loss.derivative(h, y))
            .collect(),
    ))
}

/// `(1/|S|)·Σᵢ gᵢ·xᵢᵏ + λ·θₖ`.
pub fn partial_gradient(
    block: &ModelBlock,
    features: &DenseMatrix,
    gsig: &GradSignal,
    lambda: f64,
) -> Result<DenseVector> {
    if gsig.batch_ids.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if features.cols() != block.dim() {
        return Err(Error::Shape(format!(
            "party {} holds {} feature columns but a block of length {}",
            block.party_id,
            features.cols(),
            block.dim()
        )));
    }
    let mut acc = vec![0.0; block.dim()];
    for (&i, &g) in gsig.batch_ids.iter().zip(gsig.values.iter()) {
        if i >= features.rows() {
            return Err(Error::Shape(format!(
                "sample {i} outside 0..{}",
                features.rows()
            )));
        }
        axpy(g, features.row(i), &mut acc);
    }
    let scale = 1.0 / gsig.batch_ids.len() as f64;
    for (a, t) in acc.iter_mut().zip(block.theta.iter()) {
        *a = *a * scale + lambda * t;
    }
    Ok(DenseVector::from_raw(acc))
}

/// Mean sample loss plus `λ·Σₖ ½‖θₖ‖²`.
pub fn full_loss(
    loss: LossKind,
    h_total: &DenseVector,
    labels: &DenseVector,
    all_blocks: &[ModelBlock],
    lambda: f64,
) -> Result<f64> {
    if h_total.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            h_total.len(),
            labels.len()
        )));
    }
    let data = if h_total.is_empty() {
        0.0
    } else {
        h_total
            .iter()
            .zip(labels.iter())
            .map(|(&h, &y)| loss.value(h, y))
            .sum::<f64>()
            / h_total.len() as f64
    };
    let reg: f64 = all_blocks
        .iter()
        .map(|b| 0.5 * b.theta.dot(&b.theta))
        .sum();
    Ok(data + lambda * reg)
}

/// Local feature transformation applied before the linear layer.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalEncoder {
    #[default]
    Identity,
    /// Any named nonlinearity; not implemented.
    Other(String),
}

pub fn local_encoder_apply(encoder: &LocalEncoder, features: &DenseMatrix) -> Result<DenseMatrix> {
    match encoder {
        LocalEncoder::Identity => Ok(features.clone()),
        LocalEncoder::Other(name) => Err(Error::Unsupported(format!(
            "local encoder `{name}`; only the identity map is available"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::SeededRng;

    fn v(xs: &[f64]) -> DenseVector {
        DenseVector::new(xs.to_vec()).unwrap()
    }

    fn block(xs: &[f64]) -> ModelBlock {
        ModelBlock::new(0, v(xs)).unwrap()
    }

    #[test]
    fn scores_examples() {
        let rows = DenseMatrix::from_rows(&[vec![2.0, 3.0], vec![-1.0, 5.0]]).unwrap();
        let s = partial_scores(&block(&[0.0, 0.0]), &rows, &[0, 1]).unwrap();
        assert_eq!(s.values.as_slice(), &[0.0, 0.0]);
        let s = partial_scores(&block(&[1.0, -1.0]), &rows, &[0]).unwrap();
        assert_eq!(s.values.as_slice(), &[-1.0]);
        let rows = DenseMatrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 8.0]]).unwrap();
        let s = partial_scores(&block(&[0.5, 0.25]), &rows, &[0, 1]).unwrap();
        assert_eq!(s.values.as_slice(), &[2.0, 2.0]);
        assert!(matches!(
            partial_scores(&block(&[1.0]), &rows, &[0]),
            Err(Error::Shape(_))
        ));
        assert!(partial_scores(&block(&[1.0, 1.0]), &rows, &[2]).is_err());
    }

    #[test]
    fn signal_examples() {
        let g = grad_signal(LossKind::Logistic, &v(&[0.0]), &v(&[1.0])).unwrap();
        assert_eq!(g[0], -0.5);
        let g = grad_signal(LossKind::Squared, &v(&[3.0]), &v(&[1.0])).unwrap();
        assert_eq!(g[0], 2.0);
        assert!(matches!(
            grad_signal(LossKind::Logistic, &v(&[0.0]), &v(&[0.0])),
            Err(Error::Label { .. })
        ));
    }

    #[test]
    fn logistic_signal_matches_finite_difference() {
        let (h, y, step) = (2.0, -1.0, 1e-5);
        let fd = (LossKind::Logistic.value(h + step, y) - LossKind::Logistic.value(h - step, y))
            / (2.0 * step);
        let g = grad_signal(LossKind::Logistic, &v(&[h]), &v(&[y])).unwrap();
        assert!((g[0] - fd).abs() < 1e-7);
    }

    #[test]
    fn squared_signal_is_linear_in_residual() {
        let h = v(&[1.0, 4.0, -2.5]);
        let y = v(&[0.5, 1.0, 3.0]);
        let g = grad_signal(LossKind::Squared, &h, &y).unwrap();
        for i in 0..3 {
            assert_eq!(g[i], h[i] - y[i]);
        }
    }

    #[test]
    fn gradient_examples() {
        let x = DenseMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let zero = GradSignal::new(v(&[0.0]), vec![0]).unwrap();
        assert_eq!(
            partial_gradient(&block(&[0.3, 0.4]), &x, &zero, 0.0).unwrap().as_slice(),
            &[0.0, 0.0]
        );
        let half = GradSignal::new(v(&[0.5]), vec![0]).unwrap();
        assert_eq!(
            partial_gradient(&block(&[0.0, 0.0]), &x, &half, 0.0).unwrap().as_slice(),
            &[0.5, 1.0]
        );
        let empty = GradSignal::new(v(&[]), vec![]).unwrap();
        assert!(matches!(
            partial_gradient(&block(&[0.0, 0.0]), &x, &empty, 0.0),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn gradient_matches_finite_difference_on_batch() {
        let mut rng = SeededRng::new(5, 0);
        let n = 8;
        let x = DenseMatrix::new(n, 3, (0..n * 3).map(|_| rng.normal()).collect()).unwrap();
        let y = v(&(0..n).map(|_| if rng.uniform() < 0.5 { -1.0 } else { 1.0 }).collect::<Vec<_>>());
        let theta: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
        let batch: Vec<usize> = (0..n).collect();
        let lambda = 0.1;
        let objective = |t: &[f64]| {
            let b = block(t);
            let h = partial_scores(&b, &x, &batch).unwrap().values;
            full_loss(LossKind::Logistic, &h, &y, &[b], lambda).unwrap()
        };
        let b = block(&theta);
        let h = partial_scores(&b, &x, &batch).unwrap().values;
        let g = grad_signal(LossKind::Logistic, &h, &y).unwrap();
        let grad = partial_gradient(&b, &x, &GradSignal::new(g, batch.clone()).unwrap(), lambda).unwrap();
        for j in 0..3 {
            let mut plus = theta.clone();
            let mut minus = theta.clone();
            plus[j] += 1e-5;
            minus[j] -= 1e-5;
            let fd = (objective(&plus) - objective(&minus)) / 2e-5;
            assert!((grad[j] - fd).abs() <= 1e-5 * fd.abs().max(1e-3));
        }
    }

    #[test]
    fn loss_examples() {
        let blocks = [block(&[0.0, 0.0])];
        let l = full_loss(LossKind::Logistic, &v(&[0.0, 0.0]), &v(&[1.0, -1.0]), &blocks, 0.3).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let l = full_loss(LossKind::Squared, &v(&[1.5, 2.0]), &v(&[1.5, 2.0]), &blocks, 0.0).unwrap();
        assert_eq!(l, 0.0);
        let l = full_loss(LossKind::Squared, &v(&[1.0]), &v(&[1.0]), &[block(&[3.0, 4.0])], 1.0).unwrap();
        assert_eq!(l, 12.5);
        assert!(full_loss(LossKind::Squared, &v(&[1.0]), &v(&[]), &blocks, 0.0).is_err());
    }

    #[test]
    fn shifted_derivative_matches_direct() {
        for loss in [LossKind::Logistic, LossKind::Squared] {
            for &(h, y) in &[(0.3, 1.0), (-2.0, -1.0), (4.0, -1.0), (-7.5, 1.0), (12.0, 1.0)] {
                for &delta in &[0.0, 0.25, -1.3, 3.0] {
                    let g = loss.derivative(h, y);
                    let shifted = loss.shift_derivative(g, delta);
                    let direct = loss.derivative(h + delta, y);
                    assert!((shifted - direct).abs() < 1e-12, "{loss:?} h={h} y={y} d={delta}");
                }
            }
        }
    }

    #[test]
    fn encoder_scope() {
        let m = DenseMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert_eq!(local_encoder_apply(&LocalEncoder::Identity, &m).unwrap(), m);
        let empty = DenseMatrix::zeros(0, 2);
        assert_eq!(local_encoder_apply(&LocalEncoder::Identity, &empty).unwrap(), empty);
        assert!(matches!(
            local_encoder_apply(&LocalEncoder::Other("cnn".into()), &m),
            Err(Error::Unsupported(_))
        ));
    }
}
