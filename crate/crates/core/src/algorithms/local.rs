use crate::error::{Error, Result};
use crate::model::{partial_gradient, partial_scores, LossKind, ModelBlock};
use crate::numkit::DenseVector;
use crate::protocol::{PartyState, PartyView};

/// Result of one party's local phase: the final block and `θₖ` after every step.
#[derive(Debug, Clone)]
pub struct LocalTrace {
    pub block: ModelBlock,
    pub steps: Vec<DenseVector>,
}

/// Runs `q` gradient steps on party `party`'s block over the batch frozen in
/// `view`.
///
/// The first step uses the exchanged derivative as is. Later steps recompute
/// the party's own scores from the current block and combine them with the
/// other parties' contributions as of the last exchange. With `mu > 0` each
/// step adds `mu·(θ − anchor)`.
#[allow(clippy::too_many_arguments)]
pub fn local_update_block(
    party: &PartyState,
    view: &PartyView,
    loss: LossKind,
    q: usize,
    eta: f64,
    lambda: f64,
    mu: f64,
    anchor: &DenseVector,
    round: usize,
) -> Result<LocalTrace> {
    if anchor.len() != party.block.dim() {
        return Err(Error::Shape(format!(
            "anchor of length {} for block of length {}",
            anchor.len(),
            party.block.dim()
        )));
    }
    let batch = view.batch_ids().to_vec();
    let mut block = party.block.clone();
    let mut steps = Vec::with_capacity(q);
    for step in 0..q {
        let signal = if step == 0 {
            view.signal().clone()
        } else {
            let own = partial_scores(&block, &party.features, &batch)?.values;
            view.fresh_signal(loss, &own)?
        };
        let grad = partial_gradient(&block, &party.features, &signal, lambda)?;
        let theta = block.theta.as_mut_slice();
        if mu > 0.0 {
            for ((t, g), a) in theta.iter_mut().zip(grad.iter()).zip(anchor.iter()) {
                *t -= eta * (g + mu * (*t - a));
            }
        } else {
            for (t, g) in theta.iter_mut().zip(grad.iter()) {
                *t -= eta * g;
            }
        }
        if !block.theta.is_finite() {
            return Err(Error::NumericalDivergence {
                party: party.id,
                round,
            });
        }
        steps.push(block.theta.clone());
    }
    Ok(LocalTrace { block, steps })
}
