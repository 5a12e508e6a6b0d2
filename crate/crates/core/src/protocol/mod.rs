//! The exchange step: non-label parties send their partial scores to the
//! label party, which answers with the per-sample loss derivative.
//!
//! Messages travel through a [`Mailbox`]; every delivery is counted in the
//! [`CommLedger`].

mod batch;
mod mailbox;

pub use batch::{make_batch_plan, BatchPlan, SamplingMode};
pub use mailbox::{ExchangeMessage, Mailbox, PayloadKind};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{grad_signal, partial_scores, GradSignal, LossKind, ModelBlock, PartialScores};
use crate::numkit::{DenseMatrix, DenseVector, SeededRng};

/// One participant: its feature slice, parameter block and private RNG.
#[derive(Debug, Clone)]
pub struct PartyState {
    pub id: usize,
    pub features: DenseMatrix,
    pub block: ModelBlock,
    /// Present only at the label party.
    pub labels: Option<DenseVector>,
    pub rng: SeededRng,
}

/// Monotone communication counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CommLedger {
    pub sync_rounds: u64,
    pub messages: u64,
    pub scalars_transferred: u64,
}

impl CommLedger {
    fn record(&mut self, msg: &ExchangeMessage) {
        self.messages += 1;
        self.scalars_transferred += msg.values.len() as u64;
    }
}

/// What one party knows after an exchange.
#[derive(Debug, Clone, PartialEq)]
pub enum PartyView {
    /// A party without labels: its own scores at exchange time and the
    /// derivative the label party returned for them.
    Remote {
        own_scores: DenseVector,
        signal: GradSignal,
    },
    /// The label party: every other party's scores, its own, and the labels
    /// of the batch.
    Label {
        received: Vec<DenseVector>,
        own_scores: DenseVector,
        labels: DenseVector,
        signal: GradSignal,
    },
}

impl PartyView {
    pub fn signal(&self) -> &GradSignal {
        match self {
            PartyView::Remote { signal, .. } | PartyView::Label { signal, .. } => signal,
        }
    }

    pub fn batch_ids(&self) -> &[usize] {
        &self.signal().batch_ids
    }

    /// The derivative after this party's own scores moved to `own_now`, with
    /// every other contribution held at its last exchanged value.
    pub fn fresh_signal(&self, loss: LossKind, own_now: &DenseVector) -> Result<GradSignal> {
        match self {
            PartyView::Remote { own_scores, signal } => {
                if own_now.len() != own_scores.len() {
                    return Err(Error::Shape("own score length changed".into()));
                }
                let values = signal
                    .values
                    .iter()
                    .zip(own_now.iter().zip(own_scores.iter()))
                    .map(|(&g, (&now, &then))| loss.shift_derivative(g, now - then))
                    .collect();
                GradSignal::new(DenseVector::from_raw(values), signal.batch_ids.clone())
            }
            PartyView::Label {
                received,
                labels,
                signal,
                ..
            } => {
                let h = sum_scores(received.iter().chain(std::iter::once(own_now)), own_now.len());
                let g = grad_signal(loss, &h, labels)?;
                GradSignal::new(g, signal.batch_ids.clone())
            }
        }
    }
}

/// Elementwise sum in party order.
fn sum_scores<'a>(parts: impl Iterator<Item = &'a DenseVector>, len: usize) -> DenseVector {
    let mut total = vec![0.0; len];
    for p in parts {
        for (t, v) in total.iter_mut().zip(p.iter()) {
            *t += v;
        }
    }
    DenseVector::from_raw(total)
}

/// Outcome of one exchange: every delivered message and each party's view.
#[derive(Debug, Clone)]
pub struct ExchangeRound {
    pub messages: Vec<ExchangeMessage>,
    pub views: Vec<PartyView>,
}

/// Pairwise summary a party sends to each other party in the general form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoreSummary {
    /// The party's raw partial scores.
    Identity,
    Other(String),
}

/// Scores party `party` received from every other party under the general form.
#[derive(Debug, Clone)]
pub struct GeneralView {
    pub party: usize,
    pub received: Vec<(usize, PartialScores)>,
}

/// Runs exchanges over a shared mailbox and keeps the ledger.
#[derive(Debug)]
pub struct Exchanger {
    pub loss: LossKind,
    pub ledger: CommLedger,
    mailbox: Mailbox,
}

impl Exchanger {
    pub fn new(loss: LossKind) -> Self {
        Self {
            loss,
            ledger: CommLedger::default(),
            mailbox: Mailbox::new(),
        }
    }

    fn label_party(parties: &[PartyState]) -> Result<usize> {
        if parties.len() < 2 {
            return Err(Error::Protocol(format!(
                "an exchange needs at least two parties, got {}",
                parties.len()
            )));
        }
        let holders: Vec<usize> = parties
            .iter()
            .filter(|p| p.labels.is_some())
            .map(|p| p.id)
            .collect();
        let last = parties.len() - 1;
        match holders.as_slice() {
            [k] if *k == last && parties[last].id == last => Ok(last),
            [] => Err(Error::Protocol("no party holds the labels".into())),
            _ => Err(Error::Protocol(format!(
                "exactly the last party must hold labels, found holders {holders:?}"
            ))),
        }
    }

    fn deliver(&mut self, msg: ExchangeMessage) -> Result<ExchangeMessage> {
        let (r, ph, s, d) = (msg.round, msg.phase, msg.sender, msg.receiver);
        self.mailbox.post(msg)?;
        let msg = self.mailbox.take(r, ph, s, d)?;
        self.ledger.record(&msg);
        Ok(msg)
    }

    fn check_batch(msg: &ExchangeMessage, batch: &[usize]) -> Result<()> {
        if msg.batch_ids != batch {
            return Err(Error::Protocol(format!(
                "party {} sent scores for a different batch in round {}",
                msg.sender, msg.round
            )));
        }
        Ok(())
    }

    /// Full exchange for the linear form; `2(K−1)` messages.
    pub fn exchange_linear(
        &mut self,
        round: usize,
        phase: usize,
        parties: &[PartyState],
        batch: &[usize],
    ) -> Result<ExchangeRound> {
        let label = Self::label_party(parties)?;
        let mut messages = Vec::with_capacity(2 * label);
        let mut own = Vec::with_capacity(parties.len());
        for p in parties {
            own.push(partial_scores(&p.block, &p.features, batch)?.values);
        }
        let mut received = Vec::with_capacity(label);
        for (k, scores) in own.iter().enumerate().take(label) {
            let msg = self.deliver(ExchangeMessage {
                sender: k,
                receiver: label,
                round,
                phase,
                kind: PayloadKind::HScores,
                values: scores.clone(),
                batch_ids: batch.to_vec(),
            })?;
            Self::check_batch(&msg, batch)?;
            received.push(msg.values.clone());
            messages.push(msg);
        }
        let labels = batch_labels(&parties[label], batch)?;
        let h = sum_scores(received.iter().chain(std::iter::once(&own[label])), batch.len());
        let signal = GradSignal::new(grad_signal(self.loss, &h, &labels)?, batch.to_vec())?;
        let mut views = Vec::with_capacity(parties.len());
        for (k, scores) in own.iter().enumerate().take(label) {
            let msg = self.deliver(ExchangeMessage {
                sender: label,
                receiver: k,
                round,
                phase,
                kind: PayloadKind::GSignal,
                values: signal.values.clone(),
                batch_ids: batch.to_vec(),
            })?;
            views.push(PartyView::Remote {
                own_scores: scores.clone(),
                signal: GradSignal::new(msg.values.clone(), msg.batch_ids.clone())?,
            });
            messages.push(msg);
        }
        views.push(PartyView::Label {
            received,
            own_scores: own[label].clone(),
            labels,
            signal,
        });
        self.ledger.sync_rounds += 1;
        Ok(ExchangeRound { messages, views })
    }

    /// Exchange between party `k` and the label party only, refreshing both
    /// views: `k` sends its current scores, the label party answers with the
    /// derivative at the updated total. Two messages; none when `k` is the
    /// label party.
    pub fn exchange_pair(
        &mut self,
        round: usize,
        phase: usize,
        parties: &[PartyState],
        k: usize,
        views: &mut [PartyView],
    ) -> Result<Vec<ExchangeMessage>> {
        let label = Self::label_party(parties)?;
        if k == label {
            return Ok(Vec::new());
        }
        let batch = views[label].batch_ids().to_vec();
        let scores = partial_scores(&parties[k].block, &parties[k].features, &batch)?.values;
        let up = self.deliver(ExchangeMessage {
            sender: k,
            receiver: label,
            round,
            phase,
            kind: PayloadKind::HScores,
            values: scores.clone(),
            batch_ids: batch.clone(),
        })?;
        Self::check_batch(&up, &batch)?;
        let signal = match &mut views[label] {
            PartyView::Label {
                received,
                own_scores,
                labels,
                signal,
            } => {
                received[k] = up.values.clone();
                let h = sum_scores(received.iter().chain(std::iter::once(&*own_scores)), batch.len());
                *signal = GradSignal::new(grad_signal(self.loss, &h, labels)?, batch.clone())?;
                signal.clone()
            }
            PartyView::Remote { .. } => {
                return Err(Error::Protocol("label party view is not a label view".into()))
            }
        };
        let down = self.deliver(ExchangeMessage {
            sender: label,
            receiver: k,
            round,
            phase,
            kind: PayloadKind::GSignal,
            values: signal.values.clone(),
            batch_ids: batch.clone(),
        })?;
        views[k] = PartyView::Remote {
            own_scores: scores,
            signal: GradSignal::new(down.values.clone(), down.batch_ids.clone())?,
        };
        Ok(vec![up, down])
    }

    /// General form: every party sends a summary to every other party;
    /// `K² − K` messages.
    pub fn exchange_general(
        &mut self,
        round: usize,
        phase: usize,
        parties: &[PartyState],
        batch: &[usize],
        summary: &ScoreSummary,
    ) -> Result<Vec<GeneralView>> {
        if let ScoreSummary::Other(name) = summary {
            return Err(Error::Unsupported(format!(
                "pairwise summary `{name}`; only identity summaries are available"
            )));
        }
        if parties.len() < 2 {
            return Err(Error::Protocol("an exchange needs at least two parties".into()));
        }
        let mut views: Vec<GeneralView> = (0..parties.len())
            .map(|party| GeneralView {
                party,
                received: Vec::with_capacity(parties.len() - 1),
            })
            .collect();
        for sender in parties {
            let scores = partial_scores(&sender.block, &sender.features, batch)?;
            for receiver in 0..parties.len() {
                if receiver == sender.id {
                    continue;
                }
                let msg = self.deliver(ExchangeMessage {
                    sender: sender.id,
                    receiver,
                    round,
                    phase,
                    kind: PayloadKind::HScores,
                    values: scores.values.clone(),
                    batch_ids: batch.to_vec(),
                })?;
                Self::check_batch(&msg, batch)?;
                views[receiver].received.push((
                    sender.id,
                    PartialScores {
                        values: msg.values,
                        batch_ids: msg.batch_ids,
                    },
                ));
            }
        }
        self.ledger.sync_rounds += 1;
        Ok(views)
    }
}

fn batch_labels(party: &PartyState, batch: &[usize]) -> Result<DenseVector> {
    let labels = party
        .labels
        .as_ref()
        .ok_or_else(|| Error::Protocol("label party has no labels".into()))?;
    batch
        .iter()
        .map(|&i| {
            labels
                .as_slice()
                .get(i)
                .copied()
                .ok_or_else(|| Error::Protocol(format!("sample {i} has no label")))
        })
        .collect::<Result<Vec<_>>>()
        .map(DenseVector::from_raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{partial_gradient, LossKind};
    use proptest::prelude::*;

    pub(crate) fn parties(k: usize, n: usize, d: usize, seed: u64, zero: bool) -> Vec<PartyState> {
        let mut rng = SeededRng::new(seed, 0);
        let labels: Vec<f64> = (0..n).map(|_| if rng.uniform() < 0.5 { -1.0 } else { 1.0 }).collect();
        (0..k)
            .map(|id| {
                let features =
                    DenseMatrix::new(n, d, (0..n * d).map(|_| rng.normal()).collect()).unwrap();
                let theta: Vec<f64> = (0..d).map(|_| if zero { 0.0 } else { rng.normal() }).collect();
                PartyState {
                    id,
                    features,
                    block: ModelBlock::new(id, DenseVector::new(theta).unwrap()).unwrap(),
                    labels: (id == k - 1).then(|| DenseVector::new(labels.clone()).unwrap()),
                    rng: SeededRng::new(seed, 100 + id as u64),
                }
            })
            .collect()
    }

    #[test]
    fn two_party_exchange_counts_two() {
        let ps = parties(2, 6, 2, 1, false);
        let mut ex = Exchanger::new(LossKind::Logistic);
        let out = ex.exchange_linear(0, 0, &ps, &[0, 2, 4]).unwrap();
        assert_eq!(ex.ledger.messages, 2);
        assert_eq!(ex.ledger.scalars_transferred, 6);
        assert_eq!(ex.ledger.sync_rounds, 1);
        assert_eq!(out.messages.len(), 2);
        assert_eq!(out.views[0].signal(), out.views[1].signal());
    }

    #[test]
    fn five_party_exchange_counts_eight() {
        let ps = parties(5, 4, 2, 2, false);
        let mut ex = Exchanger::new(LossKind::Squared);
        ex.exchange_linear(0, 0, &ps, &[0, 1]).unwrap();
        assert_eq!(ex.ledger.messages, 8);
    }

    #[test]
    fn zero_parameters_give_minus_half_y() {
        let ps = parties(3, 5, 2, 3, true);
        let mut ex = Exchanger::new(LossKind::Logistic);
        let batch = [0, 1, 2, 3, 4];
        let out = ex.exchange_linear(0, 0, &ps, &batch).unwrap();
        let y = ps[2].labels.as_ref().unwrap();
        for view in &out.views {
            for (g, &i) in view.signal().values.iter().zip(&batch) {
                assert_eq!(*g, -y[i] / 2.0);
            }
        }
    }

    #[test]
    fn missing_label_party_is_a_protocol_error() {
        let mut ps = parties(2, 4, 2, 4, false);
        ps[1].labels = None;
        let mut ex = Exchanger::new(LossKind::Logistic);
        assert!(matches!(ex.exchange_linear(0, 0, &ps, &[0]), Err(Error::Protocol(_))));
        let mut ps = parties(2, 4, 2, 4, false);
        ps[0].labels = ps[1].labels.clone();
        assert!(ex.exchange_linear(0, 0, &ps, &[0]).is_err());
    }

    #[test]
    fn general_exchange_counts() {
        for (k, expected) in [(3, 6), (2, 2)] {
            let ps = parties(k, 4, 2, 5, false);
            let mut ex = Exchanger::new(LossKind::Squared);
            let views = ex.exchange_general(0, 0, &ps, &[0, 1], &ScoreSummary::Identity).unwrap();
            assert_eq!(ex.ledger.messages, expected);
            assert!(views.iter().all(|v| v.received.len() == k - 1));
        }
        let ps = parties(2, 4, 2, 5, false);
        let mut ex = Exchanger::new(LossKind::Squared);
        assert!(matches!(
            ex.exchange_general(0, 0, &ps, &[0], &ScoreSummary::Other("sketch".into())),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn pair_exchange_refreshes_label_view() {
        let mut ps = parties(3, 6, 2, 6, false);
        let mut ex = Exchanger::new(LossKind::Squared);
        let batch = [1, 3, 5];
        let mut views = ex.exchange_linear(0, 0, &ps, &batch).unwrap().views;
        ps[0].block.theta = DenseVector::new(vec![0.7, -0.2]).unwrap();
        let msgs = ex.exchange_pair(0, 1, &ps, 0, &mut views).unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(ex.ledger.messages, 6);
        assert_eq!(ex.ledger.sync_rounds, 1);
        // The label view now agrees with a fresh full exchange.
        let mut fresh = Exchanger::new(LossKind::Squared);
        let full = fresh.exchange_linear(0, 0, &ps, &batch).unwrap();
        assert!(views[2].signal().values.max_abs_diff(&full.views[2].signal().values) < 1e-14);
        assert!(ex.exchange_pair(0, 2, &ps, 2, &mut views).unwrap().is_empty());
    }

    #[test]
    fn remote_fresh_signal_tracks_own_scores() {
        for loss in [LossKind::Logistic, LossKind::Squared] {
            let mut ps = parties(2, 8, 3, 7, false);
            let batch: Vec<usize> = (0..8).collect();
            let mut ex = Exchanger::new(loss);
            let views = ex.exchange_linear(0, 0, &ps, &batch).unwrap().views;
            ps[0].block.theta = DenseVector::new(vec![0.1, 0.2, -0.3]).unwrap();
            let own_now = partial_scores(&ps[0].block, &ps[0].features, &batch).unwrap().values;
            let shifted = views[0].fresh_signal(loss, &own_now).unwrap();
            let direct = Exchanger::new(loss).exchange_linear(0, 0, &ps, &batch).unwrap();
            assert!(shifted.values.max_abs_diff(&direct.views[0].signal().values) < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn ledger_formulas(k in 2usize..=10, seed in 0u64..1000) {
            let ps = parties(k, 3, 1, seed, false);
            let mut ex = Exchanger::new(LossKind::Squared);
            ex.exchange_linear(0, 0, &ps, &[0, 1, 2]).unwrap();
            prop_assert_eq!(ex.ledger.messages, 2 * (k as u64 - 1));
            let mut ex = Exchanger::new(LossKind::Squared);
            ex.exchange_general(0, 0, &ps, &[0, 1, 2], &ScoreSummary::Identity).unwrap();
            prop_assert_eq!(ex.ledger.messages, (k * k - k) as u64);
        }

        #[test]
        fn broadcast_equals_central_signal(k in 2usize..6, seed in 0u64..1000) {
            let ps = parties(k, 10, 2, seed, false);
            let batch: Vec<usize> = (0..10).collect();
            let mut ex = Exchanger::new(LossKind::Logistic);
            let out = ex.exchange_linear(0, 0, &ps, &batch).unwrap();
            let blocks: Vec<_> = ps.iter().map(|p| p.block.clone()).collect();
            let x = DenseMatrix::hstack(&ps.iter().map(|p| p.features.clone()).collect::<Vec<_>>()).unwrap();
            let theta = DenseVector::new(blocks.iter().flat_map(|b| b.theta.iter().copied()).collect()).unwrap();
            let h = x.mul_vec(&theta).unwrap();
            let central = grad_signal(LossKind::Logistic, &h, ps[k - 1].labels.as_ref().unwrap()).unwrap();
            for v in &out.views {
                prop_assert!(v.signal().values.max_abs_diff(&central) <= 1e-12);
            }
        }
    }

    #[test]
    fn partition_average_is_full_gradient() {
        let ps = parties(2, 40, 3, 8, false);
        let plan = make_batch_plan(40, 8, 0, SamplingMode::PartitionCycle, 8).unwrap();
        let mut ex = Exchanger::new(LossKind::Logistic);
        let full: Vec<usize> = (0..40).collect();
        let full_view = ex.exchange_linear(0, 0, &ps, &full).unwrap();
        for k in 0..2 {
            let reference =
                partial_gradient(&ps[k].block, &ps[k].features, full_view.views[k].signal(), 0.1).unwrap();
            let mut avg = vec![0.0; 3];
            for (r, batch) in plan.partition.iter().enumerate() {
                let v = ex.exchange_linear(r + 1, 0, &ps, batch).unwrap();
                let g = partial_gradient(&ps[k].block, &ps[k].features, v.views[k].signal(), 0.1).unwrap();
                for (a, x) in avg.iter_mut().zip(g.iter()) {
                    *a += x / plan.num_batches as f64;
                }
            }
            assert!(reference.max_abs_diff(&DenseVector::new(avg).unwrap()) <= 1e-10);
        }
    }
}
