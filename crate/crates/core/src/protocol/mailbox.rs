use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numkit::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    /// A party's partial scores `Hᵏ`.
    HScores,
    /// The label party's `g(H, y)` values.
    GSignal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExchangeMessage {
    pub sender: usize,
    pub receiver: usize,
    /// Sync round.
    pub round: usize,
    /// Exchange index within the round.
    pub phase: usize,
    pub kind: PayloadKind,
    pub values: DenseVector,
    pub batch_ids: Vec<usize>,
}

type Key = (usize, usize, usize, usize);

/// In-process message store keyed by `(round, phase, sender, receiver)`.
#[derive(Debug, Default)]
pub struct Mailbox {
    slots: Mutex<BTreeMap<Key, ExchangeMessage>>,
}

impl Mailbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn post(&self, msg: ExchangeMessage) -> Result<()> {
        if msg.sender == msg.receiver {
            return Err(Error::Protocol(format!(
                "party {} addressed a message to itself",
                msg.sender
            )));
        }
        let key = (msg.round, msg.phase, msg.sender, msg.receiver);
        let mut slots = self.slots.lock().expect("mailbox lock poisoned");
        if slots.contains_key(&key) {
            return Err(Error::Protocol(format!(
                "duplicate message {}→{} in round {} phase {}",
                msg.sender, msg.receiver, msg.round, msg.phase
            )));
        }
        slots.insert(key, msg);
        Ok(())
    }

    pub fn take(&self, round: usize, phase: usize, sender: usize, receiver: usize) -> Result<ExchangeMessage> {
        self.slots
            .lock()
            .expect("mailbox lock poisoned")
            .remove(&(round, phase, sender, receiver))
            .ok_or_else(|| {
                Error::Protocol(format!(
                    "no message {sender}→{receiver} in round {round} phase {phase}"
                ))
            })
    }

    pub fn pending(&self) -> usize {
        self.slots.lock().expect("mailbox lock poisoned").len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(sender: usize, receiver: usize) -> ExchangeMessage {
        ExchangeMessage {
            sender,
            receiver,
            round: 0,
            phase: 0,
            kind: PayloadKind::HScores,
            values: DenseVector::zeros(1),
            batch_ids: vec![0],
        }
    }

    #[test]
    fn post_take_roundtrip() {
        let mb = Mailbox::new();
        mb.post(msg(0, 1)).unwrap();
        assert_eq!(mb.pending(), 1);
        assert_eq!(mb.take(0, 0, 0, 1).unwrap(), msg(0, 1));
        assert!(mb.take(0, 0, 0, 1).is_err());
    }

    #[test]
    fn rejects_self_and_duplicate() {
        let mb = Mailbox::new();
        assert!(mb.post(msg(1, 1)).is_err());
        mb.post(msg(0, 1)).unwrap();
        assert!(mb.post(msg(0, 1)).is_err());
    }

    #[test]
    fn concurrent_producers() {
        let mb = Mailbox::new();
        std::thread::scope(|s| {
            for k in 0..8 {
                let mb = &mb;
                s.spawn(move || mb.post(msg(k, 8)).unwrap());
            }
        });
        assert_eq!(mb.pending(), 8);
    }
}
