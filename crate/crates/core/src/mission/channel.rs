//! In-process message channel with configurable latency and loss.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::mapstore::{BlockPayload, MapSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentId {
    Ground,
    Aerial,
}

impl AgentId {
    pub fn name(self) -> &'static str {
        match self {
            AgentId::Ground => "ground",
            AgentId::Aerial => "aerial",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    /// Serialized handoff package (wire format).
    Handoff(Vec<u8>),
    HandoffAck,
    /// Start of a map sync round: the sender's summary.
    SyncRequest(MapSummary),
    /// Blocks the sender believes the receiver lacks, plus the sender's
    /// summary; `done` marks that the sender itself needs nothing more.
    SyncBlocks {
        blocks: Vec<BlockPayload>,
        summary: MapSummary,
        done: bool,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Handoff(_) => "handoff",
            Message::HandoffAck => "handoff_ack",
            Message::SyncRequest(_) => "sync_request",
            Message::SyncBlocks { .. } => "sync_blocks",
        }
    }
}

#[derive(Debug, Clone)]
struct Envelope {
    deliver_at: f64,
    to: AgentId,
    msg: Message,
}

/// FIFO channel: messages arrive `latency` seconds after sending unless
/// dropped at send time. Delivery order is send order.
#[derive(Debug, Clone)]
pub struct Channel {
    pub latency: f64,
    pub drop_probability: f64,
    queue: VecDeque<Envelope>,
}

impl Channel {
    pub fn new(latency: f64, drop_probability: f64) -> Self {
        Self {
            latency,
            drop_probability,
            queue: VecDeque::new(),
        }
    }

    /// Returns false when the message was dropped.
    pub fn send(&mut self, now: f64, to: AgentId, msg: Message, rng: &mut ChaCha8Rng) -> bool {
        if self.drop_probability > 0.0 && rng.random_range(0.0..1.0) < self.drop_probability {
            return false;
        }
        self.queue.push_back(Envelope {
            deliver_at: now + self.latency,
            to,
            msg,
        });
        true
    }

    /// Messages due at or before `now`, in send order.
    pub fn deliver(&mut self, now: f64) -> Vec<(AgentId, Message)> {
        let mut out = Vec::new();
        while let Some(e) = self.queue.front() {
            if e.deliver_at <= now + 1e-12 {
                let e = self.queue.pop_front().unwrap();
                out.push((e.to, e.msg));
            } else {
                break;
            }
        }
        out
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn latency_is_respected() {
        let mut ch = Channel::new(0.2, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(ch.send(0.0, AgentId::Aerial, Message::HandoffAck, &mut rng));
        assert!(ch.deliver(0.1).is_empty());
        let got = ch.deliver(0.2);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, AgentId::Aerial);
    }

    #[test]
    fn drops_are_deterministic_per_seed() {
        let mut count_a = 0;
        let mut count_b = 0;
        for (count, seed) in [(&mut count_a, 9u64), (&mut count_b, 9u64)] {
            let mut ch = Channel::new(0.0, 0.5);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..100 {
                if ch.send(0.0, AgentId::Ground, Message::HandoffAck, &mut rng) {
                    *count += 1;
                }
            }
        }
        assert_eq!(count_a, count_b);
        assert!(count_a > 20 && count_a < 80);
    }
}
