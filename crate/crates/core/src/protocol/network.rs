//! Simulated links: random per-message latency, FIFO per ordered pair, a
//! deterministic delivery order and a digest log of everything sent.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::world::AgentId;

use super::Payload;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub seq: u64,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub sent: u64,
    pub deliver: u64,
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub tick: u64,
    pub kind: String,
    pub sender: AgentId,
    pub receiver: AgentId,
    pub digest: String,
}

impl LogEntry {
    pub fn tsv(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}",
            self.tick, self.kind, self.sender.0, self.receiver.0, self.digest
        )
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(64);
    for b in Sha256::digest(bytes) {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Debug)]
pub struct Network {
    rng: ChaCha8Rng,
    pub min_latency: u64,
    pub max_latency: u64,
    queue: BTreeMap<(u64, AgentId, u64), Envelope>,
    last_on_pair: BTreeMap<(AgentId, AgentId), u64>,
    next_seq: u64,
    pub log: Vec<LogEntry>,
}

impl Network {
    pub fn new(seed: u64, min_latency: u64, max_latency: u64) -> Self {
        assert!(min_latency <= max_latency, "latency range is empty");
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            min_latency,
            max_latency,
            queue: BTreeMap::new(),
            last_on_pair: BTreeMap::new(),
            next_seq: 0,
            log: Vec::new(),
        }
    }

    pub fn send(&mut self, now: u64, sender: AgentId, receiver: AgentId, payload: Payload) {
        let lat = self.rng.random_range(self.min_latency..=self.max_latency);
        let pair = (sender, receiver);
        let deliver = (now + lat).max(self.last_on_pair.get(&pair).copied().unwrap_or(0));
        self.last_on_pair.insert(pair, deliver);
        let seq = self.next_seq;
        self.next_seq += 1;
        let bytes = serde_json::to_vec(&payload).expect("payload serializes");
        self.log.push(LogEntry {
            tick: now,
            kind: payload.kind().to_string(),
            sender,
            receiver,
            digest: sha256_hex(&bytes),
        });
        self.queue.insert(
            (deliver, sender, seq),
            Envelope {
                seq,
                sender,
                receiver,
                sent: now,
                deliver,
                payload,
            },
        );
    }

    /// Removes and returns every message due by `now`, ordered by delivery
    /// tick, then sender, then send order.
    pub fn take_due(&mut self, now: u64) -> Vec<Envelope> {
        let later = self.queue.split_off(&(now + 1, AgentId(0), 0));
        std::mem::replace(&mut self.queue, later).into_values().collect()
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &Envelope> {
        self.queue.values()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn sent(&self) -> usize {
        self.log.len()
    }

    pub fn log_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.log {
            out.push_str(&e.tsv());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs_stay_fifo_under_random_latency() {
        let mut net = Network::new(3, 0, 5);
        for t in 0..50 {
            net.send(t, AgentId(0), AgentId(1), Payload::Heartbeat);
            net.send(t, AgentId(2), AgentId(1), Payload::WhoIsLeader);
        }
        let mut got = Vec::new();
        for t in 0..60 {
            for e in net.take_due(t) {
                assert!(e.deliver <= t && e.deliver >= e.sent);
                assert!(e.deliver <= e.sent + 5);
                got.push(e);
            }
        }
        assert_eq!(got.len(), 100);
        for sender in [AgentId(0), AgentId(2)] {
            let sent: Vec<u64> = got.iter().filter(|e| e.sender == sender).map(|e| e.sent).collect();
            assert!(sent.windows(2).all(|w| w[0] <= w[1]));
        }
        assert!(net.is_idle());
    }

    #[test]
    fn log_has_digests() {
        let mut net = Network::new(0, 1, 1);
        net.send(4, AgentId(1), AgentId(0), Payload::WhoIsLeader);
        let line = net.log_tsv();
        let cols: Vec<&str> = line.trim_end().split('\t').collect();
        assert_eq!(cols[..4], ["4", "who_is_leader", "1", "0"]);
        assert_eq!(cols[4].len(), 64);
    }
}
