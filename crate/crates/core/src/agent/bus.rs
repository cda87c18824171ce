//! Shared timestamped broadcast medium.
//!
//! Drop decisions come from a counter-based stream keyed by (sender,
//! per-sender sequence), so the outcome does not depend on the order in
//! which concurrent senders publish.

use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::prediction::PeerState;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BusConfig {
    /// Delay between send and earliest delivery, seconds.
    pub latency: f64,
    pub drop_probability: f64,
}

impl Default for BusConfig {
    fn default() -> Self {
        Self { latency: 0.0, drop_probability: 0.0 }
    }
}

impl BusConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.latency >= 0.0 && self.latency.is_finite()) {
            return Err("latency must be finite and non-negative");
        }
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err("drop probability must be in [0, 1]");
        }
        Ok(())
    }
}

/// A state broadcast in flight to one receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusMessage {
    pub payload: PeerState,
    pub send_stamp: f64,
    pub deliver_at: f64,
    pub dropped: bool,
    sender: usize,
    seq: u64,
}

#[derive(Debug, Default)]
struct Queues {
    inbox: Vec<Vec<BusMessage>>,
    sent: Vec<u64>,
    dropped: u64,
}

#[derive(Debug)]
pub struct Bus {
    cfg: BusConfig,
    seed: u64,
    queues: Mutex<Queues>,
}

impl Bus {
    pub fn new(receivers: usize, cfg: BusConfig, seed: u64) -> Self {
        Self { cfg, seed, queues: Mutex::new(Queues { inbox: vec![Vec::new(); receivers], sent: vec![0; receivers], dropped: 0 }) }
    }

    pub fn config(&self) -> BusConfig {
        self.cfg
    }

    /// Sends `payload` from `sender` to every other participant.
    pub fn publish(&self, sender: usize, payload: PeerState) {
        let mut q = self.queues.lock().expect("bus lock");
        let receivers = q.inbox.len();
        let seq = q.sent[sender];
        q.sent[sender] += 1;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((sender as u64) << 40) | seq);
        for r in 0..receivers {
            // Draw for every slot, including the sender's, so a receiver's
            // outcome is fixed by its index alone.
            let roll: f64 = rng.random();
            if r == sender {
                continue;
            }
            let dropped = self.cfg.drop_probability > 0.0 && roll < self.cfg.drop_probability;
            if dropped {
                q.dropped += 1;
                continue;
            }
            let msg = BusMessage {
                send_stamp: payload.stamp,
                deliver_at: payload.stamp + self.cfg.latency,
                payload: payload.clone(),
                dropped,
                sender,
                seq,
            };
            q.inbox[r].push(msg);
        }
    }

    /// Removes and returns the receiver's messages sent strictly before
    /// `now` whose delivery time has come, in (delivery, sender, seq) order.
    pub fn drain(&self, receiver: usize, now: f64) -> Vec<BusMessage> {
        let mut q = self.queues.lock().expect("bus lock");
        let inbox = &mut q.inbox[receiver];
        let (mut ready, keep): (Vec<_>, Vec<_>) = inbox.drain(..).partition(|m| m.send_stamp < now - 1e-12 && m.deliver_at <= now + 1e-12);
        *inbox = keep;
        ready.sort_by(|a, b| a.deliver_at.total_cmp(&b.deliver_at).then(a.sender.cmp(&b.sender)).then(a.seq.cmp(&b.seq)));
        ready
    }

    pub fn dropped_count(&self) -> u64 {
        self.queues.lock().expect("bus lock").dropped
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn state(t: f64, x: f64) -> PeerState {
        PeerState { stamp: t, position: Point2::new(x, 0.0), velocity: Point2::ORIGIN, acceleration: Point2::ORIGIN, size: vec![0.3] }
    }

    #[test]
    fn zero_latency_arrives_next_tick() {
        let bus = Bus::new(3, BusConfig::default(), 1);
        bus.publish(0, state(0.0, 1.0));
        assert!(bus.drain(1, 0.0).is_empty());
        let got = bus.drain(1, 0.04);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].payload, state(0.0, 1.0));
        assert!(bus.drain(0, 0.04).is_empty());
        assert_eq!(bus.drain(2, 0.04).len(), 1);
    }

    #[test]
    fn latency_delays_delivery() {
        let bus = Bus::new(2, BusConfig { latency: 0.1, drop_probability: 0.0 }, 1);
        bus.publish(0, state(0.0, 1.0));
        assert!(bus.drain(1, 0.08).is_empty());
        assert_eq!(bus.drain(1, 0.1).len(), 1);
    }

    #[test]
    fn certain_drop_starves() {
        let bus = Bus::new(2, BusConfig { latency: 0.0, drop_probability: 1.0 }, 1);
        for k in 0..10 {
            bus.publish(0, state(k as f64 * 0.1, 1.0));
        }
        assert!(bus.drain(1, 5.0).is_empty());
        assert_eq!(bus.dropped_count(), 10);
    }

    #[test]
    fn drops_do_not_depend_on_publish_order() {
        let cfg = BusConfig { latency: 0.0, drop_probability: 0.5 };
        let a = Bus::new(4, cfg, 7);
        let b = Bus::new(4, cfg, 7);
        for k in 0..50 {
            let t = k as f64 * 0.1;
            for s in 0..4 {
                a.publish(s, state(t, s as f64));
            }
            for s in (0..4).rev() {
                b.publish(s, state(t, s as f64));
            }
        }
        for r in 0..4 {
            assert_eq!(a.drain(r, 100.0), b.drain(r, 100.0));
        }
        let d = a.dropped_count() as f64 / (50.0 * 12.0);
        assert!((0.35..0.65).contains(&d));
    }
}
