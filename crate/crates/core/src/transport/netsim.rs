//! Deterministic network simulator.
//!
//! Every send either drops (with the configured probability) or is
//! scheduled for delivery at `now + mean ± jitter`, drawn from a seeded
//! RNG. With reordering disabled, delivery times are clamped monotone per
//! (src, dst) link so datagrams arrive FIFO. The same seed and send
//! schedule always produce the identical delivery schedule.

use crate::transport::link::{Link, LinkAddr};
use crate::transport::wire::FLAG_SIM_INJECTED;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSimConfig {
    /// Probability in [0, 1] that a datagram is dropped.
    pub drop_probability: f64,
    pub latency_mean_ms: u64,
    /// Uniform ± jitter applied to the mean.
    pub latency_jitter_ms: u64,
    /// When false, per-link delivery order is forced FIFO.
    pub reorder: bool,
    pub rng_seed: u64,
}

impl Default for NetSimConfig {
    fn default() -> Self {
        NetSimConfig {
            drop_probability: 0.0,
            latency_mean_ms: 0,
            latency_jitter_ms: 0,
            reorder: false,
            rng_seed: 0,
        }
    }
}

impl NetSimConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.drop_probability) {
            return Err(format!(
                "drop_probability {} outside [0, 1]",
                self.drop_probability
            ));
        }
        Ok(())
    }
}

/// Counters for delivered/dropped traffic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimMetrics {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub bytes_delivered: u64,
}

/// One traced datagram (only recorded when tracing is enabled).
#[derive(Debug, Clone)]
pub struct SimTraceEvent {
    pub src: u32,
    pub dst: u32,
    pub sent_at_ms: u64,
    /// None when the datagram was dropped.
    pub delivered_at_ms: Option<u64>,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Scheduled {
    at_ms: u64,
    seq: u64,
    src: u32,
    dst: u32,
    bytes: Vec<u8>,
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at_ms, self.seq).cmp(&(other.at_ms, other.seq))
    }
}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Default)]
struct SimEndpoint {
    domain_id: u8,
    inbox: VecDeque<(u32, Vec<u8>)>,
    blocked: bool,
}

type DropHook = Box<dyn FnMut(u32, u32, &[u8]) -> bool + Send>;

/// The shared simulated network. Participants register endpoints and wrap
/// them in [`SimLink`] handles.
pub struct SimNetwork {
    config: NetSimConfig,
    rng: ChaCha8Rng,
    endpoints: BTreeMap<u32, SimEndpoint>,
    heap: BinaryHeap<Reverse<Scheduled>>,
    fifo_floor: BTreeMap<(u32, u32), u64>,
    next_endpoint: u32,
    next_seq: u64,
    metrics: SimMetrics,
    trace: Option<Vec<SimTraceEvent>>,
    /// Test hook forcing deterministic drops; returning true drops the
    /// datagram before any random draw.
    drop_hook: Option<DropHook>,
}

impl SimNetwork {
    pub fn new(config: NetSimConfig) -> SharedSimNetwork {
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        SharedSimNetwork {
            inner: Arc::new(Mutex::new(SimNetwork {
                config,
                rng,
                endpoints: BTreeMap::new(),
                heap: BinaryHeap::new(),
                fifo_floor: BTreeMap::new(),
                next_endpoint: 0,
                next_seq: 0,
                metrics: SimMetrics::default(),
                trace: None,
                drop_hook: None,
            })),
        }
    }

    fn send(&mut self, src: u32, dst: u32, bytes: &[u8], now_ms: u64) {
        self.metrics.sent += 1;
        if self
            .endpoints
            .get(&src)
            .map(|e| e.blocked)
            .unwrap_or(true)
        {
            self.record_trace(src, dst, now_ms, None, bytes);
            self.metrics.dropped += 1;
            return;
        }
        if let Some(hook) = self.drop_hook.as_mut() {
            if hook(src, dst, bytes) {
                self.record_trace(src, dst, now_ms, None, bytes);
                self.metrics.dropped += 1;
                return;
            }
        }
        if self.config.drop_probability > 0.0
            && self.rng.gen::<f64>() < self.config.drop_probability
        {
            self.record_trace(src, dst, now_ms, None, bytes);
            self.metrics.dropped += 1;
            return;
        }
        let mut at_ms = now_ms + self.config.latency_mean_ms;
        let jitter = self.config.latency_jitter_ms;
        if jitter > 0 {
            let delta = self.rng.gen_range(-(jitter as i64)..=jitter as i64);
            at_ms = at_ms.saturating_add_signed(delta).max(now_ms);
        }
        if !self.config.reorder {
            let floor = self.fifo_floor.entry((src, dst)).or_insert(0);
            at_ms = at_ms.max(*floor);
            *floor = at_ms;
        }
        self.record_trace(src, dst, now_ms, Some(at_ms), bytes);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Scheduled {
            at_ms,
            seq,
            src,
            dst,
            bytes: bytes.to_vec(),
        }));
    }

    fn record_trace(
        &mut self,
        src: u32,
        dst: u32,
        sent_at_ms: u64,
        delivered_at_ms: Option<u64>,
        bytes: &[u8],
    ) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(SimTraceEvent {
                src,
                dst,
                sent_at_ms,
                delivered_at_ms,
                bytes: bytes.to_vec(),
            });
        }
    }

    /// Moves every datagram due at or before `now_ms` into its inbox.
    fn pump(&mut self, now_ms: u64) {
        while let Some(Reverse(head)) = self.heap.peek() {
            if head.at_ms > now_ms {
                break;
            }
            let Reverse(mut delivery) = self.heap.pop().expect("peeked entry");
            let endpoint = match self.endpoints.get_mut(&delivery.dst) {
                Some(e) if !e.blocked => e,
                _ => {
                    self.metrics.dropped += 1;
                    continue;
                }
            };
            if delivery.bytes.len() > 5 {
                delivery.bytes[5] |= FLAG_SIM_INJECTED;
            }
            self.metrics.delivered += 1;
            self.metrics.bytes_delivered += delivery.bytes.len() as u64;
            endpoint.inbox.push_back((delivery.src, delivery.bytes));
        }
    }
}

/// Cloneable handle to a [`SimNetwork`].
#[derive(Clone)]
pub struct SharedSimNetwork {
    inner: Arc<Mutex<SimNetwork>>,
}

impl SharedSimNetwork {
    /// Registers a new endpoint in `domain_id` and returns its link.
    pub fn endpoint(&self, domain_id: u8) -> SimLink {
        let mut net = self.inner.lock().expect("sim lock");
        let id = net.next_endpoint;
        net.next_endpoint += 1;
        net.endpoints.insert(
            id,
            SimEndpoint {
                domain_id,
                ..SimEndpoint::default()
            },
        );
        SimLink {
            net: self.clone(),
            id,
            domain_id,
        }
    }

    /// Advances the network: schedules due deliveries into inboxes.
    pub fn pump(&self, now_ms: u64) {
        self.inner.lock().expect("sim lock").pump(now_ms);
    }

    /// Datagrams scheduled or queued but not yet polled.
    pub fn in_flight(&self) -> usize {
        let net = self.inner.lock().expect("sim lock");
        net.heap.len() + net.endpoints.values().map(|e| e.inbox.len()).sum::<usize>()
    }

    /// Blocks or unblocks an endpoint in both directions (silencing).
    pub fn set_blocked(&self, id: u32, blocked: bool) {
        let mut net = self.inner.lock().expect("sim lock");
        if let Some(e) = net.endpoints.get_mut(&id) {
            e.blocked = blocked;
        }
    }

    pub fn metrics(&self) -> SimMetrics {
        self.inner.lock().expect("sim lock").metrics
    }

    pub fn enable_trace(&self) {
        self.inner.lock().expect("sim lock").trace = Some(Vec::new());
    }

    pub fn take_trace(&self) -> Vec<SimTraceEvent> {
        self.inner
            .lock()
            .expect("sim lock")
            .trace
            .as_mut()
            .map(std::mem::take)
            .unwrap_or_default()
    }

    /// Installs a forced-drop predicate evaluated before the random draw.
    pub fn set_drop_hook(&self, hook: Option<DropHook>) {
        self.inner.lock().expect("sim lock").drop_hook = hook;
    }
}

/// One registered endpoint's view of the simulated network.
pub struct SimLink {
    net: SharedSimNetwork,
    id: u32,
    domain_id: u8,
}

impl SimLink {
    pub fn id(&self) -> u32 {
        self.id
    }
}

impl Link for SimLink {
    fn local_addr(&self) -> LinkAddr {
        LinkAddr::Sim(self.id)
    }

    fn bootstrap_peers(&self) -> Vec<LinkAddr> {
        let net = self.net.inner.lock().expect("sim lock");
        net.endpoints
            .iter()
            .filter(|(&id, e)| id != self.id && e.domain_id == self.domain_id)
            .map(|(&id, _)| LinkAddr::Sim(id))
            .collect()
    }

    fn send(&mut self, to: LinkAddr, bytes: &[u8], now_ms: u64) {
        let LinkAddr::Sim(dst) = to else {
            return;
        };
        let mut net = self.net.inner.lock().expect("sim lock");
        net.send(self.id, dst, bytes, now_ms);
    }

    fn poll(&mut self, _now_ms: u64) -> Vec<(LinkAddr, Vec<u8>)> {
        let mut net = self.net.inner.lock().expect("sim lock");
        let Some(endpoint) = net.endpoints.get_mut(&self.id) else {
            return Vec::new();
        };
        endpoint
            .inbox
            .drain(..)
            .map(|(src, bytes)| (LinkAddr::Sim(src), bytes))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn msg(byte: u8) -> Vec<u8> {
        // Valid-looking header so the sim flag has a slot to land in.
        let mut m = vec![0x4d, 0x44, 0x44, 0x53, 1, 0];
        m.extend_from_slice(&[byte; 12]);
        m
    }

    #[test]
    fn zero_loss_zero_jitter_delivers_at_exact_latency() {
        let net = SimNetwork::new(NetSimConfig {
            latency_mean_ms: 50,
            ..NetSimConfig::default()
        });
        let mut a = net.endpoint(0);
        let mut b = net.endpoint(0);
        a.send(b.local_addr(), &msg(1), 100);
        net.pump(149);
        assert!(b.poll(149).is_empty());
        net.pump(150);
        let got = b.poll(150);
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].0, a.local_addr());
        assert_eq!(got[0].1[5] & FLAG_SIM_INJECTED, FLAG_SIM_INJECTED);
    }

    #[test]
    fn full_loss_delivers_nothing() {
        let net = SimNetwork::new(NetSimConfig {
            drop_probability: 1.0,
            ..NetSimConfig::default()
        });
        let mut a = net.endpoint(0);
        let mut b = net.endpoint(0);
        for i in 0..50 {
            a.send(b.local_addr(), &msg(i), i as u64);
        }
        net.pump(10_000);
        assert!(b.poll(10_000).is_empty());
        assert_eq!(net.metrics().dropped, 50);
    }

    #[test]
    fn identical_seed_and_schedule_identical_deliveries() {
        let run = |seed: u64| -> Vec<(u64, Vec<u8>)> {
            let net = SimNetwork::new(NetSimConfig {
                drop_probability: 0.3,
                latency_mean_ms: 20,
                latency_jitter_ms: 15,
                reorder: true,
                rng_seed: seed,
            });
            let mut a = net.endpoint(0);
            let mut b = net.endpoint(0);
            for i in 0..1000u32 {
                a.send(b.local_addr(), &msg((i % 251) as u8), i as u64);
            }
            let mut out = Vec::new();
            for now in 0..1100 {
                net.pump(now);
                for (_, bytes) in b.poll(now) {
                    out.push((now, bytes));
                }
            }
            out
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42).len(), 1000); // loss actually happened
    }

    #[test]
    fn fifo_clamp_preserves_order_without_reordering() {
        let net = SimNetwork::new(NetSimConfig {
            drop_probability: 0.0,
            latency_mean_ms: 30,
            latency_jitter_ms: 30,
            reorder: false,
            rng_seed: 9,
        });
        let mut a = net.endpoint(0);
        let mut b = net.endpoint(0);
        for i in 0..100u8 {
            a.send(b.local_addr(), &msg(i), i as u64);
        }
        net.pump(1_000);
        let got = b.poll(1_000);
        let order: Vec<u8> = got.iter().map(|(_, bytes)| bytes[6]).collect();
        let sorted: Vec<u8> = (0..100).collect();
        assert_eq!(order, sorted);
    }

    #[test]
    fn blocked_endpoint_is_silenced() {
        let net = SimNetwork::new(NetSimConfig::default());
        let mut a = net.endpoint(0);
        let mut b = net.endpoint(0);
        net.set_blocked(a.id(), true);
        a.send(b.local_addr(), &msg(1), 0);
        net.pump(10);
        assert!(b.poll(10).is_empty());
    }

    #[test]
    fn bootstrap_peers_are_domain_scoped() {
        let net = SimNetwork::new(NetSimConfig::default());
        let a = net.endpoint(0);
        let b = net.endpoint(0);
        let c = net.endpoint(1);
        assert_eq!(a.bootstrap_peers(), vec![b.local_addr()]);
        assert_eq!(c.bootstrap_peers(), Vec::<LinkAddr>::new());
    }
}
