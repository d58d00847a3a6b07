//! In-process topic bus with per-topic FIFO delivery and an optional
//! interceptor per topic.
//!
//! In free-running mode a publish is delivered to every subscriber before
//! `publish` returns. In deterministic mode publishes are queued and
//! released one at a time by [`Bus::deliver_next`], which picks the next
//! topic with a seeded scheduler.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, TryRecvError};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::authchannel::MAX_PAYLOAD;
use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

/// A topic path such as `/drone0/dh_public_key`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Topic(String);

impl Topic {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if !name.starts_with('/') {
            return Err(Error::Config(format!("topic {name:?} must start with '/'")));
        }
        if name.chars().any(char::is_whitespace) {
            return Err(Error::Config(format!("topic {name:?} contains whitespace")));
        }
        Ok(Topic(name))
    }

    /// `/<node_id>/dh_public_key`
    pub fn public_key(node_id: &str) -> Result<Self> {
        Topic::new(format!("/{node_id}/dh_public_key"))
    }

    /// `/<node_id>/authenticated_data`, the inbox of `node_id`.
    pub fn authenticated_data(node_id: &str) -> Result<Self> {
        Topic::new(format!("/{node_id}/authenticated_data"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Envelope {
    pub topic: Topic,
    pub bytes: Vec<u8>,
    pub publish_seq: u64,
    /// Nanoseconds since the bus was created.
    pub timestamp: u64,
}

/// One delivered message, as recorded by a deterministic bus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub topic: Topic,
    pub publish_seq: u64,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct BusConfig {
    /// Largest message accepted by `publish`.
    pub max_message: usize,
    /// Receive timeout used by [`Subscription::recv`].
    pub timeout: Duration,
    /// `Some(seed)` selects deterministic mode.
    pub deterministic_seed: Option<u64>,
}

impl Default for BusConfig {
    fn default() -> Self {
        BusConfig {
            // payload cap plus room for frame headers
            max_message: MAX_PAYLOAD + 4096,
            timeout: DEFAULT_TIMEOUT,
            deterministic_seed: None,
        }
    }
}

impl BusConfig {
    pub fn deterministic(seed: u64) -> Self {
        BusConfig { deterministic_seed: Some(seed), ..Default::default() }
    }
}

pub type Interceptor = Box<dyn FnMut(&Topic, &[u8]) -> Vec<u8> + Send>;

struct Pending {
    publish_seq: u64,
    bytes: Vec<u8>,
    timestamp: u64,
}

#[derive(Default)]
struct TopicState {
    next_seq: u64,
    subscribers: Vec<Sender<Envelope>>,
    interceptor: Option<(u64, Interceptor)>,
    queue: VecDeque<Pending>,
}

impl TopicState {
    fn deliver(&mut self, topic: &Topic, item: Pending) -> Delivery {
        let bytes = match &mut self.interceptor {
            Some((_, f)) => f(topic, &item.bytes),
            None => item.bytes,
        };
        self.subscribers.retain(|tx| {
            tx.send(Envelope {
                topic: topic.clone(),
                bytes: bytes.clone(),
                publish_seq: item.publish_seq,
                timestamp: item.timestamp,
            })
            .is_ok()
        });
        Delivery { topic: topic.clone(), publish_seq: item.publish_seq, bytes }
    }
}

struct State {
    topics: BTreeMap<Topic, TopicState>,
    scheduler: Option<ChaCha20Rng>,
    transcript: Vec<Delivery>,
    next_handle: u64,
}

struct Inner {
    config: BusConfig,
    epoch: Instant,
    state: Mutex<State>,
}

/// Cheap-to-clone handle to a shared bus.
#[derive(Clone)]
pub struct Bus {
    inner: Arc<Inner>,
}

impl fmt::Debug for Bus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Bus")
            .field("deterministic", &self.is_deterministic())
            .field("topics", &self.topic_count())
            .finish()
    }
}

impl Bus {
    pub fn new(config: BusConfig) -> Self {
        let scheduler = config.deterministic_seed.map(ChaCha20Rng::seed_from_u64);
        Bus {
            inner: Arc::new(Inner {
                config,
                epoch: Instant::now(),
                state: Mutex::new(State { topics: BTreeMap::new(), scheduler, transcript: Vec::new(), next_handle: 0 }),
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        // a panicking interceptor poisons the lock; the state itself stays consistent
        self.inner.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn config(&self) -> &BusConfig {
        &self.inner.config
    }

    pub fn is_deterministic(&self) -> bool {
        self.inner.config.deterministic_seed.is_some()
    }

    pub fn topic_count(&self) -> usize {
        self.lock().topics.len()
    }

    /// Publish `bytes` and return the bus-assigned per-topic sequence number.
    pub fn publish(&self, topic: &Topic, bytes: &[u8]) -> Result<u64> {
        if bytes.len() > self.inner.config.max_message {
            return Err(Error::frame(
                0,
                format!("message of {} bytes exceeds the {}-byte bus cap", bytes.len(), self.inner.config.max_message),
            ));
        }
        let timestamp = self.inner.epoch.elapsed().as_nanos() as u64;
        let mut state = self.lock();
        let deterministic = state.scheduler.is_some();
        let entry = state.topics.entry(topic.clone()).or_default();
        let publish_seq = entry.next_seq;
        entry.next_seq += 1;
        let item = Pending { publish_seq, bytes: bytes.to_vec(), timestamp };
        if deterministic {
            entry.queue.push_back(item);
        } else {
            entry.deliver(topic, item);
        }
        Ok(publish_seq)
    }

    pub fn subscribe(&self, topic: &Topic) -> Subscription {
        let (tx, rx) = mpsc::channel();
        self.lock().topics.entry(topic.clone()).or_default().subscribers.push(tx);
        Subscription { topic: topic.clone(), rx, timeout: self.inner.config.timeout }
    }

    /// Route every message on `topic` through `interceptor` until the
    /// returned handle is removed or dropped.
    pub fn install_interceptor(&self, topic: &Topic, interceptor: Interceptor) -> Result<InterceptorHandle> {
        let mut state = self.lock();
        let id = state.next_handle;
        let entry = state.topics.entry(topic.clone()).or_default();
        if entry.interceptor.is_some() {
            return Err(Error::Config(format!("topic {topic} already has an interceptor")));
        }
        entry.interceptor = Some((id, interceptor));
        state.next_handle += 1;
        Ok(InterceptorHandle { bus: self.clone(), topic: topic.clone(), id, removed: false })
    }

    fn remove_interceptor(&self, topic: &Topic, id: u64) {
        let mut state = self.lock();
        if let Some(entry) = state.topics.get_mut(topic) {
            if matches!(entry.interceptor, Some((current, _)) if current == id) {
                entry.interceptor = None;
            }
        }
    }

    /// Deterministic mode: release one queued message from a topic chosen by
    /// the seeded scheduler. Returns `false` when nothing is queued. Always
    /// `false` in free-running mode.
    pub fn deliver_next(&self) -> bool {
        let mut guard = self.lock();
        let state = &mut *guard;
        let Some(rng) = state.scheduler.as_mut() else {
            return false;
        };
        let ready: Vec<Topic> =
            state.topics.iter().filter(|(_, t)| !t.queue.is_empty()).map(|(k, _)| k.clone()).collect();
        if ready.is_empty() {
            return false;
        }
        let topic = &ready[rng.gen_range(0..ready.len())];
        let entry = state.topics.get_mut(topic).expect("ready topic exists");
        let item = entry.queue.pop_front().expect("ready topic has a queued message");
        let delivery = entry.deliver(topic, item);
        state.transcript.push(delivery);
        true
    }

    /// Release every queued message. Returns how many were delivered.
    pub fn deliver_all(&self) -> usize {
        let mut n = 0;
        while self.deliver_next() {
            n += 1;
        }
        n
    }

    /// Messages published but not yet delivered (deterministic mode only).
    pub fn pending(&self) -> usize {
        self.lock().topics.values().map(|t| t.queue.len()).sum()
    }

    /// Delivery order so far. Only deterministic buses record a transcript.
    pub fn transcript(&self) -> Vec<Delivery> {
        self.lock().transcript.clone()
    }
}

/// Removes its interceptor when dropped.
pub struct InterceptorHandle {
    bus: Bus,
    topic: Topic,
    id: u64,
    removed: bool,
}

impl InterceptorHandle {
    pub fn topic(&self) -> &Topic {
        &self.topic
    }

    pub fn remove(mut self) {
        self.bus.remove_interceptor(&self.topic, self.id);
        self.removed = true;
    }
}

impl Drop for InterceptorHandle {
    fn drop(&mut self) {
        if !self.removed {
            self.bus.remove_interceptor(&self.topic, self.id);
        }
    }
}

/// Ordered stream of envelopes published on one topic after subscription.
pub struct Subscription {
    topic: Topic,
    rx: Receiver<Envelope>,
    timeout: Duration,
}

impl Subscription {
    pub fn topic(&self) -> &Topic {
        &self.topic
    }

    /// Blocking receive with the bus default timeout.
    pub fn recv(&self) -> Result<Envelope> {
        self.recv_timeout(self.timeout)
    }

    pub fn recv_timeout(&self, timeout: Duration) -> Result<Envelope> {
        match self.rx.recv_timeout(timeout) {
            Ok(env) => Ok(env),
            Err(RecvTimeoutError::Timeout) | Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Timeout(self.topic.to_string()))
            }
        }
    }

    pub fn try_recv(&self) -> Option<Envelope> {
        match self.rx.try_recv() {
            Ok(env) => Some(env),
            Err(TryRecvError::Empty) | Err(TryRecvError::Disconnected) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(name: &str) -> Topic {
        Topic::new(name).unwrap()
    }

    #[test]
    fn topic_names_are_validated() {
        assert!(Topic::new("/drone0/dh_public_key").is_ok());
        assert!(Topic::new("drone0").is_err());
        assert!(Topic::new("/drone 0").is_err());
        assert_eq!(Topic::public_key("drone1").unwrap().as_str(), "/drone1/dh_public_key");
        assert_eq!(Topic::authenticated_data("drone1").unwrap().as_str(), "/drone1/authenticated_data");
    }

    #[test]
    fn new_bus_is_empty_and_isolated() {
        let a = Bus::new(BusConfig::default());
        assert_eq!(a.topic_count(), 0);
        a.publish(&t("/x"), b"1").unwrap();
        let b = Bus::new(BusConfig::default());
        assert_eq!(b.topic_count(), 0);
        let sub = b.subscribe(&t("/x"));
        assert!(sub.try_recv().is_none());
    }

    #[test]
    fn delivery_is_lossless_and_fifo() {
        let bus = Bus::new(BusConfig::default());
        let sub = bus.subscribe(&t("/x"));
        bus.publish(&t("/x"), b"first").unwrap();
        bus.publish(&t("/x"), b"second").unwrap();
        let a = sub.try_recv().unwrap();
        let b = sub.try_recv().unwrap();
        assert_eq!(a.bytes, b"first");
        assert_eq!(b.bytes, b"second");
        assert!(a.publish_seq < b.publish_seq);
    }

    #[test]
    fn no_replay_before_subscription_and_fan_out() {
        let bus = Bus::new(BusConfig::default());
        bus.publish(&t("/x"), b"early").unwrap();
        let s1 = bus.subscribe(&t("/x"));
        let s2 = bus.subscribe(&t("/x"));
        assert!(s1.try_recv().is_none());
        bus.publish(&t("/x"), b"late").unwrap();
        assert_eq!(s1.try_recv().unwrap().bytes, b"late");
        assert_eq!(s2.try_recv().unwrap().bytes, b"late");
    }

    #[test]
    fn oversized_publish_is_rejected() {
        let bus = Bus::new(BusConfig { max_message: 4, ..Default::default() });
        assert!(matches!(bus.publish(&t("/x"), b"12345"), Err(Error::Frame { .. })));
    }

    #[test]
    fn receive_timeout_is_reported() {
        let bus = Bus::new(BusConfig::default());
        let sub = bus.subscribe(&t("/quiet"));
        assert!(matches!(sub.recv_timeout(Duration::from_millis(10)), Err(Error::Timeout(_))));
    }

    #[test]
    fn interceptors_rewrite_and_restore() {
        let bus = Bus::new(BusConfig::default());
        let topic = t("/k");
        let sub = bus.subscribe(&topic);

        let identity = bus.install_interceptor(&topic, Box::new(|_, b| b.to_vec())).unwrap();
        bus.publish(&topic, b"same").unwrap();
        assert_eq!(sub.try_recv().unwrap().bytes, b"same");
        identity.remove();

        let flip = bus.install_interceptor(&topic, Box::new(|_, b| b.iter().map(|x| x ^ 0xff).collect())).unwrap();
        assert!(matches!(bus.install_interceptor(&topic, Box::new(|_, b| b.to_vec())), Err(Error::Config(_))));
        bus.publish(&topic, &[0x0f]).unwrap();
        assert_eq!(sub.try_recv().unwrap().bytes, vec![0xf0]);
        drop(flip);

        let _fixed = bus.install_interceptor(&topic, Box::new(|_, _| b"fixed".to_vec())).unwrap();
        let other = bus.subscribe(&topic);
        bus.publish(&topic, b"anything").unwrap();
        assert_eq!(sub.try_recv().unwrap().bytes, b"fixed");
        assert_eq!(other.try_recv().unwrap().bytes, b"fixed");
    }

    #[test]
    fn deterministic_mode_queues_until_delivered() {
        let bus = Bus::new(BusConfig::deterministic(1));
        let sub = bus.subscribe(&t("/x"));
        bus.publish(&t("/x"), b"a").unwrap();
        assert!(sub.try_recv().is_none());
        assert_eq!(bus.pending(), 1);
        assert!(bus.deliver_next());
        assert_eq!(sub.try_recv().unwrap().bytes, b"a");
        assert!(!bus.deliver_next());
    }

    #[test]
    fn deterministic_transcript_is_reproducible() {
        let run = |seed| {
            let bus = Bus::new(BusConfig::deterministic(seed));
            let topics: Vec<Topic> = (0..4).map(|i| t(&format!("/t{i}"))).collect();
            let subs: Vec<_> = topics.iter().map(|tp| bus.subscribe(tp)).collect();
            for round in 0..25u32 {
                for tp in &topics {
                    bus.publish(tp, &round.to_be_bytes()).unwrap();
                }
            }
            bus.deliver_all();
            drop(subs);
            bus.transcript()
        };
        let a = run(11);
        assert_eq!(a.len(), 100);
        assert_eq!(a, run(11));
        assert_ne!(a, run(12));
    }
}
