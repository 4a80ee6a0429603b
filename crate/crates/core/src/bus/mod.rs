//! Persistent topic-based publish/subscribe.
//!
//! Every publish is appended to a JSON-lines log before it is acknowledged,
//! then fanned out to live subscribers. Sequence numbers start at 1 and are
//! gap-free per topic. Delivery is at-least-once and in publish order per
//! topic; consumers deduplicate by `(topic, seq)` or by payload ids.
//!
//! Topics are `/`-separated paths such as `schedules/laptop-1`. Subscription
//! patterns use `*` for exactly one segment and a trailing `#` for any
//! remainder (including none).

mod log;
mod net;
mod wire;

pub use log::BusLog;
pub use net::{BusServer, RemoteBus};
pub use wire::{read_frame, write_frame, Frame, Op, MAX_FRAME_BYTES};

use std::collections::HashMap;
use std::path::Path;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::clock::{Clock, Millis, SystemClock};

/// Largest accepted payload, measured as serialized JSON.
pub const MAX_PAYLOAD_BYTES: usize = 256 * 1024;

#[derive(Debug, Error)]
pub enum BusError {
    #[error("invalid topic `{0}`")]
    InvalidTopic(String),
    #[error("invalid pattern `{0}`")]
    InvalidPattern(String),
    #[error("payload of {size} bytes exceeds the {limit} byte limit")]
    PayloadTooLarge { size: usize, limit: usize },
    #[error("corrupt log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("remote error: {0}")]
    Remote(String),
    #[error("bus closed")]
    Closed,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub topic: String,
    pub seq: u64,
    pub payload: Value,
    pub published_at: Millis,
}

impl Envelope {
    /// Decodes the payload into `T`.
    pub fn decode<T: serde::de::DeserializeOwned>(&self) -> Result<T, BusError> {
        Ok(T::deserialize(&self.payload)?)
    }
}

/// Acknowledgment of a durable publish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    pub published_at: Millis,
}

fn valid_segment(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

pub fn validate_topic(topic: &str) -> Result<(), BusError> {
    if topic.split('/').all(valid_segment) {
        Ok(())
    } else {
        Err(BusError::InvalidTopic(topic.to_string()))
    }
}

pub fn validate_pattern(pattern: &str) -> Result<(), BusError> {
    let segs: Vec<&str> = pattern.split('/').collect();
    let ok = segs.iter().enumerate().all(|(i, s)| {
        *s == "*" || (*s == "#" && i == segs.len() - 1) || valid_segment(s)
    });
    if ok {
        Ok(())
    } else {
        Err(BusError::InvalidPattern(pattern.to_string()))
    }
}

/// Whether `topic` matches `pattern`. Both are assumed valid.
pub fn topic_matches(pattern: &str, topic: &str) -> bool {
    let mut t = topic.split('/');
    for p in pattern.split('/') {
        if p == "#" {
            return true;
        }
        match t.next() {
            Some(seg) if p == "*" || p == seg => {}
            _ => return false,
        }
    }
    t.next().is_none()
}

fn payload_size(payload: &Value) -> Result<usize, BusError> {
    let size = serde_json::to_vec(payload)?.len();
    if size > MAX_PAYLOAD_BYTES {
        return Err(BusError::PayloadTooLarge {
            size,
            limit: MAX_PAYLOAD_BYTES,
        });
    }
    Ok(size)
}

/// A live delivery stream. Dropping it unsubscribes.
pub struct Subscription {
    rx: Receiver<Envelope>,
    _guard: Option<Box<dyn Send>>,
}

impl Subscription {
    pub(crate) fn new(rx: Receiver<Envelope>, guard: Option<Box<dyn Send>>) -> Self {
        Self { rx, _guard: guard }
    }

    pub fn try_recv(&self) -> Option<Envelope> {
        self.rx.try_recv().ok()
    }

    /// `Err(Closed)` once the bus or connection is gone.
    pub fn recv_timeout(&self, timeout: Duration) -> Result<Option<Envelope>, BusError> {
        match self.rx.recv_timeout(timeout) {
            Ok(e) => Ok(Some(e)),
            Err(RecvTimeoutError::Timeout) => Ok(None),
            Err(RecvTimeoutError::Disconnected) => Err(BusError::Closed),
        }
    }

    pub fn recv(&self) -> Result<Envelope, BusError> {
        self.rx.recv().map_err(|_| BusError::Closed)
    }

    /// Everything currently queued.
    pub fn drain(&self) -> Vec<Envelope> {
        self.rx.try_iter().collect()
    }
}

/// What agents and the coordinator need from a bus, local or remote.
pub trait BusHandle: Send + Sync {
    fn publish(&self, topic: &str, payload: Value) -> Result<Ack, BusError>;

    /// Subscribes to every topic matching any of `patterns`, replaying
    /// stored messages with `seq >= from_seq` first.
    fn subscribe(&self, patterns: &[&str], from_seq: u64) -> Result<Subscription, BusError>;

    fn publish_json<T: Serialize>(&self, topic: &str, value: &T) -> Result<Ack, BusError>
    where
        Self: Sized,
    {
        self.publish(topic, serde_json::to_value(value)?)
    }
}

struct Subscriber {
    patterns: Vec<String>,
    tx: Sender<Envelope>,
}

struct State {
    log: Option<BusLog>,
    entries: Vec<Envelope>,
    last_seq: HashMap<String, u64>,
    subscribers: Vec<Subscriber>,
}

/// In-process bus. Cheap to clone; clones share state.
#[derive(Clone)]
pub struct Bus {
    state: Arc<Mutex<State>>,
    clock: Arc<dyn Clock>,
}

impl Bus {
    /// Volatile bus, for deterministic tests and simulations.
    pub fn in_memory(clock: Arc<dyn Clock>) -> Self {
        Self::with_parts(None, Vec::new(), clock)
    }

    /// Opens or creates the log at `path` and replays it. A torn final
    /// line (from a crash mid-write) is truncated away.
    pub fn open(path: impl AsRef<Path>, sync: bool) -> Result<Self, BusError> {
        Self::open_with_clock(path, sync, Arc::new(SystemClock))
    }

    pub fn open_with_clock(path: impl AsRef<Path>, sync: bool, clock: Arc<dyn Clock>) -> Result<Self, BusError> {
        let (log, entries) = BusLog::open(path.as_ref(), sync)?;
        Ok(Self::with_parts(Some(log), entries, clock))
    }

    fn with_parts(log: Option<BusLog>, entries: Vec<Envelope>, clock: Arc<dyn Clock>) -> Self {
        let mut last_seq = HashMap::new();
        for e in &entries {
            last_seq.insert(e.topic.clone(), e.seq);
        }
        Self {
            state: Arc::new(Mutex::new(State {
                log,
                entries,
                last_seq,
                subscribers: Vec::new(),
            })),
            clock,
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Stored messages of one topic with `seq >= from_seq`.
    pub fn read(&self, topic: &str, from_seq: u64) -> Vec<Envelope> {
        self.lock()
            .entries
            .iter()
            .filter(|e| e.topic == topic && e.seq >= from_seq)
            .cloned()
            .collect()
    }

    /// Every topic with its last sequence number, sorted by topic.
    pub fn topics(&self) -> Vec<(String, u64)> {
        let mut t: Vec<_> = self.lock().last_seq.iter().map(|(k, v)| (k.clone(), *v)).collect();
        t.sort();
        t
    }

    pub fn last_seq(&self, topic: &str) -> u64 {
        self.lock().last_seq.get(topic).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subscriber_count(&self) -> usize {
        self.lock().subscribers.len()
    }
}

impl BusHandle for Bus {
    fn publish(&self, topic: &str, payload: Value) -> Result<Ack, BusError> {
        validate_topic(topic)?;
        payload_size(&payload)?;
        let mut st = self.lock();
        let seq = st.last_seq.get(topic).copied().unwrap_or(0) + 1;
        let env = Envelope {
            topic: topic.to_string(),
            seq,
            payload,
            published_at: self.clock.now_ms(),
        };
        if let Some(log) = st.log.as_mut() {
            log.append(&env, self.clock.now_ms())?;
        }
        st.last_seq.insert(env.topic.clone(), seq);
        st.subscribers.retain(|s| {
            !s.patterns.iter().any(|p| topic_matches(p, &env.topic)) || s.tx.send(env.clone()).is_ok()
        });
        let ack = Ack {
            seq,
            published_at: env.published_at,
        };
        st.entries.push(env);
        Ok(ack)
    }

    fn subscribe(&self, patterns: &[&str], from_seq: u64) -> Result<Subscription, BusError> {
        if patterns.is_empty() {
            return Err(BusError::InvalidPattern(String::new()));
        }
        for p in patterns {
            validate_pattern(p)?;
        }
        let patterns: Vec<String> = patterns.iter().map(|p| p.to_string()).collect();
        let (tx, rx) = mpsc::channel();
        let mut st = self.lock();
        for e in &st.entries {
            if e.seq >= from_seq && patterns.iter().any(|p| topic_matches(p, &e.topic)) {
                let _ = tx.send(e.clone());
            }
        }
        st.subscribers.push(Subscriber { patterns, tx });
        Ok(Subscription::new(rx, None))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::VirtualClock;
    use serde_json::json;

    fn bus() -> Bus {
        Bus::in_memory(Arc::new(VirtualClock::new(1_000)))
    }

    #[test]
    fn topic_and_pattern_rules() {
        assert!(validate_topic("schedules/a-1").is_ok());
        assert!(validate_topic("a//b").is_err());
        assert!(validate_topic("a/*").is_err());
        assert!(validate_pattern("a/*/c").is_ok());
        assert!(validate_pattern("a/#").is_ok());
        assert!(validate_pattern("#/a").is_err());
        assert!(topic_matches("a/*", "a/b"));
        assert!(!topic_matches("a/*", "a/b/c"));
        assert!(topic_matches("a/#", "a/b/c"));
        assert!(topic_matches("a/#", "a"));
        assert!(topic_matches("#", "x/y"));
        assert!(!topic_matches("a/b", "a"));
    }

    #[test]
    fn publish_then_read_back() {
        let b = bus();
        let p = json!({"k": [1, 2, 3]});
        let a1 = b.publish("t/x", p.clone()).unwrap();
        let a2 = b.publish("t/x", json!(2)).unwrap();
        assert_eq!((a1.seq, a2.seq), (1, 2));
        assert_eq!(b.read("t/x", 1)[0].payload, p);
        assert_eq!(b.read("t/x", 2).len(), 1);
        assert_eq!(b.last_seq("nope"), 0);
    }

    #[test]
    fn oversize_payload_rejected() {
        let b = bus();
        let big = Value::String("x".repeat(MAX_PAYLOAD_BYTES));
        assert!(matches!(b.publish("t", big), Err(BusError::PayloadTooLarge { .. })));
        assert!(b.is_empty());
    }

    #[test]
    fn live_and_replayed_delivery_in_order() {
        let b = bus();
        let early = b.subscribe(&["t/*"], 1).unwrap();
        for i in 0..5 {
            b.publish("t/a", json!(i)).unwrap();
        }
        let late = b.subscribe(&["t/a"], 3).unwrap();
        b.publish("t/a", json!(5)).unwrap();
        let seqs: Vec<u64> = early.drain().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3, 4, 5, 6]);
        let seqs: Vec<u64> = late.drain().iter().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![3, 4, 5, 6]);
    }

    #[test]
    fn unknown_topic_is_empty_until_first_publish() {
        let b = bus();
        let s = b.subscribe(&["ghost"], 1).unwrap();
        assert!(s.try_recv().is_none());
        b.publish("ghost", json!(null)).unwrap();
        assert_eq!(s.try_recv().unwrap().seq, 1);
    }

    #[test]
    fn multi_pattern_and_drop_unsubscribes() {
        let b = bus();
        let s = b.subscribe(&["a", "b/#"], 1).unwrap();
        b.publish("a", json!(1)).unwrap();
        b.publish("b/c", json!(2)).unwrap();
        b.publish("c", json!(3)).unwrap();
        assert_eq!(s.drain().len(), 2);
        drop(s);
        b.publish("a", json!(4)).unwrap();
        assert_eq!(b.subscriber_count(), 0);
    }

    #[test]
    fn thousand_publishes_gap_free() {
        let b = bus();
        for i in 0..1000 {
            b.publish(&format!("t/{}", i % 10), json!(i)).unwrap();
        }
        for t in 0..10 {
            let seqs: Vec<u64> = b.read(&format!("t/{t}"), 1).iter().map(|e| e.seq).collect();
            assert_eq!(seqs, (1..=100).collect::<Vec<_>>());
        }
    }
}
