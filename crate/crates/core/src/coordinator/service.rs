//! The coordinator on a live bus and the wall clock.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tokio::sync::broadcast;

use super::core::{Coordinator, StreamFrame};
use super::event::{DREvent, EventRequest};
use super::registry::AgentSummary;
use super::supply::{SupplyPolicy, SupplyTrace};
use super::CoordinatorError;
use crate::bus::{BusHandle, Subscription};
use crate::clock::{Clock, Millis};
use crate::profiles::ProfileSnapshot;

const POLL: Duration = Duration::from_millis(100);
const RETRY_MS: Millis = 500;
/// Stream frames kept for late WebSocket clients.
const HISTORY: usize = 4096;

struct Shared {
    core: Mutex<Coordinator>,
    bus: Arc<dyn BusHandle>,
    clock: Arc<dyn Clock>,
    stream: broadcast::Sender<StreamFrame>,
    history: Mutex<VecDeque<StreamFrame>>,
}

impl Shared {
    fn core(&self) -> MutexGuard<'_, Coordinator> {
        self.core.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Publishes queued messages and forwards stream frames. Called with the
    /// core lock held so frames leave in sequence order.
    fn settle(&self, core: &mut Coordinator) {
        let _ = core.flush(self.bus.as_ref());
        let frames = core.take_frames();
        if frames.is_empty() {
            return;
        }
        let mut hist = self.history.lock().unwrap_or_else(|p| p.into_inner());
        for f in frames {
            if hist.len() == HISTORY {
                hist.pop_front();
            }
            hist.push_back(f.clone());
            let _ = self.stream.send(f);
        }
    }
}

/// Cheap, cloneable access to a running coordinator.
#[derive(Clone)]
pub struct CoordinatorHandle {
    shared: Arc<Shared>,
}

impl CoordinatorHandle {
    pub fn now(&self) -> Millis {
        self.shared.clock.now_ms()
    }

    /// Creates an event and publishes its schedules before returning, so the
    /// returned record carries the scheduling latency. Event creation is
    /// serialized.
    pub fn create_event(&self, req: &EventRequest) -> Result<DREvent, CoordinatorError> {
        let mut core = self.shared.core();
        let now = self.now();
        let ev = core.create_event(req, now)?;
        self.shared.settle(&mut core);
        Ok(core.event(&ev.event_id).cloned().unwrap_or(ev))
    }

    pub fn event(&self, id: &str) -> Option<DREvent> {
        self.shared.core().event(id).cloned()
    }

    pub fn events(&self) -> Vec<DREvent> {
        self.shared.core().events().cloned().collect()
    }

    pub fn agents(&self) -> Vec<AgentSummary> {
        let now = self.now();
        self.shared.core().agents(now)
    }

    pub fn agent_profiles(&self, id: &str) -> Result<ProfileSnapshot, CoordinatorError> {
        self.shared.core().agent_profiles(id)
    }

    pub fn load_trace(&self, trace: SupplyTrace, policy: Option<SupplyPolicy>) -> Result<(), CoordinatorError> {
        self.shared.core().load_trace(trace, policy)
    }

    /// Buffered frames with `seq >= from_seq` plus a receiver for newer ones.
    pub fn subscribe_stream(&self, from_seq: Option<u64>) -> (Vec<StreamFrame>, broadcast::Receiver<StreamFrame>) {
        let _core = self.shared.core();
        let rx = self.shared.stream.subscribe();
        let backlog = match from_seq {
            Some(from) => self
                .shared
                .history
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .iter()
                .filter(|f| f.seq >= from)
                .cloned()
                .collect(),
            None => Vec::new(),
        };
        (backlog, rx)
    }
}

/// Runs a [`Coordinator`] on a background thread that consumes the bus and
/// drives time-based transitions.
pub struct CoordinatorService {
    handle: CoordinatorHandle,
    stop: Arc<AtomicBool>,
    pump: Option<JoinHandle<()>>,
}

impl CoordinatorService {
    pub fn start(core: Coordinator, bus: Arc<dyn BusHandle>, clock: Arc<dyn Clock>) -> Self {
        let (stream, _) = broadcast::channel(HISTORY);
        let shared = Arc::new(Shared {
            core: Mutex::new(core),
            bus,
            clock,
            stream,
            history: Mutex::new(VecDeque::new()),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let pump = {
            let shared = shared.clone();
            let stop = stop.clone();
            thread::spawn(move || pump(&shared, &stop))
        };
        Self {
            handle: CoordinatorHandle { shared },
            stop,
            pump: Some(pump),
        }
    }

    pub fn handle(&self) -> CoordinatorHandle {
        self.handle.clone()
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(p) = self.pump.take() {
            let _ = p.join();
        }
    }
}

impl Drop for CoordinatorService {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn pump(shared: &Shared, stop: &AtomicBool) {
    let patterns = Coordinator::subscriptions();
    let refs: Vec<&str> = patterns.iter().map(String::as_str).collect();
    let mut sub: Option<Subscription> = None;
    let mut retry_at = Millis::MIN;
    while !stop.load(Ordering::SeqCst) {
        let now = shared.clock.now_ms();
        if sub.is_none() && now >= retry_at {
            match shared.bus.subscribe(&refs, 1) {
                Ok(s) => sub = Some(s),
                Err(_) => retry_at = now + RETRY_MS,
            }
        }
        let batch = match &sub {
            Some(s) => match s.recv_timeout(POLL) {
                Ok(Some(first)) => {
                    let mut b = vec![first];
                    b.extend(s.drain());
                    b
                }
                Ok(None) => Vec::new(),
                Err(_) => {
                    sub = None;
                    retry_at = now + RETRY_MS;
                    Vec::new()
                }
            },
            None => {
                thread::sleep(POLL);
                Vec::new()
            }
        };
        let mut core = shared.core();
        let now = shared.clock.now_ms();
        for env in &batch {
            core.handle(env, now);
        }
        core.tick(now);
        shared.settle(&mut core);
    }
}
