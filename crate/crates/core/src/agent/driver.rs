//! Real-clock driver: one thread per agent.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::node::AgentNode;
use crate::bus::{BusHandle, Subscription};
use crate::clock::Clock;

const MAX_WAIT: Duration = Duration::from_millis(50);
const RETRY_MS: i64 = 500;

pub struct AgentRunner {
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<AgentNode>>,
}

impl AgentRunner {
    /// Stops the loop and hands back the node.
    pub fn stop(mut self) -> AgentNode {
        self.stop.store(true, Ordering::SeqCst);
        self.handle
            .take()
            .expect("joined once")
            .join()
            .expect("agent thread panicked")
    }
}

impl Drop for AgentRunner {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn flush(node: &mut AgentNode, bus: &dyn BusHandle) -> bool {
    let msgs = node.take_outbox();
    for (i, m) in msgs.iter().enumerate() {
        if bus.publish(&m.topic, m.payload.clone()).is_err() {
            node.requeue(msgs[i..].to_vec());
            return false;
        }
    }
    true
}

/// Runs `node` against `bus` until stopped. Bus failures are retried; while
/// the bus is unreachable the node keeps profiling and buffers its output.
/// Subscriptions replay from the start, and the node drops duplicates.
pub fn spawn_agent(mut node: AgentNode, bus: Arc<dyn BusHandle>, clock: Arc<dyn Clock>) -> AgentRunner {
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let handle = thread::spawn(move || {
        let patterns = node.subscriptions();
        let mut sub: Option<Subscription> = None;
        let mut retry_at = i64::MIN;
        while !flag.load(Ordering::SeqCst) {
            let now = clock.now_ms();
            if sub.is_none() && now >= retry_at {
                let refs: Vec<&str> = patterns.iter().map(String::as_str).collect();
                match bus.subscribe(&refs, 1) {
                    Ok(s) => sub = Some(s),
                    Err(_) => retry_at = now + RETRY_MS,
                }
            }
            node.tick(now);
            if !flush(&mut node, bus.as_ref()) {
                retry_at = now + RETRY_MS;
            }
            let until = (node.next_wakeup() - clock.now_ms()).max(1) as u64;
            let wait = Duration::from_millis(until).min(MAX_WAIT);
            match &sub {
                Some(s) => match s.recv_timeout(wait) {
                    Ok(Some(env)) => {
                        let now = clock.now_ms();
                        node.handle(&env, now);
                        for env in s.drain() {
                            node.handle(&env, now);
                        }
                        flush(&mut node, bus.as_ref());
                    }
                    Ok(None) => {}
                    Err(_) => sub = None,
                },
                None => thread::sleep(wait),
            }
        }
        node
    });
    AgentRunner {
        stop,
        handle: Some(handle),
    }
}
