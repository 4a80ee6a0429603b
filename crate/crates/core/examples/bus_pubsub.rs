//! A durable bus behind a TCP server: two remote clients publish, a wildcard
//! subscriber follows along, and a reopened log replays everything.
//!
//! cargo run --example bus_pubsub

use std::time::Duration;

use laptop_dr::bus::{Bus, BusHandle, BusServer, RemoteBus};
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("laptop-dr-bus-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("bus.jsonl");

    let mut server = BusServer::bind("127.0.0.1:0", Bus::open(&path, true)?)?;
    let addr = server.local_addr();
    println!("bus on {addr}");

    let watcher = RemoteBus::connect(addr)?;
    let sub = watcher.subscribe(&["heartbeats/*"], 1)?;
    let a = RemoteBus::connect(addr)?;
    let b = RemoteBus::connect(addr)?;
    for i in 0..3 {
        a.publish("heartbeats/win-1", json!({ "n": i }))?;
        b.publish("heartbeats/ubu-1", json!({ "n": i }))?;
        b.publish("status/ubu-1", json!({ "n": i }))?;
    }
    while let Some(env) = sub.recv_timeout(Duration::from_millis(300))? {
        println!("  {} #{} {}", env.topic, env.seq, env.payload);
    }
    server.shutdown();

    let reopened = Bus::open(&path, false)?;
    println!("replayed {} messages from {}", reopened.len(), path.display());
    for (topic, last) in reopened.topics() {
        println!("  {topic}: last seq {last}");
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
