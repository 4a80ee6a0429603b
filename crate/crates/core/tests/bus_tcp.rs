use std::time::Duration;

use laptop_dr::bus::{Bus, BusHandle, BusServer, RemoteBus, MAX_PAYLOAD_BYTES};
use serde_json::json;

fn recv_all(sub: &laptop_dr::bus::Subscription) -> Vec<(String, u64)> {
    let mut out = Vec::new();
    while let Ok(Some(env)) = sub.recv_timeout(Duration::from_millis(300)) {
        out.push((env.topic, env.seq));
    }
    out
}

#[test]
fn remote_patterns_select_topics() {
    let server = BusServer::bind("127.0.0.1:0", Bus::in_memory(std::sync::Arc::new(laptop_dr::clock::SystemClock)))
        .unwrap();
    let client = RemoteBus::connect(server.local_addr()).unwrap();
    let single = client.subscribe(&["status/*"], 1).unwrap();
    let deep = client.subscribe(&["events/#"], 1).unwrap();
    let other = RemoteBus::connect(server.local_addr()).unwrap();
    other.publish("status/a", json!(1)).unwrap();
    other.publish("status/a/extra", json!(2)).unwrap();
    other.publish("events/ev-0001", json!(3)).unwrap();
    other.publish("events/ev-0001/x", json!(4)).unwrap();
    other.publish("heartbeats/a", json!(5)).unwrap();

    assert_eq!(recv_all(&single), vec![("status/a".to_string(), 1)]);
    assert_eq!(
        recv_all(&deep),
        vec![("events/ev-0001".to_string(), 1), ("events/ev-0001/x".to_string(), 1)]
    );
}

#[test]
fn from_seq_is_inclusive_over_tcp() {
    let server = BusServer::bind("127.0.0.1:0", Bus::in_memory(std::sync::Arc::new(laptop_dr::clock::SystemClock)))
        .unwrap();
    let client = RemoteBus::connect(server.local_addr()).unwrap();
    for i in 1..=5 {
        assert_eq!(client.publish("t/x", json!(i)).unwrap().seq, i);
    }
    let sub = client.subscribe(&["t/x"], 3).unwrap();
    let seqs: Vec<u64> = recv_all(&sub).into_iter().map(|(_, s)| s).collect();
    assert_eq!(seqs, vec![3, 4, 5]);
}

#[test]
fn log_survives_a_server_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bus.jsonl");
    {
        let mut server = BusServer::bind("127.0.0.1:0", Bus::open(&path, true).unwrap()).unwrap();
        let c = RemoteBus::connect(server.local_addr()).unwrap();
        for i in 0..10 {
            c.publish(&format!("agents/a{}", i % 2), json!({ "i": i })).unwrap();
        }
        server.shutdown();
    }
    let server = BusServer::bind("127.0.0.1:0", Bus::open(&path, true).unwrap()).unwrap();
    let c = RemoteBus::connect(server.local_addr()).unwrap();
    let sub = c.subscribe(&["agents/*"], 1).unwrap();
    assert_eq!(recv_all(&sub).len(), 10);
    assert_eq!(c.publish("agents/a0", json!(null)).unwrap().seq, 6);
}

#[test]
fn oversized_payload_is_refused_and_the_connection_lives_on() {
    let server = BusServer::bind("127.0.0.1:0", Bus::in_memory(std::sync::Arc::new(laptop_dr::clock::SystemClock)))
        .unwrap();
    let c = RemoteBus::connect(server.local_addr()).unwrap();
    let big = "x".repeat(MAX_PAYLOAD_BYTES + 1);
    assert!(c.publish("t/big", json!(big)).is_err());
    assert_eq!(c.publish("t/small", json!(1)).unwrap().seq, 1);
}

#[test]
fn invalid_topics_are_rejected_remotely() {
    let server = BusServer::bind("127.0.0.1:0", Bus::in_memory(std::sync::Arc::new(laptop_dr::clock::SystemClock)))
        .unwrap();
    let c = RemoteBus::connect(server.local_addr()).unwrap();
    assert!(c.publish("a//b", json!(1)).is_err());
    assert!(c.subscribe(&["a/#/b"], 1).is_err());
    assert_eq!(c.publish("a/b", json!(1)).unwrap().seq, 1);
}

#[test]
fn loopback_delivery_p99_under_50ms() {
    use std::time::Instant;
    let server = BusServer::bind("127.0.0.1:0", Bus::in_memory(std::sync::Arc::new(laptop_dr::clock::SystemClock)))
        .unwrap();
    let publisher = RemoteBus::connect(server.local_addr()).unwrap();
    let subscriber = RemoteBus::connect(server.local_addr()).unwrap();
    let sub = subscriber.subscribe(&["lat/x"], 1).unwrap();
    let body = "y".repeat(1024);
    let origin = Instant::now();
    let reader = std::thread::spawn(move || {
        let mut seen = Vec::new();
        while seen.len() < 200 {
            let env = sub.recv_timeout(Duration::from_secs(5)).unwrap().expect("delivery");
            seen.push((env.payload["sent_us"].as_u64().unwrap(), origin.elapsed().as_micros() as u64));
        }
        seen
    });
    for i in 0..200u64 {
        let sent_us = origin.elapsed().as_micros() as u64;
        publisher.publish("lat/x", json!({ "sent_us": sent_us, "body": body })).unwrap();
        // 100 messages per second
        let next = Duration::from_millis(10 * (i + 1));
        if let Some(wait) = next.checked_sub(origin.elapsed()) {
            std::thread::sleep(wait);
        }
    }
    let mut lat: Vec<u64> = reader.join().unwrap().into_iter().map(|(s, r)| r - s).collect();
    lat.sort_unstable();
    let p99 = lat[(0.99 * lat.len() as f64).ceil() as usize - 1];
    assert!(p99 < 50_000, "p99 {p99} µs");
}
