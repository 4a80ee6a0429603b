//! The coordinator's HTTP and WebSocket interface against a live fleet on a
//! fast virtual clock (one simulated second per 10 ms).

mod common;

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use futures::StreamExt;
use laptop_dr::agent::{spawn_agent, AgentNode, AgentRunner};
use laptop_dr::bus::{Bus, BusHandle};
use laptop_dr::clock::{Clock, VirtualClock, SECOND_MS};
use laptop_dr::coordinator::http::HttpServer;
use laptop_dr::coordinator::{
    AgentSummary, Coordinator, CoordinatorConfig, CoordinatorService, DREvent, EventState, StreamEvent, StreamFrame,
};
use laptop_dr::experiment::DEFAULT_START;
use laptop_dr::messages::{topics, AgentHello};
use laptop_dr::power_model::Os;
use laptop_dr::profiles::ProfileSnapshot;
use serde_json::{json, Value};

use common::{office_agent, publish_models, wait_for, TURBINE};

struct Site {
    clock: VirtualClock,
    bus: Bus,
    http: HttpServer,
    _service: CoordinatorService,
    _agents: Vec<AgentRunner>,
    stop: Arc<AtomicBool>,
    ticker: Option<JoinHandle<()>>,
    rt: tokio::runtime::Runtime,
}

impl Site {
    fn start(n_agents: usize) -> Self {
        let clock = VirtualClock::new(DEFAULT_START);
        let shared: Arc<dyn Clock> = Arc::new(clock.clone());
        let bus = Bus::in_memory(shared.clone());
        publish_models(&bus);
        let service = CoordinatorService::start(
            Coordinator::new(CoordinatorConfig::default()),
            Arc::new(bus.clone()),
            shared.clone(),
        );
        let http = HttpServer::bind("127.0.0.1:0", service.handle()).unwrap();
        let agents = (0..n_agents)
            .map(|i| {
                let os = if i % 2 == 0 { Os::Windows } else { Os::Ubuntu };
                let node = AgentNode::new(office_agent(i, os).config(i as u64), DEFAULT_START).unwrap();
                spawn_agent(node, Arc::new(bus.clone()), shared.clone())
            })
            .collect();
        let stop = Arc::new(AtomicBool::new(false));
        let ticker = {
            let (clock, stop) = (clock.clone(), stop.clone());
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    std::thread::sleep(Duration::from_millis(10));
                    clock.advance(SECOND_MS);
                }
            })
        };
        Site {
            clock,
            bus,
            http,
            _service: service,
            _agents: agents,
            stop,
            ticker: Some(ticker),
            rt: tokio::runtime::Runtime::new().unwrap(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("http://{}{path}", self.http.local_addr())
    }

    fn get(&self, path: &str) -> (u16, Value) {
        self.rt.block_on(async {
            let r = reqwest::get(self.url(path)).await.unwrap();
            let status = r.status().as_u16();
            (status, r.json().await.unwrap_or(Value::Null))
        })
    }

    fn post(&self, path: &str, body: Value) -> (u16, Value) {
        self.rt.block_on(async {
            let r = reqwest::Client::new().post(self.url(path)).json(&body).send().await.unwrap();
            let status = r.status().as_u16();
            (status, r.json().await.unwrap_or(Value::Null))
        })
    }

    fn agents(&self) -> Vec<AgentSummary> {
        serde_json::from_value(self.get("/agents").1).unwrap()
    }

    fn wait_ready(&self, n: usize) {
        wait_for(Duration::from_secs(30), || {
            let ready = self.agents().iter().filter(|a| a.online && a.profile_complete).count();
            (ready == n).then_some(())
        })
        .expect("fleet reported complete profiles");
    }
}

impl Drop for Site {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.ticker.take() {
            let _ = t.join();
        }
    }
}

fn immediate(reduction_w: f64) -> Value {
    json!({
        "lat": TURBINE.lat,
        "lon": TURBINE.lon,
        "reduction_w": reduction_w,
        "duration_min": 1,
        "start": "immediate"
    })
}

#[test]
fn agents_and_profiles() {
    let site = Site::start(3);
    site.wait_ready(3);
    let agents = site.agents();
    let ids: Vec<&str> = agents.iter().map(|a| a.agent_id.as_str()).collect();
    assert_eq!(ids, ["laptop-00", "laptop-01", "laptop-02"]);

    let (status, body) = site.get("/agents/laptop-01/profiles");
    assert_eq!(status, 200);
    let snap: ProfileSnapshot = serde_json::from_value(body).unwrap();
    assert_eq!(snap.power_slots.len(), 10_080);
    assert_eq!(snap.location_slots.len(), 672);

    assert_eq!(site.get("/agents/nobody/profiles").0, 404);

    // registered, but no profile has arrived yet
    let hello = AgentHello {
        agent_id: "ghost".into(),
        os: Os::Ubuntu,
        utc_offset_min: 0,
        save_drop_fraction: 0.07,
    };
    site.bus.publish(&topics::agent("ghost"), serde_json::to_value(&hello).unwrap()).unwrap();
    let status = wait_for(Duration::from_secs(5), || {
        let (s, body) = site.get("/agents/ghost/profiles");
        (s != 404).then_some((s, body))
    })
    .unwrap();
    assert_eq!(status.0, 409);
    assert!(status.1["error"].as_str().unwrap().contains("ghost"));
}

#[test]
fn bad_requests_are_400_and_unknown_events_404() {
    let site = Site::start(0);
    let (status, body) = site.post("/events", immediate(-5.0));
    assert_eq!(status, 400);
    assert!(body["error"].is_string());
    let mut req = immediate(5.0);
    req["lat"] = json!(123.0);
    assert_eq!(site.post("/events", req).0, 400);
    assert_eq!(site.get("/events/ev-9999").0, 404);
}

#[test]
fn event_lifecycle_over_http_and_stream() {
    let site = Site::start(3);
    site.wait_ready(3);
    let ws_url = format!("ws://{}/stream?from_seq=1", site.http.local_addr());
    let (mut socket, _) = site.rt.block_on(tokio_tungstenite::connect_async(ws_url)).unwrap();

    let (status, body) = site.post("/events", immediate(5.0));
    assert_eq!(status, 200, "{body}");
    let ev: DREvent = serde_json::from_value(body).unwrap();
    assert!(!ev.selected.is_empty());
    assert!(ev.selected.iter().all(|s| s.estimated_contribution >= 0.0));

    let mut states = Vec::new();
    let mut last_seq = 0;
    site.rt.block_on(async {
        let deadline = tokio::time::sleep(Duration::from_secs(30));
        tokio::pin!(deadline);
        loop {
            tokio::select! {
                _ = &mut deadline => panic!("stream stalled at {states:?}"),
                msg = socket.next() => {
                    let msg = msg.expect("stream open").unwrap();
                    let Ok(text) = msg.into_text() else { continue };
                    let frame: StreamFrame = serde_json::from_str(&text).unwrap();
                    assert!(frame.seq > last_seq);
                    last_seq = frame.seq;
                    if let StreamEvent::Event { event } = frame.event {
                        if event.event_id == ev.event_id && states.last() != Some(&event.state) {
                            states.push(event.state);
                            if event.state == EventState::Completed {
                                break;
                            }
                        }
                    }
                }
            }
        }
    });
    assert_eq!(states, [EventState::Scheduled, EventState::Active, EventState::Completed]);

    let (status, body) = site.get(&format!("/events/{}", ev.event_id));
    assert_eq!(status, 200);
    let done: DREvent = serde_json::from_value(body).unwrap();
    assert_eq!(done.state, EventState::Completed);
    assert_eq!(done.joined.len(), done.selected.len());
    assert!(done.schedule_latency_ms.is_some() && done.join_latency_ms.is_some());
    let (_, list) = site.get("/events");
    assert_eq!(list.as_array().unwrap().len(), 1);

    // a late client replays from the ring
    let ws_url = format!("ws://{}/stream?from_seq=1", site.http.local_addr());
    let first = site.rt.block_on(async {
        let (mut s, _) = tokio_tungstenite::connect_async(ws_url).await.unwrap();
        s.next().await.unwrap().unwrap().into_text().unwrap().to_string()
    });
    let frame: StreamFrame = serde_json::from_str(&first).unwrap();
    assert_eq!(frame.seq, 1);
}

#[test]
fn supply_trace_upload_creates_an_event() {
    let site = Site::start(2);
    site.wait_ready(2);
    let now = site.clock.now_ms();
    let body = json!({
        "threshold_w": 50.0,
        "points": [
            { "t": now + 5 * SECOND_MS, "output_w": 500.0 },
            { "t": now + 35 * SECOND_MS, "output_w": 500.0 },
            { "t": now + 65 * SECOND_MS, "output_w": 430.0 }
        ],
        "policy": {
            "turbine": { "lat": TURBINE.lat, "lon": TURBINE.lon },
            "duration_min": 1
        }
    });
    assert_eq!(site.post("/supply/trace", body).0, 204);
    let ev: DREvent = wait_for(Duration::from_secs(20), || {
        let events: Vec<DREvent> = serde_json::from_value(site.get("/events").1).ok()?;
        events.into_iter().next()
    })
    .expect("the drop triggered an event");
    assert!((ev.requested_reduction - 70.0).abs() < 1e-9);
    assert_eq!(ev.duration_min, 1);

    let bad = json!({ "threshold_w": -1.0, "points": [] });
    assert_eq!(site.post("/supply/trace", bad).0, 400);
}
