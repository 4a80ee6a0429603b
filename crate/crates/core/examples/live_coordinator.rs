//! A real-clock deployment in one process: a TCP bus, the coordinator with
//! its HTTP API, and three laptops. One one-minute event is requested and
//! followed through the coordinator's stream until it completes.
//!
//! cargo run --example live_coordinator
//!
//! While it runs, `curl http://<addr>/agents` shows the fleet.

use std::sync::Arc;
use std::time::{Duration, Instant};

use laptop_dr::agent::{default_save_drop, spawn_agent, synthetic_training_log, AgentNode};
use laptop_dr::bus::{Bus, BusHandle, BusServer, RemoteBus};
use laptop_dr::clock::{Clock, SystemClock};
use laptop_dr::coordinator::http::HttpServer;
use laptop_dr::coordinator::{
    Coordinator, CoordinatorConfig, CoordinatorService, EventRequest, EventState, StreamEvent,
};
use laptop_dr::experiment::Scenario;
use laptop_dr::messages::topics;
use laptop_dr::power_model::{fit_pipeline, FeatureSpec, Os, PowerMode, TRAIN_FRACTION};
use tokio::sync::broadcast::error::RecvError;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let server = BusServer::bind("127.0.0.1:0", Bus::in_memory(clock.clone()))?;
    let bus = RemoteBus::connect(server.local_addr())?;
    for os in Os::ALL {
        for mode in PowerMode::ALL {
            let log = synthetic_training_log(os, mode, default_save_drop(os), 3000, 1);
            let model = fit_pipeline(log, &FeatureSpec::builtin(os, mode), TRAIN_FRACTION, 1)?.model;
            bus.publish_json(&topics::model(os, mode), &model)?;
        }
    }

    let coordinator = CoordinatorService::start(
        Coordinator::new(CoordinatorConfig::default()),
        Arc::new(RemoteBus::connect(server.local_addr())?),
        clock.clone(),
    );
    let handle = coordinator.handle();
    let http = HttpServer::bind("127.0.0.1:0", handle.clone())?;
    println!("coordinator http on {}", http.local_addr());

    // keep every laptop at the office regardless of the wall-clock hour
    let scenario = Scenario::three_laptops(1);
    let mut runners = Vec::new();
    for (i, mut a) in scenario.agents.into_iter().enumerate() {
        a.home = a.work.clone();
        let node = AgentNode::new(a.config(i as u64), clock.now_ms())?;
        runners.push(spawn_agent(node, Arc::new(RemoteBus::connect(server.local_addr())?), clock.clone()));
    }

    let ready = Instant::now();
    while handle.agents().iter().filter(|a| a.profile_complete).count() < runners.len() {
        if ready.elapsed() > Duration::from_secs(20) {
            return Err("laptops did not report profiles".into());
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    println!("{} laptops online with complete profiles", runners.len());

    let (_, mut stream) = handle.subscribe_stream(None);
    let event = handle.create_event(&EventRequest::immediate(scenario.turbine, 5.0, 1))?;
    let ids: Vec<&str> = event.selected.iter().map(|s| s.agent_id.as_str()).collect();
    println!("{} selected {}", event.event_id, ids.join(", "));
    loop {
        let frame = match stream.blocking_recv() {
            Ok(f) => f,
            Err(RecvError::Lagged(_)) => continue,
            Err(RecvError::Closed) => return Err("coordinator stopped".into()),
        };
        if let StreamEvent::Event { event: e } = &frame.event {
            println!(
                "  seq {:>3}  {:<9} schedule latency {:?} ms, join latency {:?} ms",
                frame.seq,
                format!("{:?}", e.state).to_lowercase(),
                e.schedule_latency_ms,
                e.join_latency_ms
            );
            if e.event_id == event.event_id && matches!(e.state, EventState::Completed | EventState::Aborted) {
                break;
            }
        }
    }
    Ok(())
}
