//! The DR provider.
//!
//! [`Coordinator`] is the sans-IO core: it ingests bus deliveries, turns
//! event requests into schedules and tracks participation. [`CoordinatorService`]
//! runs it against a live bus on the wall clock, and [`http`] exposes it over
//! HTTP and a WebSocket stream.

mod core;
mod event;
pub mod http;
mod registry;
mod select;
mod service;
mod supply;

pub use self::core::{Coordinator, CoordinatorConfig, Dispatch, StreamEvent, StreamFrame, NO_CANDIDATES};
pub use event::{DREvent, EventRequest, EventState, Selected, StartSpec, COMPLETION_GRACE_MS, DEFAULT_RADIUS_M};
pub use registry::{AgentRecord, AgentSummary, ProfileMirror, Registry, ONLINE_WINDOW_MS};
pub use select::{estimate_contribution, select_candidates, Candidate, Choice, Greedy, SelectionStrategy, CONTRIBUTION_WINDOW_MIN};
pub use service::{CoordinatorHandle, CoordinatorService};
pub use supply::{monitor_supply, Emitted, SupplyMonitor, SupplyPoint, SupplyPolicy, SupplyTrace, REFERENCE_WINDOW_MS};

use thiserror::Error;

use crate::bus::BusError;
use crate::geo::GeoError;
use crate::profiles::ProfileError;

#[derive(Debug, Error)]
pub enum CoordinatorError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("profile for `{0}` is incomplete")]
    ProfileIncomplete(String),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Bus(#[from] BusError),
}
