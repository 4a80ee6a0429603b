//! Simulated real-time demand response for fleets of laptops.
//!
//! * [`power_model`] fits and scores linear power models from utilization logs.
//! * [`profiles`] keeps each laptop's weekly power, location and running profiles.
//! * [`agent`] simulates the demand-side manager running on each laptop.
//! * [`coordinator`] selects laptops near a renewable source and schedules curtailment.
//! * [`bus`] is the persistent publish/subscribe channel between them.
//! * [`experiment`] wires everything together under a virtual clock.

pub mod agent;
pub mod bus;
pub mod clock;
pub mod coordinator;
pub mod experiment;
pub mod geo;
pub mod linalg;
pub mod messages;
pub mod power_model;
pub mod profiles;
