//! The robot <-> supervisor message protocol.
//!
//! Robots send SAMPLE_REQUEST, BULLSEYE, and TELEMETRY; the supervisor
//! answers with SAMPLE_RESPONSE and broadcasts BLOCK and STOP_ALL. Every
//! message carries an envelope with sender, recipient, send tick, and the
//! delivery outcome decided by the radio model.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Endpoint {
    Robot(u32),
    Supervisor,
    Broadcast,
}

/// Pose estimate report published by a robot's particle filter.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub robot_id: u32,
    pub tick: u64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_theta: f64,
    pub n_eff: f64,
    pub underflow_count: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    /// Ask for a noisy richness reading and gradient at a world position.
    SampleRequest { x: f64, y: f64 },
    /// Answer to a sample request. `pher_grad` carries the pheromone-map
    /// gradient for the optional no-revisit steering term (zeros unless the
    /// controller asks for it).
    SampleResponse { value: f64, grad: (f64, f64), pher_grad: (f64, f64) },
    /// Announce a detected hotspot center.
    Bullseye { x: f64, y: f64 },
    Telemetry(TelemetryRecord),
    /// Publish a circular forbidden region around a confirmed hotspot.
    Block { x: f64, y: f64, radius: f64 },
    /// Terminate the run; broadcast, exempt from radio drops.
    StopAll,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub payload: Payload,
    pub sender: Endpoint,
    pub recipient: Endpoint,
    pub tick_sent: u64,
    pub delivered: bool,
}

impl Message {
    pub fn new(payload: Payload, sender: Endpoint, recipient: Endpoint, tick_sent: u64) -> Self {
        Message { payload, sender, recipient, tick_sent, delivered: false }
    }
}
