//! 802.11 medium emulation: binary radio range, IBSS and infrastructure
//! modes, a per-collision-domain airtime ledger, power save at the AP and
//! the driver fault behaviors seen on real handsets.

mod medium;
mod mobility;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{SeededRng, SimTime};

pub use medium::{Delivery, LossReason, Medium, RadioMode, TxOutcome};
pub use mobility::{Track, Waypoint};

/// Short node identifier such as `"A"`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64) -> Self {
        Position { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkMode {
    Ibss,
    InfrastructureStation,
    InfrastructureAp,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum LinkDst {
    Unicast(NodeId),
    Broadcast,
}

/// Traffic class of a frame. Only data frames count as active transmitters
/// when the contention factor is computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameClass {
    Data,
    Control,
}

/// Link-layer unit. `src` is the originating station; the transmitter of a
/// relayed copy is passed separately to [`Medium::transmit`].
#[derive(Clone, Debug, PartialEq)]
pub struct Frame<P = ()> {
    pub src: NodeId,
    pub dst: LinkDst,
    pub multicast: bool,
    pub size: u32,
    pub class: FrameClass,
    /// Sent on behalf of another node (IP forwarding). Queueing time of such
    /// frames is not charged to the sender as transmit time.
    pub forwarded: bool,
    pub payload: P,
}

impl<P> Frame<P> {
    pub fn unicast(src: NodeId, dst: NodeId, size: u32, class: FrameClass, payload: P) -> Self {
        Frame {
            src,
            dst: LinkDst::Unicast(dst),
            multicast: false,
            size: size.max(1),
            class,
            forwarded: false,
            payload,
        }
    }

    pub fn broadcast(src: NodeId, size: u32, class: FrameClass, payload: P) -> Self {
        Frame {
            src,
            dst: LinkDst::Broadcast,
            multicast: true,
            size: size.max(1),
            class,
            forwarded: false,
            payload,
        }
    }

    pub fn is_broadcast(&self) -> bool {
        matches!(self.dst, LinkDst::Broadcast)
    }
}

fn default_capacity() -> f64 {
    24_000_000.0
}
fn default_eta() -> f64 {
    0.10
}
fn default_processing() -> f64 {
    0.0005
}
fn default_range() -> f64 {
    50.0
}
fn default_queue_limit() -> usize {
    100
}

/// Shared-medium parameters. Capacity is MAC-level goodput; header overhead
/// is folded into it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumModel {
    #[serde(default = "default_capacity", rename = "nominal_capacity_bps")]
    pub nominal_capacity: f64,
    /// Fractional rate loss per additional active transmitter.
    #[serde(default = "default_eta")]
    pub contention_overhead: f64,
    #[serde(default = "default_processing", rename = "per_hop_processing_delay_s")]
    pub per_hop_processing_delay: f64,
    #[serde(default = "default_range", rename = "radio_range_m")]
    pub radio_range: f64,
    /// Frames a node may have waiting for airtime before new ones are dropped.
    #[serde(default = "default_queue_limit")]
    pub queue_limit: usize,
}

impl Default for MediumModel {
    fn default() -> Self {
        MediumModel {
            nominal_capacity: default_capacity(),
            contention_overhead: default_eta(),
            per_hop_processing_delay: default_processing(),
            radio_range: default_range(),
            queue_limit: default_queue_limit(),
        }
    }
}

impl MediumModel {
    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.nominal_capacity > 0.0) || !self.nominal_capacity.is_finite() {
            return Err(LinkError::InvalidModel("nominal capacity must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.contention_overhead) {
            return Err(LinkError::InvalidModel("contention overhead must be in [0, 1)".into()));
        }
        if !(self.per_hop_processing_delay >= 0.0) {
            return Err(LinkError::InvalidModel("processing delay must be >= 0".into()));
        }
        if !(self.radio_range > 0.0) {
            return Err(LinkError::InvalidModel("radio range must be positive".into()));
        }
        if self.queue_limit == 0 {
            return Err(LinkError::InvalidModel("queue limit must be >= 1".into()));
        }
        Ok(())
    }

    /// `capacity * (1 - eta * (k - 1))`, floored at 5% of capacity for very
    /// crowded domains.
    pub fn effective_rate(&self, active_transmitters: usize) -> f64 {
        let k = active_transmitters.max(1) as f64;
        let factor = (1.0 - self.contention_overhead * (k - 1.0)).max(0.05);
        self.nominal_capacity * factor
    }

    pub fn airtime(&self, size_bytes: u32, active_transmitters: usize) -> SimTime {
        SimTime::from_secs_f64(size_bytes as f64 * 8.0 / self.effective_rate(active_transmitters))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultModel {
    #[default]
    None,
    /// Chipset/driver cannot join an IBSS at all.
    DriverNoIbss,
    /// The first joiner of an IBSS behaves like an access point: every frame
    /// in the cell is relayed through it.
    FakeApIbss,
}

fn default_beacon() -> f64 {
    0.1024
}
fn default_dtim() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSaveModel {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_beacon", rename = "beacon_interval_s")]
    pub beacon_interval: f64,
    #[serde(default = "default_dtim")]
    pub dtim_period: u32,
}

impl Default for PowerSaveModel {
    fn default() -> Self {
        PowerSaveModel {
            enabled: false,
            beacon_interval: default_beacon(),
            dtim_period: default_dtim(),
        }
    }
}

impl PowerSaveModel {
    pub fn enabled() -> Self {
        PowerSaveModel {
            enabled: true,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), LinkError> {
        if !(self.beacon_interval > 0.0) || self.dtim_period == 0 {
            return Err(LinkError::InvalidModel(
                "power save needs beacon_interval > 0 and dtim_period >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Longest time a dozing station can take to pick up buffered frames.
    pub fn max_delay(&self) -> f64 {
        self.dtim_period as f64 * self.beacon_interval
    }
}

/// Buffering delay at the AP for a frame addressed to a dozing station:
/// uniform over one DTIM period. Zero when power save is off.
pub fn power_save_delay(rng: &mut SeededRng, ps: &PowerSaveModel) -> f64 {
    if !ps.enabled {
        return 0.0;
    }
    rng.uniform(0.0, ps.max_delay())
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinkError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not associated")]
    NotAssociated(NodeId),
    #[error("driver on {0} cannot operate in IBSS mode")]
    IbssUnsupported(NodeId),
    #[error("no access point for network {ssid:?}")]
    NoAccessPoint { ssid: String },
    #[error("transmit queue of {0} is full")]
    QueueFull(NodeId),
    #[error("invalid medium model: {0}")]
    InvalidModel(String),
    #[error("invalid window [{from}, {to}]")]
    InvalidWindow { from: SimTime, to: SimTime },
}
