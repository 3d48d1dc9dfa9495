//! Pluggable routing: the plugin contract, route tables, an OLSR core, a
//! static baseline, importable packages and the unicast forwarding engine.

pub mod olsr;
mod package;
mod packet;
mod static_routes;

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimTime;

pub use olsr::{OlsrMessage, OlsrParams, OlsrPlugin, OlsrState};
pub use package::{
    HookDescriptor, PackageHandle, PackageManifest, PackageRegistry, PluginContext, PluginFactory,
    RoutingPackage,
};
pub use packet::{forward, DropReason, ForwardDecision, NetPacket, Transport, DEFAULT_TTL, MDNS_GROUP};
pub use static_routes::StaticRouting;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoutingError {
    #[error("routing package {0:?} is already registered")]
    DuplicatePackage(String),
    #[error("unknown routing package {0:?}")]
    UnknownPackage(String),
    #[error("unknown routing protocol {0:?}")]
    UnknownProtocol(String),
    #[error("invalid parameter {key}: {reason}")]
    InvalidParameter { key: String, reason: String },
    #[error("malformed control message: {0}")]
    MalformedMessage(String),
    #[error("package manifest: {0}")]
    Manifest(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub next_hop: Ipv4Addr,
    pub hop_count: u32,
}

/// Destination → (next hop, hop count), ordered by destination address.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RouteTable {
    entries: BTreeMap<Ipv4Addr, RouteEntry>,
}

impl RouteTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, dst: Ipv4Addr, next_hop: Ipv4Addr, hop_count: u32) {
        self.entries.insert(dst, RouteEntry { next_hop, hop_count });
    }

    pub fn get(&self, dst: &Ipv4Addr) -> Option<&RouteEntry> {
        self.entries.get(dst)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Ipv4Addr, &RouteEntry)> {
        self.entries.iter()
    }

    /// Plain-text dump, one row per destination. `name` maps addresses to
    /// node names when known.
    pub fn render(&self, name: impl Fn(&Ipv4Addr) -> Option<String>) -> String {
        let label = |a: &Ipv4Addr| match name(a) {
            Some(n) => format!("{a} ({n})"),
            None => a.to_string(),
        };
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} {:<24} hops", "destination", "next_hop");
        for (dst, e) in &self.entries {
            let _ = writeln!(out, "{:<24} {:<24} {}", label(dst), label(&e.next_hop), e.hop_count);
        }
        out
    }
}

impl FromIterator<(Ipv4Addr, RouteEntry)> for RouteTable {
    fn from_iter<T: IntoIterator<Item = (Ipv4Addr, RouteEntry)>>(iter: T) -> Self {
        RouteTable {
            entries: iter.into_iter().collect(),
        }
    }
}

/// Routing control traffic. Every control message is sent as a one-hop
/// link-local broadcast; protocols flood further on their own.
#[derive(Clone, Debug, PartialEq)]
pub enum ControlMessage {
    Olsr(OlsrMessage),
    /// Payload of a protocol that is not built in.
    Opaque { protocol: String, bytes: Vec<u8> },
}

impl ControlMessage {
    pub fn size_bytes(&self) -> u32 {
        match self {
            ControlMessage::Olsr(m) => m.size_bytes(),
            // IPv4 + UDP headers around the payload.
            ControlMessage::Opaque { bytes, .. } => 28 + bytes.len() as u32,
        }
    }
}

/// Contract every routing protocol implements. Callbacks run on the event
/// loop; outputs are control messages to broadcast on the local link.
pub trait RoutingPlugin: Send {
    fn protocol(&self) -> &str;
    fn start(&mut self, now: SimTime) -> Vec<ControlMessage>;
    /// Releases timers and state; `routes()` is empty afterwards.
    fn stop(&mut self);
    fn is_running(&self) -> bool;
    fn on_control_packet(&mut self, msg: &ControlMessage, from: Ipv4Addr, now: SimTime) -> Vec<ControlMessage>;
    fn tick(&mut self, now: SimTime) -> Vec<ControlMessage>;
    /// Earliest time `tick` has work to do.
    fn next_deadline(&self) -> Option<SimTime>;
    fn routes(&self) -> RouteTable;
    fn as_any(&self) -> &dyn Any;
}
