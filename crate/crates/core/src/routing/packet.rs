use std::collections::BTreeSet;
use std::fmt;
use std::net::Ipv4Addr;

use super::{ControlMessage, RouteTable};

pub const DEFAULT_TTL: u8 = 64;
pub const MDNS_GROUP: Ipv4Addr = Ipv4Addr::new(224, 0, 0, 251);

/// Transport payloads the emulator knows how to carry.
#[derive(Clone, Debug, PartialEq)]
pub enum Transport {
    Control(ControlMessage),
    Udp { flow: usize, seq: u64 },
    EchoRequest { id: u32, seq: u32 },
    EchoReply { id: u32, seq: u32 },
    /// Sent back by a router that dropped an echo request on ttl expiry.
    TimeExceeded { id: u32, seq: u32 },
    MdnsQuery { id: u32 },
    MdnsResponse { id: u32 },
    Session { id: u32, seq: u32, reply: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetPacket {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub ttl: u8,
    pub multicast: bool,
    /// Bytes on the wire including IP/UDP headers.
    pub size: u32,
    pub payload: Transport,
}

impl NetPacket {
    pub fn unicast(src: Ipv4Addr, dst: Ipv4Addr, size: u32, payload: Transport) -> Self {
        NetPacket {
            src,
            dst,
            ttl: DEFAULT_TTL,
            multicast: false,
            size,
            payload,
        }
    }

    /// Group or broadcast destination; never leaves the local link.
    pub fn group(src: Ipv4Addr, group: Ipv4Addr, size: u32, payload: Transport) -> Self {
        NetPacket {
            src,
            dst: group,
            ttl: 1,
            multicast: true,
            size,
            payload,
        }
    }

    pub fn is_group(&self) -> bool {
        self.multicast || self.dst.is_multicast() || self.dst.is_broadcast()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    NoRoute,
    TtlExpired,
    /// Next hop out of range when the frame went on the air.
    LinkLoss,
    HubUnavailable,
    NoAccessPoint,
    NotAssociated,
    QueueFull,
    MulticastNotForwarded,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::NoRoute => "no_route",
            DropReason::TtlExpired => "ttl_expired",
            DropReason::LinkLoss => "link_loss",
            DropReason::HubUnavailable => "hub_unavailable",
            DropReason::NoAccessPoint => "no_access_point",
            DropReason::NotAssociated => "not_associated",
            DropReason::QueueFull => "queue_full",
            DropReason::MulticastNotForwarded => "multicast_not_forwarded",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardDecision {
    DeliverLocal,
    /// Group traffic: hand to local subscribers and, only at the originator,
    /// put it on the local link once.
    LinkLocal { deliver: bool, transmit: bool },
    NextHop { next_hop: Ipv4Addr, ttl: u8 },
    Drop(DropReason),
}

/// Forwarding decision for `pkt` at a node with address `local`.
///
/// `originated` is true when the node itself created the packet; ttl is only
/// decremented on the forwarding path.
pub fn forward(
    local: Ipv4Addr,
    subscriptions: &BTreeSet<Ipv4Addr>,
    routes: &RouteTable,
    pkt: &NetPacket,
    originated: bool,
) -> ForwardDecision {
    if pkt.is_group() {
        let deliver = !originated && (pkt.dst.is_broadcast() || subscriptions.contains(&pkt.dst));
        return ForwardDecision::LinkLocal {
            deliver,
            transmit: originated,
        };
    }
    if pkt.dst == local {
        return ForwardDecision::DeliverLocal;
    }
    let Some(route) = routes.get(&pkt.dst) else {
        return ForwardDecision::Drop(DropReason::NoRoute);
    };
    if originated {
        if pkt.ttl == 0 {
            return ForwardDecision::Drop(DropReason::TtlExpired);
        }
        return ForwardDecision::NextHop {
            next_hop: route.next_hop,
            ttl: pkt.ttl,
        };
    }
    if pkt.ttl <= 1 {
        return ForwardDecision::Drop(DropReason::TtlExpired);
    }
    ForwardDecision::NextHop {
        next_hop: route.next_hop,
        ttl: pkt.ttl - 1,
    }
}
