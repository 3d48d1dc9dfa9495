//! Per-node network configuration: the known-networks store, the one-step
//! IBSS setup procedure and link-local addressing.

mod store;

use std::collections::BTreeMap;
use std::net::Ipv4Addr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::{LinkError, LinkMode, Medium, NodeId};
use crate::sim::SimTime;

pub use store::{NetworkProfile, NetworkStore, ProfileMode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetConfigError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("driver error on {node} at setup step {step}: {cause}")]
    DriverError { node: NodeId, step: u8, cause: String },
    #[error("address {address} already in use by {holder}")]
    AddressConflict { address: Ipv4Addr, holder: NodeId },
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid address configuration: {0}")]
    InvalidAddress(String),
    #[error("network {ssid:?} is not visible to the OS")]
    NetworkHidden { ssid: String },
    #[error("store line {line}: {message}")]
    StoreParse { line: usize, message: String },
    #[error(transparent)]
    Link(#[from] LinkError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IpConfig {
    pub address: Ipv4Addr,
    pub prefix_len: u8,
    #[serde(default)]
    pub gateway: Option<Ipv4Addr>,
}

impl IpConfig {
    pub fn new(address: Ipv4Addr, prefix_len: u8) -> Result<Self, NetConfigError> {
        let cfg = IpConfig {
            address,
            prefix_len,
            gateway: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn mask(&self) -> u32 {
        match self.prefix_len {
            0 => 0,
            p => u32::MAX << (32 - p as u32),
        }
    }

    pub fn network(&self) -> Ipv4Addr {
        Ipv4Addr::from(u32::from(self.address) & self.mask())
    }

    pub fn broadcast(&self) -> Ipv4Addr {
        Ipv4Addr::from(u32::from(self.address) | !self.mask())
    }

    pub fn contains(&self, other: Ipv4Addr) -> bool {
        u32::from(other) & self.mask() == u32::from(self.address) & self.mask()
    }

    pub fn validate(&self) -> Result<(), NetConfigError> {
        if self.prefix_len > 32 {
            return Err(NetConfigError::InvalidAddress(format!("prefix /{}", self.prefix_len)));
        }
        if self.prefix_len < 31 && (self.address == self.network() || self.address == self.broadcast()) {
            return Err(NetConfigError::InvalidAddress(format!(
                "{} is the network or broadcast address of /{}",
                self.address, self.prefix_len
            )));
        }
        Ok(())
    }
}

/// Base-31 polynomial hash of the node id, reduced mod 65536.
pub fn node_hash(node: &NodeId) -> u32 {
    node.as_str()
        .chars()
        .fold(0u32, |h, c| (h.wrapping_mul(31).wrapping_add(c as u32)) % 65_536)
}

/// Deterministic link-local address in 169.254.1.1 – 169.254.254.254, /16, no gateway.
pub fn default_ip(node: &NodeId) -> IpConfig {
    let h = node_hash(node);
    let x = 1 + (h / 256) % 254;
    let y = 1 + h % 254;
    IpConfig {
        address: Ipv4Addr::new(169, 254, x as u8, y as u8),
        prefix_len: 16,
        gateway: None,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IfaceState {
    Down,
    UpUnassociated,
    Associated(NetworkProfile),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SetupStep {
    InterfaceDown,
    StoreUpdated,
    Associate,
    ApplyAddress,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    pub step: SetupStep,
    pub at: SimTime,
    pub ok: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SetupReport {
    pub node: String,
    pub steps: Vec<StepRecord>,
    pub address: Option<Ipv4Addr>,
}

impl SetupReport {
    pub fn succeeded(&self) -> bool {
        self.steps.len() == 4 && self.steps.iter().all(|s| s.ok)
    }
}

#[derive(Clone, Debug)]
pub struct NodeNetConfig {
    pub store: NetworkStore,
    pub iface: IfaceState,
    pub ip: Option<IpConfig>,
}

impl Default for NodeNetConfig {
    fn default() -> Self {
        NodeNetConfig {
            store: NetworkStore::new(),
            iface: IfaceState::Down,
            ip: None,
        }
    }
}

/// NetConfig state for every node of a scenario.
#[derive(Clone, Debug, Default)]
pub struct NetConfig {
    nodes: BTreeMap<NodeId, NodeNetConfig>,
}

impl NetConfig {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: NodeId) {
        self.nodes.entry(node).or_default();
    }

    pub fn node(&self, node: &NodeId) -> Result<&NodeNetConfig, NetConfigError> {
        self.nodes
            .get(node)
            .ok_or_else(|| NetConfigError::UnknownNode(node.clone()))
    }

    fn node_mut(&mut self, node: &NodeId) -> Result<&mut NodeNetConfig, NetConfigError> {
        self.nodes
            .get_mut(node)
            .ok_or_else(|| NetConfigError::UnknownNode(node.clone()))
    }

    pub fn iface(&self, node: &NodeId) -> Result<&IfaceState, NetConfigError> {
        Ok(&self.node(node)?.iface)
    }

    pub fn address(&self, node: &NodeId) -> Option<Ipv4Addr> {
        let n = self.nodes.get(node)?;
        match n.iface {
            IfaceState::Associated(_) => n.ip.map(|c| c.address),
            _ => None,
        }
    }

    pub fn visible_networks(&self, node: &NodeId) -> Result<Vec<NetworkProfile>, NetConfigError> {
        Ok(self.node(node)?.store.visible())
    }

    fn holder_of(&self, address: Ipv4Addr, except: &NodeId) -> Option<NodeId> {
        self.nodes.iter().find_map(|(id, n)| {
            let active = matches!(n.iface, IfaceState::Associated(_));
            (id != except && active && n.ip.map(|c| c.address) == Some(address)).then(|| id.clone())
        })
    }

    /// Brings `node` into the IBSS named by `profile` in one go:
    /// interface down, store rewritten with IBSS-only visibility, interface up
    /// and associated, address applied. A driver failure aborts at the
    /// association step and leaves the rewritten store in place.
    pub fn one_step_setup(
        &mut self,
        medium: &mut Medium,
        node: &NodeId,
        profile: NetworkProfile,
        ip: Option<IpConfig>,
        now: SimTime,
    ) -> Result<SetupReport, NetConfigError> {
        profile.validate()?;
        let ip = ip.unwrap_or_else(|| default_ip(node));
        ip.validate()?;
        self.node(node)?;
        let mut report = SetupReport {
            node: node.to_string(),
            ..Default::default()
        };
        let mut record = |step, ok, detail: String| {
            report.steps.push(StepRecord { step, at: now, ok, detail });
        };

        medium.disassociate(node)?;
        self.node_mut(node)?.iface = IfaceState::Down;
        record(SetupStep::InterfaceDown, true, "interface down".into());

        let n = self.node_mut(node)?;
        let changed = n.store.upsert_ibss(profile.clone())?;
        n.store.ibss_only_visible = true;
        record(
            SetupStep::StoreUpdated,
            true,
            if changed { "ibss profile written" } else { "store unchanged" }.into(),
        );

        n.iface = IfaceState::UpUnassociated;
        if let Err(e) = medium.associate(node, &profile.ssid, LinkMode::Ibss) {
            record(SetupStep::Associate, false, e.to_string());
            return Err(NetConfigError::DriverError {
                node: node.clone(),
                step: 3,
                cause: e.to_string(),
            });
        }
        self.node_mut(node)?.iface = IfaceState::Associated(profile.clone());
        record(SetupStep::Associate, true, format!("joined {:?}", profile.ssid));

        if let Some(holder) = self.holder_of(ip.address, node) {
            record(SetupStep::ApplyAddress, false, format!("{} held by {holder}", ip.address));
            return Err(NetConfigError::AddressConflict {
                address: ip.address,
                holder,
            });
        }
        self.node_mut(node)?.ip = Some(ip);
        record(SetupStep::ApplyAddress, true, format!("{}/{}", ip.address, ip.prefix_len));
        report.address = Some(ip.address);
        Ok(report)
    }

    /// Joins an infrastructure network as station or access point. Refused
    /// while the store only exposes IBSS networks.
    pub fn connect_infrastructure(
        &mut self,
        medium: &mut Medium,
        node: &NodeId,
        profile: NetworkProfile,
        role: LinkMode,
        ip: Option<IpConfig>,
    ) -> Result<(), NetConfigError> {
        profile.validate()?;
        let ip = ip.unwrap_or_else(|| default_ip(node));
        let n = self.node_mut(node)?;
        if n.store.ibss_only_visible {
            return Err(NetConfigError::NetworkHidden { ssid: profile.ssid });
        }
        if !n.store.profiles.contains(&profile) {
            n.store.add(profile.clone())?;
        }
        if let Some(holder) = self.holder_of(ip.address, node) {
            return Err(NetConfigError::AddressConflict {
                address: ip.address,
                holder,
            });
        }
        medium.associate(node, &profile.ssid, role)?;
        let n = self.node_mut(node)?;
        n.iface = IfaceState::Associated(profile);
        n.ip = Some(ip);
        Ok(())
    }

    /// Inverse of [`one_step_setup`](Self::one_step_setup); idempotent.
    pub fn teardown(&mut self, medium: &mut Medium, node: &NodeId) -> Result<(), NetConfigError> {
        let n = self.node_mut(node)?;
        n.store.remove_ibss();
        n.store.ibss_only_visible = false;
        n.iface = IfaceState::Down;
        medium.disassociate(node)?;
        Ok(())
    }
}
