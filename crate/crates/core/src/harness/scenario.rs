//! Scenario documents (JSON) and their validation.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioError;
use crate::emulator::{NetworkMode, RoutingSpec};
use crate::energy::EnergyCoefficients;
use crate::link::{FaultModel, MediumModel, NodeId, Position, PowerSaveModel, Waypoint};
use crate::netconfig::{default_ip, IpConfig};
use crate::routing::{PackageRegistry, PluginContext, RouteTable};
use crate::sim::SeededRng;

fn default_warmup() -> f64 {
    15.0
}
fn default_battery() -> f64 {
    100.0
}
fn default_period() -> f64 {
    1.0
}
fn default_ssid() -> String {
    "manet".into()
}
fn default_infra_ssid() -> String {
    "office".into()
}
fn default_package() -> String {
    "olsr".into()
}
fn default_packet_size() -> u32 {
    1470
}
fn default_ping_count() -> u32 {
    30
}
fn one_second() -> f64 {
    1.0
}
fn two_seconds() -> f64 {
    2.0
}
fn three_seconds() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Measured time, after the warm-up.
    pub duration_s: f64,
    /// Time given to addressing and routing before any flow starts. All
    /// other times in the document are relative to the end of the warm-up.
    #[serde(default = "default_warmup")]
    pub warmup_s: f64,
    pub mode: ModeSpec,
    pub nodes: Vec<NodeEntry>,
    #[serde(default)]
    pub medium: MediumModel,
    #[serde(default)]
    pub power_save: PowerSaveModel,
    #[serde(default)]
    pub routing: RoutingEntry,
    #[serde(default)]
    pub flows: Vec<FlowEntry>,
    #[serde(default)]
    pub energy: EnergyCoefficients,
    #[serde(default)]
    pub events: Vec<EventEntry>,
    /// End the run when the first battery reaches 0%.
    #[serde(default)]
    pub stop_on_depletion: bool,
    #[serde(default = "default_period")]
    pub position_log_period_s: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeSpec {
    Ibss {
        #[serde(default = "default_ssid")]
        ssid: String,
    },
    Infrastructure {
        ap: String,
        #[serde(default = "default_infra_ssid")]
        ssid: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: String,
    pub position: Position,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub waypoints: Vec<Waypoint>,
    #[serde(default)]
    pub fault: FaultModel,
    #[serde(default = "default_battery")]
    pub battery_percent: f64,
    /// `a.b.c.d/len`; a link-local address derived from the id otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ip: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoutingEntry {
    #[serde(default = "default_package")]
    pub package: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// Static routes per node; nodes left out route directly to every peer.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub routes: BTreeMap<String, Vec<StaticRouteEntry>>,
}

impl Default for RoutingEntry {
    fn default() -> Self {
        RoutingEntry {
            package: default_package(),
            params: BTreeMap::new(),
            routes: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticRouteEntry {
    pub dst: String,
    pub via: String,
    pub hops: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowEntry {
    pub src: String,
    pub dst: String,
    pub kind: FlowKind,
    #[serde(default = "default_packet_size")]
    pub packet_size: u32,
    #[serde(default)]
    pub start_s: f64,
    /// Defaults to the end of the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowKind {
    UdpSaturation,
    Cbr {
        rate_bps: f64,
    },
    PingSeries {
        #[serde(default = "default_ping_count")]
        count: u32,
        #[serde(default = "one_second")]
        interval_s: f64,
        #[serde(default = "two_seconds")]
        timeout_s: f64,
    },
    Discovery {
        #[serde(default = "three_seconds")]
        timeout_s: f64,
        #[serde(default = "one_second")]
        session_interval_s: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventAction {
    Teardown,
    Setup,
    SetFault,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventEntry {
    pub at_s: f64,
    pub node: String,
    pub action: EventAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultModel>,
}

/// Parses `a.b.c.d/len` or a bare address (taken as /16).
pub fn parse_ip(text: &str) -> Result<IpConfig, String> {
    let (addr, len) = match text.split_once('/') {
        Some((a, l)) => (a, l.parse::<u8>().map_err(|_| format!("bad prefix length in {text:?}"))?),
        None => (text, 16),
    };
    let address: Ipv4Addr = addr.parse().map_err(|_| format!("bad IPv4 address {addr:?}"))?;
    IpConfig::new(address, len).map_err(|e| e.to_string())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    /// Reads, parses and validates a scenario file.
    pub fn load(path: &Path, registry: &PackageRegistry) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let s = Self::from_json(&text)?;
        s.validate(registry)?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes") + "\n"
    }

    pub fn node(&self, id: &str) -> Option<&NodeEntry> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn ip_of(&self, node: &NodeEntry) -> IpConfig {
        node.ip
            .as_deref()
            .and_then(|t| parse_ip(t).ok())
            .unwrap_or_else(|| default_ip(&NodeId::new(&node.id)))
    }

    pub fn network_mode(&self) -> NetworkMode {
        match &self.mode {
            ModeSpec::Ibss { ssid } => NetworkMode::Ibss { ssid: ssid.clone() },
            ModeSpec::Infrastructure { ap, ssid } => NetworkMode::Infrastructure {
                ssid: ssid.clone(),
                ap: NodeId::new(ap),
            },
        }
    }

    pub fn routing_spec(&self) -> RoutingSpec {
        RoutingSpec {
            package: self.routing.package.clone(),
            params: self.routing.params.clone(),
            static_routes: self
                .routing
                .routes
                .iter()
                .map(|(node, rows)| {
                    (
                        NodeId::new(node),
                        rows.iter()
                            .map(|r| (NodeId::new(&r.dst), NodeId::new(&r.via), r.hops))
                            .collect(),
                    )
                })
                .collect(),
        }
    }

    pub fn flow_stop(&self, f: &FlowEntry) -> f64 {
        f.stop_s.unwrap_or(self.duration_s)
    }

    pub fn validate(&self, registry: &PackageRegistry) -> Result<(), ScenarioError> {
        let fail = |m: String| Err(ScenarioError::Validation(m));
        if self.name.trim().is_empty() {
            return fail("scenario name is empty".into());
        }
        if !(self.duration_s.is_finite() && self.duration_s > 0.0) {
            return fail("duration_s must be positive".into());
        }
        if !(self.warmup_s.is_finite() && self.warmup_s >= 0.0) {
            return fail("warmup_s must be >= 0".into());
        }
        if !(self.position_log_period_s > 0.0) {
            return fail("position_log_period_s must be positive".into());
        }
        if self.nodes.is_empty() {
            return fail("scenario has no nodes".into());
        }
        let mut ids = BTreeSet::new();
        let mut ips: BTreeMap<Ipv4Addr, &str> = BTreeMap::new();
        for n in &self.nodes {
            if n.id.trim().is_empty() {
                return fail("node with empty id".into());
            }
            if !ids.insert(n.id.as_str()) {
                return fail(format!("duplicate node id {:?}", n.id));
            }
            if !n.position.is_finite() || n.waypoints.iter().any(|w| !(w.t.is_finite() && w.x.is_finite() && w.y.is_finite())) {
                return fail(format!("node {:?} has a non-finite position", n.id));
            }
            if !(n.battery_percent > 0.0 && n.battery_percent <= 100.0) {
                return fail(format!("node {:?}: battery_percent must be in (0, 100]", n.id));
            }
            let ip = match &n.ip {
                Some(t) => parse_ip(t).map_err(|m| ScenarioError::Validation(format!("node {:?}: {m}", n.id)))?,
                None => default_ip(&NodeId::new(&n.id)),
            };
            if let Some(other) = ips.insert(ip.address, &n.id) {
                return fail(format!("duplicate IP {} for nodes {other:?} and {:?}", ip.address, n.id));
            }
        }
        let known = |id: &str| ids.contains(id);
        if let ModeSpec::Infrastructure { ap, ssid } = &self.mode {
            if !known(ap) {
                return fail(format!("access point {ap:?} is not a node"));
            }
            if ssid.is_empty() {
                return fail("empty ssid".into());
            }
        }
        if let ModeSpec::Ibss { ssid } = &self.mode {
            if ssid.is_empty() {
                return fail("empty ssid".into());
            }
        }
        self.medium.validate().map_err(|e| ScenarioError::Validation(e.to_string()))?;
        self.power_save.validate().map_err(|e| ScenarioError::Validation(e.to_string()))?;
        self.energy.validate().map_err(|e| ScenarioError::Validation(e.to_string()))?;

        let pkg = registry
            .get(&self.routing.package)
            .map_err(|e| ScenarioError::Validation(e.to_string()))?;
        let probe = PluginContext {
            node: NodeId::new("validate"),
            address: Ipv4Addr::new(169, 254, 0, 1),
            rng: SeededRng::new(0),
            params: self.routing.params.clone(),
            static_routes: RouteTable::new(),
        };
        pkg.instantiate(&probe)
            .map_err(|e| ScenarioError::Validation(format!("routing: {e}")))?;
        for (node, rows) in &self.routing.routes {
            if !known(node) {
                return fail(format!("static routes for unknown node {node:?}"));
            }
            for r in rows {
                if !known(&r.dst) || !known(&r.via) || r.hops == 0 {
                    return fail(format!("bad static route at {node:?}: {r:?}"));
                }
            }
        }

        for (i, f) in self.flows.iter().enumerate() {
            let ctx = |m: &str| ScenarioError::Validation(format!("flow {i}: {m}"));
            if !known(&f.src) || !known(&f.dst) {
                return Err(ctx("references an unknown node"));
            }
            if f.src == f.dst {
                return Err(ctx("src and dst are the same node"));
            }
            let stop = self.flow_stop(f);
            if !(f.start_s >= 0.0 && f.start_s < stop && stop <= self.duration_s + 1e-9) {
                return Err(ctx("needs 0 <= start_s < stop_s <= duration_s"));
            }
            if f.packet_size == 0 || f.packet_size > 65_535 {
                return Err(ctx("packet_size must be in 1..=65535"));
            }
            match &f.kind {
                FlowKind::UdpSaturation => {}
                FlowKind::Cbr { rate_bps } => {
                    if !(rate_bps.is_finite() && *rate_bps > 0.0) {
                        return Err(ctx("rate_bps must be positive"));
                    }
                }
                FlowKind::PingSeries {
                    count,
                    interval_s,
                    timeout_s,
                } => {
                    if *count == 0 || !(*interval_s > 0.0) || !(*timeout_s > 0.0) {
                        return Err(ctx("ping needs count >= 1 and positive interval/timeout"));
                    }
                }
                FlowKind::Discovery {
                    timeout_s,
                    session_interval_s,
                } => {
                    if !(*timeout_s > 0.0) || !(*session_interval_s > 0.0) {
                        return Err(ctx("discovery needs positive timeout and session interval"));
                    }
                }
            }
        }
        for (i, ev) in self.events.iter().enumerate() {
            if !known(&ev.node) {
                return fail(format!("event {i}: unknown node {:?}", ev.node));
            }
            if !(ev.at_s >= 0.0 && ev.at_s <= self.duration_s) {
                return fail(format!("event {i}: at_s outside the run"));
            }
            if (ev.action == EventAction::SetFault) != ev.fault.is_some() {
                return fail(format!("event {i}: fault is required for set_fault and only there"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"name": "t", "duration_s": 10, "mode": {"kind": "ibss"},
            "nodes": [{"id": "A", "position": {"x": 0, "y": 0}},
                      {"id": "B", "position": {"x": 10, "y": 0}}]}"#
    }

    #[test]
    fn defaults_applied() {
        let s = Scenario::from_json(minimal()).unwrap();
        s.validate(&PackageRegistry::with_builtins()).unwrap();
        assert_eq!(s.warmup_s, 15.0);
        assert_eq!(s.routing.package, "olsr");
        assert_eq!(s.nodes[0].battery_percent, 100.0);
        assert_eq!(s.medium, MediumModel::default());
        assert_eq!(s.mode, ModeSpec::Ibss { ssid: "manet".into() });
    }

    #[test]
    fn parse_error_has_position() {
        let err = Scenario::from_json("{\n  \"name\": \"x\",\n  \"bogus\": 1\n}").unwrap_err();
        match err {
            ScenarioError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_errors() {
        let reg = PackageRegistry::with_builtins();
        let base = Scenario::from_json(minimal()).unwrap();

        let mut s = base.clone();
        s.routing.package = "aodv".into();
        assert!(matches!(s.validate(&reg), Err(ScenarioError::Validation(_))));

        let mut s = base.clone();
        s.nodes.clear();
        assert!(matches!(s.validate(&reg), Err(ScenarioError::Validation(_))));

        let mut s = base.clone();
        s.nodes[1].ip = Some(default_ip(&NodeId::new("A")).address.to_string());
        assert!(s.validate(&reg).is_err());

        let mut s = base.clone();
        s.mode = ModeSpec::Infrastructure {
            ap: "Z".into(),
            ssid: "x".into(),
        };
        assert!(s.validate(&reg).is_err());

        let mut s = base.clone();
        s.flows.push(FlowEntry {
            src: "A".into(),
            dst: "Q".into(),
            kind: FlowKind::UdpSaturation,
            packet_size: 1470,
            start_s: 0.0,
            stop_s: None,
        });
        assert!(s.validate(&reg).is_err());

        let mut s = base;
        s.routing.params.insert("hello_interval_s".into(), -1.0);
        assert!(s.validate(&reg).is_err());
    }

    #[test]
    fn ip_parsing() {
        assert_eq!(parse_ip("10.0.0.1/8").unwrap().prefix_len, 8);
        assert_eq!(parse_ip("169.254.3.4").unwrap().prefix_len, 16);
        assert!(parse_ip("10.0.0.300").is_err());
        assert!(parse_ip("10.0.0.1/40").is_err());
    }
}
