//! The event loop tying the medium, node addressing, routing daemons, traffic
//! sources and batteries together.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use thiserror::Error;

use crate::diagnostics::{DiscoveryResult, PingRecord};
use crate::energy::{BatteryState, EnergyCoefficients, EnergyError, EnergyMode, EnergyStep};
use crate::link::{
    FaultModel, Frame, FrameClass, LinkDst, LinkError, LinkMode, LossReason, Medium, MediumModel, NodeId, Position,
    PowerSaveModel, RadioMode, Track,
};
use crate::netconfig::{default_ip, IpConfig, NetConfig, NetConfigError, NetworkProfile, SetupReport};
use crate::routing::{
    forward, ControlMessage, DropReason, ForwardDecision, HookDescriptor, NetPacket, OlsrPlugin, OlsrState,
    PackageRegistry, PluginContext, RouteTable, RoutingError, RoutingPlugin, Transport, MDNS_GROUP,
};
use crate::sim::{EventId, Scheduler, SeededRng, SimTime};

/// Echo request/reply size on the wire.
pub const ECHO_SIZE: u32 = 64;
const MDNS_SIZE: u32 = 80;
const SESSION_SIZE: u32 = 100;
const LIMITED_BROADCAST: Ipv4Addr = Ipv4Addr::BROADCAST;

#[derive(Debug, Error)]
pub enum EmuError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} already exists")]
    DuplicateNode(NodeId),
    #[error("node {0} has no network address")]
    NotAssociated(NodeId),
    #[error(transparent)]
    NetConfig(#[from] NetConfigError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Link(#[from] LinkError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Clone, Debug)]
pub struct NodeSpec {
    pub id: NodeId,
    pub track: Track,
    pub fault: FaultModel,
    /// Initial charge in percent.
    pub battery: f64,
    /// Link-local default when absent.
    pub ip: Option<IpConfig>,
}

impl NodeSpec {
    pub fn fixed(id: &str, x: f64, y: f64) -> Self {
        NodeSpec {
            id: NodeId::new(id),
            track: Track::fixed(Position::new(x, y)),
            fault: FaultModel::None,
            battery: 100.0,
            ip: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NetworkMode {
    Ibss { ssid: String },
    Infrastructure { ssid: String, ap: NodeId },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingSpec {
    pub package: String,
    /// Overrides on top of the package defaults.
    pub params: BTreeMap<String, f64>,
    /// Static routes per node as (destination, next hop, hops). Nodes without
    /// an entry get a direct route to every peer.
    pub static_routes: BTreeMap<NodeId, Vec<(NodeId, NodeId, u32)>>,
}

impl RoutingSpec {
    pub fn package(name: &str) -> Self {
        RoutingSpec {
            package: name.to_string(),
            params: BTreeMap::new(),
            static_routes: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmulatorConfig {
    pub seed: u64,
    pub mode: NetworkMode,
    pub medium: MediumModel,
    pub power_save: PowerSaveModel,
    pub energy: EnergyCoefficients,
    pub routing: RoutingSpec,
    /// Battery accounting period, seconds.
    pub energy_epoch: f64,
}

impl EmulatorConfig {
    pub fn ibss(seed: u64, package: &str) -> Self {
        EmulatorConfig {
            seed,
            mode: NetworkMode::Ibss { ssid: "manet".into() },
            medium: MediumModel::default(),
            power_save: PowerSaveModel::default(),
            energy: EnergyCoefficients::default(),
            routing: RoutingSpec::package(package),
            energy_epoch: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TrafficKind {
    /// Offers a new packet as soon as the previous one leaves the radio.
    Saturation,
    Cbr { rate_bps: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrafficFlow {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: TrafficKind,
    pub packet_size: u32,
    pub start: SimTime,
    pub stop: SimTime,
}

#[derive(Clone, Debug, Default)]
pub struct FlowStats {
    pub sent: u64,
    pub delivered_packets: u64,
    pub delivered_bytes: u64,
    /// Delivered bits per second since the measurement origin.
    pub bins: Vec<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScriptAction {
    Teardown,
    Setup,
    SetFault(FaultModel),
}

#[derive(Clone, Debug)]
enum Event {
    Arrive {
        node: usize,
        origin: usize,
        dst: Option<usize>,
        pkt: NetPacket,
        relay: bool,
    },
    RoutingTick(usize),
    FlowSend(usize),
    PingSend { app: usize, seq: u32 },
    DiscoveryStart(usize),
    DiscoveryTimeout(usize),
    SessionSend(usize),
    EnergyEpoch,
    Script { node: usize, action: ScriptAction },
}

enum Sent {
    OnAir(SimTime),
    Local,
    Dropped,
}

struct NodeRt {
    id: NodeId,
    ip: IpConfig,
    daemon: Option<Box<dyn RoutingPlugin>>,
    routes: RouteTable,
    tick: Option<(SimTime, EventId)>,
    subscriptions: BTreeSet<Ipv4Addr>,
    battery: BatteryState,
    initial_battery: f64,
}

struct FlowRt {
    spec: TrafficFlow,
    src: usize,
    dst: usize,
    seq: u64,
    stats: FlowStats,
}

pub(crate) struct PingApp {
    pub src: usize,
    pub dst: usize,
    pub id: u32,
    pub timeout: f64,
    pub records: Vec<PingRecord>,
}

pub(crate) struct DiscoveryApp {
    pub src: usize,
    pub dst: usize,
    pub id: u32,
    pub timeout: f64,
    pub session_interval: f64,
    pub stop: SimTime,
    pub query_deadline: Option<SimTime>,
    pub found: bool,
    pub found_at: Option<SimTime>,
    pub target: Option<Ipv4Addr>,
    pub first_send: Option<SimTime>,
    pub sent: u32,
    pub replies: Vec<SimTime>,
}

/// A probe answer: arrival time, answering address, and whether it was the
/// final echo reply (as opposed to a ttl-expiry report).
pub(crate) type ProbeAnswer = (SimTime, Ipv4Addr, bool);

/// Discrete-event emulation of one scenario.
pub struct Emulator {
    cfg: EmulatorConfig,
    sched: Scheduler<Event>,
    medium: Medium,
    net: NetConfig,
    registry: PackageRegistry,
    rng: SeededRng,
    nodes: Vec<NodeRt>,
    index: BTreeMap<NodeId, usize>,
    by_addr: BTreeMap<Ipv4Addr, usize>,
    flows: Vec<FlowRt>,
    pub(crate) pings: Vec<PingApp>,
    pub(crate) discoveries: Vec<DiscoveryApp>,
    pub(crate) probes: BTreeMap<(u32, u32), ProbeAnswer>,
    pub(crate) next_probe_id: u32,
    drops: BTreeMap<(usize, DropReason), u64>,
    first_route: BTreeMap<(usize, Ipv4Addr), SimTime>,
    hook_log: Vec<(SimTime, NodeId, String)>,
    origin: SimTime,
    energy_running: bool,
    last_epoch: SimTime,
    stop_on_depletion: bool,
    depleted: Vec<(SimTime, NodeId)>,
    halted: bool,
}

impl Emulator {
    pub fn new(cfg: EmulatorConfig, registry: PackageRegistry) -> Result<Self, EmuError> {
        cfg.energy.validate()?;
        if !(cfg.energy_epoch > 0.0) {
            return Err(EnergyError::InvalidStep(cfg.energy_epoch).into());
        }
        registry.get(&cfg.routing.package)?;
        let rng = SeededRng::new(cfg.seed);
        let medium = Medium::new(cfg.medium.clone(), cfg.power_save.clone(), rng.fork(1))?;
        Ok(Emulator {
            sched: Scheduler::new(),
            medium,
            net: NetConfig::new(),
            registry,
            rng,
            nodes: Vec::new(),
            index: BTreeMap::new(),
            by_addr: BTreeMap::new(),
            flows: Vec::new(),
            pings: Vec::new(),
            discoveries: Vec::new(),
            probes: BTreeMap::new(),
            next_probe_id: 0x8000_0000,
            drops: BTreeMap::new(),
            first_route: BTreeMap::new(),
            hook_log: Vec::new(),
            origin: SimTime::ZERO,
            energy_running: false,
            last_epoch: SimTime::ZERO,
            stop_on_depletion: false,
            depleted: Vec::new(),
            halted: false,
            cfg,
        })
    }

    pub fn add_node(&mut self, spec: NodeSpec) -> Result<(), EmuError> {
        if self.index.contains_key(&spec.id) {
            return Err(EmuError::DuplicateNode(spec.id));
        }
        let ip = spec.ip.unwrap_or_else(|| default_ip(&spec.id));
        ip.validate()?;
        self.medium.add_node(spec.id.clone(), spec.track)?;
        self.medium.set_fault(&spec.id, spec.fault)?;
        self.net.add_node(spec.id.clone());
        let i = self.nodes.len();
        self.index.insert(spec.id.clone(), i);
        self.by_addr.entry(ip.address).or_insert(i);
        self.nodes.push(NodeRt {
            id: spec.id,
            ip,
            daemon: None,
            routes: RouteTable::new(),
            tick: None,
            subscriptions: BTreeSet::from([MDNS_GROUP]),
            battery: BatteryState::new(spec.battery, SimTime::ZERO),
            initial_battery: spec.battery,
        });
        Ok(())
    }

    pub(crate) fn idx(&self, node: &NodeId) -> Result<usize, EmuError> {
        self.index
            .get(node)
            .copied()
            .ok_or_else(|| EmuError::UnknownNode(node.clone()))
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn config(&self) -> &EmulatorConfig {
        &self.cfg
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn netconfig(&self) -> &NetConfig {
        &self.net
    }

    pub fn node_ids(&self) -> Vec<NodeId> {
        self.nodes.iter().map(|n| n.id.clone()).collect()
    }

    /// Current address, only while associated.
    pub fn address(&self, node: &NodeId) -> Option<Ipv4Addr> {
        self.net.address(node)
    }

    /// Configured address whether or not the node is up.
    pub fn configured_address(&self, node: &NodeId) -> Result<Ipv4Addr, EmuError> {
        Ok(self.nodes[self.idx(node)?].ip.address)
    }

    pub fn node_by_address(&self, addr: &Ipv4Addr) -> Option<&NodeId> {
        self.by_addr.get(addr).map(|&i| &self.nodes[i].id)
    }

    pub fn neighbors(&self, node: &NodeId) -> Result<BTreeSet<NodeId>, EmuError> {
        Ok(self.medium.neighbors(node, self.now())?)
    }

    pub fn position(&self, node: &NodeId) -> Result<Position, EmuError> {
        Ok(self.medium.position(node, self.now())?)
    }

    pub fn routes(&self, node: &NodeId) -> Result<RouteTable, EmuError> {
        Ok(self.nodes[self.idx(node)?].routes.clone())
    }

    pub fn olsr_state(&self, node: &NodeId) -> Result<Option<&OlsrState>, EmuError> {
        let n = &self.nodes[self.idx(node)?];
        Ok(n
            .daemon
            .as_ref()
            .and_then(|d| d.as_any().downcast_ref::<OlsrPlugin>())
            .and_then(|p| p.state()))
    }

    pub fn routing_running(&self, node: &NodeId) -> Result<bool, EmuError> {
        let n = &self.nodes[self.idx(node)?];
        Ok(n.daemon.as_ref().is_some_and(|d| d.is_running()))
    }

    pub fn hook_log(&self) -> &[(SimTime, NodeId, String)] {
        &self.hook_log
    }

    /// Drop counters as (node, reason, count), ordered by node then reason.
    pub fn drops(&self) -> Vec<(NodeId, DropReason, u64)> {
        self.drops
            .iter()
            .map(|(&(n, r), &c)| (self.nodes[n].id.clone(), r, c))
            .collect()
    }

    pub fn drop_count(&self, reason: DropReason) -> u64 {
        self.drops
            .iter()
            .filter(|((_, r), _)| *r == reason)
            .map(|(_, c)| *c)
            .sum()
    }

    /// When each node first held a route to each destination.
    pub fn first_route_times(&self) -> Vec<(NodeId, Ipv4Addr, SimTime)> {
        self.first_route
            .iter()
            .map(|(&(n, a), &t)| (self.nodes[n].id.clone(), a, t))
            .collect()
    }

    pub fn battery(&self, node: &NodeId) -> Result<&BatteryState, EmuError> {
        Ok(&self.nodes[self.idx(node)?].battery)
    }

    pub fn depletions(&self) -> &[(SimTime, NodeId)] {
        &self.depleted
    }

    pub fn halted(&self) -> bool {
        self.halted
    }

    pub fn flow_stats(&self, flow: usize) -> Option<&FlowStats> {
        self.flows.get(flow).map(|f| &f.stats)
    }

    pub fn flow_count(&self) -> usize {
        self.flows.len()
    }

    pub fn measurement_origin(&self) -> SimTime {
        self.origin
    }

    fn count_drop(&mut self, node: usize, reason: DropReason) {
        *self.drops.entry((node, reason)).or_insert(0) += 1;
    }

    fn schedule(&mut self, at: SimTime, e: Event) -> EventId {
        let at = at.max(self.now());
        self.sched.schedule(at, e).expect("not in the past")
    }

    // ---- lifecycle -------------------------------------------------------

    /// Brings every node up in declaration order (the AP first in
    /// infrastructure mode). Failures are reported per node; the others
    /// still come up.
    pub fn setup_all(&mut self) -> Vec<(NodeId, Result<SetupReport, EmuError>)> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        if let NetworkMode::Infrastructure { ap, .. } = &self.cfg.mode {
            if let Some(&a) = self.index.get(ap) {
                order.retain(|&i| i != a);
                order.insert(0, a);
            }
        }
        order
            .into_iter()
            .map(|i| {
                let id = self.nodes[i].id.clone();
                let r = self.setup_node(&id);
                (id, r)
            })
            .collect()
    }

    /// Joins the scenario network and runs the routing package start hooks.
    pub fn setup_node(&mut self, node: &NodeId) -> Result<SetupReport, EmuError> {
        let i = self.idx(node)?;
        let now = self.now();
        let ip = self.nodes[i].ip;
        let report = match self.cfg.mode.clone() {
            NetworkMode::Ibss { ssid } => {
                self.net
                    .one_step_setup(&mut self.medium, node, NetworkProfile::ibss(ssid), Some(ip), now)?
            }
            NetworkMode::Infrastructure { ssid, ap } => {
                let role = if *node == ap {
                    LinkMode::InfrastructureAp
                } else {
                    LinkMode::InfrastructureStation
                };
                self.net.teardown(&mut self.medium, node)?;
                self.net.connect_infrastructure(
                    &mut self.medium,
                    node,
                    NetworkProfile::infrastructure(ssid, 0),
                    role,
                    Some(ip),
                )?;
                SetupReport {
                    node: node.to_string(),
                    steps: Vec::new(),
                    address: Some(ip.address),
                }
            }
        };
        self.start_routing(i)?;
        Ok(report)
    }

    /// Runs the package stop hooks, then leaves the network.
    pub fn teardown_node(&mut self, node: &NodeId) -> Result<(), EmuError> {
        let i = self.idx(node)?;
        self.stop_routing(i);
        self.net.teardown(&mut self.medium, node)?;
        Ok(())
    }

    pub fn set_fault(&mut self, node: &NodeId, fault: FaultModel) -> Result<(), EmuError> {
        self.medium.set_fault(node, fault)?;
        Ok(())
    }

    fn static_table(&self, i: usize) -> RouteTable {
        let mut t = RouteTable::new();
        match self.cfg.routing.static_routes.get(&self.nodes[i].id) {
            Some(routes) => {
                for (dst, via, hops) in routes {
                    if let (Some(&d), Some(&v)) = (self.index.get(dst), self.index.get(via)) {
                        t.insert(self.nodes[d].ip.address, self.nodes[v].ip.address, *hops);
                    }
                }
            }
            None => {
                for (j, n) in self.nodes.iter().enumerate() {
                    if j != i {
                        t.insert(n.ip.address, n.ip.address, 1);
                    }
                }
            }
        }
        t
    }

    fn start_routing(&mut self, i: usize) -> Result<(), EmuError> {
        let pkg = self.registry.get(&self.cfg.routing.package)?.clone();
        if self.nodes[i].daemon.is_none() {
            let ctx = PluginContext {
                node: self.nodes[i].id.clone(),
                address: self.nodes[i].ip.address,
                rng: self.rng.fork(1000 + i as u64),
                params: self.cfg.routing.params.clone(),
                static_routes: self.static_table(i),
            };
            self.nodes[i].daemon = Some(pkg.instantiate(&ctx)?);
        }
        for hook in &pkg.start {
            self.run_hook(i, hook);
        }
        Ok(())
    }

    fn stop_routing(&mut self, i: usize) {
        let Ok(pkg) = self.registry.get(&self.cfg.routing.package).cloned() else {
            return;
        };
        for hook in &pkg.stop {
            self.run_hook(i, hook);
        }
    }

    fn run_hook(&mut self, i: usize, hook: &HookDescriptor) {
        let now = self.now();
        match hook {
            HookDescriptor::StartDaemon => {
                let Some(d) = self.nodes[i].daemon.as_mut() else { return };
                if d.is_running() {
                    return;
                }
                let out = d.start(now);
                self.after_daemon(i, out);
            }
            HookDescriptor::StopDaemon => {
                if let Some(d) = self.nodes[i].daemon.as_mut() {
                    d.stop();
                }
                self.after_daemon(i, Vec::new());
            }
            HookDescriptor::FlushRoutes => self.nodes[i].routes = RouteTable::new(),
            HookDescriptor::Log(text) => self.hook_log.push((now, self.nodes[i].id.clone(), text.clone())),
        }
    }

    /// Refreshes the route cache, reschedules the daemon timer and sends
    /// whatever the daemon produced.
    fn after_daemon(&mut self, i: usize, out: Vec<ControlMessage>) {
        let now = self.now();
        let routes = self.nodes[i].daemon.as_ref().map(|d| d.routes()).unwrap_or_default();
        for (dst, _) in routes.iter() {
            self.first_route.entry((i, *dst)).or_insert(now);
        }
        self.nodes[i].routes = routes;

        let deadline = self.nodes[i].daemon.as_ref().and_then(|d| d.next_deadline());
        let current = self.nodes[i].tick;
        if current.map(|c| c.0) != deadline {
            if let Some((_, id)) = current {
                self.sched.cancel(id);
            }
            self.nodes[i].tick = deadline.map(|t| {
                let at = t.max(now);
                (at, self.schedule(at, Event::RoutingTick(i)))
            });
        }
        for msg in out {
            self.send_control(i, msg);
        }
    }

    fn send_control(&mut self, i: usize, msg: ControlMessage) {
        let src = self.nodes[i].ip.address;
        let size = msg.size_bytes();
        let pkt = NetPacket::group(src, LIMITED_BROADCAST, size, Transport::Control(msg));
        self.route_packet(i, pkt, true);
    }

    // ---- scheduling of workloads ----------------------------------------

    /// Per-second throughput bins and battery accounting count from here.
    pub fn set_measurement_origin(&mut self, t: SimTime) {
        self.origin = t;
    }

    /// Starts battery accounting at `at` (every node's charge is reset to its
    /// initial value there).
    pub fn start_energy(&mut self, at: SimTime, stop_on_depletion: bool) {
        for n in &mut self.nodes {
            n.battery = BatteryState::new(n.initial_battery, at);
        }
        self.energy_running = true;
        self.last_epoch = at;
        self.stop_on_depletion = stop_on_depletion;
        let first = at + SimTime::from_secs_f64(self.cfg.energy_epoch);
        self.schedule(first, Event::EnergyEpoch);
    }

    pub fn add_flow(&mut self, spec: TrafficFlow) -> Result<usize, EmuError> {
        let src = self.idx(&spec.src)?;
        let dst = self.idx(&spec.dst)?;
        let id = self.flows.len();
        let start = spec.start;
        self.flows.push(FlowRt {
            spec,
            src,
            dst,
            seq: 0,
            stats: FlowStats::default(),
        });
        self.schedule(start, Event::FlowSend(id));
        Ok(id)
    }

    /// Schedules `count` echo requests from `src` to `dst` starting at `start`.
    pub fn add_ping_series(
        &mut self,
        src: &NodeId,
        dst: &NodeId,
        count: u32,
        interval: f64,
        timeout: f64,
        start: SimTime,
    ) -> Result<usize, EmuError> {
        let s = self.idx(src)?;
        let d = self.idx(dst)?;
        let app = self.pings.len();
        self.pings.push(PingApp {
            src: s,
            dst: d,
            id: app as u32 + 1,
            timeout,
            records: Vec::with_capacity(count as usize),
        });
        for seq in 0..count {
            let at = start + SimTime::from_secs_f64(interval * seq as f64);
            self.schedule(at, Event::PingSend { app, seq });
        }
        Ok(app)
    }

    /// Final records of a ping series; requests without a reply within the
    /// timeout are marked lost.
    pub fn ping_records(&self, app: usize) -> Vec<PingRecord> {
        let Some(p) = self.pings.get(app) else {
            return Vec::new();
        };
        p.records
            .iter()
            .map(|r| {
                let ok = r
                    .received_at
                    .filter(|rx| (*rx - r.sent_at).as_secs_f64() <= p.timeout);
                PingRecord {
                    seq: r.seq,
                    sent_at: r.sent_at,
                    received_at: ok,
                    rtt: ok.map(|rx| (rx - r.sent_at).as_secs_f64()),
                }
            })
            .collect()
    }

    /// mDNS-style discovery of `dst` by `src` followed by a unicast session
    /// (one request per `session_interval`) until `stop`.
    pub fn add_discovery(
        &mut self,
        src: &NodeId,
        dst: &NodeId,
        start: SimTime,
        stop: SimTime,
        timeout: f64,
        session_interval: f64,
    ) -> Result<usize, EmuError> {
        let s = self.idx(src)?;
        let d = self.idx(dst)?;
        let app = self.discoveries.len();
        self.discoveries.push(DiscoveryApp {
            src: s,
            dst: d,
            id: app as u32 + 1,
            timeout,
            session_interval,
            stop,
            query_deadline: None,
            found: false,
            found_at: None,
            target: None,
            first_send: None,
            sent: 0,
            replies: Vec::new(),
        });
        self.schedule(start, Event::DiscoveryStart(app));
        Ok(app)
    }

    pub fn discovery_result(&self, app: usize) -> Option<DiscoveryResult> {
        let a = self.discoveries.get(app)?;
        let mut gap: f64 = 0.0;
        let mut prev = a.first_send;
        for r in &a.replies {
            if let Some(p) = prev {
                gap = gap.max((*r - p).as_secs_f64());
            }
            prev = Some(*r);
        }
        let end = self.now().min(a.stop);
        if let Some(p) = prev {
            gap = gap.max(end.saturating_sub(p).as_secs_f64());
        }
        Some(DiscoveryResult {
            found: a.found,
            found_after_s: a.found_at.zip(a.query_deadline).map(|(f, d)| {
                (f.as_secs_f64() - (d.as_secs_f64() - a.timeout)).max(0.0)
            }),
            manual_address: a.target.is_some() && !a.found,
            session_requests: a.sent,
            session_replies: a.replies.len() as u32,
            longest_gap_s: gap,
        })
    }

    pub fn schedule_action(&mut self, node: &NodeId, at: SimTime, action: ScriptAction) -> Result<(), EmuError> {
        let i = self.idx(node)?;
        self.schedule(at, Event::Script { node: i, action });
        Ok(())
    }

    // ---- event loop --------------------------------------------------------

    /// Processes events up to and including `t`, then parks the clock at `t`.
    /// Stops early (without advancing) once halted by battery depletion.
    pub fn run_until(&mut self, t: SimTime) {
        self.run_until_or(t, |_| false);
    }

    /// Like [`run_until`](Self::run_until) but returns as soon as `done`
    /// holds after an event. Returns true if it stopped early.
    pub(crate) fn run_until_or(&mut self, t: SimTime, mut done: impl FnMut(&Emulator) -> bool) -> bool {
        while !self.halted {
            let Some((at, e)) = self.sched.pop_until(t) else { break };
            self.handle(at, e);
            if done(self) {
                return true;
            }
        }
        if !self.halted && t > self.now() {
            self.sched.advance_to(t);
        }
        false
    }

    fn handle(&mut self, now: SimTime, e: Event) {
        match e {
            Event::Arrive {
                node,
                origin,
                dst,
                pkt,
                relay,
            } => self.on_arrive(node, origin, dst, pkt, relay),
            Event::RoutingTick(i) => {
                if self.nodes[i].tick.map(|t| t.0) != Some(now) {
                    return;
                }
                self.nodes[i].tick = None;
                let out = match self.nodes[i].daemon.as_mut() {
                    Some(d) => d.tick(now),
                    None => Vec::new(),
                };
                self.after_daemon(i, out);
            }
            Event::FlowSend(f) => self.on_flow_send(f),
            Event::PingSend { app, seq } => {
                let (src, dst, id) = {
                    let p = &self.pings[app];
                    (p.src, p.dst, p.id)
                };
                self.pings[app].records.push(PingRecord {
                    seq,
                    sent_at: now,
                    received_at: None,
                    rtt: None,
                });
                let (s, d) = (self.nodes[src].ip.address, self.nodes[dst].ip.address);
                let pkt = NetPacket::unicast(s, d, ECHO_SIZE, Transport::EchoRequest { id, seq });
                self.route_packet(src, pkt, true);
            }
            Event::DiscoveryStart(app) => {
                let (src, id, timeout) = {
                    let a = &self.discoveries[app];
                    (a.src, a.id, a.timeout)
                };
                let deadline = now + SimTime::from_secs_f64(timeout);
                self.discoveries[app].query_deadline = Some(deadline);
                let pkt = NetPacket::group(
                    self.nodes[src].ip.address,
                    MDNS_GROUP,
                    MDNS_SIZE,
                    Transport::MdnsQuery { id },
                );
                self.route_packet(src, pkt, true);
                self.schedule(deadline, Event::DiscoveryTimeout(app));
            }
            Event::DiscoveryTimeout(app) => {
                let a = &mut self.discoveries[app];
                if a.target.is_none() {
                    // Fall back to the manually entered peer address.
                    a.target = Some(self.nodes[a.dst].ip.address);
                }
                self.schedule(now, Event::SessionSend(app));
            }
            Event::SessionSend(app) => {
                let a = &mut self.discoveries[app];
                if now >= a.stop {
                    return;
                }
                let Some(target) = a.target else { return };
                let seq = a.sent;
                a.sent += 1;
                a.first_send.get_or_insert(now);
                let (src, id, every) = (a.src, a.id, a.session_interval);
                let pkt = NetPacket::unicast(
                    self.nodes[src].ip.address,
                    target,
                    SESSION_SIZE,
                    Transport::Session { id, seq, reply: false },
                );
                self.route_packet(src, pkt, true);
                self.schedule(now + SimTime::from_secs_f64(every), Event::SessionSend(app));
            }
            Event::EnergyEpoch => self.on_energy_epoch(now),
            Event::Script { node, action } => {
                let id = self.nodes[node].id.clone();
                // Scripted failures are part of the experiment; they are
                // recorded in the hook log rather than aborting the run.
                let r = match action {
                    ScriptAction::Teardown => self.teardown_node(&id).map(|_| ()),
                    ScriptAction::Setup => self.setup_node(&id).map(|_| ()),
                    ScriptAction::SetFault(f) => self.set_fault(&id, f),
                };
                let msg = match r {
                    Ok(()) => format!("{action:?} ok"),
                    Err(e) => format!("{action:?} failed: {e}"),
                };
                self.hook_log.push((now, id, msg));
            }
        }
    }

    fn on_flow_send(&mut self, f: usize) {
        let now = self.now();
        let (src, dst, size, kind, stop) = {
            let fl = &self.flows[f];
            (fl.src, fl.dst, fl.spec.packet_size, fl.spec.kind, fl.spec.stop)
        };
        if now >= stop {
            return;
        }
        let seq = self.flows[f].seq;
        self.flows[f].seq += 1;
        self.flows[f].stats.sent += 1;
        let pkt = NetPacket::unicast(
            self.nodes[src].ip.address,
            self.nodes[dst].ip.address,
            size,
            Transport::Udp { flow: f, seq },
        );
        let sent = self.route_packet(src, pkt, true);
        let serialization = SimTime::from_secs_f64(size as f64 * 8.0 / self.cfg.medium.nominal_capacity);
        let next = match kind {
            TrafficKind::Saturation => match sent {
                Sent::OnAir(end) => end.max(now + SimTime::from_micros(1)),
                Sent::Local | Sent::Dropped => now + serialization,
            },
            TrafficKind::Cbr { rate_bps } => now + SimTime::from_secs_f64(size as f64 * 8.0 / rate_bps),
        };
        self.schedule(next, Event::FlowSend(f));
    }

    fn on_energy_epoch(&mut self, now: SimTime) {
        if !self.energy_running {
            return;
        }
        let from = self.last_epoch;
        let dt = (now - from).as_secs_f64();
        for i in 0..self.nodes.len() {
            let id = self.nodes[i].id.clone();
            let (tx, rx) = self.medium.interface_busy(&id, from, now).unwrap_or((0.0, 0.0));
            let mode = match self.medium.radio_mode(&id) {
                Ok(RadioMode::Off) | Err(_) => EnergyMode::Off,
                Ok(RadioMode::Station { power_save: true }) => EnergyMode::PowerSave,
                Ok(_) => EnergyMode::Awake,
            };
            let routing = self.nodes[i]
                .daemon
                .as_ref()
                .is_some_and(|d| d.is_running() && d.protocol() != "static");
            let coeffs = self.cfg.energy;
            let step = self.nodes[i]
                .battery
                .step(&coeffs, now, dt, tx.min(dt), rx.min(dt - tx.min(dt)), mode, routing);
            if let Ok(EnergyStep::Depleted { at }) = step {
                self.depleted.push((at, id));
                if self.stop_on_depletion {
                    self.halted = true;
                }
            }
        }
        self.last_epoch = now;
        self.medium.forget_before(from);
        if !self.halted {
            self.schedule(now + SimTime::from_secs_f64(self.cfg.energy_epoch), Event::EnergyEpoch);
        }
    }

    // ---- packet path -------------------------------------------------------

    fn route_packet(&mut self, i: usize, mut pkt: NetPacket, originated: bool) -> Sent {
        let Some(local) = self.net.address(&self.nodes[i].id) else {
            self.count_drop(i, DropReason::NotAssociated);
            return Sent::Dropped;
        };
        let n = &self.nodes[i];
        match forward(local, &n.subscriptions, &n.routes, &pkt, originated) {
            ForwardDecision::DeliverLocal => {
                self.deliver_local(i, pkt);
                Sent::Local
            }
            ForwardDecision::LinkLocal { deliver, transmit } => {
                if !originated && !matches!(pkt.payload, Transport::Control(_)) {
                    self.count_drop(i, DropReason::MulticastNotForwarded);
                }
                let mut result = Sent::Local;
                if transmit {
                    result = self.transmit(i, i, None, pkt.clone(), false);
                }
                if deliver {
                    self.deliver_local(i, pkt);
                }
                result
            }
            ForwardDecision::NextHop { next_hop, ttl } => {
                pkt.ttl = ttl;
                match self.by_addr.get(&next_hop).copied() {
                    Some(nh) => self.transmit(i, i, Some(nh), pkt, !originated),
                    None => {
                        self.count_drop(i, DropReason::NoRoute);
                        Sent::Dropped
                    }
                }
            }
            ForwardDecision::Drop(reason) => {
                self.count_drop(i, reason);
                if reason == DropReason::TtlExpired {
                    if let Transport::EchoRequest { id, seq } = pkt.payload {
                        let report = NetPacket::unicast(local, pkt.src, ECHO_SIZE, Transport::TimeExceeded { id, seq });
                        self.route_packet(i, report, true);
                    }
                }
                Sent::Dropped
            }
        }
    }

    /// Puts `pkt` on the air from `tx` on behalf of link-layer origin `origin`.
    fn transmit(&mut self, tx: usize, origin: usize, dst: Option<usize>, pkt: NetPacket, forwarded: bool) -> Sent {
        let now = self.now();
        let class = match pkt.payload {
            Transport::Control(_) => FrameClass::Control,
            _ => FrameClass::Data,
        };
        let frame = Frame {
            src: self.nodes[origin].id.clone(),
            dst: match dst {
                Some(d) => LinkDst::Unicast(self.nodes[d].id.clone()),
                None => LinkDst::Broadcast,
            },
            multicast: pkt.is_group(),
            size: pkt.size.max(1),
            class,
            forwarded,
            payload: (),
        };
        let tx_id = self.nodes[tx].id.clone();
        let outcome = match self.medium.transmit(&frame, &tx_id, now) {
            Ok(o) => o,
            Err(LinkError::QueueFull(_)) => {
                self.count_drop(tx, DropReason::QueueFull);
                return Sent::Dropped;
            }
            Err(_) => {
                self.count_drop(tx, DropReason::NotAssociated);
                return Sent::Dropped;
            }
        };
        if let Some(loss) = outcome.loss {
            let reason = match loss {
                LossReason::DestinationUnreachable => DropReason::LinkLoss,
                LossReason::HubUnavailable => DropReason::HubUnavailable,
                LossReason::NoAccessPoint => DropReason::NoAccessPoint,
            };
            self.count_drop(tx, reason);
        }
        for d in outcome.deliveries {
            let Some(&node) = self.index.get(&d.node) else { continue };
            self.schedule(
                d.at,
                Event::Arrive {
                    node,
                    origin,
                    dst,
                    pkt: pkt.clone(),
                    relay: d.relay,
                },
            );
        }
        Sent::OnAir(outcome.end)
    }

    fn on_arrive(&mut self, node: usize, origin: usize, dst: Option<usize>, pkt: NetPacket, relay: bool) {
        if !self.medium.is_associated(&self.nodes[node].id) {
            return;
        }
        if relay {
            self.transmit(node, origin, dst, pkt.clone(), true);
            if dst.is_some() {
                return;
            }
            // Relayed broadcasts are also heard by the relay itself, but it
            // does not count them as multicast it declined to forward.
            if let Some(local) = self.net.address(&self.nodes[node].id) {
                let n = &self.nodes[node];
                if let ForwardDecision::LinkLocal { deliver: true, .. } =
                    forward(local, &n.subscriptions, &n.routes, &pkt, false)
                {
                    self.deliver_local(node, pkt);
                }
            }
            return;
        }
        self.route_packet(node, pkt, false);
    }

    fn deliver_local(&mut self, i: usize, pkt: NetPacket) {
        let now = self.now();
        let Some(local) = self.net.address(&self.nodes[i].id) else { return };
        match pkt.payload {
            Transport::Control(msg) => {
                if pkt.src == local {
                    return;
                }
                let out = match self.nodes[i].daemon.as_mut() {
                    Some(d) if d.is_running() => d.on_control_packet(&msg, pkt.src, now),
                    _ => return,
                };
                self.after_daemon(i, out);
            }
            Transport::Udp { flow, .. } => {
                let origin = self.origin;
                let Some(f) = self.flows.get_mut(flow) else { return };
                if f.dst != i || now < origin {
                    return;
                }
                f.stats.delivered_packets += 1;
                f.stats.delivered_bytes += pkt.size as u64;
                let bin = ((now - origin).as_micros() / 1_000_000) as usize;
                if f.stats.bins.len() <= bin {
                    f.stats.bins.resize(bin + 1, 0);
                }
                f.stats.bins[bin] += pkt.size as u64 * 8;
            }
            Transport::EchoRequest { id, seq } => {
                let reply = NetPacket::unicast(local, pkt.src, pkt.size, Transport::EchoReply { id, seq });
                self.route_packet(i, reply, true);
            }
            Transport::EchoReply { id, seq } => {
                if id >= 0x8000_0000 {
                    self.probes.entry((id, seq)).or_insert((now, pkt.src, true));
                } else if let Some(app) = self.pings.get_mut(id as usize - 1) {
                    if let Some(r) = app.records.iter_mut().find(|r| r.seq == seq) {
                        r.received_at.get_or_insert(now);
                    }
                }
            }
            Transport::TimeExceeded { id, seq } => {
                self.probes.entry((id, seq)).or_insert((now, pkt.src, false));
            }
            Transport::MdnsQuery { id } => {
                let reply = NetPacket::unicast(local, pkt.src, MDNS_SIZE, Transport::MdnsResponse { id });
                self.route_packet(i, reply, true);
            }
            Transport::MdnsResponse { id } => {
                let Some(a) = self.discoveries.get_mut(id as usize - 1) else { return };
                let in_time = a.query_deadline.is_some_and(|d| now <= d);
                if a.src == i && in_time && pkt.src == self.nodes[a.dst].ip.address && !a.found {
                    a.found = true;
                    a.found_at = Some(now);
                    a.target = Some(pkt.src);
                }
            }
            Transport::Session { id, seq, reply } => {
                if reply {
                    if let Some(a) = self.discoveries.get_mut(id as usize - 1) {
                        if a.src == i {
                            a.replies.push(now);
                        }
                    }
                } else {
                    let back = NetPacket::unicast(local, pkt.src, pkt.size, Transport::Session { id, seq, reply: true });
                    self.route_packet(i, back, true);
                }
            }
        }
    }

    /// Sends one echo probe with the given ttl; used by traceroute.
    pub(crate) fn send_probe(&mut self, src: usize, dst: Ipv4Addr, ttl: u8) -> (u32, u32) {
        let id = self.next_probe_id;
        self.next_probe_id = self.next_probe_id.wrapping_add(1).max(0x8000_0000);
        let mut pkt = NetPacket::unicast(self.nodes[src].ip.address, dst, ECHO_SIZE, Transport::EchoRequest { id, seq: 0 });
        pkt.ttl = ttl;
        self.route_packet(src, pkt, true);
        (id, 0)
    }

    pub(crate) fn node_index(&self, node: &NodeId) -> Result<usize, EmuError> {
        self.idx(node)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(package: &str) -> Emulator {
        let mut emu = Emulator::new(EmulatorConfig::ibss(7, package), PackageRegistry::with_builtins()).unwrap();
        emu.add_node(NodeSpec::fixed("A", 0.0, 0.0)).unwrap();
        emu.add_node(NodeSpec::fixed("B", 40.0, 0.0)).unwrap();
        emu.add_node(NodeSpec::fixed("C", 80.0, 0.0)).unwrap();
        for (_, r) in emu.setup_all() {
            r.unwrap();
        }
        emu
    }

    #[test]
    fn olsr_chain_converges() {
        let mut emu = chain("olsr");
        emu.run_until(SimTime::from_secs(15));
        let a = NodeId::new("A");
        let t = emu.routes(&a).unwrap();
        let b_ip = emu.configured_address(&"B".into()).unwrap();
        let c_ip = emu.configured_address(&"C".into()).unwrap();
        assert_eq!(t.get(&b_ip).map(|e| (e.next_hop, e.hop_count)), Some((b_ip, 1)));
        assert_eq!(t.get(&c_ip).map(|e| (e.next_hop, e.hop_count)), Some((b_ip, 2)));
        let st = emu.olsr_state(&a).unwrap().unwrap();
        assert_eq!(st.mpr_set(), &BTreeSet::from([b_ip]));
    }

    #[test]
    fn saturation_single_hop_fills_capacity() {
        let mut emu = Emulator::new(EmulatorConfig::ibss(1, "static"), PackageRegistry::with_builtins()).unwrap();
        emu.add_node(NodeSpec::fixed("A", 0.0, 0.0)).unwrap();
        emu.add_node(NodeSpec::fixed("C", 30.0, 0.0)).unwrap();
        for (_, r) in emu.setup_all() {
            r.unwrap();
        }
        emu.add_flow(TrafficFlow {
            src: "A".into(),
            dst: "C".into(),
            kind: TrafficKind::Saturation,
            packet_size: 1470,
            start: SimTime::ZERO,
            stop: SimTime::from_secs(10),
        })
        .unwrap();
        emu.run_until(SimTime::from_secs(11));
        let s = emu.flow_stats(0).unwrap();
        let mbps = s.delivered_bytes as f64 * 8.0 / 10.0 / 1e6;
        assert!((mbps - 24.0).abs() < 0.05, "{mbps}");
        assert_eq!(s.bins.iter().sum::<u64>(), s.delivered_bytes * 8);
    }
}
