use std::net::Ipv4Addr;

use serde::Serialize;

use super::scenario::{EventAction, FlowKind, Scenario};
use super::ScenarioError;
use crate::diagnostics::{position_log, DiscoveryResult, PingRecord, PositionSample};
use crate::emulator::{
    EmuError, Emulator, EmulatorConfig, NodeSpec, ScriptAction, TrafficFlow, TrafficKind,
};
use crate::link::{NodeId, Track};
use crate::netconfig::SetupReport;
use crate::routing::{DropReason, PackageRegistry};
use crate::sim::SimTime;

/// Per-node setup outcome, errors rendered as text.
pub type SetupResults = Vec<(NodeId, Result<SetupReport, String>)>;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThroughputSeries {
    pub flow: usize,
    pub src: NodeId,
    pub dst: NodeId,
    /// Delivered bits in each second of the measured window.
    pub samples: Vec<u64>,
    pub sent_packets: u64,
    pub delivered_packets: u64,
    pub delivered_bytes: u64,
}

impl ThroughputSeries {
    /// Mean goodput in bit/s over the samples.
    pub fn mean_bps(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().sum::<u64>() as f64 / self.samples.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PingSeries {
    pub flow: usize,
    pub src: NodeId,
    pub dst: NodeId,
    pub records: Vec<PingRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscoveryOutcome {
    pub flow: usize,
    pub src: NodeId,
    pub dst: NodeId,
    pub result: DiscoveryResult,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatteryReport {
    pub node: NodeId,
    pub final_percent: f64,
    /// (level, seconds to fall from it to the next integer level).
    pub series: Vec<(u32, f64)>,
    /// Seconds since the measurement origin.
    pub depleted_at_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RouteRow {
    pub node: NodeId,
    pub destination: Ipv4Addr,
    pub destination_node: Option<NodeId>,
    pub next_hop: Ipv4Addr,
    pub next_hop_node: Option<NodeId>,
    pub hop_count: u32,
    /// Seconds from the start of the simulation until the node first had a
    /// route to this destination.
    pub converged_s: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct MetricsBundle {
    pub scenario: String,
    pub seed: u64,
    pub duration_s: f64,
    /// Measured seconds actually simulated; shorter than `duration_s` when
    /// the run stopped at the first battery depletion.
    pub elapsed_s: f64,
    pub throughput: Vec<ThroughputSeries>,
    pub pings: Vec<PingSeries>,
    pub discoveries: Vec<DiscoveryOutcome>,
    pub batteries: Vec<BatteryReport>,
    pub routes: Vec<RouteRow>,
    pub drops: Vec<(NodeId, DropReason, u64)>,
    pub setup: SetupResults,
    pub positions: Vec<PositionSample>,
    pub hook_log: Vec<(f64, NodeId, String)>,
}

impl MetricsBundle {
    pub fn flow_throughput(&self, flow: usize) -> Option<&ThroughputSeries> {
        self.throughput.iter().find(|t| t.flow == flow)
    }

    pub fn battery(&self, node: &str) -> Option<&BatteryReport> {
        self.batteries.iter().find(|b| b.node.as_str() == node)
    }

    pub fn drop_total(&self, reason: DropReason) -> u64 {
        self.drops.iter().filter(|d| d.1 == reason).map(|d| d.2).sum()
    }
}

fn at(origin: SimTime, s: f64) -> SimTime {
    origin + SimTime::from_secs_f64(s)
}

/// Builds the emulator for a validated scenario, brings every node up and
/// schedules flows and scripted events. Returns the emulator parked at time
/// zero together with the per-node setup results.
pub fn prepare(
    scenario: &Scenario,
    registry: &PackageRegistry,
) -> Result<(Emulator, SetupResults, Vec<usize>), ScenarioError> {
    scenario.validate(registry)?;
    let emu_err = |e: EmuError| ScenarioError::Validation(e.to_string());
    let cfg = EmulatorConfig {
        seed: scenario.seed,
        mode: scenario.network_mode(),
        medium: scenario.medium.clone(),
        power_save: scenario.power_save.clone(),
        energy: scenario.energy,
        routing: scenario.routing_spec(),
        energy_epoch: 1.0,
    };
    let mut emu = Emulator::new(cfg, registry.clone()).map_err(emu_err)?;
    let origin = SimTime::from_secs_f64(scenario.warmup_s);
    for n in &scenario.nodes {
        emu.add_node(NodeSpec {
            id: NodeId::new(&n.id),
            track: Track::from_waypoints(n.position, &n.waypoints, origin),
            fault: n.fault,
            battery: n.battery_percent,
            ip: Some(scenario.ip_of(n)),
        })
        .map_err(emu_err)?;
    }
    let setup = emu
        .setup_all()
        .into_iter()
        .map(|(id, r)| (id, r.map_err(|e| e.to_string())))
        .collect();

    emu.set_measurement_origin(origin);
    emu.start_energy(origin, scenario.stop_on_depletion);
    let mut apps = Vec::with_capacity(scenario.flows.len());
    for f in &scenario.flows {
        let (src, dst) = (NodeId::new(&f.src), NodeId::new(&f.dst));
        let start = at(origin, f.start_s);
        let stop = at(origin, scenario.flow_stop(f));
        let app = match &f.kind {
            FlowKind::UdpSaturation | FlowKind::Cbr { .. } => {
                let kind = match f.kind {
                    FlowKind::Cbr { rate_bps } => TrafficKind::Cbr { rate_bps },
                    _ => TrafficKind::Saturation,
                };
                emu.add_flow(TrafficFlow {
                    src,
                    dst,
                    kind,
                    packet_size: f.packet_size,
                    start,
                    stop,
                })
                .map_err(emu_err)?
            }
            FlowKind::PingSeries {
                count,
                interval_s,
                timeout_s,
            } => emu
                .add_ping_series(&src, &dst, *count, *interval_s, *timeout_s, start)
                .map_err(emu_err)?,
            FlowKind::Discovery {
                timeout_s,
                session_interval_s,
            } => emu
                .add_discovery(&src, &dst, start, stop, *timeout_s, *session_interval_s)
                .map_err(emu_err)?,
        };
        apps.push(app);
    }
    for ev in &scenario.events {
        let action = match ev.action {
            EventAction::Teardown => ScriptAction::Teardown,
            EventAction::Setup => ScriptAction::Setup,
            EventAction::SetFault => ScriptAction::SetFault(ev.fault.unwrap_or_default()),
        };
        emu.schedule_action(&NodeId::new(&ev.node), at(origin, ev.at_s), action)
            .map_err(emu_err)?;
    }
    Ok((emu, setup, apps))
}

/// Runs a scenario to its duration (or the first depletion when asked to)
/// and collects every metric.
pub fn run(scenario: &Scenario, registry: &PackageRegistry) -> Result<MetricsBundle, ScenarioError> {
    let (mut emu, setup, apps) = prepare(scenario, registry)?;
    let origin = emu.measurement_origin();
    emu.run_until(at(origin, scenario.duration_s));
    let elapsed_s = emu.now().saturating_sub(origin).as_secs_f64();
    Ok(collect(scenario, &emu, setup, &apps, elapsed_s))
}

fn collect(
    scenario: &Scenario,
    emu: &Emulator,
    setup: SetupResults,
    apps: &[usize],
    elapsed_s: f64,
) -> MetricsBundle {
    let origin = emu.measurement_origin();
    let seconds = (elapsed_s - 1e-9).ceil().max(0.0) as usize;
    let mut b = MetricsBundle {
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        duration_s: scenario.duration_s,
        elapsed_s,
        throughput: Vec::new(),
        pings: Vec::new(),
        discoveries: Vec::new(),
        batteries: Vec::new(),
        routes: Vec::new(),
        drops: emu.drops(),
        setup,
        positions: Vec::new(),
        hook_log: emu
            .hook_log()
            .iter()
            .map(|(t, n, m)| (t.as_secs_f64(), n.clone(), m.clone()))
            .collect(),
    };

    for (flow, (f, app)) in scenario.flows.iter().zip(apps).enumerate() {
        let app = *app;
        let (src, dst) = (NodeId::new(&f.src), NodeId::new(&f.dst));
        match f.kind {
            FlowKind::UdpSaturation | FlowKind::Cbr { .. } => {
                let st = emu.flow_stats(app).cloned().unwrap_or_default();
                let mut samples = st.bins.clone();
                samples.resize(seconds, 0);
                b.throughput.push(ThroughputSeries {
                    flow,
                    src,
                    dst,
                    samples,
                    sent_packets: st.sent,
                    delivered_packets: st.delivered_packets,
                    delivered_bytes: st.delivered_bytes,
                });
            }
            FlowKind::PingSeries { .. } => b.pings.push(PingSeries {
                flow,
                src,
                dst,
                records: emu.ping_records(app),
            }),
            FlowKind::Discovery { .. } => {
                if let Some(result) = emu.discovery_result(app) {
                    b.discoveries.push(DiscoveryOutcome { flow, src, dst, result });
                }
            }
        }
    }

    let first_routes = emu.first_route_times();
    for id in emu.node_ids() {
        if let Ok(bat) = emu.battery(&id) {
            b.batteries.push(BatteryReport {
                node: id.clone(),
                final_percent: bat.percent(),
                series: bat.discharge_series(),
                depleted_at_s: bat.depleted_at().map(|t| t.saturating_sub(origin).as_secs_f64()),
            });
        }
        let Ok(table) = emu.routes(&id) else { continue };
        for (dst, entry) in table.iter() {
            let converged = first_routes
                .iter()
                .find(|(n, d, _)| *n == id && d == dst)
                .map(|(_, _, t)| t.as_secs_f64());
            b.routes.push(RouteRow {
                node: id.clone(),
                destination: *dst,
                destination_node: emu.node_by_address(dst).cloned(),
                next_hop: entry.next_hop,
                next_hop_node: emu.node_by_address(&entry.next_hop).cloned(),
                hop_count: entry.hop_count,
                converged_s: converged,
            });
        }
    }

    let tracks: Vec<(NodeId, Track)> = scenario
        .nodes
        .iter()
        .map(|n| (NodeId::new(&n.id), Track::from_waypoints(n.position, &n.waypoints, origin)))
        .collect();
    b.positions = position_log(&tracks, origin, elapsed_s, scenario.position_log_period_s);
    b
}

/// Runs `repeat` copies of the scenario with seeds `seed, seed+1, ...` in
/// parallel. Results come back in seed order.
pub fn run_batch(
    scenario: &Scenario,
    registry: &PackageRegistry,
    repeat: u32,
) -> Vec<Result<MetricsBundle, ScenarioError>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..repeat as u64)
            .map(|r| {
                let mut sc = scenario.clone();
                sc.seed = scenario.seed.wrapping_add(r);
                s.spawn(move || run(&sc, registry))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    })
}
