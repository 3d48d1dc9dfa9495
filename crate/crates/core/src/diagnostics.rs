//! Ping, traceroute, route dumps and position logs over a running emulation.

use std::net::Ipv4Addr;

use serde::Serialize;
use thiserror::Error;

use crate::emulator::{EmuError, Emulator};
use crate::link::{NodeId, Position, Track};
use crate::sim::SimTime;

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} is not associated")]
    NotAssociated(NodeId),
    #[error("destination unreachable at ttl {ttl}")]
    Unreachable { ttl: u8 },
    #[error(transparent)]
    Emulator(#[from] EmuError),
}

fn lift(e: EmuError) -> DiagError {
    match e {
        EmuError::UnknownNode(n) => DiagError::UnknownNode(n),
        other => DiagError::Emulator(other),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PingRecord {
    pub seq: u32,
    pub sent_at: SimTime,
    pub received_at: Option<SimTime>,
    /// Seconds; present iff a reply arrived within the timeout.
    pub rtt: Option<f64>,
}

impl PingRecord {
    pub fn lost(&self) -> bool {
        self.rtt.is_none()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PingOptions {
    pub count: u32,
    pub interval: f64,
    pub timeout: f64,
}

impl Default for PingOptions {
    fn default() -> Self {
        PingOptions {
            count: 30,
            interval: 1.0,
            timeout: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceHop {
    pub ttl: u8,
    pub address: Ipv4Addr,
    pub node: Option<NodeId>,
    pub rtt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceOptions {
    pub max_hops: u8,
    pub probes_per_hop: u32,
    pub timeout: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            max_hops: 16,
            probes_per_hop: 3,
            timeout: 2.0,
        }
    }
}

/// Outcome of the discovery application.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiscoveryResult {
    pub found: bool,
    pub found_after_s: Option<f64>,
    /// The session used the manually entered address after discovery failed.
    pub manual_address: bool,
    pub session_requests: u32,
    pub session_replies: u32,
    /// Longest stretch without a session reply, including the tail.
    pub longest_gap_s: f64,
}

impl DiscoveryResult {
    /// A session is alive when it got replies and never went this long
    /// without one.
    pub const DEAD_AFTER_S: f64 = 10.0;

    pub fn session_ok(&self) -> bool {
        self.session_replies > 0 && self.longest_gap_s < Self::DEAD_AFTER_S
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositionSample {
    /// Seconds since the measurement origin.
    pub time: f64,
    pub node: NodeId,
    pub position: Position,
}

/// Samples every track at `0, period, 2*period, ...` up to `duration`.
/// `offset` is the simulation time that corresponds to sample time 0.
pub fn position_log(tracks: &[(NodeId, Track)], offset: SimTime, duration: f64, period: f64) -> Vec<PositionSample> {
    if !(period > 0.0) || duration < 0.0 {
        return Vec::new();
    }
    let steps = (duration / period + 1e-9).floor() as u64;
    let mut out = Vec::with_capacity(tracks.len() * (steps as usize + 1));
    for k in 0..=steps {
        let time = k as f64 * period;
        let at = offset + SimTime::from_secs_f64(time);
        for (id, track) in tracks {
            out.push(PositionSample {
                time,
                node: id.clone(),
                position: track.position_at(at),
            });
        }
    }
    out
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// RTTs of the successful records, seconds.
pub fn rtts(records: &[PingRecord]) -> Vec<f64> {
    records.iter().filter_map(|r| r.rtt).collect()
}

impl Emulator {
    /// Runs a ping series now and advances the simulation until it is over.
    pub fn ping(&mut self, src: &NodeId, dst: &NodeId, opts: PingOptions) -> Result<Vec<PingRecord>, DiagError> {
        if self.address(src).is_none() {
            self.node_index(src).map_err(lift)?;
            return Err(DiagError::NotAssociated(src.clone()));
        }
        let now = self.now();
        let app = self
            .add_ping_series(src, dst, opts.count, opts.interval, opts.timeout, now)
            .map_err(lift)?;
        let span = opts.interval * opts.count.saturating_sub(1) as f64 + opts.timeout;
        self.run_until(now + SimTime::from_secs_f64(span));
        Ok(self.ping_records(app))
    }

    /// Probes with increasing ttl until `dst` answers. A ttl level with no
    /// answer after all its probes, or no route at the source, is
    /// `Unreachable`.
    pub fn traceroute(&mut self, src: &NodeId, dst: &NodeId, opts: TraceOptions) -> Result<Vec<TraceHop>, DiagError> {
        let s = self.node_index(src).map_err(lift)?;
        let target = self.configured_address(dst).map_err(lift)?;
        if self.address(src).is_none() {
            return Err(DiagError::NotAssociated(src.clone()));
        }
        if self.routes(src).map_err(lift)?.get(&target).is_none() {
            return Err(DiagError::Unreachable { ttl: 1 });
        }
        let mut hops = Vec::new();
        for ttl in 1..=opts.max_hops {
            let mut answer = None;
            for _ in 0..opts.probes_per_hop {
                let sent_at = self.now();
                let key = self.send_probe(s, target, ttl);
                let deadline = sent_at + SimTime::from_secs_f64(opts.timeout);
                self.run_until_or(deadline, |e| e.probes.contains_key(&key));
                if let Some(&(at, from, done)) = self.probes.get(&key) {
                    answer = Some(((at - sent_at).as_secs_f64(), from, done));
                    break;
                }
                if self.halted() {
                    break;
                }
            }
            let Some((rtt, from, done)) = answer else {
                return Err(DiagError::Unreachable { ttl });
            };
            hops.push(TraceHop {
                ttl,
                address: from,
                node: self.node_by_address(&from).cloned(),
                rtt,
            });
            if done {
                return Ok(hops);
            }
        }
        Err(DiagError::Unreachable {
            ttl: opts.max_hops.saturating_add(1),
        })
    }

    /// The node's current routing table as text, one row per destination in
    /// address order.
    pub fn route_dump(&self, node: &NodeId) -> Result<String, DiagError> {
        let table = self.routes(node).map_err(lift)?;
        Ok(table.render(|a| self.node_by_address(a).map(|n| n.to_string())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::{EmulatorConfig, NodeSpec};
    use crate::link::Waypoint;
    use crate::routing::PackageRegistry;

    fn emu(package: &str, nodes: &[(&str, f64)]) -> Emulator {
        let mut e = Emulator::new(EmulatorConfig::ibss(11, package), PackageRegistry::with_builtins()).unwrap();
        for (id, x) in nodes {
            e.add_node(NodeSpec::fixed(id, *x, 0.0)).unwrap();
        }
        for (_, r) in e.setup_all() {
            r.unwrap();
        }
        e
    }

    #[test]
    fn single_hop_rtt_matches_closed_form() {
        let mut e = emu("static", &[("A", 0.0), ("C", 30.0)]);
        let recs = e.ping(&"A".into(), &"C".into(), PingOptions { count: 5, ..Default::default() }).unwrap();
        assert_eq!(recs.len(), 5);
        // Two legs of 64 B at 24 Mbit/s plus 0.5 ms processing each, with
        // the replying node counted as a recent transmitter after the first.
        let airtime = |k: f64| 64.0 * 8.0 / (24e6 * (1.0 - 0.1 * (k - 1.0)));
        let lo = 2.0 * (airtime(1.0) + 0.0005);
        let hi = 2.0 * (airtime(2.0) + 0.0005);
        for r in &recs {
            let rtt = r.rtt.unwrap();
            assert!(rtt >= lo - 2e-6 && rtt <= hi + 2e-6, "{rtt}");
        }
    }

    #[test]
    fn traceroute_follows_chain() {
        let mut e = emu("olsr", &[("A", 0.0), ("B", 40.0), ("C", 80.0)]);
        assert!(matches!(
            e.traceroute(&"A".into(), &"C".into(), TraceOptions::default()),
            Err(DiagError::Unreachable { ttl: 1 })
        ));
        e.run_until(SimTime::from_secs(15));
        let hops = e.traceroute(&"A".into(), &"C".into(), TraceOptions::default()).unwrap();
        let names: Vec<_> = hops.iter().map(|h| h.node.clone().unwrap().to_string()).collect();
        assert_eq!(names, vec!["B", "C"]);
        let hops = e.traceroute(&"A".into(), &"B".into(), TraceOptions::default()).unwrap();
        assert_eq!(hops.len(), 1);
        let table = e.routes(&"A".into()).unwrap();
        let c = e.configured_address(&"C".into()).unwrap();
        assert_eq!(table.get(&c).unwrap().hop_count, 2);
    }

    #[test]
    fn route_dump_rows_and_stability() {
        let mut e = emu("olsr", &[("A", 0.0), ("B", 40.0), ("C", 80.0)]);
        e.run_until(SimTime::from_secs(15));
        let d1 = e.route_dump(&"A".into()).unwrap();
        let d2 = e.route_dump(&"A".into()).unwrap();
        assert_eq!(d1, d2);
        let rows: Vec<&str> = d1.lines().skip(1).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].contains("(B)") && rows[0].ends_with(" 1"));
        assert!(rows[1].starts_with("169.254.1.68 (C)") && rows[1].contains("169.254.1.67 (B)"));
        e.teardown_node(&"A".into()).unwrap();
        assert_eq!(e.route_dump(&"A".into()).unwrap().lines().count(), 1);
        assert!(matches!(e.route_dump(&"Z".into()), Err(DiagError::UnknownNode(_))));
    }

    #[test]
    fn position_log_samples() {
        let still = Track::fixed(Position::new(3.0, 4.0));
        let log = position_log(&[("A".into(), still)], SimTime::ZERO, 10.0, 1.0);
        assert_eq!(log.len(), 11);
        assert!(log.iter().all(|s| s.position == Position::new(3.0, 4.0)));

        let moving = Track::from_waypoints(
            Position::new(0.0, 0.0),
            &[Waypoint { t: 100.0, x: 100.0, y: 0.0 }],
            SimTime::from_secs(5),
        );
        let log = position_log(&[("M".into(), moving)], SimTime::from_secs(5), 100.0, 1.0);
        assert_eq!(log[50].time, 50.0);
        assert_eq!(log[50].position, Position::new(50.0, 0.0));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
