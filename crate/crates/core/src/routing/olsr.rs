//! OLSR (RFC 3626) core: link sensing, 2-hop neighbors, MPR selection,
//! TC flooding through MPRs and hop-count route calculation.
//!
//! No hysteresis, HNA or MID; willingness is always WILL_DEFAULT.

use std::any::Any;
use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use super::{ControlMessage, RouteTable, RoutingError, RoutingPlugin};
use crate::sim::{SeededRng, SimTime};

pub const WILL_DEFAULT: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OlsrParams {
    pub hello_interval: f64,
    pub tc_interval: f64,
    pub neighbor_hold: f64,
    pub topology_hold: f64,
    pub duplicate_hold: f64,
    /// Emission times are drawn from `interval * (1 ± jitter)`.
    pub jitter: f64,
}

impl Default for OlsrParams {
    fn default() -> Self {
        OlsrParams {
            hello_interval: 2.0,
            tc_interval: 5.0,
            neighbor_hold: 6.0,
            topology_hold: 15.0,
            duplicate_hold: 30.0,
            jitter: 0.1,
        }
    }
}

impl OlsrParams {
    pub const KEYS: [&'static str; 6] = [
        "hello_interval_s",
        "tc_interval_s",
        "neighbor_hold_s",
        "topology_hold_s",
        "duplicate_hold_s",
        "jitter_fraction",
    ];

    /// Defaults overridden by the given keys (see [`OlsrParams::KEYS`]).
    pub fn from_map(params: &BTreeMap<String, f64>) -> Result<Self, RoutingError> {
        let mut p = OlsrParams::default();
        for (key, &v) in params {
            let slot = match key.as_str() {
                "hello_interval_s" => &mut p.hello_interval,
                "tc_interval_s" => &mut p.tc_interval,
                "neighbor_hold_s" => &mut p.neighbor_hold,
                "topology_hold_s" => &mut p.topology_hold,
                "duplicate_hold_s" => &mut p.duplicate_hold,
                "jitter_fraction" => &mut p.jitter,
                _ => {
                    return Err(RoutingError::InvalidParameter {
                        key: key.clone(),
                        reason: format!("not an OLSR parameter (expected one of {:?})", Self::KEYS),
                    })
                }
            };
            *slot = v;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), RoutingError> {
        let bad = |key: &str, reason: &str| {
            Err(RoutingError::InvalidParameter {
                key: key.into(),
                reason: reason.into(),
            })
        };
        for (key, v) in [
            ("hello_interval_s", self.hello_interval),
            ("tc_interval_s", self.tc_interval),
            ("neighbor_hold_s", self.neighbor_hold),
            ("topology_hold_s", self.topology_hold),
            ("duplicate_hold_s", self.duplicate_hold),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(key, "must be a positive number of seconds");
            }
        }
        if !(0.0..0.5).contains(&self.jitter) {
            return bad("jitter_fraction", "must be in [0, 0.5)");
        }
        if self.neighbor_hold <= self.hello_interval * (1.0 + self.jitter) {
            return bad("neighbor_hold_s", "must exceed the longest HELLO interval");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum LinkStatus {
    /// Heard, not yet confirmed both ways.
    Asym,
    Sym,
    /// Symmetric and selected as MPR by the sender.
    Mpr,
    Lost,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HelloLink {
    pub addr: Ipv4Addr,
    pub status: LinkStatus,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OlsrBody {
    Hello { willingness: u8, links: Vec<HelloLink> },
    Tc { ansn: u16, advertised: Vec<Ipv4Addr> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OlsrMessage {
    pub originator: Ipv4Addr,
    pub seq: u16,
    pub ttl: u8,
    pub hop_count: u8,
    pub body: OlsrBody,
}

impl OlsrMessage {
    /// Wire size: IP+UDP (28) + packet header (4) + message header (12) + body.
    pub fn size_bytes(&self) -> u32 {
        let body = match &self.body {
            OlsrBody::Hello { links, .. } => {
                let statuses: BTreeSet<LinkStatus> = links.iter().map(|l| l.status).collect();
                4 + 4 * statuses.len() as u32 + 4 * links.len() as u32
            }
            OlsrBody::Tc { advertised, .. } => 4 + 4 * advertised.len() as u32,
        };
        28 + 4 + 12 + body
    }

    pub fn is_hello(&self) -> bool {
        matches!(self.body, OlsrBody::Hello { .. })
    }
}

/// RFC 3626 §19 wrap-around comparison: is `a` newer than `b`?
pub fn seq_newer(a: u16, b: u16) -> bool {
    (a > b && a - b <= 32768) || (b > a && b - a > 32768)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LinkTuple {
    asym_until: SimTime,
    sym_until: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct TopologyTuple {
    ansn: u16,
    expires: SimTime,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OlsrStats {
    pub hellos_sent: u64,
    pub tcs_sent: u64,
    pub tcs_forwarded: u64,
    pub duplicates_dropped: u64,
    pub malformed_dropped: u64,
    pub mpr_recomputations: u64,
    /// Recomputations after which some strict 2-hop neighbor was uncovered.
    pub coverage_violations: u64,
}

/// What to do with a received TC.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TcOutcome {
    /// Not from a symmetric neighbor, or our own message coming back.
    Ignored,
    Duplicate,
    /// Processed; `forward` is the copy to re-broadcast when we are an MPR of
    /// the previous hop.
    Accepted { forward: Option<OlsrMessage> },
    /// Older than what we already hold for that originator; not applied but
    /// still flooded.
    Stale { forward: Option<OlsrMessage> },
}

#[derive(Clone, Debug)]
pub struct OlsrState {
    me: Ipv4Addr,
    params: OlsrParams,
    clock: SimTime,
    links: BTreeMap<Ipv4Addr, LinkTuple>,
    /// (via neighbor, 2-hop address) → expiry.
    two_hop: BTreeMap<(Ipv4Addr, Ipv4Addr), SimTime>,
    mprs: BTreeSet<Ipv4Addr>,
    selectors: BTreeMap<Ipv4Addr, SimTime>,
    /// (last hop, destination) → tuple.
    topology: BTreeMap<(Ipv4Addr, Ipv4Addr), TopologyTuple>,
    duplicates: BTreeMap<(Ipv4Addr, u16), SimTime>,
    msg_seq: u16,
    ansn: u16,
    last_advertised: BTreeSet<Ipv4Addr>,
    stats: OlsrStats,
}

impl OlsrState {
    pub fn new(me: Ipv4Addr, params: OlsrParams, now: SimTime) -> Self {
        OlsrState {
            me,
            params,
            clock: now,
            links: BTreeMap::new(),
            two_hop: BTreeMap::new(),
            mprs: BTreeSet::new(),
            selectors: BTreeMap::new(),
            topology: BTreeMap::new(),
            duplicates: BTreeMap::new(),
            msg_seq: 0,
            ansn: 0,
            last_advertised: BTreeSet::new(),
            stats: OlsrStats::default(),
        }
    }

    pub fn address(&self) -> Ipv4Addr {
        self.me
    }

    pub fn params(&self) -> &OlsrParams {
        &self.params
    }

    pub fn stats(&self) -> OlsrStats {
        self.stats
    }

    fn hold(&self, now: SimTime, secs: f64) -> SimTime {
        now + SimTime::from_secs_f64(secs)
    }

    fn next_seq(&mut self) -> u16 {
        self.msg_seq = self.msg_seq.wrapping_add(1);
        self.msg_seq
    }

    pub fn is_symmetric(&self, addr: &Ipv4Addr) -> bool {
        self.links.get(addr).is_some_and(|l| l.sym_until > self.clock)
    }

    pub fn symmetric_neighbors(&self) -> BTreeSet<Ipv4Addr> {
        self.links
            .iter()
            .filter(|(_, l)| l.sym_until > self.clock)
            .map(|(a, _)| *a)
            .collect()
    }

    /// Heard neighbors with their current link status as we would advertise it.
    pub fn neighbor_set(&self) -> BTreeMap<Ipv4Addr, LinkStatus> {
        self.links
            .iter()
            .map(|(a, l)| (*a, self.link_status(a, l)))
            .collect()
    }

    fn link_status(&self, addr: &Ipv4Addr, l: &LinkTuple) -> LinkStatus {
        if l.sym_until > self.clock {
            if self.mprs.contains(addr) {
                LinkStatus::Mpr
            } else {
                LinkStatus::Sym
            }
        } else if l.asym_until > self.clock {
            LinkStatus::Asym
        } else {
            LinkStatus::Lost
        }
    }

    /// Symmetric neighbor → the strict 2-hop neighbors it reaches.
    pub fn two_hop_set(&self) -> BTreeMap<Ipv4Addr, BTreeSet<Ipv4Addr>> {
        let sym = self.symmetric_neighbors();
        let mut out: BTreeMap<Ipv4Addr, BTreeSet<Ipv4Addr>> = BTreeMap::new();
        for &(via, target) in self.two_hop.keys() {
            if sym.contains(&via) && target != self.me && !sym.contains(&target) {
                out.entry(via).or_default().insert(target);
            }
        }
        out
    }

    pub fn mpr_set(&self) -> &BTreeSet<Ipv4Addr> {
        &self.mprs
    }

    pub fn mpr_selectors(&self) -> BTreeSet<Ipv4Addr> {
        self.selectors.keys().copied().collect()
    }

    /// (last hop, destination, ansn) advertisements currently held.
    pub fn topology_set(&self) -> Vec<(Ipv4Addr, Ipv4Addr, u16)> {
        self.topology
            .iter()
            .map(|(&(last, dst), t)| (last, dst, t.ansn))
            .collect()
    }

    /// Whether every strict 2-hop neighbor is reached through a current MPR.
    pub fn mpr_coverage_holds(&self) -> bool {
        covers(&self.two_hop_set(), &self.mprs)
    }

    fn recompute_mprs(&mut self) {
        let sym = self.symmetric_neighbors();
        let two_hop = self.two_hop_set();
        let mut degree: BTreeMap<Ipv4Addr, usize> = BTreeMap::new();
        for n in &sym {
            degree.insert(*n, two_hop.get(n).map_or(0, |s| s.len()));
        }
        self.mprs = select_mprs(&degree, &two_hop);
        self.stats.mpr_recomputations += 1;
        if !covers(&two_hop, &self.mprs) || !self.mprs.is_subset(&sym) {
            self.stats.coverage_violations += 1;
        }
    }

    /// Removes expired tuples. Returns true when neighborhood or topology
    /// changed.
    pub fn purge(&mut self, now: SimTime) -> bool {
        let sym_before = self.symmetric_neighbors();
        self.clock = self.clock.max(now);
        let t = self.clock;
        let links_before = self.links.len();
        self.links.retain(|_, l| l.asym_until > t || l.sym_until > t);
        let two_hop_before = self.two_hop.len();
        self.two_hop.retain(|_, exp| *exp > t);
        self.selectors.retain(|_, exp| *exp > t);
        let top_before = self.topology.len();
        self.topology.retain(|_, tup| tup.expires > t);
        self.duplicates.retain(|_, exp| *exp > t);
        let neighborhood_changed = links_before != self.links.len()
            || two_hop_before != self.two_hop.len()
            || sym_before != self.symmetric_neighbors();
        if neighborhood_changed {
            self.recompute_mprs();
        }
        neighborhood_changed || top_before != self.topology.len()
    }

    /// Earliest expiry among held tuples.
    pub fn next_expiry(&self) -> Option<SimTime> {
        let t = self.clock;
        let link_times = self
            .links
            .values()
            .flat_map(|l| [l.asym_until, l.sym_until])
            .filter(|&x| x > t);
        link_times
            .chain(self.two_hop.values().copied())
            .chain(self.selectors.values().copied())
            .chain(self.topology.values().map(|x| x.expires))
            .min()
    }

    pub fn emit_hello(&mut self) -> OlsrMessage {
        let links = self
            .links
            .iter()
            .map(|(a, l)| HelloLink {
                addr: *a,
                status: self.link_status(a, l),
            })
            .collect();
        self.stats.hellos_sent += 1;
        OlsrMessage {
            originator: self.me,
            seq: self.next_seq(),
            ttl: 1,
            hop_count: 0,
            body: OlsrBody::Hello {
                willingness: WILL_DEFAULT,
                links,
            },
        }
    }

    /// Returns true when the MPR selector set changed.
    pub fn process_hello(&mut self, msg: &OlsrMessage, from: Ipv4Addr, now: SimTime) -> Result<bool, RoutingError> {
        let OlsrBody::Hello { links, .. } = &msg.body else {
            return Err(self.malformed("expected HELLO"));
        };
        if msg.ttl != 1 || msg.originator != from || from.is_unspecified() || from == self.me {
            return Err(self.malformed("HELLO must come one hop from its originator"));
        }
        let listed: BTreeSet<Ipv4Addr> = links.iter().map(|l| l.addr).collect();
        if listed.len() != links.len() {
            return Err(self.malformed("HELLO lists an address twice"));
        }
        self.purge(now);
        let hold = self.hold(self.clock, self.params.neighbor_hold);
        let clock = self.clock;
        let entry = self.links.entry(from).or_insert(LinkTuple {
            asym_until: SimTime::ZERO,
            sym_until: SimTime::ZERO,
        });
        entry.asym_until = hold;
        if let Some(me) = links.iter().find(|l| l.addr == self.me) {
            entry.sym_until = match me.status {
                LinkStatus::Lost => clock,
                _ => hold,
            };
        }

        let selectors_before = self.mpr_selectors();
        if self.is_symmetric(&from) {
            for l in links.iter().filter(|l| l.addr != self.me) {
                match l.status {
                    LinkStatus::Sym | LinkStatus::Mpr => {
                        self.two_hop.insert((from, l.addr), hold);
                    }
                    LinkStatus::Asym | LinkStatus::Lost => {
                        self.two_hop.remove(&(from, l.addr));
                    }
                }
            }
            match links.iter().find(|l| l.addr == self.me).map(|l| l.status) {
                Some(LinkStatus::Mpr) => {
                    self.selectors.insert(from, hold);
                }
                Some(_) => {
                    self.selectors.remove(&from);
                }
                None => {}
            }
        } else {
            self.two_hop.retain(|(via, _), _| *via != from);
            self.selectors.remove(&from);
        }
        self.recompute_mprs();
        Ok(selectors_before != self.mpr_selectors())
    }

    /// TC advertising the MPR selector set; `None` when nobody selected us.
    pub fn emit_tc(&mut self) -> Option<OlsrMessage> {
        let advertised = self.mpr_selectors();
        if advertised.is_empty() {
            return None;
        }
        if advertised != self.last_advertised {
            self.ansn = self.ansn.wrapping_add(1);
            self.last_advertised = advertised.clone();
        }
        let seq = self.next_seq();
        self.duplicates
            .insert((self.me, seq), self.hold(self.clock, self.params.duplicate_hold));
        self.stats.tcs_sent += 1;
        Some(OlsrMessage {
            originator: self.me,
            seq,
            ttl: 255,
            hop_count: 0,
            body: OlsrBody::Tc {
                ansn: self.ansn,
                advertised: advertised.into_iter().collect(),
            },
        })
    }

    pub fn process_tc(&mut self, msg: &OlsrMessage, from: Ipv4Addr, now: SimTime) -> Result<TcOutcome, RoutingError> {
        let OlsrBody::Tc { ansn, advertised } = &msg.body else {
            return Err(self.malformed("expected TC"));
        };
        if msg.originator.is_unspecified() || msg.ttl == 0 {
            return Err(self.malformed("TC with no originator or zero ttl"));
        }
        self.purge(now);
        // Only messages from symmetric neighbors are considered (RFC 3626 §3.4).
        if !self.is_symmetric(&from) || msg.originator == self.me {
            return Ok(TcOutcome::Ignored);
        }
        let key = (msg.originator, msg.seq);
        if self.duplicates.contains_key(&key) {
            self.stats.duplicates_dropped += 1;
            return Ok(TcOutcome::Duplicate);
        }
        self.duplicates
            .insert(key, self.hold(self.clock, self.params.duplicate_hold));

        let forward = if self.selectors.contains_key(&from) && msg.ttl > 1 {
            self.stats.tcs_forwarded += 1;
            Some(OlsrMessage {
                ttl: msg.ttl - 1,
                hop_count: msg.hop_count.saturating_add(1),
                ..msg.clone()
            })
        } else {
            None
        };

        let last = msg.originator;
        let newer_held = self
            .topology
            .iter()
            .any(|(&(l, _), t)| l == last && seq_newer(t.ansn, *ansn));
        if newer_held {
            return Ok(TcOutcome::Stale { forward });
        }
        self.topology
            .retain(|&(l, _), t| !(l == last && seq_newer(*ansn, t.ansn)));
        let expires = self.hold(self.clock, self.params.topology_hold);
        for dst in advertised {
            if *dst != last {
                self.topology.insert((last, *dst), TopologyTuple { ansn: *ansn, expires });
            }
        }
        Ok(TcOutcome::Accepted { forward })
    }

    fn malformed(&mut self, what: &str) -> RoutingError {
        self.stats.malformed_dropped += 1;
        RoutingError::MalformedMessage(what.into())
    }

    /// Shortest hop-count routes over symmetric links, 2-hop links and
    /// topology edges. Ties go to the lowest next-hop address.
    pub fn compute_routes(&self) -> RouteTable {
        let sym = self.symmetric_neighbors();
        let mut edges: BTreeMap<Ipv4Addr, BTreeSet<Ipv4Addr>> = BTreeMap::new();
        for &(via, target) in self.two_hop.keys() {
            if sym.contains(&via) {
                edges.entry(via).or_default().insert(target);
            }
        }
        for &(last, dst) in self.topology.keys() {
            edges.entry(last).or_default().insert(dst);
        }

        let mut table: BTreeMap<Ipv4Addr, (Ipv4Addr, u32)> = sym.iter().map(|n| (*n, (*n, 1))).collect();
        let mut frontier: Vec<Ipv4Addr> = sym.iter().copied().collect();
        let mut hops = 1;
        while !frontier.is_empty() {
            let mut next: BTreeMap<Ipv4Addr, Ipv4Addr> = BTreeMap::new();
            for u in &frontier {
                let via = table[u].0;
                for v in edges.get(u).into_iter().flatten() {
                    if *v == self.me || table.contains_key(v) {
                        continue;
                    }
                    next.entry(*v)
                        .and_modify(|best| *best = (*best).min(via))
                        .or_insert(via);
                }
            }
            hops += 1;
            for (dst, via) in &next {
                table.insert(*dst, (*via, hops));
            }
            frontier = next.into_keys().collect();
        }
        let mut out = RouteTable::new();
        for (dst, (via, h)) in table {
            out.insert(dst, via, h);
        }
        out
    }
}

/// RFC 3626 §8.3.1 greedy heuristic.
///
/// `neighbors` maps each symmetric neighbor to its degree; `two_hop` maps a
/// neighbor to the strict 2-hop nodes reachable through it.
pub fn select_mprs(
    neighbors: &BTreeMap<Ipv4Addr, usize>,
    two_hop: &BTreeMap<Ipv4Addr, BTreeSet<Ipv4Addr>>,
) -> BTreeSet<Ipv4Addr> {
    let reach = |n: &Ipv4Addr| two_hop.get(n).cloned().unwrap_or_default();
    let mut uncovered: BTreeSet<Ipv4Addr> = neighbors.keys().flat_map(&reach).collect();
    let mut mprs = BTreeSet::new();

    for target in uncovered.clone() {
        let providers: Vec<&Ipv4Addr> = neighbors.keys().filter(|n| reach(n).contains(&target)).collect();
        if let [only] = providers[..] {
            mprs.insert(*only);
        }
    }
    for m in &mprs {
        for t in reach(m) {
            uncovered.remove(&t);
        }
    }

    while !uncovered.is_empty() {
        let best = neighbors
            .iter()
            .filter(|(n, _)| !mprs.contains(*n))
            .map(|(n, deg)| (reach(n).intersection(&uncovered).count(), *deg, *n))
            .filter(|(gain, _, _)| *gain > 0)
            // Largest gain, then larger degree, then lowest address.
            .max_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(b.2.cmp(&a.2)));
        let Some((_, _, n)) = best else { break };
        for t in reach(&n) {
            uncovered.remove(&t);
        }
        mprs.insert(n);
    }
    mprs
}

fn covers(two_hop: &BTreeMap<Ipv4Addr, BTreeSet<Ipv4Addr>>, mprs: &BTreeSet<Ipv4Addr>) -> bool {
    let all: BTreeSet<&Ipv4Addr> = two_hop.values().flatten().collect();
    all.into_iter()
        .all(|t| mprs.iter().any(|m| two_hop.get(m).is_some_and(|s| s.contains(t))))
}

/// OLSR daemon for one node.
pub struct OlsrPlugin {
    me: Ipv4Addr,
    params: OlsrParams,
    rng: SeededRng,
    state: Option<OlsrState>,
    next_hello: SimTime,
    next_tc: SimTime,
}

impl OlsrPlugin {
    pub fn new(me: Ipv4Addr, params: OlsrParams, rng: SeededRng) -> Self {
        OlsrPlugin {
            me,
            params,
            rng,
            state: None,
            next_hello: SimTime::MAX,
            next_tc: SimTime::MAX,
        }
    }

    pub fn state(&self) -> Option<&OlsrState> {
        self.state.as_ref()
    }

    fn jittered(&mut self, interval: f64) -> SimTime {
        let j = self.params.jitter;
        SimTime::from_secs_f64(self.rng.uniform(interval * (1.0 - j), interval * (1.0 + j)))
    }
}

impl RoutingPlugin for OlsrPlugin {
    fn protocol(&self) -> &str {
        "olsr"
    }

    fn start(&mut self, now: SimTime) -> Vec<ControlMessage> {
        self.state = Some(OlsrState::new(self.me, self.params, now));
        // Random initial phase so co-started nodes do not emit in lockstep.
        self.next_hello = now + SimTime::from_secs_f64(self.rng.uniform(0.0, self.params.hello_interval));
        self.next_tc = now + self.jittered(self.params.tc_interval);
        Vec::new()
    }

    fn stop(&mut self) {
        self.state = None;
        self.next_hello = SimTime::MAX;
        self.next_tc = SimTime::MAX;
    }

    fn is_running(&self) -> bool {
        self.state.is_some()
    }

    fn on_control_packet(&mut self, msg: &ControlMessage, from: Ipv4Addr, now: SimTime) -> Vec<ControlMessage> {
        let ControlMessage::Olsr(m) = msg else {
            return Vec::new();
        };
        let Some(state) = self.state.as_mut() else {
            return Vec::new();
        };
        match &m.body {
            OlsrBody::Hello { .. } => {
                if let Ok(true) = state.process_hello(m, from, now) {
                    if !state.mpr_selectors().is_empty() {
                        let soon = now
                            + SimTime::from_secs_f64(self.rng.uniform(0.0, self.params.jitter * self.params.tc_interval));
                        self.next_tc = self.next_tc.min(soon);
                    }
                }
                Vec::new()
            }
            OlsrBody::Tc { .. } => match state.process_tc(m, from, now) {
                Ok(TcOutcome::Accepted { forward: Some(f) } | TcOutcome::Stale { forward: Some(f) }) => {
                    vec![ControlMessage::Olsr(f)]
                }
                _ => Vec::new(),
            },
        }
    }

    fn tick(&mut self, now: SimTime) -> Vec<ControlMessage> {
        let mut out = Vec::new();
        if self.state.is_none() {
            return out;
        }
        if now >= self.next_hello {
            let hello_gap = self.jittered(self.params.hello_interval);
            let state = self.state.as_mut().expect("running");
            state.purge(now);
            out.push(ControlMessage::Olsr(state.emit_hello()));
            self.next_hello = now + hello_gap;
        }
        if now >= self.next_tc {
            let tc_gap = self.jittered(self.params.tc_interval);
            let state = self.state.as_mut().expect("running");
            state.purge(now);
            if let Some(tc) = state.emit_tc() {
                out.push(ControlMessage::Olsr(tc));
            }
            self.next_tc = now + tc_gap;
        }
        if let Some(state) = self.state.as_mut() {
            state.purge(now);
        }
        out
    }

    fn next_deadline(&self) -> Option<SimTime> {
        let state = self.state.as_ref()?;
        let mut t = self.next_hello.min(self.next_tc);
        if let Some(e) = state.next_expiry() {
            t = t.min(e);
        }
        Some(t)
    }

    fn routes(&self) -> RouteTable {
        self.state.as_ref().map(|s| s.compute_routes()).unwrap_or_default()
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}
