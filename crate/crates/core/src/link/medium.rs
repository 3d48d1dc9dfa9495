use std::collections::{BTreeMap, BTreeSet, VecDeque};

use super::{
    power_save_delay, FaultModel, Frame, FrameClass, LinkDst, LinkError, LinkMode, MediumModel,
    NodeId, Position, PowerSaveModel, Track,
};
use crate::sim::{SeededRng, SimTime};

/// Window over which a data transmitter counts as active for contention.
const ACCOUNTING_WINDOW: SimTime = SimTime::from_secs(1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RadioMode {
    Off,
    Ibss,
    Station { power_save: bool },
    AccessPoint,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub node: NodeId,
    pub at: SimTime,
    /// The receiver must retransmit the frame (AP or fake-AP hub).
    pub relay: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LossReason {
    DestinationUnreachable,
    HubUnavailable,
    NoAccessPoint,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TxOutcome {
    pub start: SimTime,
    pub end: SimTime,
    pub airtime: SimTime,
    pub deliveries: Vec<Delivery>,
    pub loss: Option<LossReason>,
}

#[derive(Clone, Debug)]
struct Attachment {
    ssid: String,
    mode: LinkMode,
}

#[derive(Clone, Debug)]
struct Radio {
    id: NodeId,
    track: Track,
    fault: FaultModel,
    attachment: Option<Attachment>,
    last_rx: Option<SimTime>,
    wake_at: Option<SimTime>,
    last_data_request: Option<SimTime>,
}

#[derive(Clone, Debug)]
struct Cell {
    founder: usize,
    members: BTreeSet<usize>,
}

#[derive(Clone, Debug)]
struct AirtimeRecord {
    node: usize,
    request: SimTime,
    start: SimTime,
    end: SimTime,
    domain: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
struct Slot {
    node: usize,
    start: SimTime,
    end: SimTime,
}

/// The shared radio channel for all nodes of one scenario.
///
/// Airtime is allocated first-come first-served per collision domain (one
/// domain per connected component, no spatial reuse). A request at time `t`
/// occupies the earliest gap at or after `t` that is long enough.
#[derive(Clone, Debug)]
pub struct Medium {
    model: MediumModel,
    power_save: PowerSaveModel,
    radios: Vec<Radio>,
    index: BTreeMap<NodeId, usize>,
    cells: BTreeMap<String, Cell>,
    pending: VecDeque<Slot>,
    ledger: Vec<AirtimeRecord>,
    rng: SeededRng,
}

impl Medium {
    pub fn new(model: MediumModel, power_save: PowerSaveModel, rng: SeededRng) -> Result<Self, LinkError> {
        model.validate()?;
        power_save.validate()?;
        Ok(Medium {
            model,
            power_save,
            radios: Vec::new(),
            index: BTreeMap::new(),
            cells: BTreeMap::new(),
            pending: VecDeque::new(),
            ledger: Vec::new(),
            rng,
        })
    }

    pub fn model(&self) -> &MediumModel {
        &self.model
    }

    pub fn power_save(&self) -> &PowerSaveModel {
        &self.power_save
    }

    pub fn add_node(&mut self, id: NodeId, track: Track) -> Result<(), LinkError> {
        if self.index.contains_key(&id) {
            return Err(LinkError::InvalidModel(format!("duplicate node {id}")));
        }
        self.index.insert(id.clone(), self.radios.len());
        self.radios.push(Radio {
            id,
            track,
            fault: FaultModel::None,
            attachment: None,
            last_rx: None,
            wake_at: None,
            last_data_request: None,
        });
        Ok(())
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.radios.iter().map(|r| &r.id)
    }

    fn idx(&self, node: &NodeId) -> Result<usize, LinkError> {
        self.index
            .get(node)
            .copied()
            .ok_or_else(|| LinkError::UnknownNode(node.clone()))
    }

    pub fn position(&self, node: &NodeId, now: SimTime) -> Result<Position, LinkError> {
        Ok(self.radios[self.idx(node)?].track.position_at(now))
    }

    pub fn set_track(&mut self, node: &NodeId, track: Track) -> Result<(), LinkError> {
        let i = self.idx(node)?;
        self.radios[i].track = track;
        Ok(())
    }

    pub fn fault(&self, node: &NodeId) -> Result<FaultModel, LinkError> {
        Ok(self.radios[self.idx(node)?].fault)
    }

    /// Activates fault semantics from now on. A driver that loses IBSS support
    /// drops out of its cell immediately.
    pub fn set_fault(&mut self, node: &NodeId, fault: FaultModel) -> Result<(), LinkError> {
        let i = self.idx(node)?;
        self.radios[i].fault = fault;
        if fault == FaultModel::DriverNoIbss
            && matches!(&self.radios[i].attachment, Some(a) if a.mode == LinkMode::Ibss)
        {
            self.detach(i);
        }
        Ok(())
    }

    pub fn is_associated(&self, node: &NodeId) -> bool {
        self.idx(node)
            .map(|i| self.radios[i].attachment.is_some())
            .unwrap_or(false)
    }

    pub fn attachment(&self, node: &NodeId) -> Option<(String, LinkMode)> {
        let i = self.idx(node).ok()?;
        self.radios[i]
            .attachment
            .as_ref()
            .map(|a| (a.ssid.clone(), a.mode))
    }

    pub fn radio_mode(&self, node: &NodeId) -> Result<RadioMode, LinkError> {
        let r = &self.radios[self.idx(node)?];
        Ok(match r.attachment.as_ref().map(|a| a.mode) {
            None => RadioMode::Off,
            Some(LinkMode::Ibss) => RadioMode::Ibss,
            Some(LinkMode::InfrastructureStation) => RadioMode::Station {
                power_save: self.power_save.enabled,
            },
            Some(LinkMode::InfrastructureAp) => RadioMode::AccessPoint,
        })
    }

    /// Joins `ssid` in the given mode, leaving any previous network first.
    pub fn associate(&mut self, node: &NodeId, ssid: &str, mode: LinkMode) -> Result<(), LinkError> {
        let i = self.idx(node)?;
        if self.radios[i].attachment.is_some() {
            self.detach(i);
        }
        match mode {
            LinkMode::Ibss => {
                if self.radios[i].fault == FaultModel::DriverNoIbss {
                    return Err(LinkError::IbssUnsupported(node.clone()));
                }
                let cell = self.cells.entry(ssid.to_string()).or_insert_with(|| Cell {
                    founder: i,
                    members: BTreeSet::new(),
                });
                cell.members.insert(i);
            }
            LinkMode::InfrastructureStation => {
                if self.access_point(ssid).is_none() {
                    return Err(LinkError::NoAccessPoint { ssid: ssid.to_string() });
                }
            }
            LinkMode::InfrastructureAp => {}
        }
        self.radios[i].attachment = Some(Attachment {
            ssid: ssid.to_string(),
            mode,
        });
        Ok(())
    }

    pub fn disassociate(&mut self, node: &NodeId) -> Result<(), LinkError> {
        let i = self.idx(node)?;
        self.detach(i);
        Ok(())
    }

    fn detach(&mut self, i: usize) {
        if let Some(att) = self.radios[i].attachment.take() {
            if att.mode == LinkMode::Ibss {
                if let Some(cell) = self.cells.get_mut(&att.ssid) {
                    cell.members.remove(&i);
                    // The cell keeps its founder while anyone is left in it.
                    if cell.members.is_empty() {
                        self.cells.remove(&att.ssid);
                    }
                }
            }
        }
        self.radios[i].wake_at = None;
    }

    fn access_point(&self, ssid: &str) -> Option<usize> {
        self.radios.iter().position(|r| {
            matches!(&r.attachment, Some(a) if a.mode == LinkMode::InfrastructureAp && a.ssid == ssid)
        })
    }

    /// Fake-AP hub of an IBSS cell, if its founder carries that fault.
    fn hub(&self, ssid: &str) -> Option<usize> {
        let cell = self.cells.get(ssid)?;
        (self.radios[cell.founder].fault == FaultModel::FakeApIbss).then_some(cell.founder)
    }

    fn in_range(&self, a: usize, b: usize, now: SimTime) -> bool {
        let pa = self.radios[a].track.position_at(now);
        let pb = self.radios[b].track.position_at(now);
        pa.distance(&pb) <= self.model.radio_range
    }

    fn neighbor_indices(&self, i: usize, now: SimTime) -> Vec<usize> {
        let Some(att) = &self.radios[i].attachment else {
            return vec![];
        };
        let same_net = |j: usize| -> Option<LinkMode> {
            match &self.radios[j].attachment {
                Some(b) if b.ssid == att.ssid => Some(b.mode),
                _ => None,
            }
        };
        (0..self.radios.len())
            .filter(|&j| j != i)
            .filter(|&j| match (att.mode, same_net(j)) {
                (LinkMode::Ibss, Some(LinkMode::Ibss)) => {
                    self.radios[i].fault != FaultModel::DriverNoIbss
                        && self.radios[j].fault != FaultModel::DriverNoIbss
                }
                (LinkMode::InfrastructureStation, Some(LinkMode::InfrastructureAp)) => true,
                (LinkMode::InfrastructureAp, Some(LinkMode::InfrastructureStation)) => true,
                _ => false,
            })
            .filter(|&j| self.in_range(i, j, now))
            .collect()
    }

    /// Nodes that can hear `node` directly right now.
    pub fn neighbors(&self, node: &NodeId, now: SimTime) -> Result<BTreeSet<NodeId>, LinkError> {
        let i = self.idx(node)?;
        Ok(self
            .neighbor_indices(i, now)
            .into_iter()
            .map(|j| self.radios[j].id.clone())
            .collect())
    }

    fn domain_indices(&self, i: usize, now: SimTime) -> Vec<usize> {
        let mut seen = vec![false; self.radios.len()];
        let mut queue = VecDeque::from([i]);
        seen[i] = true;
        while let Some(u) = queue.pop_front() {
            for v in self.neighbor_indices(u, now) {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        (0..self.radios.len()).filter(|&j| seen[j]).collect()
    }

    /// Collision domain (connected component) containing `node`.
    pub fn collision_domain(&self, node: &NodeId, now: SimTime) -> Result<BTreeSet<NodeId>, LinkError> {
        let i = self.idx(node)?;
        Ok(self
            .domain_indices(i, now)
            .into_iter()
            .map(|j| self.radios[j].id.clone())
            .collect())
    }

    fn active_transmitters(&self, domain: &[usize], tx: usize, class: FrameClass, now: SimTime) -> usize {
        let floor = now.saturating_sub(ACCOUNTING_WINDOW);
        domain
            .iter()
            .filter(|&&j| {
                (j == tx && class == FrameClass::Data)
                    || matches!(self.radios[j].last_data_request, Some(t) if t >= floor && t <= now)
            })
            .count()
    }

    fn dozing(&self, station: usize, now: SimTime) -> bool {
        let hold = SimTime::from_secs_f64(self.power_save.beacon_interval);
        let backlog = self.pending.iter().any(|s| s.node == station && s.end > now);
        let recently_rx = matches!(self.radios[station].last_rx, Some(t) if t + hold >= now);
        !backlog && !recently_rx
    }

    fn earliest_slot(&self, domain: &[usize], not_before: SimTime, airtime: SimTime) -> SimTime {
        let mut member = vec![false; self.radios.len()];
        for &d in domain {
            member[d] = true;
        }
        let mut cursor = not_before;
        for s in self.pending.iter().filter(|s| member[s.node]) {
            if s.end <= cursor {
                continue;
            }
            if s.start >= cursor + airtime {
                break;
            }
            cursor = s.end;
        }
        cursor
    }

    fn insert_pending(&mut self, slot: Slot) {
        let pos = self.pending.partition_point(|s| s.start <= slot.start);
        self.pending.insert(pos, slot);
    }

    /// Puts one frame on the air from `from` (the originator or a relay).
    ///
    /// Airtime is `size * 8 / effective_rate` with the contention factor taken
    /// over data transmitters active in the last second. Losses (receiver out of
    /// range, absent hub or AP) still consume airtime and are reported in
    /// [`TxOutcome::loss`].
    pub fn transmit<P>(&mut self, frame: &Frame<P>, from: &NodeId, now: SimTime) -> Result<TxOutcome, LinkError> {
        let tx = self.idx(from)?;
        let att = self.radios[tx]
            .attachment
            .clone()
            .ok_or_else(|| LinkError::NotAssociated(from.clone()))?;
        self.pending.retain(|s| s.end > now);
        let waiting = self
            .pending
            .iter()
            .filter(|s| s.node == tx && s.start > now)
            .count();
        if waiting >= self.model.queue_limit {
            return Err(LinkError::QueueFull(from.clone()));
        }

        let origin = self.index.get(&frame.src).copied();
        let dst = match &frame.dst {
            LinkDst::Unicast(d) => Some(self.idx(d)?),
            LinkDst::Broadcast => None,
        };
        let neighbors = self.neighbor_indices(tx, now);

        let mut receivers: Vec<(usize, bool)> = Vec::new();
        let mut loss = None;
        let mut ps_target = None;
        match att.mode {
            LinkMode::Ibss => match self.hub(&att.ssid) {
                Some(h) if h != tx => {
                    if self.radios[h].attachment.is_none() {
                        loss = Some(LossReason::HubUnavailable);
                    } else if !neighbors.contains(&h) {
                        loss = Some(LossReason::DestinationUnreachable);
                    } else {
                        receivers.push((h, dst != Some(h)));
                    }
                }
                _ => direct(&neighbors, dst, origin, &mut receivers, &mut loss),
            },
            LinkMode::InfrastructureStation => match self.access_point(&att.ssid) {
                Some(ap) if neighbors.contains(&ap) => receivers.push((ap, dst != Some(ap))),
                Some(_) => loss = Some(LossReason::DestinationUnreachable),
                None => loss = Some(LossReason::NoAccessPoint),
            },
            LinkMode::InfrastructureAp => {
                direct(&neighbors, dst, origin, &mut receivers, &mut loss);
                if let Some(d) = dst {
                    if receivers.iter().any(|&(r, _)| r == d) {
                        ps_target = Some(d);
                    }
                }
            }
        }

        let domain = self.domain_indices(tx, now);
        let k = self.active_transmitters(&domain, tx, frame.class, now);
        let airtime = self.model.airtime(frame.size, k);

        let mut not_before = now;
        if let Some(st) = ps_target {
            if self.power_save.enabled {
                let wake = match self.radios[st].wake_at {
                    Some(w) if w > now => Some(w),
                    _ if self.dozing(st, now) => {
                        let d = power_save_delay(&mut self.rng, &self.power_save);
                        Some(now + SimTime::from_secs_f64(d))
                    }
                    _ => None,
                };
                if let Some(w) = wake {
                    self.radios[st].wake_at = Some(w);
                    not_before = w;
                }
            }
        }

        let start = self.earliest_slot(&domain, not_before, airtime);
        let end = start + airtime;
        self.insert_pending(Slot { node: tx, start, end });
        // Only the node's own traffic holds it in contention while queued;
        // relayed and forwarded frames count from their slot start.
        let own = !frame.forwarded && frame.src == *from;
        self.ledger.push(AirtimeRecord {
            node: tx,
            request: if own { now } else { start },
            start,
            end,
            domain,
        });
        if frame.class == FrameClass::Data {
            self.radios[tx].last_data_request = Some(now);
        }

        let at = end + SimTime::from_secs_f64(self.model.per_hop_processing_delay);
        let deliveries = receivers
            .into_iter()
            .map(|(r, relay)| {
                let rx = &mut self.radios[r];
                rx.last_rx = Some(rx.last_rx.map_or(at, |t| t.max(at)));
                Delivery {
                    node: rx.id.clone(),
                    at,
                    relay,
                }
            })
            .collect();
        Ok(TxOutcome {
            start,
            end,
            airtime,
            deliveries,
            loss,
        })
    }

    fn check_window(from: SimTime, to: SimTime) -> Result<(), LinkError> {
        if from > to {
            return Err(LinkError::InvalidWindow { from, to });
        }
        Ok(())
    }

    /// Exact airtime `node` spent transmitting, and receiving (any other
    /// transmission in its collision domain), within `[from, to]`. Seconds.
    pub fn medium_busy_airtime(&self, node: &NodeId, from: SimTime, to: SimTime) -> Result<(f64, f64), LinkError> {
        let i = self.idx(node)?;
        Self::check_window(from, to)?;
        let mut tx = 0u64;
        let mut rx = 0u64;
        for r in &self.ledger {
            let o = overlap(r.start, r.end, from, to);
            if r.node == i {
                tx += o;
            } else if r.domain.contains(&i) {
                rx += o;
            }
        }
        Ok((tx as f64 / 1e6, rx as f64 / 1e6))
    }

    /// Interface busy time split for energy accounting. The transmit side is
    /// the union of `[request, end]` over the node's own frames (transmitting
    /// or holding a backlog); the receive side is other domain airtime outside
    /// that union. Seconds.
    pub fn interface_busy(&self, node: &NodeId, from: SimTime, to: SimTime) -> Result<(f64, f64), LinkError> {
        let i = self.idx(node)?;
        Self::check_window(from, to)?;
        let mut own = Vec::new();
        let mut heard = Vec::new();
        for r in &self.ledger {
            if r.node == i {
                if let Some(iv) = clip(r.request, r.end, from, to) {
                    own.push(iv);
                }
            } else if r.domain.contains(&i) {
                if let Some(iv) = clip(r.start, r.end, from, to) {
                    heard.push(iv);
                }
            }
        }
        let own = merge(own);
        let heard = merge(heard);
        let tx: u64 = own.iter().map(|(a, b)| b - a).sum();
        let heard_total: u64 = heard.iter().map(|(a, b)| b - a).sum();
        let shared = intersection_len(&own, &heard);
        Ok((tx as f64 / 1e6, (heard_total - shared) as f64 / 1e6))
    }

    /// Number of frames `node` has reserved that have not finished by `now`.
    pub fn backlog(&self, node: &NodeId, now: SimTime) -> Result<usize, LinkError> {
        let i = self.idx(node)?;
        Ok(self.pending.iter().filter(|s| s.node == i && s.end > now).count())
    }

    /// Drops accounting records that ended before `t`.
    pub fn forget_before(&mut self, t: SimTime) {
        self.ledger.retain(|r| r.end >= t);
    }
}

fn direct(
    neighbors: &[usize],
    dst: Option<usize>,
    origin: Option<usize>,
    receivers: &mut Vec<(usize, bool)>,
    loss: &mut Option<LossReason>,
) {
    match dst {
        Some(d) => {
            if neighbors.contains(&d) {
                receivers.push((d, false));
            } else {
                *loss = Some(LossReason::DestinationUnreachable);
            }
        }
        None => receivers.extend(
            neighbors
                .iter()
                .filter(|&&n| Some(n) != origin)
                .map(|&n| (n, false)),
        ),
    }
}

fn overlap(a0: SimTime, a1: SimTime, b0: SimTime, b1: SimTime) -> u64 {
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    hi.as_micros().saturating_sub(lo.as_micros())
}

fn clip(a0: SimTime, a1: SimTime, b0: SimTime, b1: SimTime) -> Option<(u64, u64)> {
    let lo = a0.max(b0).as_micros();
    let hi = a1.min(b1).as_micros();
    (hi > lo).then_some((lo, hi))
}

fn merge(mut v: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    v.sort_unstable();
    let mut out: Vec<(u64, u64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

fn intersection_len(a: &[(u64, u64)], b: &[(u64, u64)]) -> u64 {
    let (mut i, mut j, mut total) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}
