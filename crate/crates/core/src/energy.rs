//! Linear battery model driven by interface busy time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::SimTime;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("invalid energy coefficients: {0}")]
    InvalidCoefficients(String),
    #[error("busy time {busy:.6} s exceeds step {dt:.6} s")]
    BusyExceedsStep { busy: f64, dt: f64 },
    #[error("invalid step length {0}")]
    InvalidStep(f64),
}

/// Drain rates in percent per hour.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnergyCoefficients {
    pub idle_ibss: f64,
    pub idle_infra_ps: f64,
    /// Extra drain at 100% transmit (or backlogged) time.
    pub busy_tx: f64,
    /// Extra drain at 100% receive time.
    pub busy_rx: f64,
    pub routing_cpu: f64,
}

impl Default for EnergyCoefficients {
    fn default() -> Self {
        EnergyCoefficients {
            idle_ibss: 5.0,
            idle_infra_ps: 2.0,
            busy_tx: 20.0,
            busy_rx: 18.0,
            routing_cpu: 0.1,
        }
    }
}

impl EnergyCoefficients {
    /// Every rate multiplied by `factor`; used to compress battery-lifetime
    /// experiments into short runs without changing any ratio.
    pub fn scaled(&self, factor: f64) -> Self {
        EnergyCoefficients {
            idle_ibss: self.idle_ibss * factor,
            idle_infra_ps: self.idle_infra_ps * factor,
            busy_tx: self.busy_tx * factor,
            busy_rx: self.busy_rx * factor,
            routing_cpu: self.routing_cpu * factor,
        }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        for (name, v) in [
            ("idle_ibss", self.idle_ibss),
            ("idle_infra_ps", self.idle_infra_ps),
            ("busy_tx", self.busy_tx),
            ("busy_rx", self.busy_rx),
            ("routing_cpu", self.routing_cpu),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(EnergyError::InvalidCoefficients(format!("{name} must be finite and >= 0")));
            }
        }
        if self.idle_ibss <= self.idle_infra_ps {
            return Err(EnergyError::InvalidCoefficients(
                "idle_ibss must exceed idle_infra_ps".into(),
            ));
        }
        Ok(())
    }

    pub fn idle(&self, mode: EnergyMode) -> f64 {
        match mode {
            EnergyMode::Awake => self.idle_ibss,
            EnergyMode::PowerSave => self.idle_infra_ps,
            EnergyMode::Off => 0.0,
        }
    }
}

/// Idle behaviour of the interface during a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnergyMode {
    /// Receiver always on: IBSS, an AP, or a station without power save.
    Awake,
    /// Infrastructure station dozing between beacons.
    PowerSave,
    Off,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatteryState {
    percent: f64,
    initial: f64,
    start: SimTime,
    /// Times the charge fell to each integer percent, in order.
    history: Vec<(SimTime, u32)>,
    depleted_at: Option<SimTime>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnergyStep {
    Ok,
    /// Reached 0% during this step (first time only).
    Depleted { at: SimTime },
}

impl BatteryState {
    pub fn new(percent: f64, start: SimTime) -> Self {
        let p = percent.clamp(0.0, 100.0);
        BatteryState {
            percent: p,
            initial: p,
            start,
            history: Vec::new(),
            depleted_at: (p == 0.0).then_some(start),
        }
    }

    pub fn percent(&self) -> f64 {
        self.percent
    }

    pub fn history(&self) -> &[(SimTime, u32)] {
        &self.history
    }

    pub fn depleted_at(&self) -> Option<SimTime> {
        self.depleted_at
    }

    /// Applies one accounting step ending at `end`.
    ///
    /// The drop is `[idle*dt + busy_tx*tx + busy_rx*rx + cpu*dt] / 3600`;
    /// integer crossings are placed by linear interpolation within the step.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        coeffs: &EnergyCoefficients,
        end: SimTime,
        dt: f64,
        tx_airtime: f64,
        rx_airtime: f64,
        mode: EnergyMode,
        routing_active: bool,
    ) -> Result<EnergyStep, EnergyError> {
        if !(dt.is_finite() && dt >= 0.0) {
            return Err(EnergyError::InvalidStep(dt));
        }
        let busy = tx_airtime + rx_airtime;
        if tx_airtime < 0.0 || rx_airtime < 0.0 || busy > dt + 1e-9 {
            return Err(EnergyError::BusyExceedsStep { busy, dt });
        }
        if self.depleted_at.is_some() || dt == 0.0 {
            return Ok(EnergyStep::Ok);
        }
        let cpu = if routing_active { coeffs.routing_cpu } else { 0.0 };
        let drop = (coeffs.idle(mode) * dt
            + coeffs.busy_tx * tx_airtime
            + coeffs.busy_rx * rx_airtime
            + cpu * dt)
            / 3600.0;
        if drop <= 0.0 {
            return Ok(EnergyStep::Ok);
        }
        let p0 = self.percent;
        let p1 = (p0 - drop).max(0.0);
        let step_start = end.as_secs_f64() - dt;
        // Integer levels k with p1 <= k < p0, highest first.
        let mut k = p0.ceil() - 1.0;
        while k >= p1 && k >= 0.0 {
            let at = SimTime::from_secs_f64(step_start + dt * (p0 - k) / drop);
            let at = at.max(self.history.last().map_or(self.start, |h| h.0)).min(end);
            self.history.push((at, k as u32));
            k -= 1.0;
        }
        self.percent = p1;
        if p1 <= 0.0 {
            let at = self.history.last().map_or(end, |h| h.0);
            self.depleted_at = Some(at);
            return Ok(EnergyStep::Depleted { at });
        }
        Ok(EnergyStep::Ok)
    }

    /// (percent level, seconds spent falling from it to the next integer).
    /// The first level is only included when the run started exactly on an
    /// integer percent.
    pub fn discharge_series(&self) -> Vec<(u32, f64)> {
        let mut anchors: Vec<(SimTime, u32)> = Vec::with_capacity(self.history.len() + 1);
        if self.initial.fract() == 0.0 && self.initial > 0.0 {
            anchors.push((self.start, self.initial as u32));
        }
        anchors.extend_from_slice(&self.history);
        anchors
            .windows(2)
            .map(|w| (w[0].1, (w[1].0 - w[0].0).as_secs_f64()))
            .collect()
    }
}

/// Mean seconds per percent point, if any interval completed.
pub fn mean_interval(series: &[(u32, f64)]) -> Option<f64> {
    if series.is_empty() {
        return None;
    }
    Some(series.iter().map(|s| s.1).sum::<f64>() / series.len() as f64)
}

/// Mean discharge rate in percent per hour derived from a series.
pub fn rate_per_hour(series: &[(u32, f64)]) -> Option<f64> {
    mean_interval(series).filter(|m| *m > 0.0).map(|m| 3600.0 / m)
}
