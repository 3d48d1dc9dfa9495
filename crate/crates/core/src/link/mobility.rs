use serde::{Deserialize, Serialize};

use super::Position;
use crate::sim::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    #[serde(rename = "t_s")]
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Scripted trajectory: linear interpolation between waypoints, clamped to
/// the first/last position outside their time span.
#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    points: Vec<(SimTime, Position)>,
}

impl Track {
    pub fn fixed(at: Position) -> Self {
        Track {
            points: vec![(SimTime::ZERO, at)],
        }
    }

    /// `offset` shifts waypoint times (used to place scenario time after warm-up);
    /// the node holds `start` until then.
    pub fn from_waypoints(start: Position, waypoints: &[Waypoint], offset: SimTime) -> Self {
        let mut points = vec![(SimTime::ZERO, start)];
        if offset > SimTime::ZERO {
            points.push((offset, start));
        }
        let mut sorted: Vec<Waypoint> = waypoints.to_vec();
        sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
        for w in sorted {
            let at = offset + SimTime::from_secs_f64(w.t);
            if at < points.last().map(|p| p.0).unwrap_or(SimTime::ZERO) {
                continue;
            }
            points.push((at, Position::new(w.x, w.y)));
        }
        Track { points }
    }

    pub fn position_at(&self, t: SimTime) -> Position {
        let idx = self.points.partition_point(|(at, _)| *at <= t);
        if idx == 0 {
            return self.points[0].1;
        }
        if idx >= self.points.len() {
            return self.points[self.points.len() - 1].1;
        }
        let (t0, p0) = self.points[idx - 1];
        let (t1, p1) = self.points[idx];
        let span = (t1.as_micros() - t0.as_micros()) as f64;
        if span == 0.0 {
            return p1;
        }
        let f = (t.as_micros() - t0.as_micros()) as f64 / span;
        Position::new(p0.x + (p1.x - p0.x) * f, p0.y + (p1.y - p0.y) * f)
    }

    pub fn is_static(&self) -> bool {
        self.points.windows(2).all(|w| w[0].1 == w[1].1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_linearly() {
        let t = Track::from_waypoints(
            Position::new(0.0, 0.0),
            &[Waypoint { t: 100.0, x: 100.0, y: 0.0 }],
            SimTime::ZERO,
        );
        assert_eq!(t.position_at(SimTime::from_secs(50)), Position::new(50.0, 0.0));
        assert_eq!(t.position_at(SimTime::from_secs(500)), Position::new(100.0, 0.0));
        assert!(!t.is_static());
    }

    #[test]
    fn offset_shifts_waypoints() {
        let t = Track::from_waypoints(
            Position::new(0.0, 0.0),
            &[
                Waypoint { t: 0.0, x: 0.0, y: 0.0 },
                Waypoint { t: 10.0, x: 10.0, y: 0.0 },
            ],
            SimTime::from_secs(5),
        );
        assert_eq!(t.position_at(SimTime::from_secs(5)), Position::new(0.0, 0.0));
        assert_eq!(t.position_at(SimTime::from_secs(10)), Position::new(5.0, 0.0));
    }
}
