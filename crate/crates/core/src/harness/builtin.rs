//! The three reference scenarios, shipped as golden JSON files.

use super::scenario::{FlowEntry, FlowKind, Scenario};

const GOLDEN: [(&str, &str); 3] = [
    ("infra", include_str!("../../scenarios/infra.json")),
    ("ibss_sh", include_str!("../../scenarios/ibss_sh.json")),
    ("ibss_mh", include_str!("../../scenarios/ibss_mh.json")),
];

pub fn builtin_names() -> [&'static str; 3] {
    GOLDEN.map(|g| g.0)
}

/// Raw JSON of a built-in scenario.
pub fn builtin_json(name: &str) -> Option<&'static str> {
    GOLDEN.iter().find(|g| g.0 == name).map(|g| g.1)
}

pub fn builtin(name: &str) -> Option<Scenario> {
    builtin_json(name).map(|text| Scenario::from_json(text).expect("golden scenario parses"))
}

pub fn builtin_scenarios() -> Vec<Scenario> {
    builtin_names().iter().filter_map(|n| builtin(n)).collect()
}

impl Scenario {
    /// Same topology with the traffic replaced by a single ping series from
    /// the first flow's source to its destination.
    pub fn with_ping_series(&self, count: u32, interval_s: f64, timeout_s: f64) -> Scenario {
        let mut s = self.clone();
        let (src, dst) = self.endpoints();
        s.flows = vec![FlowEntry {
            src,
            dst,
            kind: FlowKind::PingSeries {
                count,
                interval_s,
                timeout_s,
            },
            packet_size: crate::emulator::ECHO_SIZE,
            start_s: 0.0,
            stop_s: None,
        }];
        let needed = interval_s * count.saturating_sub(1) as f64 + timeout_s;
        s.duration_s = s.duration_s.max(needed);
        s
    }

    /// Same topology with the traffic replaced by a discovery application.
    pub fn with_discovery(&self, timeout_s: f64, session_interval_s: f64) -> Scenario {
        let mut s = self.clone();
        let (src, dst) = self.endpoints();
        s.flows = vec![FlowEntry {
            src,
            dst,
            kind: FlowKind::Discovery {
                timeout_s,
                session_interval_s,
            },
            packet_size: 100,
            start_s: 0.0,
            stop_s: None,
        }];
        s
    }

    /// Source and destination of the first flow, or the first and last node.
    fn endpoints(&self) -> (String, String) {
        match self.flows.first() {
            Some(f) => (f.src.clone(), f.dst.clone()),
            None => (
                self.nodes.first().map(|n| n.id.clone()).unwrap_or_default(),
                self.nodes.last().map(|n| n.id.clone()).unwrap_or_default(),
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::scenario::ModeSpec;
    use crate::routing::PackageRegistry;

    #[test]
    fn golden_files_validate() {
        let reg = PackageRegistry::with_builtins();
        for s in builtin_scenarios() {
            s.validate(&reg).unwrap();
            assert_eq!(s.duration_s, 60.0);
            assert_eq!(s.flows.len(), 1);
            assert_eq!(s.flows[0].kind, FlowKind::UdpSaturation);
            assert_eq!((s.flows[0].src.as_str(), s.flows[0].dst.as_str()), ("A", "C"));
        }
    }

    #[test]
    fn chain_geometry() {
        let s = builtin("ibss_mh").unwrap();
        let xs: Vec<f64> = s.nodes.iter().map(|n| n.position.x).collect();
        assert_eq!(xs, vec![0.0, 40.0, 80.0]);
        assert_eq!(s.medium.radio_range, 50.0);
        assert_eq!(s.routing.package, "olsr");
        let infra = builtin("infra").unwrap();
        assert_eq!(infra.mode, ModeSpec::Infrastructure { ap: "B".into(), ssid: "office".into() });
        assert!(infra.power_save.enabled);
    }

    #[test]
    fn golden_round_trip() {
        for name in builtin_names() {
            let s = builtin(name).unwrap();
            assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
        }
    }

    #[test]
    fn ping_variant() {
        let s = builtin("ibss_sh").unwrap().with_ping_series(30, 1.0, 2.0);
        assert_eq!(s.flows.len(), 1);
        assert!(matches!(s.flows[0].kind, FlowKind::PingSeries { count: 30, .. }));
        s.validate(&PackageRegistry::with_builtins()).unwrap();
    }
}
