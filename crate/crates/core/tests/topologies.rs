use std::collections::VecDeque;

use manetlab::emulator::{Emulator, EmulatorConfig, NodeSpec};
use manetlab::link::{NodeId, Position, Track, Waypoint};
use manetlab::routing::PackageRegistry;
use manetlab::sim::SimTime;
use proptest::prelude::*;

const RANGE: f64 = 50.0;

fn hops(pos: &[Position], from: usize) -> Vec<Option<u32>> {
    let mut d = vec![None; pos.len()];
    d[from] = Some(0);
    let mut q = VecDeque::from([from]);
    while let Some(u) = q.pop_front() {
        for v in 0..pos.len() {
            if d[v].is_none() && pos[u].distance(&pos[v]) <= RANGE {
                d[v] = Some(d[u].unwrap() + 1);
                q.push_back(v);
            }
        }
    }
    d
}

fn emulator(seed: u64, pos: &[Position]) -> (Emulator, Vec<NodeId>) {
    let mut emu = Emulator::new(EmulatorConfig::ibss(seed, "olsr"), PackageRegistry::with_builtins()).unwrap();
    let ids: Vec<NodeId> = (0..pos.len()).map(|i| NodeId::new(format!("n{i}"))).collect();
    for (id, p) in ids.iter().zip(pos) {
        emu.add_node(NodeSpec {
            track: Track::fixed(*p),
            ..NodeSpec::fixed(id.as_str(), 0.0, 0.0)
        })
        .unwrap();
    }
    for (_, r) in emu.setup_all() {
        r.unwrap();
    }
    (emu, ids)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    // Includes partitioned layouts: unreachable pairs must have no route.
    #[test]
    fn routes_match_bfs(seed in any::<u64>(), xs in proptest::collection::vec((0.0f64..150.0, 0.0f64..60.0), 2..7)) {
        let pos: Vec<Position> = xs.iter().map(|&(x, y)| Position::new(x, y)).collect();
        let (mut emu, ids) = emulator(seed, &pos);
        emu.run_until(SimTime::from_secs(20));
        for (i, id) in ids.iter().enumerate() {
            let oracle = hops(&pos, i);
            let table = emu.routes(id).unwrap();
            let st = emu.olsr_state(id).unwrap().unwrap();
            prop_assert_eq!(st.stats().coverage_violations, 0);
            // Every MPR is a symmetric neighbor.
            for m in st.mpr_set() {
                prop_assert!(st.is_symmetric(m));
            }
            for (j, other) in ids.iter().enumerate() {
                if i == j { continue; }
                let addr = emu.address(other).unwrap();
                prop_assert_eq!(table.get(&addr).map(|e| e.hop_count), oracle[j], "{} -> {}", id, other);
            }
        }
    }
}

#[test]
fn routes_follow_a_moving_node() {
    // C walks from A's side to the far end of the chain and back.
    let mut emu = Emulator::new(EmulatorConfig::ibss(5, "olsr"), PackageRegistry::with_builtins()).unwrap();
    emu.add_node(NodeSpec::fixed("A", 0.0, 0.0)).unwrap();
    emu.add_node(NodeSpec::fixed("B", 40.0, 0.0)).unwrap();
    emu.add_node(NodeSpec {
        track: Track::from_waypoints(
            Position::new(30.0, 0.0),
            &[
                Waypoint { t: 30.0, x: 30.0, y: 0.0 },
                Waypoint { t: 35.0, x: 80.0, y: 0.0 },
                Waypoint { t: 70.0, x: 80.0, y: 0.0 },
                Waypoint { t: 75.0, x: 30.0, y: 0.0 },
            ],
            SimTime::ZERO,
        ),
        ..NodeSpec::fixed("C", 0.0, 0.0)
    })
    .unwrap();
    for (_, r) in emu.setup_all() {
        r.unwrap();
    }
    let a = NodeId::new("A");
    let c = emu.configured_address(&NodeId::new("C")).unwrap();
    let hop = |emu: &Emulator| emu.routes(&a).unwrap().get(&c).map(|e| e.hop_count);
    emu.run_until(SimTime::from_secs(25));
    assert_eq!(hop(&emu), Some(1));
    emu.run_until(SimTime::from_secs(60));
    assert_eq!(hop(&emu), Some(2));
    emu.run_until(SimTime::from_secs(100));
    assert_eq!(hop(&emu), Some(1));
}
