//! Multicast DNS discovery followed by a unicast session. Discovery works
//! only within one hop; the session works across hops and survives the
//! peer walking out of direct range.
//!
//! cargo run --example discovery

use manetlab::harness::{builtin, run, Scenario};
use manetlab::routing::PackageRegistry;

const WALKING: &str = r#"{
  "name": "walk_away", "duration_s": 60, "mode": {"kind": "ibss"},
  "nodes": [
    {"id": "A", "position": {"x": 0, "y": 0}},
    {"id": "B", "position": {"x": 40, "y": 0}},
    {"id": "C", "position": {"x": 30, "y": 0},
     "waypoints": [{"t_s": 20, "x": 30, "y": 0}, {"t_s": 30, "x": 80, "y": 0}]}
  ],
  "flows": [{"src": "A", "dst": "C", "kind": {"type": "discovery"}}]
}"#;

fn main() -> anyhow::Result<()> {
    let reg = PackageRegistry::with_builtins();
    let cases = [
        builtin("ibss_sh").expect("built-in").with_discovery(3.0, 1.0),
        builtin("ibss_mh").expect("built-in").with_discovery(3.0, 1.0),
        Scenario::from_json(WALKING)?,
    ];
    for s in &cases {
        let b = run(s, &reg)?;
        let r = &b.discoveries[0].result;
        println!(
            "{:<10} found={:<5} manual={:<5} session {}/{} replies, longest gap {:.1} s -> {}",
            s.name,
            r.found,
            r.manual_address,
            r.session_replies,
            r.session_requests,
            r.longest_gap_s,
            if r.session_ok() { "alive" } else { "dead" }
        );
    }
    Ok(())
}
