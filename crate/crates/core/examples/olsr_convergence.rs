//! OLSR on the A-B-C chain: neighbor sensing, MPR choice, route tables and
//! a traceroute once the routes are in.
//!
//! cargo run --example olsr_convergence

use manetlab::diagnostics::TraceOptions;
use manetlab::emulator::{Emulator, EmulatorConfig, NodeSpec};
use manetlab::link::NodeId;
use manetlab::routing::PackageRegistry;
use manetlab::sim::SimTime;

fn main() -> anyhow::Result<()> {
    let mut emu = Emulator::new(EmulatorConfig::ibss(7, "olsr"), PackageRegistry::with_builtins())?;
    for (id, x) in [("A", 0.0), ("B", 40.0), ("C", 80.0)] {
        emu.add_node(NodeSpec::fixed(id, x, 0.0))?;
    }
    for (id, r) in emu.setup_all() {
        println!("{id}: {}", r?.address.map(|a| a.to_string()).unwrap_or_default());
    }

    let a = NodeId::new("A");
    for t in [1, 3, 6, 10, 15] {
        emu.run_until(SimTime::from_secs(t));
        println!("\nt = {t} s, routes at A:\n{}", emu.route_dump(&a)?);
    }

    let b = NodeId::new("B");
    let st = emu.olsr_state(&b)?.expect("olsr running");
    println!("B selected as MPR by {:?}", st.mpr_selectors());
    println!("B stats {:?}", st.stats());

    println!("\ntraceroute A -> C");
    for hop in emu.traceroute(&a, &NodeId::new("C"), TraceOptions::default())? {
        println!("{:>2}  {}  {:.3} ms", hop.ttl, hop.node.map(|n| n.to_string()).unwrap_or_default(), hop.rtt * 1e3);
    }
    Ok(())
}
