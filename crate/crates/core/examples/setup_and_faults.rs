//! One-step IBSS setup, and the two driver faults seen on handsets: a
//! chipset without IBSS support, and one that turns the cell into a fake
//! access point.
//!
//! cargo run --example setup_and_faults

use manetlab::diagnostics::PingOptions;
use manetlab::emulator::{Emulator, EmulatorConfig, NodeSpec};
use manetlab::link::{FaultModel, NodeId};
use manetlab::routing::PackageRegistry;

fn main() -> anyhow::Result<()> {
    let reg = PackageRegistry::with_builtins();

    let mut emu = Emulator::new(EmulatorConfig::ibss(1, "static"), reg.clone())?;
    emu.add_node(NodeSpec::fixed("A", 0.0, 0.0))?;
    emu.add_node(NodeSpec {
        fault: FaultModel::DriverNoIbss,
        ..NodeSpec::fixed("X", 10.0, 0.0)
    })?;
    for (id, r) in emu.setup_all() {
        match r {
            Ok(rep) => {
                println!("{id}: ok");
                for s in rep.steps {
                    println!("   {:?}: {}", s.step, s.detail);
                }
            }
            Err(e) => println!("{id}: {e}"),
        }
    }

    let mut emu = Emulator::new(EmulatorConfig::ibss(2, "static"), reg)?;
    for (id, x) in [("B", 20.0), ("A", 0.0), ("C", 40.0)] {
        let fault = if id == "B" { FaultModel::FakeApIbss } else { FaultModel::None };
        emu.add_node(NodeSpec { fault, ..NodeSpec::fixed(id, x, 0.0) })?;
    }
    for (_, r) in emu.setup_all() {
        r?;
    }
    let (a, c) = (NodeId::new("A"), NodeId::new("C"));
    let opts = PingOptions { count: 5, ..Default::default() };
    let lost = |v: &[manetlab::diagnostics::PingRecord]| v.iter().filter(|r| r.lost()).count();
    let before = emu.ping(&a, &c, opts)?;
    println!("\nfake AP B present: {} of 5 pings lost", lost(&before));
    emu.teardown_node(&NodeId::new("B"))?;
    let after = emu.ping(&a, &c, opts)?;
    println!("fake AP B gone:    {} of 5 pings lost", lost(&after));
    for (node, reason, n) in emu.drops() {
        println!("   drop at {node}: {reason} x{n}");
    }
    Ok(())
}
