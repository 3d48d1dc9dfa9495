//! Battery discharge: idle nodes in each mode, then a saturated chain run
//! until the first battery is empty (coefficients sped up 60x).
//!
//! cargo run --example battery

use manetlab::energy::{mean_interval, rate_per_hour, EnergyCoefficients};
use manetlab::harness::{builtin, run, MetricsBundle};
use manetlab::routing::PackageRegistry;

fn rates(b: &MetricsBundle) -> String {
    b.batteries
        .iter()
        .map(|r| format!("{} {:.2} %/h", r.node, rate_per_hour(&r.series).unwrap_or(0.0)))
        .collect::<Vec<_>>()
        .join(", ")
}

fn main() -> anyhow::Result<()> {
    let reg = PackageRegistry::with_builtins();

    println!("idle, 2 h:");
    for (label, name, package) in [
        ("infrastructure", "infra", "static"),
        ("ibss", "ibss_mh", "static"),
        ("ibss + olsr", "ibss_mh", "olsr"),
    ] {
        let mut s = builtin(name).expect("built-in");
        s.flows.clear();
        s.duration_s = 7200.0;
        s.routing.package = package.into();
        println!("  {label:<15} {}", rates(&run(&s, &reg)?));
    }

    println!("saturated chain until first depletion (60x):");
    let mut s = builtin("ibss_mh").expect("built-in");
    s.duration_s = 3600.0;
    s.stop_on_depletion = true;
    s.energy = EnergyCoefficients::default().scaled(60.0);
    let b = run(&s, &reg)?;
    for r in &b.batteries {
        println!(
            "  {}: {:.2} s per percent, {:.1}% left",
            r.node,
            mean_interval(&r.series).unwrap_or(f64::NAN),
            r.final_percent
        );
    }
    println!("  stopped after {:.0} simulated seconds", b.elapsed_s);
    Ok(())
}
