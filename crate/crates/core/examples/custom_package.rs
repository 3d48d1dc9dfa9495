//! Importing a routing package from a manifest: a faster OLSR profile with
//! logging hooks, run on the multi-hop chain next to the stock daemon.
//!
//! cargo run --example custom_package

use manetlab::harness::{builtin, run};
use manetlab::routing::{PackageManifest, PackageRegistry, RoutingPackage};

const MANIFEST: &str = r#"{
  "name": "olsr-fast",
  "version": "0.2",
  "protocol": "olsr",
  "params": {"hello_interval_s": 0.5, "tc_interval_s": 1.0, "neighbor_hold_s": 1.5, "topology_hold_s": 3.0},
  "start": ["log:loading olsr-fast", "start_daemon"],
  "stop": ["stop_daemon", "flush_routes", "log:unloaded"]
}"#;

fn main() -> anyhow::Result<()> {
    let mut reg = PackageRegistry::with_builtins();
    reg.register(RoutingPackage::from_manifest(&PackageManifest::from_json(MANIFEST)?)?)?;
    println!("packages: {:?}", reg.names());

    for package in ["olsr", "olsr-fast"] {
        let mut s = builtin("ibss_mh").expect("built-in");
        s.routing.package = package.into();
        s.warmup_s = 0.0;
        s.duration_s = 20.0;
        let b = run(&s, &reg)?;
        let converged = b
            .routes
            .iter()
            .filter_map(|r| r.converged_s)
            .fold(0.0, f64::max);
        println!(
            "{package:<10} all routes by {converged:.2} s, goodput {:.2} Mbit/s",
            b.throughput[0].mean_bps() / 1e6
        );
        for (t, node, msg) in b.hook_log.iter().take(3) {
            println!("   {t:.2} s {node}: {msg}");
        }
    }
    Ok(())
}
