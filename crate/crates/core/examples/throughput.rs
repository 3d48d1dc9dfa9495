//! Saturated UDP goodput in the three reference scenarios.
//!
//! cargo run --example throughput

use manetlab::harness::{builtin, builtin_names, run};
use manetlab::routing::PackageRegistry;

fn main() -> anyhow::Result<()> {
    let reg = PackageRegistry::with_builtins();
    println!("{:<8} {:>10} {:>10} {:>10}", "scenario", "mean Mb/s", "min Mb/s", "max Mb/s");
    for name in builtin_names() {
        let bundle = run(&builtin(name).expect("built-in"), &reg)?;
        let t = &bundle.throughput[0];
        let min = t.samples.iter().min().copied().unwrap_or(0) as f64 / 1e6;
        let max = t.samples.iter().max().copied().unwrap_or(0) as f64 / 1e6;
        println!("{name:<8} {:>10.3} {min:>10.3} {max:>10.3}", t.mean_bps() / 1e6);
    }
    Ok(())
}
