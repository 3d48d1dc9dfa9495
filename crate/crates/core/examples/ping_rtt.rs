//! Round-trip times of a 30-ping series, six repetitions per scenario.
//! The infrastructure case shows the access point's power-save buffering.
//!
//! cargo run --example ping_rtt

use manetlab::diagnostics::{median, rtts};
use manetlab::harness::{builtin, builtin_names, run_batch};
use manetlab::routing::PackageRegistry;

fn main() -> anyhow::Result<()> {
    let reg = PackageRegistry::with_builtins();
    for name in builtin_names() {
        let s = builtin(name).expect("built-in").with_ping_series(30, 1.0, 2.0);
        let mut all = Vec::new();
        let mut lost = 0;
        for bundle in run_batch(&s, &reg, 6) {
            let records = &bundle?.pings[0].records;
            lost += records.iter().filter(|r| r.lost()).count();
            all.extend(rtts(records));
        }
        let max = all.iter().copied().fold(0.0, f64::max);
        println!(
            "{name:<8} median {:>8.3} ms  max {:>8.3} ms  lost {lost}/{}",
            median(&all).unwrap_or(f64::NAN) * 1e3,
            max * 1e3,
            all.len() + lost
        );
    }
    Ok(())
}
