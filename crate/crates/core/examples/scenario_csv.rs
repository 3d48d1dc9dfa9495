//! Load a scenario file (or a built-in), run it and write the CSV metrics.
//!
//! cargo run --example scenario_csv -- [scenario.json|builtin] [out-dir]

use std::path::PathBuf;

use manetlab::harness::{emit_csv, resolve_scenario, run};
use manetlab::routing::PackageRegistry;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenario = args.next().unwrap_or_else(|| "ibss_mh".into());
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("manetlab-example"));
    let reg = PackageRegistry::with_builtins();
    let s = resolve_scenario(&scenario, &reg)?;
    let bundle = run(&s, &reg)?;
    for f in emit_csv(&bundle, &out)? {
        let lines = std::fs::read_to_string(&f)?.lines().count();
        println!("{:<40} {lines:>6} lines", f.display());
    }
    Ok(())
}
