use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use manetlab::diagnostics::{median, rtts, PingOptions, TraceOptions};
use manetlab::harness::{
    builtin_names, emit_csv, prepare, repetition_dir, resolve_scenario, run_batch, ScenarioError,
    TaxonomyReport,
};
use manetlab::link::NodeId;
use manetlab::routing::{PackageManifest, PackageRegistry, RoutingPackage};
use manetlab::sim::SimTime;

#[derive(Parser)]
#[command(name = "manetlab", version, about = "Deterministic MANET testbed for smartphone scenarios")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario and write CSV metrics.
    Run {
        /// Built-in name or path to a scenario JSON file.
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of repetitions, with seeds seed..seed+K-1.
        #[arg(long, default_value_t = 1)]
        repeat: u32,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Extra routing package manifests (JSON).
        #[arg(long = "package")]
        packages: Vec<PathBuf>,
    },
    /// List the built-in scenarios.
    Scenarios,
    /// Print the MANET technology check-list.
    Taxonomy {
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        /// JSON file with extra rows.
        #[arg(long)]
        extra: Option<PathBuf>,
    },
    /// Ping between two nodes once the scenario has warmed up.
    Ping {
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = 30)]
        count: u32,
    },
    /// Trace the path between two nodes once the scenario has warmed up.
    Traceroute {
        #[command(flatten)]
        target: Target,
    },
}

#[derive(clap::Args)]
struct Target {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    src: String,
    #[arg(long)]
    dst: String,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Table,
}

fn registry(manifests: &[PathBuf]) -> Result<PackageRegistry> {
    let mut reg = PackageRegistry::with_builtins();
    for path in manifests {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let manifest = PackageManifest::from_json(&text).with_context(|| format!("in {}", path.display()))?;
        reg.register(RoutingPackage::from_manifest(&manifest)?)?;
    }
    Ok(reg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ScenarioError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Run {
            scenario,
            seed,
            repeat,
            out,
            packages,
        } => {
            if repeat == 0 {
                bail!(ScenarioError::Validation("--repeat must be at least 1".into()));
            }
            let reg = registry(&packages)?;
            let mut sc = resolve_scenario(&scenario, &reg)?;
            if let Some(s) = seed {
                sc.seed = s;
            }
            for (r, result) in run_batch(&sc, &reg, repeat).into_iter().enumerate() {
                let bundle = result?;
                let dir = repetition_dir(&out, repeat, r as u32, bundle.seed);
                let files = emit_csv(&bundle, &dir).with_context(|| format!("writing {}", dir.display()))?;
                println!("{} seed {} -> {} ({} files)", bundle.scenario, bundle.seed, dir.display(), files.len());
                for t in &bundle.throughput {
                    println!("  flow {} {}->{}: {:.2} Mbit/s", t.flow, t.src, t.dst, t.mean_bps() / 1e6);
                }
                for p in &bundle.pings {
                    let lost = p.records.iter().filter(|r| r.lost()).count();
                    let med = median(&rtts(&p.records)).map_or("-".into(), |m| format!("{:.3} ms", m * 1e3));
                    println!("  ping {}->{}: median {med}, {lost}/{} lost", p.src, p.dst, p.records.len());
                }
            }
        }
        Cmd::Scenarios => {
            for name in builtin_names() {
                println!("{name}");
            }
        }
        Cmd::Taxonomy { format, extra } => {
            let rows = match extra {
                Some(p) => TaxonomyReport::extra_from_json(&std::fs::read_to_string(&p)?)
                    .with_context(|| format!("in {}", p.display()))?,
                None => Vec::new(),
            };
            let report = TaxonomyReport::with_rows(rows);
            match format {
                Format::Csv => print!("{}", report.to_csv()),
                Format::Table => print!("{}", report.to_table()),
            }
        }
        Cmd::Ping { target, count } => {
            let (mut emu, src, dst) = warmed_up(&target)?;
            let recs = emu.ping(&src, &dst, PingOptions { count, ..Default::default() })?;
            for r in &recs {
                match r.rtt {
                    Some(rtt) => println!("seq={} time={:.3} ms", r.seq, rtt * 1e3),
                    None => println!("seq={} timeout", r.seq),
                }
            }
            let lost = recs.iter().filter(|r| r.lost()).count();
            println!("{} sent, {} lost", recs.len(), lost);
        }
        Cmd::Traceroute { target } => {
            let (mut emu, src, dst) = warmed_up(&target)?;
            for hop in emu.traceroute(&src, &dst, TraceOptions::default())? {
                let name = hop.node.map(|n| format!(" ({n})")).unwrap_or_default();
                println!("{:>2}  {}{}  {:.3} ms", hop.ttl, hop.address, name, hop.rtt * 1e3);
            }
        }
    }
    Ok(())
}

/// The scenario's topology, brought up and run through its warm-up, with
/// its own flows left out.
fn warmed_up(t: &Target) -> Result<(manetlab::emulator::Emulator, NodeId, NodeId)> {
    let reg = PackageRegistry::with_builtins();
    let mut sc = resolve_scenario(&t.scenario, &reg)?;
    if let Some(s) = t.seed {
        sc.seed = s;
    }
    for id in [&t.src, &t.dst] {
        if sc.node(id).is_none() {
            bail!(ScenarioError::Validation(format!("unknown node {id:?}")));
        }
    }
    sc.flows.clear();
    sc.events.clear();
    let (mut emu, _, _) = prepare(&sc, &reg)?;
    emu.run_until(SimTime::from_secs_f64(sc.warmup_s));
    Ok((emu, NodeId::new(&t.src), NodeId::new(&t.dst)))
}
