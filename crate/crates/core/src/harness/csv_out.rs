use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::run::MetricsBundle;

fn ms(secs: f64) -> String {
    format!("{:.3}", secs * 1e3)
}

fn secs(s: f64) -> String {
    format!("{s:.3}")
}

fn opt_secs(s: Option<f64>) -> String {
    s.map(secs).unwrap_or_default()
}

fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> io::Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(io::BufWriter::new(File::create(path)?));
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

fn name_or_addr(node: &Option<crate::link::NodeId>, addr: &std::net::Ipv4Addr) -> String {
    node.as_ref().map_or_else(|| addr.to_string(), |n| n.to_string())
}

/// Writes the bundle as CSV files under `dir` (created if missing) and
/// returns their paths in a fixed order.
///
/// `ping.csv` holds the first ping series; further series go to
/// `ping_flow<N>.csv` with the same columns.
pub fn emit_csv(bundle: &MetricsBundle, dir: &Path) -> io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        files.push(p.clone());
        p
    };

    write_csv(
        &out("throughput.csv"),
        &["time_s", "flow", "bits_per_s"],
        bundle.throughput.iter().flat_map(|t| {
            t.samples
                .iter()
                .enumerate()
                .map(move |(i, bits)| vec![(i + 1).to_string(), t.flow.to_string(), bits.to_string()])
        }),
    )?;

    for (k, series) in bundle.pings.iter().enumerate() {
        let name = if k == 0 {
            "ping.csv".to_string()
        } else {
            format!("ping_flow{}.csv", series.flow)
        };
        write_csv(
            &out(&name),
            &["seq", "rtt_ms", "lost"],
            series.records.iter().map(|r| {
                vec![
                    r.seq.to_string(),
                    r.rtt.map(ms).unwrap_or_default(),
                    r.lost().to_string(),
                ]
            }),
        )?;
    }
    if bundle.pings.is_empty() {
        write_csv(&out("ping.csv"), &["seq", "rtt_ms", "lost"], std::iter::empty::<Vec<String>>())?;
    }

    write_csv(
        &out("battery.csv"),
        &["node", "percent", "interval_s"],
        bundle.batteries.iter().flat_map(|b| {
            b.series
                .iter()
                .map(move |(level, s)| vec![b.node.to_string(), level.to_string(), secs(*s)])
        }),
    )?;

    write_csv(
        &out("routes.csv"),
        &["node", "destination", "next_hop", "hop_count", "converged_s"],
        bundle.routes.iter().map(|r| {
            vec![
                r.node.to_string(),
                name_or_addr(&r.destination_node, &r.destination),
                name_or_addr(&r.next_hop_node, &r.next_hop),
                r.hop_count.to_string(),
                opt_secs(r.converged_s),
            ]
        }),
    )?;

    write_csv(
        &out("drops.csv"),
        &["node", "reason", "count"],
        bundle
            .drops
            .iter()
            .map(|(n, reason, c)| vec![n.to_string(), reason.as_str().to_string(), c.to_string()]),
    )?;

    if !bundle.discoveries.is_empty() {
        write_csv(
            &out("discovery.csv"),
            &[
                "flow",
                "src",
                "dst",
                "found",
                "found_after_s",
                "manual_address",
                "session_requests",
                "session_replies",
                "longest_gap_s",
                "session_ok",
            ],
            bundle.discoveries.iter().map(|d| {
                let r = &d.result;
                vec![
                    d.flow.to_string(),
                    d.src.to_string(),
                    d.dst.to_string(),
                    r.found.to_string(),
                    opt_secs(r.found_after_s),
                    r.manual_address.to_string(),
                    r.session_requests.to_string(),
                    r.session_replies.to_string(),
                    secs(r.longest_gap_s),
                    r.session_ok().to_string(),
                ]
            }),
        )?;
    }

    write_csv(
        &out("positions.csv"),
        &["time_s", "node", "x", "y"],
        bundle.positions.iter().map(|p| {
            vec![
                secs(p.time),
                p.node.to_string(),
                format!("{:.3}", p.position.x),
                format!("{:.3}", p.position.y),
            ]
        }),
    )?;

    let mut summary = io::BufWriter::new(File::create(out("summary.txt"))?);
    writeln!(summary, "scenario {}", bundle.scenario)?;
    writeln!(summary, "seed {}", bundle.seed)?;
    writeln!(summary, "elapsed_s {}", secs(bundle.elapsed_s))?;
    for t in &bundle.throughput {
        writeln!(
            summary,
            "flow {} {}->{} mean_bps {:.0} delivered_bytes {}",
            t.flow,
            t.src,
            t.dst,
            t.mean_bps(),
            t.delivered_bytes
        )?;
    }
    for (node, r) in &bundle.setup {
        match r {
            Ok(rep) => writeln!(
                summary,
                "setup {node} ok {}",
                rep.address.map(|a| a.to_string()).unwrap_or_default()
            )?,
            Err(e) => writeln!(summary, "setup {node} failed: {e}")?,
        }
    }
    for (t, node, msg) in &bundle.hook_log {
        writeln!(summary, "hook {} {node} {msg}", secs(*t))?;
    }
    summary.flush()?;
    drop(summary);
    Ok(files)
}

/// Directory for repetition `r` of a batch: `dir` itself for single runs,
/// `dir/rep<r>_seed<seed>` otherwise.
pub fn repetition_dir(dir: &Path, repeat: u32, r: u32, seed: u64) -> PathBuf {
    if repeat <= 1 {
        dir.to_path_buf()
    } else {
        dir.join(format!("rep{r:02}_seed{seed}"))
    }
}
