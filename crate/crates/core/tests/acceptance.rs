//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Every expected value is computed here from first
//! principles, never read back from the library.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::net::Ipv4Addr;
use std::process::Command;
use std::time::Instant;

use manetlab::diagnostics::{median, rtts, PingOptions};
use manetlab::emulator::{EmuError, Emulator, EmulatorConfig, NodeSpec};
use manetlab::energy::{mean_interval, rate_per_hour, EnergyCoefficients};
use manetlab::harness::scenario::FlowKind;
use manetlab::harness::{builtin, emit_csv, run, run_batch, MetricsBundle, Scenario};
use manetlab::link::{FaultModel, NodeId, Position, Track};
use manetlab::netconfig::NetConfigError;
use manetlab::routing::PackageRegistry;
use manetlab::sim::{SeededRng, SimTime};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target.abs()
}

fn reg() -> PackageRegistry {
    PackageRegistry::with_builtins()
}

fn scenario(name: &str) -> Scenario {
    builtin(name).expect("built-in scenario")
}

fn run_ok(s: &Scenario) -> MetricsBundle {
    run(s, &reg()).expect("scenario runs")
}

// Airtime model written out independently: C * (1 - eta * (k - 1)) bit/s
// with k distinct data transmitters in the collision domain.
const CAPACITY: f64 = 24e6;
const ETA: f64 = 0.10;
const PROCESSING: f64 = 0.0005;

fn rate(k: f64) -> f64 {
    CAPACITY * (1.0 - ETA * (k - 1.0))
}

/// Goodput of a saturated flow crossing `hops` transmitters in one domain.
fn chain_goodput(hops: f64) -> f64 {
    rate(hops) / hops
}

fn criterion_throughput() -> Outcome {
    let t0 = Instant::now();
    let mean = |name: &str| run_ok(&scenario(name)).throughput[0].mean_bps();
    let (sh, mh, infra) = (mean("ibss_sh"), mean("ibss_mh"), mean("infra"));
    let wall = t0.elapsed().as_secs_f64();
    let (exp_sh, exp_mh) = (chain_goodput(1.0), chain_goodput(2.0));
    let ratio = sh / mh;
    let detail = format!(
        "sh={:.3} mh={:.3} infra={:.3} Mbit/s (model {:.1}/{:.1}), sh/mh={ratio:.2}, mh/infra={:.3}, wall {wall:.2}s",
        sh / 1e6,
        mh / 1e6,
        infra / 1e6,
        exp_sh / 1e6,
        exp_mh / 1e6,
        mh / infra,
    );
    check(
        ratio >= 2.0
            && within(mh, infra, 0.10)
            && within(sh, exp_sh, 0.01)
            && within(mh, exp_mh, 0.01)
            && wall < 10.0,
        detail,
    )
}

fn pooled_rtts(name: &str) -> Vec<f64> {
    let s = scenario(name).with_ping_series(30, 1.0, 2.0);
    let mut all = Vec::new();
    for b in run_batch(&s, &reg(), 6) {
        let b = b.expect("ping run");
        assert_eq!(b.pings[0].records.len(), 30);
        all.extend(rtts(&b.pings[0].records));
    }
    all
}

fn criterion_rtt() -> Outcome {
    let sh = pooled_rtts("ibss_sh");
    let mh = pooled_rtts("ibss_mh");
    let infra = pooled_rtts("infra");
    let (m_sh, m_mh) = (median(&sh).unwrap(), median(&mh).unwrap());
    let max_infra = infra.iter().copied().fold(0.0, f64::max);
    let ratio = m_mh / m_sh;
    // One 64-byte echo leg with the peer already counted as a transmitter.
    let leg = 64.0 * 8.0 / rate(2.0) + PROCESSING;
    let detail = format!(
        "median sh={:.3} ms (model {:.3}) mh={:.3} ms ratio={ratio:.2}; infra max={:.1} ms ({} samples, {:.0}x sh median)",
        m_sh * 1e3,
        2.0 * leg * 1e3,
        m_mh * 1e3,
        max_infra * 1e3,
        infra.len(),
        max_infra / m_sh
    );
    check(
        (1.7..=2.3).contains(&ratio) && max_infra >= 0.300 && max_infra >= 5.0 * m_sh,
        detail,
    )
}

fn idle(name: &str, package: Option<&str>) -> Scenario {
    let mut s = scenario(name);
    s.flows.clear();
    s.duration_s = 7200.0;
    if let Some(p) = package {
        s.routing.package = p.into();
    }
    s
}

fn mean_rate(b: &MetricsBundle, nodes: &[&str]) -> f64 {
    let rates: Vec<f64> = nodes
        .iter()
        .map(|n| rate_per_hour(&b.battery(n).unwrap().series).unwrap_or(0.0))
        .collect();
    rates.iter().sum::<f64>() / rates.len() as f64
}

fn criterion_idle_battery() -> Outcome {
    let ibss_olsr = run_ok(&idle("ibss_mh", None));
    let ibss_plain = run_ok(&idle("ibss_mh", Some("static")));
    let infra = run_ok(&idle("infra", None));
    let r_olsr = mean_rate(&ibss_olsr, &["A", "B", "C"]);
    let r_plain = mean_rate(&ibss_plain, &["A", "B", "C"]);
    // The handsets are the stations; B is the access point.
    let r_infra = mean_rate(&infra, &["A", "C"]);
    let detail = format!(
        "IBSS {r_plain:.3} %/h, IBSS+OLSR {r_olsr:.3} %/h, infra stations {r_infra:.3} %/h; ratio {:.2}, olsr delta {:.1}%",
        r_plain / r_infra,
        (r_olsr / r_plain - 1.0) * 100.0
    );
    check(r_plain >= 1.5 * r_infra && within(r_olsr, r_plain, 0.05), detail)
}

fn loaded(kind: FlowKind) -> MetricsBundle {
    let mut s = scenario("ibss_mh");
    s.flows[0].kind = kind;
    s.duration_s = 4.0 * 3600.0;
    s.stop_on_depletion = true;
    s.energy = EnergyCoefficients::default().scaled(60.0);
    run_ok(&s)
}

fn intervals(b: &MetricsBundle) -> [f64; 3] {
    ["A", "B", "C"].map(|n| mean_interval(&b.battery(n).unwrap().series).unwrap_or(f64::INFINITY))
}

fn criterion_loaded_battery() -> Outcome {
    let sat = loaded(FlowKind::UdpSaturation);
    let [a, b, c] = intervals(&sat);
    let cbr = loaded(FlowKind::Cbr { rate_bps: 6e6 });
    let iv = intervals(&cbr);
    let lo = iv.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = iv.iter().copied().fold(0.0, f64::max);
    let detail = format!(
        "saturated A/B/C {a:.2}/{b:.2}/{c:.2} s per % (first depletion at {:.0} s); 6 Mbit/s A/B/C {:.2}/{:.2}/{:.2} s, spread {:.1}%",
        sat.elapsed_s,
        iv[0],
        iv[1],
        iv[2],
        (hi / lo - 1.0) * 100.0
    );
    check(
        a < b && a < c && within(b, c, 0.10) && hi <= lo * 1.10 && sat.elapsed_s < sat.duration_s,
        detail,
    )
}

/// Hop counts by breadth-first search over the unit-disk graph.
fn bfs_hops(pos: &[Position], range: f64) -> Vec<Vec<Option<u32>>> {
    let n = pos.len();
    (0..n)
        .map(|s| {
            let mut d = vec![None; n];
            d[s] = Some(0);
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for v in 0..n {
                    if d[v].is_none() && pos[u].distance(&pos[v]) <= range {
                        d[v] = Some(d[u].unwrap() + 1);
                        q.push_back(v);
                    }
                }
            }
            d
        })
        .collect()
}

fn random_connected(rng: &mut SeededRng, n: usize, range: f64) -> Vec<Position> {
    let side = range * (n as f64).sqrt() * 1.2;
    loop {
        let pos: Vec<Position> = (0..n)
            .map(|_| Position::new(rng.uniform(0.0, side), rng.uniform(0.0, side)))
            .collect();
        if bfs_hops(&pos, range)[0].iter().all(Option::is_some) {
            return pos;
        }
    }
}

fn criterion_olsr() -> Outcome {
    let t0 = Instant::now();
    let mut rng = SeededRng::new(0x5eed_0150);
    let mut failures = Vec::new();
    let mut max_diameter = 0;
    for g in 0..200 {
        let n = 2 + rng.below(7) as usize;
        let pos = random_connected(&mut rng, n, 50.0);
        let oracle = bfs_hops(&pos, 50.0);
        let mut emu = Emulator::new(EmulatorConfig::ibss(rng.next_u64(), "olsr"), reg()).unwrap();
        let ids: Vec<NodeId> = (0..n).map(|i| NodeId::new(format!("N{i}"))).collect();
        for (id, p) in ids.iter().zip(&pos) {
            emu.add_node(NodeSpec {
                track: Track::fixed(*p),
                ..NodeSpec::fixed(id.as_str(), 0.0, 0.0)
            })
            .unwrap();
        }
        for (_, r) in emu.setup_all() {
            r.unwrap();
        }
        emu.run_until(SimTime::from_secs(15));
        let addr: Vec<Ipv4Addr> = ids.iter().map(|i| emu.address(i).unwrap()).collect();
        for (i, id) in ids.iter().enumerate() {
            let table = emu.routes(id).unwrap();
            let st = emu.olsr_state(id).unwrap().unwrap();
            if st.stats().coverage_violations != 0 || !st.mpr_coverage_holds() {
                failures.push(format!("graph {g}: MPR coverage broken at {id}"));
            }
            for j in 0..n {
                if i == j {
                    continue;
                }
                let want = oracle[i][j];
                max_diameter = max_diameter.max(want.unwrap_or(0));
                let got = table.get(&addr[j]).map(|e| e.hop_count);
                if got != want {
                    failures.push(format!("graph {g}: {id}->N{j} hops {got:?}, bfs {want:?}"));
                }
            }
        }
    }
    let wall = t0.elapsed().as_secs_f64();
    let detail = format!(
        "200 graphs, longest path {max_diameter} hops, {} mismatches{}, wall {wall:.1}s",
        failures.len(),
        failures.first().map(|f| format!(" (first: {f})")).unwrap_or_default()
    );
    check(failures.is_empty() && wall < 60.0, detail)
}

fn discovery(s: &Scenario) -> manetlab::diagnostics::DiscoveryResult {
    run_ok(&s.with_discovery(3.0, 1.0)).discoveries[0].result.clone()
}

fn criterion_multicast() -> Outcome {
    let sh = discovery(&scenario("ibss_sh"));
    let mh = discovery(&scenario("ibss_mh"));
    // C starts next to A and walks out of its range while B bridges.
    let mobile = Scenario::from_json(
        r#"{"name": "sh_to_mh", "duration_s": 60, "mode": {"kind": "ibss"},
            "nodes": [{"id": "A", "position": {"x": 0, "y": 0}},
                      {"id": "B", "position": {"x": 40, "y": 0}},
                      {"id": "C", "position": {"x": 30, "y": 0},
                       "waypoints": [{"t_s": 20, "x": 30, "y": 0}, {"t_s": 30, "x": 80, "y": 0}]}],
            "flows": [{"src": "A", "dst": "C", "kind": {"type": "udp_saturation"}}]}"#,
    )
    .unwrap();
    let mv = discovery(&mobile);
    let detail = format!(
        "sh found={} session_ok={} (gap {:.1}s); mh found={} manual={} session_ok={} (gap {:.1}s); sh->mh found={} session_ok={} (gap {:.1}s)",
        sh.found,
        sh.session_ok(),
        sh.longest_gap_s,
        mh.found,
        mh.manual_address,
        mh.session_ok(),
        mh.longest_gap_s,
        mv.found,
        mv.session_ok(),
        mv.longest_gap_s
    );
    check(
        sh.found && sh.session_ok() && !mh.found && mh.session_ok() && mv.found && mv.session_ok(),
        detail,
    )
}

fn criterion_taxonomy() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_manetlab"))
        .args(["taxonomy", "--format", "csv"])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("exit status {}", out.status));
    }
    let expected: [(&str, [&str; 5]); 5] = [
        ("802.11s", ["yes", "yes", "yes", "yes", "partial"]),
        ("Open Garden", ["yes", "partial", "no", "no", "no"]),
        ("Serval", ["yes", "yes", "no", "yes", "no"]),
        ("WiFi Direct", ["yes", "no", "no", "yes", "yes"]),
        ("AdHocDroid", ["yes", "yes", "yes", "yes", "partial"]),
    ];
    let mut rd = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = rd.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let mut matched = 0;
    for ((name, cells), row) in expected.iter().zip(&rows) {
        if &row[0] == *name {
            matched += (0..5).filter(|&i| row[i + 1] == *cells[i]).count();
        }
    }
    check(rows.len() == 5 && matched == 25, format!("{matched}/25 cells match"))
}

fn criterion_determinism() -> Outcome {
    let base = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut compared = 0;
    for name in ["infra", "ibss_sh", "ibss_mh"] {
        for (v, variant) in [scenario(name), scenario(name).with_ping_series(30, 1.0, 2.0)].iter().enumerate() {
            let mut files = Vec::new();
            for rep in 0..2 {
                let dir = base.path().join(format!("{name}-{v}-{rep}"));
                files.push(emit_csv(&run_ok(variant), &dir).map_err(|e| e.to_string())?);
            }
            for (a, b) in files[0].iter().zip(&files[1]) {
                let (x, y) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
                if x != y {
                    return Err(format!("{} differs between runs", a.display()));
                }
                compared += 1;
            }
        }
    }
    Ok(format!("{compared} file pairs byte-identical"))
}

fn criterion_faults() -> Outcome {
    // Driver that cannot do IBSS.
    let mut emu = Emulator::new(EmulatorConfig::ibss(3, "static"), reg()).unwrap();
    emu.add_node(NodeSpec {
        fault: FaultModel::DriverNoIbss,
        ..NodeSpec::fixed("X", 0.0, 0.0)
    })
    .unwrap();
    let e = emu.setup_node(&NodeId::new("X"));
    let driver_error = matches!(e, Err(EmuError::NetConfig(NetConfigError::DriverError { .. })));

    // Fake-AP hub: B founds the cell, then leaves.
    let mut emu = Emulator::new(EmulatorConfig::ibss(4, "static"), reg()).unwrap();
    for (id, x) in [("B", 20.0), ("A", 0.0), ("C", 40.0)] {
        emu.add_node(NodeSpec {
            fault: if id == "B" { FaultModel::FakeApIbss } else { FaultModel::None },
            ..NodeSpec::fixed(id, x, 0.0)
        })
        .unwrap();
    }
    for (_, r) in emu.setup_all() {
        r.unwrap();
    }
    let (a, c) = (NodeId::new("A"), NodeId::new("C"));
    let opts = PingOptions { count: 10, ..Default::default() };
    let before = emu.ping(&a, &c, opts).unwrap();
    emu.teardown_node(&NodeId::new("B")).unwrap();
    let after = emu.ping(&a, &c, opts).unwrap();
    let ok_before = before.iter().filter(|r| !r.lost()).count();
    let lost_after = after.iter().filter(|r| r.lost()).count();
    check(
        driver_error && ok_before == 10 && lost_after == after.len() && !after.is_empty(),
        format!(
            "driver fault -> {}; hub present {ok_before}/10 replies, hub gone {lost_after}/{} lost",
            match &e {
                Err(err) => err.to_string(),
                Ok(_) => "setup succeeded".into(),
            },
            after.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("throughput ratios", criterion_throughput),
        ("rtt ratios and power-save delay", criterion_rtt),
        ("idle battery", criterion_idle_battery),
        ("loaded battery", criterion_loaded_battery),
        ("olsr routes vs bfs, mpr coverage", criterion_olsr),
        ("multicast confinement", criterion_multicast),
        ("taxonomy table", criterion_taxonomy),
        ("determinism", criterion_determinism),
        ("fault models", criterion_faults),
    ];
    let mut failed = BTreeSet::new();
    let mut report = BTreeMap::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let r = std::panic::catch_unwind(f).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let (tag, detail) = match &r {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => {
                failed.insert(i + 1);
                ("FAIL", d.clone())
            }
        };
        println!("[{tag}] {}. {name}: {detail} [{:.1}s]", i + 1, t0.elapsed().as_secs_f64());
        report.insert(i + 1, r.is_ok());
    }
    println!(
        "acceptance: {}/{} criteria passed",
        report.values().filter(|ok| **ok).count(),
        report.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
