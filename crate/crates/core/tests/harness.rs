use std::path::Path;
use std::process::Command;

use manetlab::harness::scenario::FlowKind;
use manetlab::harness::{builtin, emit_csv, repetition_dir, run, run_batch, Scenario, ScenarioError};
use manetlab::routing::{DropReason, PackageRegistry};

fn reg() -> PackageRegistry {
    PackageRegistry::with_builtins()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let header = rd.headers().unwrap().iter().map(String::from).collect();
    let rows = rd
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

#[test]
fn csv_headers_and_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let b = run(&builtin("ibss_mh").unwrap(), &reg()).unwrap();
    emit_csv(&b, dir.path()).unwrap();

    let (h, rows) = read_csv(&dir.path().join("throughput.csv"));
    assert_eq!(h, ["time_s", "flow", "bits_per_s"]);
    assert_eq!(rows.len(), 60);
    assert_eq!(rows[0][0], "1");
    assert_eq!(rows[59][0], "60");

    let (h, _) = read_csv(&dir.path().join("routes.csv"));
    assert_eq!(h, ["node", "destination", "next_hop", "hop_count", "converged_s"]);
    let (h, _) = read_csv(&dir.path().join("battery.csv"));
    assert_eq!(h, ["node", "percent", "interval_s"]);
    let (h, _) = read_csv(&dir.path().join("drops.csv"));
    assert_eq!(h, ["node", "reason", "count"]);

    let p = run(&builtin("ibss_sh").unwrap().with_ping_series(30, 1.0, 2.0), &reg()).unwrap();
    emit_csv(&p, dir.path()).unwrap();
    let (h, rows) = read_csv(&dir.path().join("ping.csv"));
    assert_eq!(h, ["seq", "rtt_ms", "lost"]);
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| r[2] == "false"));
}

#[test]
fn per_second_samples_add_up_to_delivered_bytes() {
    for name in ["ibss_sh", "ibss_mh", "infra"] {
        let b = run(&builtin(name).unwrap(), &reg()).unwrap();
        let t = &b.throughput[0];
        assert_eq!(t.samples.iter().sum::<u64>(), t.delivered_bytes * 8, "{name}");
        assert_eq!(t.delivered_bytes, t.delivered_packets * 1470);
    }
}

#[test]
fn chain_routes_in_bundle() {
    let b = run(&builtin("ibss_mh").unwrap(), &reg()).unwrap();
    let row = b
        .routes
        .iter()
        .find(|r| r.node.as_str() == "A" && r.destination_node.as_ref().map(|n| n.as_str()) == Some("C"))
        .unwrap();
    assert_eq!(row.hop_count, 2);
    assert_eq!(row.next_hop_node.as_ref().unwrap().as_str(), "B");
    assert!(row.converged_s.unwrap() <= 15.0);
    assert_eq!(b.drop_total(DropReason::NoRoute), 0);
}

#[test]
fn infra_traffic_transits_the_access_point() {
    let b = run(&builtin("infra").unwrap(), &reg()).unwrap();
    assert!(b.throughput[0].delivered_packets > 0);
    let mut s = builtin("infra").unwrap();
    // Without the AP the stations cannot reach each other at all.
    s.events.push(
        serde_json::from_str(r#"{"at_s": 0, "node": "B", "action": "teardown"}"#).unwrap(),
    );
    let b = run(&s, &reg()).unwrap();
    assert_eq!(b.throughput[0].delivered_packets, 0);
}

#[test]
fn batch_uses_consecutive_seeds() {
    let s = builtin("infra").unwrap().with_ping_series(5, 1.0, 2.0);
    let runs = run_batch(&s, &reg(), 3);
    let seeds: Vec<u64> = runs.iter().map(|r| r.as_ref().unwrap().seed).collect();
    assert_eq!(seeds, vec![s.seed, s.seed + 1, s.seed + 2]);
    let rtt = |i: usize| runs[i].as_ref().unwrap().pings[0].records.clone();
    assert_ne!(rtt(0), rtt(1));
    let out = Path::new("/x");
    assert_eq!(repetition_dir(out, 1, 0, 7), out);
    assert_ne!(repetition_dir(out, 3, 0, 7), repetition_dir(out, 3, 1, 8));
}

#[test]
fn stop_on_depletion_ends_run_early() {
    let mut s = builtin("ibss_sh").unwrap();
    s.duration_s = 3600.0;
    s.stop_on_depletion = true;
    s.nodes[0].battery_percent = 1.0;
    s.energy = s.energy.scaled(100.0);
    let b = run(&s, &reg()).unwrap();
    assert!(b.elapsed_s < 60.0, "{}", b.elapsed_s);
    assert!(b.battery("A").unwrap().depleted_at_s.is_some());
    assert_eq!(b.throughput[0].samples.len(), b.elapsed_s.ceil() as usize);
}

#[test]
fn load_reports_file_problems() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{\n \"name\": \"x\",\n \"duration_s\": \"long\"\n}").unwrap();
    assert!(matches!(Scenario::load(&path, &reg()), Err(ScenarioError::Parse { line: 3, .. })));
    assert!(matches!(
        Scenario::load(&dir.path().join("missing.json"), &reg()),
        Err(ScenarioError::Io { .. })
    ));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_manetlab")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = builtin("ibss_sh").unwrap();
    s.routing.package = "babel".into();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, s.to_json()).unwrap();
    let out = cli(&["run", "--scenario", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("babel"));

    let out = cli(&["scenarios"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 3);

    let out = cli(&["traceroute", "--scenario", "ibss_mh", "--src", "A", "--dst", "C"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(text.lines().next().unwrap().contains("(B)") && text.lines().nth(1).unwrap().contains("(C)"));
}

#[test]
fn cli_batch_with_custom_package() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("fast-olsr.json");
    std::fs::write(
        &manifest,
        r#"{"name": "fast-olsr", "version": "1.0", "protocol": "olsr",
            "params": {"hello_interval_s": 1.0, "tc_interval_s": 2.0, "neighbor_hold_s": 3.5}}"#,
    )
    .unwrap();
    let mut s = builtin("ibss_mh").unwrap();
    s.routing.package = "fast-olsr".into();
    s.duration_s = 5.0;
    s.flows[0].kind = FlowKind::Cbr { rate_bps: 1e6 };
    let file = dir.path().join("s.json");
    std::fs::write(&file, s.to_json()).unwrap();
    let out_dir = dir.path().join("out");
    let out = cli(&[
        "run",
        "--scenario",
        file.to_str().unwrap(),
        "--repeat",
        "2",
        "--seed",
        "40",
        "--package",
        manifest.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for (r, seed) in [(0, 40), (1, 41)] {
        let d = repetition_dir(&out_dir, 2, r, seed);
        let (_, rows) = read_csv(&d.join("throughput.csv"));
        assert_eq!(rows.len(), 5);
    }
}
