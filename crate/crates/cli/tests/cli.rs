use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kicnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kicnet")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, json: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

const CHAIN: &str = r#"{"topology": {"kind": "chain", "n_nodes": 5, "spacing": 200},
                        "sim": {"duration_s": 0.5, "seeds": [1, 2]}}"#;

#[test]
fn ideal_table_and_limit_row() {
    let out = kicnet(&["ideal", "--n", "4..10", "--m", "1..100", "--limit"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "N,M,r_pr,r_pnc,r_fd,r_e2ekic");
    assert_eq!(lines.len(), 1 + 7 * 101);
    assert!(lines.contains(&"7,inf,0.3333333333333333,0.5,0.5,1"));
    assert!(lines.contains(&"4,1,0.3333333333333333,0.3333333333333333,0.3333333333333333,0.3333333333333333"));
}

#[test]
fn short_flows_warn_but_compute() {
    let out = kicnet(&["ideal", "--n", "3", "--m", "2"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("3,2,0.4,0.5,"));
}

#[test]
fn saturation_sweep_columns() {
    for (d, n_cs) in [("110", "9"), ("150", "5")] {
        let out = kicnet(&["saturation", "--d", d, "--w", "100..1000:100"]);
        assert!(out.status.success());
        let text = String::from_utf8(out.stdout).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("W,N_CS,P_t,P_c,delta_us,S_bits_per_us,iterations,variant"));
        let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r[1] == n_cs && r[7] == "geometric"));
        assert_eq!(rows[9][0], "1000");
    }
}

#[test]
fn exit_codes() {
    let out = kicnet(&["saturation", "--d", "110", "--w", "100", "--variant", "verbatim"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside"));
    assert_eq!(kicnet(&["saturation", "--d", "90", "--w", "100"]).status.code(), Some(2));
    assert_eq!(kicnet(&["ideal", "--n", "1..x"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", r#"{"sim": {"duration_s": -1, "seeds": []}, "traffic": {"packet_rate": 0}}"#);
    let out = kicnet(&["simulate", "--config", &bad, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for needle in ["duration_s", "seeds", "packet_rate"] {
        assert!(err.contains(needle), "missing {needle} in {err}");
    }
    let typo = write_config(dir.path(), "typo.json", r#"{"sim": {"duraton_s": 1}}"#);
    assert_eq!(kicnet(&["simulate", "--config", &typo, "--out", "x"]).status.code(), Some(2));
    assert_eq!(kicnet(&["simulate", "--config", "/nonexistent.json", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn simulate_writes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "chain5.json", CHAIN);
    let out_dir = dir.path().join("out");
    let o = out_dir.to_str().unwrap();
    let out = kicnet(&["simulate", "--config", &cfg, "--out", o, "--sweep", "packet_rate=20,40", "--mac", "both"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(out_dir.join("results.csv")).unwrap();
    let mut lines = results.lines();
    assert_eq!(lines.next(), Some("scenario,mac,seed,packet_rate,n_nodes,metric,value"));
    let thr = results.lines().filter(|l| l.contains(",throughput_bps,")).count();
    assert_eq!(thr, 2 * 2 * 2);
    assert!(results.lines().nth(1).unwrap().starts_with("chain5,e2ekic,1,20.0,5,"));
    let agg = fs::read_to_string(out_dir.join("aggregate.csv")).unwrap();
    assert!(agg.starts_with("scenario,mac,packet_rate,n_nodes,metric,mean,stddev,n\n"));
    assert!(out_dir.join("config.json").exists());
}

#[test]
fn protocol_traces_are_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CHAIN);
    let o = dir.path().join("t");
    let out = kicnet(&[
        "simulate", "--config", &cfg, "--out", o.to_str().unwrap(), "--seeds", "3", "--mac", "e2ekic", "--trace", "protocol",
    ]);
    assert!(out.status.success());
    let trace = fs::read_to_string(o.join("trace_p0_e2ekic_s3.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(trace.lines().next().unwrap()).unwrap();
    assert!(first.get("kind").is_some() && first.get("t").is_some());
    assert!(trace.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CHAIN);
    let run = |sub: &str, threads: &str| {
        let o = dir.path().join(sub);
        let out = Command::new(env!("CARGO_BIN_EXE_kicnet"))
            .args(["simulate", "--config", &cfg, "--out", o.to_str().unwrap()])
            .env("KICNET_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        fs::read(o.join("results.csv")).unwrap()
    };
    assert_eq!(run("a", "1"), run("b", "3"));
}

#[test]
fn normalized_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CHAIN);
    let once = kicnet(&["config", "--config", &cfg]);
    assert!(once.status.success());
    let norm = write_config(dir.path(), "n.json", &String::from_utf8(once.stdout.clone()).unwrap());
    let twice = kicnet(&["config", "--config", &norm]);
    assert_eq!(once.stdout, twice.stdout);
}
