use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mwp_shaper::netlist::csv::parse_csv;
use mwp_shaper::netlist::load_netlist;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mwp-shaper")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn block_sweep_writes_a_notch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ring.csv");
    let o = run(&[
        "block", "ring_allpass", "fsr_ghz=50", "kappa=0.2", "round_trip_amplitude=0.894427191",
        "--sweep", "-25:25:0.5", "--out", s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = parse_csv(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(header, ["offset_ghz", "re", "im"]);
    assert_eq!(rows.len(), 101);
    let p: Vec<f64> = rows.iter().map(|r| r[1] * r[1] + r[2] * r[2]).collect();
    assert!(p[50] < 1e-12, "critically coupled resonance at 0 GHz: {}", p[50]);
    assert!(p[0] > 0.5);
}

#[test]
fn invalid_attribute_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let net = dir.path().join("bad.net");
    fs::write(
        &net,
        "format 1\nblock r ring_allpass fsr_ghz=50 kappa=1.5\ninput in r.in\noutput out r.out\n",
    )
    .unwrap();
    let o = run(&["sweep", s(&net), "--sweep", "-5:5:1", "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("kappa"), "{err}");
}

#[test]
fn usage_and_runtime_exit_codes() {
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "preset:identity", "--sweep", "1:0:1", "--out", "x.csv"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let o = run(&["sweep", "preset:identity", "--sweep", "-1:1:1", "--port", "nope", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["sweep", s(&dir.path().join("missing.net")), "--sweep", "-1:1:1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn sweep_writes_one_file_per_port() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("deint.csv");
    let o = run(&["sweep", "preset:deinterleaver", "--sweep", "-30:30:1", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for port in ["bar", "cross"] {
        let text = fs::read_to_string(dir.path().join(format!("deint_{port}.csv"))).unwrap();
        assert_eq!(parse_csv(&text).unwrap().1.len(), 61);
    }
}

#[test]
fn optimize_is_reproducible_and_improves_extinction() {
    let dir = tempfile::tempdir().unwrap();
    let mut tuned = Vec::new();
    for name in ["a.net", "b.net"] {
        let out = dir.path().join(name);
        let summary = dir.path().join(format!("{name}.txt"));
        let o = run(&[
            "optimize", "preset:deinterleaver", "--objective", "deinterleaver-extinction",
            "--seed", "7", "--max-evals", "3000", "--out", s(&out), "--summary", s(&summary),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = fs::read_to_string(&summary).unwrap();
        let best: f64 = text
            .lines()
            .find_map(|l| l.strip_prefix("best_value_db "))
            .unwrap()
            .parse()
            .unwrap();
        assert!(best > 20.0, "{text}");
        tuned.push(fs::read_to_string(&out).unwrap());
    }
    assert_eq!(tuned[0], tuned[1]);
    load_netlist(&tuned[0]).unwrap();
}

#[test]
fn experiment_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let cfg = dir.path().join("notch.cfg");
    fs::write(
        &cfg,
        format!("format 1\nexperiment ssb_notch\nsweep 5 25 0.05\noutput {}\n", s(&out)),
    )
    .unwrap();
    let o = run(&["experiment", s(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("experiment ssb_notch\n"), "{stdout}");
    assert!(out.join("summary.txt").exists());
    let (_, rows) = parse_csv(&fs::read_to_string(out.join("ssb.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 401);

    fs::write(&cfg, "format 1\nsweep 5 25 0.05\n").unwrap();
    let o = run(&["experiment", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("experiment"));
}
