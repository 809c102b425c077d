use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn plcqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plcqkd")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Output {
    let out = plcqkd(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn kv(path: &Path) -> HashMap<String, String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[rustfmt::skip]
const IDEAL: &[&str] = &[
    "--set", "alice_mzi.t_long_db=0",
    "--set", "bob_mzi.t_long_db=0",
    "--set", "bob_mzi.overlap=1",
    "--set", "fibre.scramble=false",
    "--set", "fibre.atten_db_per_km=0",
    "--set", "detector0.efficiency=1",
    "--set", "detector1.efficiency=1",
    "--set", "detector0.dark_prob_per_gate=0",
    "--set", "detector1.dark_prob_per_gate=0",
];

#[test]
fn missing_config_is_a_config_error_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let res = plcqkd(&["--config", "/no/such/run.cfg", "--out", out.to_str().unwrap(), "fringe-scan"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("/no/such/run.cfg"));
    assert!(!out.exists(), "nothing written on a config error");
}

#[test]
fn zero_pulses_is_rejected() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(plcqkd(&["--out", out, "bb84", "--pulses", "0"]).status.code(), Some(2));
    let res = plcqkd(&["--out", out, "--set", "bb84.pulses=0", "bb84"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("bb84.pulses"));
}

#[test]
fn invalid_values_name_the_key() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    for (set, key) in [
        ("bob_mzi.r_out=1.5", "bob_mzi.r_out"),
        ("fibre.length_km=-1", "fibre.length_km"),
        ("detector1.dark_prob_per_gate=abc", "detector1.dark_prob_per_gate"),
        ("alice_mzi.colour=red", "alice_mzi.colour"),
    ] {
        let res = plcqkd(&["--out", out, "--set", set, "fringe-scan"]);
        assert_eq!(res.status.code(), Some(2), "{set}");
        assert!(String::from_utf8_lossy(&res.stderr).contains(key), "{set}");
    }

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "# comment\nsource.mu = 0.2\nthis is not a pair\n").unwrap();
    let res = plcqkd(&["--config", cfg.to_str().unwrap(), "--out", out, "fringe-scan"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("bad.cfg:3"));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = TempDir::new().unwrap();
    let file = dir.path().join("plain_file");
    fs::write(&file, "x").unwrap();
    let out = file.join("sub");
    let res = plcqkd(&["--out", out.to_str().unwrap(), "bb84", "--pulses", "10"]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn ideal_link_has_no_time_basis_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["--out", out, "--seed", "3"];
    args.extend_from_slice(IDEAL);
    args.extend_from_slice(&["bb84", "--pulses", "20000"]);
    run_ok(&args);

    let report = kv(&dir.path().join("report.txt"));
    assert_eq!(report["qber_time"], "0.0");
    assert_eq!(report["qber_phase"], "0.0");
    assert_eq!(report["noise_free_visibility"], "1.0");

    let key = kv(&dir.path().join("key.txt"));
    assert_eq!(key["alice"], key["bob"]);
    let bits: usize = key["bits"].parse().unwrap();
    let kept: usize =
        report["kept_time"].parse::<usize>().unwrap() + report["kept_phase"].parse::<usize>().unwrap();
    assert_eq!(bits, kept);
    // Half of the light leaves Alice's unused output port, so about 4.9% of
    // pulses click with unit efficiency, and half of those are kept.
    assert!((380..600).contains(&bits), "{bits}");

    let records = fs::read_to_string(dir.path().join("records.csv")).unwrap();
    let mut lines = records.lines();
    assert_eq!(lines.next(), Some("index,alice_bit,alice_basis,slot,port,kept"));
    assert_eq!(lines.count(), 20000);
}

#[test]
fn pol_sweep_tracks_the_analytic_minimum() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["--out", out, "pol-sweep", "--steps", "7"]);
    let csv = fs::read_to_string(dir.path().join("pol_sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("delta_rad,measured_v_min,analytic_v_min"));
    let rows: Vec<[f64; 3]> = lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0], [0.0, 1.0, 1.0]);
    let third = rows[4];
    assert!((third[0] - std::f64::consts::FRAC_PI_3).abs() < 1e-12);
    assert!((third[2] - 0.5).abs() < 1e-12);
    for [delta, measured, analytic] in rows {
        assert!((analytic - delta.cos().abs()).abs() < 1e-12);
        assert!((measured - analytic).abs() < 1e-3, "delta {delta}: {measured} vs {analytic}");
        assert!(measured >= analytic - 1e-12, "sampled minimum below the true minimum");
    }
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn outputs_are_reproducible_across_runs_and_thread_counts() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "4")] {
        let out = dir.path().to_str().unwrap();
        run_ok(&["--out", out, "--seed", "11", "--threads", threads, "fringe-scan"]);
        run_ok(&["--out", out, "--seed", "11", "--threads", threads, "bb84", "--pulses", "150000"]);
    }
    for name in ["fringe.csv", "summary.txt", "records.csv", "key.txt", "report.txt", "config.txt"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }

    run_ok(&["--out", c.path().to_str().unwrap(), "--seed", "12", "fringe-scan"]);
    assert_ne!(read(a.path(), "fringe.csv"), read(c.path(), "fringe.csv"));
}

#[test]
fn echoed_config_round_trips() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    run_ok(&[
        "--out",
        a.path().to_str().unwrap(),
        "--seed",
        "99",
        "--set",
        "bob_mzi.t_long_db=7.3",
        "--set",
        "source.mu=0.123456789",
        "--set",
        "switch.pm_phase_rad=0.1",
        "--set",
        "detector1.gated_slots=0,2",
        "--set",
        "scan.steps=13",
        "fringe-scan",
    ]);
    let echoed = a.path().join("config.txt");
    let text = fs::read_to_string(&echoed).unwrap();
    assert!(text.contains("seed = 99\n"));
    assert!(text.contains("bob_mzi.t_long_db = 7.3\n"));
    assert!(text.contains("detector1.gated_slots = 0,2\n"));

    run_ok(&["--config", echoed.to_str().unwrap(), "--out", b.path().to_str().unwrap(), "fringe-scan"]);
    for name in ["config.txt", "fringe.csv", "summary.txt"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

fn count_sum(dir: &Path) -> (u64, usize) {
    let csv = fs::read_to_string(dir.join("fringe.csv")).unwrap();
    let mut n = 0;
    let total = csv
        .lines()
        .skip(1)
        .map(|l| {
            n += 1;
            let f: Vec<&str> = l.split(',').collect();
            f[2].parse::<u64>().unwrap() + f[3].parse::<u64>().unwrap()
        })
        .sum();
    (total, n)
}

#[test]
fn fibre_override_scales_the_count_level() {
    let near = TempDir::new().unwrap();
    let far = TempDir::new().unwrap();
    run_ok(&["--out", near.path().to_str().unwrap(), "fringe-scan"]);
    run_ok(&["--out", far.path().to_str().unwrap(), "--set", "fibre.length_km=10", "fringe-scan"]);
    assert!(kv(&far.path().join("config.txt"))["fibre.length_km"] == "10.0");

    let (c_near, n) = count_sum(near.path());
    let (c_far, _) = count_sum(far.path());
    // Central slot only: two gated detectors, one dark gate each per pulse.
    let dark = (2 * n as u64 * 5_000_000) as f64 * 1e-5;
    let ratio = (c_far as f64 - dark) / (c_near as f64 - dark);
    assert!((ratio - 10f64.powf(-0.2)).abs() < 0.02, "{ratio}");

    let summary = kv(&far.path().join("summary.txt"));
    assert_eq!(summary["points"], "49");
    let v: f64 = summary["visibility_port0"].parse().unwrap();
    assert!(v > 0.5 && v < 1.0, "{v}");
}
