use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use authlink::node::LogEvent;

fn authlink(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_authlink"))
        .current_dir(dir)
        .env_remove("AUTHLINK_LOG_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Log lines with the timestamp column dropped.
fn untimed(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let e = LogEvent::parse_line(l).unwrap();
            format!("{} {} {}", e.node_id, e.event, e.detail)
        })
        .collect()
}

#[test]
fn demo_succeeds_and_writes_both_logs() {
    let dir = tempfile::tempdir().unwrap();
    let o = authlink(dir.path(), &["demo", "--dh-bits", "2048", "--params-mode", "well-known", "--payload", "hello"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    for step in 1..=10 {
        assert!(out.contains(&format!("[step {step}]")), "missing step {step}:\n{out}");
    }
    assert!(out.contains("\"hello\""));
    for node in ["drone0", "drone1"] {
        let log = fs::read_to_string(dir.path().join(format!("{node}.log"))).unwrap();
        assert!(log.contains("KEY_EXCHANGE_COMPLETE"), "{node}: {log}");
    }
    assert!(fs::read_to_string(dir.path().join("drone1.log")).unwrap().contains("AUTH_OK"));
}

#[test]
fn demo_logs_repeat_except_timestamps() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = authlink(d.path(), &["demo", "--dh-bits", "1024", "--seed", "17", "--log-dir", "logs"]);
        assert_eq!(o.status.code(), Some(0));
    }
    for node in ["drone0.log", "drone1.log"] {
        assert_eq!(untimed(&a.path().join("logs").join(node)), untimed(&b.path().join("logs").join(node)));
    }
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["demo", "--dh-bits", "999"][..],
        &["demo", "--hmac-bits", "100"],
        &["bench", "--repeats", "0"],
        &["attack", "--trials", "0"],
        &["attack", "--mode", "sneaky"],
        &["attack", "--tamper-fraction", "0"],
        &["launch"],
        &[],
    ] {
        let o = authlink(dir.path(), args);
        assert_eq!(o.status.code(), Some(64), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn help_lists_every_flag_with_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[&str]); 3] = [
        ("demo", &["--dh-bits", "--hmac-bits", "--params-mode", "--payload", "--seed", "--log-dir"]),
        (
            "bench",
            &["--dh-bits", "--hmac-bits", "--repeats", "--params-mode", "--out", "--plots", "--seed", "--allow-4096"],
        ),
        ("attack", &["--trials", "--mode", "--tamper-fraction", "--targets", "--seed", "--log-dir", "--report"]),
    ];
    for (sub, flags) in cases {
        let o = authlink(dir.path(), &[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let help = stdout(&o);
        for flag in flags {
            assert!(help.contains(flag), "{sub} help lacks {flag}");
        }
        // boolean switches carry no default
        let valued = flags.iter().filter(|f| **f != "--allow-4096").count();
        assert!(help.matches("[default: ").count() >= valued, "{sub} help:\n{help}");
    }
}

#[test]
fn attack_reports_full_detection() {
    let dir = tempfile::tempdir().unwrap();
    let o =
        authlink(dir.path(), &["attack", "--trials", "25", "--mode", "random", "--targets", "both", "--seed", "42"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("detected 25/25"));
    let report = fs::read_to_string(dir.path().join("attack_report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next(),
        Some("trial_id,chosen_attack,target,detected_by_drone0,detected_by_drone1,detection_event")
    );
    assert_eq!(lines.clone().count(), 25);
    for line in lines {
        let cols: Vec<_> = line.split(',').collect();
        assert_eq!(&cols[2..5], &["both", "true", "true"], "{line}");
    }
    let log = fs::read_to_string(dir.path().join("drone0.log")).unwrap();
    assert!(log.lines().all(|l| l.contains(" trial=")));
}

#[test]
fn single_target_attack_is_detected_by_that_drone() {
    let dir = tempfile::tempdir().unwrap();
    let o = authlink(
        dir.path(),
        &["attack", "--trials", "20", "--mode", "tamper", "--targets", "drone1", "--report", "r.csv"],
    );
    assert_eq!(o.status.code(), Some(0));
    let report = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(report.lines().skip(1).all(|l| l.split(',').nth(4) == Some("true")));
}

#[test]
fn honest_control_run_has_no_alarms() {
    let dir = tempfile::tempdir().unwrap();
    let o = authlink(dir.path(), &["attack", "--trials", "20", "--targets", "none"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("false alarms 0/20"));
}

#[test]
fn log_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_authlink"))
        .current_dir(dir.path())
        .env("AUTHLINK_LOG_DIR", "from-env")
        .args(["demo", "--dh-bits", "256"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("from-env/drone0.log").exists());
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"dh_bits": [256, 512], "hmac_bits": [512], "repeats": 3, "params_mode": "well-known",
            "out": "sweep.csv", "plots": "svg"}"#,
    )
    .unwrap();
    let o = authlink(dir.path(), &["bench", "--config", "cfg.json", "--repeats", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "command-line --repeats 1 wins over the file's 3");
    assert!(dir.path().join("svg/scatter.svg").exists());
    assert!(dir.path().join("svg/histogram.svg").exists());

    fs::write(dir.path().join("bad.json"), r#"{"no_such_flag": 1}"#).unwrap();
    assert_eq!(authlink(dir.path(), &["bench", "--config", "bad.json"]).status.code(), Some(64));
    assert_eq!(authlink(dir.path(), &["demo", "--config", "missing.json"]).status.code(), Some(64));
}

#[test]
fn attack_reports_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        let o = authlink(dir.path(), &["attack", "--trials", "10", "--seed", "7", "--report", name]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(dir.path().join("a.csv")).unwrap(), fs::read(dir.path().join("b.csv")).unwrap());
}
