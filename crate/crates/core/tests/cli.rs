mod common;

use std::process::{Command, Output};

use ehrchain::cli::{EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};

fn ehrchain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ehrchain")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn scenario_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("reports");
    let o = ehrchain(&["scenario", "run", "--config", common::bundled_scenario().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["chain.json", "audit.csv", "recovered.csv", "gas.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let audit = std::fs::read_to_string(out.join("audit.csv")).unwrap();
    let announces: Vec<&str> = audit.lines().filter(|l| l.contains(",LogAnnounce,")).collect();
    let grants = audit.lines().filter(|l| l.contains(",LogKeys,")).count();
    assert_eq!(announces.len(), 3);
    assert_eq!(grants, announces.len());

    // audit from the export, filtered to one staff member
    let staff = announces[1].split(',').nth(4).unwrap();
    let chain = out.join("chain.json");
    let o = ehrchain(&["audit", "events", "--chain", chain.to_str().unwrap(), "--staff", staff]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let table = stdout(&o);
    assert_eq!(table.lines().count(), 3, "{table}");
    assert!(table.lines().skip(1).all(|l| l.contains(staff)));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(
        &cfg,
        r#"{"seed": 1, "structure": ["a", "b"], "segments": [{"text": "x"}], "staff": [{"id": "s", "attributes": ["a"]}]}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = ehrchain(&["scenario", "run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(!out.exists(), "nothing is written before validation passes");

    assert_eq!(ehrchain(&["analyze", "replay", "--q", "-1", "--n", "2"]).status.code(), Some(EXIT_CONFIG));
    assert_eq!(ehrchain(&["analyze", "replay", "--q", "0.1"]).status.code(), Some(EXIT_CONFIG));
    let missing = dir.path().join("none.json");
    let o = ehrchain(&["audit", "events", "--chain", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn unwritable_output_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"").unwrap();
    let out = blocker.join("reports");
    let o = ehrchain(&["scenario", "run", "--config", common::bundled_scenario().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_RUNTIME));
}

#[test]
fn analyze_replay_prints_csv() {
    let o = ehrchain(&["analyze", "replay", "--q", "0.1", "--n", "2", "--trials", "20000", "--seed", "4"]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("q,n,closed_form,monte_carlo,trials,seed"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[..3], ["0.1", "2", "0.056"]);
    assert_eq!(row[4..], ["20000", "4"]);
    assert_eq!(text, stdout(&ehrchain(&["analyze", "replay", "--q", "0.1", "--n", "2", "--trials", "20000", "--seed", "4"])));
}

#[test]
fn report_costs_lists_trends() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("costs.csv");
    let o = ehrchain(&["report", "costs", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    assert!(!stdout(&o).contains("FAIL"));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("operation,k,N,up_bound,caller_level,gas_used\n"));
    assert_eq!(text.lines().count(), 41);
}
