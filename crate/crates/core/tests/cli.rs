use std::process::{Command, Output};

fn manip_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_manip-lab"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn table2_markdown_is_eight_by_four() {
    let out = manip_lab(&["table2", "--format", "markdown"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| l.starts_with("| x")).collect();
    assert_eq!(rows.len(), 8);
    assert!(rows.iter().all(|r| r.matches(" | ").count() == 4));
}

#[test]
fn baseline_trajectory_takes_two_steps() {
    let out = manip_lab(&[
        "trajectory",
        "--scenario",
        "mdp_baseline",
        "--start",
        "x2",
        "--format",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["steps"], 2);
    assert_eq!(v["actions"], serde_json::json!(["MBuyB", "MBuyB"]));
}

#[test]
fn missing_subcommand_exits_two() {
    let out = manip_lab(&[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_price_file_exits_one_with_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    std::fs::write(&path, "tick,price_a,price_b\n0,10,20\n1,0,20\n").unwrap();
    let out = manip_lab(&["backtest", "--prices", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains(":3:"), "{err}");
}

#[test]
fn identical_invocations_are_byte_identical() {
    for args in [
        &["table3", "--format", "json"][..],
        &["table1", "--format", "csv"][..],
        &[
            "solve-mdp",
            "--scenario",
            "mdp_uncertain_50",
            "--format",
            "csv",
        ][..],
    ] {
        let a = manip_lab(args);
        let b = manip_lab(args);
        assert_eq!(a.status.code(), Some(0));
        assert_eq!(a.stdout, b.stdout);
    }
}

#[test]
fn out_flag_writes_file_not_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t2.csv");
    let out = manip_lab(&["table2", "--format", "csv", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("row,column,actions,symbols\n"));
    assert_eq!(text.lines().count(), 1 + 8 * 4);
}

#[test]
fn scenario_file_overrides_a_preset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("what_if.toml");
    std::fs::write(&path, "preset = \"mdp_fines\"\nmanip_move_cost = -4.5\n").unwrap();
    let out = manip_lab(&[
        "solve-mdp",
        "--scenario",
        path.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["scenario"]["manip_move_cost"], -4.5);
    assert_eq!(v["scenario"]["manip_collision_cost"], -4.53);
    assert_eq!(v["states"][1]["actions"], serde_json::json!(["MBuyB"]));
}

#[test]
fn unknown_scenario_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("typo.toml");
    std::fs::write(&path, "manip_mov_cost = -2\n").unwrap();
    let out = manip_lab(&["solve-mdp", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn sweep_without_sign_change_reports_no_threshold() {
    let out = manip_lab(&["sweep", "--range", "6:9"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no threshold in range"));
}
