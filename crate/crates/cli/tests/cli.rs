use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn contmeas(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_contmeas"));
    cmd.args(args).env_remove("CONTMEAS_OUT_DIR");
    if let Some(dir) = out_env {
        cmd.env("CONTMEAS_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_config(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "run",
        path_str(config),
        "--out",
        path_str(out),
        "--set",
        "trajectories=200",
    ];
    args.extend_from_slice(extra);
    contmeas(&args, None)
}

#[test]
fn run_projective_reference_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(&configs().join("projective_qubit.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "stats.json",
        "summary.csv",
        "checkpoints.csv",
        "run_meta.json",
        "config.toml",
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 201);
    assert!(stdout(&o).contains("acceptance: pass"));
}

#[test]
fn every_reference_config_validates() {
    for name in [
        "projective_qubit.toml",
        "unsharp_qubit.toml",
        "qutrit_three_outcome.toml",
    ] {
        let o = contmeas(&["validate", path_str(&configs().join(name))], None);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        assert!(stdout(&o).contains(": ok"));
    }
}

#[test]
fn corrupted_kraus_file_fails_naming_residual() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(&fixture("corrupted.toml"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("corrupted_kraus.json"), "{err}");
    assert!(err.contains("1.000e-1"), "{err}");
    assert!(!dir.path().join("stats.json").exists());
}

#[test]
fn seed_override_changes_stats_not_schema() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = configs().join("qutrit_three_outcome.toml");
    assert_eq!(run_config(&config, a.path(), &[]).status.code(), Some(0));
    assert_eq!(
        run_config(&config, b.path(), &["--set", "master_seed=12345"])
            .status
            .code(),
        Some(0)
    );
    let read = |d: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(d.join("stats.json")).unwrap()).unwrap()
    };
    let (sa, sb) = (read(a.path()), read(b.path()));
    assert_ne!(sa, sb);
    assert_eq!(sb["master_seed"], 12345);
    let keys = |v: &serde_json::Value| v.as_object().unwrap().keys().cloned().collect::<Vec<_>>();
    assert_eq!(keys(&sa), keys(&sb));
}

#[test]
fn same_seed_gives_identical_stats_across_workers() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let config = configs().join("unsharp_qubit.toml");
    assert_eq!(
        run_config(&config, a.path(), &["--workers", "1"])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        run_config(&config, b.path(), &["--workers", "3"])
            .status
            .code(),
        Some(0)
    );
    let bytes = |d: &Path| std::fs::read(d.join("stats.json")).unwrap();
    assert_eq!(bytes(a.path()), bytes(b.path()));
}

#[test]
fn validate_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never");
    let o = contmeas(
        &[
            "-v",
            "validate",
            path_str(&configs().join("unsharp_qubit.toml")),
        ],
        Some(&out),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("mode = \"generalized\""));
    assert!(!out.exists());
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn config_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = configs().join("projective_qubit.toml");
    let o = contmeas(&["validate", path_str(&config), "--set", "sde.dt=-1"], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sde.dt"), "{}", stderr(&o));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "mode = \"continuous\"\ntrajectories = 5\nmaster_seed = 1\nbogus = 2\n[system]\ndimension = 2\ninitial_state = [1, 1]\n").unwrap();
    let o = contmeas(&["validate", path_str(&bad)], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bogus"), "{}", stderr(&o));
    assert!(stderr(&o).contains("bad.toml"), "{}", stderr(&o));

    let o = contmeas(
        &["validate", path_str(&dir.path().join("absent.toml"))],
        None,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent.toml"));
}

#[test]
fn output_directory_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from_env");
    let o = contmeas(
        &[
            "run",
            path_str(&configs().join("qutrit_three_outcome.toml")),
            "--set",
            "trajectories=50",
        ],
        Some(&out),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("stats.json").is_file());
}

#[test]
fn unterminated_run_exits_2_and_report_warns() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_config(
        &configs().join("unsharp_qubit.toml"),
        dir.path(),
        &["--set", "sde.max_time=0.5"],
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stdout(&o).contains("acceptance: FAIL"));

    let stats = dir.path().join("stats.json");
    let o = contmeas(&["report", path_str(&stats)], None);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(
        text.lines()
            .any(|l| l.starts_with("warning:") && l.contains("unterminated (fraction")),
        "{text}"
    );
}

#[test]
fn report_lists_outcomes_and_writes_plot_table() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        run_config(
            &configs().join("qutrit_three_outcome.toml"),
            dir.path(),
            &[]
        )
        .status
        .code(),
        Some(0)
    );
    let table = dir.path().join("plot.csv");
    let o = contmeas(
        &[
            "report",
            path_str(&dir.path().join("stats.json")),
            "--csv",
            path_str(&table),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("outcome") && text.contains("wilson 95%") && text.contains("target"));
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit()))
        .take(3)
        .collect();
    assert_eq!(rows.len(), 3, "{text}");
    assert!(!text.contains("warning:"));
    let csv = std::fs::read_to_string(&table).unwrap();
    assert!(csv.starts_with("steps,moment_mean,moment_std_error,mean_1,mean_2,mean_3"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn report_rejects_missing_and_corrupt_stats() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("stats.json");
    let o = contmeas(&["report", path_str(&missing)], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stats.json"));

    std::fs::write(&missing, "{\"format_version\": 1, \"mode\"").unwrap();
    let o = contmeas(&["report", path_str(&missing)], None);
    assert_eq!(o.status.code(), Some(1));

    std::fs::write(&missing, "{\"format_version\": 7}").unwrap();
    let o = contmeas(&["report", path_str(&missing)], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("format_version 7"));
}

#[test]
fn replay_writes_per_step_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = contmeas(
        &[
            "replay",
            path_str(&configs().join("projective_qubit.toml")),
            "--index",
            "4",
            "--every",
            "100",
            "--out",
            path_str(dir.path()),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("replay_4.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,x_1,x_2,moment");
    assert!(csv.lines().count() > 2);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("replay_4.json")).unwrap())
            .unwrap();
    assert!(json["continuous"]["noise"].as_array().unwrap().len() > 1);

    let o = contmeas(
        &[
            "replay",
            path_str(&configs().join("qutrit_three_outcome.toml")),
            "--out",
            path_str(dir.path()),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("replay_0.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "t,x_1,x_2,x_3,moment");
}

#[test]
fn unknown_subcommand_is_rejected() {
    let o = contmeas(&["frobnicate"], None);
    assert_ne!(o.status.code(), Some(0));
}
