//! End-to-end checks of the `chemokin` binary: flag handling, config
//! rejection, artifact layout, and byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn chemokin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chemokin"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

#[test]
fn closure_subcommand_writes_traceable_artifacts() {
    let dir = tempdir().unwrap();
    let out = chemokin(&["closure", "--out", "run", "--seed", "7"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let run = dir.path().join("run");
    for name in ["config.json", "closure_00_G1e-3.csv", "closure_summary.csv", "closure_summary.json"] {
        assert!(run.join(name).exists(), "missing {name}");
    }
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.lines().all(|l| l.starts_with("wrote ")), "{stdout}");

    let summary = fs::read_to_string(run.join("closure_summary.csv")).unwrap();
    let sha_line = summary.lines().next().unwrap();
    assert!(sha_line.starts_with("# config_sha256="));
    assert_eq!(sha_line.len(), "# config_sha256=".len() + 64);
    let header = summary.lines().nth(1).unwrap();
    assert_eq!(
        header,
        "G_per_um,g,regime,a1,a2,c0,theta_left,theta_right,kappa_um_per_s,frac_plus,frac_minus"
    );
}

#[test]
fn reruns_with_the_same_seed_are_byte_identical() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{
            "env": [1e-3, 5e-4],
            "numerics": {"seed": 11, "n_agents": 300, "steady_window": 100,
                         "steady_tol": 0.2, "max_time": 60.0, "bins": 16}
        }"#,
    )
    .unwrap();

    for args in [
        vec!["closure", "--config", "cfg.json"],
        vec!["agents", "--config", "cfg.json", "--threads", "2"],
    ] {
        let mut a1 = args.clone();
        a1.extend(["--out", "a"]);
        let mut a2 = args.clone();
        a2.extend(["--out", "b"]);
        assert!(chemokin(&a1, dir.path()).status.success());
        assert!(chemokin(&a2, dir.path()).status.success());

        let names: Vec<String> = fs::read_dir(dir.path().join("a"))
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert!(!names.is_empty());
        for name in names {
            let lhs = fs::read(dir.path().join("a").join(&name)).unwrap();
            let rhs = fs::read(dir.path().join("b").join(&name)).unwrap();
            assert_eq!(lhs, rhs, "{name} differs between reruns");
        }
        fs::remove_dir_all(dir.path().join("a")).unwrap();
        fs::remove_dir_all(dir.path().join("b")).unwrap();
    }
}

#[test]
fn unknown_config_keys_abort_with_a_pointed_message() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"numerics": {"step_size": 0.01}}"#).unwrap();
    let out = chemokin(&["closure", "--config", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("step_size"), "{stderr}");
}

#[test]
fn strict_flag_turns_violations_into_exit_two() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    // An unattainable steady tolerance on a tiny time budget: the run
    // completes with partial statistics but flags the convergence miss.
    fs::write(
        &cfg,
        r#"{
            "env": 1e-3,
            "numerics": {"n_agents": 100, "steady_window": 100, "steady_tol": 0.0,
                         "max_time": 3.0, "bins": 16}
        }"#,
    )
    .unwrap();

    let lax = chemokin(&["agents", "--config", "cfg.json", "--out", "lax"], dir.path());
    assert!(lax.status.success(), "without --strict violations only warn");

    let strict = chemokin(
        &["agents", "--config", "cfg.json", "--out", "strict", "--strict"],
        dir.path(),
    );
    assert_eq!(strict.status.code(), Some(2));
    let stderr = String::from_utf8(strict.stderr).unwrap();
    assert!(stderr.contains("violation"), "{stderr}");
}
