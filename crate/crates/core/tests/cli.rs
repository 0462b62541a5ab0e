//! End-to-end runs of the `piezolab` binary.

use std::path::Path;
use std::process::{Command, Output};

use piezolab::analysis::spectrum_values;
use piezolab::io::{read_model, RunSummary};
use piezolab::{Scheme, Variant};

fn piezolab(out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_piezolab"));
    for (key, _) in std::env::vars() {
        if key.starts_with("PIEZOLAB_") {
            cmd.env_remove(key);
        }
    }
    cmd.args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn assemble_defaults_to_fem_n20() {
    let dir = tempfile::tempdir().unwrap();
    let o = piezolab(dir.path(), &["assemble"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let path = dir.path().join("model_fem-standard-N20.mtx");
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with('%'));
    let m = read_model(&path).unwrap();
    assert_eq!((m.scheme, m.variant, m.n_elements, m.dim()), (Scheme::Fem, Variant::Standard, 20, 120));
    assert!(dir.path().join("assemble.config.toml").exists());
    let summary = RunSummary::from_json(&std::fs::read_to_string(dir.path().join("assemble.summary.json")).unwrap()).unwrap();
    assert!(summary.all_pass);
    assert_eq!(summary.command, "assemble");
}

#[test]
fn mfem_model_file_reproduces_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let o = piezolab(dir.path(), &["assemble", "--scheme", "mfem", "--n", "12"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = read_model(&dir.path().join("model_mfem-standard-N12.mtx")).unwrap();
    let first = spectrum_values(&m).unwrap().first_modes(1)[0];
    assert!((first - 1.4360).abs() < 5e-5, "{first}");
}

#[test]
fn paper_variant_element_dump() {
    let dir = tempfile::tempdir().unwrap();
    let o = piezolab(dir.path(), &["assemble", "--variant", "paper", "--n", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dump = std::fs::read_to_string(dir.path().join("elements_fem-paper-N3.txt")).unwrap();
    let block = |title: &str| -> Vec<Vec<f64>> {
        let mut lines = dump.lines().skip_while(|l| !l.starts_with(title)).skip(1);
        (0..3).map(|_| lines.next().unwrap().split_whitespace().map(|v| v.parse().unwrap()).collect()).collect()
    };
    assert_eq!(block("(6/h) M1"), vec![vec![4.0, 1.0, 0.0], vec![2.0, 4.0, 2.0], vec![0.0, 2.0, 4.0]]);
    assert_eq!(block("2 K1"), vec![vec![0.0, -1.0, 0.0], vec![1.0, 0.0, -1.0], vec![0.0, 1.0, 0.0]]);
    assert_eq!(block("h K2"), vec![vec![2.0, -1.0, 0.0], vec![-1.0, 2.0, -1.0], vec![0.0, -1.0, 2.0]]);
    assert!(dir.path().join("model_fem-paper-N3.mtx").exists());
}

#[test]
fn control_reports_full_rank() {
    let dir = tempfile::tempdir().unwrap();
    let o = piezolab(dir.path(), &["control", "--scheme", "fem", "--n", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("fem N=1: kalman_rank=6 brockett=pass"), "{}", stdout(&o));
    let csv = std::fs::read_to_string(dir.path().join("control.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[material]\nrho_s = 5000.0\nfoo = 1.0\n").unwrap();
    let o = piezolab(dir.path(), &["assemble", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("material.foo"), "{}", stderr(&o));
}

#[test]
fn bad_flag_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = piezolab(dir.path(), &["assemble", "--scheme", "fdm"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn sources_compose_file_env_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[run]\nscheme = \"mfem\"\nn = 2\nvariant = \"standard\"\n").unwrap();
    let run = |env_n: Option<&str>, flag_n: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_piezolab"));
        cmd.arg("assemble").arg("--out").arg(dir.path()).arg("--config").arg(&cfg);
        for (key, _) in std::env::vars() {
            if key.starts_with("PIEZOLAB_") {
                cmd.env_remove(key);
            }
        }
        if let Some(n) = env_n {
            cmd.env("PIEZOLAB_N", n);
        }
        if let Some(n) = flag_n {
            cmd.args(["--n", n]);
        }
        let o = cmd.output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    };
    run(None, None);
    assert!(dir.path().join("model_mfem-standard-N2.mtx").exists());
    run(Some("3"), None);
    assert!(dir.path().join("model_mfem-standard-N3.mtx").exists());
    run(Some("3"), Some("4"));
    assert!(dir.path().join("model_mfem-standard-N4.mtx").exists());
    let echo = std::fs::read_to_string(dir.path().join("assemble.config.toml")).unwrap();
    assert!(echo.contains("n = [4]"), "{echo}");
}

#[test]
fn outputs_are_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let o = piezolab(dir.path(), &["sweep", "--n", "4,6"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let o = piezolab(dir.path(), &["simulate", "--n", "4", "--initial", "random", "--seed", "11", "--t-end", "5"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for file in ["sweep.csv", "sweep.svg", "trajectory_fem-standard-N4.csv"] {
        let x = std::fs::read(a.path().join(file)).unwrap();
        let y = std::fs::read(b.path().join(file)).unwrap();
        assert!(x == y, "{file} differs between runs");
    }
    let c = tempfile::tempdir().unwrap();
    piezolab(c.path(), &["simulate", "--n", "4", "--initial", "random", "--seed", "12", "--t-end", "5"]);
    assert_ne!(
        std::fs::read(a.path().join("trajectory_fem-standard-N4.csv")).unwrap(),
        std::fs::read(c.path().join("trajectory_fem-standard-N4.csv")).unwrap()
    );
}

#[test]
fn closedloop_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = piezolab(dir.path(), &["closedloop", "--scheme", "fem"]);
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
    let snap = std::fs::read_to_string(dir.path().join("snapshot_fem-standard-N20.txt")).unwrap();
    let values: Vec<&str> = snap.lines().filter(|l| !l.starts_with('#') && !l.contains(' ')).collect();
    assert_eq!(values.len(), 120);
    for v in values {
        let mantissa = v.trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{v}");
    }
    assert!(dir.path().join("trajectory_closed_fem-standard-N20_w_tip.svg").exists());

    std::fs::remove_file(dir.path().join("trajectory_closed_fem-standard-N20_w_tip.svg")).unwrap();
    let o = piezolab(dir.path(), &["report"]);
    assert_eq!(o.status.code(), Some(0), "{}\n{}", stdout(&o), stderr(&o));
    assert!(dir.path().join("trajectory_closed_fem-standard-N20_w_tip.svg").exists());
    assert!(dir.path().join("q_matrix_report.txt").exists());
    let summary = RunSummary::from_json(&std::fs::read_to_string(dir.path().join("report.summary.json")).unwrap()).unwrap();
    assert!(summary.checks.iter().any(|c| c.name.starts_with("closedloop: ")));
    assert!(summary.all_pass);
}
