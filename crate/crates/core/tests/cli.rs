use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const RABI: &str = r#"
name = "rabi"
mode = "evolve-p"

[grid]
t_end = 3.141592653589793
steps = 2000
samples = 11

[matrices]
sx = [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]

[states]
up = [[1.0, 0.0], [0.0, 0.0]]

[hamiltonian]
base = "sx"

[evolve]
initial = "up"
"#;

const ROTATION: &str = r#"
name = "rotation"
mode = "solve-metric"

[grid]
t_end = 1.0
steps = 1
samples = 2

[matrices]
h = [[[0.0, 0.0], [1.0, 0.0]], [[-1.0, 0.0], [0.0, 0.0]]]

[solve]
operator = "h"
"#;

fn thsq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thsq"))
        .args(args)
        .env("THSQ_LOG", "quiet")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn scenario(name: &str) -> String {
    format!("{}/scenarios/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn all_output(out: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    )
}

#[test]
fn rabi_trajectory_hits_the_flip_at_half_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "rabi.toml", RABI);
    let out_dir = dir.path().join("out");
    let out = thsq(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", all_output(&out));

    let csv = std::fs::read_to_string(out_dir.join("rabi.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header, ["t", "re_psi_0", "im_psi_0", "re_psi_1", "im_psi_1", "s_norm"]);
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    let mid = &rows[5];
    assert!((mid[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    assert!(mid[3].abs() < 1e-8 && (mid[4] + 1.0).abs() < 1e-8, "{mid:?}");
    // At least 15 significant digits per value.
    let first_value = csv.lines().nth(1).unwrap().split(',').nth(1).unwrap();
    assert!(first_value.split('e').next().unwrap().len() >= 17, "{first_value}");

    let summary = std::fs::read_to_string(out_dir.join("rabi.summary.log")).unwrap();
    assert!(summary.starts_with("name=rabi mode=evolve-p n=2 status=ok norm_drift="));
    assert!(!summary.contains("wall_time"));
}

#[test]
fn complex_spectrum_exits_two_and_names_the_error_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "rotation.toml", ROTATION);
    let out = thsq(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        all_output(&out).matches("ComplexSpectrum").count(),
        1,
        "{}",
        all_output(&out)
    );
    let summary = std::fs::read_to_string(dir.path().join("o/rotation.summary.log")).unwrap();
    assert!(summary.contains("status=ComplexSpectrum"));
}

#[test]
fn verify_mode_reports_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let out = thsq(&[
        "run",
        "--config",
        &scenario("driven_dimer.toml"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", all_output(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    let value = stdout
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("equivalence="))
        .unwrap()
        .parse::<f64>()
        .unwrap();
    assert!(value < 1e-6);
}

#[test]
fn configuration_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad_ref = write(dir.path(), "bad.toml", &RABI.replace("base = \"sx\"", "base = \"H9\""));
    let out = thsq(&["validate", "--config", bad_ref.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = all_output(&out);
    assert_eq!(text.matches("ValidationError").count(), 1, "{text}");
    assert!(text.contains("H9") && text.contains("line 17"), "{text}");

    let syntax = write(dir.path(), "syntax.toml", "name = \"x\"\nmode = evolve-p\n");
    let out = thsq(&[
        "run",
        "--config",
        syntax.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(all_output(&out).matches("ParseError").count(), 1);

    let out = thsq(&["run", "--config", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(all_output(&out).matches("IoError").count(), 1);

    let cfg = write(dir.path(), "rabi.toml", RABI);
    let out = thsq(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--steps",
        "3",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = scenario("driven_dimer_metric.toml");
    for run in ["a", "b"] {
        let out = thsq(&["run", "--config", &cfg, "--out", dir.path().join(run).to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0));
    }
    let mut names: Vec<_> = std::fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 3);
    for name in names {
        let a = std::fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = std::fs::read(dir.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs");
    }
}

#[test]
fn batch_runs_write_separate_directories() {
    let dir = tempfile::tempdir().unwrap();
    let out = thsq(&[
        "run",
        "--config",
        &scenario("rabi.toml"),
        &scenario("dimer_metric.toml"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", all_output(&out));
    assert!(dir.path().join("rabi/rabi.csv").exists());
    assert!(dir.path().join("dimer_metric/dimer_metric_theta.csv").exists());
}

#[test]
fn control_run_writes_fields_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let out = thsq(&[
        "run",
        "--config",
        &scenario("toy_control.toml"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", all_output(&out));
    let fields = std::fs::read_to_string(dir.path().join("toy_control_fields.csv")).unwrap();
    assert_eq!(fields.lines().count(), 21);
    let history = std::fs::read_to_string(dir.path().join("toy_control_history.csv")).unwrap();
    let last: f64 = history
        .lines()
        .last()
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(last >= 0.99);
}

#[test]
fn version_prints_package_version() {
    let out = thsq(&["version"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).trim(),
        format!("thsq {}", env!("CARGO_PKG_VERSION"))
    );
}
