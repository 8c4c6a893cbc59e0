use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatmap"))
        .args(args)
        .arg("--quiet")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.cfg");
    fs::write(&path, body).unwrap();
    path
}

/// Data rows of an artifact: no `#` line, no column header.
fn data_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# flatmap "), "{}", path.display());
    lines
        .skip(1)
        .map(|l| l.split(',').map(String::from).collect())
        .collect()
}

fn mesh_config(m: &str) -> String {
    format!("[mesh]\nm = {m}\n\n[nonlinearity]\nfamily = \"linear\"\nbeta = 0\n")
}

#[test]
fn mesh_m3_has_81_vertices() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &mesh_config("3"));
    let out = run(&["mesh"], &cfg, &dir.path().join("out"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(data_rows(&dir.path().join("out/vertices.csv")).len(), 81);
    assert_eq!(data_rows(&dir.path().join("out/triangles.csv")).len(), 128);
    assert_eq!(data_rows(&dir.path().join("out/dofs.csv")).len(), 49);
}

#[test]
fn mesh_m1_has_a_single_dof() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &mesh_config("1"));
    assert!(run(&["mesh"], &cfg, &dir.path().join("out")).status.success());
    assert_eq!(data_rows(&dir.path().join("out/dofs.csv")).len(), 1);
}

#[test]
fn level_zero_is_a_config_error_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &mesh_config("0"));
    let out = run(&["mesh"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("m"), "{err}");
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_key_and_missing_file_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{}\n[solver]\ntolerance = 1e-8\n", mesh_config("2")),
    );
    let out = run(&["eigs"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("tolerance"));
    let out = run(&["eigs"], &dir.path().join("absent.cfg"), &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &mesh_config("2"));
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    assert_eq!(run(&["mesh"], &cfg, &blocker).status.code(), Some(5));
}

#[test]
fn eigs_count_one_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{}\n[eigs]\ncount = 1\n", mesh_config("3")));
    assert!(run(&["eigs"], &cfg, &dir.path().join("out")).status.success());
    let rows = data_rows(&dir.path().join("out/eigs.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][1], "1");
}

#[test]
fn eigenvalue_error_shrinks_fourfold_per_level() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &mesh_config("[2, 3, 5]"));
    assert!(run(&["eigs"], &cfg, &dir.path().join("out")).status.success());
    let rows = data_rows(&dir.path().join("out/eigs.csv"));
    let err = |m: &str, k: &str| -> f64 {
        rows.iter().find(|r| r[0] == m && r[1] == k).unwrap()[4]
            .parse()
            .unwrap()
    };
    for k in ["1", "2", "3"] {
        let ratio = err("2", k) / err("3", k);
        assert!((3.0..=5.0).contains(&ratio), "k={k} ratio {ratio}");
    }
    for (k, near) in [("1", 12.34), ("2", 19.74), ("3", 32.07)] {
        let lh: f64 = rows.iter().find(|r| r[0] == "5" && r[1] == k).unwrap()[2]
            .parse()
            .unwrap();
        assert!((lh - near).abs() / near < 0.02, "k={k} lambda_h={lh}");
    }
}

#[test]
fn every_artifact_carries_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &mesh_config("2"));
    assert!(run(&["mesh"], &cfg, &dir.path().join("out")).status.success());
    let manifest = fs::read_to_string(dir.path().join("out/manifest.csv")).unwrap();
    let hash = manifest.lines().next().unwrap().split("config_sha256=").nth(1).unwrap();
    assert_eq!(hash.len(), 64);
    let listed: Vec<&str> = manifest.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        listed,
        ["dofs.csv", "mass.csv", "stiffness.csv", "triangles.csv", "vertices.csv"]
    );
    for name in listed {
        let text = fs::read_to_string(dir.path().join("out").join(name)).unwrap();
        assert!(text.lines().next().unwrap().contains(hash), "{name}");
    }
}

#[test]
fn failed_solve_leaves_partial_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[mesh]
m = 3

[nonlinearity]
family = "arctan"
alpha = "(lambda2 - lambda1) / pi"
beta = "lambda1"

[rhs]
kind = "expr"
expr = "-100 * x * (x - 1) * y * (y - 2)"

[initial]
u0 = [[2, 10000]]

[solver]
max_iter = 1
depth_max = 1
"#,
    );
    let out = run(&["fiber-point"], &cfg, &dir.path().join("out"));
    assert_eq!(out.status.code(), Some(4));
    assert!(dir.path().join("out/residuals.csv.partial").exists());
    assert!(dir.path().join("out/manifest.csv.partial").exists());
    assert!(!dir.path().join("out/residuals.csv").exists());
}

#[test]
fn dolph_hammerstein_trace_is_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["trace-fiber"], &configs().join("fig04_hamsup1.cfg"), dir.path());
    assert!(out.status.success());
    let s: Vec<f64> = data_rows(&dir.path().join("trace.csv"))
        .iter()
        .map(|r| r[1].parse().unwrap())
        .collect();
    assert_eq!(s.len(), 121);
    assert!(s.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn lambda2_config_emits_three_solution_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["solve"], &configs().join("fig10_11_lambda2.cfg"), dir.path())
        .status
        .success());
    for i in 1..=3 {
        assert!(dir.path().join(format!("solution_{i}.csv")).exists());
    }
    assert!(!dir.path().join("solution_4.csv").exists());
}

/// Position of the interior maximum of s(t), if any.
fn interior_max(trace: &Path) -> Option<f64> {
    let rows = data_rows(trace);
    let t: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    let s: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    (1..s.len() - 1)
        .find(|&i| s[i] > s[i - 1] && s[i] > s[i + 1])
        .map(|i| t[i])
}

#[test]
fn nonconvex_fibers_are_mapped_non_uniformly() {
    let dir = tempfile::tempdir().unwrap();
    let mut maxima = Vec::new();
    for cfg in [
        "fig07_08_nonconvex.cfg",
        "fig09_nonconvex_c45.cfg",
        "fig09_nonconvex_c100.cfg",
    ] {
        let out = dir.path().join(cfg);
        assert!(run(&["trace-fiber"], &configs().join(cfg), &out).status.success());
        maxima.push(interior_max(&out.join("trace.csv")));
    }
    // sampling step of the default window is 2
    let (c10, c45) = (maxima[0].unwrap(), maxima[1].unwrap());
    assert!((c10 - c45).abs() > 2.0, "maxima at {c10} and {c45}");
    assert_eq!(maxima[2], None);
}
