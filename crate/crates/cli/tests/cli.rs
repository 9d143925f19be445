use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn dgife(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dgife"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = "[study]\nn = [10, 20]\n";

#[test]
fn converge_writes_deterministic_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let mut csv = Vec::new();
    for out in ["a", "b"] {
        let o = dgife(&["converge", "--config", &config, "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csv.push(fs::read(dir.path().join(out).join("convergence.csv")).unwrap());
    }
    assert_eq!(csv[0], csv[1]);
    let text = String::from_utf8(csv[0].clone()).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("10,600,"));
}

#[test]
fn iterative_solver_flag() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[study]\nn = [10]\n");
    let o = dgife(
        &["converge", "--config", &config, "--solver", "iterative", "--out", "it"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn invalid_values_fail_with_field_name() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[discretization]\nepsilon = 2\n");
    let o = dgife(&["converge", "--config", &config], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("discretization.epsilon"));
}

#[test]
fn unknown_keys_fail_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[study]\nn = [10]\nthetta = 0.3\n");
    let o = dgife(&["converge", "--config", &config], dir.path());
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn adapt_writes_csv_and_mesh_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let text = "[discretization]\nelement = \"rectangle\"\nepsilon = 1\n\
                [study]\nmode = \"adaptive\"\nstrategy = \"interface\"\nmax_iters = 2\n\
                [output]\nmesh_dumps = true\n";
    let config = write_config(dir.path(), text);
    let o = dgife(&["adapt", "--config", &config, "--out", "ad"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("ad");
    let csv = fs::read_to_string(out.join("adaptive.csv")).unwrap();
    let counts: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(counts, ["100", "178", "334"]);
    for it in 0..3 {
        assert!(out.join(format!("mesh_iter{it:02}.txt")).exists());
    }
}

#[test]
fn dump_commands_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[study]\nn = [10]\n");
    let o = dgife(&["dump-mesh", "--config", &config, "--out", "d"], dir.path());
    assert!(o.status.success());
    assert!(dir.path().join("d/mesh_n10.txt").exists());
    let o = dgife(
        &["dump-field", "--config", &config, "--out", "d", "--resolution", "16"],
        dir.path(),
    );
    assert!(o.status.success());
    let field = fs::read_to_string(dir.path().join("d/field_n10.txt")).unwrap();
    assert_eq!(field.lines().count(), 256);
}

#[test]
fn check_reports_every_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[study]\nn = [10]\n");
    let o = dgife(&["check", "--config", &config], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 6, "{text}");
}

#[test]
fn missing_config_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = dgife(&["converge", "--config", "absent.toml"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("absent.toml"));
}
