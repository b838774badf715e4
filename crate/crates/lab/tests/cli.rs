use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_singular-flow"))
        .args(args)
        .output()
        .unwrap()
}

fn scenarios() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn write(dir: &Path, body: &str) -> String {
    let p = dir.join("s.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn dimension_subcommand_writes_tables() {
    let out = tempfile::tempdir().unwrap();
    let cfg = scenarios().join("smoke.toml");
    let o = bin(&[
        "dimension",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.path().join("dimension.csv")).unwrap();
    assert!(csv.starts_with("set,method,fitted_dim,"));
    assert!(out.path().join("manifest.toml").exists());
    assert!(out.path().join("timing.txt").exists());
    // only the requested stage ran
    assert!(!out.path().join("print.csv").exists());
}

#[test]
fn empty_pipeline_writes_manifest_only() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "name = \"empty\"\nseed = 3\npipeline = []\n");
    let out = d.path().join("out");
    let o = bin(&["all", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let mut names: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names, ["manifest.toml", "summary.txt", "timing.txt"]);
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("seed = 3"));
}

#[test]
fn unknown_keys_are_listed() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "name = \"x\"\nseed = 1\npipeline = []\ncolour = \"red\"\n[domain]\nlo = [0.0]\nhi = [1.0]\nsize = 2\n",
    );
    let o = bin(&["all", "--config", &cfg, "--out", d.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("colour") && err.contains("domain.size"), "{err}");
}

#[test]
fn failed_expectation_exits_one() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        r#"name = "wrong"
seed = 1
pipeline = ["dimension"]
[dimension]
ladder = { hi = 0.0625, ratio = 0.25, count = 4 }
[[dimension.sets]]
name = "cantor"
recipe = { kind = "cantor", keep = 0.25, depth = 8 }
expect = 0.9
"#,
    );
    let o = bin(&["all", "--config", &cfg, "--out", d.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL cantor grid dimension"));
}

#[test]
fn seed_override_lands_in_manifest() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "name = \"e\"\nseed = 3\npipeline = []\n");
    let out = d.path().join("o");
    let o = bin(&["all", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "17"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(fs::read_to_string(out.join("manifest.toml"))
        .unwrap()
        .contains("seed = 17"));
}

#[test]
fn missing_config_is_an_error() {
    let o = bin(&["all", "--config", "/nonexistent/s.toml"]);
    assert_eq!(o.status.code(), Some(2));
}
