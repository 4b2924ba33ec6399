use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fracspde::config::ExperimentConfig;

const CONFIG: &str = r#"
[operator]
n = 1
s = 0.5
p = 2.0

[domain]
m = 16
n_modes = 8

[drift]
q = 4.0
delta = 1.0

[noise]
p1 = 2.0
beta_b0 = 0.4
beta_cutoff = 2
gamma_b0 = 0.4
gamma_cutoff = 2
sigma1 = "sine"
sigma1_a0 = 0.5

[solver]
t_end = 0.25
dt = 0.015625
n_noise = 4
master_seed = 7

[harness]
n_paths = 8
p_values = [1.0]
x_scales = [0.0, 1.0]
mode_ladder = [2, 4, 8]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracspde"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn shipped(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("c.toml");
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

fn simulate(cfg: &str, out: &Path, extra: &[&str]) -> Vec<u8> {
    let mut args = vec!["simulate", "--config", cfg, "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    std::fs::read(out.join("path.csv")).unwrap()
}

#[test]
fn invalid_config_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &CONFIG.replace("s = 0.5", "s = 1.5"));
    let out = tmp.path().join("out");
    let o = run(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("operator"));
    assert!(!out.exists());
}

#[test]
fn unknown_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &CONFIG.replace("q = 4.0", "q = 4.0\nqq = 1.0"));
    let o = run(&["check-hypotheses", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let o = run(&["simulate", "--config", missing.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_admissible_config_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = shipped("theorem2_ok.toml");
    let o = run(&["check-hypotheses", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("PASS"), "{text}");
    assert!(!text.contains("FAIL"), "{text}");
    let report = std::fs::read_to_string(tmp.path().join("report.txt")).unwrap();
    assert!(report.starts_with("# fracspde "));
}

#[test]
fn shipped_boundary_config_fails_on_beta() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = shipped("theorem2_beta_boundary.toml");
    let o = run(&["check-hypotheses", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("FAIL"), "{text}");
    assert!(text.contains("sum beta_i < delta1"), "{text}");
}

#[test]
fn inadmissible_simulation_warns_and_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = shipped("theorem2_beta_boundary.toml");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("WARNING"));
    assert!(tmp.path().join("path.csv").exists());
}

#[test]
fn simulate_is_reproducible_and_seed_sensitive() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let a = simulate(&cfg, &tmp.path().join("a"), &[]);
    let b = simulate(&cfg, &tmp.path().join("b"), &["--threads", "3"]);
    let c = simulate(&cfg, &tmp.path().join("c"), &["--seed", "8"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn header_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let first = simulate(&cfg, &tmp.path().join("a"), &["--seed", "99"]);
    let text = String::from_utf8(first.clone()).unwrap();
    let parsed = ExperimentConfig::from_header(&text).unwrap();
    assert_eq!(parsed.solver.master_seed, 99);
    let cfg2 = tmp.path().join("from_header.toml");
    std::fs::write(&cfg2, toml::to_string(&parsed).unwrap()).unwrap();
    let second = simulate(cfg2.to_str().unwrap(), &tmp.path().join("b"), &[]);
    assert_eq!(first, second);
}

#[test]
fn path_csv_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), CONFIG);
    let text = String::from_utf8(simulate(&cfg, &tmp.path().join("a"), &[])).unwrap();
    let mut rows = text.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(rows.next().unwrap(), "time,l2_norm,gagliardo_seminorm,lq_norm,stopped_flag");
    assert_eq!(rows.count(), 17);
}

#[test]
fn moments_refuse_p_beyond_p_max() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &CONFIG.replace("p_values = [1.0]", "p_values = [1000.0]"));
    let out = tmp.path().join("out");
    let o = run(&["moments", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn selftest_passes() {
    let o = run(&["selftest", "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(!text.contains("FAIL"), "{text}");
}

#[test]
fn bad_flag_exits_2() {
    let o = run(&["simulate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}
