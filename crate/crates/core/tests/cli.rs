//! End-to-end runs of the `mflab` binary.

use std::path::Path;
use std::process::{Command, Output};

fn mflab(dir: &Path, args: &[&str], config: &str) -> (Output, String) {
    let cfg = dir.join("run.ini");
    let out = dir.join("out.csv");
    std::fs::write(&cfg, config).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_mflab"))
        .args(args)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    (o, std::fs::read_to_string(&out).unwrap_or_default())
}

fn footer<'a>(csv: &'a str, key: &str) -> Option<&'a str> {
    csv.lines().find_map(|l| l.strip_prefix(&format!("# {key} = ")))
}

#[test]
fn help_lists_every_subcommand() {
    let o = Command::new(env!("CARGO_BIN_EXE_mflab")).arg("--help").output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    for sub in ["strong-rate", "weak-rate", "analytic-weak", "verify-x", "parametrix", "price-option", "simulate"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn verify_x_passes_its_own_assertions() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[verify-x]\nalpha = 1.5\nc = 1\nassert_beta = 0.9, 1.1\nassert_fd_tol = 1e-4\n";
    let (o, csv) = mflab(d.path(), &["verify-x", "--assert"], cfg);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv.lines().nth(1), Some("t,N_t"));
    let beta: f64 = footer(&csv, "beta_hat").unwrap().parse().unwrap();
    assert!((0.9..=1.1).contains(&beta), "{beta}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("PASS"));
}

#[test]
fn manifest_reproduces_the_run() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[weak-rate]\nm_paths = 2000\nn_list = 4, 8, 16\nn_ref = 128\nf = sin\n";
    let (o, first) = mflab(d.path(), &["weak-rate", "--seed", "11"], cfg);
    assert!(o.status.success());
    let manifest = std::fs::read_to_string(d.path().join("out.csv.manifest")).unwrap();
    let (o, second) = mflab(d.path(), &["weak-rate"], &manifest);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(first, second);
}

#[test]
fn price_option_reports_both_budgets() {
    let d = tempfile::tempdir().unwrap();
    let cfg = "[price-option]\nm_paths = 20000\nn_list = 4, 16\nn_ref = 256\n";
    let (o, csv) = mflab(d.path(), &["price-option", "--seed", "5"], cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv.lines().nth(1), Some("n,price,ci,ref_price,ref_ci,gap,bound_direct,bound_truncated"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
    assert!(footer(&csv, "G").is_some());
}

#[test]
fn unknown_key_exits_two() {
    let d = tempfile::tempdir().unwrap();
    let (o, _) = mflab(d.path(), &["simulate"], "[simulate]\nn_step = 4\n");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("simulate.n_step"));
}
