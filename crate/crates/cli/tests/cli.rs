use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn delay_da(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_delay-da")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn run_prints_a_passing_summary() {
    let path = scenarios().join("constant_rate.toml");
    let o = delay_da(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("bound delayed_da:") && out.contains("satisfied=true"), "{out}");
    assert!(out.ends_with("status = pass\n"));
}

#[test]
fn every_bundled_scenario_validates_and_passes() {
    for entry in std::fs::read_dir(scenarios()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let p = path.to_str().unwrap();
            assert_eq!(delay_da(&["validate", p]).status.code(), Some(0), "{p}");
            let o = delay_da(&["run", p]);
            assert_eq!(o.status.code(), Some(0), "{p}: {}", stderr(&o));
        }
    }
}

#[test]
fn csv_output_is_reproducible() {
    let path = scenarios().join("open_network.toml");
    let p = path.to_str().unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    for (dir, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        let o = delay_da(&["run", p, "--format", "csv", "--seed", seed, "--out", dir.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("open_network.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let text = String::from_utf8(read(&a)).unwrap();
    assert!(text.starts_with("t,agent,loss,inst_regret,cum_regret,eta,eta_tilde,lambda_hat,rho,bound_id,bound_rhs\n"));
}

#[test]
fn plotdata_has_triples() {
    let path = scenarios().join("optimistic_periods.toml");
    let o = delay_da(&["run", path.to_str().unwrap(), "--format", "plotdata"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 3));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "[run]\nalgorithm = \"dda\"\nhorizon = 5\n[geometry]\nkind = \"ball\"\ndim = 1\n\
         [losses]\nkind = \"random_linear\"\n[rate]\npolicy = \"adagrad\"\n",
    )
    .unwrap();
    let p = bad.to_str().unwrap();
    for args in [vec!["run", p], vec!["validate", p]] {
        let o = delay_da(&args);
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("rate.policy"), "{}", stderr(&o));
    }
    assert_eq!(delay_da(&["run", "/definitely/missing.toml"]).status.code(), Some(2));
    assert_eq!(delay_da(&["suite", "nope"]).status.code(), Some(2));
    assert_eq!(delay_da(&["run", p, "--format", "xml"]).status.code(), Some(2));
}

#[test]
fn doda_on_simplex_is_rejected_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("s.toml");
    std::fs::write(
        &f,
        "[run]\nalgorithm = \"doda\"\nhorizon = 5\n[geometry]\nkind = \"simplex\"\ndim = 3\n\
         [losses]\nkind = \"random_linear\"\n[rate]\npolicy = \"relaxed\"\neta = 0.1\n",
    )
    .unwrap();
    let o = delay_da(&["validate", f.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("geometry.kind"));
}

#[test]
fn suite_reports_every_entry() {
    let o = delay_da(&["suite", "adaptive_lemma"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("1000/1000 random sequences satisfy the inequality"));
}
