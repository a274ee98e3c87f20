use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

const BIN: &str = env!("CARGO_BIN_EXE_twobench");

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(fixtures())
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn estimate_fixture(out: &Path) -> Output {
    run(&["estimate", "--config", "tiny.cfg", "--out", out.to_str().unwrap()])
}

fn sorted_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

fn assert_same_tree(a: &Path, b: &Path) {
    let (fa, fb) = (sorted_files(a), sorted_files(b));
    assert_eq!(fa.len(), fb.len());
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(x.file_name(), y.file_name());
        assert!(fs::read(x).unwrap() == fs::read(y).unwrap(), "{} differs", x.display());
    }
}

#[test]
fn constant_scheme_writes_tables_and_a_passing_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "estimate",
        "--input",
        "tiny.csv",
        "--scheme",
        "constant",
        "--iters",
        "1000",
        "--burn-in",
        "100",
        "--thin",
        "2",
        "--seed",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "estimates_constant.csv",
        "pmse_constant.csv",
        "plotdata_adjustment_constant.csv",
        "plotdata_prmse_constant.csv",
        "diagnostics.txt",
        "constraints_report.txt",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let report = fs::read_to_string(dir.path().join("constraints_report.txt")).unwrap();
    let line = report.lines().find(|l| l.starts_with("constant:")).unwrap();
    assert!(line.ends_with("ok"), "{line}");
    let residuals: Vec<f64> = line
        .split("= ")
        .skip(1)
        .map(|s| s.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(residuals.len(), 2);
    assert!(residuals.iter().all(|r| *r < 1e-10), "{residuals:?}");
}

#[test]
fn malformed_row_fails_and_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "area_id,unit_id,y,weight,x1\nA,1,1,1.0,0.5\nA,2,1,heavy,0.1\n").unwrap();
    let o = run(&["estimate", "--input", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn bad_config_key_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 1\niterashuns = 10\n").unwrap();
    let o = run(&["simulate", "--spec", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn fixture_outputs_are_byte_identical_and_frozen() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = estimate_fixture(d.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_same_tree(a.path(), b.path());
    let frozen = fs::read_to_string(fixtures().join("expected_estimates_constant.csv")).unwrap();
    let got = fs::read_to_string(a.path().join("estimates_constant.csv")).unwrap();
    assert_eq!(got, frozen);
}

#[test]
fn seeded_simulation_is_reproducible_and_seed_sensitive() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, seed) in dirs.iter().zip(["7", "7", "8"]) {
        let o = run(&[
            "simulate", "--areas", "6", "--iters", "600", "--burn-in", "100", "--thin", "5", "--replicates", "2",
            "--seed", seed, "--out", d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_same_tree(dirs[0].path(), dirs[1].path());
    let f = "estimates_raked.csv";
    assert_ne!(
        fs::read(dirs[0].path().join(f)).unwrap(),
        fs::read(dirs[2].path().join(f)).unwrap()
    );
    let diff = fs::read_to_string(dirs[0].path().join("plotdata_difference_raked.csv")).unwrap();
    assert_eq!(diff.lines().count(), 1 + 2 * 6);
}

#[test]
fn simulated_data_can_be_estimated_again() {
    let d = tempfile::tempdir().unwrap();
    let sim = d.path().join("sim");
    let o = run(&[
        "simulate", "--areas", "4", "--iters", "400", "--burn-in", "100", "--thin", "5", "--out",
        sim.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&[
        "estimate",
        "--input",
        sim.join("simulated_data_0.csv").to_str().unwrap(),
        "--iters",
        "400",
        "--burn-in",
        "100",
        "--thin",
        "5",
        "--h-targets",
        "posterior",
        "--scheme",
        "domain_weighted",
        "--out",
        d.path().join("est").to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report = fs::read_to_string(d.path().join("est/constraints_report.txt")).unwrap();
    assert!(report.contains("spread_i - h_i") && report.trim_end().ends_with("ok"), "{report}");
}

#[test]
fn verify_passes_quickly_and_prints_the_deviation() {
    let start = Instant::now();
    let o = run(&["verify", "--instances", "100", "--max-areas", "5", "--max-units", "6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("max deviation"));
}

#[test]
fn injected_fault_makes_verify_fail_with_a_dump() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--instances", "10", "--inject-fault", "--out", d.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("BenchmarkProblem"));
    assert!(d.path().join("verify_failures.txt").is_file());
}
