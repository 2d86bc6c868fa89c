use std::path::Path;
use std::process::{Command, Output};

fn npis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npis")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn benchmark_csv_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("asian.cfg");
    std::fs::write(&cfg, "# test scenario\nscenario = asian\nK = 140\nu = 1\n").unwrap();
    let run = |name: &str, exec: &str| {
        let out = dir.path().join(name);
        let o = npis(&[
            "benchmark",
            "--scenario",
            cfg.to_str().unwrap(),
            "--method",
            "qmc,lsis,npis,qnpis",
            "--N",
            "256",
            "--runs",
            "8",
            "--seed",
            "42",
            "--executor",
            exec,
            "--no-timing",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv", "parallel");
    let b = run("b.csv", "parallel");
    let c = run("c.csv", "sequential");
    assert_eq!(a, b);
    assert_eq!(a, c);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(npis::harness::CSV_HEADER));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("asian K=140 d=16,qmc,256,8,"), "{}", rows[0]);
    assert!(rows.iter().all(|r| r.split(',').nth(6) == Some("-")));
}

#[test]
fn price_prints_an_estimate() {
    let o = npis(&["price", "--preset", "straddle", "--method", "npis", "--N", "1024"]);
    assert_eq!(code(&o), 0);
    let s = String::from_utf8(o.stdout).unwrap();
    let est: f64 = s
        .lines()
        .find_map(|l| l.strip_prefix("estimate: "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((est - 23.59).abs() < 1.5, "{est}");
}

#[test]
fn trial_failure_exits_with_two() {
    let o = npis(&[
        "price", "--preset", "asian", "--set", "K=100000", "--u-size", "1", "--method", "npis", "--N", "64",
    ]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn configuration_errors_exit_with_three() {
    for args in [
        vec!["price", "--preset", "asian", "--set", "sigma=-1"],
        vec!["price", "--preset", "asian", "--set", "bogus=1"],
        vec!["price", "--preset", "nope"],
        vec!["price"],
        vec!["price", "--preset", "straddle", "--method", "gis"],
        vec!["price", "--preset", "straddle", "--beta", "1.5"],
        vec!["frobnicate"],
    ] {
        let o = npis(&args);
        assert_eq!(code(&o), 3, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = npis(&["price", "--scenario", "/nonexistent/file.cfg"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn unwritable_output_exits_with_one() {
    let o = npis(&[
        "benchmark", "--preset", "straddle", "--method", "mc", "--N", "16", "--runs", "2", "--out",
        "/nonexistent/dir/out.csv",
    ]);
    assert!(!Path::new("/nonexistent/dir").exists());
    assert_eq!(code(&o), 1);
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(code(&npis(&["--help"])), 0);
    assert_eq!(code(&npis(&["benchmark", "--help"])), 0);
}

#[test]
fn effdim_reports_profile() {
    let o = npis(&["effdim", "--preset", "basket-max", "--l", "4096"]);
    assert_eq!(code(&o), 0);
    let s = String::from_utf8(o.stdout).unwrap();
    assert_eq!(s.lines().count(), 3);
    assert!(String::from_utf8(o.stderr).unwrap().contains("ED 2"));
}

#[test]
fn proposal_dumps_grid() {
    let o = npis(&["proposal", "--preset", "straddle", "--N", "1024"]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.len() > 100);
}
