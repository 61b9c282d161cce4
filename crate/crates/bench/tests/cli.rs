use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nnsvd_bench::experiment::{parse_csv, ResultRow, CSV_HEADER};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn nnsvd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nnsvd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn non_timing(rows: &[ResultRow]) -> Vec<ResultRow> {
    rows.iter().map(ResultRow::without_timing).collect()
}

#[test]
fn bench_reproduces_golden_csv() {
    let dir = tempfile::tempdir().unwrap();
    let golden = parse_csv(&fixtures().join("golden_50x40.csv")).unwrap();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}.csv"));
        let o = nnsvd(&[
            "bench",
            "--config",
            fixtures().join("bench_50x40.toml").to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let text = std::fs::read_to_string(&out).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        let rows = parse_csv(&out).unwrap();
        assert_eq!(non_timing(&rows), non_timing(&golden));
        assert!(out.with_extension("json").exists());
    }
}

#[test]
fn bench_flags_override_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = nnsvd(&[
        "bench",
        "--config",
        fixtures().join("bench_50x40.toml").to_str().unwrap(),
        "--ranks",
        "3,5",
        "--init",
        "nndsvd",
        "--post",
        "none,mu:10",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = parse_csv(&out).unwrap();
    let cells: Vec<(usize, String)> = rows.iter().map(|r| (r.rank, r.post_step.clone())).collect();
    assert_eq!(
        cells,
        [(3, "none".into()), (3, "mu:10".into()), (5, "none".into()), (5, "mu:10".into())]
    );
}

#[test]
fn init_prints_a_report() {
    let o = nnsvd(&[
        "init",
        "--data",
        "synthetic:60x40:5:0.05:1",
        "--rank",
        "6",
        "--init",
        "nnsvd-lrc",
        "--trace",
    ]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("rel. error"), "{s}");
    assert!(s.contains("svd rank 4"), "{s}");
    assert!(s.contains("e_0 ="), "{s}");
}

#[test]
fn solve_writes_factors() {
    let dir = tempfile::tempdir().unwrap();
    let o = nnsvd(&[
        "solve",
        "--data",
        fixtures().join("synthetic_50x40.mtx").to_str().unwrap(),
        "--rank",
        "4",
        "--init",
        "nndsvd",
        "--post",
        "hals",
        "--iters",
        "5",
        "--trace",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("iter    5"));
    let w = std::fs::read_to_string(dir.path().join("W.csv")).unwrap();
    assert_eq!(w.lines().count(), 50);
    assert_eq!(w.lines().next().unwrap().split(',').count(), 4);
}

#[test]
fn convert_round_trips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    let mtx = dir.path().join("x.mtx");
    let src = fixtures().join("synthetic_50x40.mtx");
    assert!(nnsvd(&["convert", "--data", src.to_str().unwrap(), "--out", csv.to_str().unwrap()])
        .status
        .success());
    assert!(nnsvd(&["convert", "--data", csv.to_str().unwrap(), "--out", mtx.to_str().unwrap()])
        .status
        .success());
    let a = nnsvd_bench::load(&src, None).unwrap().matrix.to_dense();
    let b = nnsvd_bench::load(&mtx, None).unwrap().matrix.to_dense();
    assert_eq!(a, b);
}

#[test]
fn input_errors_exit_with_2() {
    let o = nnsvd(&["init", "--data", "/no/such/file.mtx", "--rank", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = nnsvd(&["init", "--data", "synthetic:10x8:3:0:1", "--rank", "8"]);
    assert_eq!(o.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("neg.mtx");
    std::fs::write(&bad, "%%MatrixMarket matrix coordinate real general\n2 2 1\n1 1 -1\n").unwrap();
    let o = nnsvd(&["init", "--data", bad.to_str().unwrap(), "--rank", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("negative entry"));
}

#[test]
fn convergence_failure_maps_to_3() {
    let e = nnsvd_bench::BenchError::Core(nnsvd::Error::ConvergenceFailure {
        steps: 10,
        residual: 1.0,
    });
    assert_eq!(e.exit_code(), 3);
}
