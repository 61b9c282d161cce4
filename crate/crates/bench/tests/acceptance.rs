//! Acceptance suite. Every criterion prints one PASS/FAIL/SKIP line; the
//! process exits non-zero if any criterion fails.
//!
//! Optional real data:
//! - `NNSVD_ATT_DATA`: the AT&T faces (PGM directory or a matrix file, 10304x400).
//!   Enables criterion 9 and adds the matrix to criteria 4 and 5.
//! - `NNSVD_REAL_DATA`: comma-separated extra datasets for criteria 4 and 5.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use ndarray::Array2;
use nnsvd::init::nnsvd_lrc_uncorrected;
use nnsvd::{
    ahals_solve, low_rank_error, mu_solve, nndsvd, nnsvd_lrc, random_init, sparsity, svd_nmf,
    truncated_svd, CsrMatrix, DataMatrix, FactorPair, InitConfig, Initializer, LowRankMatrix,
    SolveOptions, SvdOptions,
};
use nnsvd_bench::data::{load, make_synthetic, read_matrix_market, save, write_matrix_market, Dataset, SyntheticSpec};
use nnsvd_bench::experiment::{parse_csv, PostStep, ResultRow};
use nnsvd_oracle as oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn dense(a: Array2<f64>) -> DataMatrix {
    DataMatrix::dense(a).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Criterion 1: Gram identity vs materialization.
fn gram_trick() -> Outcome {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for k in 0..200u64 {
        let m = rng.random_range(2..=100);
        let n = rng.random_range(2..=100);
        let p = rng.random_range(1..=10);
        let r = rng.random_range(1..=10usize.min(m).min(n));
        let y = oracle::signed(m, p, 10 * k);
        let z = oracle::signed(p, n, 10 * k + 1);
        let w = oracle::uniform(m, r, 10 * k + 2);
        let h = oracle::uniform(r, n, 10 * k + 3);
        let expected = oracle::frob_diff(&oracle::matmul(&y, &z), &oracle::matmul(&w, &h));
        let got = low_rank_error(&LowRankMatrix::new(y, z).unwrap(), &FactorPair::new(w, h).unwrap())
            .map_err(|e| e.to_string())?;
        let d = rel(got, expected);
        worst = worst.max(d);
        check(d <= 1e-8, || format!("instance {k} ({m}x{n}, p={p}, r={r}): rel diff {d:e}"))?;
    }
    let secs = clock.elapsed().as_secs_f64();
    check(secs < 10.0, || format!("took {secs:.1} s (limit 10 s)"))?;
    Ok(format!("200 instances, max rel diff {worst:.1e}, {secs:.2} s"))
}

/// Criterion 2: truncated SVD vs one-sided Jacobi.
fn svd_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_sigma, mut worst_ey): (f64, f64) = (0.0, 0.0);
    for k in 0..50u64 {
        let m = rng.random_range(5..=80);
        let n = rng.random_range(5..=60);
        let p = rng.random_range(1..=10usize.min(m.min(n) - 1));
        let a = oracle::uniform(m, n, 1000 + k);
        let full = oracle::jacobi_svd(&a);
        let svd = truncated_svd(&dense(a.clone()), p, &SvdOptions::default()).map_err(|e| e.to_string())?;
        for i in 0..p {
            let d = rel(svd.sigma[i], full.sigma[i]);
            worst_sigma = worst_sigma.max(d);
            check(d < 1e-8, || format!("{m}x{n} p={p}: sigma_{i} rel diff {d:e}"))?;
        }
        let optimum = full.sigma.iter().skip(p).map(|s| s * s).sum::<f64>().sqrt();
        let got = oracle::frob_diff(&a, &svd.reconstruct());
        let d = rel(got, optimum);
        worst_ey = worst_ey.max(d);
        check(d < 1e-6, || format!("{m}x{n} p={p}: Eckart-Young rel diff {d:e}"))?;
    }
    Ok(format!(
        "50 matrices, max sigma rel diff {worst_sigma:.1e}, max Eckart-Young rel diff {worst_ey:.1e}"
    ))
}

/// Criterion 3: NNDSVD / SVD-NMF reconstructions grow entrywise with r.
fn baseline_monotone() -> Outcome {
    // Ranks r and r+1 are separate SVD runs; their shared triplets must agree
    // well below the 1e-12 slack.
    let cfg = |r| InitConfig {
        svd_tol: 1e-13,
        ..InitConfig::new(r)
    };
    let mut worst: f64 = 0.0;
    for k in 0..20u64 {
        let x = dense(oracle::uniform(60, 40, 3000 + k));
        for init in [Initializer::Nndsvd, Initializer::SvdNmf] {
            let mut prev = init.run(&x, &cfg(1)).map_err(|e| e.to_string())?.factors.product();
            for r in 2..=11 {
                let next = init.run(&x, &cfg(r)).map_err(|e| e.to_string())?.factors.product();
                let drop = prev
                    .iter()
                    .zip(next.iter())
                    .map(|(a, b)| a - b)
                    .fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max(drop);
                check(drop <= 1e-12, || format!("{init} matrix {k}: r={} -> {r} drops by {drop:e}", r - 1))?;
                prev = next;
            }
        }
    }
    Ok(format!("20 matrices, r = 1..10 -> r+1, largest decrease {worst:.1e}"))
}

const GRID: [usize; 10] = [2, 4, 6, 8, 10, 12, 14, 16, 18, 20];

fn synthetic_sets() -> Vec<Dataset> {
    (1..=5)
        .map(|seed| {
            make_synthetic(&SyntheticSpec {
                m: 200,
                n: 150,
                rank: 20,
                noise: 0.05,
                seed,
            })
            .unwrap()
        })
        .collect()
}

fn env_datasets() -> Vec<Dataset> {
    let mut paths: Vec<String> = Vec::new();
    if let Ok(p) = std::env::var("NNSVD_ATT_DATA") {
        paths.push(p);
    }
    if let Ok(list) = std::env::var("NNSVD_REAL_DATA") {
        paths.extend(list.split(',').filter(|s| !s.is_empty()).map(String::from));
    }
    paths
        .iter()
        .map(|p| load_any(Path::new(p)).unwrap_or_else(|e| panic!("{p}: {e}")))
        .collect()
}

fn load_any(p: &Path) -> nnsvd_bench::Result<Dataset> {
    if p.is_dir() {
        load(p, Some(nnsvd_bench::Format::Pgm)).or_else(|_| load(p, Some(nnsvd_bench::Format::Png)))
    } else {
        load(p, None)
    }
}

struct Curves {
    name: String,
    lrc: Vec<f64>,
    lrc_iters: Vec<usize>,
    nndsvd: Vec<f64>,
    svd_nmf: Vec<f64>,
}

fn curves(d: &Dataset) -> Result<Curves, String> {
    let x = &d.matrix;
    let mut c = Curves {
        name: d.name.clone(),
        lrc: vec![],
        lrc_iters: vec![],
        nndsvd: vec![],
        svd_nmf: vec![],
    };
    for &r in &GRID {
        let cfg = InitConfig::new(r);
        let lrc = nnsvd_lrc(x, &cfg).map_err(|e| e.to_string())?;
        c.lrc.push(nnsvd::relative_error(x, &lrc.factors).unwrap());
        c.lrc_iters.push(lrc.correction_trace.iterations);
        let nd = nndsvd(x, &cfg).map_err(|e| e.to_string())?;
        c.nndsvd.push(nnsvd::relative_error(x, &nd.factors).unwrap());
        let sn = svd_nmf(x, &cfg).map_err(|e| e.to_string())?;
        c.svd_nmf.push(nnsvd::relative_error(x, &sn.factors).unwrap());
    }
    Ok(c)
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b })
}

/// Criterion 4: error-vs-rank shape.
fn error_vs_rank(all: &[Curves], secs: f64) -> Outcome {
    let mut notes = Vec::new();
    for c in all {
        for (k, w) in c.lrc.windows(2).enumerate() {
            check(w[1] <= w[0] + 1e-6, || {
                format!("{}: NNSVD-LRC error rises from r={} ({:.6}) to r={} ({:.6})", c.name, GRID[k], w[0], GRID[k + 1], w[1])
            })?;
        }
        for (label, e) in [("NNDSVD", &c.nndsvd), ("SVD-NMF", &c.svd_nmf)] {
            let best = argmin(e);
            let last = e.len() - 1;
            check(e[last] > e[best], || {
                format!("{}: {label} error at r=20 ({:.4}) does not exceed its minimum", c.name, e[last])
            })?;
            if label == "NNDSVD" {
                notes.push(format!("NNDSVD argmin r={}", GRID[best]));
            }
        }
    }
    check(secs < 60.0, || format!("took {secs:.1} s (limit 60 s)"))?;
    let c = &all[0];
    Ok(format!(
        "{} datasets; e.g. LRC {:.2}% -> {:.2}%, NNDSVD min {:.2}% -> {:.2}% at r=20, SVD-NMF {:.2}% -> {:.2}% ({}); {secs:.1} s",
        all.len(),
        100.0 * c.lrc[0],
        100.0 * c.lrc[GRID.len() - 1],
        100.0 * c.nndsvd[argmin(&c.nndsvd)],
        100.0 * c.nndsvd[GRID.len() - 1],
        100.0 * c.svd_nmf[argmin(&c.svd_nmf)],
        100.0 * c.svd_nmf[GRID.len() - 1],
        notes[0]
    ))
}

/// Criterion 5: correction loop budget.
fn correction_budget(all: &[Curves]) -> Outcome {
    let worst = all.iter().flat_map(|c| c.lrc_iters.iter().copied()).max().unwrap();
    for c in all {
        for (k, &it) in c.lrc_iters.iter().enumerate() {
            check(it <= 10, || format!("{}: r={} took {it} iterations", c.name, GRID[k]))?;
        }
    }
    Ok(format!("at most {worst} A-HALS iterations with delta = 0.05"))
}

fn pooled_sparsity(f: &FactorPair) -> f64 {
    f.sparsity()
}

/// Criterion 6: sparsity claims.
fn sparsity_claims(sets: &[Dataset]) -> Outcome {
    // Pre-correction: complementary supports per triplet pair. Each pair of
    // disjoint columns is at least half zeros, so columns 2..r reach 50% when
    // every one of them is paired (odd r). For even r the last column holds a
    // lone positive part; the bound is checked on the paired columns 2..r-1
    // and the full 2..r figure is reported.
    let mut min_paired: f64 = 1.0;
    let mut min_even_full: f64 = 1.0;
    for d in sets {
        for r in 2..=20 {
            let f = nnsvd_lrc_uncorrected(&d.matrix, &InitConfig::new(r)).map_err(|e| e.to_string())?;
            let (w, h) = (f.w(), f.h());
            let mut l = 1;
            while l + 1 < r {
                let overlap_w = w.column(l).iter().zip(w.column(l + 1).iter()).any(|(a, b)| a * b != 0.0);
                let overlap_h = h.row(l).iter().zip(h.row(l + 1).iter()).any(|(a, b)| a * b != 0.0);
                check(!overlap_w && !overlap_h, || format!("{} r={r}: pair ({l},{}) overlaps", d.name, l + 1))?;
                l += 2;
            }
            let paired_end = if r % 2 == 1 { r } else { r - 1 };
            if paired_end > 1 {
                let s = sparsity(&w.slice(ndarray::s![.., 1..paired_end]).to_owned()).unwrap();
                min_paired = min_paired.min(s);
                check(s >= 0.5, || format!("{} r={r}: paired columns 2..{paired_end} sparsity {s:.4}", d.name))?;
            }
            if r % 2 == 0 {
                let s = sparsity(&w.slice(ndarray::s![.., 1..]).to_owned()).unwrap();
                min_even_full = min_even_full.min(s);
            }
        }
    }

    // Post-correction and NNDSVD sparsity at the top of the grid (r = 20).
    let r = 20;
    let mut lrc = Vec::new();
    let mut nd = Vec::new();
    for d in sets {
        let cfg = InitConfig::new(r);
        lrc.push(pooled_sparsity(&nnsvd_lrc(&d.matrix, &cfg).unwrap().factors));
        nd.push(pooled_sparsity(&nndsvd(&d.matrix, &cfg).unwrap().factors));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (lrc_mean, nd_mean) = (mean(&lrc), mean(&nd));
    check(lrc_mean >= 0.35, || format!("NNSVD-LRC post-correction sparsity {lrc_mean:.4} < 0.35 (per set {lrc:.4?})"))?;
    check((0.45..=0.53).contains(&nd_mean), || format!("NNDSVD sparsity {nd_mean:.4} outside [0.45, 0.53] (per set {nd:.4?})"))?;

    // SVD-NMF on generic random matrices.
    for k in 0..5 {
        let x = dense(oracle::uniform(60, 40, 6000 + k));
        let f = svd_nmf(&x, &InitConfig::new(8)).unwrap().factors;
        check(f.sparsity() == 0.0, || format!("SVD-NMF sparsity {} on random matrix {k}", f.sparsity()))?;
    }
    Ok(format!(
        "r=2..20 pairs disjoint, paired columns sparsity >= {min_paired:.3} (even r cols 2..r >= {min_even_full:.3}); r=20 LRC {lrc_mean:.4} (min {:.4}), NNDSVD {nd_mean:.4}; SVD-NMF 0",
        lrc.iter().copied().fold(1.0, f64::min)
    ))
}

/// Criterion 7: descent of MU and A-HALS, MU fixed point.
fn descent() -> Outcome {
    let opts = SolveOptions {
        max_iters: 100,
        ..SolveOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..10u64 {
        let m = rng.random_range(10..=60);
        let n = rng.random_range(10..=60);
        let r = rng.random_range(1..=8);
        let x = dense(oracle::uniform(m, n, 7000 + k));
        let init = random_init(m, n, r, k, Some(x.frobenius_norm())).unwrap().factors;
        for (name, res) in [
            ("MU", mu_solve(&x, &init, &opts).unwrap()),
            ("A-HALS", ahals_solve(&x, &init, &opts).unwrap()),
        ] {
            check(res.trace.errors.len() == 101, || format!("{name}: {} trace entries", res.trace.errors.len()))?;
            for (i, w) in res.trace.errors.windows(2).enumerate() {
                check(w[1] <= w[0] * (1.0 + 1e-10), || format!("{name} instance {k} step {i}: {} -> {}", w[0], w[1]))?;
            }
        }
    }
    let w = oracle::uniform(30, 4, 77).mapv(|v| v + 0.1);
    let h = oracle::uniform(4, 25, 78).mapv(|v| v + 0.1);
    let x = dense(oracle::matmul(&w, &h));
    let f = FactorPair::new(w.clone(), h.clone()).unwrap();
    let one = mu_solve(&x, &f, &SolveOptions { max_iters: 1, ..SolveOptions::default() }).unwrap();
    let dw = oracle::frob_diff(one.factors.w(), &w) / oracle::frob(&w);
    let dh = oracle::frob_diff(one.factors.h(), &h) / oracle::frob(&h);
    check(dw < 1e-12 && dh < 1e-12, || format!("MU moved the exact factorization: {dw:e} {dh:e}"))?;
    Ok(format!("10 instances x 100 iterations nonincreasing; MU fixed point moved {:.1e}", dw.max(dh)))
}

/// Criterion 8: NNSVD-LRC no slower than NNDSVD on 2000x1000, r = 50.
fn timing() -> Outcome {
    let x = dense(oracle::uniform(2000, 1000, 8));
    let cfg = InitConfig::new(50);
    let median = |init: Initializer| -> Result<f64, String> {
        init.run(&x, &cfg).map_err(|e| e.to_string())?; // warm-up
        let mut t: Vec<f64> = (0..5)
            .map(|_| {
                let c = Instant::now();
                init.run(&x, &cfg).unwrap();
                c.elapsed().as_secs_f64()
            })
            .collect();
        t.sort_by(f64::total_cmp);
        Ok(t[2])
    };
    let lrc = median(Initializer::NnsvdLrc)?;
    let nd = median(Initializer::Nndsvd)?;
    check(lrc <= nd, || format!("NNSVD-LRC median {lrc:.3} s > NNDSVD median {nd:.3} s"))?;
    Ok(format!("median over 5 runs: NNSVD-LRC {lrc:.3} s <= NNDSVD {nd:.3} s"))
}

/// Criterion 9: AT&T reproduction, only with the real data.
fn att_reproduction() -> Option<Outcome> {
    let path = std::env::var("NNSVD_ATT_DATA").ok()?;
    Some((|| {
        let d = load_any(Path::new(&path)).map_err(|e| e.to_string())?;
        let x = &d.matrix;
        check(x.shape() == (10304, 400), || format!("expected 10304x400, got {:?}", x.shape()))?;
        let cfg = InitConfig::new(60);
        let pct = |f: &FactorPair| 100.0 * nnsvd::relative_error(x, f).unwrap();
        let lrc = nnsvd_lrc(x, &cfg).map_err(|e| e.to_string())?.factors;
        let nd = nndsvd(x, &cfg).map_err(|e| e.to_string())?.factors;
        let sn = svd_nmf(x, &cfg).map_err(|e| e.to_string())?.factors;
        let nd_nnls = PostStep::Nnls.apply(&d, &nd, 0).map_err(|e| e.to_string())?;
        let sn_nnls = PostStep::Nnls.apply(&d, &sn, 0).map_err(|e| e.to_string())?;
        let got = [pct(&lrc), pct(&nd_nnls), pct(&sn_nnls)];
        let want = [17.00, 25.55, 27.80];
        for (label, (g, w)) in ["NNSVD-LRC", "NNDSVD+NNLS", "SVD-NMF+NNLS"].iter().zip(got.iter().zip(want)) {
            check((g - w).abs() <= 0.5, || format!("{label}: {g:.2}% vs {w:.2}%"))?;
        }
        let mut mu = Vec::new();
        for k in [1, 10] {
            let e: Vec<f64> = [&lrc, &nd, &sn]
                .iter()
                .map(|f| pct(&PostStep::Mu(k).apply(&d, f, 0).unwrap()))
                .collect();
            check(e[0] < e[1] && e[0] < e[2], || format!("MU({k}): LRC {:.2}% not lowest ({:.2}%, {:.2}%)", e[0], e[1], e[2]))?;
            mu.push(e[0]);
        }
        Ok(format!(
            "r=60: LRC {:.2}%, NNDSVD+NNLS {:.2}%, SVD-NMF+NNLS {:.2}%; LRC+MU(1) {:.2}%, MU(10) {:.2}% lowest",
            got[0], got[1], got[2], mu[0], mu[1]
        ))
    })())
}

/// Criterion 10: format round trips and golden bench output.
fn cli_contract() -> Outcome {
    let tmp = std::env::temp_dir().join(format!("nnsvd-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&tmp).map_err(|e| e.to_string())?;
    let result = (|| {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut t = Vec::new();
        for _ in 0..300 {
            let v: f64 = rng.random::<f64>() * 10f64.powi(rng.random_range(-15..15));
            t.push((rng.random_range(0..37), rng.random_range(0..53), v));
        }
        let csr = CsrMatrix::from_triplets(37, 53, &t).unwrap();
        let mut buf = Vec::new();
        write_matrix_market(&mut buf, &csr).unwrap();
        let back = read_matrix_market(buf.as_slice(), Path::new("mem")).map_err(|e| e.to_string())?;
        check(back == csr, || "Matrix Market round trip changed values".into())?;

        let a = oracle::uniform(17, 11, 10).mapv(|v| v.powi(7) * 1e3 + 1e-9 * v);
        let p = tmp.join("x.csv");
        save(&p, &dense(a.clone())).map_err(|e| e.to_string())?;
        let back = load(&p, None).map_err(|e| e.to_string())?.matrix.to_dense();
        check(back == a, || "CSV round trip changed values".into())?;

        let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
        let golden: Vec<ResultRow> = parse_csv(&fixtures.join("golden_50x40.csv"))
            .map_err(|e| e.to_string())?
            .iter()
            .map(ResultRow::without_timing)
            .collect();
        for run in 0..2 {
            let out = tmp.join(format!("bench{run}.csv"));
            let status = Command::new(env!("CARGO_BIN_EXE_nnsvd"))
                .args(["bench", "--config"])
                .arg(fixtures.join("bench_50x40.toml"))
                .arg("--out")
                .arg(&out)
                .output()
                .map_err(|e| e.to_string())?;
            check(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
            let rows: Vec<ResultRow> = parse_csv(&out)
                .map_err(|e| e.to_string())?
                .iter()
                .map(ResultRow::without_timing)
                .collect();
            check(rows == golden, || format!("bench run {run} differs from the golden CSV"))?;
        }
        Ok(format!(
            "MM ({} entries) and CSV round trips exact; bench reproduced {} golden rows twice",
            csr.nnz(),
            golden.len()
        ))
    })();
    let _ = std::fs::remove_dir_all(&tmp);
    result
}

fn run(n: usize, title: &str, f: impl FnOnce() -> Outcome) -> bool {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    match outcome {
        Ok(detail) => {
            println!("PASS  criterion {n:>2} {title}: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL  criterion {n:>2} {title}: {detail}");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= run(1, "Gram-trick equivalence", gram_trick);
    ok &= run(2, "SVD correctness", svd_correctness);
    ok &= run(3, "baseline monotone reconstruction", baseline_monotone);

    let clock = Instant::now();
    let sets = synthetic_sets();
    let mut all_sets = sets.clone();
    all_sets.extend(env_datasets());
    let all: Result<Vec<Curves>, String> = all_sets.iter().map(curves).collect();
    let secs = clock.elapsed().as_secs_f64();
    match all {
        Ok(all) => {
            ok &= run(4, "error-vs-rank shape", || error_vs_rank(&all, secs));
            ok &= run(5, "correction-loop budget", || correction_budget(&all));
        }
        Err(e) => {
            ok &= run(4, "error-vs-rank shape", || Err(e.clone()));
            ok &= run(5, "correction-loop budget", || Err(e));
        }
    }
    ok &= run(6, "sparsity", || sparsity_claims(&sets));
    ok &= run(7, "descent properties", descent);
    ok &= run(8, "relative timing ordering", timing);
    match att_reproduction() {
        Some(outcome) => ok &= run(9, "AT&T reproduction", || outcome),
        None => println!("SKIP  criterion  9 AT&T reproduction: set NNSVD_ATT_DATA to the faces directory or matrix"),
    }
    ok &= run(10, "CLI/format contract", cli_contract);

    if ok {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAILED");
        ExitCode::FAILURE
    }
}
