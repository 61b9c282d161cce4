//! SVD-based NMF initializations and a random baseline.
//!
//! All of them split the two-factor form `Y Z` of a truncated SVD into
//! nonnegative pieces. [`nndsvd`] keeps one sign-part of each rank-one term,
//! [`svd_nmf`] takes absolute values, and [`nnsvd_lrc`] keeps both sign-parts
//! from a rank `ceil(r/2 + 1)` SVD and then corrects the result with A-HALS
//! against `Y_p Z_p`.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::{split_parts, DataMatrix, FactorPair, LowRankMatrix};
use crate::solve::{low_rank_error, Ahals, SolveOptions, Target};
use crate::timing::Stopwatch;
use crate::tsvd::{to_two_factor, truncated_svd, SvdOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub rank: usize,
    /// Correction stops once an A-HALS iteration improves the error by less
    /// than `delta * e_0`.
    pub delta: f64,
    pub max_correction_iters: usize,
    pub svd_tol: f64,
    pub seed: u64,
}

impl InitConfig {
    pub fn new(rank: usize) -> Self {
        InitConfig {
            rank,
            delta: 0.05,
            max_correction_iters: 100,
            svd_tol: 1e-8,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidConfig("rank must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        if self.svd_tol.is_nan() || self.svd_tol <= 0.0 {
            return Err(Error::InvalidConfig("svd_tol must be > 0".into()));
        }
        Ok(())
    }

    fn svd_options(&self) -> SvdOptions {
        SvdOptions {
            tol: self.svd_tol,
            seed: self.seed,
            ..SvdOptions::default()
        }
    }
}

/// Errors recorded by an iterative loop, `e_0` first.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ErrorTrace {
    pub errors: Vec<f64>,
    pub iterations: usize,
}

impl ErrorTrace {
    /// True when no step increases the error by more than `slack`.
    pub fn is_nonincreasing(&self, slack: f64) -> bool {
        self.errors.windows(2).all(|w| w[1] <= w[0] + slack)
    }

    pub fn last(&self) -> Option<f64> {
        self.errors.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitResult {
    pub factors: FactorPair,
    pub svd_rank_used: usize,
    /// Empty except for NNSVD-LRC.
    pub correction_trace: ErrorTrace,
    pub wall_time: f64,
}

/// Which initialization to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Initializer {
    NnsvdLrc,
    Nndsvd,
    SvdNmf,
    Random,
}

impl Initializer {
    pub const ALL: [Initializer; 4] = [
        Initializer::NnsvdLrc,
        Initializer::Nndsvd,
        Initializer::SvdNmf,
        Initializer::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Initializer::NnsvdLrc => "nnsvd-lrc",
            Initializer::Nndsvd => "nndsvd",
            Initializer::SvdNmf => "svd-nmf",
            Initializer::Random => "random",
        }
    }

    pub fn run(self, x: &DataMatrix, cfg: &InitConfig) -> Result<InitResult> {
        match self {
            Initializer::NnsvdLrc => nnsvd_lrc(x, cfg),
            Initializer::Nndsvd => nndsvd(x, cfg),
            Initializer::SvdNmf => svd_nmf(x, cfg),
            Initializer::Random => {
                cfg.validate()?;
                let (m, n) = x.shape();
                random_init(m, n, cfg.rank, cfg.seed, Some(x.frobenius_norm()))
            }
        }
    }
}

impl fmt::Display for Initializer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Initializer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Initializer::ALL
            .into_iter()
            .find(|i| i.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown initializer '{s}'")))
    }
}

/// SVD rank used by NNSVD-LRC for factorization rank `r`: `ceil(r/2 + 1)`.
pub fn lrc_svd_rank(r: usize) -> usize {
    (r + 3) / 2
}

/// Builds the uncorrected NNSVD-LRC factors from the two-factor form.
///
/// Column 0 of `W` (row 0 of `H`) is `|y_1|` (`|z_1|`). Each later singular
/// pair fills two consecutive columns, its positive part then its negative
/// part, until `r` columns are filled; for even `r` the last pair only
/// contributes its positive part.
pub fn split_populate(l: &LowRankMatrix, r: usize) -> Result<FactorPair> {
    let needed = 1 + r / 2;
    if needed > l.rank() {
        return Err(Error::RankTooLarge {
            rank: r,
            max: 2 * l.rank() - 1,
        });
    }
    let (m, n) = l.shape();
    let (y, z) = (l.y(), l.z());
    let mut w = Array2::zeros((m, r));
    let mut h = Array2::zeros((r, n));
    w.column_mut(0).assign(&y.column(0).mapv(f64::abs));
    h.row_mut(0).assign(&z.row(0).mapv(f64::abs));

    let mut col = 1;
    let mut pair = 1;
    while col < r {
        let (yp, yn) = split_parts(&y.column(pair));
        let (zp, zn) = split_parts(&z.row(pair));
        w.column_mut(col).assign(&yp);
        h.row_mut(col).assign(&zp);
        col += 1;
        if col < r {
            w.column_mut(col).assign(&yn);
            h.row_mut(col).assign(&zn);
            col += 1;
        }
        pair += 1;
    }
    Ok(FactorPair::from_parts(w, h))
}

/// Replaces every all-zero column of `W` with small positive noise of
/// Frobenius scale about `1e-8 ||X||_F`.
fn reseed_zero_columns(w: &mut Array2<f64>, xnorm: f64, seed: u64) {
    let scale = 1e-8 * xnorm / (w.nrows() as f64).sqrt();
    if scale == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x05ee_dc01_u64);
    for l in 0..w.ncols() {
        if w.column(l).iter().all(|&v| v == 0.0) {
            for v in w.column_mut(l) {
                *v = scale * rng.random_range(f64::EPSILON..1.0);
            }
        }
    }
}

fn check_rank(r: usize, max: usize) -> Result<()> {
    if r > max {
        return Err(Error::RankTooLarge { rank: r, max });
    }
    Ok(())
}

/// Nonnegative SVD with low-rank correction.
///
/// Requires `r <= min(m, n) - 1`. The correction runs A-HALS on the implicit
/// `X_p = Y_p Z_p` and continues while each iteration lowers
/// `||X_p - W H||_F` by at least `delta * e_0`, up to
/// `max_correction_iters` iterations (at least one is always run).
pub fn nnsvd_lrc(x: &DataMatrix, cfg: &InitConfig) -> Result<InitResult> {
    cfg.validate()?;
    x.ensure_nonnegative()?;
    let (m, n) = x.shape();
    let r = cfg.rank;
    check_rank(r, m.min(n).saturating_sub(1))?;
    let clock = Stopwatch::start();

    let p = lrc_svd_rank(r);
    let svd = truncated_svd(x, p, &cfg.svd_options())?;
    let xp = to_two_factor(&svd);
    let (mut w, h) = split_populate(&xp, r)?.into_parts();
    reseed_zero_columns(&mut w, x.frobenius_norm(), cfg.seed);
    let start = FactorPair::from_parts(w, h);

    let e0 = low_rank_error(&xp, &start)?;
    let mut errors = vec![e0];
    let opts = SolveOptions {
        seed: cfg.seed,
        ..SolveOptions::default()
    };
    let mut ahals = Ahals::new(Target::LowRank(&xp), &start, &opts);
    let mut k = 0;
    while k < cfg.max_correction_iters {
        ahals.iterate();
        k += 1;
        let e = low_rank_error(&xp, &FactorPair::from_parts(ahals.w.clone(), ahals.h.clone()))?;
        let decrease = errors[k - 1] - e;
        errors.push(e);
        if !(decrease > 0.0 && decrease >= cfg.delta * e0) {
            break;
        }
    }

    Ok(InitResult {
        factors: ahals.into_factors(),
        svd_rank_used: p,
        correction_trace: ErrorTrace {
            errors,
            iterations: k,
        },
        wall_time: clock.seconds(),
    })
}

/// Chooses the larger-norm sign-part of `y_i z_i` for `i >= 2`, preferring
/// the positive part on ties.
pub fn nndsvd_select(l: &LowRankMatrix, r: usize) -> FactorPair {
    let (m, n) = l.shape();
    let (y, z) = (l.y(), l.z());
    let mut w = Array2::zeros((m, r));
    let mut h = Array2::zeros((r, n));
    w.column_mut(0).assign(&y.column(0).mapv(f64::abs));
    h.row_mut(0).assign(&z.row(0).mapv(f64::abs));
    for i in 1..r {
        let (yp, yn) = split_parts(&y.column(i));
        let (zp, zn) = split_parts(&z.row(i));
        // ||a b^T||_F = ||a|| ||b||
        let pos = yp.dot(&yp).sqrt() * zp.dot(&zp).sqrt();
        let neg = yn.dot(&yn).sqrt() * zn.dot(&zn).sqrt();
        if pos >= neg {
            w.column_mut(i).assign(&yp);
            h.row_mut(i).assign(&zp);
        } else {
            w.column_mut(i).assign(&yn);
            h.row_mut(i).assign(&zn);
        }
    }
    FactorPair::from_parts(w, h)
}

fn rank_r_two_factor(x: &DataMatrix, cfg: &InitConfig) -> Result<LowRankMatrix> {
    cfg.validate()?;
    x.ensure_nonnegative()?;
    let (m, n) = x.shape();
    check_rank(cfg.rank, m.min(n))?;
    let svd = truncated_svd(x, cfg.rank, &cfg.svd_options())?;
    Ok(to_two_factor(&svd))
}

fn finish(x: &DataMatrix, f: FactorPair, cfg: &InitConfig, clock: Stopwatch) -> InitResult {
    let (mut w, h) = f.into_parts();
    reseed_zero_columns(&mut w, x.frobenius_norm(), cfg.seed);
    InitResult {
        factors: FactorPair::from_parts(w, h),
        svd_rank_used: cfg.rank,
        correction_trace: ErrorTrace::default(),
        wall_time: clock.seconds(),
    }
}

/// Nonnegative double SVD: one sign-part per singular pair, rank-`r` SVD.
pub fn nndsvd(x: &DataMatrix, cfg: &InitConfig) -> Result<InitResult> {
    let clock = Stopwatch::start();
    let l = rank_r_two_factor(x, cfg)?;
    Ok(finish(x, nndsvd_select(&l, cfg.rank), cfg, clock))
}

/// `W = |Y_r|`, `H = |Z_r|`.
pub fn svd_nmf(x: &DataMatrix, cfg: &InitConfig) -> Result<InitResult> {
    let clock = Stopwatch::start();
    let l = rank_r_two_factor(x, cfg)?;
    let f = FactorPair::from_parts(l.y().mapv(f64::abs), l.z().mapv(f64::abs));
    Ok(finish(x, f, cfg, clock))
}

/// Uniform `(0, 1)` factors. With `target_norm`, both factors are scaled by
/// the same factor so that `||W H||_F` equals it.
pub fn random_init(
    m: usize,
    n: usize,
    r: usize,
    seed: u64,
    target_norm: Option<f64>,
) -> Result<InitResult> {
    if r == 0 || r > m.min(n) {
        return Err(Error::RankTooLarge {
            rank: r,
            max: m.min(n),
        });
    }
    let clock = Stopwatch::start();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::from_shape_fn((m, r), |_| rng.random_range(f64::EPSILON..1.0));
    let mut h = Array2::from_shape_fn((r, n), |_| rng.random_range(f64::EPSILON..1.0));
    if let Some(t) = target_norm {
        let current = crate::matrix::inner(&crate::matrix::gram(&w), &h.dot(&h.t())).sqrt();
        let s = (t / current).sqrt();
        w *= s;
        h *= s;
    }
    Ok(InitResult {
        factors: FactorPair::from_parts(w, h),
        svd_rank_used: 0,
        correction_trace: ErrorTrace::default(),
        wall_time: clock.seconds(),
    })
}

/// NNSVD-LRC factors before the correction loop (and before any zero-column
/// re-seeding).
pub fn nnsvd_lrc_uncorrected(x: &DataMatrix, cfg: &InitConfig) -> Result<FactorPair> {
    cfg.validate()?;
    let (m, n) = x.shape();
    check_rank(cfg.rank, m.min(n).saturating_sub(1))?;
    let svd = truncated_svd(x, lrc_svd_rank(cfg.rank), &cfg.svd_options())?;
    split_populate(&to_two_factor(&svd), cfg.rank)
}
