//! NMF solvers: multiplicative updates, accelerated HALS on an explicit or
//! implicit low-rank target, the NNLS update of `H`, and the cheap error
//! evaluation for low-rank targets.

use nalgebra::DMatrix;
use ndarray::{Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::init::ErrorTrace;
use crate::matrix::{gram, inner, mat_mat_t, residual_norm, DataMatrix, FactorPair, LowRankMatrix};
use crate::opcount;
use crate::timing::Stopwatch;

/// What a solver fits `W H` to.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Data(&'a DataMatrix),
    /// Never materialized; products are routed through `Y` and `Z`.
    LowRank(&'a LowRankMatrix),
}

impl<'a> From<&'a DataMatrix> for Target<'a> {
    fn from(x: &'a DataMatrix) -> Self {
        Target::Data(x)
    }
}

impl<'a> From<&'a LowRankMatrix> for Target<'a> {
    fn from(l: &'a LowRankMatrix) -> Self {
        Target::LowRank(l)
    }
}

impl Target<'_> {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Target::Data(x) => x.shape(),
            Target::LowRank(l) => l.shape(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        match self {
            Target::Data(x) => x.frobenius_norm(),
            Target::LowRank(l) => l.frobenius_norm(),
        }
    }

    /// `T H^T`, an `m x r` matrix.
    fn mul_ht(&self, h: &Array2<f64>) -> Array2<f64> {
        match self {
            Target::Data(x) => x.mul_dense(h.t()).expect("conforming"),
            Target::LowRank(l) => l.mul_dense(h.t()).expect("conforming"),
        }
    }

    /// `W^T T`, an `r x n` matrix.
    fn wt_mul(&self, w: &Array2<f64>) -> Array2<f64> {
        match self {
            Target::Data(x) => x.left_mul_dense(w.t()).expect("conforming"),
            Target::LowRank(l) => l.left_mul_dense(w.t()).expect("conforming"),
        }
    }

    /// `||T - W H||_F`.
    fn error(&self, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
        match self {
            Target::Data(x) => residual_norm(x, w.view(), h.view()),
            Target::LowRank(l) => low_rank_error_unchecked(l, w.view(), h.view()),
        }
    }

    /// Multiply-adds per factor column for `T H^T` or `W^T T`.
    fn product_cost(&self) -> usize {
        match self {
            Target::Data(x) => x.nnz(),
            Target::LowRank(l) => (l.nrows() + l.ncols()) * l.rank(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    pub max_iters: usize,
    /// Stop after the first outer iteration that ends past this many seconds.
    pub time_limit: Option<f64>,
    /// Added to MU denominators.
    pub epsilon_guard: f64,
    /// A-HALS inner sweep budget factor.
    pub accel_alpha: f64,
    /// A-HALS inner loop stops once a sweep moves the factor by less than
    /// this fraction of the first sweep's movement.
    pub accel_eps: f64,
    /// Overrides the inner sweep budget derived from `accel_alpha`.
    pub max_inner_sweeps: Option<usize>,
    /// Record the error after every outer iteration, not only the endpoints.
    pub record_trace: bool,
    /// Seeds the rescue of collapsed factor columns.
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            max_iters: 100,
            time_limit: None,
            epsilon_guard: 1e-16,
            accel_alpha: 0.5,
            accel_eps: 0.1,
            max_inner_sweeps: None,
            record_trace: true,
            seed: 0,
        }
    }
}

impl SolveOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if self.epsilon_guard.is_nan() || self.epsilon_guard <= 0.0 {
            return Err(Error::InvalidConfig("epsilon_guard must be > 0".into()));
        }
        if self.max_inner_sweeps == Some(0) {
            return Err(Error::InvalidConfig("max_inner_sweeps must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub factors: FactorPair,
    /// Relative errors `||T - WH|| / ||T||`, starting with the initial point.
    pub trace: ErrorTrace,
    pub iters_run: usize,
    pub wall_time: f64,
}

fn check_conforming(shape: (usize, usize), f: &FactorPair) -> Result<()> {
    let (m, n) = shape;
    if f.w().nrows() != m || f.h().ncols() != n {
        return Err(Error::mismatch("solve", shape, (f.w().nrows(), f.h().ncols())));
    }
    Ok(())
}

/// Frobenius multiplicative updates, `H` first then `W` in each iteration.
pub fn mu_solve<'a>(
    target: impl Into<Target<'a>>,
    init: &FactorPair,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let target = target.into();
    check_conforming(target.shape(), init)?;
    opts.validate()?;
    let clock = Stopwatch::start();
    let tnorm = target.frobenius_norm();
    let rel = |w: &Array2<f64>, h: &Array2<f64>| relative(target.error(w, h), tnorm);
    let (mut w, mut h) = init.clone().into_parts();
    let eps = opts.epsilon_guard;

    let mut errors = vec![rel(&w, &h)];
    let mut iters = 0;
    while iters < opts.max_iters {
        let num = target.wt_mul(&w);
        let den = gram(&w).dot(&h);
        Zip::from(&mut h)
            .and(&num)
            .and(&den)
            .for_each(|hv, &a, &b| *hv *= a / (b + eps));

        let num = target.mul_ht(&h);
        let den = w.dot(&mat_mat_t(&h, &h));
        Zip::from(&mut w)
            .and(&num)
            .and(&den)
            .for_each(|wv, &a, &b| *wv *= a / (b + eps));

        iters += 1;
        if opts.record_trace {
            errors.push(rel(&w, &h));
        }
        if opts.time_limit.is_some_and(|t| clock.seconds() >= t) {
            break;
        }
    }
    if !opts.record_trace {
        errors.push(rel(&w, &h));
    }
    Ok(SolveResult {
        factors: FactorPair::from_parts(w, h),
        trace: ErrorTrace {
            errors,
            iterations: iters,
        },
        iters_run: iters,
        wall_time: clock.seconds(),
    })
}

fn relative(err: f64, norm: f64) -> f64 {
    if norm > 0.0 {
        err / norm
    } else {
        err
    }
}

/// Accelerated HALS.
///
/// Each outer iteration updates the columns of `W` against `A = T H^T`,
/// `B = H H^T`, then the rows of `H` against `W^T T`, `W^T W`, repeating
/// the column sweeps while they still move the factor (see
/// [`SolveOptions::accel_eps`]). For a [`Target::LowRank`] no `m x n`
/// product is ever formed.
pub fn ahals_solve<'a>(
    target: impl Into<Target<'a>>,
    init: &FactorPair,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    let target = target.into();
    check_conforming(target.shape(), init)?;
    opts.validate()?;
    let clock = Stopwatch::start();
    let tnorm = target.frobenius_norm();
    let mut state = Ahals::new(target, init, opts);

    let mut errors = vec![relative(target.error(&state.w, &state.h), tnorm)];
    let mut iters = 0;
    while iters < opts.max_iters {
        state.iterate();
        iters += 1;
        if opts.record_trace {
            errors.push(relative(target.error(&state.w, &state.h), tnorm));
        }
        if opts.time_limit.is_some_and(|t| clock.seconds() >= t) {
            break;
        }
    }
    if !opts.record_trace {
        errors.push(relative(target.error(&state.w, &state.h), tnorm));
    }
    Ok(SolveResult {
        factors: state.into_factors(),
        trace: ErrorTrace {
            errors,
            iterations: iters,
        },
        iters_run: iters,
        wall_time: clock.seconds(),
    })
}

/// Stepwise A-HALS, shared by [`ahals_solve`] and the low-rank correction
/// inside NNSVD-LRC.
pub(crate) struct Ahals<'a> {
    target: Target<'a>,
    pub(crate) w: Array2<f64>,
    pub(crate) h: Array2<f64>,
    sweeps_w: usize,
    sweeps_h: usize,
    accel_eps: f64,
    rescue_scale: f64,
    rng: ChaCha8Rng,
}

impl<'a> Ahals<'a> {
    pub(crate) fn new(target: Target<'a>, init: &FactorPair, opts: &SolveOptions) -> Self {
        let (m, n) = target.shape();
        let r = init.rank();
        let k = target.product_cost() as f64;
        let (mf, nf, rf) = (m as f64, n as f64, r as f64);
        let rho_w = 1.0 + (k + nf * rf) / (mf * (rf + 1.0));
        let rho_h = 1.0 + (k + mf * rf) / (nf * (rf + 1.0));
        let budget = |rho: f64| {
            opts.max_inner_sweeps
                .unwrap_or_else(|| (1.0 + opts.accel_alpha * rho).floor().max(1.0) as usize)
        };
        let (w, h) = init.clone().into_parts();
        Ahals {
            target,
            w,
            h,
            sweeps_w: budget(rho_w),
            sweeps_h: budget(rho_h),
            accel_eps: opts.accel_eps,
            rescue_scale: 1e-8 * target.frobenius_norm(),
            rng: ChaCha8Rng::seed_from_u64(opts.seed),
        }
    }

    pub(crate) fn iterate(&mut self) {
        let (m, n) = self.target.shape();
        let r = self.h.nrows();

        let a = self.target.mul_ht(&self.h).reversed_axes();
        let b = mat_mat_t(&self.h, &self.h);
        opcount::add(n * r * r);
        let mut wt = self.w.t().as_standard_layout().into_owned();
        accelerated_rows(&mut wt, a.view(), b.view(), self.sweeps_w, self.accel_eps);
        self.w = wt.reversed_axes().as_standard_layout().into_owned();
        self.rescue_w(m);

        let a = self.target.wt_mul(&self.w);
        let b = gram(&self.w);
        opcount::add(m * r * r);
        accelerated_rows(&mut self.h, a.view(), b.view(), self.sweeps_h, self.accel_eps);
        self.rescue_h(n);
    }

    /// A column of `W` that collapsed to zero contributes nothing to `W H`,
    /// so its row of `H` can be zeroed and the column re-seeded without
    /// changing the product.
    fn rescue_w(&mut self, m: usize) {
        let scale = self.rescue_scale / (m as f64).sqrt();
        for l in 0..self.w.ncols() {
            if self.w.column(l).iter().all(|&v| v == 0.0) && scale > 0.0 {
                self.h.row_mut(l).fill(0.0);
                for v in self.w.column_mut(l) {
                    *v = scale * self.rng.random_range(f64::EPSILON..1.0);
                }
            }
        }
    }

    fn rescue_h(&mut self, n: usize) {
        let scale = self.rescue_scale / (n as f64).sqrt();
        for l in 0..self.h.nrows() {
            if self.h.row(l).iter().all(|&v| v == 0.0) && scale > 0.0 {
                self.w.column_mut(l).fill(0.0);
                for v in self.h.row_mut(l) {
                    *v = scale * self.rng.random_range(f64::EPSILON..1.0);
                }
            }
        }
    }

    pub(crate) fn into_factors(self) -> FactorPair {
        FactorPair::from_parts(self.w, self.h)
    }
}

/// Repeats [`hals_rows`] up to `max_sweeps` times, stopping early once a
/// sweep's squared step falls below `eps^2` times the first sweep's.
fn accelerated_rows(
    f: &mut Array2<f64>,
    a: ArrayView2<f64>,
    b: ArrayView2<f64>,
    max_sweeps: usize,
    eps: f64,
) {
    let mut first = 0.0;
    for sweep in 0..max_sweeps {
        let step = hals_rows(f, a, b);
        if sweep == 0 {
            first = step;
        } else if step < eps * eps * first {
            break;
        }
        if step == 0.0 {
            break;
        }
    }
}

/// One Gauss-Seidel pass of the HALS closed-form update over the rows of
/// `f` (`r x len`):
/// `f_l <- max(0, f_l + (a_l - b_l f) / b_ll)`.
/// Rows with `b_ll = 0` are left unchanged. Returns the squared Frobenius
/// norm of the total change.
pub(crate) fn hals_rows(f: &mut Array2<f64>, a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let (r, len) = f.dim();
    opcount::add(r * r * len);
    let mut moved = 0.0;
    let mut grad = ndarray::Array1::<f64>::zeros(len);
    for l in 0..r {
        let bll = b[[l, l]];
        if bll <= 0.0 {
            continue;
        }
        grad.assign(&a.row(l));
        for k in 0..r {
            let bk = b[[l, k]];
            if bk != 0.0 {
                grad.scaled_add(-bk, &f.row(k));
            }
        }
        let mut row = f.row_mut(l);
        Zip::from(&mut row).and(&grad).for_each(|v, &g| {
            let new = (*v + g / bll).max(0.0);
            moved += (new - *v) * (new - *v);
            *v = new;
        });
    }
    moved
}

/// `||Y Z - W H||_F` from `<Y^T Y, Z Z^T> - 2 <(W^T Y) Z, H> + <W^T W, H H^T>`,
/// clamped at zero, in `O((m + n) r^2)` work.
///
/// When the squared error is below `1e-6 ||Y Z||^2` the value is recomputed
/// from a thin QR factorization of `[Y, -W]`, which has the same cost order
/// but no cancellation.
pub fn low_rank_error(l: &LowRankMatrix, f: &FactorPair) -> Result<f64> {
    if f.w().nrows() != l.nrows() || f.h().ncols() != l.ncols() {
        return Err(Error::mismatch(
            "low_rank_error",
            l.shape(),
            (f.w().nrows(), f.h().ncols()),
        ));
    }
    Ok(low_rank_error_unchecked(l, f.w().view(), f.h().view()))
}

fn low_rank_error_unchecked(l: &LowRankMatrix, w: ArrayView2<f64>, h: ArrayView2<f64>) -> f64 {
    let (m, n, p, r) = (l.nrows(), l.ncols(), l.rank(), w.ncols());
    opcount::add(m * p * r + r * p * n + r * n + (m + n) * r * r);
    let ll = l.squared_norm();
    let cross = inner(&w.t().dot(l.y()).dot(l.z()), &h);
    let wh = inner(&gram(&w), &mat_mat_t(&h, &h));
    let sq = ll - 2.0 * cross + wh;
    if sq > 1e-6 * ll {
        return sq.sqrt();
    }
    // Near an exact fit the three terms cancel down to ~sqrt(eps) ||L||.
    // ||[Y, -W] [Z; H]|| = ||R [Z; H]|| with [Y, -W] = Q R avoids that.
    opcount::add(m * (p + r) * (p + r) + (p + r) * (p + r) * n);
    let k = p + r;
    let stacked_left = DMatrix::from_fn(m, k, |i, j| if j < p { l.y()[[i, j]] } else { -w[[i, j - p]] });
    let rfac = stacked_left.qr().r();
    let rows = rfac.nrows();
    let mut acc = 0.0;
    let mut buf = vec![0.0; n];
    for i in 0..rows {
        buf.iter_mut().for_each(|v| *v = 0.0);
        for j in i..k {
            let c = rfac[(i, j)];
            if c == 0.0 {
                continue;
            }
            let src = if j < p { l.z().row(j) } else { h.row(j - p) };
            for (b, &s) in buf.iter_mut().zip(src) {
                *b += c * s;
            }
        }
        acc += buf.iter().map(|v| v * v).sum::<f64>();
    }
    acc.sqrt()
}

const NNLS_MAX_SWEEPS: usize = 5000;

/// Solves `min_{H >= 0} ||X - W H||_F` for fixed `W` by HALS sweeps over the
/// rows of `H`, starting from `h0`, until every entry satisfies
/// `|min(H, W^T W H - W^T X)| <= 1e-6 * max|W^T X|`. Gives up silently
/// after 5000 sweeps with the best iterate so far.
pub fn nnls_update_h(x: &DataMatrix, w: &Array2<f64>, h0: &Array2<f64>) -> Result<Array2<f64>> {
    if w.nrows() != x.nrows() || h0.ncols() != x.ncols() || w.ncols() != h0.nrows() {
        return Err(Error::mismatch("nnls_update_h", x.shape(), (w.nrows(), h0.ncols())));
    }
    if let Some(j) = (0..w.ncols()).find(|&j| w.column(j).iter().all(|&v| v == 0.0)) {
        return Err(Error::ZeroColumn(j));
    }
    let a = x.left_mul_dense(w.t())?;
    let b = gram(w);
    let scale = a.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Ok(Array2::zeros(h0.dim()));
    }
    let tol = 1e-6 * scale;
    let mut h = h0.mapv(|v| v.max(0.0));
    for _ in 0..NNLS_MAX_SWEEPS {
        hals_rows(&mut h, a.view(), b.view());
        if kkt_violation(&h, &a, &b) <= tol {
            break;
        }
    }
    Ok(h)
}

/// `max |min(H, grad)|` with `grad = B H - A`.
pub(crate) fn kkt_violation(h: &Array2<f64>, a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let grad = b.dot(h) - a;
    Zip::from(h)
        .and(&grad)
        .fold(0.0f64, |acc, &hv, &g| acc.max(hv.min(g).abs()))
}

/// `||T - W H||_F^2` by materialization.
#[cfg(test)]
fn objective(t: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    (t - &w.dot(h)).iter().map(|v| v * v).sum()
}
