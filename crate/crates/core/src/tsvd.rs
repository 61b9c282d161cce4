//! Rank-`p` truncated SVD by Golub-Kahan-Lanczos bidiagonalization with full
//! reorthogonalization, plus the two-factor form `Y = U S^{1/2}`,
//! `Z = S^{1/2} V^T`.
//!
//! Only matrix-vector products with `X` and `X^T` touch the data, so dense
//! and CSR inputs share one code path. Ritz triplets are extracted from the
//! small bidiagonal matrix whenever the Krylov basis has grown by roughly
//! 15%, and iteration stops once every requested triplet satisfies
//! `||X^T u_i - s_i v_i|| <= tol * s_1`. (`X v_i = s_i u_i` holds by
//! construction of the recurrence.)

use nalgebra::DMatrix;
use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{DataMatrix, LowRankMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    /// Residual tolerance relative to the largest singular value.
    pub tol: f64,
    /// Cap on Lanczos steps. Raised to `p + 10` when smaller.
    pub max_steps: usize,
    /// Seeds the starting (and any restart) vector.
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            tol: 1e-8,
            max_steps: 300,
            seed: 0,
        }
    }
}

/// Leading singular triplets: `u` is `m x p`, `v` is `n x p`, `sigma` is
/// sorted nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdFactors {
    pub u: Array2<f64>,
    pub sigma: Array1<f64>,
    pub v: Array2<f64>,
}

impl SvdFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    /// `U diag(sigma) V^T`; test helper for small inputs.
    pub fn reconstruct(&self) -> Array2<f64> {
        let us = &self.u * &self.sigma.view().insert_axis(Axis(0));
        us.dot(&self.v.t())
    }
}

/// Computes the top `rank` singular triplets of `x`.
///
/// Each pair `(u_i, v_i)` is flipped so that the entry of `u_i` with the
/// largest magnitude is positive. A zero matrix yields `sigma = 0` with
/// coordinate vectors for `U` and `V`.
pub fn truncated_svd(x: &DataMatrix, rank: usize, opts: &SvdOptions) -> Result<SvdFactors> {
    let (m, n) = x.shape();
    let kmin = m.min(n);
    if rank == 0 || rank > kmin {
        return Err(Error::RankTooLarge { rank, max: kmin });
    }
    let xnorm = x.frobenius_norm();
    if xnorm == 0.0 {
        return Ok(SvdFactors {
            u: Array2::eye(m).slice(s![.., ..rank]).to_owned(),
            sigma: Array1::zeros(rank),
            v: Array2::eye(n).slice(s![.., ..rank]).to_owned(),
        });
    }

    let max_steps = opts.max_steps.max(rank + 10).min(kmin);
    let mut lz = Lanczos::new(x, max_steps, opts.seed, xnorm);
    let mut next_check = (rank + 10).min(max_steps);
    loop {
        lz.step();
        let k = lz.steps();
        if k < next_check && k < max_steps && !lz.exhausted {
            continue;
        }
        let ritz = lz.ritz(rank);
        let sigma1 = ritz.sigma[0];
        let worst = ritz
            .residuals
            .iter()
            .fold(0.0f64, |acc, &r| acc.max(r));
        if worst <= opts.tol * sigma1 || k == kmin || lz.exhausted {
            return Ok(lz.assemble(ritz));
        }
        if k >= max_steps {
            return Err(Error::ConvergenceFailure {
                steps: k,
                residual: worst / sigma1,
            });
        }
        next_check = (k + 5).max((k as f64 * 1.15).ceil() as usize).min(max_steps);
    }
}

/// `Y = U diag(sqrt(sigma))`, `Z = diag(sqrt(sigma)) V^T`.
pub fn to_two_factor(s: &SvdFactors) -> LowRankMatrix {
    let root = s.sigma.mapv(|v| v.max(0.0).sqrt());
    let y = &s.u * &root.view().insert_axis(Axis(0));
    let z = (&s.v * &root.view().insert_axis(Axis(0))).reversed_axes();
    LowRankMatrix::new(y, z.as_standard_layout().into_owned())
        .expect("singular vectors are finite")
}

struct Ritz {
    sigma: Vec<f64>,
    residuals: Vec<f64>,
    /// `k x p` left singular vectors of the bidiagonal matrix.
    left: Array2<f64>,
    /// `k x p` right singular vectors of the bidiagonal matrix.
    right: Array2<f64>,
}

struct Lanczos<'a> {
    x: &'a DataMatrix,
    /// Rows are the left basis vectors `u_1..u_k`.
    ub: Array2<f64>,
    /// Rows are the right basis vectors `v_1..v_{k+1}`.
    vb: Array2<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    rng: ChaCha8Rng,
    breakdown: f64,
    exhausted: bool,
}

impl<'a> Lanczos<'a> {
    fn new(x: &'a DataMatrix, max_steps: usize, seed: u64, xnorm: f64) -> Self {
        let (m, n) = x.shape();
        let mut lz = Lanczos {
            x,
            ub: Array2::zeros((max_steps, m)),
            vb: Array2::zeros((max_steps + 1, n)),
            alpha: Vec::with_capacity(max_steps),
            beta: Vec::with_capacity(max_steps),
            rng: ChaCha8Rng::seed_from_u64(seed),
            breakdown: 1e-13 * xnorm,
            exhausted: false,
        };
        let v0 = lz.fresh_vector(0, true).expect("X is nonzero");
        lz.vb.row_mut(0).assign(&v0);
        lz
    }

    fn steps(&self) -> usize {
        self.alpha.len()
    }

    /// A random unit vector orthogonal to the first `k` rows of the chosen
    /// basis, drawn from the range of `X` (left) or `X^T` (right) while that
    /// range still has room.
    ///
    /// Keeping null-space components out of the Krylov basis means a wide or
    /// rank-deficient matrix is resolved after rank(X) steps instead of
    /// stalling. Once the range is used up, the vector comes from the whole
    /// space and only contributes zero singular values.
    fn fresh_vector(&mut self, k: usize, right: bool) -> Option<Array1<f64>> {
        let (m, n) = self.x.shape();
        let len = if right { n } else { m };
        for attempt in 0..6 {
            let from_range = attempt < 3;
            let draw_len = match (from_range, right) {
                (true, true) => m,
                (true, false) => n,
                (false, _) => len,
            };
            let g: Array1<f64> =
                Array1::from_iter((0..draw_len).map(|_| StandardNormal.sample(&mut self.rng)));
            let mut w = match (from_range, right) {
                (true, true) => self.x.rmatvec(g.view()),
                (true, false) => self.x.matvec(g.view()),
                (false, _) => g,
            };
            let before = norm(w.view());
            let basis = if right { &self.vb } else { &self.ub };
            reorthogonalize(&mut w, basis.slice(s![..k, ..]));
            let nrm = norm(w.view());
            if nrm > 1e-10 * before {
                return Some(w / nrm);
            }
        }
        None
    }

    fn step(&mut self) {
        let j = self.steps();

        // u_j = X v_j - beta_{j-1} u_{j-1}
        let mut u = self.x.matvec(self.vb.row(j));
        if j > 0 {
            u.scaled_add(-self.beta[j - 1], &self.ub.row(j - 1));
        }
        reorthogonalize(&mut u, self.ub.slice(s![..j, ..]));
        let mut alpha = norm(u.view());
        if alpha <= self.breakdown {
            alpha = 0.0;
            match self.fresh_vector(j, false) {
                Some(f) => u = f,
                None => {
                    self.exhausted = true;
                    u.fill(0.0);
                }
            }
        } else {
            u /= alpha;
        }
        self.ub.row_mut(j).assign(&u);
        self.alpha.push(alpha);

        // v_{j+1} = X^T u_j - alpha_j v_j
        let mut v = self.x.rmatvec(u.view());
        v.scaled_add(-alpha, &self.vb.row(j));
        reorthogonalize(&mut v, self.vb.slice(s![..=j, ..]));
        let mut beta = norm(v.view());
        if beta <= self.breakdown {
            beta = 0.0;
            match self.fresh_vector(j + 1, true) {
                Some(f) => v = f,
                None => {
                    self.exhausted = true;
                    v.fill(0.0);
                }
            }
        } else {
            v /= beta;
        }
        self.vb.row_mut(j + 1).assign(&v);
        self.beta.push(beta);
    }

    fn ritz(&self, rank: usize) -> Ritz {
        let k = self.steps();
        let b = DMatrix::from_fn(k, k, |i, j| {
            if i == j {
                self.alpha[i]
            } else if j == i + 1 {
                self.beta[i]
            } else {
                0.0
            }
        });
        let svd = b.svd(true, true);
        let (bu, bvt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &c| svd.singular_values[c].total_cmp(&svd.singular_values[a]));
        let take = rank.min(k);
        let beta_k = self.beta[k - 1];
        let mut sigma = Vec::with_capacity(take);
        let mut residuals = Vec::with_capacity(take);
        let mut left = Array2::zeros((k, take));
        let mut right = Array2::zeros((k, take));
        for (c, &idx) in order.iter().take(take).enumerate() {
            sigma.push(svd.singular_values[idx]);
            residuals.push((beta_k * bu[(k - 1, idx)]).abs());
            for r in 0..k {
                left[[r, c]] = bu[(r, idx)];
                right[[r, c]] = bvt[(idx, r)];
            }
        }
        // an incomplete set of Ritz triplets is never "converged"
        if take < rank {
            residuals.push(f64::INFINITY);
        }
        Ritz {
            sigma,
            residuals,
            left,
            right,
        }
    }

    fn assemble(&self, ritz: Ritz) -> SvdFactors {
        let k = self.steps();
        let mut u = self.ub.slice(s![..k, ..]).t().dot(&ritz.left);
        let mut v = self.vb.slice(s![..k, ..]).t().dot(&ritz.right);
        let sigma = Array1::from(ritz.sigma);
        for i in 0..sigma.len() {
            let col = u.column(i);
            let lead = col
                .iter()
                .enumerate()
                .fold((0usize, 0.0f64), |best, (r, &val)| {
                    if val.abs() > best.1.abs() {
                        (r, val)
                    } else {
                        best
                    }
                });
            if lead.1 < 0.0 {
                u.column_mut(i).mapv_inplace(|t| -t);
                v.column_mut(i).mapv_inplace(|t| -t);
            }
        }
        SvdFactors { u, sigma, v }
    }
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Two passes of classical Gram-Schmidt against the rows of `basis`.
fn reorthogonalize(w: &mut Array1<f64>, basis: ndarray::ArrayView2<f64>) {
    if basis.nrows() == 0 {
        return;
    }
    for _ in 0..2 {
        let coeffs = basis.dot(&*w);
        *w -= &basis.t().dot(&coeffs);
    }
}
