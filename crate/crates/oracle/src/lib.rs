//! Reference implementations for tests.
//!
//! Everything here is written with plain loops and no shared code with the
//! library under test, so agreement between the two is meaningful. None of it
//! is fast.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform(0,1) matrix from a seeded ChaCha stream.
pub fn uniform(m: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((m, n), |_| rng.random::<f64>())
}

/// Standard-normal-ish matrix (sum of 12 uniforms minus 6), entries of both signs.
pub fn signed(m: usize, n: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((m, n), |_| (0..12).map(|_| rng.random::<f64>()).sum::<f64>() - 6.0)
}

/// Triple-loop product.
pub fn matmul(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let mut c = Array2::zeros((a.nrows(), b.ncols()));
    for i in 0..a.nrows() {
        for j in 0..b.ncols() {
            let mut s = 0.0;
            for k in 0..a.ncols() {
                s += a[[i, k]] * b[[k, j]];
            }
            c[[i, j]] = s;
        }
    }
    c
}

pub fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `||a - b||_F`.
pub fn frob_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub struct FullSvd {
    /// m×k
    pub u: Array2<f64>,
    /// k = min(m, n), nonincreasing
    pub sigma: Array1<f64>,
    /// n×k
    pub v: Array2<f64>,
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
///
/// Works on the columns of `A` (or of `A^T` when `m < n`). Columns whose norm
/// falls to zero get `u = 0`; callers only use singular vectors of nonzero
/// singular values. Signs follow the largest-|.| entry of `u` positive rule.
pub fn jacobi_svd(a: &Array2<f64>) -> FullSvd {
    let (m, n) = a.dim();
    if m < n {
        let t = jacobi_svd(&a.t().to_owned());
        return sign_fix(FullSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        });
    }
    let mut g = a.clone();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    alpha += g[[i, p]] * g[[i, p]];
                    beta += g[[i, q]] * g[[i, q]];
                    gamma += g[[i, p]] * g[[i, q]];
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (g[[i, p]], g[[i, q]]);
                    g[[i, p]] = c * x - s * y;
                    g[[i, q]] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[[i, p]], v[[i, q]]);
                    v[[i, p]] = c * x - s * y;
                    v[[i, q]] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| g[[i, j]] * g[[i, j]]).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));

    let mut u = Array2::zeros((m, n));
    let mut vs = Array2::zeros((n, n));
    let mut sigma = Array1::zeros(n);
    for (k, &j) in order.iter().enumerate() {
        sigma[k] = norms[j];
        for i in 0..n {
            vs[[i, k]] = v[[i, j]];
        }
        if norms[j] > 0.0 {
            for i in 0..m {
                u[[i, k]] = g[[i, j]] / norms[j];
            }
        }
    }
    sign_fix(FullSvd { u, sigma, v: vs })
}

fn sign_fix(mut s: FullSvd) -> FullSvd {
    for k in 0..s.sigma.len() {
        let col = s.u.column(k);
        let mut best = 0;
        for i in 0..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            s.u.column_mut(k).mapv_inplace(|x| -x);
            s.v.column_mut(k).mapv_inplace(|x| -x);
        }
    }
    s
}

/// `(Y, Z)` with `Y = U_p sqrt(S_p)`, `Z = sqrt(S_p) V_p^T` from an oracle SVD.
pub fn two_factor(s: &FullSvd, p: usize) -> (Array2<f64>, Array2<f64>) {
    let m = s.u.nrows();
    let n = s.v.nrows();
    let mut y = Array2::zeros((m, p));
    let mut z = Array2::zeros((p, n));
    for k in 0..p {
        let r = s.sigma[k].sqrt();
        for i in 0..m {
            y[[i, k]] = s.u[[i, k]] * r;
        }
        for j in 0..n {
            z[[k, j]] = s.v[[j, k]] * r;
        }
    }
    (y, z)
}

/// `min_{H >= 0} ||X - W H||_F` by projected gradient with step `1/L`,
/// `L` from power iteration on `W^T W`. Returns `H`.
pub fn projected_gradient_nnls(x: &Array2<f64>, w: &Array2<f64>, iters: usize) -> Array2<f64> {
    let wt = w.t().to_owned();
    let g = matmul(&wt, w);
    let b = matmul(&wt, x);
    let r = g.nrows();

    let mut e = Array1::from_elem(r, 1.0);
    let mut lambda = 0.0;
    for _ in 0..500 {
        let ge = g.dot(&e);
        lambda = ge.iter().map(|v| v * v).sum::<f64>().sqrt();
        e = ge / lambda;
    }
    let step = 1.0 / (1.0001 * lambda);

    let mut h = Array2::<f64>::zeros((r, x.ncols()));
    for _ in 0..iters {
        let grad = matmul(&g, &h) - &b;
        h.zip_mut_with(&grad, |hv, &gv| *hv = (*hv - step * gv).max(0.0));
    }
    h
}

/// `||X - W H||_F^2` materialized.
pub fn objective(x: &Array2<f64>, w: &Array2<f64>, h: &Array2<f64>) -> f64 {
    let d = frob_diff(x, &matmul(w, h));
    d * d
}
