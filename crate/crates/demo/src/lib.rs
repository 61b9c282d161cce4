//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs no generated TypeScript types. The `*_json` functions hold the logic
//! and are callable (and tested) natively.

use nnsvd::{mu_solve, relative_error, Initializer, InitConfig, SolveOptions};
use nnsvd_bench::data::{make_synthetic, Dataset, SyntheticSpec};
use nnsvd_bench::experiment::PostStep;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Synthetic data parameters shared by every export.
#[derive(Debug, Clone, Copy)]
pub struct Data {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Data {
    fn build(self) -> Result<Dataset, String> {
        const MAX_ENTRIES: usize = 250_000;
        if self.m.saturating_mul(self.n) > MAX_ENTRIES {
            return Err(format!("matrix too large for the demo (at most {MAX_ENTRIES} entries)"));
        }
        make_synthetic(&SyntheticSpec {
            m: self.m,
            n: self.n,
            rank: self.rank,
            noise: self.noise,
            seed: self.seed,
        })
        .map_err(|e| e.to_string())
    }
}

fn parse_init(name: &str) -> Result<Initializer, String> {
    name.parse().map_err(|e: nnsvd::Error| e.to_string())
}

fn config(r: usize, delta: f64, seed: u64) -> InitConfig {
    InitConfig {
        delta,
        seed,
        ..InitConfig::new(r)
    }
}

#[derive(Serialize)]
struct Curve {
    initializer: &'static str,
    post_step: String,
    relative_error_percent: Vec<f64>,
}

#[derive(Serialize)]
struct Curves {
    dataset: String,
    ranks: Vec<usize>,
    curves: Vec<Curve>,
}

/// Initial relative error against rank for every initializer, with and
/// without an NNLS update of `H`.
pub fn error_curves_json(data: Data, max_rank: usize, step: usize, nnls: bool) -> Result<String, String> {
    let d = data.build()?;
    let (m, n) = d.matrix.shape();
    let step = step.max(1);
    let top = max_rank.min(m.min(n) - 1);
    let ranks: Vec<usize> = (1..=top).filter(|r| r % step == 0 || *r == 1).collect();
    if ranks.is_empty() {
        return Err("no ranks to evaluate".into());
    }
    let posts: &[PostStep] = if nnls {
        &[PostStep::None, PostStep::Nnls]
    } else {
        &[PostStep::None]
    };
    let mut curves = Vec::new();
    for init in Initializer::ALL {
        let mut rows = vec![Vec::new(); posts.len()];
        for &r in &ranks {
            let res = init.run(&d.matrix, &config(r, 0.05, data.seed)).map_err(|e| e.to_string())?;
            for (k, post) in posts.iter().enumerate() {
                let f = post.apply(&d, &res.factors, data.seed).map_err(|e| e.to_string())?;
                let e = relative_error(&d.matrix, &f).map_err(|e| e.to_string())?;
                rows[k].push(100.0 * e);
            }
        }
        for (post, errs) in posts.iter().zip(rows) {
            curves.push(Curve {
                initializer: init.name(),
                post_step: post.to_string(),
                relative_error_percent: errs,
            });
        }
    }
    serde_json::to_string(&Curves {
        dataset: d.name,
        ranks,
        curves,
    })
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Details {
    dataset: String,
    initializer: &'static str,
    rank: usize,
    svd_rank_used: usize,
    relative_error_percent: f64,
    sparsity_w: f64,
    sparsity_h: f64,
    /// `||X_p - WH||_F` over the correction loop, as a percentage of `||X||_F`.
    correction_trace_percent: Vec<f64>,
    correction_iters: usize,
    /// Row-major `m x r`, for drawing the factor as an image.
    w: Vec<f64>,
    m: usize,
}

/// One initialization in detail, including its factor `W`.
pub fn init_details_json(data: Data, init: &str, r: usize, delta: f64) -> Result<String, String> {
    let d = data.build()?;
    let init = parse_init(init)?;
    let res = init.run(&d.matrix, &config(r, delta, data.seed)).map_err(|e| e.to_string())?;
    let f = &res.factors;
    let norm = d.matrix.frobenius_norm();
    let sparsity = |a| nnsvd::sparsity(a).map_err(|e: nnsvd::Error| e.to_string());
    let details = Details {
        dataset: d.name.clone(),
        initializer: init.name(),
        rank: r,
        svd_rank_used: res.svd_rank_used,
        relative_error_percent: 100.0 * relative_error(&d.matrix, f).map_err(|e| e.to_string())?,
        sparsity_w: sparsity(f.w())?,
        sparsity_h: sparsity(f.h())?,
        correction_trace_percent: res
            .correction_trace
            .errors
            .iter()
            .map(|e| 100.0 * e / norm)
            .collect(),
        correction_iters: res.correction_trace.iterations,
        w: f.w().iter().copied().collect(),
        m: d.matrix.shape().0,
    };
    serde_json::to_string(&details).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Convergence {
    dataset: String,
    rank: usize,
    traces: Vec<Trace>,
}

#[derive(Serialize)]
struct Trace {
    initializer: &'static str,
    relative_error_percent: Vec<f64>,
}

/// Multiplicative-update error traces started from each initializer.
pub fn mu_convergence_json(data: Data, r: usize, iters: usize) -> Result<String, String> {
    let d = data.build()?;
    let opts = SolveOptions {
        max_iters: iters.clamp(1, 500),
        record_trace: true,
        seed: data.seed,
        ..SolveOptions::default()
    };
    let mut traces = Vec::new();
    for init in Initializer::ALL {
        let res = init.run(&d.matrix, &config(r, 0.05, data.seed)).map_err(|e| e.to_string())?;
        let out = mu_solve(&d.matrix, &res.factors, &opts).map_err(|e| e.to_string())?;
        traces.push(Trace {
            initializer: init.name(),
            relative_error_percent: out.trace.errors.iter().map(|e| 100.0 * e).collect(),
        });
    }
    serde_json::to_string(&Convergence {
        dataset: d.name,
        rank: r,
        traces,
    })
    .map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn error_curves(
    m: usize,
    n: usize,
    rank: usize,
    noise: f64,
    seed: u32,
    max_rank: usize,
    step: usize,
    nnls: bool,
) -> Result<String, JsValue> {
    let data = Data { m, n, rank, noise, seed: seed.into() };
    js(error_curves_json(data, max_rank, step, nnls))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn init_details(
    m: usize,
    n: usize,
    rank: usize,
    noise: f64,
    seed: u32,
    init: &str,
    r: usize,
    delta: f64,
) -> Result<String, JsValue> {
    let data = Data { m, n, rank, noise, seed: seed.into() };
    js(init_details_json(data, init, r, delta))
}

#[wasm_bindgen]
pub fn mu_convergence(
    m: usize,
    n: usize,
    rank: usize,
    noise: f64,
    seed: u32,
    r: usize,
    iters: usize,
) -> Result<String, JsValue> {
    let data = Data { m, n, rank, noise, seed: seed.into() };
    js(mu_convergence_json(data, r, iters))
}
