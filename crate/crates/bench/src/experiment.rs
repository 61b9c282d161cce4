//! Experiment specification, the runner, and CSV / plot-data output.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nnsvd::{
    ahals_solve, mu_solve, nnls_update_h, relative_error, sparsity, FactorPair, InitConfig,
    InitResult, Initializer, SolveOptions,
};
use serde::{Deserialize, Serialize};

use crate::data::{DataSource, Dataset, Format, SyntheticSpec};
use crate::error::{BenchError, Result};

/// What runs after the initialization before the row is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PostStep {
    None,
    /// `H <- argmin_{H >= 0} ||X - W H||`.
    Nnls,
    /// One plain HALS iteration (one sweep over `W`, one over `H`).
    Hals,
    /// This many multiplicative-update iterations.
    Mu(usize),
}

impl FromStr for PostStep {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "none" => return Ok(PostStep::None),
            "nnls" => return Ok(PostStep::Nnls),
            "hals" => return Ok(PostStep::Hals),
            _ => {}
        }
        if let Some(k) = s.strip_prefix("mu:") {
            if let Ok(k) = k.parse::<usize>() {
                if k > 0 {
                    return Ok(PostStep::Mu(k));
                }
            }
        }
        Err(BenchError::Config(format!(
            "unknown post-step {s:?} (none, nnls, hals, mu:K)"
        )))
    }
}

impl fmt::Display for PostStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PostStep::None => f.write_str("none"),
            PostStep::Nnls => f.write_str("nnls"),
            PostStep::Hals => f.write_str("hals"),
            PostStep::Mu(k) => write!(f, "mu:{k}"),
        }
    }
}

impl PostStep {
    /// Applies the step to `init` against `x`.
    pub fn apply(self, dataset: &Dataset, init: &FactorPair, seed: u64) -> Result<FactorPair> {
        let x = &dataset.matrix;
        Ok(match self {
            PostStep::None => init.clone(),
            PostStep::Nnls => {
                let h = nnls_update_h(x, init.w(), init.h())?;
                FactorPair::new(init.w().clone(), h)?
            }
            PostStep::Hals => {
                let opts = SolveOptions {
                    max_iters: 1,
                    max_inner_sweeps: Some(1),
                    record_trace: false,
                    seed,
                    ..SolveOptions::default()
                };
                ahals_solve(x, init, &opts)?.factors
            }
            PostStep::Mu(k) => {
                let opts = SolveOptions {
                    max_iters: k,
                    record_trace: false,
                    seed,
                    ..SolveOptions::default()
                };
                mu_solve(x, init, &opts)?.factors
            }
        })
    }
}

/// Declarative experiment file. Every field can also come from the CLI.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub data: Option<String>,
    pub format: Option<String>,
    pub synthetic: Option<SyntheticSpec>,
    pub initializers: Option<Vec<String>>,
    pub ranks: Option<Vec<usize>>,
    pub post_steps: Option<Vec<String>>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
    pub delta: Option<f64>,
}

impl ExperimentFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        let mut file: ExperimentFile =
            toml::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        // Relative data paths are relative to the experiment file.
        if let (Some(data), Some(dir)) = (&file.data, path.parent()) {
            if !data.starts_with("synthetic:") && Path::new(data).is_relative() {
                file.data = Some(dir.join(data).to_string_lossy().into_owned());
            }
        }
        Ok(file)
    }

    /// Fields set in `over` replace those in `self`.
    pub fn merge(self, over: ExperimentFile) -> ExperimentFile {
        ExperimentFile {
            data: over.data.or(self.data),
            format: over.format.or(self.format),
            synthetic: over.synthetic.or(self.synthetic),
            initializers: over.initializers.or(self.initializers),
            ranks: over.ranks.or(self.ranks),
            post_steps: over.post_steps.or(self.post_steps),
            reps: over.reps.or(self.reps),
            seed: over.seed.or(self.seed),
            delta: over.delta.or(self.delta),
        }
    }

    pub fn into_spec(self) -> Result<ExperimentSpec> {
        let format = self.format.as_deref().map(str::parse::<Format>).transpose()?;
        let source = match (self.data, self.synthetic) {
            (Some(_), Some(_)) => {
                return Err(BenchError::Config("give either data or synthetic, not both".into()))
            }
            (Some(d), None) => DataSource::parse(&d, format)?,
            (None, Some(s)) => DataSource::Synthetic(s),
            (None, None) => return Err(BenchError::Config("no data source".into())),
        };
        let initializers = match self.initializers {
            None => Initializer::ALL.to_vec(),
            Some(list) => list
                .iter()
                .map(|s| s.parse::<Initializer>().map_err(BenchError::Core))
                .collect::<Result<_>>()?,
        };
        let post_steps = match self.post_steps {
            None => vec![PostStep::None],
            Some(list) => list.iter().map(|s| s.parse()).collect::<Result<_>>()?,
        };
        let spec = ExperimentSpec {
            source,
            initializers,
            ranks: self.ranks.unwrap_or_default(),
            post_steps,
            reps: self.reps.unwrap_or(5),
            seed: self.seed.unwrap_or(0),
            delta: self.delta.unwrap_or(0.05),
        };
        spec.check_static()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub source: DataSource,
    pub initializers: Vec<Initializer>,
    /// Strictly increasing.
    pub ranks: Vec<usize>,
    pub post_steps: Vec<PostStep>,
    /// Timed repetitions per initialization; one extra warm-up run is discarded.
    pub reps: usize,
    pub seed: u64,
    pub delta: f64,
}

impl ExperimentSpec {
    fn check_static(&self) -> Result<()> {
        if self.ranks.is_empty() {
            return Err(BenchError::Config("rank grid is empty".into()));
        }
        if self.ranks.windows(2).any(|w| w[0] >= w[1]) || self.ranks[0] == 0 {
            return Err(BenchError::Config(format!(
                "ranks {:?} must be positive and strictly increasing",
                self.ranks
            )));
        }
        if self.initializers.is_empty() || self.post_steps.is_empty() {
            return Err(BenchError::Config("need at least one initializer and post-step".into()));
        }
        if self.reps == 0 {
            return Err(BenchError::Config("reps must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(BenchError::Config(format!("delta {} not in (0, 1)", self.delta)));
        }
        Ok(())
    }

    /// Checks the grid against the loaded data: every rank `<= min(m, n) - 1`.
    pub fn validate_for(&self, dataset: &Dataset) -> Result<()> {
        self.check_static()?;
        let (m, n) = dataset.matrix.shape();
        let max = m.min(n).saturating_sub(1);
        if let Some(&r) = self.ranks.iter().find(|&&r| r > max) {
            return Err(BenchError::Config(format!(
                "rank {r} exceeds {max} = min(m, n) - 1 for {m}x{n} data"
            )));
        }
        Ok(())
    }

    fn init_config(&self, rank: usize) -> InitConfig {
        InitConfig {
            delta: self.delta,
            seed: self.seed,
            ..InitConfig::new(rank)
        }
    }
}

/// One measured cell. Field names are the CSV header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub initializer: String,
    pub rank: usize,
    pub post_step: String,
    /// `100 ||X - WH|| / ||X||`, rounded to two decimals.
    pub relative_error_percent: f64,
    #[serde(rename = "sparsity_W")]
    pub sparsity_w: f64,
    #[serde(rename = "sparsity_H")]
    pub sparsity_h: f64,
    /// Median initialization time over the repetitions plus the post-step time.
    pub wall_time_s: f64,
    pub correction_iters: usize,
}

pub const CSV_HEADER: [&str; 9] = [
    "dataset",
    "initializer",
    "rank",
    "post_step",
    "relative_error_percent",
    "sparsity_W",
    "sparsity_H",
    "wall_time_s",
    "correction_iters",
];

impl ResultRow {
    fn sort_key(&self) -> (String, usize, usize, PostStep) {
        let init = Initializer::ALL
            .iter()
            .position(|i| i.name() == self.initializer)
            .unwrap_or(usize::MAX);
        let post = self.post_step.parse().unwrap_or(PostStep::Mu(usize::MAX));
        (self.dataset.clone(), init, self.rank, post)
    }

    /// Same row with the timing column cleared, for reproducibility checks.
    pub fn without_timing(&self) -> ResultRow {
        ResultRow {
            wall_time_s: 0.0,
            ..self.clone()
        }
    }
}

/// Orders rows by dataset, initializer, rank, post-step.
pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by_cached_key(ResultRow::sort_key);
}

pub fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Rows produced so far, plus the error that stopped the run if any.
#[derive(Debug)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub failure: Option<BenchError>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Runs one initialization `reps + 1` times and keeps the first result and
/// the median time of the last `reps` runs.
pub fn timed_init(
    init: Initializer,
    dataset: &Dataset,
    cfg: &InitConfig,
    reps: usize,
) -> Result<(InitResult, f64)> {
    let x = &dataset.matrix;
    let first = init.run(x, cfg)?;
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let clock = Instant::now();
        let again = init.run(x, cfg)?;
        times.push(clock.elapsed().as_secs_f64());
        debug_assert_eq!(again.factors, first.factors);
    }
    Ok((first, median(times)))
}

/// Runs every (initializer, rank, post-step) cell serially. On an error the
/// rows finished so far are returned together with it.
pub fn run_experiment(spec: &ExperimentSpec, dataset: &Dataset) -> RunOutput {
    let mut rows = Vec::new();
    let failure = run_into(spec, dataset, &mut rows).err();
    sort_rows(&mut rows);
    RunOutput { rows, failure }
}

fn run_into(spec: &ExperimentSpec, dataset: &Dataset, rows: &mut Vec<ResultRow>) -> Result<()> {
    spec.validate_for(dataset)?;
    let x = &dataset.matrix;
    for &init in &spec.initializers {
        for &rank in &spec.ranks {
            let cfg = spec.init_config(rank);
            let (res, init_time) = if init == Initializer::Random {
                let clock = Instant::now();
                let res = init.run(x, &cfg)?;
                let t = clock.elapsed().as_secs_f64();
                (res, t)
            } else {
                timed_init(init, dataset, &cfg, spec.reps)?
            };
            for &post in &spec.post_steps {
                let clock = Instant::now();
                let f = post.apply(dataset, &res.factors, spec.seed)?;
                let post_time = clock.elapsed().as_secs_f64();
                rows.push(ResultRow {
                    dataset: dataset.name.clone(),
                    initializer: init.name().to_string(),
                    rank,
                    post_step: post.to_string(),
                    relative_error_percent: round2(100.0 * relative_error(x, &f)?),
                    sparsity_w: sparsity(f.w())?,
                    sparsity_h: sparsity(f.h())?,
                    wall_time_s: init_time + post_time,
                    correction_iters: res.correction_trace.iterations,
                });
            }
        }
    }
    Ok(())
}

pub fn write_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)
        .map_err(|e| BenchError::Output(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| BenchError::Output(e.to_string()))?;
    }
    w.flush().map_err(|e| BenchError::Output(e.to_string()))
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    write_csv(file, rows)
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| BenchError::Output(e.to_string()))?;
    if header.iter().ne(CSV_HEADER) {
        return Err(BenchError::Output(format!("unexpected CSV header {header:?}")));
    }
    r.deserialize()
        .map(|row| row.map_err(|e| BenchError::Output(e.to_string())))
        .collect()
}

pub fn parse_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let file = std::fs::File::open(path).map_err(|e| BenchError::io(path, e))?;
    read_csv(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub initializer: String,
    pub post_step: String,
    pub rank: Vec<usize>,
    pub relative_error_percent: Vec<f64>,
    pub sparsity_w: Vec<f64>,
    pub sparsity_h: Vec<f64>,
    pub wall_time_s: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub dataset: String,
    pub series: Vec<Series>,
}

/// Groups rows per dataset, one series per (initializer, post-step) in
/// canonical order.
pub fn plot_data(rows: &[ResultRow]) -> Vec<PlotData> {
    let mut rows = rows.to_vec();
    sort_rows(&mut rows);
    let mut out: Vec<PlotData> = Vec::new();
    let mut groups: BTreeMap<(String, usize, String), Series> = BTreeMap::new();
    let mut order: Vec<(String, usize, String)> = Vec::new();
    for row in &rows {
        let (_, init_key, _, _) = row.sort_key();
        let key = (row.dataset.clone(), init_key, row.post_step.clone());
        let s = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key.clone());
            Series {
                initializer: row.initializer.clone(),
                post_step: row.post_step.clone(),
                rank: Vec::new(),
                relative_error_percent: Vec::new(),
                sparsity_w: Vec::new(),
                sparsity_h: Vec::new(),
                wall_time_s: Vec::new(),
            }
        });
        s.rank.push(row.rank);
        s.relative_error_percent.push(row.relative_error_percent);
        s.sparsity_w.push(row.sparsity_w);
        s.sparsity_h.push(row.sparsity_h);
        s.wall_time_s.push(row.wall_time_s);
    }
    for key in order {
        let series = groups.remove(&key).unwrap();
        match out.last_mut() {
            Some(p) if p.dataset == key.0 => p.series.push(series),
            _ => out.push(PlotData {
                dataset: key.0,
                series: vec![series],
            }),
        }
    }
    out
}

pub fn emit_plotdata(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| BenchError::io(path, e))?;
    serde_json::to_writer_pretty(file, &plot_data(rows)).map_err(|e| BenchError::Output(e.to_string()))
}

/// `results.csv` -> `results.json`.
pub fn plot_path_for(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}
