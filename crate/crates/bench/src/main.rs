use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nnsvd::{
    ahals_solve, mu_solve, nnls_update_h, relative_error, sparsity, FactorPair, InitConfig,
    Initializer, SolveOptions,
};
use nnsvd_bench::data::{self, write_dense_csv, DataSource, Dataset, Format};
use nnsvd_bench::experiment::{self, ExperimentFile};
use nnsvd_bench::BenchError;

#[derive(Parser)]
#[command(name = "nnsvd", version, about = "SVD-based NMF initializations: run, solve, benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one initialization and report error, sparsity and time.
    Init(InitArgs),
    /// Initialize, then run a solver for a fixed iteration budget.
    Solve(SolveArgs),
    /// Run a full experiment and write result rows as CSV (plus plot JSON).
    Bench(BenchArgs),
    /// Convert an image directory or CSV into a matrix file (.mtx or .csv).
    Convert(ConvertArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Input path (file or image directory) or synthetic:MxN:RANK:NOISE:SEED.
    #[arg(long)]
    data: String,
    /// pgm, png, csv or mtx; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<Format>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset, BenchError> {
        DataSource::parse(&self.data, self.format)?.load()
    }
}

#[derive(Args)]
struct InitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value = "nnsvd-lrc")]
    init: Initializer,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the correction-loop error trace.
    #[arg(long)]
    trace: bool,
    /// Directory to write W.csv and H.csv into.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    rank: usize,
    #[arg(long, default_value = "nnsvd-lrc")]
    init: Initializer,
    /// Solver: mu, hals (accelerated) or nnls (one exact H update).
    #[arg(long, default_value = "mu")]
    post: String,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0.05)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Print the relative error after every iteration.
    #[arg(long)]
    trace: bool,
    /// Directory to write W.csv and H.csv into.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML experiment file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<String>,
    #[arg(long)]
    format: Option<String>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    ranks: Option<Vec<usize>>,
    /// Comma-separated initializer names.
    #[arg(long, value_delimiter = ',')]
    init: Option<Vec<String>>,
    /// Comma-separated post-steps: none, nnls, hals, mu:K.
    #[arg(long, value_delimiter = ',')]
    post: Option<Vec<String>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Result CSV; plot data goes next to it with a .json extension.
    #[arg(long)]
    out: PathBuf,
    /// Also print every row to stdout.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct ConvertArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Output file; .mtx writes Matrix Market, .csv writes dense CSV.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Init(a) => run_init(a),
        Command::Solve(a) => run_solve(a),
        Command::Bench(a) => run_bench(a),
        Command::Convert(a) => run_convert(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn describe(d: &Dataset) {
    let (m, n) = d.matrix.shape();
    println!(
        "data        {} ({}, {m}x{n}, sparsity {:.2}%)",
        d.name,
        d.kind,
        100.0 * d.sparsity()
    );
}

fn report(d: &Dataset, f: &FactorPair) -> Result<(), BenchError> {
    println!(
        "rel. error  {:.2}%",
        100.0 * relative_error(&d.matrix, f)?
    );
    println!(
        "sparsity    W {:.2}%  H {:.2}%",
        100.0 * sparsity(f.w())?,
        100.0 * sparsity(f.h())?
    );
    Ok(())
}

fn write_factors(dir: &Path, f: &FactorPair) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::Io {
        path: dir.into(),
        source: e,
    })?;
    write_dense_csv(&dir.join("W.csv"), f.w())?;
    write_dense_csv(&dir.join("H.csv"), f.h())
}

fn init_config(rank: usize, delta: f64, seed: u64) -> InitConfig {
    InitConfig {
        delta,
        seed,
        ..InitConfig::new(rank)
    }
}

fn run_init(a: InitArgs) -> Result<(), BenchError> {
    let d = a.data.load()?;
    describe(&d);
    let res = a.init.run(&d.matrix, &init_config(a.rank, a.delta, a.seed))?;
    println!("init        {} r={} (svd rank {})", a.init, a.rank, res.svd_rank_used);
    report(&d, &res.factors)?;
    println!("time        {:.4} s", res.wall_time);
    if a.init == Initializer::NnsvdLrc {
        println!("correction  {} iterations", res.correction_trace.iterations);
        if a.trace {
            for (k, e) in res.correction_trace.errors.iter().enumerate() {
                println!("  e_{k} = {e:.6e}");
            }
        }
    }
    if let Some(dir) = &a.out {
        write_factors(dir, &res.factors)?;
    }
    Ok(())
}

fn run_solve(a: SolveArgs) -> Result<(), BenchError> {
    let d = a.data.load()?;
    describe(&d);
    let res = a.init.run(&d.matrix, &init_config(a.rank, a.delta, a.seed))?;
    println!("init        {} r={} ({:.4} s)", a.init, a.rank, res.wall_time);
    println!(
        "            {:.2}%",
        100.0 * relative_error(&d.matrix, &res.factors)?
    );
    let opts = SolveOptions {
        max_iters: a.iters,
        seed: a.seed,
        ..SolveOptions::default()
    };
    let clock = Instant::now();
    let (factors, trace) = match a.post.as_str() {
        "mu" => {
            let s = mu_solve(&d.matrix, &res.factors, &opts)?;
            (s.factors, s.trace.errors)
        }
        "hals" => {
            let s = ahals_solve(&d.matrix, &res.factors, &opts)?;
            (s.factors, s.trace.errors)
        }
        "nnls" => {
            let h = nnls_update_h(&d.matrix, res.factors.w(), res.factors.h())?;
            let f = FactorPair::new(res.factors.w().clone(), h)?;
            let e = relative_error(&d.matrix, &f)?;
            (f, vec![e])
        }
        "none" => (res.factors.clone(), Vec::new()),
        other => {
            return Err(BenchError::Config(format!(
                "unknown solver {other:?} (mu, hals, nnls, none)"
            )))
        }
    };
    let elapsed = clock.elapsed().as_secs_f64();
    if a.trace {
        for (k, e) in trace.iter().enumerate() {
            println!("  iter {k:>4}  {:.4}%", 100.0 * e);
        }
    }
    println!("solver      {} ({:.4} s)", a.post, elapsed);
    report(&d, &factors)?;
    if let Some(dir) = &a.out {
        write_factors(dir, &factors)?;
    }
    Ok(())
}

fn run_bench(a: BenchArgs) -> Result<(), BenchError> {
    let file = match &a.config {
        Some(p) => ExperimentFile::read(p)?,
        None => ExperimentFile::default(),
    };
    let over = ExperimentFile {
        data: a.data,
        format: a.format,
        synthetic: None,
        initializers: a.init,
        ranks: a.ranks,
        post_steps: a.post,
        reps: a.reps,
        seed: a.seed,
        delta: a.delta,
    };
    let merged = file.merge(over);
    let merged = if merged.data.is_some() {
        ExperimentFile {
            synthetic: None,
            ..merged
        }
    } else {
        merged
    };
    let spec = merged.into_spec()?;
    let dataset = spec.source.load()?;
    describe(&dataset);
    let out = experiment::run_experiment(&spec, &dataset);
    experiment::emit_csv(&out.rows, &a.out)?;
    experiment::emit_plotdata(&out.rows, &experiment::plot_path_for(&a.out))?;
    if a.trace {
        for r in &out.rows {
            println!(
                "{:<10} r={:<4} {:<7} {:>7.2}%  W {:.3}  H {:.3}  {:.4} s",
                r.initializer,
                r.rank,
                r.post_step,
                r.relative_error_percent,
                r.sparsity_w,
                r.sparsity_h,
                r.wall_time_s
            );
        }
    }
    println!("wrote {} rows to {}", out.rows.len(), a.out.display());
    match out.failure {
        None => Ok(()),
        Some(e) => Err(e),
    }
}

fn run_convert(a: ConvertArgs) -> Result<(), BenchError> {
    let d = a.data.load()?;
    describe(&d);
    data::save(&a.out, &d.matrix)?;
    println!("wrote {}", a.out.display());
    Ok(())
}
