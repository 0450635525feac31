use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use tensorod::{
    bench, generate_data, load_csv, read_scores, roc_auc, run, write_dataset, Algorithm, BenchSuite, DataSource,
    ExecConfig, Hyperparams, Precision, RunConfig,
};

/// Outlier detection on CSV files or synthetic data.
#[derive(Parser, Debug)]
#[command(name = "tensorod", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a detector, score, evaluate and write results.
    Run(RunArgs),
    /// Time detectors over a grid of sizes and print a scaling table.
    Bench(BenchArgs),
    /// Write a synthetic dataset (Gaussian inliers, uniform outliers).
    Gen(GenArgs),
    /// ROC-AUC of a scores file against labels in a CSV.
    Eval(EvalArgs),
}

#[derive(Args, Debug, Clone)]
struct ExecArgs {
    /// Storage and compute precision: p64, p32 or p16.
    #[arg(long, env = "TOD_PRECISION", default_value = "p64")]
    precision: Precision,
    /// Block size cap for batched operators.
    #[arg(long, env = "TOD_BATCH_SIZE")]
    batch_size: Option<usize>,
    /// Workspace budget per worker: bytes, or with a K/M/G suffix (KB, MB, GB, KiB, MiB, GiB also accepted).
    #[arg(long, env = "TOD_MEMORY_BUDGET", default_value = "1G", value_parser = parse_bytes)]
    memory_budget: u64,
    #[arg(long, env = "TOD_WORKERS", default_value_t = 1)]
    workers: usize,
}

impl ExecArgs {
    fn config(&self) -> ExecConfig {
        ExecConfig {
            workers: self.workers,
            budget_bytes: self.memory_budget,
            batch_size: self.batch_size,
            ..ExecConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
struct DetectorArgs {
    /// Number of neighbours (knn, lof, abod). Defaults per algorithm.
    #[arg(long, env = "TOD_K")]
    k: Option<usize>,
    #[arg(long, env = "TOD_BINS", default_value_t = 10)]
    bins: usize,
    #[arg(long, env = "TOD_CONTAMINATION", default_value_t = 0.1)]
    contamination: f64,
    /// Evaluate neighbour distances at lower precision with exact results: off, p32 or p16.
    #[arg(long, env = "TOD_QUANTIZE", default_value = "off", value_parser = parse_quantize)]
    quantize: Quantize,
    /// Min-max scale features before neighbour search.
    #[arg(long, env = "TOD_MIN_MAX")]
    min_max: bool,
}

impl DetectorArgs {
    fn params(&self) -> Hyperparams {
        Hyperparams {
            k: self.k,
            bins: self.bins,
            contamination: self.contamination,
            quantize: self.quantize.0,
            min_max: self.min_max,
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SynthArgs {
    /// Training rows when no --input is given.
    #[arg(long, env = "TOD_N_TRAIN", default_value_t = 1000)]
    n_train: usize,
    #[arg(long, env = "TOD_N_TEST", default_value_t = 0)]
    n_test: usize,
    #[arg(long, env = "TOD_DIMS", default_value_t = 10)]
    dims: usize,
    /// Outlier fraction of the generated data.
    #[arg(long, env = "TOD_OUTLIER_FRACTION", default_value_t = 0.05)]
    outlier_fraction: f64,
    #[arg(long, env = "TOD_SEED", default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long, env = "TOD_ALGO", default_value = "knn")]
    algo: Algorithm,
    #[command(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// CSV with a header row. Without it, data is generated.
    #[arg(long, env = "TOD_INPUT")]
    input: Option<PathBuf>,
    #[arg(long, env = "TOD_LABEL_COLUMN")]
    label_column: Option<String>,
    #[command(flatten)]
    synth: SynthArgs,
    /// Scores CSV (`index,score`).
    #[arg(long, env = "TOD_OUTPUT")]
    output: Option<PathBuf>,
    /// JSON summary; defaults to the scores path with a `.json` extension.
    #[arg(long, env = "TOD_SUMMARY")]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "knn,hbos")]
    algos: Vec<Algorithm>,
    #[arg(long, value_delimiter = ',', default_value = "10000,20000,40000")]
    ns: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "10")]
    ds: Vec<usize>,
    /// Worker counts to sweep; defaults to --workers.
    #[arg(long, value_delimiter = ',')]
    worker_counts: Vec<usize>,
    /// Precisions to sweep; defaults to --precision.
    #[arg(long, value_delimiter = ',')]
    precisions: Vec<Precision>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, env = "TOD_SEED", default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    detector: DetectorArgs,
    #[command(flatten)]
    exec: ExecArgs,
    /// Write the full report as JSON.
    #[arg(long, env = "TOD_OUTPUT")]
    output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 1000)]
    n_train: usize,
    #[arg(long, default_value_t = 0)]
    n_test: usize,
    #[arg(long, default_value_t = 10)]
    dims: usize,
    #[arg(long, env = "TOD_CONTAMINATION", default_value_t = 0.1)]
    contamination: f64,
    #[arg(long, env = "TOD_SEED", default_value_t = 0)]
    seed: u64,
    /// Training split CSV (features plus a `label` column).
    #[arg(long)]
    output: PathBuf,
    /// Test split CSV, written when --n-test > 0.
    #[arg(long)]
    test_output: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Scores CSV (`index,score`).
    #[arg(long)]
    scores: PathBuf,
    /// CSV holding the labels.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "label")]
    label_column: String,
}

fn parse_bytes(s: &str) -> Result<u64, String> {
    let t = s.trim();
    let split = t.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num.parse().map_err(|_| format!("bad size `{s}`"))?;
    let mult: u64 = match unit.trim().to_ascii_uppercase().as_str() {
        "" | "B" => 1,
        "K" | "KB" | "KIB" => 1 << 10,
        "M" | "MB" | "MIB" => 1 << 20,
        "G" | "GB" | "GIB" => 1 << 30,
        other => return Err(format!("unknown size unit `{other}`")),
    };
    Ok((value * mult as f64).round() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Quantize(Option<Precision>);

fn parse_quantize(s: &str) -> Result<Quantize, String> {
    match s.to_ascii_lowercase().as_str() {
        "off" | "none" => Ok(Quantize(None)),
        "p32" => Ok(Quantize(Some(Precision::P32))),
        "p16" => Ok(Quantize(Some(Precision::P16))),
        other => Err(format!("unknown quantize mode `{other}` (expected off, p32 or p16)")),
    }
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let source = match &a.input {
        Some(path) => DataSource::Csv {
            path: path.clone(),
            label_column: a.label_column.clone(),
        },
        None => DataSource::Synthetic {
            n_train: a.synth.n_train,
            n_test: a.synth.n_test,
            d: a.synth.dims,
            contamination: a.synth.outlier_fraction,
            seed: a.synth.seed,
        },
    };
    let summary_path = a.summary.clone().or_else(|| a.output.as_ref().map(|p| p.with_extension("json")));
    let cfg = RunConfig {
        algo: a.algo,
        params: a.detector.params(),
        source,
        precision: a.exec.precision,
        exec: a.exec.config(),
        scores_path: a.output.clone(),
        summary_path: summary_path.clone(),
    };
    let s = run(&cfg)?;
    print!("{}", s.to_text());
    if let Some(p) = summary_path {
        println!("summary = {}", p.display());
    }
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let exec = a.exec.config();
    let suite = BenchSuite {
        algos: a.algos,
        ns: a.ns,
        ds: a.ds,
        workers: if a.worker_counts.is_empty() { vec![exec.workers] } else { a.worker_counts },
        precisions: if a.precisions.is_empty() { vec![a.exec.precision] } else { a.precisions },
        params: a.detector.params(),
        contamination: 0.05,
        seed: a.seed,
        budget_bytes: exec.budget_bytes,
        batch_size: exec.batch_size,
        repeats: a.repeats,
    };
    let report = bench(&suite);
    print!("{}", report.scaling_table());
    if let Some(p) = a.output {
        std::fs::write(&p, report.to_json()?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let (train, test) = generate_data(a.n_train, a.n_test, a.dims, a.contamination, a.seed)?;
    write_dataset(&a.output, &train)?;
    println!("wrote {} rows ({} outliers) to {}", train.n(), train.outliers(), a.output.display());
    if test.n() > 0 {
        let Some(p) = a.test_output else {
            bail!("--n-test > 0 needs --test-output");
        };
        write_dataset(&p, &test)?;
        println!("wrote {} rows ({} outliers) to {}", test.n(), test.outliers(), p.display());
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let scores = read_scores(&a.scores)?;
    let ds = load_csv(&a.input, Some(&a.label_column))?;
    let labels = ds.labels.expect("label column requested");
    println!("roc_auc = {:.6}", roc_auc(&scores, &labels)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Command::Run(a) => cmd_run(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Eval(a) => cmd_eval(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_sizes() {
        assert_eq!(parse_bytes("1024"), Ok(1024));
        assert_eq!(parse_bytes("64MB"), Ok(64 << 20));
        assert_eq!(parse_bytes("64 MiB"), Ok(64 << 20));
        assert_eq!(parse_bytes("1.5k"), Ok(1536));
        assert_eq!(parse_bytes("2G"), Ok(2 << 30));
        assert!(parse_bytes("12 parsecs").is_err());
        assert!(parse_bytes("MB").is_err());
    }

    #[test]
    fn quantize_modes() {
        assert_eq!(parse_quantize("off"), Ok(Quantize(None)));
        assert_eq!(parse_quantize("P16"), Ok(Quantize(Some(Precision::P16))));
        assert!(parse_quantize("p64").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
