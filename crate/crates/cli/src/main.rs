//! `eagle`: score, evaluate and study self-evaluation dumps from the command line.
//!
//! Every failure ends with a single JSON line on stderr,
//! `{"error":"<kind>","message":"<text>"}`, and a nonzero exit status
//! (2 for usage errors, 1 for everything else).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "eagle", version, about = "Layer-aggregated expectation confidence for LLM self-evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the confidence of every record in a dump.
    Score {
        dump: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// ECE and AUROC of one configuration on a labeled dump.
    Evaluate {
        dump: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        eval: EvalArgs,
        /// Also print per-bin reliability statistics.
        #[arg(long)]
        reliability: bool,
    },
    /// Compare last-layer, probability-averaging and logit-averaging variants
    /// under both decision rules.
    Ablate {
        dump: PathBuf,
        /// Depth of the last-n variants [default: from --tuned, else ceil(L/4)].
        #[arg(long, conflicts_with = "tuned")]
        k: Option<usize>,
        /// Read k from a file written by `eagle tune`.
        #[arg(long, value_name = "FILE")]
        tuned: Option<PathBuf>,
        #[command(flatten)]
        eval: EvalArgs,
    },
    /// Evaluate every contiguous layer range m:n.
    Sweep {
        dump: PathBuf,
        #[arg(long, value_enum, default_value_t = CombineArg::Logits)]
        combine: CombineArg,
        #[arg(long, value_enum, default_value_t = DecisionArg::Exp)]
        decision: DecisionArg,
        /// Number of equal-width ECE bins.
        #[arg(long, default_value_t = eagle_core::metrics::DEFAULT_BINS)]
        bins: usize,
        /// `csv` is long-form (start,end,ece,auroc); `table` prints an ECE grid.
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Choose the last-n depth k that minimizes ECE on a tuning dump.
    Tune {
        dump: PathBuf,
        /// Number of equal-width ECE bins.
        #[arg(long, default_value_t = eagle_core::metrics::DEFAULT_BINS)]
        bins: usize,
        /// Write the tuned configuration to FILE instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Pick the most confident candidate in each answer group.
    Select {
        dump: PathBuf,
        #[command(flatten)]
        method: MethodArgs,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Generate a synthetic dump.
    GenToy(GenToyArgs),
    /// Evaluate one configuration across dumps with different score ranges.
    StudyRange {
        #[arg(required = true)]
        dumps: Vec<PathBuf>,
        #[command(flatten)]
        method: MethodArgs,
        #[command(flatten)]
        eval: EvalArgs,
    },
}

/// Which layers to aggregate and how.
#[derive(Debug, Args)]
struct MethodArgs {
    /// Aggregate the last K layers [default: from --tuned, else ceil(L/4)].
    #[arg(long, conflicts_with_all = ["range", "tuned"])]
    k: Option<usize>,
    /// Aggregate the inclusive, zero-based layer range M:N.
    #[arg(long, value_name = "M:N", value_parser = parse_layer_range, conflicts_with = "tuned")]
    range: Option<(usize, usize)>,
    /// Average raw logits before the softmax, or average per-layer probabilities.
    #[arg(long, value_enum, default_value_t = CombineArg::Logits)]
    combine: CombineArg,
    /// Report the expected score or the most probable score.
    #[arg(long, value_enum, default_value_t = DecisionArg::Exp)]
    decision: DecisionArg,
    /// Read k from a file written by `eagle tune`.
    #[arg(long, value_name = "FILE")]
    tuned: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Number of equal-width ECE bins.
    #[arg(long, default_value_t = eagle_core::metrics::DEFAULT_BINS)]
    bins: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Debug, Args)]
struct GenToyArgs {
    /// Planted-confidence records (the default).
    #[arg(long, conflicts_with = "transformer")]
    planted: bool,
    /// Records from a small random transformer.
    #[arg(long)]
    transformer: bool,
    /// Seed for all randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of records.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    /// Number of layers [default: 8 planted, 6 transformer].
    #[arg(long)]
    layers: Option<usize>,
    /// Score range lo-hi; score s is emitted by token s.
    #[arg(long, default_value = "0-9")]
    scores: String,
    /// Planted: noise scale on the signal layers.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Planted: how many final layers carry the signal [default: all].
    #[arg(long)]
    signal_layers: Option<usize>,
    /// Planted: content of the layers before the signal layers.
    #[arg(long, value_enum, default_value_t = EarlyArg::Pure)]
    early: EarlyArg,
    /// Planted: noise scale on the early layers [default: --sigma].
    #[arg(long)]
    early_sigma: Option<f64>,
    /// Transformer: parameter seed [default: --seed].
    #[arg(long)]
    model_seed: Option<u64>,
    /// Transformer: vocabulary size.
    #[arg(long, default_value_t = 32)]
    vocab_size: usize,
    /// Transformer: hidden width.
    #[arg(long, default_value_t = 16)]
    model_dim: usize,
    /// Transformer: feed-forward width.
    #[arg(long, default_value_t = 32)]
    ffn_dim: usize,
    /// Output path; stdout when omitted.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CombineArg {
    Logits,
    Prob,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecisionArg {
    Exp,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EarlyArg {
    /// Noise only.
    Pure,
    /// Signal plus noise.
    Noisy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

fn parse_layer_range(s: &str) -> Result<(usize, usize), String> {
    let (m, n) = s
        .split_once(':')
        .ok_or_else(|| format!("expected M:N, got `{s}`"))?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    Ok((parse(m)?, parse(n)?))
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let first = rendered.lines().next().unwrap_or("invalid usage");
            let message = first.strip_prefix("error: ").unwrap_or(first);
            eprint!("{rendered}");
            eprintln!("{}", error_line("usage", message));
            return ExitCode::from(2);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            ExitCode::FAILURE
        }
    }
}
