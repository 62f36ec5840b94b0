//! `lpkg`: ground graph patterns, verbalize them, build planner training
//! data and benchmarks, plan, execute and grade.

mod cmd;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lpkg_core::pattern::PatternType;

use crate::cmd::{Ctx, E2eOptions};
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult, StageExt};

#[derive(Parser)]
#[command(name = "lpkg", version, about = "Planning data and multi-answer QA benchmarks from knowledge graphs")]
struct Cli {
    /// TOML pipeline configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Knowledge graph file (overrides `kg` in the config).
    #[arg(long, global = true)]
    kg: Option<PathBuf>,
    /// Directory for all artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Replace every model endpoint with deterministic graph-backed stubs.
    #[arg(long, global = true)]
    stub: bool,
    /// Worker threads for per-item parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More logging (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic graph as TSV.
    SynthKg {
        #[arg(long, default_value_t = 2000)]
        entities: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file [default: <out>/synth.tsv].
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample pattern instances with gold answers.
    Ground {
        /// One pattern (1p, 2p, 3p, 2i, 3i, 2u, ip, pi, compare); all when omitted.
        #[arg(long)]
        pattern: Option<PatternType>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// [default: <out>/instances.jsonl]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Turn instances into sub-questions and a complex question.
    Verbalize {
        /// [default: <out>/instances.jsonl]
        #[arg(long)]
        input: Option<PathBuf>,
        /// [default: <out>/verbalized.jsonl]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Build planner fine-tuning examples.
    BuildTrain {
        /// [default: <out>/verbalized.jsonl]
        #[arg(long)]
        input: Option<PathBuf>,
        /// Examples per pattern.
        #[arg(long)]
        quota: Option<usize>,
        /// [default: <out>/train.jsonl]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a benchmark with gold answer sets.
    GenBench {
        /// Total items, keeping the default mix's proportions.
        #[arg(long)]
        scale: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSONL files whose `instance`/`hash` fields must not be reused.
        #[arg(long)]
        exclude: Vec<PathBuf>,
        /// [default: <out>/benchmark.json]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Produce plans for benchmark questions (or one --question).
    Plan {
        #[arg(long)]
        question: Option<String>,
        /// [default: <out>/benchmark.json]
        #[arg(long)]
        benchmark: Option<PathBuf>,
        /// [default: <out>/plans.jsonl]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run plans against the retriever and QA model.
    Execute {
        /// [default: <out>/plans.jsonl]
        #[arg(long)]
        plans: Option<PathBuf>,
        /// Benchmark for gold answers in traces [default: <out>/benchmark.json if present].
        #[arg(long)]
        benchmark: Option<PathBuf>,
        /// [default: <out>/traces.jsonl]
        #[arg(long)]
        traces: Option<PathBuf>,
        /// [default: <out>/predictions.jsonl]
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Grade predictions against a benchmark.
    Eval {
        /// [default: <out>/predictions.jsonl]
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// [default: <out>/benchmark.json]
        #[arg(long)]
        benchmark: Option<PathBuf>,
        /// [default: <out>/report.json]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Drop benchmark questions too similar to training questions.
    Leakage {
        /// [default: <out>/train.jsonl]
        #[arg(long)]
        train: Option<PathBuf>,
        /// [default: <out>/benchmark.json]
        #[arg(long)]
        benchmark: Option<PathBuf>,
        #[arg(long, default_value_t = lpkg_core::bench::LEAKAGE_THRESHOLD)]
        threshold: f64,
        /// [default: <out>/benchmark.filtered.json]
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Whole pipeline on one graph, graded at the end.
    E2e {
        /// Benchmark size.
        #[arg(long)]
        scale: usize,
        /// Training examples (and grounded instances) per pattern.
        #[arg(long, default_value_t = 20)]
        train_quota: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Minimum precision and recall [default: 1.0 with --stub, else 0].
        #[arg(long)]
        threshold: Option<f64>,
    },
}

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_env("LPKG_LOG").unwrap_or_else(|_| default.into());
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p).bad_input("config")?,
        None => PipelineConfig::default(),
    };
    if cli.kg.is_some() {
        cfg.kg = cli.kg.clone();
    }
    if let Some(jobs) = cli.jobs.or(cfg.jobs) {
        if jobs == 0 {
            return Err(CliError::usage("config", "--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .bad_input("config")?;
    }
    let out = cli.out.clone().or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Ctx {
        stub: cli.stub || cfg.stub,
        cfg,
        out,
    };
    let or = |p: Option<PathBuf>, name: &str| p.unwrap_or_else(|| ctx.path(name));
    let seed = |s: Option<u64>| s.unwrap_or(ctx.cfg.seed);
    match cli.command {
        Command::SynthKg { entities, seed: s, output } => cmd::synth_kg(entities, seed(s), &or(output, "synth.tsv")),
        Command::Ground {
            pattern,
            budget,
            seed: s,
            output,
        } => cmd::cmd_ground(
            &ctx,
            pattern,
            budget.unwrap_or(ctx.cfg.ground.budget),
            seed(s),
            &or(output, "instances.jsonl"),
        ),
        Command::Verbalize { input, output } => {
            cmd::cmd_verbalize(&ctx, &or(input, "instances.jsonl"), &or(output, "verbalized.jsonl"))
        }
        Command::BuildTrain { input, quota, output } => cmd::cmd_build_train(
            &ctx,
            &or(input, "verbalized.jsonl"),
            quota.unwrap_or(ctx.cfg.train.quota),
            &or(output, "train.jsonl"),
        ),
        Command::GenBench {
            scale,
            seed: s,
            exclude,
            output,
        } => cmd::cmd_gen_bench(&ctx, scale, seed(s), &exclude, &or(output, "benchmark.json")),
        Command::Plan {
            question,
            benchmark,
            output,
        } => cmd::cmd_plan(
            &ctx,
            question.as_deref(),
            &or(benchmark, "benchmark.json"),
            &or(output, "plans.jsonl"),
        ),
        Command::Execute {
            plans,
            benchmark,
            traces,
            predictions,
        } => cmd::cmd_execute(
            &ctx,
            &or(plans, "plans.jsonl"),
            Some(&or(benchmark, "benchmark.json")),
            &or(traces, "traces.jsonl"),
            &or(predictions, "predictions.jsonl"),
        ),
        Command::Eval {
            predictions,
            benchmark,
            output,
        } => cmd::cmd_eval(
            &or(predictions, "predictions.jsonl"),
            &or(benchmark, "benchmark.json"),
            &or(output, "report.json"),
        ),
        Command::Leakage {
            train,
            benchmark,
            threshold,
            output,
        } => {
            let output = or(output, "benchmark.filtered.json");
            let report = output.with_file_name("leakage.json");
            cmd::cmd_leakage(
                &or(train, "train.jsonl"),
                &or(benchmark, "benchmark.json"),
                threshold,
                &output,
                &report,
            )
        }
        Command::E2e {
            scale,
            train_quota,
            seed: s,
            threshold,
        } => {
            let threshold = threshold.unwrap_or(if ctx.stub { 1.0 } else { 0.0 });
            cmd::cmd_e2e(
                &ctx,
                &E2eOptions {
                    scale,
                    train_quota,
                    seed: seed(s),
                    threshold,
                },
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let result = run(cli);
    cmd::flush_stdout();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
