use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{CommandFactory, Parser, Subcommand, ValueEnum};
use docprobe_core::llm::BackendKind;
use docprobe_core::pipeline::{
    evaluate_runs, load_labels, report, run_pipeline, EvaluateOptions, PipelineError, ReportFormat, RunDir,
    RunOptions, Stage,
};

/// Estimate the factual accuracy of code comments by testing them.
#[derive(Parser)]
#[command(name = "docprobe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Http,
    Mock,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
    Md,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipeline stages over a comments file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        comments: PathBuf,
        /// Comma-separated subset of: extract, retrieve, properties, gentests, execute, score, evaluate.
        #[arg(long)]
        stages: Option<String>,
        /// Weight on failing tests.
        #[arg(long)]
        w: Option<f64>,
        #[arg(long, value_enum)]
        backend: Option<Backend>,
        /// Resume or name a run; a fresh id is generated otherwise.
        #[arg(long)]
        run_id: Option<String>,
        /// Log every prompt and response to llm_trace.jsonl in the run directory.
        #[arg(long)]
        trace_llm: bool,
    },
    /// Compute metrics for one or more runs against labels.
    Evaluate {
        /// Run directory or run id; repeat to average over runs.
        #[arg(long = "run", required = true)]
        runs: Vec<String>,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        w: Option<f64>,
        /// Also report ROC-AUC and AP across the exponential w schedule.
        #[arg(long)]
        sweep: bool,
        #[arg(long, default_value = "runs")]
        runs_dir: PathBuf,
    },
    /// Write a per-comment report for a run.
    Report {
        #[arg(long)]
        run: String,
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long, default_value = "runs")]
        runs_dir: PathBuf,
        /// Output file, or `-` for stdout. Defaults to report.<format> in the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("docprobe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<u8, PipelineError> {
    match command {
        Command::Run {
            config,
            comments,
            stages,
            w,
            backend,
            run_id,
            trace_llm,
        } => {
            // A bad stage name is a usage error: report it the way clap would, with usage and status 2.
            let stages = match stages.as_deref().map(Stage::parse_list).transpose() {
                Ok(s) => s.unwrap_or_default(),
                Err(e) => Cli::command().error(ErrorKind::InvalidValue, e).exit(),
            };
            let opts = RunOptions {
                stages,
                w,
                backend: backend.map(|b| match b {
                    Backend::Http => BackendKind::Http,
                    Backend::Mock => BackendKind::Mock,
                }),
                run_id,
                trace_llm,
            };
            let summary = run_pipeline(&config, &comments, &opts)?;
            for (stage, (done, reused, failed)) in &summary.stages {
                eprintln!("{stage:>10}: {done} done, {reused} reused, {failed} failed");
            }
            for f in &summary.failures {
                eprintln!("  {} [{}]: {}", f.comment_id, f.stage, f.error);
            }
            if summary.harness_errors > 0 {
                eprintln!("{} test executions ended in harness errors", summary.harness_errors);
            }
            println!("{}", summary.run_dir.display());
            Ok(summary.exit_code() as u8)
        }
        Command::Evaluate {
            runs,
            labels,
            w,
            sweep,
            runs_dir,
        } => {
            let dirs = runs
                .iter()
                .map(|r| RunDir::locate(r, &runs_dir))
                .collect::<Result<Vec<_>, _>>()?;
            let labels = load_labels(&labels)?;
            let report = evaluate_runs(&dirs, &labels, &EvaluateOptions { w, sweep })?;
            if let [only] = dirs.as_slice() {
                report.save(only, &labels)?;
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Command::Report {
            run,
            format,
            runs_dir,
            out,
        } => {
            let run = RunDir::locate(&run, &runs_dir)?;
            let format = match format {
                Format::Csv => ReportFormat::Csv,
                Format::Json => ReportFormat::Json,
                Format::Md => ReportFormat::Md,
            };
            let text = report(&run, format)?;
            match out {
                Some(p) if p.as_os_str() == "-" => print!("{text}"),
                out => {
                    let path = out.unwrap_or_else(|| run.path.join(format!("report.{}", format.extension())));
                    std::fs::write(&path, text)?;
                    println!("{}", path.display());
                }
            }
            Ok(0)
        }
    }
}
