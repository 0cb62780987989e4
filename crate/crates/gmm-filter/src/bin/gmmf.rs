//! Thin command-line front end over the experiment harness.
//!
//! - `gmmf run <config|builtin-name>` — simulate, filter, export artifacts
//! - `gmmf reduce <in.json> <out.json> --min --max --threshold`
//! - `gmmf metrics <truth.csv> <traces...>`
//!
//! Exit codes: 2 for configuration/usage problems, 1 for runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gmm_filter::harness::{
    compute_metrics, load_experiment, reduce_mixture_file, run_experiment, Method, MetricsReport,
    RunOverrides, BUILTIN_EXPERIMENT_NAMES,
};
use gmm_filter::Error;

#[derive(Parser)]
#[command(
    name = "gmmf",
    about = "Gaussian mixture filtering: experiments, mixture reduction, metrics",
    after_help = format!("Builtin experiments: {}", BUILTIN_EXPERIMENT_NAMES.join(", "))
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML/JSON config file or a builtin name.
    Run {
        /// Path to a configuration file, or a builtin experiment name.
        config: String,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured number of steps.
        #[arg(long)]
        steps: Option<usize>,
        /// Output directory (default: `out/<experiment-name>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated methods to run: gmmf,kalman,smc,naive.
        #[arg(long)]
        methods: Option<String>,
    },
    /// Reduce a JSON mixture file by greedy moment-preserving merges.
    Reduce {
        input: PathBuf,
        output: PathBuf,
        /// Minimum number of components to keep.
        #[arg(long, default_value_t = 1)]
        min: usize,
        /// Hard cap on the number of components.
        #[arg(long, default_value_t = 100)]
        max: usize,
        /// Merge-bound threshold: pairs below it keep merging.
        #[arg(long, default_value_t = 0.01)]
        threshold: f64,
    },
    /// Compute RMSE and component statistics from exported artifacts.
    Metrics {
        /// truth.csv written by `run`.
        truth: PathBuf,
        /// One or more `trace_<method>.csv` files.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            match e {
                Error::Config(_) | Error::Argument(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            steps,
            out,
            methods,
        } => {
            let cfg = load_experiment(&config)?;
            let overrides = RunOverrides {
                seed,
                steps,
                out_dir: out,
                methods: methods.as_deref().map(Method::parse_list).transpose()?,
            };
            let artifacts = run_experiment(&cfg, &overrides)?;
            println!("experiment: {}", cfg.name);
            println!("artifacts:  {}", artifacts.out_dir.display());
            print_metrics(&artifacts.metrics);
            Ok(())
        }
        Command::Reduce {
            input,
            output,
            min,
            max,
            threshold,
        } => {
            let report = reduce_mixture_file(&input, &output, min, max, threshold)?;
            println!(
                "reduced {} -> {} components ({} merges)",
                report.input_count, report.output_count, report.merges
            );
            match report.final_min_bound {
                Some(b) => println!("final min bound: {b}"),
                None => println!("final min bound: n/a (single component)"),
            }
            Ok(())
        }
        Command::Metrics { truth, traces } => {
            let report = compute_metrics(&truth, &traces)?;
            print_metrics(&report);
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn print_metrics(report: &MetricsReport) {
    println!(
        "{:<8} {:>14} {:>14} {:>10} {:>12} {:>10}",
        "method", "rmse(pred)", "rmse(filt)", "max comps", "log-lik", "runtime"
    );
    for (name, m) in &report.methods {
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
        println!(
            "{:<8} {:>14} {:>14} {:>10} {:>12.4} {:>10}",
            name,
            fmt(m.rmse_predicted),
            fmt(m.rmse_filtered),
            m.components_max,
            m.total_log_likelihood,
            m.runtime_seconds
                .map_or("-".to_string(), |s| format!("{s:.3}s")),
        );
    }
}
