use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use sfma::experiment::{self, PlotAxis};
use sfma::metrics::{self, BenchmarkSummary, TraceEnsemble};
use sfma::problem::{brute_force_optima, InstanceMeta, LossyCompressionProblem, OracleResult};

#[derive(Parser)]
#[command(name = "sfma", version, about = "Factorization-machine annealing for black-box binary optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exhaustive optimum of a lossy-compression instance.
    Oracle {
        /// W matrix CSV (with a `.json` sidecar).
        #[arg(long, conflicts_with_all = ["n", "d", "k_factor"])]
        w: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        k_factor: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSON path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every instance × algorithm × sample of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summarize a directory of JSON-lines traces.
    Aggregate {
        #[arg(long)]
        traces: PathBuf,
        /// Oracle JSON supplying the optimum.
        #[arg(long, conflicts_with = "y_star")]
        oracle: Option<PathBuf>,
        #[arg(long)]
        y_star: Option<f64>,
        /// Output path stem; writes `<out>.csv` and `<out>.json`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Plot data from a summary JSON.
    Export {
        #[arg(long)]
        summary: PathBuf,
        #[arg(long, default_value = "dataset_size")]
        axis: String,
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Oracle { w, n, d, k_factor, seed, out } => {
            let problem = match (w, n, d, k_factor) {
                (Some(path), ..) => LossyCompressionProblem::load(&path)?.0,
                (None, Some(n), Some(d), Some(k_factor)) => {
                    LossyCompressionProblem::synthetic(InstanceMeta { n, d, k_factor, seed })?
                }
                _ => bail!("give --w <csv> or all of --n, --d, --k-factor"),
            };
            let result = brute_force_optima(&problem)?;
            let json = serde_json::to_string_pretty(&result)?;
            match out {
                Some(path) => std::fs::write(path, json)?,
                None => println!("{json}"),
            }
            Ok(true)
        }
        Command::Run { config, out, jobs, seed } => {
            let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let base = config.parent().map(PathBuf::from).unwrap_or_default();
            let mut cfg = experiment::parse_config_in(&text, &base)?;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if jobs.is_some() {
                cfg.jobs = jobs;
            }
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            let bundle = experiment::run_experiment(&cfg)?;
            for (inst, per_alg) in &bundle.summaries {
                for (alg, s) in per_alg {
                    let n_conv = s.n_conv.map_or("None".to_string(), |n| n.to_string());
                    println!("{inst}\t{alg}\tN_conv={n_conv}\tfinal={}", s.final_success_rate);
                }
            }
            let failures = bundle.manifest.failures();
            if failures > 0 {
                eprintln!("{failures} run(s) failed; see {}/manifest.json", bundle.output_dir.display());
            }
            Ok(bundle.all_succeeded())
        }
        Command::Aggregate { traces, oracle, y_star, out } => {
            let y_star = match (oracle, y_star) {
                (Some(path), _) => read_json::<OracleResult>(&path)?.y_opt_1st,
                (None, Some(v)) => v,
                (None, None) => bail!("give --oracle or --y-star"),
            };
            let traces = experiment::load_traces(&traces)?;
            let summary = metrics::aggregate(&TraceEnsemble { traces: &traces, y_star })?;
            summary.write_csv(std::fs::File::create(out.with_extension("csv"))?)?;
            std::fs::write(out.with_extension("json"), serde_json::to_string_pretty(&summary)?)?;
            Ok(true)
        }
        Command::Export { summary, axis, oracle, out, svg } => {
            let axis: PlotAxis = axis.parse()?;
            let summary: BenchmarkSummary = read_json(&summary)?;
            let oracle: Option<OracleResult> = oracle.as_ref().map(read_json).transpose()?;
            std::fs::write(out, experiment::export_plot_data(&summary, axis, oracle.as_ref()))?;
            if let Some(path) = svg {
                std::fs::write(path, experiment::render_svg(&summary, axis))?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
