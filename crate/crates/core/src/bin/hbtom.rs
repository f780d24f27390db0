use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use hbtom::episodes::{generate_pairs, Subtask, TaskFamily};
use hbtom::harness::{
    collect_metrics, evaluate_pairs, load_episode, load_episodes, load_weights, save_episodes, score_episode_traced,
    tune_classifiers, write_trace_csv, Config, Execution, HarnessError, TuningConfig,
};

#[derive(Parser)]
#[command(name = "hbtom", version, about = "Score gridworld episodes for agent plausibility")]
struct Cli {
    /// JSON config: inference priors, efficiency grid, weights, floor, clamp, workers, thresholds.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON classifier weights; overrides the config's weights.
    #[arg(long, global = true)]
    weights: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score one episode and print its plausibility report.
    Score {
        episode: PathBuf,
        /// Write the per-step posterior trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate paired episodes from a directory or manifest file.
    Eval {
        source: PathBuf,
        /// Write the full report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Score episodes on the calling thread only.
        #[arg(long)]
        sequential: bool,
    },
    /// Generate paired synthetic episodes.
    Generate {
        #[arg(long)]
        family: TaskFamily,
        /// Defaults to cycling through the family's subtasks.
        #[arg(long)]
        subtask: Option<Subtask>,
        #[arg(long)]
        pairs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the goal and efficiency classifiers on labeled episodes.
    Tune {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-4)]
        lambda: f64,
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,
    },
}

enum Failure {
    Threshold,
    Input(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Input(e.to_string())
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).expect("reports serialize");
    std::fs::write(path, text + "\n").map_err(|e| Failure::Input(format!("`{}`: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(p) = &cli.weights {
        config.weights = load_weights(p)?;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = load_config(&cli)?;
    match cli.command {
        Command::Score { episode, trace } => {
            let ep = load_episode(&episode)?;
            let (report, inference) = score_episode_traced(&ep, &config)?;
            if let Some(path) = trace {
                let inference = inference.ok_or_else(|| {
                    Failure::Input("no trace: the episode has zero likelihood under the model".into())
                })?;
                let file = File::create(&path).map_err(|e| Failure::Input(format!("`{}`: {e}", path.display())))?;
                write_trace_csv(&inference, BufWriter::new(file))
                    .map_err(|e| Failure::Input(format!("`{}`: {e}", path.display())))?;
            }
            println!("{}", serde_json::to_string_pretty(&report).expect("reports serialize"));
            Ok(())
        }
        Command::Eval {
            source,
            report,
            sequential,
        } => {
            let episodes = load_episodes(&source)?;
            let execution = if sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let result = evaluate_pairs(&episodes, &config, execution)?;
            print!("{}", result.render_table());
            if let Some(path) = report {
                write_json(&path, &result)?;
            }
            let failures = result.failures(&config.thresholds);
            for f in &failures {
                eprintln!(
                    "below threshold: {} {:.3} < {:.3}",
                    f.task, f.accuracy, f.min_accuracy
                );
            }
            if failures.is_empty() {
                Ok(())
            } else {
                Err(Failure::Threshold)
            }
        }
        Command::Generate {
            family,
            subtask,
            pairs,
            seed,
            out,
        } => {
            let generated =
                generate_pairs(family, subtask, pairs, seed).map_err(|e| Failure::Input(e.to_string()))?;
            let episodes: Vec<_> = generated.into_iter().flat_map(|(p, i)| [p, i]).collect();
            let paths = save_episodes(&out, &episodes)?;
            println!("wrote {} episodes to {}", paths.len(), out.display());
            Ok(())
        }
        Command::Tune {
            data,
            out,
            lambda,
            max_iters,
        } => {
            let episodes = load_episodes(&data)?;
            let metrics = collect_metrics(&episodes, &config, Execution::Parallel)?;
            let tuning = TuningConfig {
                lambda,
                max_iters,
                ..TuningConfig::default()
            };
            let result = tune_classifiers(&metrics, &config.weights, &tuning)?;
            write_json(&out, &result.weights)?;
            println!("{}", serde_json::to_string_pretty(&result.weights).expect("weights serialize"));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Threshold) => ExitCode::from(1),
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
