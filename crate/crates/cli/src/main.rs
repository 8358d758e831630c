use std::fs::{self, File};
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sierl::harness::{
    curves_svg, evaluate, export_coverage, parse_config_text, read_aggregate_csv, read_coverage_csv, resolve_output,
    run_experiment, sweep, ConfigError, Curve, ExperimentConfig, HarnessError,
};
use sierl::qlearn::load_checkpoint;

#[derive(Parser)]
#[command(name = "sierl", version, about = "Frontier sub-goal exploration experiments on gridworlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration over its seeds.
    Train(ConfigArgs),
    /// Run one experiment per value of a config key.
    Sweep {
        /// Key to vary (`ablation` switches between the ablation flags).
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Evaluate a saved checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        main_episodes: usize,
        #[arg(long, default_value_t = 10)]
        random_episodes: usize,
        /// Defaults to the environment's training episode length.
        #[arg(long)]
        episode_length: Option<usize>,
        #[arg(long, default_value_t = 0.0)]
        slip_prob: f64,
    },
    /// Render a coverage snapshot as CSV and SVG.
    Coverage {
        /// A `coverage.csv` written by `train`.
        #[arg(long)]
        input: PathBuf,
        /// Snapshot step; defaults to the last one.
        #[arg(long)]
        step: Option<u64>,
        /// Output path stem; `.csv` and `.svg` are appended.
        #[arg(long)]
        output: PathBuf,
    },
    /// Plot aggregate metric CSVs as learning curves.
    Plot {
        #[arg(long)]
        output: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides as `--key value` pairs, e.g. `--env hallway4 --seed 1,2`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

fn parse_overrides(raw: &[String]) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    let mut i = 0;
    while i < raw.len() {
        let flag = raw[i].strip_prefix("--").ok_or_else(|| anyhow!("expected `--key`, found `{}`", raw[i]))?;
        if let Some((k, v)) = flag.split_once('=') {
            pairs.push((k.replace('-', "_"), v.to_string()));
            i += 1;
            continue;
        }
        let mut values = Vec::new();
        i += 1;
        while i < raw.len() && !raw[i].starts_with("--") {
            values.push(raw[i].clone());
            i += 1;
        }
        if values.is_empty() {
            bail!("missing value for `--{flag}`");
        }
        pairs.push((flag.replace('-', "_"), values.join(",")));
    }
    Ok(pairs)
}

fn load_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut pairs = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config_text(&text)?
        }
        None => Vec::new(),
    };
    pairs.extend(parse_overrides(&args.overrides)?);
    Ok(ExperimentConfig::from_pairs(&pairs)?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let cfg = load_config(&args)?;
            let summary = run_experiment(&cfg)?;
            let last = summary.rows.last().expect("at least one evaluation");
            println!("metrics: {}", summary.metrics_path().display());
            println!(
                "final step {}: main_success {:.3} ± {:.3}, random_success {:.3} ± {:.3}",
                last.step, last.main_mean, last.main_se, last.random_mean, last.random_se
            );
        }
        Command::Sweep { param, values, config } => {
            let cfg = load_config(&config)?;
            let summary = sweep(&cfg, &param, &values)?;
            println!("comparison: {}", summary.comparison.display());
        }
        Command::Eval { checkpoint, seed, main_episodes, random_episodes, episode_length, slip_prob } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let (spec, q) = ckpt.restore()?;
            let episode_length = match episode_length {
                Some(n) => n,
                None => ExperimentConfig::for_env(&ckpt.env, sierl::Method::Sierl)?.sierl.episode_length,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = evaluate(&spec, &q, main_episodes, random_episodes, episode_length, slip_prob, &mut rng);
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Coverage { input, step, output } => {
            let file = File::open(&input).with_context(|| format!("reading {}", input.display()))?;
            let grids = read_coverage_csv(BufReader::new(file))?;
            let grid = match step {
                Some(s) => grids.iter().find(|g| g.step == s).ok_or_else(|| anyhow!("no snapshot at step {s}"))?,
                None => grids.last().ok_or_else(|| anyhow!("{} holds no snapshots", input.display()))?,
            };
            let stem = resolve_output(&output);
            if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
            export_coverage(grid, &stem)?;
            println!("coverage: {}", stem.with_extension("svg").display());
        }
        Command::Plot { output, inputs } => {
            let mut curves = Vec::new();
            for path in &inputs {
                let file = File::open(path).with_context(|| format!("reading {}", path.display()))?;
                let rows =
                    read_aggregate_csv(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))?;
                let label = match rows.first() {
                    Some(r) => format!("{} ({})", r.method, r.env),
                    None => path.display().to_string(),
                };
                curves.push(Curve { label, rows });
            }
            let svg = curves_svg(&curves)?;
            let output = resolve_output(&output);
            fs::write(&output, svg).with_context(|| format!("writing {}", output.display()))?;
            println!("plot: {}", output.display());
        }
    }
    Ok(())
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    if let Some(h) = e.downcast_ref::<HarnessError>() {
        return match h {
            HarnessError::Config(_) => "config",
            HarnessError::Output { .. } => "io",
            HarnessError::Checkpoint(_) => "checkpoint",
            HarnessError::Input(_) => "input",
        };
    }
    if e.downcast_ref::<ConfigError>().is_some() {
        "config"
    } else if e.downcast_ref::<sierl::qlearn::CheckpointError>().is_some() {
        "checkpoint"
    } else if e.downcast_ref::<sierl::harness::PlotError>().is_some() {
        "plot"
    } else if e.downcast_ref::<std::io::Error>().is_some() {
        "io"
    } else {
        "error"
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({ "error": error_kind(&e), "message": format!("{e:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
