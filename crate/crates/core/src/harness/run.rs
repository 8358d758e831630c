use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::controller::{EpisodeEvent, Trainer, TrainingHooks};
use crate::env::GridSpec;
use crate::qlearn::{save_checkpoint, Checkpoint, CheckpointError, Learner, MlpQ, TabularQ};

use super::config::{ConfigError, ExperimentConfig, LearnerKind};
use super::coverage::{coverage_svg, write_coverage_rows, CoverageGrid, COVERAGE_HEADER};
use super::metrics::{aggregate, write_aggregate_csv, write_seed_csv, AggregateRow};
use super::{evaluate, EvalReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot write to {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{0}")]
    Input(String),
}

fn io_at(path: &Path) -> impl FnOnce(io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Output { path: path.to_path_buf(), source }
}

/// Everything one seed produced.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub reports: Vec<EvalReport>,
    pub final_coverage: CoverageGrid,
    pub episodes: u64,
    pub main_goal_episodes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub rows: Vec<AggregateRow>,
    pub seeds: Vec<SeedRun>,
}

impl RunSummary {
    pub fn metrics_path(&self) -> PathBuf {
        self.dir.join("metrics.csv")
    }
}

#[derive(Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogLine<'a> {
    Episode(&'a EpisodeEvent),
    Eval { step: u64, main_success: f64, random_success: f64 },
}

struct EventLog<W: Write> {
    out: W,
    error: Option<io::Error>,
}

impl<W: Write> EventLog<W> {
    fn write(&mut self, line: &LogLine) {
        if self.error.is_some() {
            return;
        }
        let res =
            serde_json::to_writer(&mut self.out, line).map_err(io::Error::from).and_then(|_| self.out.write_all(b"\n"));
        if let Err(e) = res {
            self.error = Some(e);
        }
    }
}

impl<W: Write> TrainingHooks for EventLog<W> {
    fn on_episode(&mut self, event: &EpisodeEvent) {
        self.write(&LogLine::Episode(event));
    }
}

/// Training stream 0 and evaluation stream 1 of the same seed.
pub fn seed_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let train = ChaCha8Rng::seed_from_u64(seed);
    let mut eval = ChaCha8Rng::seed_from_u64(seed);
    eval.set_stream(1);
    (train, eval)
}

fn run_seed_with<L: Learner>(
    cfg: &ExperimentConfig,
    spec: &GridSpec,
    learner: L,
    seed: u64,
    dir: Option<&Path>,
) -> Result<SeedRun, HarnessError> {
    let (train_rng, mut eval_rng) = seed_rngs(seed);
    let mut trainer = Trainer::new(spec.clone(), learner, cfg.trainer_config(), train_rng)
        .map_err(|e| HarnessError::Config(e.into()))?;
    let ep_len = cfg.sierl.episode_length;

    let (events_path, coverage_path) = match dir {
        Some(d) => (Some(d.join("events.jsonl")), Some(d.join("coverage.csv"))),
        None => (None, None),
    };
    let events: Box<dyn Write> = match &events_path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(io_at(p))?)),
        None => Box::new(io::sink()),
    };
    let mut log = EventLog { out: events, error: None };
    let mut coverage_out: Vec<u8> = Vec::new();
    writeln!(coverage_out, "{COVERAGE_HEADER}").expect("in-memory write");

    let eval_now = |trainer: &Trainer<L>, rng: &mut ChaCha8Rng| {
        let mut r = evaluate(spec, trainer.learner(), cfg.eval_main, cfg.eval_random, ep_len, cfg.slip_prob, rng);
        r.step = trainer.global_step();
        r
    };
    let mut reports = vec![eval_now(&trainer, &mut eval_rng)];
    log.write(&LogLine::Eval {
        step: 0,
        main_success: reports[0].main_success,
        random_success: reports[0].random_success,
    });

    while trainer.global_step() < cfg.total_steps {
        trainer.step(&mut log);
        let step = trainer.global_step();
        if step % cfg.eval_period == 0 {
            let r = eval_now(&trainer, &mut eval_rng);
            log.write(&LogLine::Eval { step, main_success: r.main_success, random_success: r.random_success });
            reports.push(r);
        }
        let snapshot = step == cfg.total_steps || (cfg.coverage_period > 0 && step % cfg.coverage_period == 0);
        if snapshot {
            let grid = CoverageGrid::new(spec, step, trainer.coverage());
            write_coverage_rows(&mut coverage_out, &grid).expect("in-memory write");
        }
    }
    let final_coverage = CoverageGrid::new(spec, trainer.global_step(), trainer.coverage());

    if let Some(d) = dir {
        if let Some(e) = log.error.take() {
            return Err(HarnessError::Output { path: events_path.unwrap(), source: e });
        }
        log.out.flush().map_err(io_at(events_path.as_deref().unwrap()))?;
        let cov = coverage_path.unwrap();
        fs::write(&cov, &coverage_out).map_err(io_at(&cov))?;
        let svg = d.join("coverage.svg");
        fs::write(&svg, coverage_svg(&final_coverage)).map_err(io_at(&svg))?;
        let mut seed_csv = Vec::new();
        write_seed_csv(&mut seed_csv, &reports).expect("in-memory write");
        let metrics = d.join("metrics.csv");
        fs::write(&metrics, seed_csv).map_err(io_at(&metrics))?;
        let ckpt = Checkpoint::from_learner(&cfg.env, &cfg.hash(), cfg.kernel(spec), trainer.learner());
        save_checkpoint(&d.join("checkpoint.txt"), &ckpt)?;
        let table = d.join("visitation.csv");
        let file = File::create(&table).map_err(io_at(&table))?;
        trainer.experience().table().write_csv(BufWriter::new(file)).map_err(io_at(&table))?;
    }
    let log_summary = trainer.log();
    Ok(SeedRun {
        seed,
        reports,
        final_coverage,
        episodes: log_summary.episodes,
        main_goal_episodes: log_summary.main_goal_episodes,
    })
}

/// Trains and evaluates one seed. With `dir`, per-seed artifacts are
/// written there.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, dir: Option<&Path>) -> Result<SeedRun, HarnessError> {
    let spec = cfg.spec()?;
    match cfg.learner_kind {
        LearnerKind::Tabular => run_seed_with(cfg, &spec, TabularQ::new(&spec), seed, dir),
        LearnerKind::Mlp => {
            let mut init = ChaCha8Rng::seed_from_u64(seed);
            init.set_stream(2);
            let q = MlpQ::new(&spec, cfg.kernel(&spec), &mut init);
            run_seed_with(cfg, &spec, q, seed, dir)
        }
    }
}

fn worker_count(cfg: &ExperimentConfig) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let wanted = if cfg.threads == 0 { available } else { cfg.threads };
    wanted.clamp(1, cfg.seeds.len())
}

/// Runs all seeds (in parallel) without touching the filesystem.
pub fn run_seeds(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>, HarnessError> {
    cfg.validate()?;
    run_all(cfg, None)
}

fn run_all(cfg: &ExperimentConfig, root: Option<&Path>) -> Result<Vec<SeedRun>, HarnessError> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SeedRun, HarnessError>>>> =
        Mutex::new((0..cfg.seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..worker_count(cfg) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = cfg.seeds.get(i) else { break };
                let dir = root.map(|r| r.join(format!("seed_{seed}")));
                let res = match &dir {
                    Some(d) => fs::create_dir_all(d).map_err(io_at(d)).and_then(|_| run_seed(cfg, seed, Some(d))),
                    None => run_seed(cfg, seed, None),
                };
                results.lock().unwrap()[i] = Some(res);
            });
        }
    });
    results.into_inner().unwrap().into_iter().map(|r| r.expect("every seed ran")).collect()
}

/// Full experiment: per-seed artifacts under `seed_<n>/`, plus
/// `config.txt` and the aggregate `metrics.csv` in the run directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let dir = cfg.resolved_output_dir();
    fs::create_dir_all(&dir).map_err(io_at(&dir))?;
    let config_path = dir.join("config.txt");
    fs::write(&config_path, format!("# hash {}\n{}", cfg.hash(), cfg.to_text())).map_err(io_at(&config_path))?;

    let seeds = run_all(cfg, Some(&dir))?;
    let curves: Vec<Vec<EvalReport>> = seeds.iter().map(|s| s.reports.clone()).collect();
    let rows = aggregate(cfg.method.name(), &cfg.env, &curves);
    let mut csv = Vec::new();
    write_aggregate_csv(&mut csv, &rows).expect("in-memory write");
    let metrics = dir.join("metrics.csv");
    fs::write(&metrics, csv).map_err(io_at(&metrics))?;
    Ok(RunSummary { dir, rows, seeds })
}
