use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{mega_preset, HerConfig, Method, NoveltyBonusConfig};
use crate::controller::{SierlConfig, SierlError, TrainerConfig};
use crate::env::{env_from_token, EnvError, GridSpec};
use crate::qlearn::{LearnerConfig, MlpQ};

/// Environment variable that anchors relative output directories.
pub const OUTPUT_ROOT_VAR: &str = "SIERL_OUTPUT_ROOT";

pub const DEFAULT_SEEDS: [u64; 10] =
    [18995728, 64493317, 49789456, 22114861, 50259734, 99918123, 71729146, 10365956, 83575762, 35232230];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl From<SierlError> for ConfigError {
    fn from(e: SierlError) -> Self {
        ConfigError::Invalid(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    Tabular,
    Mlp,
}

impl LearnerKind {
    pub fn name(self) -> &'static str {
        match self {
            LearnerKind::Tabular => "tabular",
            LearnerKind::Mlp => "mlp",
        }
    }
}

/// Per-environment defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvDefaults {
    pub f_thr: f64,
    pub episode_length: usize,
    pub replay_capacity: usize,
    pub total_steps: u64,
}

pub fn env_defaults(token: &str) -> Result<EnvDefaults, ConfigError> {
    let spec = env_from_token(token)?;
    let d = |f_thr, episode_length, replay_capacity, total_steps| EnvDefaults {
        f_thr,
        episode_length,
        replay_capacity,
        total_steps,
    };
    Ok(match token {
        "four_rooms" => d(0.8, 500, 300_000, 300_000),
        "bugtrap" => d(0.7, 500, 300_000, 300_000),
        "nine_rooms" | "nine_rooms_locked" => d(0.8, 1000, 600_000, 600_000),
        _ if token.starts_with("hallway") => {
            let k = (spec.width - 3) / 2;
            match k {
                0..=2 => d(0.9, 150, 100_000, 60_000),
                3..=4 => d(0.9, 300, 100_000, 150_000),
                _ => d(0.95, 400, 100_000, 250_000),
            }
        }
        _ => d(0.9, 4 * spec.width * spec.height, 100_000, 50_000),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: String,
    pub method: Method,
    pub learner_kind: LearnerKind,
    /// Convolution size for the network learner; 0 picks by grid size.
    pub conv_kernel: usize,
    pub total_steps: u64,
    pub eval_period: u64,
    pub seeds: Vec<u64>,
    pub sierl: SierlConfig,
    pub learner: LearnerConfig,
    pub mega_preset: bool,
    pub replay_capacity: usize,
    pub slip_prob: f64,
    pub her_ratio: f64,
    pub novelty_beta: f64,
    pub eval_main: usize,
    pub eval_random: usize,
    /// Steps between coverage snapshots; 0 keeps only the final one.
    pub coverage_period: u64,
    pub output_dir: PathBuf,
    /// Worker threads for per-seed runs; 0 uses the available cores.
    pub threads: usize,
}

/// Keys accepted by [`ExperimentConfig::set`], in canonical order.
pub const KEYS: [&str; 39] = [
    "env",
    "method",
    "learner",
    "conv_kernel",
    "total_steps",
    "eval_period",
    "seeds",
    "f_thr",
    "w_n",
    "w_c",
    "w_g",
    "w_r",
    "softmin_temp",
    "p_switch_novel",
    "p_switch_familiar",
    "n_thr",
    "h1",
    "episode_length",
    "frontier_percentile",
    "standardize_by_std",
    "no_early_switch",
    "no_frontier_filter",
    "no_prioritization",
    "mega_preset",
    "learning_rate",
    "discount",
    "batch_size",
    "target_update_period",
    "initial_collect_steps",
    "eps_start",
    "eps_end",
    "eps_decay_steps",
    "replay_capacity",
    "slip_prob",
    "her_ratio",
    "novelty_beta",
    "eval_main",
    "eval_random",
    "coverage_period",
];

/// Keys that do not influence results and are left out of the hash.
const RUNTIME_KEYS: [&str; 2] = ["output_dir", "threads"];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

pub fn parse_seeds(value: &str) -> Result<Vec<u64>, ConfigError> {
    value.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).map(|s| parse("seeds", s)).collect()
}

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(pairs)
}

impl ExperimentConfig {
    /// Defaults for `env` with the given method.
    pub fn for_env(env: &str, method: Method) -> Result<Self, ConfigError> {
        let d = env_defaults(env)?;
        let sierl = SierlConfig::new(d.f_thr, d.episode_length);
        Ok(ExperimentConfig {
            env: env.to_string(),
            method,
            learner_kind: LearnerKind::Tabular,
            conv_kernel: 0,
            total_steps: d.total_steps,
            eval_period: 1000,
            seeds: DEFAULT_SEEDS.to_vec(),
            sierl,
            learner: LearnerConfig::tabular(d.episode_length as u64),
            mega_preset: false,
            replay_capacity: d.replay_capacity,
            slip_prob: 0.0,
            her_ratio: HerConfig::default().ratio,
            novelty_beta: NoveltyBonusConfig::default().beta,
            eval_main: 10,
            eval_random: 10,
            coverage_period: 0,
            output_dir: PathBuf::from(format!("runs/{env}_{method}")),
            threads: 0,
        })
    }

    /// Builds a config from ordered `key = value` pairs; later pairs win.
    /// Episode-length dependent keys follow `episode_length` unless set.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self, ConfigError> {
        let last = |key: &str| pairs.iter().rev().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let env = last("env").ok_or_else(|| ConfigError::Invalid("missing `env`".into()))?;
        let method = match last("method") {
            Some(m) => {
                m.parse().map_err(|reason| ConfigError::BadValue { key: "method".into(), value: m.into(), reason })?
            }
            None => Method::Sierl,
        };
        let mut cfg = ExperimentConfig::for_env(env, method)?;
        if let Some(kind) = last("learner") {
            cfg.set("learner", kind)?;
        }
        let explicit: BTreeSet<&str> = pairs.iter().map(|(k, _)| k.as_str()).collect();
        for (k, v) in pairs {
            if k != "env" {
                cfg.set(k, v)?;
            }
        }
        let ep = cfg.sierl.episode_length;
        if !explicit.contains("h1") {
            cfg.sierl.h1 = ep.saturating_sub(1);
        }
        if !explicit.contains("target_update_period") {
            cfg.learner.target_update_period = ep as u64;
        }
        if !explicit.contains("output_dir") && explicit.contains("method") {
            cfg.output_dir = PathBuf::from(format!("runs/{}_{}", cfg.env, cfg.method));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        Self::from_pairs(&parse_config_text(text)?)
    }

    /// Sets one key; `env` is fixed at construction.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let s = &mut self.sierl;
        let l = &mut self.learner;
        match key {
            "env" => {
                if value != self.env {
                    return Err(ConfigError::Invalid("`env` cannot change after construction".into()));
                }
            }
            "method" => {
                self.method = value.parse().map_err(|reason| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                    reason,
                })?
            }
            "learner" => {
                let kind = match value {
                    "tabular" => LearnerKind::Tabular,
                    "mlp" => LearnerKind::Mlp,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: value.into(),
                            reason: "expected `tabular` or `mlp`".into(),
                        })
                    }
                };
                if kind != self.learner_kind {
                    let keep = l.clone();
                    *l = match kind {
                        LearnerKind::Tabular => LearnerConfig::tabular(keep.target_update_period),
                        LearnerKind::Mlp => LearnerConfig::network(keep.target_update_period),
                    };
                    self.learner_kind = kind;
                }
            }
            "conv_kernel" => self.conv_kernel = parse(key, value)?,
            "total_steps" => self.total_steps = parse(key, value)?,
            "eval_period" => self.eval_period = parse(key, value)?,
            "seeds" | "seed" => self.seeds = parse_seeds(value)?,
            "f_thr" => s.f_thr = parse(key, value)?,
            "w_n" => s.w_n = parse(key, value)?,
            "w_c" => s.w_c = parse(key, value)?,
            "w_g" => s.w_g = parse(key, value)?,
            "w_r" => s.w_r = parse(key, value)?,
            "softmin_temp" => s.softmin_temp = parse(key, value)?,
            "p_switch_novel" => s.p_switch_novel = parse(key, value)?,
            "p_switch_familiar" => s.p_switch_familiar = parse(key, value)?,
            "n_thr" => s.n_thr = parse(key, value)?,
            "h1" => s.h1 = parse(key, value)?,
            "episode_length" => s.episode_length = parse(key, value)?,
            "frontier_percentile" => s.frontier_percentile = parse(key, value)?,
            "standardize_by_std" => s.standardize_by_std = parse(key, value)?,
            "no_early_switch" => s.no_early_switch = parse(key, value)?,
            "no_frontier_filter" => s.no_frontier_filter = parse(key, value)?,
            "no_prioritization" => s.no_prioritization = parse(key, value)?,
            "mega_preset" => self.mega_preset = parse(key, value)?,
            "learning_rate" => l.learning_rate = parse(key, value)?,
            "discount" => l.discount = parse(key, value)?,
            "batch_size" => l.batch_size = parse(key, value)?,
            "target_update_period" => l.target_update_period = parse(key, value)?,
            "initial_collect_steps" => l.initial_collect_steps = parse(key, value)?,
            "eps_start" => l.eps_start = parse(key, value)?,
            "eps_end" => l.eps_end = parse(key, value)?,
            "eps_decay_steps" => l.eps_decay_steps = parse(key, value)?,
            "replay_capacity" => self.replay_capacity = parse(key, value)?,
            "slip_prob" => self.slip_prob = parse(key, value)?,
            "her_ratio" => self.her_ratio = parse(key, value)?,
            "novelty_beta" => self.novelty_beta = parse(key, value)?,
            "eval_main" => self.eval_main = parse(key, value)?,
            "eval_random" => self.eval_random = parse(key, value)?,
            "coverage_period" => self.coverage_period = parse(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "threads" => self.threads = parse(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn is_key(key: &str) -> bool {
        KEYS.contains(&key) || RUNTIME_KEYS.contains(&key) || key == "seed"
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        env_from_token(&self.env)?;
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.total_steps == 0 {
            return bad("total_steps must be positive");
        }
        if self.eval_period == 0 || !self.total_steps.is_multiple_of(self.eval_period) {
            return bad("eval_period must divide total_steps");
        }
        if self.coverage_period > 0 && !self.total_steps.is_multiple_of(self.coverage_period) {
            return bad("coverage_period must divide total_steps");
        }
        if !(0.0..=1.0).contains(&self.her_ratio) {
            return bad("her_ratio must lie in [0, 1]");
        }
        if self.novelty_beta.is_nan() || self.novelty_beta < 0.0 {
            return bad("novelty_beta must be non-negative");
        }
        if self.learner.eps_end > self.learner.eps_start {
            return bad("eps_end must not exceed eps_start");
        }
        if self.conv_kernel != 0 && self.conv_kernel.is_multiple_of(2) {
            return bad("conv_kernel must be odd");
        }
        self.trainer_config().validate()?;
        Ok(())
    }

    pub fn spec(&self) -> Result<GridSpec, ConfigError> {
        Ok(env_from_token(&self.env)?)
    }

    pub fn kernel(&self, spec: &GridSpec) -> usize {
        match self.learner_kind {
            LearnerKind::Tabular => 0,
            LearnerKind::Mlp if self.conv_kernel == 0 => MlpQ::default_kernel(spec),
            LearnerKind::Mlp => self.conv_kernel,
        }
    }

    /// The training loop configuration for this method.
    pub fn trainer_config(&self) -> TrainerConfig {
        let mut sierl = self.sierl.clone();
        if self.mega_preset {
            sierl = mega_preset(&sierl);
        }
        let mut base = TrainerConfig::new(self.learner.clone(), sierl, self.replay_capacity);
        base.slip_prob = self.slip_prob;
        let mut cfg = self.method.configure(&base);
        if let Some(her) = cfg.her.as_mut() {
            her.ratio = self.her_ratio;
        }
        if let Some(novelty) = cfg.novelty.as_mut() {
            novelty.beta = self.novelty_beta;
        }
        cfg
    }

    /// Current value of `key` in config-file syntax.
    pub fn get(&self, key: &str) -> Option<String> {
        let s = &self.sierl;
        let l = &self.learner;
        Some(match key {
            "env" => self.env.clone(),
            "method" => self.method.to_string(),
            "learner" => self.learner_kind.name().to_string(),
            "conv_kernel" => self.conv_kernel.to_string(),
            "total_steps" => self.total_steps.to_string(),
            "eval_period" => self.eval_period.to_string(),
            "seeds" | "seed" => self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            "f_thr" => s.f_thr.to_string(),
            "w_n" => s.w_n.to_string(),
            "w_c" => s.w_c.to_string(),
            "w_g" => s.w_g.to_string(),
            "w_r" => s.w_r.to_string(),
            "softmin_temp" => s.softmin_temp.to_string(),
            "p_switch_novel" => s.p_switch_novel.to_string(),
            "p_switch_familiar" => s.p_switch_familiar.to_string(),
            "n_thr" => s.n_thr.to_string(),
            "h1" => s.h1.to_string(),
            "episode_length" => s.episode_length.to_string(),
            "frontier_percentile" => s.frontier_percentile.to_string(),
            "standardize_by_std" => s.standardize_by_std.to_string(),
            "no_early_switch" => s.no_early_switch.to_string(),
            "no_frontier_filter" => s.no_frontier_filter.to_string(),
            "no_prioritization" => s.no_prioritization.to_string(),
            "mega_preset" => self.mega_preset.to_string(),
            "learning_rate" => l.learning_rate.to_string(),
            "discount" => l.discount.to_string(),
            "batch_size" => l.batch_size.to_string(),
            "target_update_period" => l.target_update_period.to_string(),
            "initial_collect_steps" => l.initial_collect_steps.to_string(),
            "eps_start" => l.eps_start.to_string(),
            "eps_end" => l.eps_end.to_string(),
            "eps_decay_steps" => l.eps_decay_steps.to_string(),
            "replay_capacity" => self.replay_capacity.to_string(),
            "slip_prob" => self.slip_prob.to_string(),
            "her_ratio" => self.her_ratio.to_string(),
            "novelty_beta" => self.novelty_beta.to_string(),
            "eval_main" => self.eval_main.to_string(),
            "eval_random" => self.eval_random.to_string(),
            "coverage_period" => self.coverage_period.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "threads" => self.threads.to_string(),
            _ => return None,
        })
    }

    /// Every result-relevant key as `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    /// SHA-256 of [`Self::to_text`], hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    /// `output_dir`, placed under `$SIERL_OUTPUT_ROOT` when relative.
    pub fn resolved_output_dir(&self) -> PathBuf {
        resolve_output(&self.output_dir)
    }
}

pub fn resolve_output(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_VAR) {
        Some(root) if path.is_relative() && !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(items: &[(&str, &str)]) -> Vec<(String, String)> {
        items.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn env_tables() {
        let c = ExperimentConfig::for_env("hallway6", Method::Sierl).unwrap();
        assert_eq!((c.sierl.f_thr, c.sierl.episode_length, c.total_steps), (0.95, 400, 250_000));
        assert_eq!(c.sierl.h1, 399);
        assert_eq!(c.learner.target_update_period, 400);
        let c = ExperimentConfig::for_env("bugtrap", Method::Sierl).unwrap();
        assert_eq!((c.sierl.f_thr, c.replay_capacity), (0.7, 300_000));
        assert_eq!(c.seeds.len(), 10);
    }

    #[test]
    fn overrides_apply_in_order() {
        let c = ExperimentConfig::from_pairs(&pairs(&[
            ("env", "hallway2"),
            ("episode_length", "100"),
            ("seeds", "1,2"),
            ("seed", "7, 8 ,9"),
            ("total_steps", "2000"),
        ]))
        .unwrap();
        assert_eq!(c.seeds, vec![7, 8, 9]);
        assert_eq!(c.sierl.h1, 99);
        assert_eq!(c.learner.target_update_period, 100);
    }

    #[test]
    fn text_roundtrip_and_hash() {
        let text = "env = hallway4 # comment\nmethod = her\n\nf_thr = 0.85\n";
        let c = ExperimentConfig::from_text(text).unwrap();
        assert_eq!(c.method, Method::Her);
        let back = ExperimentConfig::from_text(&c.to_text().to_string()).unwrap();
        assert_eq!(back.hash(), c.hash());
        let mut other = c.clone();
        other.sierl.f_thr = 0.9;
        assert_ne!(other.hash(), c.hash());
        other = c.clone();
        other.threads = 3;
        assert_eq!(other.hash(), c.hash());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            ExperimentConfig::from_pairs(&pairs(&[("env", "hallway2"), ("bogus", "1")])),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_pairs(&pairs(&[("env", "hallway2"), ("f_thr", "high")])),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(ExperimentConfig::from_pairs(&pairs(&[("env", "hallway2"), ("eval_period", "7")])).is_err());
        assert!(ExperimentConfig::from_pairs(&pairs(&[("env", "hallway2"), ("seeds", "")])).is_err());
        assert!(ExperimentConfig::from_pairs(&pairs(&[("env", "maze")])).is_err());
        assert!(ExperimentConfig::from_text("env hallway2").is_err());
    }

    #[test]
    fn method_settings_reach_trainer() {
        let mut c = ExperimentConfig::for_env("hallway2", Method::Her).unwrap();
        c.her_ratio = 0.5;
        assert_eq!(c.trainer_config().her.unwrap().ratio, 0.5);
        c.method = Method::Sierl;
        c.mega_preset = true;
        assert_eq!(c.trainer_config().sierl.w_n, -1.0);
    }

    #[test]
    fn learner_switch_keeps_period() {
        let c = ExperimentConfig::from_pairs(&pairs(&[("env", "hallway4"), ("learner", "mlp")])).unwrap();
        assert_eq!(c.learner.learning_rate, 3e-4);
        assert_eq!(c.learner.target_update_period, 300);
        let spec = c.spec().unwrap();
        assert_eq!(c.kernel(&spec), 3);
    }
}
