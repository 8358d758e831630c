use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use super::config::{ConfigError, ExperimentConfig};
use super::metrics::auc;
use super::run::{run_experiment, HarnessError, RunSummary};

/// Pseudo-key that switches between the ablation flags.
pub const ABLATION_KEY: &str = "ablation";
pub const ABLATIONS: [&str; 4] = ["none", "no_early_switch", "no_frontier_filter", "no_prioritization"];

pub const COMPARISON_HEADER: &str = "key,value,final_main_success_mean,final_main_success_se,\
final_random_success_mean,final_random_success_se,main_auc,random_auc";

/// Config for one sweep point, written to `<output_dir>/<key>_<value>`.
pub fn sweep_point(base: &ExperimentConfig, key: &str, value: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = base.clone();
    if key == ABLATION_KEY {
        if !ABLATIONS.contains(&value) {
            return Err(ConfigError::BadValue {
                key: key.into(),
                value: value.into(),
                reason: format!("expected one of {}", ABLATIONS.join(", ")),
            });
        }
        if value != "none" {
            cfg.set(value, "true")?;
        }
    } else if !ExperimentConfig::is_key(key) || matches!(key, "env" | "output_dir" | "threads") {
        return Err(ConfigError::UnknownKey(key.to_string()));
    } else {
        cfg.set(key, value)?;
        if key == "episode_length" {
            cfg.sierl.h1 = cfg.sierl.episode_length.saturating_sub(1);
            cfg.learner.target_update_period = cfg.sierl.episode_length as u64;
        }
    }
    cfg.output_dir = base.output_dir.join(format!("{key}_{value}"));
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub comparison: PathBuf,
    pub runs: Vec<(String, RunSummary)>,
}

/// One experiment per value plus `comparison.csv` in the base output
/// directory. All points are validated before any training starts.
pub fn sweep(base: &ExperimentConfig, key: &str, values: &[String]) -> Result<SweepSummary, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Input("sweep needs at least one value".into()));
    }
    let points: Vec<ExperimentConfig> = values.iter().map(|v| sweep_point(base, key, v)).collect::<Result<_, _>>()?;
    let mut runs = Vec::new();
    let mut csv = format!("{COMPARISON_HEADER}\n");
    for (value, cfg) in values.iter().zip(&points) {
        let summary = run_experiment(cfg)?;
        let last = summary.rows.last().expect("at least one evaluation");
        let _ = writeln!(
            csv,
            "{key},{value},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            last.main_mean,
            last.main_se,
            last.random_mean,
            last.random_se,
            auc(summary.rows.iter().map(|r| r.main_mean)),
            auc(summary.rows.iter().map(|r| r.random_mean)),
        );
        runs.push((value.clone(), summary));
    }
    let dir = base.resolved_output_dir();
    fs::create_dir_all(&dir).map_err(|source| HarnessError::Output { path: dir.clone(), source })?;
    let comparison = dir.join("comparison.csv");
    fs::write(&comparison, csv).map_err(|source| HarnessError::Output { path: comparison.clone(), source })?;
    Ok(SweepSummary { comparison, runs })
}
