//! Plain-text parameter dumps.
//!
//! ```text
//! sierl-checkpoint v1
//! env hallway2
//! config_hash 3f2a...
//! kind tabular
//! kernel 0
//! params 140
//! -1.0
//! ...
//! ```
//! Values use Rust's shortest round-trip float formatting, so a reload is
//! bit-exact.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::env::{env_from_token, AgentState, EnvError, GridSpec};

use super::{GoalQ, Learner, MlpQ, TabularQ};

const MAGIC: &str = "sierl-checkpoint v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("parameter count mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub env: String,
    pub config_hash: String,
    pub kind: String,
    pub kernel: usize,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn from_learner<L: Learner>(env: &str, config_hash: &str, kernel: usize, learner: &L) -> Self {
        Checkpoint {
            env: env.to_string(),
            config_hash: config_hash.to_string(),
            kind: learner.kind().to_string(),
            kernel,
            params: learner.parameters(),
        }
    }

    /// Rebuilds the learner the checkpoint was taken from.
    pub fn restore(&self) -> Result<(GridSpec, LoadedQ), CheckpointError> {
        let spec = env_from_token(&self.env)?;
        let q = match self.kind.as_str() {
            "tabular" => {
                let mut q = TabularQ::new(&spec);
                q.set_parameters(&self.params)?;
                LoadedQ::Tabular(q)
            }
            "mlp" => {
                let mut q = MlpQ::new(&spec, self.kernel, &mut ChaCha8Rng::seed_from_u64(0));
                q.set_parameters(&self.params)?;
                LoadedQ::Mlp(Box::new(q))
            }
            other => return Err(CheckpointError::Format(format!("unknown learner kind `{other}`"))),
        };
        Ok((spec, q))
    }
}

#[derive(Debug, Clone)]
pub enum LoadedQ {
    Tabular(TabularQ),
    Mlp(Box<MlpQ>),
}

impl GoalQ for LoadedQ {
    fn q_values(&self, s: AgentState, g: AgentState) -> [f64; 4] {
        match self {
            LoadedQ::Tabular(q) => q.q_values(s, g),
            LoadedQ::Mlp(q) => q.q_values(s, g),
        }
    }
}

pub fn write_checkpoint<W: Write>(mut w: W, ckpt: &Checkpoint) -> io::Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "env {}", ckpt.env)?;
    writeln!(w, "config_hash {}", ckpt.config_hash)?;
    writeln!(w, "kind {}", ckpt.kind)?;
    writeln!(w, "kernel {}", ckpt.kernel)?;
    writeln!(w, "params {}", ckpt.params.len())?;
    for p in &ckpt.params {
        writeln!(w, "{p:?}")?;
    }
    Ok(())
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Checkpoint, CheckpointError> {
    let mut lines = r.lines();
    let mut next = || -> Result<String, CheckpointError> {
        lines.next().ok_or_else(|| CheckpointError::Format("unexpected end of file".into()))?.map_err(Into::into)
    };
    if next()? != MAGIC {
        return Err(CheckpointError::Format("missing header".into()));
    }
    let mut field = |name: &str| -> Result<String, CheckpointError> {
        let line = next()?;
        line.strip_prefix(name)
            .and_then(|rest| rest.strip_prefix(' '))
            .map(str::to_string)
            .ok_or_else(|| CheckpointError::Format(format!("expected `{name}`, found `{line}`")))
    };
    let env = field("env")?;
    let config_hash = field("config_hash")?;
    let kind = field("kind")?;
    let kernel = field("kernel")?.parse().map_err(|_| CheckpointError::Format("bad kernel".into()))?;
    let n: usize = field("params")?.parse().map_err(|_| CheckpointError::Format("bad parameter count".into()))?;
    let mut params = Vec::with_capacity(n);
    for _ in 0..n {
        let line = next()?;
        params.push(line.trim().parse().map_err(|_| CheckpointError::Format(format!("bad value `{line}`")))?);
    }
    Ok(Checkpoint { env, config_hash, kind, kernel, params })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, ckpt)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    read_checkpoint(BufReader::new(File::open(path)?))
}
