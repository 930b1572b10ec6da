//! Checkpoints: a JSON manifest plus a flat little-endian `f32` blob.
//!
//! The manifest lists every tensor with its shape and byte offset into the
//! blob, the dual state, optimizer step counts and the run configuration.
//! Stored parameters are always `f32`-representable, so a save/load cycle is
//! bit-exact.

use std::fs;
use std::path::{Path, PathBuf};

use algd_core::train::streams;
use algd_core::{AgentState, DualState, RngStream};
use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const FORMAT: &str = "algd-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualRecord {
    pub lambda: f64,
    pub rho: f64,
    pub h: f64,
    pub eta_lambda: f64,
}

impl From<DualState> for DualRecord {
    fn from(d: DualState) -> Self {
        Self {
            lambda: d.lambda,
            rho: d.rho,
            h: d.h,
            eta_lambda: d.eta_lambda,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub data_file: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub epoch: u64,
    pub env_steps: u64,
    pub grad_steps: u64,
    /// Adam step counts: score, q1, q2, then each cost member.
    pub adam_steps: Vec<u64>,
    pub dual: DualRecord,
    pub config: RunConfig,
    pub tensors: Vec<TensorEntry>,
}

/// Progress counters stored next to the agent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Progress {
    pub epoch: u64,
    pub env_steps: u64,
}

fn adam_steps(agent: &AgentState) -> Vec<u64> {
    let mut v = vec![agent.opt_score.t, agent.opt_q1.t, agent.opt_q2.t];
    v.extend(agent.opt_cost.iter().map(|o| o.t));
    v
}

/// Writes `<path>` (manifest) and the blob next to it with extension `bin`.
pub fn save(path: &Path, agent: &AgentState, cfg: &RunConfig, progress: Progress) -> Result<()> {
    let bin_path = path.with_extension("bin");
    let mut blob: Vec<u8> = Vec::new();
    let mut tensors = Vec::new();
    for (name, shape, data) in agent.named_tensors() {
        tensors.push(TensorEntry {
            name,
            shape,
            offset: blob.len() as u64,
        });
        for &x in data {
            blob.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        version: VERSION,
        data_file: bin_path.file_name().context("checkpoint path has no file name")?.to_string_lossy().into_owned(),
        state_dim: agent.state_dim,
        action_dim: agent.action_dim,
        epoch: progress.epoch,
        env_steps: progress.env_steps,
        grad_steps: agent.grad_steps,
        adam_steps: adam_steps(agent),
        dual: agent.dual.into(),
        config: cfg.clone(),
        tensors,
    };
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(&bin_path, &blob).with_context(|| format!("writing {}", bin_path.display()))?;
    fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// A loaded checkpoint.
pub struct Loaded {
    pub config: RunConfig,
    pub agent: AgentState,
    pub progress: Progress,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let text = fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let m: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
    ensure!(m.format == FORMAT, "{} is not a checkpoint manifest", path.display());
    ensure!(m.version == VERSION, "unsupported checkpoint version {}", m.version);
    let bin_path: PathBuf = path.with_file_name(&m.data_file);
    let blob = fs::read(&bin_path).with_context(|| format!("reading {}", bin_path.display()))?;

    let cfg = m.config.clone();
    let init = RngStream::new(cfg.train.seed, 0).derive(streams::INIT);
    let mut agent = AgentState::new(&cfg.train, m.state_dim, m.action_dim, m.dual.h, &init)?;

    let layout: Vec<(String, Vec<usize>)> = agent.named_tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
    ensure!(
        layout.len() == m.tensors.len(),
        "checkpoint has {} tensors, configuration expects {}",
        m.tensors.len(),
        layout.len()
    );
    for ((name, shape), dst) in layout.iter().zip(agent.tensors_mut()) {
        let Some(entry) = m.tensors.iter().find(|t| &t.name == name) else {
            bail!("checkpoint is missing tensor {name}");
        };
        ensure!(&entry.shape == shape, "tensor {name}: shape {:?}, expected {:?}", entry.shape, shape);
        let start = entry.offset as usize;
        let end = start + 4 * dst.len();
        ensure!(end <= blob.len(), "tensor {name} runs past the end of {}", bin_path.display());
        for (x, b) in dst.iter_mut().zip(blob[start..end].chunks_exact(4)) {
            *x = f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64;
        }
    }
    let steps = &m.adam_steps;
    ensure!(steps.len() == 3 + agent.opt_cost.len(), "adam_steps has the wrong length");
    agent.opt_score.t = steps[0];
    agent.opt_q1.t = steps[1];
    agent.opt_q2.t = steps[2];
    for (o, &t) in agent.opt_cost.iter_mut().zip(&steps[3..]) {
        o.t = t;
    }
    agent.grad_steps = m.grad_steps;
    agent.dual = DualState::new(m.dual.lambda, m.dual.rho, m.dual.h, m.dual.eta_lambda)?;
    Ok(Loaded {
        config: cfg,
        agent,
        progress: Progress {
            epoch: m.epoch,
            env_steps: m.env_steps,
        },
    })
}
