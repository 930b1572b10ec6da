//! Training runs, evaluation and the experiments built on them.

use std::fs;
use std::path::{Path, PathBuf};

use algd_core::train::{evaluate_policy, streams, EpochRecord, EvalSummary};
use algd_core::verify::{self, CheckReport, GridSpec, RunStats, Table};
use algd_core::{ActionVec, AgentState, EnvSpec, Guidance, NoiseSchedule, RngStream, SampleMode, Trainer};
use anyhow::{Context, Result};
use serde::Serialize;

use crate::checkpoint::{self, Progress};
use crate::config::RunConfig;
use crate::log::{write_table, LogWriter};

/// Eval key for end-of-run evaluations, disjoint from per-epoch keys.
const FINAL_EVAL_KEY: u64 = u64::MAX;
const RANDOM_EVAL_KEY: u64 = u64::MAX - 1;

/// Episodes used to estimate the random policy's return distribution. Goal
/// hits are rare under random actions, so a handful of episodes gives a very
/// noisy standard deviation.
pub const RANDOM_BASELINE_EPISODES: usize = 1000;

pub struct RunOutput {
    pub log: Vec<EpochRecord>,
    pub trainer: Trainer,
}

fn checkpoint_path(dir: &Path, tag: &str) -> PathBuf {
    dir.join("checkpoints").join(format!("{tag}.json"))
}

fn progress(t: &Trainer) -> Progress {
    Progress {
        epoch: t.epoch(),
        env_steps: t.env_steps(),
    }
}

/// Trains until the step budget is spent or `stop` returns true. With an
/// output directory the log, a copy of the config and checkpoints are
/// written there.
pub fn train_until(cfg: &RunConfig, out: Option<&Path>, mut stop: impl FnMut(&Trainer) -> bool) -> Result<RunOutput> {
    cfg.validate()?;
    let mut trainer = Trainer::new(cfg.train.clone(), cfg.env.clone())?;
    let mut writer = match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
            Some(LogWriter::create(&dir.join("log.csv"))?)
        }
        None => None,
    };
    let mut log = Vec::new();
    while !trainer.is_finished() && !stop(&trainer) {
        let row = trainer.run_epoch()?;
        if let Some(w) = writer.as_mut() {
            w.append(&row)?;
        }
        log.push(row);
        if let Some(dir) = out {
            if trainer.epoch() % cfg.checkpoint_every == 0 {
                let tag = format!("epoch_{:06}", trainer.epoch());
                checkpoint::save(&checkpoint_path(dir, &tag), &trainer.agent, cfg, progress(&trainer))?;
            }
        }
    }
    if let Some(dir) = out {
        checkpoint::save(&checkpoint_path(dir, "final"), &trainer.agent, cfg, progress(&trainer))?;
    }
    Ok(RunOutput { log, trainer })
}

pub fn train(cfg: &RunConfig, out: Option<&Path>) -> Result<RunOutput> {
    train_until(cfg, out, |_| false)
}

fn schedule_of(cfg: &RunConfig) -> Result<NoiseSchedule> {
    Ok(NoiseSchedule::new(cfg.train.diffusion_steps, cfg.train.sigma_min, cfg.train.sigma_max)?)
}

/// Eval-mode episodes of `agent` on streams keyed by `key`.
pub fn evaluate_agent(cfg: &RunConfig, agent: &AgentState, episodes: usize, key: u64) -> Result<EvalSummary> {
    let sch = schedule_of(cfg)?;
    let base = RngStream::new(cfg.train.seed, 0).derive(streams::EVAL).derive(key);
    Ok(evaluate_policy(&cfg.env, episodes, &base, |s, rng| agent.sample_action(s, &sch, rng, SampleMode::Eval))?)
}

pub fn evaluate_checkpoint(path: &Path, episodes: usize) -> Result<EvalSummary> {
    let ck = checkpoint::load(path)?;
    evaluate_agent(&ck.config, &ck.agent, episodes, FINAL_EVAL_KEY)
}

/// Uniform-random actions in the unit box.
pub fn evaluate_random(env: &EnvSpec, episodes: usize, seed: u64) -> Result<EvalSummary> {
    let base = RngStream::new(seed, 0).derive(streams::EVAL).derive(RANDOM_EVAL_KEY);
    let d = env.action_dim();
    Ok(evaluate_policy(env, episodes, &base, |_, rng| Ok(ActionVec((0..d).map(|_| rng.uniform_range(-1.0, 1.0)).collect())))?)
}

#[derive(Serialize)]
struct Metric<'a> {
    label: &'a str,
    value: f64,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    name: &'a str,
    pass: bool,
    metrics: Vec<Metric<'a>>,
    artifact_path: Option<&'a str>,
}

/// Writes `<name>.csv` (the data table) and `<name>.json` (the report) into
/// `dir` and records the CSV path in the report.
pub fn write_report(report: &mut CheckReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let csv = dir.join(format!("{}.csv", report.name));
    write_table(&csv, &report.table.header, &report.table.rows)?;
    report.artifact_path = Some(csv.display().to_string());
    let file = ReportFile {
        name: &report.name,
        pass: report.pass,
        metrics: report.metrics.iter().map(|(l, v)| Metric { label: l, value: *v }).collect(),
        artifact_path: report.artifact_path.as_deref(),
    };
    fs::write(dir.join(format!("{}.json", report.name)), serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

pub fn parse_state(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad state component {p:?}")))
        .collect()
}

/// Energy landscapes of a checkpointed agent at state `s`.
pub fn export_landscape(agent: &AgentState, s: &[f64], grid: &GridSpec, out: &Path) -> Result<CheckReport> {
    anyhow::ensure!(s.len() == agent.state_dim, "state has {} components, agent expects {}", s.len(), agent.state_dim);
    anyhow::ensure!(agent.action_dim == 2, "landscapes need a 2-D action space");
    let dual = agent.dual;
    let (std_t, aug_t) = verify::landscape_grids(&|a: &[f64]| agent.energy_eval(s, a), &dual, &dual, grid)?;
    landscape_report(&std_t, &aug_t, out)
}

/// Writes both grids and a report that passes iff every value is finite.
pub fn landscape_report(std_t: &Table, aug_t: &Table, out: &Path) -> Result<CheckReport> {
    fs::create_dir_all(out)?;
    let std_path = out.join("landscape_standard.csv");
    let aug_path = out.join("landscape_augmented.csv");
    write_table(&std_path, &std_t.header, &std_t.rows)?;
    write_table(&aug_path, &aug_t.header, &aug_t.rows)?;
    let finite = |t: &Table| t.rows.iter().flatten().all(|x| x.is_finite());
    let feasible = aug_t.rows.iter().filter(|r| r[4] > 0.5).count();
    let mut table = Table::new(&["rows", "finite_standard", "finite_augmented", "feasible_points"]);
    table.push(vec![std_t.rows.len() as f64, finite(std_t) as u8 as f64, finite(aug_t) as u8 as f64, feasible as f64]);
    let mut report = CheckReport {
        name: "landscape".into(),
        pass: finite(std_t) && finite(aug_t),
        metrics: vec![
            ("rows".into(), std_t.rows.len() as f64),
            ("feasible_points".into(), feasible as f64),
        ],
        table,
        artifact_path: None,
    };
    write_report(&mut report, out)?;
    report.artifact_path = Some(aug_path.display().to_string());
    Ok(report)
}

/// Per-seed results of the standard-vs-augmented comparison.
#[derive(Clone, Debug)]
pub struct AbSeed {
    pub seed: u64,
    pub standard: RunStats,
    pub augmented: RunStats,
    pub final_eval: EvalSummary,
    pub random_eval: EvalSummary,
}

pub struct AbOutcome {
    pub seeds: Vec<AbSeed>,
    /// Sustained feasibility and λ variance ordering.
    pub ordering: CheckReport,
    /// Final safety and return of the augmented variant.
    pub end_state: CheckReport,
}

/// Runs both guidance variants on every seed (in parallel threads) with
/// otherwise identical configuration. Per-run logs go to
/// `out/<variant>_seed<k>/` when `out` is given.
pub fn ab_stability_experiment(cfg: &RunConfig, seeds: &[u64], out: Option<&Path>) -> Result<AbOutcome> {
    let h = cfg.env.h;
    let jobs: Vec<(u64, Guidance)> = seeds
        .iter()
        .flat_map(|&s| [(s, Guidance::Standard), (s, Guidance::Augmented)])
        .collect();
    let results: Vec<Result<(u64, Guidance, RunOutput)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|&(seed, g)| {
                let mut c = cfg.clone();
                c.train.seed = seed;
                c.train.guidance = g;
                let dir = out.map(|d| d.join(format!("{}_seed{seed}", g.name())));
                scope.spawn(move || train(&c, dir.as_deref()).map(|r| (seed, g, r)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    let mut runs = Vec::new();
    for r in results {
        runs.push(r?);
    }

    let mut per_seed = Vec::new();
    for &seed in seeds {
        let find = |g: Guidance| runs.iter().find(|(s, v, _)| *s == seed && *v == g).map(|(_, _, r)| r).unwrap();
        let std_run = find(Guidance::Standard);
        let aug_run = find(Guidance::Augmented);
        let mut aug_cfg = cfg.clone();
        aug_cfg.train.seed = seed;
        aug_cfg.train.guidance = Guidance::Augmented;
        per_seed.push(AbSeed {
            seed,
            standard: verify::run_stats(&std_run.log, h),
            augmented: verify::run_stats(&aug_run.log, h),
            final_eval: evaluate_agent(&aug_cfg, &aug_run.trainer.agent, cfg.train.eval_episodes, FINAL_EVAL_KEY)?,
            random_eval: evaluate_random(&cfg.env, RANDOM_BASELINE_EPISODES, seed)?,
        });
    }

    let need = (seeds.len() * 4).div_ceil(5);
    let nan_or = |x: Option<u64>| x.map(|v| v as f64).unwrap_or(f64::NAN);

    let mut table = Table::new(&[
        "seed",
        "augmented_steps_to_feasibility",
        "standard_steps_to_feasibility",
        "augmented_lambda_var",
        "standard_lambda_var",
        "augmented_overshoot",
        "standard_overshoot",
    ]);
    let mut faster = 0;
    let mut calmer = 0;
    for r in &per_seed {
        faster += verify::feasible_no_later(&r.augmented, &r.standard) as usize;
        calmer += (r.augmented.trailing_lambda_var < r.standard.trailing_lambda_var) as usize;
        table.push(vec![
            r.seed as f64,
            nan_or(r.augmented.steps_to_feasibility),
            nan_or(r.standard.steps_to_feasibility),
            r.augmented.trailing_lambda_var,
            r.standard.trailing_lambda_var,
            r.augmented.trailing_overshoot,
            r.standard.trailing_overshoot,
        ]);
    }
    let ordering = CheckReport {
        name: "ab".into(),
        pass: faster >= need && calmer >= need,
        metrics: vec![
            ("seeds".into(), seeds.len() as f64),
            ("augmented_feasible_no_later".into(), faster as f64),
            ("augmented_lower_lambda_var".into(), calmer as f64),
            ("required".into(), need as f64),
        ],
        table,
        artifact_path: None,
    };

    let mut table = Table::new(&[
        "seed",
        "final_mean_cost",
        "final_mean_return",
        "random_mean_return",
        "random_sd_return",
        "safe",
        "beats_random",
    ]);
    let mut good = 0;
    for r in &per_seed {
        let safe = r.final_eval.mean_cost() <= 1.1 * h;
        let beats = r.final_eval.mean_return() >= r.random_eval.mean_return() + 3.0 * r.random_eval.sd_return();
        good += (safe && beats) as usize;
        table.push(vec![
            r.seed as f64,
            r.final_eval.mean_cost(),
            r.final_eval.mean_return(),
            r.random_eval.mean_return(),
            r.random_eval.sd_return(),
            safe as u8 as f64,
            beats as u8 as f64,
        ]);
    }
    let end_state = CheckReport {
        name: "end_state".into(),
        pass: good >= need,
        metrics: vec![
            ("seeds".into(), seeds.len() as f64),
            ("safe_and_better_than_random".into(), good as f64),
            ("required".into(), need as f64),
        ],
        table,
        artifact_path: None,
    };
    Ok(AbOutcome {
        seeds: per_seed,
        ordering,
        end_state,
    })
}
