use alloc::vec::Vec;

use super::agent::{AgentState, CriticLosses, SampleMode, ScoreUpdate};
use super::config::TrainConfig;
use super::streams;
use crate::env::{EnvSpec, EnvState};
use crate::error::Result;
use crate::net::AdamConfig;
use crate::replay::{ActionVec, ReplayBuffer, Transition};
use crate::rng::RngStream;
use crate::schedule::NoiseSchedule;

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: u64,
    pub env_steps: u64,
    /// Mean return of episodes that finished during the epoch.
    pub train_return: Option<f64>,
    pub train_episode_cost: Option<f64>,
    pub eval_return: Option<f64>,
    pub eval_episode_cost: Option<f64>,
    pub lambda: f64,
    pub score_loss: Option<f64>,
    pub q_loss: Option<f64>,
    pub qc_loss: Option<f64>,
    pub mean_ess: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSummary {
    pub returns: Vec<f64>,
    pub costs: Vec<f64>,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    libm::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64)
}

impl EvalSummary {
    pub fn mean_return(&self) -> f64 {
        mean(&self.returns)
    }

    pub fn mean_cost(&self) -> f64 {
        mean(&self.costs)
    }

    /// Sample standard deviation of the episode returns.
    pub fn sd_return(&self) -> f64 {
        sd(&self.returns)
    }

    pub fn sd_cost(&self) -> f64 {
        sd(&self.costs)
    }
}

#[derive(Default)]
struct Accum {
    returns: Vec<f64>,
    costs: Vec<f64>,
    score_loss: f64,
    q_loss: f64,
    qc_loss: f64,
    ess: f64,
    updates: u64,
}

/// Runs the interleaved collect / update loop for one seed.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub env: EnvSpec,
    pub schedule: NoiseSchedule,
    pub agent: AgentState,
    pub buffer: ReplayBuffer,
    adam: AdamConfig,
    env_state: EnvState,
    episode_return: f64,
    env_rng: RngStream,
    act_rng: RngStream,
    batch_rng: RngStream,
    update_rng: RngStream,
    env_steps: u64,
    epoch: u64,
    episodes: u64,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, env: EnvSpec) -> Result<Self> {
        cfg.validate()?;
        env.validate()?;
        let root = RngStream::new(cfg.seed, 0);
        let schedule = NoiseSchedule::new(cfg.diffusion_steps, cfg.sigma_min, cfg.sigma_max)?;
        let agent = AgentState::new(&cfg, env.state_dim(), env.action_dim(), env.h, &root.derive(streams::INIT))?;
        let mut env_rng = root.derive(streams::ENV);
        let env_state = env.reset(&mut env_rng)?;
        Ok(Self {
            adam: AdamConfig {
                lr: cfg.lr,
                clip_norm: Some(cfg.grad_clip),
                ..AdamConfig::default()
            },
            buffer: ReplayBuffer::new(cfg.buffer_capacity)?,
            act_rng: root.derive(streams::ACT),
            batch_rng: root.derive(streams::BATCH),
            update_rng: root.derive(streams::UPDATE),
            env_rng,
            env_state,
            episode_return: 0.0,
            env_steps: 0,
            epoch: 0,
            episodes: 0,
            schedule,
            agent,
            cfg,
            env,
        })
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    /// Completed training episodes.
    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn is_finished(&self) -> bool {
        self.env_steps >= self.cfg.total_env_steps
    }

    pub fn in_warmup(&self) -> bool {
        (self.buffer.len() as u64) < self.cfg.warmup_steps
    }

    fn act(&mut self) -> Result<ActionVec> {
        if self.in_warmup() {
            let a = (0..self.env.action_dim())
                .map(|_| self.act_rng.uniform_range(-1.0, 1.0))
                .collect();
            Ok(ActionVec(a))
        } else {
            self.agent
                .sample_action(&self.env_state.s, &self.schedule, &mut self.act_rng, SampleMode::Train)
        }
    }

    fn env_step(&mut self, acc: &mut Accum) -> Result<()> {
        let a = self.act()?;
        let (next, out) = self.env.step(&self.env_state, &a)?;
        self.buffer.push(Transition {
            state: self.env_state.s.clone(),
            action: a,
            reward: out.reward,
            cost: out.cost,
            next_state: next.s.clone(),
            done: out.terminal,
        })?;
        self.episode_return += out.reward;
        self.env_steps += 1;
        if out.done {
            acc.returns.push(self.episode_return);
            acc.costs.push(next.episode_cost);
            self.episode_return = 0.0;
            self.episodes += 1;
            self.env_state = self.env.reset(&mut self.env_rng)?;
        } else {
            self.env_state = next;
        }
        Ok(())
    }

    /// One gradient iteration: critics, then the score network, then the
    /// dual variable; targets are Polyak-averaged on their period.
    pub fn gradient_step(&mut self) -> Result<(CriticLosses, ScoreUpdate)> {
        let batch = self.buffer.sample_batch(self.cfg.batch_size, &mut self.batch_rng)?;
        let (yq, yqc) = self.agent.critic_targets(
            &batch,
            &self.schedule,
            &mut self.update_rng,
            self.cfg.gamma,
            self.cfg.gamma_c,
        )?;
        let losses = self.agent.update_critics(&batch, &yq, &yqc, &self.adam)?;
        let score = self.agent.update_score_net(
            &batch,
            &self.schedule,
            &mut self.update_rng,
            self.cfg.guidance,
            self.cfg.beta,
            self.cfg.mc_samples,
            &self.adam,
        )?;
        let mean_qc = self.agent.mean_policy_cost(&batch, &self.schedule, &mut self.update_rng)?;
        self.agent.dual = self.agent.dual.dual_update(mean_qc);
        self.agent.grad_steps += 1;
        if self.agent.grad_steps % self.cfg.target_update_every == 0 {
            self.agent.update_targets(self.cfg.polyak)?;
        }
        Ok((losses, score))
    }

    /// Collects `epoch_length` environment steps (fewer if the budget runs
    /// out), performing `train_repeat` gradient updates spread over them once
    /// warm-up is over, then evaluates on the configured cadence.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let mut acc = Accum::default();
        let len = self.cfg.epoch_length;
        let repeat = self.cfg.train_repeat;
        for i in 1..=len {
            if self.is_finished() {
                break;
            }
            self.env_step(&mut acc)?;
            let due = i * repeat / len - (i - 1) * repeat / len;
            if self.in_warmup() {
                continue;
            }
            for _ in 0..due {
                let (l, s) = self.gradient_step()?;
                acc.q_loss += l.q_loss;
                acc.qc_loss += l.qc_loss;
                acc.score_loss += s.loss;
                acc.ess += s.mean_ess;
                acc.updates += 1;
            }
        }
        let epoch = self.epoch;
        self.epoch += 1;
        let (eval_return, eval_episode_cost) = if self.cfg.eval_every > 0 && self.epoch % self.cfg.eval_every == 0 {
            let e = self.evaluate(self.cfg.eval_episodes, epoch)?;
            (Some(e.mean_return()), Some(e.mean_cost()))
        } else {
            (None, None)
        };
        let per_update = |x: f64| (acc.updates > 0).then(|| x / acc.updates as f64);
        let avg = |xs: &[f64]| (!xs.is_empty()).then(|| mean(xs));
        Ok(EpochRecord {
            epoch,
            env_steps: self.env_steps,
            train_return: avg(&acc.returns),
            train_episode_cost: avg(&acc.costs),
            eval_return,
            eval_episode_cost,
            lambda: self.agent.dual.lambda,
            score_loss: per_update(acc.score_loss),
            q_loss: per_update(acc.q_loss),
            qc_loss: per_update(acc.qc_loss),
            mean_ess: per_update(acc.ess),
        })
    }

    /// Eval-mode episodes on streams derived from `(seed, EVAL, key)`.
    pub fn evaluate(&self, episodes: usize, key: u64) -> Result<EvalSummary> {
        let base = RngStream::new(self.cfg.seed, 0).derive(streams::EVAL).derive(key);
        evaluate_policy(&self.env, episodes, &base, |s, rng| {
            self.agent.sample_action(s, &self.schedule, rng, SampleMode::Eval)
        })
    }
}

/// Runs `episodes` episodes of `policy`; episode `i` uses streams derived
/// from `base` so results do not depend on episode order.
pub fn evaluate_policy(
    env: &EnvSpec,
    episodes: usize,
    base: &RngStream,
    mut policy: impl FnMut(&[f64], &mut RngStream) -> Result<ActionVec>,
) -> Result<EvalSummary> {
    let mut returns = Vec::with_capacity(episodes);
    let mut costs = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let ep_rng = base.derive(ep as u64);
        let mut reset_rng = ep_rng.derive(0);
        let mut act_rng = ep_rng.derive(1);
        let mut st = env.reset(&mut reset_rng)?;
        let mut ret = 0.0;
        while !st.done {
            let a = policy(&st.s, &mut act_rng)?;
            let (next, out) = env.step(&st, &a)?;
            ret += out.reward;
            st = next;
        }
        returns.push(ret);
        costs.push(st.episode_cost);
    }
    Ok(EvalSummary { returns, costs })
}
