use alloc::vec;
use alloc::vec::Vec;
use core::cell::Cell;

use super::config::TrainConfig;
use crate::energy::{DualState, EnergyEval, Guidance};
use crate::error::Result;
use crate::net::{
    polyak_update, Activation, Adam, AdamConfig, GradBundle, Mlp, ParamSet, ScoreGrad, ScoreNet,
};
use crate::replay::{ActionVec, Transition};
use crate::rng::RngStream;
use crate::schedule::NoiseSchedule;
use crate::score::{mc_score_target, EnergyFn};

/// Decoupled weight decay of the three cost-ensemble layers (weights only).
pub const ENSEMBLE_WEIGHT_DECAY: [f64; 3] = [3e-5, 6e-5, 1e-4];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleMode {
    Train,
    /// No injected noise on the final (τ = 1) step.
    Eval,
}

/// Instrumentation: how often the policy and critics are exercised.
#[derive(Clone, Debug, Default)]
pub struct CallCounters {
    pub score_evals: Cell<u64>,
    pub critic_forwards: Cell<u64>,
    pub critic_backwards: Cell<u64>,
}

impl CallCounters {
    fn bump(c: &Cell<u64>, n: u64) {
        c.set(c.get() + n);
    }

    pub fn reset(&self) {
        self.score_evals.set(0);
        self.critic_forwards.set(0);
        self.critic_backwards.set(0);
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CriticLosses {
    /// Mean over the two reward critics of the batch-mean squared TD error.
    pub q_loss: f64,
    /// Mean over ensemble members of the batch-mean squared TD error.
    pub qc_loss: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScoreUpdate {
    pub loss: f64,
    pub mean_ess: f64,
    /// Rows dropped because their Monte-Carlo target was non-finite.
    pub skipped: usize,
}

/// Every network, optimizer state and the dual variable of one agent.
#[derive(Clone, Debug)]
pub struct AgentState {
    pub state_dim: usize,
    pub action_dim: usize,
    pub score: ScoreNet,
    pub score_target: ScoreNet,
    pub q1: Mlp,
    pub q2: Mlp,
    pub q1_target: Mlp,
    pub q2_target: Mlp,
    pub cost: Vec<Mlp>,
    pub cost_target: Vec<Mlp>,
    pub dual: DualState,
    pub opt_score: Adam,
    pub opt_q1: Adam,
    pub opt_q2: Adam,
    pub opt_cost: Vec<Adam>,
    pub grad_steps: u64,
    pub counters: CallCounters,
}

fn sizes(input: usize, hidden: &[usize]) -> Vec<usize> {
    let mut v = vec![input];
    v.extend_from_slice(hidden);
    v.push(1);
    v
}

impl AgentState {
    /// Each network draws from its own stream derived from `rng`.
    pub fn new(cfg: &TrainConfig, state_dim: usize, action_dim: usize, h: f64, rng: &RngStream) -> Result<Self> {
        let input = state_dim + action_dim;
        let score = ScoreNet::new(state_dim, action_dim, cfg.diffusion_steps, &cfg.score_hidden, &mut rng.derive(0))?;
        let q1 = Mlp::new(&sizes(input, &cfg.critic_hidden), Activation::Relu, Activation::Linear, &mut rng.derive(1))?;
        let q2 = Mlp::new(&sizes(input, &cfg.critic_hidden), Activation::Relu, Activation::Linear, &mut rng.derive(2))?;
        let cost = (0..cfg.ensemble_size)
            .map(|i| {
                Mlp::new(
                    &sizes(input, &cfg.cost_hidden),
                    Activation::Silu,
                    Activation::Linear,
                    &mut rng.derive(100 + i as u64),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let dual = DualState::new(cfg.lambda_init, cfg.rho, h, cfg.eta_lambda)?;
        Ok(Self {
            state_dim,
            action_dim,
            opt_score: Adam::new(&score),
            opt_q1: Adam::new(&q1),
            opt_q2: Adam::new(&q2),
            opt_cost: cost.iter().map(Adam::new).collect(),
            score_target: score.clone(),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            cost_target: cost.clone(),
            score,
            q1,
            q2,
            cost,
            dual,
            grad_steps: 0,
            counters: CallCounters::default(),
        })
    }

    /// Reverse VE sampler: `a^K ~ N(0, σ_K²)`, then for `τ = K..1`
    /// `a ← a + dsq(τ)·φ(s, a, τ) + √dsq(τ)·ε`. Returns the unclipped `a⁰`.
    pub fn sample_action_raw(&self, s: &[f64], sch: &NoiseSchedule, rng: &mut RngStream, mode: SampleMode) -> Result<ActionVec> {
        let k = sch.steps();
        let sk = sch.sigma(k);
        let mut a: Vec<f64> = (0..self.action_dim).map(|_| sk * rng.normal()).collect();
        for tau in (1..=k).rev() {
            let phi = self.score.eval(s, &a, tau)?;
            CallCounters::bump(&self.counters.score_evals, 1);
            let dsq = sch.dsq(tau);
            let noisy = !(mode == SampleMode::Eval && tau == 1);
            let sd = libm::sqrt(dsq);
            for (ai, p) in a.iter_mut().zip(&phi) {
                *ai += dsq * p;
                if noisy {
                    *ai += sd * rng.normal();
                }
            }
        }
        Ok(ActionVec(a))
    }

    /// Sampler output clipped to `[-1, 1]`.
    pub fn sample_action(&self, s: &[f64], sch: &NoiseSchedule, rng: &mut RngStream, mode: SampleMode) -> Result<ActionVec> {
        let mut a = self.sample_action_raw(s, sch, rng, mode)?;
        a.clip_unit();
        Ok(a)
    }

    fn concat(s: &[f64], a: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        x
    }

    /// `(min(Q1, Q2), mean Q_c)` from the online critics.
    pub fn critic_values(&self, s: &[f64], a: &[f64]) -> Result<(f64, f64)> {
        let x = Self::concat(s, a);
        let q = self.q1.predict(&x)?[0].min(self.q2.predict(&x)?[0]);
        let mut qc = 0.0;
        for m in &self.cost {
            qc += m.predict(&x)?[0];
        }
        CallCounters::bump(&self.counters.critic_forwards, 2 + self.cost.len() as u64);
        Ok((q, qc / self.cost.len() as f64))
    }

    /// Critic values with action-gradients. The reward gradient is that of
    /// whichever double-Q member attains the min.
    pub fn energy_eval(&self, s: &[f64], a: &[f64]) -> Result<EnergyEval> {
        let x = Self::concat(s, a);
        let off = s.len();
        let (y1, c1) = self.q1.forward(&x)?;
        let (y2, c2) = self.q2.forward(&x)?;
        let (q, gx) = if y1[0] <= y2[0] {
            (y1[0], self.q1.input_gradient(&c1, &[1.0]))
        } else {
            (y2[0], self.q2.input_gradient(&c2, &[1.0]))
        };
        let m = self.cost.len() as f64;
        let mut qc = 0.0;
        let mut grad_qc = vec![0.0; a.len()];
        for net in &self.cost {
            let (y, c) = net.forward(&x)?;
            qc += y[0];
            let g = net.input_gradient(&c, &[1.0]);
            for (acc, gi) in grad_qc.iter_mut().zip(&g[off..]) {
                *acc += gi / m;
            }
        }
        CallCounters::bump(&self.counters.critic_forwards, 2 + self.cost.len() as u64);
        CallCounters::bump(&self.counters.critic_backwards, 1 + self.cost.len() as u64);
        Ok(EnergyEval {
            q,
            qc: qc / m,
            grad_q: gx[off..].to_vec(),
            grad_qc,
        })
    }

    /// TD targets `y_Q = r + γ min_j Q'_j(s', a')` and
    /// `y_Qc = c + γ_c mean_i Q'_{c,i}(s', a')`, with `a'` drawn from the
    /// online sampler; terminal rows drop the bootstrap.
    pub fn critic_targets(
        &self,
        batch: &[&Transition],
        sch: &NoiseSchedule,
        rng: &mut RngStream,
        gamma: f64,
        gamma_c: f64,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut yq = Vec::with_capacity(batch.len());
        let mut yqc = Vec::with_capacity(batch.len());
        for t in batch {
            if t.done {
                yq.push(t.reward);
                yqc.push(t.cost);
                continue;
            }
            let a_next = self.sample_action(&t.next_state, sch, rng, SampleMode::Train)?;
            let x = Self::concat(&t.next_state, &a_next);
            let q = self.q1_target.predict(&x)?[0].min(self.q2_target.predict(&x)?[0]);
            let mut qc = 0.0;
            for m in &self.cost_target {
                qc += m.predict(&x)?[0];
            }
            qc /= self.cost_target.len() as f64;
            yq.push(t.reward + gamma * q);
            yqc.push(t.cost + gamma_c * qc);
        }
        Ok((yq, yqc))
    }

    fn regress(net: &Mlp, opt: &mut Adam, batch: &[&Transition], y: &[f64], cfg: &AdamConfig, decay: &[f64]) -> Result<(Mlp, f64)> {
        let mut g = GradBundle::zeros_like(net);
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for (t, &target) in batch.iter().zip(y) {
            let x = Self::concat(&t.state, &t.action);
            let (out, cache) = net.forward(&x)?;
            let r = out[0] - target;
            loss += r * r;
            net.accumulate_backward(&cache, &[2.0 * r / n], &mut g);
        }
        let mut next = net.clone();
        opt.step(&mut next, &g, cfg, decay)?;
        Ok((next, loss / n))
    }

    /// One Adam step on the squared TD error of every critic.
    pub fn update_critics(&mut self, batch: &[&Transition], yq: &[f64], yqc: &[f64], adam: &AdamConfig) -> Result<CriticLosses> {
        let (q1, l1) = Self::regress(&self.q1, &mut self.opt_q1, batch, yq, adam, &[])?;
        let (q2, l2) = Self::regress(&self.q2, &mut self.opt_q2, batch, yq, adam, &[])?;
        self.q1 = q1;
        self.q2 = q2;
        let mut decay = Vec::new();
        for i in 0..self.cost[0].layers.len() {
            decay.push(ENSEMBLE_WEIGHT_DECAY[i.min(ENSEMBLE_WEIGHT_DECAY.len() - 1)]);
            decay.push(0.0);
        }
        let mut lc = 0.0;
        for i in 0..self.cost.len() {
            let (c, l) = Self::regress(&self.cost[i], &mut self.opt_cost[i], batch, yqc, adam, &decay)?;
            self.cost[i] = c;
            lc += l;
        }
        Ok(CriticLosses {
            q_loss: 0.5 * (l1 + l2),
            qc_loss: lc / self.cost.len() as f64,
        })
    }

    /// Monte-Carlo score target for one noised action, under the current
    /// critics and dual state.
    pub fn score_target(
        &self,
        s: &[f64],
        a_tau: &[f64],
        sigma: f64,
        guidance: Guidance,
        beta: f64,
        samples: usize,
        rng: &mut RngStream,
    ) -> Result<crate::score::ScoreTarget> {
        let energy = CriticEnergy {
            agent: self,
            state: s,
            guidance,
            dual: self.dual,
        };
        mc_score_target(&energy, a_tau, sigma, beta, samples, rng)
    }

    /// Score matching against detached Monte-Carlo targets: per row draw
    /// `τ ~ U{1..K}`, noise the buffer action to `a^τ`, and regress
    /// `φ(s, a^τ, τ)` onto the weighted estimate.
    pub fn update_score_net(
        &mut self,
        batch: &[&Transition],
        sch: &NoiseSchedule,
        rng: &mut RngStream,
        guidance: Guidance,
        beta: f64,
        samples: usize,
        adam: &AdamConfig,
    ) -> Result<ScoreUpdate> {
        let mut rows = Vec::with_capacity(batch.len());
        let mut skipped = 0;
        let mut ess = 0.0;
        for t in batch {
            let tau = 1 + rng.below(sch.steps());
            let a_tau = sch.forward_perturb(&t.action, tau, rng)?;
            match self.score_target(&t.state, &a_tau, sch.sigma(tau), guidance, beta, samples, rng) {
                Ok(target) if target.value.iter().all(|v| v.is_finite()) => {
                    ess += target.ess;
                    rows.push((&t.state, a_tau, tau, target.value));
                }
                _ => skipped += 1,
            }
        }
        if rows.is_empty() {
            return Ok(ScoreUpdate {
                loss: 0.0,
                mean_ess: 0.0,
                skipped,
            });
        }
        let n = rows.len() as f64;
        let mut g = ScoreGrad::zeros_like(&self.score);
        let mut loss = 0.0;
        for (s, a_tau, tau, target) in &rows {
            let (out, cache) = self.score.forward(s, a_tau, *tau)?;
            let resid: Vec<f64> = out.iter().zip(target).map(|(o, y)| o - y).collect();
            loss += resid.iter().map(|r| r * r).sum::<f64>();
            let up: Vec<f64> = resid.iter().map(|r| 2.0 * r / n).collect();
            self.score.accumulate_backward(&cache, &up, &mut g);
        }
        self.opt_score.step(&mut self.score, &g, adam, &[])?;
        Ok(ScoreUpdate {
            loss: loss / n,
            mean_ess: ess / n,
            skipped,
        })
    }

    /// Batch mean of `Q̄_c(s, a)` with fresh policy actions at the batch states.
    pub fn mean_policy_cost(&self, batch: &[&Transition], sch: &NoiseSchedule, rng: &mut RngStream) -> Result<f64> {
        let mut total = 0.0;
        for t in batch {
            let a = self.sample_action(&t.state, sch, rng, SampleMode::Train)?;
            total += self.critic_values(&t.state, &a)?.1;
        }
        Ok(total / batch.len() as f64)
    }

    pub fn update_targets(&mut self, kappa: f64) -> Result<()> {
        polyak_update(&mut self.score_target, &self.score, kappa)?;
        polyak_update(&mut self.q1_target, &self.q1, kappa)?;
        polyak_update(&mut self.q2_target, &self.q2, kappa)?;
        for (t, o) in self.cost_target.iter_mut().zip(&self.cost) {
            polyak_update(t, o, kappa)?;
        }
        Ok(())
    }

    /// Named tensors in a fixed order (for checkpoints).
    pub fn named_tensors(&self) -> Vec<(alloc::string::String, Vec<usize>, &[f64])> {
        use alloc::format;
        let mut out = Vec::new();
        fn push_mlp<'a>(prefix: &str, net: &'a Mlp, out: &mut Vec<(alloc::string::String, Vec<usize>, &'a [f64])>) {
            for (i, l) in net.layers.iter().enumerate() {
                out.push((format!("{prefix}.{i}.weight"), vec![l.out_dim, l.in_dim], &l.weight));
                out.push((format!("{prefix}.{i}.bias"), vec![l.out_dim], &l.bias));
            }
        }
        fn push_adam<'a>(prefix: &str, opt: &'a Adam, shapes: &[Vec<usize>], out: &mut Vec<(alloc::string::String, Vec<usize>, &'a [f64])>) {
            for (i, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
                out.push((format!("{prefix}.m{i}"), shapes[i].clone(), m));
                out.push((format!("{prefix}.v{i}"), shapes[i].clone(), v));
            }
        }
        fn mlp_shapes(net: &Mlp) -> Vec<Vec<usize>> {
            net.layers
                .iter()
                .flat_map(|l| [vec![l.out_dim, l.in_dim], vec![l.out_dim]])
                .collect()
        }
        let emb_shape = vec![self.score.steps, crate::net::STEP_EMBED_DIM];
        out.push(("score.embedding".into(), emb_shape.clone(), self.score.embedding.as_slice()));
        push_mlp("score.trunk", &self.score.trunk, &mut out);
        out.push(("score_target.embedding".into(), emb_shape.clone(), self.score_target.embedding.as_slice()));
        push_mlp("score_target.trunk", &self.score_target.trunk, &mut out);
        push_mlp("q1", &self.q1, &mut out);
        push_mlp("q2", &self.q2, &mut out);
        push_mlp("q1_target", &self.q1_target, &mut out);
        push_mlp("q2_target", &self.q2_target, &mut out);
        for (i, m) in self.cost.iter().enumerate() {
            push_mlp(&format!("cost{i}"), m, &mut out);
        }
        for (i, m) in self.cost_target.iter().enumerate() {
            push_mlp(&format!("cost{i}_target"), m, &mut out);
        }
        let mut score_shapes = vec![emb_shape];
        score_shapes.extend(mlp_shapes(&self.score.trunk));
        push_adam("adam.score", &self.opt_score, &score_shapes, &mut out);
        push_adam("adam.q1", &self.opt_q1, &mlp_shapes(&self.q1), &mut out);
        push_adam("adam.q2", &self.opt_q2, &mlp_shapes(&self.q2), &mut out);
        for (i, o) in self.opt_cost.iter().enumerate() {
            push_adam(&format!("adam.cost{i}"), o, &mlp_shapes(&self.cost[i]), &mut out);
        }
        out
    }

    /// Mutable tensors in the same order as [`AgentState::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.extend(self.score.tensors_mut());
        out.extend(self.score_target.tensors_mut());
        out.extend(self.q1.tensors_mut());
        out.extend(self.q2.tensors_mut());
        out.extend(self.q1_target.tensors_mut());
        out.extend(self.q2_target.tensors_mut());
        for m in self.cost.iter_mut() {
            out.extend(m.tensors_mut());
        }
        for m in self.cost_target.iter_mut() {
            out.extend(m.tensors_mut());
        }
        fn adam<'a>(o: &'a mut Adam, out: &mut Vec<&'a mut [f64]>) {
            for (m, v) in o.m.iter_mut().zip(o.v.iter_mut()) {
                out.push(m.as_mut_slice());
                out.push(v.as_mut_slice());
            }
        }
        adam(&mut self.opt_score, &mut out);
        adam(&mut self.opt_q1, &mut out);
        adam(&mut self.opt_q2, &mut out);
        for o in self.opt_cost.iter_mut() {
            adam(o, &mut out);
        }
        out
    }
}

/// The guided energy `L(s, ·)` (standard or augmented) assembled from an
/// agent's online critics at a fixed state.
pub struct CriticEnergy<'a> {
    pub agent: &'a AgentState,
    pub state: &'a [f64],
    pub guidance: Guidance,
    pub dual: DualState,
}

impl EnergyFn for CriticEnergy<'_> {
    fn eval(&self, a: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = self.agent.energy_eval(self.state, a)?;
        Ok((self.guidance.energy(&e, &self.dual)?, self.guidance.grad_a(&e, &self.dual)))
    }

    fn descriptor(&self) -> &str {
        self.guidance.name()
    }
}
