use algd_core::net::{Adam, AdamConfig, ParamSet, ScoreGrad, ScoreNet};
use algd_core::score::{gaussian_mollified_score, mc_score_target, FnEnergy};
use algd_core::train::streams;
use algd_core::*;

fn small_cfg() -> TrainConfig {
    TrainConfig {
        critic_hidden: vec![16, 16],
        cost_hidden: vec![16, 16],
        score_hidden: vec![16, 16],
        ensemble_size: 3,
        batch_size: 16,
        ..TrainConfig::default()
    }
}

fn agent(cfg: &TrainConfig) -> AgentState {
    AgentState::new(cfg, 4, 2, 0.5, &RngStream::new(9, 0).derive(streams::INIT)).unwrap()
}

fn zero_score(agent: &mut AgentState) {
    for l in agent.score.trunk.layers.iter_mut() {
        l.weight.iter_mut().for_each(|w| *w = 0.0);
        l.bias.iter_mut().for_each(|b| *b = 0.0);
    }
}

fn variance(xs: &[f64]) -> f64 {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

fn transition(s: [f64; 4], a: [f64; 2], r: f64, c: f64, done: bool) -> Transition {
    Transition {
        state: StateVec(s.to_vec()),
        action: ActionVec(a.to_vec()),
        reward: r,
        cost: c,
        next_state: StateVec(vec![0.1, -0.2, 0.0, 0.3]),
        done,
    }
}

#[test]
fn zero_score_sampler_variance_is_twice_top_noise() {
    let cfg = small_cfg();
    let mut ag = agent(&cfg);
    zero_score(&mut ag);
    let sch = NoiseSchedule::new(5, 1e-4, 0.1).unwrap();
    let mut rng = RngStream::new(1, 0);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..100_000 {
        let a = ag.sample_action_raw(&[0.0; 4], &sch, &mut rng, SampleMode::Train).unwrap();
        xs.push(a[0]);
        ys.push(a[1]);
    }
    let want = 2.0 * 0.1f64.powi(2);
    for v in [variance(&xs), variance(&ys)] {
        assert!((v / want - 1.0).abs() < 0.03, "{v} vs {want}");
    }
}

#[test]
fn single_step_eval_sampler_has_no_final_noise() {
    let cfg = TrainConfig {
        diffusion_steps: 1,
        ..small_cfg()
    };
    let mut ag = agent(&cfg);
    zero_score(&mut ag);
    let sch = NoiseSchedule::new(1, 1e-4, 0.1).unwrap();
    let mut rng = RngStream::new(2, 0);
    let mut copy = rng.clone();
    let a = ag.sample_action_raw(&[0.0; 4], &sch, &mut rng, SampleMode::Eval).unwrap();
    // a¹ ~ N(0, σ₁²) is the only draw.
    let a1: Vec<f64> = (0..2).map(|_| sch.sigma(1) * copy.normal()).collect();
    assert_eq!(a.0, a1);
    assert_eq!(rng.next_u64(), copy.next_u64());
}

#[test]
fn sampling_is_deterministic_and_amortized() {
    let cfg = small_cfg();
    let ag = agent(&cfg);
    let sch = NoiseSchedule::new(cfg.diffusion_steps, cfg.sigma_min, cfg.sigma_max).unwrap();
    let s = [0.3, -0.1, 0.0, 0.2];
    for mode in [SampleMode::Train, SampleMode::Eval] {
        let a = ag.sample_action(&s, &sch, &mut RngStream::new(4, 4), mode).unwrap();
        let b = ag.sample_action(&s, &sch, &mut RngStream::new(4, 4), mode).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
    }
    ag.counters.reset();
    ag.sample_action(&s, &sch, &mut RngStream::new(4, 5), SampleMode::Train).unwrap();
    assert_eq!(ag.counters.score_evals.get(), cfg.diffusion_steps as u64);
    assert_eq!(ag.counters.critic_backwards.get(), 0);
    assert_eq!(ag.counters.critic_forwards.get(), 0);
}

#[test]
fn critic_target_examples() {
    let cfg = small_cfg();
    let mut ag = agent(&cfg);
    let sch = NoiseSchedule::new(5, 1e-4, 0.1).unwrap();
    // Constant target critics: zero weights, bias carries the value.
    let set_const = |net: &mut algd_core::Mlp, v: f64| {
        for l in net.layers.iter_mut() {
            l.weight.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        net.layers.last_mut().unwrap().bias[0] = v;
    };
    set_const(&mut ag.q1_target, 4.0);
    set_const(&mut ag.q2_target, 4.0);
    let members = [1.0, 3.0, 2.0];
    for (m, v) in ag.cost_target.iter_mut().zip(members) {
        set_const(m, v);
    }
    let live = transition([0.0; 4], [0.1, 0.2], 1.5, 1.0, false);
    let terminal = transition([0.0; 4], [0.1, 0.2], 7.0, 1.0, true);
    let (yq, yqc) = ag.critic_targets(&[&live, &terminal], &sch, &mut RngStream::new(0, 0), 0.9, 0.8).unwrap();
    assert!((yq[0] - (1.5 + 0.9 * 4.0)).abs() < 1e-12);
    assert!((yqc[0] - (1.0 + 0.8 * 2.0)).abs() < 1e-12);
    assert_eq!((yq[1], yqc[1]), (7.0, 1.0));

    // Unequal pair: the min is used.
    set_const(&mut ag.q2_target, -1.0);
    let (yq, _) = ag.critic_targets(&[&live], &sch, &mut RngStream::new(0, 0), 0.9, 0.8).unwrap();
    assert!((yq[0] - (1.5 - 0.9)).abs() < 1e-12);
}

#[test]
fn targets_and_dual_probe_leave_parameters_alone() {
    let cfg = small_cfg();
    let ag = agent(&cfg);
    let before: Vec<Vec<f64>> = ag.named_tensors().iter().map(|t| t.2.to_vec()).collect();
    let sch = NoiseSchedule::new(5, 1e-4, 0.1).unwrap();
    let batch_t: Vec<Transition> = (0..4).map(|i| transition([i as f64 * 0.1; 4], [0.0, 0.1], 0.0, 0.0, false)).collect();
    let batch: Vec<&Transition> = batch_t.iter().collect();
    let mut rng = RngStream::new(0, 1);
    ag.critic_targets(&batch, &sch, &mut rng, 0.99, 0.99).unwrap();
    ag.mean_policy_cost(&batch, &sch, &mut rng).unwrap();
    ag.score_target(&[0.0; 4], &[0.1, 0.1], 0.1, Guidance::Augmented, 0.1, 6, &mut rng).unwrap();
    let after: Vec<Vec<f64>> = ag.named_tensors().iter().map(|t| t.2.to_vec()).collect();
    assert_eq!(before, after);
}

#[test]
fn critic_update_reduces_single_sample_loss() {
    let cfg = small_cfg();
    let mut ag = agent(&cfg);
    let t = transition([0.2, 0.1, 0.0, 0.0], [0.5, -0.5], 0.0, 0.0, false);
    let adam = AdamConfig::default();
    let before = ag.update_critics(&[&t], &[1.0], &[0.5], &adam).unwrap();
    let x: Vec<f64> = t.state.iter().chain(t.action.iter()).copied().collect();
    let r1 = ag.q1.predict(&x).unwrap()[0] - 1.0;
    let r2 = ag.q2.predict(&x).unwrap()[0] - 1.0;
    assert!(0.5 * (r1 * r1 + r2 * r2) < before.q_loss);
    let after = ag.update_critics(&[&t], &[1.0], &[0.5], &adam).unwrap();
    assert!(after.q_loss < before.q_loss);
    assert!(after.qc_loss < before.qc_loss);
}

#[test]
fn reported_critic_loss_is_mean_squared_residual() {
    let cfg = small_cfg();
    let mut ag = agent(&cfg);
    let ts: Vec<Transition> = (0..5).map(|i| transition([0.1 * i as f64; 4], [0.2, -0.1], 0.0, 0.0, false)).collect();
    let batch: Vec<&Transition> = ts.iter().collect();
    let yq: Vec<f64> = (0..5).map(|i| i as f64).collect();
    let yqc = vec![0.25; 5];
    let mse = |net: &algd_core::Mlp, y: &[f64]| -> f64 {
        batch
            .iter()
            .zip(y)
            .map(|(t, y)| {
                let x: Vec<f64> = t.state.iter().chain(t.action.iter()).copied().collect();
                let r = net.predict(&x).unwrap()[0] - y;
                r * r
            })
            .sum::<f64>()
            / 5.0
    };
    let want_q = 0.5 * (mse(&ag.q1, &yq) + mse(&ag.q2, &yq));
    let want_c = ag.cost.iter().map(|m| mse(m, &yqc)).sum::<f64>() / 3.0;
    let got = ag.update_critics(&batch, &yq, &yqc, &AdamConfig::default()).unwrap();
    assert!((got.q_loss - want_q).abs() < 1e-12);
    assert!((got.qc_loss - want_c).abs() < 1e-12);
}

#[test]
fn zero_td_error_changes_only_decayed_weights() {
    let cfg = small_cfg();
    let mut ag = agent(&cfg);
    let t = transition([0.2, 0.1, 0.0, 0.0], [0.5, -0.5], 0.0, 0.0, false);
    let x: Vec<f64> = t.state.iter().chain(t.action.iter()).copied().collect();
    let yq = ag.q1.predict(&x).unwrap()[0];
    // Make q2 and all cost members agree with their targets too.
    let q1 = ag.q1.clone();
    ag.q2 = q1.clone();
    ag.opt_q2 = Adam::new(&ag.q2);
    let c0 = ag.cost[0].clone();
    for c in ag.cost.iter_mut() {
        *c = c0.clone();
    }
    let yqc = c0.predict(&x).unwrap()[0];
    let cost_before = ag.cost.clone();
    let losses = ag.update_critics(&[&t], &[yq], &[yqc], &AdamConfig::default()).unwrap();
    assert_eq!(losses.q_loss, 0.0);
    assert_eq!(ag.q1, q1);
    assert_eq!(ag.q2, q1);
    for (after, before) in ag.cost.iter().zip(&cost_before) {
        for (la, lb) in after.layers.iter().zip(&before.layers) {
            assert_eq!(la.bias, lb.bias);
            for (wa, wb) in la.weight.iter().zip(&lb.weight) {
                assert!((wa - wb).abs() <= 3e-4 * 1e-4 * wb.abs() + 1e-12);
            }
        }
    }
}

#[test]
fn score_update_with_exact_output_is_a_no_op() {
    // Constant critics make every target zero; a zero score net matches it.
    let cfg = small_cfg();
    let mut ag = agent(&cfg);
    zero_score(&mut ag);
    for net in [&mut ag.q1, &mut ag.q2].into_iter().chain(ag.cost.iter_mut()) {
        for l in net.layers.iter_mut() {
            l.weight.iter_mut().for_each(|w| *w = 0.0);
        }
    }
    let sch = NoiseSchedule::new(5, 1e-4, 0.1).unwrap();
    let ts: Vec<Transition> = (0..8).map(|i| transition([0.1 * i as f64; 4], [0.2, -0.1], 0.0, 0.0, false)).collect();
    let batch: Vec<&Transition> = ts.iter().collect();
    let before = ag.score.clone();
    let up = ag
        .update_score_net(&batch, &sch, &mut RngStream::new(3, 3), Guidance::Augmented, 0.1, 6, &AdamConfig::default())
        .unwrap();
    assert_eq!(up.loss, 0.0);
    assert_eq!(up.skipped, 0);
    assert_eq!(ag.score, before);
}

#[test]
fn inactive_hinge_targets_match_standard_guidance() {
    let cfg = TrainConfig {
        lambda_init: 0.0,
        ..small_cfg()
    };
    // A budget far above any critic value keeps the hinge inactive.
    let ag = AgentState::new(&cfg, 4, 2, 1e6, &RngStream::new(9, 0)).unwrap();
    for i in 0..20 {
        let s = [0.05 * i as f64, 0.1, -0.2, 0.0];
        let a = [0.3, -0.4];
        let x = ag.score_target(&s, &a, 0.1, Guidance::Augmented, 0.1, 6, &mut RngStream::new(i, 0)).unwrap();
        let y = ag.score_target(&s, &a, 0.1, Guidance::Standard, 0.1, 6, &mut RngStream::new(i, 0)).unwrap();
        for (p, q) in x.value.iter().zip(&y.value) {
            assert!((p - q).abs() <= 1e-12 * q.abs().max(1.0));
        }
    }
}

#[test]
fn score_regression_on_quadratic_energy() {
    // L = ‖a‖²/2 with β = 1 is N(0, I); its mollified score is −a/(1 + σ²).
    let k = 2;
    let sch = NoiseSchedule::new(k, 1e-4, 0.1).unwrap();
    let mut rng = RngStream::new(21, 0);
    let mut net = ScoreNet::new(1, 2, k, &[64, 64], &mut rng).unwrap();
    let mut opt = Adam::new(&net);
    let cfg = AdamConfig {
        lr: 1e-3,
        ..AdamConfig::default()
    };
    let energy = FnEnergy::new("half_norm", |a: &[f64]| 0.5 * a.iter().map(|x| x * x).sum::<f64>(), |a: &[f64]| a.to_vec());
    let s = [0.0];
    let batch = 64;
    let draw = |rng: &mut RngStream| -> (usize, Vec<f64>) {
        let tau = 1 + rng.below(k);
        let a0 = [rng.normal(), rng.normal()];
        (tau, sch.forward_perturb(&a0, tau, rng).unwrap().0)
    };
    for _ in 0..2000 {
        let mut g = ScoreGrad::zeros_like(&net);
        for _ in 0..batch {
            let (tau, a) = draw(&mut rng);
            let y = mc_score_target(&energy, &a, sch.sigma(tau), 1.0, 6, &mut rng).unwrap().value;
            let (out, cache) = net.forward(&s, &a, tau).unwrap();
            let up: Vec<f64> = out.iter().zip(&y).map(|(o, t)| 2.0 * (o - t) / batch as f64).collect();
            net.accumulate_backward(&cache, &up, &mut g);
        }
        opt.step(&mut net, &g, &cfg, &[]).unwrap();
    }
    let mut loss = 0.0;
    let n = 2000;
    for _ in 0..n {
        let (tau, a) = draw(&mut rng);
        let truth = gaussian_mollified_score(&[0.0, 0.0], 1.0, sch.sigma(tau), &a);
        let out = net.eval(&s, &a, tau).unwrap();
        loss += out.iter().zip(&truth).map(|(o, t)| (o - t) * (o - t)).sum::<f64>();
    }
    loss /= n as f64;
    assert!(loss < 1e-3, "{loss}");
    assert!(net.tensors().iter().all(|t| t.iter().all(|x| x.is_finite())));
}

fn tiny_run(guidance: Guidance, h: f64, repeat: u64) -> (Vec<algd_core::train::EpochRecord>, Trainer) {
    let cfg = TrainConfig {
        guidance,
        total_env_steps: 600,
        epoch_length: 100,
        train_repeat: repeat,
        warmup_steps: 200,
        eval_every: 2,
        eval_episodes: 2,
        ..small_cfg()
    };
    let env = EnvSpec {
        h,
        horizon: 60,
        ..EnvSpec::point_hazard()
    };
    let mut t = Trainer::new(cfg, env).unwrap();
    let mut log = Vec::new();
    while !t.is_finished() {
        log.push(t.run_epoch().unwrap());
    }
    (log, t)
}

#[test]
fn variants_coincide_while_the_constraint_is_slack() {
    let (a, ta) = tiny_run(Guidance::Augmented, 1e6, 10);
    let (s, ts) = tiny_run(Guidance::Standard, 1e6, 10);
    assert_eq!(a, s);
    assert!(a.iter().all(|r| r.lambda == 0.0));
    let bits = |t: &Trainer| -> Vec<u64> { t.agent.named_tensors().iter().flat_map(|x| x.2.iter().map(|v| v.to_bits())).collect() };
    assert_eq!(bits(&ta), bits(&ts));
}

#[test]
fn same_seed_same_log() {
    let (a, _) = tiny_run(Guidance::Augmented, 0.1, 10);
    let (b, _) = tiny_run(Guidance::Augmented, 0.1, 10);
    assert_eq!(a, b);
    assert!(a.iter().all(|r| r.lambda >= 0.0));
    assert!(a.windows(2).all(|w| w[0].env_steps < w[1].env_steps));
}

#[test]
fn warmup_and_zero_repeat_freeze_learning() {
    let cfg = TrainConfig {
        total_env_steps: 300,
        epoch_length: 100,
        warmup_steps: 1000,
        lambda_init: 0.3,
        ..small_cfg()
    };
    let mut t = Trainer::new(cfg, EnvSpec::point_hazard()).unwrap();
    let before = t.agent.score.clone();
    while !t.is_finished() {
        let r = t.run_epoch().unwrap();
        assert_eq!(r.lambda, 0.3);
        assert_eq!(r.score_loss, None);
    }
    assert_eq!(t.agent.grad_steps, 0);
    assert_eq!(t.agent.score, before);
    assert_eq!(t.buffer.len(), 300);

    let (log, t) = tiny_run(Guidance::Augmented, 0.5, 0);
    assert_eq!(t.agent.grad_steps, 0);
    assert!(log.iter().all(|r| r.q_loss.is_none() && r.lambda == 0.0));
    assert_eq!(t.env_steps(), 600);
}

#[test]
fn updates_follow_the_configured_cadence() {
    let (log, t) = tiny_run(Guidance::Augmented, 0.5, 10);
    // The buffer reaches the warm-up size on the last step of epoch 1, which
    // is due one update; four full epochs of 10 follow.
    assert_eq!(t.agent.grad_steps, 41);
    assert_eq!(log.iter().filter(|r| r.q_loss.is_some()).count(), 5);
    assert_eq!(log.iter().filter(|r| r.eval_return.is_some()).count(), 3);
}
