use algd_core::energy::{aug_lagrangian, aug_lagrangian_grad_a, lagrangian};
use algd_core::score::{mc_score_target, FnEnergy};
use algd_core::*;
use proptest::prelude::*;

fn tr(i: usize) -> Transition {
    Transition {
        state: StateVec(vec![i as f64]),
        action: ActionVec(vec![0.0]),
        reward: i as f64,
        cost: 0.0,
        next_state: StateVec(vec![0.0]),
        done: false,
    }
}

fn eval(q: f64, qc: f64) -> EnergyEval {
    EnergyEval {
        q,
        qc,
        grad_q: vec![0.3, -0.2],
        grad_qc: vec![1.0, 0.5],
    }
}

proptest! {
    #[test]
    fn ring_buffer_keeps_the_newest(cap in 1usize..20, k in 0usize..40) {
        let mut b = ReplayBuffer::new(cap).unwrap();
        for i in 1..=cap + k {
            b.push(tr(i)).unwrap();
        }
        let kept: Vec<f64> = b.iter_oldest_first().map(|t| t.reward).collect();
        let want: Vec<f64> = (k + 1..=cap + k).map(|i| i as f64).collect();
        prop_assert_eq!(kept, want);
    }

    #[test]
    fn increments_telescope(k in 1usize..60, lo in 1e-6f64..1e-2, ratio in 1.5f64..1e4) {
        let sch = NoiseSchedule::new(k, lo, lo * ratio).unwrap();
        let total: f64 = sch.dsqs().iter().sum();
        let top = sch.sigma(k) * sch.sigma(k);
        prop_assert!(((total - top) / top).abs() < 1e-12);
        prop_assert!(sch.dsqs().iter().all(|d| *d > 0.0));
    }

    #[test]
    fn hinge_is_continuous(q in -10.0f64..10.0, lambda in 0.0f64..5.0, rho in 0.01f64..10.0, h in -5.0f64..5.0) {
        let d = DualState::new(lambda, rho, h, 0.1).unwrap();
        let edge = h - lambda / rho;
        let lo = aug_lagrangian(&eval(q, edge - 1e-9), &d).unwrap();
        let hi = aug_lagrangian(&eval(q, edge + 1e-9), &d).unwrap();
        prop_assert!((lo - hi).abs() < 1e-6);
        prop_assert!((lo - (-q - lambda * lambda / (2.0 * rho))).abs() < 1e-6);
    }

    #[test]
    fn active_region_adds_the_quadratic_penalty(q in -10.0f64..10.0, lambda in 0.0f64..5.0, rho in 0.01f64..10.0, h in -5.0f64..5.0, u in -5.0f64..5.0) {
        let d = DualState::new(lambda, rho, h, 0.1).unwrap();
        let qc = h + u;
        prop_assume!(lambda + rho * u > 1e-9);
        let e = eval(q, qc);
        let lhs = aug_lagrangian(&e, &d).unwrap();
        let rhs = lagrangian(&e, &d) + 0.5 * rho * u * u;
        let scale = 1.0 + q.abs() + lambda * lambda / rho + rho * u * u + lambda * u.abs();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
    }

    #[test]
    fn slackness_points_have_equal_energies(q in -10.0f64..10.0, lambda in 1e-6f64..5.0, rho in 0.01f64..10.0, h in -5.0f64..5.0, gap in 0.0f64..5.0) {
        let zero = DualState::new(0.0, rho, h, 0.1).unwrap();
        let e = eval(q, h - gap);
        prop_assert_eq!(aug_lagrangian(&e, &zero).unwrap(), lagrangian(&e, &zero));
        let pos = DualState::new(lambda, rho, h, 0.1).unwrap();
        let e = eval(q, h);
        prop_assert_eq!(aug_lagrangian(&e, &pos).unwrap(), lagrangian(&e, &pos));
    }

    #[test]
    fn dual_stays_nonnegative(lambda in 0.0f64..5.0, eta in 1e-4f64..1.0, qcs in proptest::collection::vec(-50.0f64..50.0, 1..50)) {
        let mut d = DualState::new(lambda, 1.0, 0.5, eta).unwrap();
        for qc in qcs {
            d = d.dual_update(qc);
            prop_assert!(d.lambda >= 0.0);
        }
    }

    #[test]
    fn augmented_gradient_matches_differences(
        mu in proptest::array::uniform2(-1.0f64..1.0),
        muc in proptest::array::uniform2(-1.0f64..1.0),
        a in proptest::array::uniform2(-1.0f64..1.0),
        dir in proptest::array::uniform2(-1.0f64..1.0),
        lambda in 0.0f64..3.0,
        rho in 0.1f64..5.0,
        h in 0.0f64..2.0,
    ) {
        let critics = verify::TestCritics { mu_r: mu.to_vec(), cost: verify::TestCost::Smooth { mu_c: muc.to_vec() } };
        let d = DualState::new(lambda, rho, h, 0.1).unwrap();
        let e = critics.eval(&a);
        // Stay away from the hinge so the energy is smooth along the probe.
        prop_assume!((lambda + rho * (e.qc - h)).abs() > 1e-3);
        let g = aug_lagrangian_grad_a(&e, &d);
        let eps = 1e-6;
        let f = |t: f64| {
            let x = [a[0] + t * dir[0], a[1] + t * dir[1]];
            aug_lagrangian(&critics.eval(&x), &d).unwrap()
        };
        let fd = (f(eps) - f(-eps)) / (2.0 * eps);
        let an = g[0] * dir[0] + g[1] * dir[1];
        prop_assert!((an - fd).abs() / an.abs().max(fd.abs()).max(1e-3) < 1e-6, "{} vs {}", an, fd);
    }

    #[test]
    fn softmax_weights_are_normalised_for_huge_energies(
        scale in 1.0f64..1e6,
        centre in proptest::array::uniform2(-1.0f64..1.0),
        beta in 0.01f64..10.0,
        seed in any::<u64>(),
    ) {
        // |L/β| reaches `scale` on the sample cloud.
        let c = centre;
        let k = scale * beta;
        let f = FnEnergy::new(
            "steep",
            move |a: &[f64]| k * (1.0 + (a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2)) / 3.0,
            move |a: &[f64]| vec![2.0 * k * (a[0] - c[0]) / 3.0, 2.0 * k * (a[1] - c[1]) / 3.0],
        );
        let t = mc_score_target(&f, &[0.0, 0.0], 0.3, beta, 16, &mut RngStream::new(seed, 0)).unwrap();
        prop_assert!(t.weights.iter().all(|w| w.is_finite() && *w >= 0.0));
        prop_assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(t.value.iter().all(|v| v.is_finite()));
        prop_assert!(t.ess >= 1.0 - 1e-12 && t.ess <= 16.0 + 1e-9);
    }

    #[test]
    fn constant_shifts_do_not_change_targets(shift in -100.0f64..100.0, beta in 0.5f64..2.0, seed in any::<u64>()) {
        // Shifts are kept moderate: L + C is rounded to C's ulp, which bounds
        // how exactly the shifted logits can agree.
        let f = |c: f64| FnEnergy::new(
            "bowl",
            move |a: &[f64]| c + (a[0] - 0.2).powi(2) + 2.0 * (a[1] + 0.1).powi(2),
            |a: &[f64]| vec![2.0 * (a[0] - 0.2), 4.0 * (a[1] + 0.1)],
        );
        let x = mc_score_target(&f(0.0), &[0.3, -0.3], 0.5, beta, 32, &mut RngStream::new(seed, 1)).unwrap();
        let y = mc_score_target(&f(shift), &[0.3, -0.3], 0.5, beta, 32, &mut RngStream::new(seed, 1)).unwrap();
        for (p, q) in x.weights.iter().zip(&y.weights) {
            prop_assert!((p - q).abs() < 1e-12);
        }
        for (p, q) in x.value.iter().zip(&y.value) {
            prop_assert!((p - q).abs() < 1e-12 * p.abs().max(1.0));
        }
    }

    #[test]
    fn cost_is_a_nonnegative_indicator(seed in any::<u64>(), actions in proptest::collection::vec(proptest::array::uniform2(-3.0f64..3.0), 1..60)) {
        for spec in [EnvSpec::point_hazard(), EnvSpec::diff_drive()] {
            let mut st = spec.reset(&mut RngStream::new(seed, 0)).unwrap();
            for a in &actions {
                if st.done {
                    break;
                }
                let (next, out) = spec.step(&st, &ActionVec(a.to_vec())).unwrap();
                let (again, out2) = spec.step(&st, &ActionVec(a.to_vec())).unwrap();
                prop_assert_eq!(&next, &again);
                prop_assert_eq!(out, out2);
                prop_assert!(out.cost == 0.0 || out.cost == 1.0);
                prop_assert_eq!(out.cost, spec.cost_of(&next.s));
                st = next;
            }
        }
    }
}
