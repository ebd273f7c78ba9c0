mod common;

use proptest::prelude::*;
use rand::Rng;
use trollscope::irl::{
    data_gradient, data_objective, expected_state_visitation, expert_visitation, soft_bellman_residual,
    soft_value_iteration, soft_value_iteration_from, train_maxent_irl, MaxEntConfig, RewardNet,
};
use trollscope::policy::empirical_policy;
use trollscope::simulate::rollout;
use trollscope::{Action, Environment, Policy, PolicySource, Stance, State, Trajectory, N_STATES};

use common::*;

const IT: State = State::InitialThread;

fn it_env(gamma: f64) -> Environment {
    Environment::default().with_initial_state(IT).unwrap().with_gamma(gamma).unwrap()
}

fn random_reward(r: &mut impl Rng) -> [f64; N_STATES] {
    std::array::from_fn(|_| r.random_range(-1.0..1.0))
}

fn argmax(row: &[f64; 6]) -> usize {
    (0..6).fold(0, |best, a| if row[a] > row[best] { a } else { best })
}

#[test]
fn thread_reward_makes_create_thread_optimal() {
    let mut reward = [0.0; N_STATES];
    reward[IT.index()] = 1.0;
    let env = Environment::default();
    let oracle = hard_optimal_actions(&reward, &env, 0.9);
    let pi = soft_value_iteration(&reward, &env, &MaxEntConfig::default()).unwrap();
    for s in State::ALL {
        assert_eq!(oracle[s.index()], vec![Action::CreateThread.index()], "{s}");
        assert_eq!(argmax(pi.row(s)), Action::CreateThread.index(), "{s}");
    }
}

#[test]
fn visitation_examples() {
    let mu = expected_state_visitation(&Policy::deterministic(Action::CreateThread), &it_env(0.9), 2);
    assert!((mu.get(IT) - 2.71).abs() < 1e-12);
    assert!((mu.total() - 2.71).abs() < 1e-12);

    let env = Environment::default();
    let mu = expected_state_visitation(&Policy::uniform(PolicySource::Scripted), &env, 0);
    assert_eq!(mu.mu, *env.d0());

    let t = Trajectory::from_pairs("u", &[(IT, Action::WaitReply)]).with_terminal(State::GetReply(Stance::Agree));
    let mu = expert_visitation(&t, 0.9).unwrap();
    assert_eq!(mu.get(IT), 1.0);
    assert!((mu.get(State::GetReply(Stance::Agree)) - 0.9).abs() < 1e-15);
    let mu = expert_visitation(&t, 0.0).unwrap();
    assert_eq!(mu.get(IT), 1.0);
    assert_eq!(mu.total(), 1.0);
}

proptest! {
    #[test]
    fn visitation_mass_is_conserved(policy in arb_policy(), gamma in 0.5f64..0.99, h in 0usize..60) {
        let env = Environment::default().with_gamma(gamma).unwrap();
        let mu = expected_state_visitation(&policy, &env, h);
        let expected = (1.0 - gamma.powi(h as i32 + 1)) / (1.0 - gamma);
        prop_assert!((mu.total() - expected).abs() < 1e-6);
        prop_assert!(mu.mu.iter().all(|m| *m >= 0.0));
    }

    #[test]
    fn soft_vi_fixed_point_has_small_residual(seed in any::<u64>(), gamma in prop::sample::select(vec![0.9, 0.95])) {
        let reward = random_reward(&mut rng(seed));
        let env = Environment::default().with_gamma(gamma).unwrap();
        let sv = soft_value_iteration_from(&reward, &env, gamma, 1.0, 0.01, 10_000, None).unwrap();
        prop_assert!(soft_bellman_residual(&sv.values, &reward, &env, gamma, 1.0) < 0.01);
        sv.policy.check().unwrap();
    }
}

#[test]
fn low_temperature_argmax_matches_hard_value_iteration() {
    let mut r = rng(2);
    for i in 0..50 {
        let gamma = if i % 2 == 0 { 0.9 } else { 0.95 };
        let reward = random_reward(&mut r);
        let env = Environment::default().with_gamma(gamma).unwrap();
        let oracle = hard_optimal_actions(&reward, &env, gamma);
        let sv = soft_value_iteration_from(&reward, &env, gamma, 1e-4, 1e-10, 1_000_000, None).unwrap();
        for s in State::ALL {
            let a = argmax(&sv.q[s.index()]);
            assert!(oracle[s.index()].contains(&a), "reward {i}, {s}: soft {a}, hard {:?}", oracle[s.index()]);
        }
    }
}

#[test]
fn empirical_visitation_converges_to_generating_visitation() {
    let env = it_env(0.9);
    let mut r = rng(8);
    for k in 0..3 {
        let reward = random_reward(&mut r);
        let truth = soft_value_iteration(&reward, &env, &MaxEntConfig::default()).unwrap();
        let t = rollout(&truth, &env, 10_000, 40 + k);
        let est = empirical_policy(&t).unwrap();
        let (a, b) = (expected_state_visitation(&truth, &env, 200), expected_state_visitation(&est, &env, 200));
        let l1 = a.normalized_l1(&b);
        assert!(l1 <= 0.05, "policy {k}: L1 {l1}");
    }
}

#[test]
fn data_gradient_matches_finite_differences() {
    let env = it_env(0.9);
    let truth = soft_value_iteration(&random_reward(&mut rng(4)), &env, &MaxEntConfig::default()).unwrap();
    let expert = expert_visitation(&rollout(&truth, &env, 300, 9), 0.9).unwrap();
    let net = RewardNet::init(&[3, 3], 0.5, 17);
    let sv = soft_value_iteration_from(&net.rewards(), &env, 0.9, 1.0, 1e-14, 1_000_000, None).unwrap();
    let learner = expected_state_visitation(&sv.policy, &env, 2_000);
    let grad = data_gradient(&net, &expert, &learner);

    let mut r = rng(6);
    let h = 1e-5;
    for _ in 0..20 {
        let i = r.random_range(0..grad.len());
        let at = |delta: f64| {
            let mut n = net.clone();
            n.net.params[i] += delta;
            data_objective(&n, &expert, &env, 1.0, 1e-14).unwrap()
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        let rel = (fd - grad[i]).abs() / grad[i].abs().max(fd.abs()).max(1e-8);
        assert!(rel <= 1e-4, "param {i}: analytic {} fd {fd} rel {rel}", grad[i]);
    }
}

#[test]
fn gradient_norm_settles_late_in_training() {
    let env = it_env(0.9);
    let truth = soft_value_iteration(&random_reward(&mut rng(1)), &env, &MaxEntConfig::default()).unwrap();
    let t = rollout(&truth, &env, 5_000, 1);
    let out = train_maxent_irl(&t, &env, &MaxEntConfig::default()).unwrap();
    let norms: Vec<f64> = out.history.iter().map(|e| e.grad_norm).collect();
    let n = norms.len();
    let w = n / 10;
    let median = |xs: &[f64]| {
        let mut v = xs.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let (a, b) = (median(&norms[n - w..n - w / 2]), median(&norms[n - w / 2..]));
    assert!(b <= a, "gradient-norm medians over the last tenth: {a} then {b}");
    out.policy.check().unwrap();
    assert_eq!(out.policy.source, PolicySource::MaxentIrl);
}
