mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use trollscope::policy::{empirical_policy, visitation_frequency};
use trollscope::simulate::rollout;
use trollscope::{Action, Environment, Error, Policy, PolicySource, Stance, State, Trajectory, N_STATES};

use common::*;

const IT: State = State::InitialThread;

fn example() -> Trajectory {
    Trajectory::from_pairs(
        "u",
        &[
            (IT, Action::WaitReply),
            (State::GetReply(Stance::Agree), Action::Reply(Stance::Agree)),
            (State::EngagedReply(Stance::Agree), Action::WaitReply),
        ],
    )
}

#[test]
fn visitation_examples() {
    let rho = visitation_frequency(&example()).unwrap();
    let expected = oracle_visitation(&example());
    assert_eq!(rho.rho, expected);
    assert_eq!(rho.get(IT, Action::WaitReply), 1.0 / 3.0);
    assert_eq!(rho.get(State::GetReply(Stance::Agree), Action::Reply(Stance::Agree)), 1.0 / 3.0);
    assert_eq!(rho.rho.iter().flatten().filter(|x| **x > 0.0).count(), 3);

    let t = Trajectory::from_pairs("u", &[(IT, Action::CreateThread), (IT, Action::CreateThread)]);
    assert_eq!(visitation_frequency(&t).unwrap().get(IT, Action::CreateThread), 1.0);
}

#[test]
fn empirical_policy_examples() {
    let pi = empirical_policy(&example()).unwrap();
    assert_eq!(pi.prob(IT, Action::WaitReply), 1.0);
    assert_eq!(pi.prob(State::GetReply(Stance::Agree), Action::Reply(Stance::Agree)), 1.0);
    assert_eq!(pi.prob(State::EngagedReply(Stance::Agree), Action::WaitReply), 1.0);
    let uniform_rows = State::ALL.iter().filter(|s| pi.row(**s).iter().all(|p| *p == 1.0 / 6.0)).count();
    assert_eq!(uniform_rows, 9);

    let t = Trajectory::from_pairs(
        "u",
        &[(IT, Action::CreateThread), (IT, Action::RootComment), (IT, Action::CreateThread), (IT, Action::CreateThread)],
    );
    assert_eq!(*empirical_policy(&t).unwrap().row(IT), [0.0, 0.75, 0.25, 0.0, 0.0, 0.0]);
}

#[test]
fn empty_trajectory_is_rejected() {
    let t = Trajectory::new("u", vec![]);
    assert!(matches!(visitation_frequency(&t), Err(Error::EmptyTrajectory)));
    assert!(matches!(empirical_policy(&t), Err(Error::EmptyTrajectory)));
}

#[test]
fn matches_counting_oracle_on_random_trajectories() {
    let mut r = rng(11);
    for i in 0..1000 {
        let len = 3 + (i * 7919) % 498;
        let t = random_trajectory(&mut r, "u", len);
        let rho = visitation_frequency(&t).unwrap();
        let pi = empirical_policy(&t).unwrap();
        let (ro, po) = (oracle_visitation(&t), oracle_policy(&t));
        for s in 0..N_STATES {
            for a in 0..6 {
                assert!((rho.rho[s][a] - ro[s][a]).abs() <= 1e-12);
                assert!((pi.pi[s][a] - po[s][a]).abs() <= 1e-12);
            }
        }
        pi.check().unwrap();
    }
}

proptest! {
    #[test]
    fn estimators_ignore_step_order(traj in arb_trajectory(200), seed in any::<u64>()) {
        let mut steps = traj.steps.clone();
        steps.shuffle(&mut rng(seed));
        let shuffled = Trajectory::new("p", steps);
        let (a, b) = (visitation_frequency(&traj).unwrap(), visitation_frequency(&shuffled).unwrap());
        for (x, y) in a.rho.iter().flatten().zip(b.rho.iter().flatten()) {
            prop_assert!((x - y).abs() <= 1e-15);
        }
        let (a, b) = (empirical_policy(&traj).unwrap(), empirical_policy(&shuffled).unwrap());
        for (x, y) in a.pi.iter().flatten().zip(b.pi.iter().flatten()) {
            prop_assert!((x - y).abs() <= 1e-15);
        }
    }

    #[test]
    fn rows_are_stochastic(traj in arb_trajectory(300)) {
        let pi = empirical_policy(&traj).unwrap();
        for row in &pi.pi {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
        }
        prop_assert!((visitation_frequency(&traj).unwrap().total() - 1.0).abs() < 1e-12);
    }
}

/// Random policy whose every action has probability at least 1/18, so every
/// non-initial state is visited often in a long rollout.
fn spread_policy(seed: u64) -> Policy {
    let mut r = rng(seed);
    let mut pi = [[0.0; 6]; N_STATES];
    for row in &mut pi {
        let w: [f64; 6] = std::array::from_fn(|_| r.random_range(0.5..1.5));
        let z: f64 = w.iter().sum();
        *row = w.map(|x| x / z);
    }
    Policy::from_rows(pi, PolicySource::Scripted).unwrap()
}

#[test]
fn long_rollouts_recover_generating_policy() {
    let env = Environment::default();
    for k in 0..5 {
        let truth = spread_policy(k);
        let t = rollout(&truth, &env, 10_000, 100 + k);
        let est = empirical_policy(&t).unwrap();
        let mut worst: f64 = 0.0;
        // Initial states other than IT only occur at t = 0.
        for s in State::ALL.into_iter().filter(|s| !s.is_initial() || *s == State::InitialThread) {
            for a in Action::ALL {
                worst = worst.max((est.prob(s, a) - truth.prob(s, a)).abs());
            }
        }
        assert!(worst <= 0.05, "policy {k} off by {worst}");
    }
}
