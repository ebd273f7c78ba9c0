mod common;

use proptest::prelude::*;
use trollscope::ingest::{decode_trajectory, encode_events, filter_min_activity, read_event_log, truncate_first_n, EventKind};
use trollscope::mdp::{initial_states, legal_next_states, validate_trajectory, Violation, UNIFORM_AGREEMENT};
use trollscope::simulate::rollout;
use trollscope::{Action, Environment, Label, Policy, PolicySource, RawEvent, Stance, State, UserEventLog};

use common::*;

#[test]
fn transition_table_examples() {
    assert_eq!(legal_next_states(State::InitialThread, Action::RootComment), &[State::EngagedRootComment]);
    assert_eq!(legal_next_states(State::GetReply(Stance::Agree), Action::WaitReply), &stance_states());
    assert_eq!(legal_next_states(State::EngagedReply(Stance::Disagree), Action::CreateThread), &[State::InitialThread]);
    let init = initial_states();
    assert_eq!(init.len(), 5);
    assert_eq!(
        init.iter().map(|s| s.name()).collect::<Vec<_>>(),
        ["IT", "IRC", "IR+", "IR~", "IR-"]
    );
}

#[test]
fn successor_sets_have_expected_sizes() {
    for s in State::ALL {
        for a in Action::ALL {
            let n = legal_next_states(s, a).len();
            assert_eq!(n, if a == Action::WaitReply { 3 } else { 1 }, "({s},{a})");
        }
    }
}

#[test]
fn default_kernel_mass() {
    let env = Environment::new(*Environment::default().d0(), [0.5, 0.3, 0.2], 0.9).unwrap();
    for s in State::ALL {
        for a in Action::ALL {
            let next = legal_next_states(s, a);
            if a == Action::WaitReply {
                let got: Vec<f64> = stance_states().iter().map(|n| env.p(s, a, *n)).collect();
                assert_eq!(got, vec![0.5, 0.3, 0.2]);
            } else {
                assert_eq!(env.p(s, a, next[0]), 1.0);
            }
        }
    }
    assert_eq!(*Environment::default().agreement_dist(), UNIFORM_AGREEMENT);
}

#[test]
fn validation_examples() {
    let ok = trollscope::Trajectory::from_pairs(
        "u",
        &[(State::InitialThread, Action::WaitReply), (State::GetReply(Stance::Agree), Action::Reply(Stance::Agree))],
    );
    assert!(validate_trajectory(&ok).is_ok());
    let bad = trollscope::Trajectory::from_pairs(
        "u",
        &[(State::InitialThread, Action::CreateThread), (State::GetReply(Stance::Agree), Action::WaitReply)],
    );
    let v = validate_trajectory(&bad);
    assert!(matches!(v.violations.as_slice(), [Violation::IllegalTransition { step: 1, .. }]));
}

fn ev(kind: EventKind, stance: Option<Stance>, ts: i64) -> RawEvent {
    RawEvent { user_id: "u".into(), kind, stance, timestamp: ts, discussion_id: None }
}

#[test]
fn encoding_examples() {
    let log = UserEventLog {
        user_id: "u".into(),
        events: vec![
            ev(EventKind::Thread, None, 0),
            ev(EventKind::ReceivedReply, Some(Stance::Agree), 1),
            ev(EventKind::Reply, Some(Stance::Disagree), 2),
        ],
        label: None,
    };
    let t = encode_events(&log).unwrap();
    let pairs: Vec<_> = t.steps.iter().map(|s| (s.state, s.action)).collect();
    assert_eq!(
        pairs,
        [(State::InitialThread, Action::WaitReply), (State::GetReply(Stance::Agree), Action::Reply(Stance::Disagree))]
    );
    assert_eq!(t.terminal_state, Some(State::EngagedReply(Stance::Disagree)));

    let log = UserEventLog {
        user_id: "u".into(),
        events: vec![ev(EventKind::Reply, Some(Stance::Agree), 0), ev(EventKind::Thread, None, 1)],
        label: None,
    };
    let t = encode_events(&log).unwrap();
    assert_eq!(t.steps, vec![trollscope::Step::new(State::InitialReply(Stance::Agree), Action::CreateThread)]);
    assert_eq!(t.terminal_state, Some(State::InitialThread));
}

#[test]
fn activity_filter_keeps_qualifying_users() {
    let logs: Vec<UserEventLog> = (0..99)
        .map(|i| UserEventLog {
            user_id: format!("u{i}"),
            events: (0..10 + i % 5).map(|t| ev(EventKind::Thread, None, t as i64)).collect(),
            label: Some(Label::Troll),
        })
        .collect();
    assert_eq!(filter_min_activity(logs, 10).len(), 99);
}

#[test]
fn log_reader_groups_and_sorts() {
    let text = "{\"user_id\":\"b\",\"kind\":\"thread\",\"ts\":5}\n\n# note\n{\"user_id\":\"a\",\"kind\":\"reply\",\"stance\":\"neutral\",\"ts\":9,\"label\":\"organic\"}\n{\"user_id\":\"b\",\"kind\":\"root_comment\",\"ts\":1}\n";
    let logs = read_event_log(text.as_bytes()).unwrap();
    assert_eq!(logs.iter().map(|l| l.user_id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    assert_eq!(logs[0].label, Some(Label::Organic));
    assert_eq!(logs[1].events.iter().map(|e| e.timestamp).collect::<Vec<_>>(), [1, 5]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn decode_then_encode_is_identity(traj in arb_trajectory(150)) {
        let events = decode_trajectory(&traj, None);
        let back = encode_events(&events).unwrap();
        prop_assert_eq!(&back.steps, &traj.steps);
        prop_assert_eq!(back.terminal_state, traj.terminal_state);
    }

    #[test]
    fn encoded_logs_are_legal(kinds in prop::collection::vec((0usize..4, 0usize..3, 0i64..1000), 1..80)) {
        let events: Vec<RawEvent> = kinds
            .iter()
            .map(|&(k, x, dt)| {
                let kind = [EventKind::Thread, EventKind::RootComment, EventKind::Reply, EventKind::ReceivedReply][k];
                let stance = kind.takes_stance().then(|| Stance::ALL[x]);
                ev(kind, stance, dt)
            })
            .collect();
        let mut log = UserEventLog { user_id: "u".into(), events, label: None };
        log.sort();
        match encode_events(&log) {
            Ok(t) => prop_assert_eq!(t.validate().structural().count(), 0),
            Err(e) => prop_assert!(log.events.iter().all(|e| !e.kind.is_own()), "{e}"),
        }
    }

    #[test]
    fn truncation_is_idempotent(traj in arb_trajectory(120), n in 1usize..150) {
        let once = truncate_first_n(&traj, n).unwrap();
        prop_assert_eq!(truncate_first_n(&once, n).unwrap(), once.clone());
        prop_assert_eq!(once.len(), n.min(traj.len()));
    }

    #[test]
    fn simulator_output_is_legal(policy in arb_policy(), len in 1usize..300, seed in any::<u64>()) {
        let t = rollout(&policy, &Environment::default(), len, seed);
        prop_assert!(t.validate().is_ok());
        prop_assert_eq!(t.len(), len);
    }
}

#[test]
fn uniform_rollouts_reach_every_successor_state() {
    // Initial states other than IT are only ever entered at t = 0.
    let t = rollout(&Policy::uniform(PolicySource::Scripted), &Environment::default(), 5000, 3);
    for s in State::ALL.into_iter().filter(|s| !s.is_initial() || *s == State::InitialThread) {
        assert!(t.states().skip(1).any(|x| x == s), "{s}");
    }
    assert!(t.states().skip(1).all(|x| !x.is_initial() || x == State::InitialThread));
}
