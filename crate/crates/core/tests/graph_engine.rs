mod common;

use std::collections::BTreeSet;

use cbfe_aif::agent::{slide, AgentState};
use cbfe_aif::dist::{Categorical, PointMass};
use cbfe_aif::graph::{
    build_bandit_graph, build_future_model, marginal, run_schedule, BeliefState, EdgeConstraint, FactorGraph,
    GraphBuilder, NodeKind, Rule, RunOptions, Schedule,
};
use cbfe_aif::objectives::{
    bethe_free_energy, brute_force_cbfe, brute_force_evidence, minimize_bfe, minimize_cbfe, RestartMode,
};
use cbfe_aif::tmaze::{build_bandit_model, build_tmaze_model, policy_from_moves, IndexCodec};
use cbfe_aif::{Error, ModelSpec, Policy};
use common::{assert_close, enumerate, random_model};
use proptest::prelude::*;

fn tmaze(alpha: f64, c: f64) -> ModelSpec {
    build_tmaze_model(alpha, c, 2, 1).unwrap()
}

fn labels(graph: &FactorGraph, schedule: &Schedule) -> Vec<(String, String)> {
    schedule
        .messages()
        .iter()
        .map(|m| (graph.node(m.node).label.clone(), graph.edge(m.edge).label.clone()))
        .collect()
}

/// Every scheduled message only reads messages computed before it.
fn assert_dependency_order(graph: &FactorGraph, schedule: &Schedule) {
    let mut done: BTreeSet<(usize, usize)> = BTreeSet::new();
    for m in schedule.messages() {
        let node = graph.node(m.node);
        let out_port = node.port_of(m.edge).unwrap();
        let toward_input = m.rule == Rule::Variational && out_port == 0;
        if !toward_input {
            for (p, &e) in node.ports().iter().enumerate() {
                if p == out_port || graph.clamp_value(e).is_some() {
                    continue;
                }
                if let Some((other, _)) = graph.other_end(e, m.node) {
                    assert!(
                        done.contains(&(other.0, e.0)),
                        "{} needs the message on {}",
                        node.label,
                        graph.edge(e).label
                    );
                }
                if m.rule == Rule::Variational {
                    assert!(
                        done.contains(&(m.node.0, e.0)),
                        "{} needs its own message on {}",
                        node.label,
                        graph.edge(e).label
                    );
                }
            }
        }
        assert!(done.insert((m.node.0, m.edge.0)), "message scheduled twice");
    }
}

#[test]
fn two_step_schedule_has_fourteen_messages() {
    let spec = tmaze(0.9, 2.0);
    let policy = policy_from_moves(&[4, 3]).unwrap();
    for constrain in [false, true] {
        let model = build_future_model(&spec, &spec.d0, &policy, constrain).unwrap();
        let schedule = Schedule::for_graph(&model.graph).unwrap();
        assert_eq!(schedule.len(), 14);
        assert_dependency_order(&model.graph, &schedule);

        let got: BTreeSet<_> = labels(&model.graph, &schedule).into_iter().collect();
        let mut want = BTreeSet::new();
        for (a, e, b) in [
            ("d", "x0", "B1"),
            ("B1", "x1'", "=1"),
            ("=1", "x1''", "A1"),
            ("=1", "x1'''", "B2"),
            ("A1", "y1", "c1"),
            ("B2", "x2", "A2"),
            ("A2", "y2", "c2"),
        ] {
            want.insert((a.to_string(), e.to_string()));
            want.insert((b.to_string(), e.to_string()));
        }
        assert_eq!(got, want);

        for m in schedule.messages() {
            let observation = matches!(model.graph.node(m.node).label.as_str(), "A1" | "A2");
            let expected = if constrain && observation {
                Rule::Variational
            } else {
                Rule::SumProduct
            };
            assert_eq!(m.rule, expected, "{}", model.graph.node(m.node).label);
        }
        let targets = schedule.em_targets().len();
        assert_eq!(targets, if constrain { 2 } else { 0 });
    }
}

#[test]
fn bandit_schedule_is_a_single_message() {
    let spec = build_bandit_model();
    let graph = build_bandit_graph(&spec, 1, true).unwrap();
    let schedule = Schedule::for_graph(&graph).unwrap();
    assert_eq!(labels(&graph, &schedule), vec![("A".to_string(), "y".to_string())]);
    assert_eq!(graph.edge(graph.find_edge("y").unwrap()).degree(), 1);

    let state = run_schedule(&graph, &schedule, RunOptions::default(), &[1], |_| {}).unwrap();
    assert!(state.converged);
    assert_eq!(state.targets(), vec![0]);
    assert!(state.sweeps <= 2);
}

#[test]
fn bfe_marginals_match_enumeration() {
    for (alpha, c) in [(0.9, 0.0), (0.9, 2.0), (1.0, 2.0)] {
        let spec = tmaze(alpha, c);
        for policy in Policy::enumerate(4, 2) {
            let model = build_future_model(&spec, &spec.d0, &policy, false).unwrap();
            let (report, state) = minimize_bfe(&model.graph).unwrap();
            let exact = enumerate(&spec, &spec.d0, &policy, None);
            assert!((report.value + exact.evidence.log2()).abs() < 1e-9);
            let g = &model.graph;
            for (label, want) in [
                ("x0", &exact.states[0]),
                ("x1'", &exact.states[1]),
                ("x1''", &exact.states[1]),
                ("x1'''", &exact.states[1]),
                ("x2", &exact.states[2]),
                ("y1", &exact.observations[0]),
                ("y2", &exact.observations[1]),
            ] {
                let got = marginal(g, &state, g.find_edge(label).unwrap()).unwrap();
                assert_close(got.probs(), want, 1e-9, &format!("{policy} {label}"));
            }
        }
    }
}

#[test]
fn cbfe_state_marginals_are_the_pinned_posterior() {
    let spec = tmaze(0.9, 2.0);
    for policy in Policy::enumerate(4, 2) {
        let model = build_future_model(&spec, &spec.d0, &policy, true).unwrap();
        let (report, state) = minimize_cbfe(&model.graph, RestartMode::Exhaustive).unwrap();
        let y = report.optimal_outcomes.clone().unwrap();
        let exact = enumerate(&spec, &spec.d0, &policy, Some(&y));
        for k in 0..=2 {
            let got = marginal(&model.graph, &state, model.layout.state_edge(k)).unwrap();
            assert_close(got.probs(), &exact.states[k], 1e-9, &format!("{policy} x{k}"));
        }
        for (k, &e) in model.layout.observations().iter().enumerate() {
            assert_eq!(
                state.belief(&model.graph, e).unwrap().point_mass().unwrap().index(),
                y[k]
            );
        }
    }
}

#[test]
fn state_marginal_examples() {
    let spec = tmaze(0.9, 0.0);
    let policy = policy_from_moves(&[4, 3]).unwrap();
    let model = build_future_model(&spec, &spec.d0, &policy, false).unwrap();
    let (_, state) = minimize_bfe(&model.graph).unwrap();
    let x0 = marginal(&model.graph, &state, model.layout.state_edge(0)).unwrap();
    assert_close(x0.probs(), spec.d0.probs(), 1e-12, "x0");
    let x1 = marginal(&model.graph, &state, model.layout.state_edge(1)).unwrap();
    let mut want = vec![0.0; 8];
    want[IndexCodec::state(4, 2).unwrap()] = 0.5;
    want[IndexCodec::state(4, 3).unwrap()] = 0.5;
    assert_close(x1.probs(), &want, 1e-12, "x1");

    let spec = tmaze(0.9, 2.0);
    let model = build_future_model(&spec, &spec.d0, &policy, true).unwrap();
    let cue_right = IndexCodec::observation(4, 2).unwrap();
    let reward = IndexCodec::observation(3, 3).unwrap();
    let state = run_schedule(
        &model.graph,
        &Schedule::for_graph(&model.graph).unwrap(),
        RunOptions::default(),
        &[cue_right, reward],
        |_| {},
    )
    .unwrap();
    let x1 = marginal(&model.graph, &state, model.layout.state_edge(1)).unwrap();
    assert_eq!(x1.probs()[IndexCodec::state(4, 3).unwrap()], 1.0);
}

#[test]
fn normalization_does_not_change_beliefs() {
    let spec = tmaze(0.9, 2.0);
    for moves in [[4, 3], [2, 1], [1, 1], [4, 4]] {
        let policy = policy_from_moves(&moves).unwrap();
        for constrain in [false, true] {
            let model = build_future_model(&spec, &spec.d0, &policy, constrain).unwrap();
            let g = &model.graph;
            let schedule = Schedule::for_graph(g).unwrap();
            let init: Vec<usize> = moves
                .iter()
                .map(|&pos| IndexCodec::observation(pos, 1).unwrap())
                .take(g.em_targets().len())
                .collect();
            let run = |normalize| {
                run_schedule(
                    g,
                    &schedule,
                    RunOptions {
                        max_iters: 50,
                        normalize,
                    },
                    &init,
                    |_| {},
                )
            };
            match (run(true), run(false)) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a.targets(), b.targets());
                    for e in g.edge_ids().filter(|e| g.clamp_value(*e).is_none()) {
                        let pa = a.belief(g, e).unwrap().to_categorical();
                        let pb = b.belief(g, e).unwrap().to_categorical();
                        assert_close(pa.probs(), pb.probs(), 1e-12, &g.edge(e).label);
                    }
                    let (fa, fb) = (bethe_free_energy(g, &a).unwrap(), bethe_free_energy(g, &b).unwrap());
                    assert!((fa - fb).abs() < 1e-12 || fa == fb);
                }
                (Err(a), Err(b)) => assert_eq!(a, b),
                (a, b) => panic!("normalization changed feasibility: {a:?} vs {b:?}"),
            }
        }
    }
}

#[test]
fn em_never_increases_the_objective() {
    for (alpha, c) in [(0.9, 2.0), (0.5, 2.0), (1.0, 0.0)] {
        let spec = tmaze(alpha, c);
        for moves in [[4, 3], [4, 2], [1, 4], [2, 3]] {
            let policy = policy_from_moves(&moves).unwrap();
            let model = build_future_model(&spec, &spec.d0, &policy, true).unwrap();
            let g = &model.graph;
            let schedule = Schedule::for_graph(g).unwrap();
            for y1 in 0..16 {
                for y2 in (0..16).step_by(3) {
                    let mut values = Vec::new();
                    let run = run_schedule(g, &schedule, RunOptions::default(), &[y1, y2], |s| {
                        values.push(bethe_free_energy(g, s).unwrap())
                    });
                    if run.is_err() {
                        continue;
                    }
                    for w in values.windows(2) {
                        assert!(w[1] <= w[0] + 1e-12, "{moves:?} from ({y1},{y2}): {values:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn infeasible_start_names_the_edge() {
    let spec = tmaze(1.0, 0.0);
    let model = build_future_model(&spec, &spec.d0, &policy_from_moves(&[4, 3]).unwrap(), true).unwrap();
    let schedule = Schedule::for_graph(&model.graph).unwrap();
    let start = [
        IndexCodec::observation(1, 1).unwrap(),
        IndexCodec::observation(1, 1).unwrap(),
    ];
    match run_schedule(&model.graph, &schedule, RunOptions::default(), &start, |_| {}) {
        Err(Error::Inconsistency { edge }) => assert!(model.graph.find_edge(&edge).is_some(), "{edge}"),
        other => panic!("expected an inconsistency, got {other:?}"),
    }
}

#[test]
fn marginal_before_running_is_an_error() {
    let spec = tmaze(0.9, 2.0);
    let model = build_future_model(&spec, &spec.d0, &policy_from_moves(&[4, 3]).unwrap(), false).unwrap();
    let state = BeliefState::new(&model.graph, &[]).unwrap();
    assert!(matches!(
        marginal(&model.graph, &state, model.layout.state_edge(1)),
        Err(Error::State(_))
    ));
    assert!(matches!(BeliefState::new(&model.graph, &[0]), Err(Error::Model(_))));
}

#[test]
fn observation_edges_carry_the_constraint() {
    let spec = tmaze(0.9, 2.0);
    let model = build_future_model(&spec, &spec.d0, &policy_from_moves(&[4, 3]).unwrap(), true).unwrap();
    let g = &model.graph;
    assert_eq!(g.em_targets(), model.layout.observations());
    for e in g.edge_ids() {
        let is_obs = model.layout.observations().contains(&e);
        assert_eq!(g.edge(e).constraint == EdgeConstraint::PointMass, is_obs);
    }
    assert!(g.without_constraints().em_targets().is_empty());
    assert!(model.layout.steps[1].equality.is_none());
    assert_eq!(g.nodes().len(), 10);
}

/// The filtering update equals a graph run of prior → transition → state →
/// observation factor with the control and the observation clamped.
#[test]
fn slide_matches_a_graph_run() {
    let spec = tmaze(0.9, 2.0);
    let priors = [
        spec.d0.clone(),
        Categorical::one_hot(8, IndexCodec::state(4, 3).unwrap()),
        Categorical::new(vec![0.3, 0.1, 0.05, 0.05, 0.1, 0.1, 0.2, 0.1]).unwrap(),
    ];
    for prior in &priors {
        for u in 0..4 {
            for y in 0..16 {
                let state = AgentState {
                    current_prior: prior.clone(),
                    current_time: 1,
                };
                let mut b = GraphBuilder::new();
                let prev = b.add_edge("x_prev", 8);
                let x = b.add_edge("x", 8);
                let ctl = b.add_edge("u", 4);
                let obs = b.add_edge("y", 16);
                let sel = PointMass::new(u, 4).unwrap();
                b.add_node(NodeKind::CategoricalPrior(prior.clone()), "d", &[prev])
                    .unwrap();
                b.add_node(NodeKind::Clamp(sel), "u", &[ctl]).unwrap();
                b.add_node(
                    NodeKind::Multiplexer {
                        matrices: spec.transitions.clone(),
                        selector: sel,
                    },
                    "B",
                    &[prev, x, ctl],
                )
                .unwrap();
                b.add_node(NodeKind::DiscreteTransition(spec.observation.clone()), "A", &[x, obs])
                    .unwrap();
                b.add_node(NodeKind::Clamp(PointMass::new(y, 16).unwrap()), "y", &[obs])
                    .unwrap();
                let g = b.build().unwrap();
                let schedule = Schedule::for_graph(&g).unwrap();
                match (
                    slide(&state, &spec, u, y),
                    run_schedule(&g, &schedule, RunOptions::default(), &[], |_| {}),
                ) {
                    (Ok(next), Ok(run)) => {
                        let q = marginal(&g, &run, x).unwrap();
                        assert_close(next.current_prior.probs(), q.probs(), 1e-12, "posterior");
                    }
                    (Err(Error::Inconsistency { .. }), run) => {
                        assert!(run.is_err() || marginal(&g, &run.unwrap(), x).is_err());
                    }
                    (a, b) => panic!("u={u} y={y}: {a:?} / {b:?}"),
                }
            }
        }
    }
}

#[test]
fn builder_rejects_malformed_graphs() {
    let mut b = GraphBuilder::new();
    let e = b.add_edge("e", 2);
    assert!(b.add_node(NodeKind::Equality, "=", &[e, e]).is_err());
    assert!(b
        .add_node(NodeKind::CategoricalPrior(Categorical::uniform(3)), "d", &[e])
        .is_err());

    let mut b = GraphBuilder::new();
    let (e1, e2, e3, e4) = (
        b.add_edge("a", 2),
        b.add_edge("b", 2),
        b.add_edge("c", 2),
        b.add_edge("d", 2),
    );
    b.add_node(NodeKind::Equality, "=1", &[e1, e2, e3]).unwrap();
    b.add_node(NodeKind::Equality, "=2", &[e1, e2, e4]).unwrap();
    assert!(matches!(b.build(), Err(Error::Model(_))));
}

fn random_policy(seed: u64, controls: usize, horizon: usize) -> Policy {
    Policy::new((0..horizon).map(|k| (seed as usize / (k + 1)) % controls).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bfe_is_exact_on_random_chains(
        seed in any::<u64>(),
        states in 2usize..4,
        outcomes in 2usize..4,
        controls in 1usize..3,
        horizon in 1usize..4,
    ) {
        let spec = random_model(seed, states, outcomes, controls, horizon);
        let policy = random_policy(seed, controls, horizon);
        let model = build_future_model(&spec, &spec.d0, &policy, false).unwrap();
        let (report, state) = minimize_bfe(&model.graph).unwrap();
        let z = brute_force_evidence(&spec, &spec.d0, &policy).unwrap();
        prop_assert!((report.value + z.log2()).abs() < 1e-9);
        let exact = enumerate(&spec, &spec.d0, &policy, None);
        prop_assert!((exact.evidence - z).abs() < 1e-12);
        for k in 0..=horizon {
            let q = marginal(&model.graph, &state, model.layout.state_edge(k)).unwrap();
            for (a, b) in q.probs().iter().zip(&exact.states[k]) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exhaustive_em_matches_enumeration_on_random_chains(
        seed in any::<u64>(),
        states in 2usize..4,
        outcomes in 2usize..4,
        horizon in 1usize..4,
    ) {
        let spec = random_model(seed, states, outcomes, 2, horizon);
        let policy = random_policy(seed, 2, horizon);
        let model = build_future_model(&spec, &spec.d0, &policy, true).unwrap();
        let (report, state) = minimize_cbfe(&model.graph, RestartMode::Exhaustive).unwrap();
        let (exact, _) = brute_force_cbfe(&spec, &spec.d0, &policy).unwrap();
        prop_assert!((report.value - exact).abs() < 1e-9, "{} vs {}", report.value, exact);
        let recomputed = bethe_free_energy(&model.graph, &state).unwrap();
        prop_assert!((recomputed - report.value).abs() < 1e-12);
    }

    #[test]
    fn unnormalized_runs_agree_on_random_chains(seed in any::<u64>(), horizon in 1usize..4) {
        let spec = random_model(seed, 3, 3, 2, horizon);
        let policy = random_policy(seed, 2, horizon);
        let model = build_future_model(&spec, &spec.d0, &policy, true).unwrap();
        let g = &model.graph;
        let schedule = Schedule::for_graph(g).unwrap();
        let init = vec![(seed % 3) as usize; horizon];
        let a = run_schedule(g, &schedule, RunOptions { max_iters: 50, normalize: true }, &init, |_| {}).unwrap();
        let b = run_schedule(g, &schedule, RunOptions { max_iters: 50, normalize: false }, &init, |_| {}).unwrap();
        prop_assert_eq!(a.targets(), b.targets());
        prop_assert_eq!(a.sweeps, b.sweeps);
        for k in 0..=horizon {
            let e = model.layout.state_edge(k);
            let (pa, pb) = (marginal(g, &a, e).unwrap(), marginal(g, &b, e).unwrap());
            for (x, y) in pa.probs().iter().zip(pb.probs()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
