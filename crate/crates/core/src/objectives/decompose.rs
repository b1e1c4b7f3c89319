//! Value decompositions of the (constrained) Bethe free energy.

use serde::{Deserialize, Serialize};

use super::{bethe_free_energy, energy_minus_entropy, outcome_evidence};
use crate::dist::{plogq, Categorical};
use crate::error::{Error, Result};
use crate::graph::{build_future_model, marginal, run_schedule, BeliefState, FutureModel, RunOptions, Schedule};
use crate::model::{ModelSpec, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbfeDecomposition {
    pub cbfe: f64,
    pub opportunity: f64,
    pub risk: f64,
    pub extrinsic_value: f64,
    pub posterior_divergence: f64,
    pub epistemic_value_of_policy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfeDecomposition {
    pub bfe: f64,
    pub expected_divergence: f64,
    pub risk: f64,
    pub expected_extrinsic_value: f64,
}

/// One EM sweep: the outcomes it was computed with and the bound terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmIterate {
    pub outcomes: Vec<usize>,
    pub decomposition: CbfeDecomposition,
}

fn check_model(model: &FutureModel, policy: &Policy) -> Result<()> {
    if model.layout.horizon() != policy.len() {
        return Err(Error::Model(format!(
            "model has {} steps but the policy has {}",
            model.layout.horizon(),
            policy.len()
        )));
    }
    Ok(())
}

fn state_marginal(model: &FutureModel, state: &BeliefState, k: usize) -> Result<Vec<f64>> {
    Ok(marginal(&model.graph, state, model.layout.state_edge(k))?.into_vec())
}

/// `KL[q(x) ‖ p(x|û)]` over the whole state chain, with `q` factorized along
/// the chain by its pairwise beliefs.
fn chain_risk(
    spec: &ModelSpec,
    prior: &Categorical,
    policy: &Policy,
    model: &FutureModel,
    state: &BeliefState,
) -> Result<f64> {
    let n = spec.num_states();
    let graph = &model.graph;
    let q0 = state_marginal(model, state, 0)?;
    let mut risk: f64 = -q0.iter().zip(prior.probs()).map(|(&q, &d)| plogq(q, d)).sum::<f64>();
    for (k, (step, &u)) in model.layout.steps.iter().zip(policy.controls()).enumerate() {
        let joint = state.node_joint(graph, step.transition)?;
        let b = spec.transition(u)?;
        let mut pair = vec![0.0; n * n];
        let mut factor = vec![0.0; n * n];
        for (flat, &p) in joint.probs.iter().enumerate() {
            let v = joint.values(flat);
            pair[v[0] * n + v[1]] += p;
        }
        for i in 0..n {
            for j in 0..n {
                factor[i * n + j] = b.get(j, i);
            }
        }
        risk += energy_minus_entropy(&pair, &factor);
        if k + 1 < policy.len() {
            risk += Categorical::new(state_marginal(model, state, k + 1)?)?.entropy();
        }
    }
    Ok(risk)
}

/// Opportunity, risk and extrinsic value of a constrained solution, plus the
/// evidence form.
pub fn cbfe_decompose(
    spec: &ModelSpec,
    prior: &Categorical,
    policy: &Policy,
    model: &FutureModel,
    state: &BeliefState,
) -> Result<CbfeDecomposition> {
    check_model(model, policy)?;
    let outcomes = state.targets();
    if outcomes.len() != policy.len() {
        return Err(Error::State("the model carries no outcome point masses".into()));
    }
    let goals = spec.window_goals()?;
    let cbfe = bethe_free_energy(&model.graph, state)?;
    let mut opportunity = 0.0;
    let mut extrinsic_value = 0.0;
    for (k, &y) in outcomes.iter().enumerate() {
        let q = state_marginal(model, state, k + 1)?;
        let row = spec.observation.row(y);
        opportunity += q.iter().zip(row).map(|(&p, &a)| plogq(p, a)).sum::<f64>();
        extrinsic_value += goals[k].probs()[y].log2();
    }
    let risk = chain_risk(spec, prior, policy, model, state)?;
    let epistemic_value_of_policy = outcome_evidence(spec, prior, policy, &outcomes)?.log2();
    Ok(CbfeDecomposition {
        cbfe,
        opportunity,
        risk,
        extrinsic_value,
        posterior_divergence: cbfe + epistemic_value_of_policy + extrinsic_value,
        epistemic_value_of_policy,
    })
}

/// Expected divergence, risk and expected extrinsic value of an
/// unconstrained solution.
pub fn bfe_decompose(
    spec: &ModelSpec,
    prior: &Categorical,
    policy: &Policy,
    model: &FutureModel,
    state: &BeliefState,
) -> Result<BfeDecomposition> {
    check_model(model, policy)?;
    let graph = &model.graph;
    let goals = spec.window_goals()?;
    let m = spec.num_observations();
    let bfe = bethe_free_energy(graph, state)?;
    let mut expected_divergence = 0.0;
    let mut expected_extrinsic_value = 0.0;
    for (k, step) in model.layout.steps.iter().enumerate() {
        let qy = marginal(graph, state, step.observation)?;
        expected_extrinsic_value += qy
            .probs()
            .iter()
            .zip(goals[k].probs())
            .map(|(&q, &c)| plogq(q, c))
            .sum::<f64>();
        // ports are [state, observation]
        let joint = state.node_joint(graph, step.observation_node)?;
        let n = joint.sizes[0];
        let qx: Vec<f64> = (0..n).map(|x| joint.probs[x * m..(x + 1) * m].iter().sum()).collect();
        for (x, &px) in qx.iter().enumerate() {
            for y in 0..m {
                let q = joint.probs[x * m + y];
                if q > 0.0 {
                    expected_divergence += plogq(q, q) - plogq(q, px * spec.observation.get(y, x));
                }
            }
        }
    }
    let risk = chain_risk(spec, prior, policy, model, state)?;
    Ok(BfeDecomposition {
        bfe,
        expected_divergence,
        risk,
        expected_extrinsic_value,
    })
}

/// Runs EM from `init` and decomposes the beliefs after every sweep.
pub fn cbfe_em_trace(spec: &ModelSpec, prior: &Categorical, policy: &Policy, init: &[usize]) -> Result<Vec<EmIterate>> {
    let model = build_future_model(spec, prior, policy, true)?;
    let schedule = Schedule::for_graph(&model.graph)?;
    let mut states = Vec::new();
    run_schedule(&model.graph, &schedule, RunOptions::default(), init, |s| {
        states.push(s.clone())
    })?;
    states
        .iter()
        .map(|s| {
            Ok(EmIterate {
                outcomes: s.targets(),
                decomposition: cbfe_decompose(spec, prior, policy, &model, s)?,
            })
        })
        .collect()
}
