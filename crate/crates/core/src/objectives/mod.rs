//! Planning objectives: Bethe free energy, point-mass constrained Bethe free
//! energy, expected free energy, their decompositions and enumeration oracles.

mod decompose;
mod efe;
mod oracle;

pub use decompose::{bfe_decompose, cbfe_decompose, cbfe_em_trace, BfeDecomposition, CbfeDecomposition, EmIterate};
pub use efe::{efe, efe_instantaneous_check, efe_terms, posterior_predictive, EfeTerm};
pub use oracle::{brute_force_cbfe, brute_force_evidence, outcome_evidence, ENUMERATION_LIMIT};

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{argmax_lowest, plogq, Categorical};
use crate::error::{Error, Result};
use crate::graph::{
    build_future_model, marginal, run_schedule, BeliefState, FactorGraph, FutureModel, RunOptions, Schedule,
};
use crate::model::{ModelSpec, Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Bfe,
    Cbfe,
    Efe,
}

impl Objective {
    pub fn as_str(&self) -> &'static str {
        match self {
            Objective::Bfe => "bfe",
            Objective::Cbfe => "cbfe",
            Objective::Efe => "efe",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bfe" => Ok(Objective::Bfe),
            "cbfe" => Ok(Objective::Cbfe),
            "efe" => Ok(Objective::Efe),
            other => Err(Error::Model(format!("unknown objective `{other}`"))),
        }
    }
}

/// How EM is started for the constrained objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RestartMode {
    /// One run from the modes of the unconstrained outcome marginals.
    ModeInit,
    /// One run from every joint outcome assignment; the best result is kept.
    #[default]
    Exhaustive,
}

impl FromStr for RestartMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mode-init" | "mode" => Ok(RestartMode::ModeInit),
            "exhaustive" => Ok(RestartMode::Exhaustive),
            other => Err(Error::Model(format!("unknown restart mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeEnergyReport {
    pub objective: Objective,
    /// Bits.
    pub value: f64,
    pub optimal_outcomes: Option<Vec<usize>>,
    pub converged: bool,
    pub sweeps: usize,
}

/// Bethe free energy in bits of the beliefs held by `state`.
///
/// Factor joints are rebuilt from the incoming messages; point-mass and
/// clamped edges have zero entropy. Mass on an impossible factor entry gives
/// `+∞`.
pub fn bethe_free_energy(graph: &FactorGraph, state: &BeliefState) -> Result<f64> {
    let mut total = 0.0;
    for node in graph.node_ids() {
        let joint = state.node_joint(graph, node)?;
        let kind = &graph.node(node).kind;
        for (flat, &q) in joint.probs.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let f = kind.factor(&joint.values(flat));
            if f == 0.0 {
                return Ok(f64::INFINITY);
            }
            total += q * (q.log2() - f.log2());
        }
    }
    for edge in graph.edge_ids() {
        let d = graph.edge(edge).degree();
        if d > 1 {
            total += (d - 1) as f64 * state.belief(graph, edge)?.entropy();
        }
    }
    Ok(total)
}

/// Sum-product on the graph with constraints removed.
pub fn minimize_bfe(graph: &FactorGraph) -> Result<(FreeEnergyReport, BeliefState)> {
    let graph = graph.without_constraints();
    let schedule = Schedule::for_graph(&graph)?;
    let state = run_schedule(&graph, &schedule, RunOptions::default(), &[], |_| {})?;
    let value = bethe_free_energy(&graph, &state)?;
    Ok((
        FreeEnergyReport {
            objective: Objective::Bfe,
            value,
            optimal_outcomes: None,
            converged: state.converged,
            sweeps: state.sweeps,
        },
        state,
    ))
}

/// Modes of the unconstrained marginals of the EM targets.
///
/// The per-edge modes can be jointly impossible (for example a cue and a
/// reward that contradict each other). In that case each target is instead
/// set to its mode given the targets before it.
pub fn mode_init(graph: &FactorGraph) -> Result<Vec<usize>> {
    let targets = graph.em_targets();
    let free = graph.without_constraints();
    let (_, state) = minimize_bfe(&free)?;
    let modes = targets
        .iter()
        .map(|e| Ok(argmax_lowest(marginal(&free, &state, *e)?.probs())))
        .collect::<Result<Vec<_>>>()?;
    let schedule = Schedule::for_graph(graph)?;
    let mut probe = BeliefState::new(graph, &modes)?;
    match probe.sweep(graph, &schedule, true) {
        Ok(()) => return Ok(modes),
        Err(Error::Inconsistency { .. }) => {}
        Err(e) => return Err(e),
    }
    let mut chosen = Vec::with_capacity(targets.len());
    for k in 0..targets.len() {
        let partial = graph.with_constraints(&targets[..k]);
        let schedule = Schedule::for_graph(&partial)?;
        let mut state = BeliefState::new(&partial, &chosen)?;
        state.sweep(&partial, &schedule, true)?;
        chosen.push(argmax_lowest(marginal(&partial, &state, targets[k])?.probs()));
    }
    Ok(chosen)
}

/// EM over the point-mass constrained graph.
///
/// In exhaustive mode every joint assignment of the targets starts a run.
/// Starts whose outcomes are impossible under the model are skipped. A sweep
/// is a deterministic map from targets to proposed targets, so proposals are
/// cached and shared between runs.
pub fn minimize_cbfe(graph: &FactorGraph, mode: RestartMode) -> Result<(FreeEnergyReport, BeliefState)> {
    let schedule = Schedule::for_graph(graph)?;
    let options = RunOptions::default();
    let finish = |state: BeliefState| -> Result<(FreeEnergyReport, BeliefState)> {
        let value = bethe_free_energy(graph, &state)?;
        Ok((
            FreeEnergyReport {
                objective: Objective::Cbfe,
                value,
                optimal_outcomes: Some(state.targets()),
                converged: state.converged,
                sweeps: state.sweeps,
            },
            state,
        ))
    };
    match mode {
        RestartMode::ModeInit => {
            let init = mode_init(graph)?;
            finish(run_schedule(graph, &schedule, options, &init, |_| {})?)
        }
        RestartMode::Exhaustive => {
            let sizes: Vec<usize> = graph.em_targets().iter().map(|e| graph.edge(*e).size).collect();
            let total = sizes.iter().map(|s| *s as u128).product::<u128>();
            if total > ENUMERATION_LIMIT {
                return Err(Error::SizeGuard {
                    size: total,
                    limit: ENUMERATION_LIMIT,
                });
            }
            let mut proposals: HashMap<Vec<usize>, Option<Vec<usize>>> = HashMap::new();
            let mut propose = |targets: &Vec<usize>| -> Result<Option<Vec<usize>>> {
                if let Some(p) = proposals.get(targets) {
                    return Ok(p.clone());
                }
                let mut state = BeliefState::new(graph, targets)?;
                let next = match state
                    .sweep(graph, &schedule, options.normalize)
                    .and_then(|_| state.em_proposal(graph))
                {
                    Ok(next) => Some(next),
                    Err(Error::Inconsistency { .. }) => None,
                    Err(e) => return Err(e),
                };
                proposals.insert(targets.clone(), next.clone());
                Ok(next)
            };
            // (final targets, sweeps, converged) of the best run so far
            let mut best: Option<(f64, Vec<usize>, usize, bool)> = None;
            let mut values: HashMap<Vec<usize>, f64> = HashMap::new();
            for code in 0..total as usize {
                let mut current = decode(code, &sizes);
                let mut sweeps = 0;
                let mut converged = false;
                let mut feasible = true;
                while sweeps < options.max_iters {
                    sweeps += 1;
                    match propose(&current)? {
                        None => {
                            feasible = false;
                            break;
                        }
                        Some(next) if next == current => {
                            converged = true;
                            break;
                        }
                        Some(next) if sweeps < options.max_iters => current = next,
                        Some(_) => {}
                    }
                }
                if !feasible {
                    continue;
                }
                let value = match values.get(&current) {
                    Some(v) => *v,
                    None => {
                        let mut state = BeliefState::new(graph, &current)?;
                        state.sweep(graph, &schedule, options.normalize)?;
                        let v = bethe_free_energy(graph, &state)?;
                        values.insert(current.clone(), v);
                        v
                    }
                };
                let better = match &best {
                    None => true,
                    Some((b, ..)) => value < b - 1e-12,
                };
                if better {
                    best = Some((value, current, sweeps, converged));
                }
            }
            let (_, targets, sweeps, converged) = best.ok_or_else(|| Error::Inconsistency {
                edge: "every outcome assignment is impossible".into(),
            })?;
            let mut state = BeliefState::new(graph, &targets)?;
            state.sweep(graph, &schedule, options.normalize)?;
            state.sweeps = sweeps;
            state.converged = converged;
            finish(state)
        }
    }
}

fn decode(mut code: usize, sizes: &[usize]) -> Vec<usize> {
    let mut out = vec![0; sizes.len()];
    for (slot, size) in out.iter_mut().zip(sizes).rev() {
        *slot = code % size;
        code /= size;
    }
    out
}

/// A solved future model: graph, layout, beliefs and report.
#[derive(Debug, Clone)]
pub struct Solution {
    pub model: FutureModel,
    pub state: BeliefState,
    pub report: FreeEnergyReport,
}

pub fn solve_bfe(spec: &ModelSpec, prior: &Categorical, policy: &Policy) -> Result<Solution> {
    let model = build_future_model(spec, prior, policy, false)?;
    let (report, state) = minimize_bfe(&model.graph)?;
    Ok(Solution { model, state, report })
}

pub fn solve_cbfe(spec: &ModelSpec, prior: &Categorical, policy: &Policy, mode: RestartMode) -> Result<Solution> {
    let model = build_future_model(spec, prior, policy, true)?;
    let (report, state) = minimize_cbfe(&model.graph, mode)?;
    Ok(Solution { model, state, report })
}

pub fn optimize_bfe(spec: &ModelSpec, prior: &Categorical, policy: &Policy) -> Result<FreeEnergyReport> {
    Ok(solve_bfe(spec, prior, policy)?.report)
}

pub fn optimize_cbfe(
    spec: &ModelSpec,
    prior: &Categorical,
    policy: &Policy,
    mode: RestartMode,
) -> Result<FreeEnergyReport> {
    Ok(solve_cbfe(spec, prior, policy, mode)?.report)
}

pub fn optimize_efe(spec: &ModelSpec, prior: &Categorical, policy: &Policy) -> Result<FreeEnergyReport> {
    Ok(FreeEnergyReport {
        objective: Objective::Efe,
        value: efe(spec, prior, policy)?,
        optimal_outcomes: None,
        converged: true,
        sweeps: 0,
    })
}

/// Evaluates one objective for one policy.
pub fn evaluate(
    objective: Objective,
    spec: &ModelSpec,
    prior: &Categorical,
    policy: &Policy,
    mode: RestartMode,
) -> Result<FreeEnergyReport> {
    match objective {
        Objective::Bfe => optimize_bfe(spec, prior, policy),
        Objective::Cbfe => optimize_cbfe(spec, prior, policy, mode),
        Objective::Efe => optimize_efe(spec, prior, policy),
    }
}

/// `U[q, f] − H[q]` of a distribution against a positive-or-zero factor.
pub(crate) fn energy_minus_entropy(q: &[f64], f: &[f64]) -> f64 {
    q.iter().zip(f).map(|(&p, &fv)| plogq(p, p) - plogq(p, fv)).sum()
}
