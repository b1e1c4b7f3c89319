//! Builders for the planning graphs.

use super::{EdgeId, FactorGraph, GraphBuilder, NodeId, NodeKind};
use crate::dist::{Categorical, PointMass};
use crate::error::{Error, Result};
use crate::model::{BanditSpec, ModelSpec, Policy};

/// One time step of the future chain.
#[derive(Debug, Clone, PartialEq)]
pub struct StepLayout {
    pub control: EdgeId,
    pub clamp: NodeId,
    pub transition: NodeId,
    /// Edge leaving the transition node.
    pub state: EdgeId,
    pub equality: Option<NodeId>,
    /// Edge entering the observation node.
    pub observed_state: EdgeId,
    /// Edge carrying the state on to the next step.
    pub next_state: Option<EdgeId>,
    pub observation_node: NodeId,
    pub observation: EdgeId,
    pub goal: NodeId,
}

/// Where each variable and factor of the future model lives.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainLayout {
    pub prior: NodeId,
    pub initial_state: EdgeId,
    pub steps: Vec<StepLayout>,
}

impl ChainLayout {
    /// An edge whose marginal is the belief over `x_k` (`k = 0` is the
    /// current state).
    pub fn state_edge(&self, k: usize) -> EdgeId {
        if k == 0 {
            self.initial_state
        } else {
            self.steps[k - 1].observed_state
        }
    }

    pub fn observations(&self) -> Vec<EdgeId> {
        self.steps.iter().map(|s| s.observation).collect()
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FutureModel {
    pub graph: FactorGraph,
    pub layout: ChainLayout,
}

/// Builds the chain `prior → B(û₁) → = → A → c₁ … B(û_T) → A → c_T`.
///
/// The last state feeds the observation node directly, so the graph has no
/// equality node at the end of the chain. Goals are taken from the spec's
/// planning window.
pub fn build_future_model(
    spec: &ModelSpec,
    prior: &Categorical,
    policy: &Policy,
    constrain_observations: bool,
) -> Result<FutureModel> {
    spec.check_inputs(prior, policy)?;
    let goals = spec.window_goals()?;
    let n = spec.num_states();
    let m = spec.num_observations();
    let horizon = policy.len();
    let mut b = GraphBuilder::new();

    let x0 = b.add_edge("x0", n);
    let prior_node = b.add_node(NodeKind::CategoricalPrior(prior.clone()), "d", &[x0])?;
    let mut previous = x0;
    let mut steps = Vec::with_capacity(horizon);
    for (i, (&u, goal)) in policy.controls().iter().zip(goals).enumerate() {
        let k = i + 1;
        let last = k == horizon;
        let control = b.add_edge(format!("u{k}"), spec.num_controls());
        let selector = PointMass::new(u, spec.num_controls())?;
        let clamp = b.add_node(NodeKind::Clamp(selector), format!("u{k}"), &[control])?;
        let state = b.add_edge(if last { format!("x{k}") } else { format!("x{k}'") }, n);
        let transition = b.add_node(
            NodeKind::Multiplexer {
                matrices: spec.transitions.clone(),
                selector,
            },
            format!("B{k}"),
            &[previous, state, control],
        )?;
        let (equality, observed_state, next_state) = if last {
            (None, state, None)
        } else {
            let observed = b.add_edge(format!("x{k}''"), n);
            let next = b.add_edge(format!("x{k}'''"), n);
            let eq = b.add_node(NodeKind::Equality, format!("={k}"), &[state, observed, next])?;
            (Some(eq), observed, Some(next))
        };
        let observation = b.add_edge(format!("y{k}"), m);
        if constrain_observations {
            b.constrain(observation);
        }
        let observation_node = b.add_node(
            NodeKind::DiscreteTransition(spec.observation.clone()),
            format!("A{k}"),
            &[observed_state, observation],
        )?;
        let goal = b.add_node(NodeKind::GoalPrior(goal.clone()), format!("c{k}"), &[observation])?;
        steps.push(StepLayout {
            control,
            clamp,
            transition,
            state,
            equality,
            observed_state,
            next_state,
            observation_node,
            observation,
            goal,
        });
        if let Some(next) = next_state {
            previous = next;
        }
    }
    Ok(FutureModel {
        graph: b.build()?,
        layout: ChainLayout {
            prior: prior_node,
            initial_state: x0,
            steps,
        },
    })
}

/// Bandit graph: a clamped control feeding the outcome matrix, with a
/// dangling outcome edge.
pub fn build_bandit_graph(spec: &BanditSpec, control: usize, constrain: bool) -> Result<FactorGraph> {
    if control >= spec.num_controls() {
        return Err(Error::Model(format!(
            "control {control} out of range ({} controls)",
            spec.num_controls()
        )));
    }
    let mut b = GraphBuilder::new();
    let u = b.add_edge("u", spec.num_controls());
    let y = b.add_edge("y", spec.num_outcomes());
    if constrain {
        b.constrain(y);
    }
    b.add_node(
        NodeKind::Clamp(PointMass::new(control, spec.num_controls())?),
        "u",
        &[u],
    )?;
    b.add_node(NodeKind::DiscreteTransition(spec.observation.clone()), "A", &[u, y])?;
    b.build()
}
