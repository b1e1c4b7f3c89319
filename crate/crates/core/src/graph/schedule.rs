//! Schedule construction and execution, including the EM point-mass update.

use serde::Serialize;

use super::message::{compute_message, Incoming, Rule};
use super::{Belief, EdgeConstraint, EdgeId, FactorGraph, NodeId, NodeKind};
use crate::dist::{argmax_lowest, Categorical, PointMass};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ITERS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScheduledMessage {
    pub node: NodeId,
    pub edge: EdgeId,
    pub rule: Rule,
}

/// Ordered message computations plus the edges updated by EM after each sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    messages: Vec<ScheduledMessage>,
    em_targets: Vec<EdgeId>,
}

fn is_clamped(graph: &FactorGraph, edge: EdgeId) -> bool {
    graph.clamp_value(edge).is_some()
}

fn is_target(graph: &FactorGraph, edge: EdgeId) -> bool {
    graph.edge(edge).constraint == EdgeConstraint::PointMass
}

/// Port of `node` that carries an EM target, if any.
fn target_port(graph: &FactorGraph, node: NodeId) -> Option<usize> {
    graph.node(node).ports().iter().position(|e| is_target(graph, *e))
}

fn rule_for(graph: &FactorGraph, node: NodeId) -> Rule {
    let n = graph.node(node);
    let transition_like = matches!(n.kind, NodeKind::DiscreteTransition(_) | NodeKind::Multiplexer { .. });
    if transition_like && target_port(graph, node).is_some() {
        Rule::Variational
    } else {
        Rule::SumProduct
    }
}

impl Schedule {
    /// Builds a dependency-respecting schedule by repeatedly scanning the
    /// candidate messages in edge order and emitting every message whose
    /// inputs are available.
    pub fn for_graph(graph: &FactorGraph) -> Result<Schedule> {
        for node in graph.node_ids() {
            let n = graph.node(node);
            let targets = n.ports().iter().filter(|e| is_target(graph, **e)).count();
            if targets > 1 {
                return Err(Error::Model(format!(
                    "node `{}` touches more than one EM target",
                    n.label
                )));
            }
            if targets == 1
                && !matches!(
                    n.kind,
                    NodeKind::DiscreteTransition(_) | NodeKind::GoalPrior(_) | NodeKind::CategoricalPrior(_)
                )
            {
                return Err(Error::Model(format!(
                    "EM targets must sit between a transition and a prior, not on `{}`",
                    n.label
                )));
            }
        }

        let mut pending: Vec<(ScheduledMessage, Vec<(EdgeId, NodeId)>)> = Vec::new();
        for edge in graph.edge_ids() {
            if is_clamped(graph, edge) {
                continue;
            }
            for &(node, port) in graph.edge(edge).ends() {
                let rule = rule_for(graph, node);
                let deps = dependencies(graph, node, port, rule);
                pending.push((ScheduledMessage { node, edge, rule }, deps));
            }
        }

        let mut done: Vec<(EdgeId, NodeId)> = Vec::new();
        let mut messages = Vec::with_capacity(pending.len());
        while !pending.is_empty() {
            let before = pending.len();
            let mut i = 0;
            while i < pending.len() {
                if pending[i].1.iter().all(|d| done.contains(d)) {
                    let (m, _) = pending.remove(i);
                    done.push((m.edge, m.node));
                    messages.push(m);
                } else {
                    i += 1;
                }
            }
            if pending.len() == before {
                return Err(Error::Model("schedule has unresolved message dependencies".into()));
            }
        }
        Ok(Schedule {
            messages,
            em_targets: graph.em_targets(),
        })
    }

    pub fn messages(&self) -> &[ScheduledMessage] {
        &self.messages
    }

    pub fn em_targets(&self) -> &[EdgeId] {
        &self.em_targets
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }
}

/// Directed messages (edge, sending node) needed before `node` can send out of
/// `port`.
fn dependencies(graph: &FactorGraph, node: NodeId, port: usize, rule: Rule) -> Vec<(EdgeId, NodeId)> {
    let n = graph.node(node);
    let mut deps = Vec::new();
    let free_other_ports = n
        .ports()
        .iter()
        .enumerate()
        .filter(|(p, e)| *p != port && !is_clamped(graph, **e) && !is_target(graph, **e));
    match rule {
        Rule::SumProduct => {
            for (_, &e) in free_other_ports {
                if let Some((other, _)) = graph.other_end(e, node) {
                    deps.push((e, other));
                }
            }
        }
        Rule::Variational => {
            let toward_target = is_target(graph, n.ports()[port]);
            if toward_target {
                for (_, &e) in free_other_ports {
                    deps.push((e, node));
                    if let Some((other, _)) = graph.other_end(e, node) {
                        deps.push((e, other));
                    }
                }
            }
        }
    }
    deps
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub max_iters: usize,
    /// Normalize every message after computing it.
    pub normalize: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            max_iters: DEFAULT_MAX_ITERS,
            normalize: true,
        }
    }
}

/// Messages and point-mass targets produced by a schedule run.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    /// `messages[e][i]` is the message sent by the `i`-th endpoint of edge `e`.
    messages: Vec<[Option<Vec<f64>>; 2]>,
    targets: Vec<(EdgeId, PointMass)>,
    pub sweeps: usize,
    pub converged: bool,
    executed: bool,
}

/// Dense joint belief over a node's ports; port 0 is the most significant
/// index.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub sizes: Vec<usize>,
    pub probs: Vec<f64>,
}

impl Joint {
    /// Decodes a flat index into per-port values.
    pub fn values(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.sizes.len()];
        for (slot, size) in out.iter_mut().zip(&self.sizes).rev() {
            *slot = flat % size;
            flat /= size;
        }
        out
    }
}

impl BeliefState {
    /// A state with no messages yet and the given point-mass targets.
    pub fn new(graph: &FactorGraph, targets: &[usize]) -> Result<BeliefState> {
        let ids = graph.em_targets();
        if ids.len() != targets.len() {
            return Err(Error::Model(format!(
                "{} EM targets but {} initial values",
                ids.len(),
                targets.len()
            )));
        }
        let targets = ids
            .iter()
            .zip(targets)
            .map(|(e, &v)| Ok((*e, PointMass::new(v, graph.edge(*e).size)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut messages: Vec<[Option<Vec<f64>>; 2]> = vec![[None, None]; graph.edges().len()];
        for e in graph.edge_ids() {
            for (i, &(node, _)) in graph.edge(e).ends().iter().enumerate() {
                if let NodeKind::Clamp(v) = &graph.node(node).kind {
                    messages[e.0][i] = Some(v.to_categorical().into_vec());
                }
            }
        }
        Ok(BeliefState {
            messages,
            targets,
            sweeps: 0,
            converged: false,
            executed: false,
        })
    }

    pub fn is_executed(&self) -> bool {
        self.executed
    }

    /// Current point-mass values of the EM targets, in edge order.
    pub fn targets(&self) -> Vec<usize> {
        self.targets.iter().map(|(_, p)| p.index()).collect()
    }

    pub fn target(&self, edge: EdgeId) -> Option<PointMass> {
        self.targets.iter().find(|(e, _)| *e == edge).map(|(_, p)| *p)
    }

    /// The message `from` sends along `edge`.
    pub fn message(&self, graph: &FactorGraph, edge: EdgeId, from: NodeId) -> Option<&[f64]> {
        let i = graph.edge(edge).ends().iter().position(|(n, _)| *n == from)?;
        self.messages[edge.0][i].as_deref()
    }

    fn incoming(&self, graph: &FactorGraph, edge: EdgeId, to: NodeId) -> Option<&[f64]> {
        let (other, _) = graph.other_end(edge, to)?;
        self.message(graph, edge, other)
    }

    /// Normalized product of the messages on an edge.
    fn product(&self, graph: &FactorGraph, edge: EdgeId) -> Result<Vec<f64>> {
        let e = graph.edge(edge);
        let mut out = vec![1.0; e.size];
        for (i, _) in e.ends().iter().enumerate() {
            let m = self.messages[edge.0][i]
                .as_ref()
                .ok_or_else(|| Error::State(format!("no message on edge `{}` yet", e.label)))?;
            out.iter_mut().zip(m).for_each(|(o, v)| *o *= v);
        }
        let s: f64 = out.iter().sum();
        if s.is_nan() || s <= 0.0 {
            return Err(Error::Inconsistency { edge: e.label.clone() });
        }
        out.iter_mut().for_each(|o| *o /= s);
        Ok(out)
    }

    fn store(&mut self, graph: &FactorGraph, edge: EdgeId, from: NodeId, msg: Vec<f64>) {
        let i = graph
            .edge(edge)
            .ends()
            .iter()
            .position(|(n, _)| *n == from)
            .expect("scheduled node is an endpoint");
        self.messages[edge.0][i] = Some(msg);
    }

    /// Executes every scheduled message once with the current targets.
    pub fn sweep(&mut self, graph: &FactorGraph, schedule: &Schedule, normalize: bool) -> Result<()> {
        for m in schedule.messages() {
            let node = graph.node(m.node);
            let out_port = node.port_of(m.edge).expect("edge is attached to node");
            let toward_target = is_target(graph, m.edge);
            let mut beliefs: Vec<Option<Vec<f64>>> = vec![None; node.ports().len()];
            if m.rule == Rule::Variational && toward_target {
                for (p, &e) in node.ports().iter().enumerate() {
                    if p != out_port && !is_clamped(graph, e) {
                        beliefs[p] = Some(self.product(graph, e)?);
                    }
                }
            }
            let incoming: Vec<Incoming<'_>> = node
                .ports()
                .iter()
                .enumerate()
                .map(|(p, &e)| {
                    if p == out_port {
                        Incoming::Absent
                    } else if let Some(v) = graph.clamp_value(e) {
                        Incoming::PointMass(v.index())
                    } else if let Some(v) = self.target(e) {
                        Incoming::PointMass(v.index())
                    } else if let Some(b) = &beliefs[p] {
                        Incoming::Belief(b)
                    } else if m.rule == Rule::Variational {
                        Incoming::Absent
                    } else {
                        match self.incoming(graph, e, m.node) {
                            Some(msg) => Incoming::Message(msg),
                            None => Incoming::Absent,
                        }
                    }
                })
                .collect();
            let mut msg = compute_message(&node.kind, out_port, &incoming, m.rule).map_err(|err| match err {
                Error::Inconsistency { .. } => Error::Inconsistency {
                    edge: graph.edge(m.edge).label.clone(),
                },
                other => other,
            })?;
            if normalize {
                let s: f64 = msg.iter().sum();
                msg.iter_mut().for_each(|v| *v /= s);
            }
            self.store(graph, m.edge, m.node, msg);
        }
        self.executed = true;
        Ok(())
    }

    /// EM point-mass update: each target moves to the mode of the product of
    /// its incident messages, the lowest index winning ties.
    pub fn em_proposal(&self, graph: &FactorGraph) -> Result<Vec<usize>> {
        self.targets
            .iter()
            .map(|(e, _)| Ok(argmax_lowest(&self.product(graph, *e)?)))
            .collect()
    }

    pub fn set_targets(&mut self, graph: &FactorGraph, values: &[usize]) -> Result<()> {
        if values.len() != self.targets.len() {
            return Err(Error::Model("wrong number of target values".into()));
        }
        for ((e, t), &v) in self.targets.iter_mut().zip(values) {
            *t = PointMass::new(v, graph.edge(*e).size)?;
        }
        Ok(())
    }

    /// Belief of an edge: the point mass for EM targets and clamps, the
    /// normalized message product otherwise.
    pub fn belief(&self, graph: &FactorGraph, edge: EdgeId) -> Result<Belief> {
        self.require_executed()?;
        if let Some(v) = self.target(edge).or_else(|| graph.clamp_value(edge)) {
            return Ok(Belief::PointMass(v));
        }
        Ok(Belief::Categorical(Categorical::new(self.product(graph, edge)?)?))
    }

    fn require_executed(&self) -> Result<()> {
        if self.executed {
            Ok(())
        } else {
            Err(Error::State("the schedule has not been executed".into()))
        }
    }

    /// Joint belief of a factor: `f_a` times the incoming messages, with point
    /// masses on clamped and EM-target ports.
    pub fn node_joint(&self, graph: &FactorGraph, node: NodeId) -> Result<Joint> {
        self.require_executed()?;
        let n = graph.node(node);
        let sizes: Vec<usize> = n.ports().iter().map(|e| graph.edge(*e).size).collect();
        let ports: Vec<Vec<f64>> = n
            .ports()
            .iter()
            .map(|&e| {
                let size = graph.edge(e).size;
                if let Some(v) = self.target(e).or_else(|| graph.clamp_value(e)) {
                    let mut d = vec![0.0; size];
                    d[v.index()] = 1.0;
                    return Ok(d);
                }
                match graph.other_end(e, node) {
                    Some(_) => self.incoming(graph, e, node).map(<[f64]>::to_vec).ok_or_else(|| {
                        Error::State(format!("no message into `{}` on `{}`", n.label, graph.edge(e).label))
                    }),
                    None => Ok(vec![1.0; size]),
                }
            })
            .collect::<Result<_>>()?;
        let total: usize = sizes.iter().product();
        let mut joint = Joint {
            sizes,
            probs: vec![0.0; total],
        };
        let mut sum = 0.0;
        for flat in 0..total {
            let values = joint.values(flat);
            let mut w = 1.0;
            for (p, &v) in values.iter().enumerate() {
                w *= ports[p][v];
                if w == 0.0 {
                    break;
                }
            }
            if w != 0.0 {
                w *= n.kind.factor(&values);
            }
            joint.probs[flat] = w;
            sum += w;
        }
        if sum.is_nan() || sum <= 0.0 {
            return Err(Error::Inconsistency { edge: n.label.clone() });
        }
        joint.probs.iter_mut().for_each(|p| *p /= sum);
        Ok(joint)
    }
}

/// Normalized product of the two directed messages on `edge`.
pub fn marginal(graph: &FactorGraph, beliefs: &BeliefState, edge: EdgeId) -> Result<Categorical> {
    beliefs.require_executed()?;
    Categorical::new(beliefs.product(graph, edge)?)
}

/// Runs sweeps and EM updates until the targets stop moving or `max_iters`
/// sweeps have run. `observer` sees the state after every sweep.
///
/// When the run stops without converging, the returned targets are the ones
/// the last sweep was computed with, so messages and targets stay consistent.
pub fn run_schedule(
    graph: &FactorGraph,
    schedule: &Schedule,
    options: RunOptions,
    init: &[usize],
    mut observer: impl FnMut(&BeliefState),
) -> Result<BeliefState> {
    let mut state = BeliefState::new(graph, init)?;
    let max_iters = options.max_iters.max(1);
    for it in 1..=max_iters {
        state.sweep(graph, schedule, options.normalize)?;
        state.sweeps = it;
        observer(&state);
        let next = state.em_proposal(graph)?;
        if next == state.targets() {
            state.converged = true;
            break;
        }
        if it < max_iters {
            state.set_targets(graph, &next)?;
        }
    }
    Ok(state)
}
