//! Forney-style factor graphs over discrete variables.
//!
//! Edges are variables and nodes are factors. An edge touches at most two
//! nodes; a variable needed by more factors is copied through an
//! [`NodeKind::Equality`] node. Edges with a single endpoint are dangling: they
//! either end in a point-mass constraint marker or are left open.
//!
//! Port conventions:
//!
//! | kind                 | ports                       |
//! |----------------------|-----------------------------|
//! | `CategoricalPrior`   | `[out]`                     |
//! | `DiscreteTransition` | `[input, output]`           |
//! | `Multiplexer`        | `[input, output, control]`  |
//! | `Equality`           | `[a, b, c]`                 |
//! | `GoalPrior`          | `[edge]`                    |
//! | `Clamp`              | `[edge]`                    |
//!
//! A transition matrix `M` is read as `f(input = j, output = i) = M[i, j]`.

mod future;
mod message;
mod schedule;

pub use future::{build_bandit_graph, build_future_model, ChainLayout, FutureModel, StepLayout};
pub use message::{compute_message, Incoming, Rule};
pub use schedule::{
    marginal, run_schedule, BeliefState, Joint, RunOptions, Schedule, ScheduledMessage, DEFAULT_MAX_ITERS,
};

use serde::Serialize;

use crate::dist::{Categorical, PointMass, StochasticMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct EdgeId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    CategoricalPrior(Categorical),
    DiscreteTransition(StochasticMatrix),
    /// Transition whose matrix is picked by a clamped control.
    Multiplexer {
        matrices: Vec<StochasticMatrix>,
        selector: PointMass,
    },
    Equality,
    GoalPrior(Categorical),
    Clamp(PointMass),
}

impl NodeKind {
    pub fn arity(&self) -> usize {
        match self {
            NodeKind::CategoricalPrior(_) | NodeKind::GoalPrior(_) | NodeKind::Clamp(_) => 1,
            NodeKind::DiscreteTransition(_) => 2,
            NodeKind::Multiplexer { .. } | NodeKind::Equality => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            NodeKind::CategoricalPrior(_) => "prior",
            NodeKind::DiscreteTransition(_) => "transition",
            NodeKind::Multiplexer { .. } => "multiplexer",
            NodeKind::Equality => "equality",
            NodeKind::GoalPrior(_) => "goal",
            NodeKind::Clamp(_) => "clamp",
        }
    }

    /// The matrix a transition-like node applies.
    pub fn matrix(&self) -> Option<&StochasticMatrix> {
        match self {
            NodeKind::DiscreteTransition(m) => Some(m),
            NodeKind::Multiplexer { matrices, selector } => Some(&matrices[selector.index()]),
            _ => None,
        }
    }

    /// Factor value at a joint assignment of the node's ports.
    pub fn factor(&self, values: &[usize]) -> f64 {
        match self {
            NodeKind::CategoricalPrior(p) | NodeKind::GoalPrior(p) => p.probs()[values[0]],
            NodeKind::DiscreteTransition(m) => m.get(values[1], values[0]),
            NodeKind::Multiplexer { matrices, .. } => matrices[values[2]].get(values[1], values[0]),
            NodeKind::Equality => {
                if values[0] == values[1] && values[1] == values[2] {
                    1.0
                } else {
                    0.0
                }
            }
            NodeKind::Clamp(v) => {
                if values[0] == v.index() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn port_sizes(&self) -> Vec<Option<usize>> {
        match self {
            NodeKind::CategoricalPrior(p) | NodeKind::GoalPrior(p) => vec![Some(p.len())],
            NodeKind::DiscreteTransition(m) => vec![Some(m.cols()), Some(m.rows())],
            NodeKind::Multiplexer { matrices, .. } => {
                vec![Some(matrices[0].cols()), Some(matrices[0].rows()), Some(matrices.len())]
            }
            NodeKind::Equality => vec![None; 3],
            NodeKind::Clamp(v) => vec![Some(v.size())],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    pub label: String,
    ports: Vec<EdgeId>,
}

impl Node {
    pub fn ports(&self) -> &[EdgeId] {
        &self.ports
    }

    pub fn port_of(&self, edge: EdgeId) -> Option<usize> {
        self.ports.iter().position(|e| *e == edge)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EdgeConstraint {
    Free,
    /// Belief restricted to a point mass whose location is optimized by EM.
    PointMass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub label: String,
    pub size: usize,
    pub constraint: EdgeConstraint,
    ends: Vec<(NodeId, usize)>,
}

impl Edge {
    /// `(node, port)` endpoints, one or two.
    pub fn ends(&self) -> &[(NodeId, usize)] {
        &self.ends
    }

    pub fn degree(&self) -> usize {
        self.ends.len()
    }
}

/// An immutable factor graph, validated to be a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl FactorGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> {
        (0..self.edges.len()).map(EdgeId)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn find_edge(&self, label: &str) -> Option<EdgeId> {
        self.edges.iter().position(|e| e.label == label).map(EdgeId)
    }

    pub fn find_node(&self, label: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.label == label).map(NodeId)
    }

    /// Point-mass constrained edges, in edge order.
    pub fn em_targets(&self) -> Vec<EdgeId> {
        self.edge_ids()
            .filter(|e| self.edge(*e).constraint == EdgeConstraint::PointMass)
            .collect()
    }

    /// The clamped value of an edge attached to a [`NodeKind::Clamp`] node.
    pub fn clamp_value(&self, edge: EdgeId) -> Option<PointMass> {
        self.edge(edge)
            .ends
            .iter()
            .find_map(|(n, _)| match &self.node(*n).kind {
                NodeKind::Clamp(v) => Some(*v),
                _ => None,
            })
    }

    /// The endpoint of `edge` that is not `node`.
    pub fn other_end(&self, edge: EdgeId, node: NodeId) -> Option<(NodeId, usize)> {
        self.edge(edge).ends.iter().find(|(n, _)| *n != node).copied()
    }

    /// Copy with every point-mass constraint removed.
    pub fn without_constraints(&self) -> FactorGraph {
        let mut g = self.clone();
        g.edges.iter_mut().for_each(|e| e.constraint = EdgeConstraint::Free);
        g
    }

    /// Copy in which exactly the listed edges are point-mass constrained.
    pub fn with_constraints(&self, edges: &[EdgeId]) -> FactorGraph {
        let mut g = self.without_constraints();
        for e in edges {
            g.edges[e.0].constraint = EdgeConstraint::PointMass;
        }
        g
    }

    /// Copy with one node's factor replaced, for negative-control checks.
    pub fn with_node_kind(&self, node: NodeId, kind: NodeKind) -> Result<FactorGraph> {
        let mut b = GraphBuilder {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
        };
        if kind.arity() != b.nodes[node.0].kind.arity() {
            return Err(Error::Model("replacement node has a different arity".into()));
        }
        b.nodes[node.0].kind = kind;
        b.build()
    }
}

/// Incremental construction of a [`FactorGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_edge(&mut self, label: impl Into<String>, size: usize) -> EdgeId {
        self.edges.push(Edge {
            label: label.into(),
            size,
            constraint: EdgeConstraint::Free,
            ends: Vec::with_capacity(2),
        });
        EdgeId(self.edges.len() - 1)
    }

    /// Marks an edge as point-mass constrained (an EM target).
    pub fn constrain(&mut self, edge: EdgeId) {
        self.edges[edge.0].constraint = EdgeConstraint::PointMass;
    }

    pub fn add_node(&mut self, kind: NodeKind, label: impl Into<String>, ports: &[EdgeId]) -> Result<NodeId> {
        let label = label.into();
        if ports.len() != kind.arity() {
            return Err(Error::Model(format!(
                "{} node `{label}` needs {} edges, got {}",
                kind.name(),
                kind.arity(),
                ports.len()
            )));
        }
        if let NodeKind::Multiplexer { matrices, selector } = &kind {
            if matrices.is_empty() || selector.index() >= matrices.len() {
                return Err(Error::Model(format!("multiplexer `{label}` selector out of range")));
            }
            let shape = (matrices[0].rows(), matrices[0].cols());
            if matrices.iter().any(|m| (m.rows(), m.cols()) != shape) {
                return Err(Error::Model(format!("multiplexer `{label}` matrices differ in shape")));
            }
        }
        let sizes = kind.port_sizes();
        let eq_size = self.edges[ports[0].0].size;
        for (p, (e, expected)) in ports.iter().zip(sizes).enumerate() {
            let edge = &self.edges[e.0];
            let expected = expected.unwrap_or(eq_size);
            if edge.size != expected {
                return Err(Error::Dimension(format!(
                    "edge `{}` has size {} but port {p} of `{label}` expects {expected}",
                    edge.label, edge.size
                )));
            }
            if edge.ends.len() >= 2 {
                return Err(Error::Model(format!(
                    "edge `{}` already connects two nodes",
                    edge.label
                )));
            }
        }
        let id = NodeId(self.nodes.len());
        for (p, e) in ports.iter().enumerate() {
            self.edges[e.0].ends.push((id, p));
        }
        self.nodes.push(Node {
            kind,
            label,
            ports: ports.to_vec(),
        });
        Ok(id)
    }

    /// Validates and freezes the graph. Cyclic graphs are rejected.
    pub fn build(self) -> Result<FactorGraph> {
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for edge in &self.edges {
            match edge.ends.as_slice() {
                [] => return Err(Error::Model(format!("edge `{}` is not connected", edge.label))),
                [_] => {}
                [(a, _), (b, _)] => {
                    let (ra, rb) = (find(&mut parent, a.0), find(&mut parent, b.0));
                    if ra == rb {
                        return Err(Error::Model(format!(
                            "edge `{}` closes a cycle; only trees are supported",
                            edge.label
                        )));
                    }
                    parent[ra] = rb;
                }
                _ => unreachable!("edges connect at most two nodes"),
            }
        }
        let graph = FactorGraph {
            nodes: self.nodes,
            edges: self.edges,
        };
        for (i, node) in graph.nodes.iter().enumerate() {
            if let NodeKind::Multiplexer { selector, .. } = &node.kind {
                if let Some(v) = graph.clamp_value(node.ports[2]) {
                    if v.index() != selector.index() {
                        return Err(Error::Model(format!(
                            "multiplexer `{}` selector {} disagrees with its clamp {}",
                            node.label,
                            selector.index(),
                            v.index()
                        )));
                    }
                }
            }
            if matches!(node.kind, NodeKind::Clamp(_)) {
                let e = node.ports[0];
                if graph.edge(e).constraint == EdgeConstraint::PointMass {
                    return Err(Error::Model(format!(
                        "clamped edge `{}` cannot also be an EM target (node {i})",
                        graph.edge(e).label
                    )));
                }
            }
        }
        Ok(graph)
    }
}

/// A belief attached to an edge.
#[derive(Debug, Clone, PartialEq)]
pub enum Belief {
    Categorical(Categorical),
    PointMass(PointMass),
}

impl Belief {
    pub fn to_categorical(&self) -> Categorical {
        match self {
            Belief::Categorical(c) => c.clone(),
            Belief::PointMass(p) => p.to_categorical(),
        }
    }

    pub fn entropy(&self) -> f64 {
        match self {
            Belief::Categorical(c) => c.entropy(),
            Belief::PointMass(_) => 0.0,
        }
    }

    pub fn point_mass(&self) -> Option<PointMass> {
        match self {
            Belief::PointMass(p) => Some(*p),
            Belief::Categorical(_) => None,
        }
    }
}
