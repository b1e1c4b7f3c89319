//! Local message update rules.

use serde::Serialize;

use super::NodeKind;
use crate::dist::{plogq, StochasticMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Rule {
    SumProduct,
    Variational,
}

/// What a node sees on one of its ports when computing an outgoing message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Incoming<'a> {
    /// Message arriving from the other end of the edge.
    Message(&'a [f64]),
    /// Normalized belief of the edge, read by variational rules.
    Belief(&'a [f64]),
    /// Point-mass belief (a clamp or an EM target).
    PointMass(usize),
    /// Nothing arrives: the outgoing port, or a dangling edge.
    Absent,
}

impl Incoming<'_> {
    /// The incoming factor as a dense vector of length `n`.
    fn dense(&self, n: usize) -> Vec<f64> {
        match self {
            Incoming::Message(v) | Incoming::Belief(v) => v.to_vec(),
            Incoming::PointMass(i) => {
                let mut v = vec![0.0; n];
                v[*i] = 1.0;
                v
            }
            Incoming::Absent => vec![1.0; n],
        }
    }
}

/// Computes the unnormalized message a node sends out of `out_port`.
///
/// The caller supplies one [`Incoming`] per port, in port order. An all-zero
/// result is reported as an inconsistency.
pub fn compute_message(kind: &NodeKind, out_port: usize, incoming: &[Incoming<'_>], rule: Rule) -> Result<Vec<f64>> {
    if incoming.len() != kind.arity() || out_port >= kind.arity() {
        return Err(Error::Model(format!(
            "{} node called with {} inputs for port {out_port}",
            kind.name(),
            incoming.len()
        )));
    }
    let out = match kind {
        NodeKind::CategoricalPrior(p) | NodeKind::GoalPrior(p) => p.probs().to_vec(),
        NodeKind::Clamp(v) => v.to_categorical().into_vec(),
        NodeKind::Equality => {
            let others: Vec<usize> = (0..3).filter(|p| *p != out_port).collect();
            let n = incoming
                .iter()
                .find_map(|inc| match inc {
                    Incoming::Message(v) | Incoming::Belief(v) => Some(v.len()),
                    _ => None,
                })
                .unwrap_or(0);
            if n == 0 {
                return Err(Error::Model("equality node needs at least one message".into()));
            }
            let a = incoming[others[0]].dense(n);
            let b = incoming[others[1]].dense(n);
            a.iter().zip(&b).map(|(x, y)| x * y).collect()
        }
        NodeKind::DiscreteTransition(_) | NodeKind::Multiplexer { .. } => {
            if out_port == 2 {
                return Err(Error::Model(
                    "messages toward a multiplexer control are not supported".into(),
                ));
            }
            let m = kind.matrix().expect("transition-like node");
            match rule {
                Rule::SumProduct => transition_sum_product(m, out_port, incoming),
                Rule::Variational => transition_variational(m, out_port, incoming)?,
            }
        }
    };
    if !out.iter().any(|v| *v > 0.0) {
        return Err(Error::Inconsistency {
            edge: format!("port {out_port} of {} node", kind.name()),
        });
    }
    Ok(out)
}

fn transition_sum_product(m: &StochasticMatrix, out_port: usize, incoming: &[Incoming<'_>]) -> Vec<f64> {
    if out_port == 1 {
        m.mul_vec(&incoming[0].dense(m.cols()))
    } else {
        m.tmul_vec(&incoming[1].dense(m.rows()))
    }
}

fn transition_variational(m: &StochasticMatrix, out_port: usize, incoming: &[Incoming<'_>]) -> Result<Vec<f64>> {
    let other = 1 - out_port;
    let q = match incoming[other] {
        Incoming::Belief(q) => q,
        Incoming::PointMass(i) => {
            return Ok(if out_port == 0 {
                m.row(i).to_vec()
            } else {
                m.column(i).into_vec()
            })
        }
        _ => {
            return Err(Error::Model(
                "variational transition message needs a belief on the opposite edge".into(),
            ))
        }
    };
    let out = if out_port == 0 {
        (0..m.cols())
            .map(|i| (0..m.rows()).map(|o| plogq(q[o], m.get(o, i))).sum::<f64>())
            .collect::<Vec<_>>()
    } else {
        (0..m.rows())
            .map(|o| (0..m.cols()).map(|i| plogq(q[i], m.get(o, i))).sum::<f64>())
            .collect()
    };
    Ok(out.into_iter().map(|l| l.exp2()).collect())
}
