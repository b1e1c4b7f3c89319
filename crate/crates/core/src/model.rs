//! Discrete generative model shared by the graph builder, the objectives and
//! the agent.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dist::{Categorical, StochasticMatrix};
use crate::error::{Error, Result};

/// Observation model, control-indexed transitions, initial state prior and
/// goal priors indexed by absolute time.
///
/// `start_time` is the first future time step of the current planning
/// window; a window covers `start_time ..= start_time + horizon - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(rename = "A")]
    pub observation: StochasticMatrix,
    #[serde(rename = "B")]
    pub transitions: Vec<StochasticMatrix>,
    pub d0: Categorical,
    pub goals: BTreeMap<usize, Categorical>,
    pub horizon: usize,
    pub start_time: usize,
    pub alpha: f64,
    pub c: f64,
}

impl ModelSpec {
    pub fn num_states(&self) -> usize {
        self.observation.cols()
    }

    pub fn num_observations(&self) -> usize {
        self.observation.rows()
    }

    pub fn num_controls(&self) -> usize {
        self.transitions.len()
    }

    pub fn transition(&self, control: usize) -> Result<&StochasticMatrix> {
        self.transitions.get(control).ok_or_else(|| {
            Error::Model(format!(
                "control {control} out of range ({} controls)",
                self.transitions.len()
            ))
        })
    }

    pub fn goal(&self, time: usize) -> Result<&Categorical> {
        self.goals
            .get(&time)
            .ok_or_else(|| Error::Model(format!("no goal prior defined for time {time}")))
    }

    /// Goal priors of the current planning window, in time order.
    pub fn window_goals(&self) -> Result<Vec<&Categorical>> {
        (self.start_time..self.start_time + self.horizon)
            .map(|k| self.goal(k))
            .collect()
    }

    /// Same model with the planning window moved to `start_time`.
    pub fn at_time(&self, start_time: usize) -> ModelSpec {
        ModelSpec {
            start_time,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_states();
        if self.d0.len() != n {
            return Err(Error::Model(format!(
                "state prior has length {} but A has {n} columns",
                self.d0.len()
            )));
        }
        if self.transitions.is_empty() {
            return Err(Error::Model("no transition matrices".into()));
        }
        for (u, b) in self.transitions.iter().enumerate() {
            if b.rows() != n || b.cols() != n {
                return Err(Error::Model(format!(
                    "B[{u}] is {}x{} but the state space has {n} values",
                    b.rows(),
                    b.cols()
                )));
            }
        }
        for (k, g) in &self.goals {
            if g.len() != self.num_observations() {
                return Err(Error::Model(format!(
                    "goal at time {k} has length {} but A has {} rows",
                    g.len(),
                    self.num_observations()
                )));
            }
        }
        if self.horizon == 0 {
            return Err(Error::Model("horizon must be at least 1".into()));
        }
        Ok(())
    }

    /// Checks a prior and a policy against this model.
    pub fn check_inputs(&self, prior: &Categorical, policy: &Policy) -> Result<()> {
        self.validate()?;
        if prior.len() != self.num_states() {
            return Err(Error::Model(format!(
                "prior has length {} but the state space has {} values",
                prior.len(),
                self.num_states()
            )));
        }
        if policy.len() != self.horizon {
            return Err(Error::Model(format!(
                "policy of length {} for horizon {}",
                policy.len(),
                self.horizon
            )));
        }
        for &u in policy.controls() {
            self.transition(u)?;
        }
        self.window_goals()?;
        Ok(())
    }
}

/// Single-factor model: an outcome matrix indexed by a clamped control,
/// with no goal prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditSpec {
    #[serde(rename = "A")]
    pub observation: StochasticMatrix,
}

impl BanditSpec {
    pub fn num_controls(&self) -> usize {
        self.observation.cols()
    }

    pub fn num_outcomes(&self) -> usize {
        self.observation.rows()
    }
}

/// A fixed sequence of future controls (0-based control indices).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(controls: Vec<usize>) -> Self {
        Self(controls)
    }

    pub fn controls(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// First control of the sequence.
    pub fn first(&self) -> Option<usize> {
        self.0.first().copied()
    }

    /// All `num_controls^horizon` sequences, first control most significant.
    pub fn enumerate(num_controls: usize, horizon: usize) -> Vec<Policy> {
        let total = num_controls.pow(horizon as u32);
        (0..total)
            .map(|mut code| {
                let mut controls = vec![0; horizon];
                for slot in controls.iter_mut().rev() {
                    *slot = code % num_controls;
                    code /= num_controls;
                }
                Policy(controls)
            })
            .collect()
    }
}

impl From<Vec<usize>> for Policy {
    fn from(v: Vec<usize>) -> Self {
        Policy(v)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, u) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{u}")?;
        }
        write!(f, ")")
    }
}
