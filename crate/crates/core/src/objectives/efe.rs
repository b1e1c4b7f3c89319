//! Expected free energy by forward filtering.

use serde::{Deserialize, Serialize};

use crate::dist::{kl_divergence, plogq, Categorical};
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Policy};

/// `p(x_τ | û_1..û_τ)`: the prior pushed through the transitions, ignoring
/// goals.
pub fn posterior_predictive(spec: &ModelSpec, prior: &Categorical, controls: &[usize]) -> Result<Categorical> {
    if controls.is_empty() {
        return Err(Error::Model("posterior predictive needs at least one control".into()));
    }
    let mut p = prior.clone();
    for &u in controls {
        p = spec.transition(u)?.predict(&p)?;
    }
    Ok(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfeTerm {
    pub ambiguity: f64,
    pub risk: f64,
}

fn instantaneous(spec: &ModelSpec, px: &Categorical, goal: &Categorical) -> Result<EfeTerm> {
    let a = &spec.observation;
    let ambiguity = px
        .probs()
        .iter()
        .enumerate()
        .map(|(x, &p)| if p == 0.0 { 0.0 } else { p * a.column(x).entropy() })
        .sum();
    let py = a.predict(px)?;
    Ok(EfeTerm {
        ambiguity,
        risk: kl_divergence(&py, goal)?,
    })
}

/// Ambiguity and risk at every step of the planning window.
pub fn efe_terms(spec: &ModelSpec, prior: &Categorical, policy: &Policy) -> Result<Vec<EfeTerm>> {
    spec.check_inputs(prior, policy)?;
    let goals = spec.window_goals()?;
    let mut p = prior.clone();
    policy
        .controls()
        .iter()
        .zip(goals)
        .map(|(&u, goal)| {
            p = spec.transition(u)?.predict(&p)?;
            instantaneous(spec, &p, goal)
        })
        .collect()
}

/// Sum over the window of ambiguity plus risk, in bits.
pub fn efe(spec: &ModelSpec, prior: &Categorical, policy: &Policy) -> Result<f64> {
    Ok(efe_terms(spec, prior, policy)?
        .iter()
        .map(|t| t.ambiguity + t.risk)
        .sum())
}

/// The instantaneous EFE at step `tau` (1-based) in two forms: ambiguity plus
/// risk, and the direct expectation of `log p(x) / (p(x|y) p̃(y))` under
/// `p(y|x) p(x)`.
pub fn efe_instantaneous_check(
    spec: &ModelSpec,
    prior: &Categorical,
    controls: &[usize],
    tau: usize,
) -> Result<(f64, f64)> {
    if tau == 0 || tau > controls.len() {
        return Err(Error::Model(format!(
            "step {tau} outside a prefix of length {}",
            controls.len()
        )));
    }
    let goal = spec.goal(spec.start_time + tau - 1)?;
    let px = posterior_predictive(spec, prior, &controls[..tau])?;
    let term = instantaneous(spec, &px, goal)?;
    let a = &spec.observation;
    let py = a.predict(&px)?;
    let mut direct = 0.0;
    for (x, &p) in px.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for y in 0..a.rows() {
            let w = a.get(y, x) * p;
            if w == 0.0 {
                continue;
            }
            let posterior = w / py.probs()[y];
            // log p(x) − log p(x|y) − log p̃(y)
            direct += w * (p.log2() - posterior.log2()) - plogq(w, goal.probs()[y]);
        }
    }
    Ok((term.ambiguity + term.risk, direct))
}
