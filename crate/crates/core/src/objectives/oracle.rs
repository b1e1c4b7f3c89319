//! Enumeration oracles, independent of the message-passing code.

use crate::dist::Categorical;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Policy};

/// Largest joint enumerated by the oracles.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;

fn guard(size: u128) -> Result<()> {
    if size > ENUMERATION_LIMIT {
        Err(Error::SizeGuard {
            size,
            limit: ENUMERATION_LIMIT,
        })
    } else {
        Ok(())
    }
}

/// Advances a mixed-radix counter; false once it wraps around.
fn next(digits: &mut [usize], radix: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

fn path_weight(
    spec: &ModelSpec,
    prior: &Categorical,
    policy: &Policy,
    xs: &[usize],
    ys: &[usize],
    goals: &[&Categorical],
) -> f64 {
    let mut w = prior.probs()[xs[0]];
    for (k, &u) in policy.controls().iter().enumerate() {
        if w == 0.0 {
            return 0.0;
        }
        let b = &spec.transitions[u];
        w *= b.get(xs[k + 1], xs[k]) * spec.observation.get(ys[k], xs[k + 1]);
        if !goals.is_empty() {
            w *= goals[k].probs()[ys[k]];
        }
    }
    w
}

/// `Z = Σ_{y,x} p(x₀) Π_k p(y_k|x_k) p(x_k|x_{k−1},û_k) p̃(y_k)` by full
/// enumeration.
pub fn brute_force_evidence(spec: &ModelSpec, prior: &Categorical, policy: &Policy) -> Result<f64> {
    spec.check_inputs(prior, policy)?;
    let (n, m, t) = (spec.num_states(), spec.num_observations(), policy.len());
    guard((n as u128).pow(t as u32 + 1) * (m as u128).pow(t as u32))?;
    let goals = spec.window_goals()?;
    let mut xs = vec![0; t + 1];
    let mut z = 0.0;
    loop {
        let mut ys = vec![0; t];
        loop {
            z += path_weight(spec, prior, policy, &xs, &ys, &goals);
            if !next(&mut ys, m) {
                break;
            }
        }
        if !next(&mut xs, n) {
            break;
        }
    }
    Ok(z)
}

/// `p(ŷ | û)` by enumeration over state paths.
pub fn outcome_evidence(spec: &ModelSpec, prior: &Categorical, policy: &Policy, outcomes: &[usize]) -> Result<f64> {
    spec.check_inputs(prior, policy)?;
    let (n, t) = (spec.num_states(), policy.len());
    if outcomes.len() != t || outcomes.iter().any(|&y| y >= spec.num_observations()) {
        return Err(Error::Model("outcome sequence does not match the policy".into()));
    }
    guard((n as u128).pow(t as u32 + 1))?;
    let mut xs = vec![0; t + 1];
    let mut p = 0.0;
    loop {
        p += path_weight(spec, prior, policy, &xs, outcomes, &[]);
        if !next(&mut xs, n) {
            break;
        }
    }
    Ok(p)
}

/// Global CBFE optimum `min_ŷ −log2 [p(ŷ|û) p̃(ŷ)]` and its first minimizer
/// in lexicographic order.
pub fn brute_force_cbfe(spec: &ModelSpec, prior: &Categorical, policy: &Policy) -> Result<(f64, Vec<usize>)> {
    spec.check_inputs(prior, policy)?;
    let (n, m, t) = (spec.num_states(), spec.num_observations(), policy.len());
    guard((n as u128).pow(t as u32 + 1) * (m as u128).pow(t as u32))?;
    let goals = spec.window_goals()?;
    let mut ys = vec![0; t];
    let mut best = (f64::INFINITY, ys.clone());
    loop {
        let evidence = outcome_evidence(spec, prior, policy, &ys)?;
        if evidence > 0.0 {
            let goal: f64 = ys.iter().zip(&goals).map(|(&y, g)| g.probs()[y].log2()).sum();
            let value = -(evidence.log2() + goal);
            if value < best.0 - 1e-12 {
                best = (value, ys.clone());
            }
        }
        if !next(&mut ys, m) {
            break;
        }
    }
    Ok(best)
}
