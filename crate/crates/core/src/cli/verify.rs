//! Oracle harness behind the `verify` command.

use serde::{Deserialize, Serialize};

use crate::dist::StochasticMatrix;
use crate::error::Result;
use crate::graph::{build_future_model, NodeKind};
use crate::model::Policy;
use crate::objectives::{
    bfe_decompose, brute_force_cbfe, brute_force_evidence, cbfe_decompose, cbfe_em_trace, efe_instantaneous_check,
    minimize_bfe, mode_init, solve_bfe, solve_cbfe, RestartMode,
};
use crate::tmaze::{build_tmaze_model, moves_of};

pub const TOLERANCE: f64 = 1e-9;

pub const ALPHAS: [f64; 3] = [0.5, 0.9, 1.0];
pub const UTILITIES: [f64; 2] = [0.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub max_deviation: f64,
    /// Case with the largest deviation.
    pub worst_case: String,
    pub passed: bool,
}

#[derive(Default)]
struct Tracker {
    cases: usize,
    max_deviation: f64,
    worst_case: String,
}

impl Tracker {
    fn record(&mut self, deviation: f64, case: impl FnOnce() -> String) {
        self.cases += 1;
        let deviation = if deviation.is_nan() { f64::INFINITY } else { deviation };
        if deviation > self.max_deviation || self.worst_case.is_empty() {
            self.max_deviation = self.max_deviation.max(deviation);
            self.worst_case = case();
        }
    }

    fn finish(self, name: &str) -> CheckResult {
        CheckResult {
            name: name.to_string(),
            cases: self.cases,
            passed: self.max_deviation <= TOLERANCE,
            max_deviation: self.max_deviation,
            worst_case: self.worst_case,
        }
    }
}

fn case(alpha: f64, c: f64, policy: &Policy) -> String {
    let m = moves_of(policy);
    format!(
        "alpha={alpha} c={c} policy=({})",
        m.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
    )
}

/// Shifts reward mass towards "no reward" in both arms. Applied to the
/// second observation node, where the goal prior is not flat (under a flat
/// goal the evidence does not depend on the observation matrix at all).
#[allow(clippy::needless_range_loop)]
fn perturbed_observation(a: &StochasticMatrix) -> Result<StochasticMatrix> {
    let mut rows = a.to_rows();
    for j in 2..6 {
        let block = 4 * (j / 2);
        let moved = 0.1 * rows[block + 2][j];
        rows[block + 2][j] -= moved;
        rows[block + 3][j] += moved;
    }
    StochasticMatrix::from_rows(rows)
}

/// Runs every oracle comparison. With `perturb`, the BFE graphs are built
/// with a corrupted observation factor at the second step.
pub fn run_checks(perturb: bool) -> Result<Vec<CheckResult>> {
    let mut tree = Tracker::default();
    let mut oracle = Tracker::default();
    let mut identities = Tracker::default();
    let mut bound = Tracker::default();
    let mut efe_forms = Tracker::default();
    for &alpha in &ALPHAS {
        for &c in &UTILITIES {
            let spec = build_tmaze_model(alpha, c, 2, 1)?;
            let prior = spec.d0.clone();
            for policy in Policy::enumerate(spec.num_controls(), spec.horizon) {
                let z = brute_force_evidence(&spec, &prior, &policy)?;
                let bfe = if perturb {
                    let model = build_future_model(&spec, &prior, &policy, false)?;
                    let node = model.layout.steps[1].observation_node;
                    let graph = model.graph.with_node_kind(
                        node,
                        NodeKind::DiscreteTransition(perturbed_observation(&spec.observation)?),
                    )?;
                    minimize_bfe(&graph)?.0.value
                } else {
                    solve_bfe(&spec, &prior, &policy)?.report.value
                };
                tree.record((bfe + z.log2()).abs(), || {
                    let node = if perturb { " node=A2" } else { "" };
                    format!("{}{node}", case(alpha, c, &policy))
                });

                let (exact, _) = brute_force_cbfe(&spec, &prior, &policy)?;
                let sol = solve_cbfe(&spec, &prior, &policy, RestartMode::Exhaustive)?;
                oracle.record((sol.report.value - exact).abs(), || case(alpha, c, &policy));

                let d = cbfe_decompose(&spec, &prior, &policy, &sol.model, &sol.state)?;
                let eq28 = (-d.opportunity + d.risk - d.extrinsic_value - d.cbfe).abs();
                let eq31 = (d.posterior_divergence - d.epistemic_value_of_policy - d.extrinsic_value - d.cbfe).abs();
                let b = solve_bfe(&spec, &prior, &policy)?;
                let bd = bfe_decompose(&spec, &prior, &policy, &b.model, &b.state)?;
                let eq33 = (bd.expected_divergence + bd.risk - bd.expected_extrinsic_value - bd.bfe).abs();
                identities.record(eq28.max(eq31).max(eq33), || case(alpha, c, &policy));

                let init = mode_init(&sol.model.graph)?;
                let trace = cbfe_em_trace(&spec, &prior, &policy, &init)?;
                for (i, it) in trace.iter().enumerate() {
                    let d = it.decomposition;
                    let gap = d.opportunity - d.risk - d.epistemic_value_of_policy;
                    let deviation = if i + 1 == trace.len() {
                        gap.abs()
                    } else {
                        (-gap).max(0.0)
                    };
                    bound.record(deviation, || format!("{} sweep={}", case(alpha, c, &policy), i + 1));
                }

                for tau in 1..=policy.len() {
                    let (two_terms, direct) = efe_instantaneous_check(&spec, &prior, policy.controls(), tau)?;
                    efe_forms.record((two_terms - direct).abs(), || {
                        format!("{} tau={tau}", case(alpha, c, &policy))
                    });
                }
            }
        }
    }
    Ok(vec![
        tree.finish("tree exactness: BFE = -log2 Z"),
        oracle.finish("CBFE exhaustive EM = enumeration optimum"),
        identities.finish("decomposition identities"),
        bound.finish("evidence bound at every EM iterate"),
        efe_forms.finish("EFE ambiguity+risk = direct expectation"),
    ])
}
