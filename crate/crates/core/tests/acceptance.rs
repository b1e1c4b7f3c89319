//! One PASS/FAIL line per acceptance criterion.

use std::time::{Duration, Instant};

use cbfe_aif::agent::{evaluate_grid, linspace, mean, run_landscape, run_trial, AgentConfig, LandscapeParams};
use cbfe_aif::cli::{cmd_bandit, cmd_landscape};
use cbfe_aif::graph::build_bandit_graph;
use cbfe_aif::objectives::{
    bfe_decompose, brute_force_cbfe, brute_force_evidence, cbfe_decompose, cbfe_em_trace, efe_instantaneous_check,
    minimize_bfe, minimize_cbfe, mode_init, optimize_bfe, optimize_cbfe, solve_bfe, solve_cbfe, Objective, RestartMode,
};
use cbfe_aif::tmaze::{build_bandit_model, build_tmaze_model, moves_of};
use cbfe_aif::{ModelSpec, Policy};

const TOL: f64 = 1e-9;
const ALPHAS: [f64; 3] = [0.5, 0.9, 1.0];
const UTILITIES: [f64; 2] = [0.0, 2.0];

fn report(id: &str, passed: bool, detail: String) {
    println!("{} criterion {id}: {detail}", if passed { "PASS" } else { "FAIL" });
    assert!(passed, "criterion {id} failed: {detail}");
}

fn scenarios() -> Vec<(f64, f64, ModelSpec)> {
    let mut out = Vec::new();
    for &alpha in &ALPHAS {
        for &c in &UTILITIES {
            out.push((alpha, c, build_tmaze_model(alpha, c, 2, 1).unwrap()));
        }
    }
    out
}

fn grid(objective: Objective, alpha: f64, c: f64) -> Vec<f64> {
    let spec = build_tmaze_model(alpha, c, 2, 1).unwrap();
    evaluate_grid(&spec, &spec.d0, objective, RestartMode::Exhaustive)
        .unwrap()
        .values()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn argmin(values: &[f64]) -> Vec<Vec<usize>> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    Policy::enumerate(4, 2)
        .iter()
        .zip(values)
        .filter(|(_, &v)| v <= min + TOL)
        .map(|(p, _)| moves_of(p))
        .collect()
}

#[test]
fn criterion_01_bandit() {
    let start = Instant::now();
    let spec = build_bandit_model();
    let mut values = Vec::new();
    for u in 0..2 {
        let graph = build_bandit_graph(&spec, u, true).unwrap();
        let bfe = minimize_bfe(&graph).unwrap().0.value;
        let cbfe = minimize_cbfe(&graph, RestartMode::Exhaustive).unwrap().0.value;
        values.push((bfe, cbfe));
    }
    let out = cmd_bandit().unwrap();
    let elapsed = start.elapsed();
    let documented = out.notes.iter().any(|n| n.contains("wrong sign"));
    let ok = values[0].0.abs() <= TOL
        && values[1].0.abs() <= TOL
        && values[1].1.abs() <= TOL
        && (values[0].1 - 1.0).abs() <= TOL
        && documented
        && elapsed < Duration::from_secs(1);
    report(
        "1",
        ok,
        format!(
            "BFE(u=0)={:.3e} BFE(u=1)={:.3e} CBFE(u=1)={:.3e} CBFE(u=0)={:.12} sign note={documented} in {elapsed:?}",
            values[0].0, values[1].0, values[1].1, values[0].1
        ),
    );
}

#[test]
fn criterion_02_tree_exactness() {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (_, _, spec) in scenarios() {
        for p in Policy::enumerate(4, 2) {
            let z = brute_force_evidence(&spec, &spec.d0, &p).unwrap();
            let bfe = optimize_bfe(&spec, &spec.d0, &p).unwrap().value;
            worst = worst.max((bfe + z.log2()).abs());
            cases += 1;
        }
    }
    report(
        "2",
        cases == 96 && worst <= TOL,
        format!("{cases} cases, max |BFE + log2 Z| = {worst:.3e}"),
    );
}

#[test]
fn criterion_03_cbfe_oracle() {
    let mut worst: f64 = 0.0;
    let mut mode_hits = 0;
    let mut misses = Vec::new();
    let mut cases = 0;
    for (alpha, c, spec) in scenarios() {
        for p in Policy::enumerate(4, 2) {
            let (exact, _) = brute_force_cbfe(&spec, &spec.d0, &p).unwrap();
            let ex = optimize_cbfe(&spec, &spec.d0, &p, RestartMode::Exhaustive)
                .unwrap()
                .value;
            let mi = optimize_cbfe(&spec, &spec.d0, &p, RestartMode::ModeInit).unwrap().value;
            worst = worst.max((ex - exact).abs());
            if (mi - exact).abs() <= TOL {
                mode_hits += 1;
            } else {
                misses.push(format!("a={alpha} c={c} {p}"));
            }
            cases += 1;
        }
    }
    let rate = mode_hits as f64 / cases as f64;
    report(
        "3",
        worst <= TOL && rate >= 0.9,
        format!(
            "exhaustive max deviation {worst:.3e}; mode-init {mode_hits}/{cases} ({:.1}%), local optima: [{}]",
            100.0 * rate,
            misses.join("; ")
        ),
    );
}

#[test]
fn criterion_04_grid_claims() {
    let cbfe = grid(Objective::Cbfe, 0.9, 2.0);
    let set = argmin(&cbfe);
    let a = set == vec![vec![4, 2], vec![4, 3]];
    let tie = (cbfe[13] - cbfe[14]).abs();

    let b_diff = max_diff(&grid(Objective::Bfe, 0.5, 2.0), &grid(Objective::Bfe, 0.9, 2.0));
    let flat = grid(Objective::Bfe, 0.9, 0.0);
    let c_spread =
        flat.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - flat.iter().cloned().fold(f64::INFINITY, f64::min);

    let efe: Vec<_> = [(0.9, 2.0), (0.5, 2.0), (0.9, 0.0)]
        .iter()
        .map(|&(alpha, c)| argmin(&grid(Objective::Efe, alpha, c)))
        .collect();
    let d = efe.iter().all(|s| *s == vec![vec![4, 4]]);

    report(
        "4",
        a && tie <= TOL && b_diff <= TOL && c_spread <= TOL && d,
        format!(
            "(a) CBFE argmin {set:?} tie {tie:.3e}; (b) BFE a=0.5 vs 0.9 max diff {b_diff:.3e}; (c) BFE c=0 spread {c_spread:.3e}; (d) EFE argmins {efe:?}"
        ),
    );
}

struct Terms {
    opportunity: Vec<f64>,
    risk: Vec<f64>,
    extrinsic: Vec<f64>,
}

fn terms(alpha: f64, c: f64) -> Terms {
    let spec = build_tmaze_model(alpha, c, 2, 1).unwrap();
    let mut t = Terms {
        opportunity: vec![],
        risk: vec![],
        extrinsic: vec![],
    };
    for p in Policy::enumerate(4, 2) {
        let sol = solve_cbfe(&spec, &spec.d0, &p, RestartMode::Exhaustive).unwrap();
        let d = cbfe_decompose(&spec, &spec.d0, &p, &sol.model, &sol.state).unwrap();
        t.opportunity.push(d.opportunity);
        t.risk.push(d.risk);
        t.extrinsic.push(d.extrinsic_value);
    }
    t
}

#[test]
fn criterion_05_decomposition_claims() {
    let t092 = terms(0.9, 2.0);
    let t090 = terms(0.9, 0.0);
    let t052 = terms(0.5, 2.0);
    let t12 = terms(1.0, 2.0);

    let opp11 = t092.opportunity[0];
    let opp_c = max_diff(&t090.opportunity, &t092.opportunity);
    let risk_c = max_diff(&t090.risk, &t092.risk);
    let ext_a = max_diff(&t052.extrinsic, &t092.extrinsic);
    let risk_min = argmin(&t092.risk);
    let best = |first: &[usize]| {
        (0..16)
            .filter(|i| first.contains(&(i / 4 + 1)))
            .map(|i| t12.opportunity[i])
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let greedy = best(&[2, 3]);
    let informative = best(&[4]);

    let ok = (opp11 + 2.0).abs() <= TOL
        && opp_c <= TOL
        && risk_c <= TOL
        && ext_a <= TOL
        && risk_min.contains(&vec![1, 1])
        && (greedy - informative).abs() <= TOL;
    report(
        "5",
        ok,
        format!(
            "opportunity(1,1)={opp11:.12}; c=0 vs 2 max diff opportunity {opp_c:.3e} risk {risk_c:.3e}; a=0.5 vs 0.9 extrinsic {ext_a:.3e}; risk argmin {risk_min:?}; a=1 best opportunity greedy {greedy:.12} informative {informative:.12}"
        ),
    );
}

#[test]
fn criterion_06_identities_and_bound() {
    let (mut e28, mut e31, mut e33, mut violation, mut gap_end): (f64, f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let mut iterates = 0;
    for (_, _, spec) in scenarios() {
        for p in Policy::enumerate(4, 2) {
            let sol = solve_cbfe(&spec, &spec.d0, &p, RestartMode::Exhaustive).unwrap();
            let d = cbfe_decompose(&spec, &spec.d0, &p, &sol.model, &sol.state).unwrap();
            e28 = e28.max((-d.opportunity + d.risk - d.extrinsic_value - d.cbfe).abs());
            e31 = e31.max((d.posterior_divergence - d.epistemic_value_of_policy - d.extrinsic_value - d.cbfe).abs());
            let b = solve_bfe(&spec, &spec.d0, &p).unwrap();
            let bd = bfe_decompose(&spec, &spec.d0, &p, &b.model, &b.state).unwrap();
            e33 = e33.max((bd.expected_divergence + bd.risk - bd.expected_extrinsic_value - bd.bfe).abs());

            let init = mode_init(&sol.model.graph).unwrap();
            let trace = cbfe_em_trace(&spec, &spec.d0, &p, &init).unwrap();
            for (i, it) in trace.iter().enumerate() {
                let d = it.decomposition;
                let gap = d.opportunity - d.risk - d.epistemic_value_of_policy;
                violation = violation.max(-gap);
                if i + 1 == trace.len() {
                    gap_end = gap_end.max(gap.abs());
                }
                iterates += 1;
            }
        }
    }
    report(
        "6",
        e28 <= TOL && e31 <= TOL && e33 <= TOL && violation <= TOL && gap_end <= TOL,
        format!(
            "max residual opportunity/risk form {e28:.3e}, divergence/evidence form {e31:.3e}, BFE form {e33:.3e}; bound violation {violation:.3e} over {iterates} iterates, gap at convergence {gap_end:.3e}"
        ),
    );
}

#[test]
fn criterion_07_efe_forms() {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for (_, _, spec) in scenarios() {
        for p in Policy::enumerate(4, 2) {
            for tau in 1..=2 {
                let (two, direct) = efe_instantaneous_check(&spec, &spec.d0, p.controls(), tau).unwrap();
                worst = worst.max((two - direct).abs());
                cases += 1;
            }
        }
    }
    report("7", worst <= TOL, format!("{cases} cases, max deviation {worst:.3e}"));
}

#[test]
fn criterion_08_cbfe_trial() {
    let config = AgentConfig::new(Objective::Cbfe);
    let mut all = Vec::new();
    let mut rewards = Vec::new();
    for seed in 0..10 {
        let t = run_trial(&config, 0.9, 2.0, 3, 2, seed).unwrap();
        rewards.push(t.expected_reward);
        all.push(t.actions());
    }
    let mean = mean(&rewards);
    let ok = all.iter().all(|a| *a == vec![4, 3]) && mean == 0.9;
    report("8", ok, format!("actions {all:?}, mean expected reward {mean}"));
}

fn landscape_params() -> LandscapeParams {
    LandscapeParams {
        alphas: linspace(0.5, 1.0, 10),
        cs: linspace(0.0, 2.0, 10),
        runs: 10,
        reward_arm: 3,
        moves: 2,
        seed: 0,
    }
}

#[test]
fn criterion_09_landscape() {
    let params = landscape_params();
    let start = Instant::now();
    let cbfe = run_landscape(&AgentConfig::new(Objective::Cbfe), &params).unwrap();
    let efe = run_landscape(&AgentConfig::new(Objective::Efe), &params).unwrap();
    let elapsed = start.elapsed();

    let (zc, ze) = (cbfe.zero_cells(), efe.zero_cells());
    let mut witness = None;
    for i in 0..params.alphas.len() / 2 {
        for j in 0..params.cs.len() / 2 {
            let c_all = cbfe.cells[i][j].actions.iter().all(|a| *a == vec![4, 4]);
            let e_all = efe.cells[i][j].actions.iter().all(|a| *a == vec![4, 1]);
            if c_all && e_all && witness.is_none() {
                witness = Some((params.alphas[i], params.cs[j]));
            }
        }
    }
    let ok = zc < ze && witness.is_some() && elapsed < Duration::from_secs(60);
    report(
        "9",
        ok,
        format!("zero-reward cells CBFE {zc} EFE {ze}; low-alpha/low-c (4,4)-vs-(4,1) cell {witness:?}; {elapsed:?}"),
    );
}

#[test]
fn criterion_10_determinism() {
    let params = landscape_params();
    let config = AgentConfig::new(Objective::Cbfe);
    let first = cmd_landscape(config, &params).unwrap().to_csv();
    let second = cmd_landscape(config, &params).unwrap().to_csv();
    report(
        "10",
        first == second,
        format!("{} bytes, identical={}", first.len(), first == second),
    );
}
