#![allow(dead_code)]

use std::collections::BTreeMap;

use cbfe_aif::dist::{Categorical, StochasticMatrix};
use cbfe_aif::{ModelSpec, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Marginals of every state and observation of the future chain, by plain
/// enumeration of all joint configurations. With `pinned`, observations are
/// fixed and only states are summed over.
pub struct Enumerated {
    pub evidence: f64,
    pub states: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
}

pub fn enumerate(spec: &ModelSpec, prior: &Categorical, policy: &Policy, pinned: Option<&[usize]>) -> Enumerated {
    let n = spec.num_states();
    let m = spec.num_observations();
    let t = policy.len();
    let goals = spec.window_goals().unwrap();
    let mut states = vec![vec![0.0; n]; t + 1];
    let mut observations = vec![vec![0.0; m]; t];
    let mut evidence = 0.0;
    let mut xs = vec![0usize; t + 1];
    let mut ys = pinned.map(<[usize]>::to_vec).unwrap_or_else(|| vec![0; t]);
    loop {
        loop {
            let mut p = prior.probs()[xs[0]];
            for k in 1..=t {
                let b = &spec.transitions[policy.controls()[k - 1]];
                p *= b.get(xs[k], xs[k - 1]);
                p *= spec.observation.get(ys[k - 1], xs[k]);
                if pinned.is_none() {
                    p *= goals[k - 1].probs()[ys[k - 1]];
                }
            }
            evidence += p;
            for (k, &x) in xs.iter().enumerate() {
                states[k][x] += p;
            }
            for (k, &y) in ys.iter().enumerate() {
                observations[k][y] += p;
            }
            if pinned.is_some() || !odometer(&mut ys, m) {
                break;
            }
        }
        if !odometer(&mut xs, n) {
            break;
        }
    }
    for row in states.iter_mut().chain(observations.iter_mut()) {
        row.iter_mut().for_each(|v| *v /= evidence);
    }
    Enumerated {
        evidence,
        states,
        observations,
    }
}

/// Advances a mixed counter; false once it wraps around.
pub fn odometer(digits: &mut [usize], base: usize) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

pub fn assert_close(a: &[f64], b: &[f64], tol: f64, what: &str) {
    assert_eq!(a.len(), b.len(), "{what}: length");
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        assert!((x - y).abs() <= tol, "{what}[{i}]: {x} vs {y}");
    }
}

fn random_distribution(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| floor + rng.gen::<f64>()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> StochasticMatrix {
    let columns: Vec<Categorical> = (0..cols)
        .map(|_| Categorical::new(random_distribution(rng, rows, 0.05)).unwrap())
        .collect();
    StochasticMatrix::from_columns(&columns).unwrap()
}

/// A small dense model with strictly positive entries.
pub fn random_model(seed: u64, states: usize, outcomes: usize, controls: usize, horizon: usize) -> ModelSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let observation = random_matrix(&mut rng, outcomes, states);
    let transitions = (0..controls).map(|_| random_matrix(&mut rng, states, states)).collect();
    let d0 = Categorical::new(random_distribution(&mut rng, states, 0.05)).unwrap();
    let goals: BTreeMap<usize, Categorical> = (1..=horizon)
        .map(|k| {
            (
                k,
                Categorical::new(random_distribution(&mut rng, outcomes, 0.05)).unwrap(),
            )
        })
        .collect();
    ModelSpec {
        observation,
        transitions,
        d0,
        goals,
        horizon,
        start_time: 1,
        alpha: 0.0,
        c: 0.0,
    }
}
