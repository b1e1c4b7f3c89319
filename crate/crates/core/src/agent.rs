//! The plan / act / execute / observe / slide loop and the reward landscape.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::Categorical;
use crate::error::{Error, Result};
use crate::model::{ModelSpec, Policy};
use crate::objectives::{evaluate, FreeEnergyReport, Objective, RestartMode};
use crate::tmaze::{self, build_tmaze_model_through, TMazeEnv};

/// Policies whose value is within this distance of the minimum are tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Environment variable capping the landscape thread count.
pub const THREADS_ENV: &str = "CBFE_AIF_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub objective: Objective,
    pub horizon: usize,
    pub restart_mode: RestartMode,
    pub tie_break_seed: u64,
}

impl AgentConfig {
    pub fn new(objective: Objective) -> Self {
        AgentConfig {
            objective,
            horizon: 2,
            restart_mode: RestartMode::Exhaustive,
            tie_break_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub current_prior: Categorical,
    /// 1-based time of the next move.
    pub current_time: usize,
}

impl AgentState {
    pub fn initial(spec: &ModelSpec) -> Self {
        AgentState {
            current_prior: spec.d0.clone(),
            current_time: 1,
        }
    }
}

/// Every candidate policy with its report, in enumeration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyGrid {
    pub policies: Vec<Policy>,
    pub reports: Vec<FreeEnergyReport>,
}

impl PolicyGrid {
    pub fn values(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.value).collect()
    }

    /// Indices within [`TIE_TOLERANCE`] of the minimum.
    pub fn argmin_set(&self) -> Vec<usize> {
        let values = self.values();
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        if !min.is_finite() {
            return (0..values.len()).collect();
        }
        (0..values.len())
            .filter(|&i| values[i] <= min + TIE_TOLERANCE)
            .collect()
    }

    /// Values as rows indexed by the first control.
    pub fn rows(&self, num_controls: usize) -> Vec<Vec<f64>> {
        self.values()
            .chunks(self.policies.len() / num_controls.max(1))
            .map(<[f64]>::to_vec)
            .collect()
    }
}

/// Evaluates every policy of the spec's horizon.
pub fn evaluate_grid(
    spec: &ModelSpec,
    prior: &Categorical,
    objective: Objective,
    mode: RestartMode,
) -> Result<PolicyGrid> {
    let policies = Policy::enumerate(spec.num_controls(), spec.horizon);
    let reports = policies
        .iter()
        .map(|p| evaluate(objective, spec, prior, p, mode))
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyGrid { policies, reports })
}

fn choose(grid: &PolicyGrid, rng: &mut impl Rng) -> Policy {
    let ties = grid.argmin_set();
    let pick = if ties.len() > 1 {
        ties[rng.gen_range(0..ties.len())]
    } else {
        ties[0]
    };
    grid.policies[pick].clone()
}

/// Scores every candidate and returns the minimizer, breaking ties uniformly
/// at random.
pub fn plan(
    state: &AgentState,
    spec: &ModelSpec,
    config: &AgentConfig,
    rng: &mut impl Rng,
) -> Result<(Policy, PolicyGrid)> {
    let spec = spec.at_time(state.current_time);
    let spec = ModelSpec {
        horizon: config.horizon,
        ..spec
    };
    let grid = evaluate_grid(&spec, &state.current_prior, config.objective, config.restart_mode)?;
    Ok((choose(&grid, rng), grid))
}

pub fn act(policy: &Policy) -> Result<usize> {
    policy
        .first()
        .ok_or_else(|| Error::Model("cannot act on an empty policy".into()))
}

/// Exact filtering: `d_t ∝ A[ŷ, ·] ⊙ (B_û d_{t−1})`.
pub fn slide(state: &AgentState, spec: &ModelSpec, control: usize, observation: usize) -> Result<AgentState> {
    if observation >= spec.num_observations() {
        return Err(Error::Dimension(format!("observation {observation} out of range")));
    }
    let predicted = spec.transition(control)?.mul_vec(state.current_prior.probs());
    let weights: Vec<f64> = predicted
        .iter()
        .zip(spec.observation.row(observation))
        .map(|(p, a)| p * a)
        .collect();
    if !weights.iter().any(|w| *w > 0.0) {
        return Err(Error::Inconsistency {
            edge: format!("x{}", state.current_time),
        });
    }
    Ok(AgentState {
        current_prior: Categorical::from_weights(&weights)?,
        current_time: state.current_time + 1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub time: usize,
    /// Planned policy as 1-based moves.
    pub policy: Vec<usize>,
    pub action: usize,
    pub observation: usize,
    pub observation_label: String,
    /// Free energies with rows indexed by the first move.
    pub grid: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub objective: Objective,
    pub alpha: f64,
    pub c: f64,
    pub reward_arm: usize,
    pub seed: u64,
    pub steps: Vec<StepRecord>,
    pub expected_reward: f64,
}

impl Trajectory {
    pub fn actions(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

/// splitmix64 finalizer, used to derive independent stream seeds.
pub fn mix(seed: u64) -> u64 {
    let mut z = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one stream, e.g. `[seed, cell_i, cell_j, run]`.
pub fn derive(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED, |acc, &p| mix(acc ^ mix(p)))
}

/// Grids already computed for a given time and prior; planning is
/// deterministic up to the tie-break, so runs of one cell can share them.
#[derive(Debug, Default)]
struct PlanCache {
    grids: HashMap<(usize, Vec<u64>), PolicyGrid>,
}

impl PlanCache {
    fn plan(
        &mut self,
        state: &AgentState,
        spec: &ModelSpec,
        config: &AgentConfig,
        rng: &mut impl Rng,
    ) -> Result<(Policy, PolicyGrid)> {
        let key = (
            state.current_time,
            state.current_prior.probs().iter().map(|p| p.to_bits()).collect(),
        );
        if let Some(grid) = self.grids.get(&key) {
            return Ok((choose(grid, rng), grid.clone()));
        }
        let (policy, grid) = plan(state, spec, config, rng)?;
        self.grids.insert(key, grid.clone());
        Ok((policy, grid))
    }
}

fn trial(
    config: &AgentConfig,
    alpha: f64,
    c: f64,
    reward_arm: usize,
    moves: usize,
    seed: u64,
    cache: &mut PlanCache,
) -> Result<Trajectory> {
    if moves == 0 {
        return Err(Error::Model("a trial needs at least one move".into()));
    }
    if config.horizon == 0 {
        return Err(Error::Model("horizon must be at least 1".into()));
    }
    let spec = build_tmaze_model_through(alpha, c, config.horizon, 1, moves + config.horizon - 1)?;
    let mut env = TMazeEnv::new(reward_arm, alpha, derive(&[seed, 1]))?;
    let mut tie_rng = ChaCha8Rng::seed_from_u64(derive(&[seed, 2, config.tie_break_seed]));
    let mut state = AgentState::initial(&spec);
    let mut steps = Vec::with_capacity(moves);
    for _ in 0..moves {
        let (policy, grid) = cache.plan(&state, &spec, config, &mut tie_rng)?;
        let control = act(&policy)?;
        env.execute(control + 1)?;
        let observation = env.observe();
        steps.push(StepRecord {
            time: state.current_time,
            policy: tmaze::moves_of(&policy),
            action: control + 1,
            observation,
            observation_label: tmaze::observation_label(observation),
            grid: grid.rows(spec.num_controls()),
        });
        state = slide(&state, &spec, control, observation)?;
    }
    Ok(Trajectory {
        objective: config.objective,
        alpha,
        c,
        reward_arm,
        seed,
        steps,
        expected_reward: env.expected_reward(),
    })
}

/// One interactive trial of `moves` moves.
pub fn run_trial(
    config: &AgentConfig,
    alpha: f64,
    c: f64,
    reward_arm: usize,
    moves: usize,
    seed: u64,
) -> Result<Trajectory> {
    trial(config, alpha, c, reward_arm, moves, seed, &mut PlanCache::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeCell {
    pub alpha: f64,
    pub c: f64,
    pub mean_reward: f64,
    /// Executed moves of every run.
    pub actions: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landscape {
    pub objective: Objective,
    pub alphas: Vec<f64>,
    pub cs: Vec<f64>,
    pub runs: usize,
    pub seed: u64,
    /// `cells[i][j]` is the cell for `alphas[i]` and `cs[j]`.
    pub cells: Vec<Vec<LandscapeCell>>,
}

impl Landscape {
    pub fn rewards(&self) -> Vec<Vec<f64>> {
        self.cells
            .iter()
            .map(|row| row.iter().map(|c| c.mean_reward).collect())
            .collect()
    }

    /// Cells whose average reward is exactly zero.
    pub fn zero_cells(&self) -> usize {
        self.cells.iter().flatten().filter(|c| c.mean_reward == 0.0).count()
    }
}

/// Arithmetic mean with compensated summation, so that equal inputs average
/// to themselves.
pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    (sum + comp) / values.len() as f64
}

/// `steps` evenly spaced values from `min` to `max`.
pub fn linspace(min: f64, max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![min],
        _ => (0..steps)
            .map(|i| min + (max - min) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeParams {
    pub alphas: Vec<f64>,
    pub cs: Vec<f64>,
    pub runs: usize,
    pub reward_arm: usize,
    pub moves: usize,
    pub seed: u64,
}

/// Average expected reward over `runs` trials per `(α, c)` cell. Cells run in
/// parallel; each trial's seed depends only on its cell and run index.
pub fn run_landscape(config: &AgentConfig, params: &LandscapeParams) -> Result<Landscape> {
    if params.alphas.is_empty() || params.cs.is_empty() || params.runs == 0 {
        return Err(Error::Model(
            "landscape needs non-empty grids and at least one run".into(),
        ));
    }
    let jobs: Vec<(usize, usize)> = (0..params.alphas.len())
        .flat_map(|i| (0..params.cs.len()).map(move |j| (i, j)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, j)| {
            let (alpha, c) = (params.alphas[i], params.cs[j]);
            let mut cache = PlanCache::default();
            let mut rewards = Vec::with_capacity(params.runs);
            let mut actions = Vec::with_capacity(params.runs);
            for r in 0..params.runs {
                let seed = derive(&[params.seed, i as u64, j as u64, r as u64]);
                let t = trial(config, alpha, c, params.reward_arm, params.moves, seed, &mut cache)?;
                rewards.push(t.expected_reward);
                actions.push(t.actions());
            }
            Ok(LandscapeCell {
                alpha,
                c,
                mean_reward: mean(&rewards),
                actions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut it = results.into_iter();
    let cells = (0..params.alphas.len())
        .map(|_| it.by_ref().take(params.cs.len()).collect())
        .collect();
    Ok(Landscape {
        objective: config.objective,
        alphas: params.alphas.clone(),
        cs: params.cs.clone(),
        runs: params.runs,
        seed: params.seed,
        cells,
    })
}

/// Thread pool sized by [`THREADS_ENV`], or rayon's default when unset.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Model(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::Model(format!("cannot start thread pool: {e}")))
}
