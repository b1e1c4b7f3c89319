//! T-maze generative model, two-armed bandit and ground-truth environment.
//!
//! Positions are 1 (start), 2 and 3 (the reward arms) and 4 (the cue). The
//! reward sits in arm 2 or 3. Outcomes are 1 = cue says arm 2, 2 = cue says
//! arm 3, 3 = reward obtained, 4 = no reward. States and observations are
//! position-major:
//!
//! ```text
//! state       = 2·(pos − 1) + (arm − 2)        0..8
//! observation = 4·(pos − 1) + (outcome − 1)    0..16
//! ```
//!
//! Moves are numbered 1..=4 like positions; move `m` is control `m − 1`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dist::{direct_sum, kronecker, softmax, Categorical, StochasticMatrix};
use crate::error::{Error, Result};
use crate::model::{BanditSpec, ModelSpec, Policy};

pub const NUM_POSITIONS: usize = 4;
pub const NUM_ARMS: usize = 2;
pub const NUM_OUTCOMES: usize = 4;
pub const NUM_STATES: usize = NUM_POSITIONS * NUM_ARMS;
pub const NUM_OBSERVATIONS: usize = NUM_POSITIONS * NUM_OUTCOMES;

/// Position-major state and observation indexing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IndexCodec;

impl IndexCodec {
    pub fn state(pos: usize, arm: usize) -> Result<usize> {
        check_position(pos)?;
        if !(2..=3).contains(&arm) {
            return Err(Error::Model(format!("reward arm {arm} is not 2 or 3")));
        }
        Ok(2 * (pos - 1) + (arm - 2))
    }

    /// `(pos, arm)` of a state index.
    pub fn decode_state(s: usize) -> Result<(usize, usize)> {
        if s >= NUM_STATES {
            return Err(Error::Dimension(format!("state index {s} out of range")));
        }
        Ok((s / 2 + 1, s % 2 + 2))
    }

    pub fn observation(pos: usize, outcome: usize) -> Result<usize> {
        check_position(pos)?;
        if !(1..=NUM_OUTCOMES).contains(&outcome) {
            return Err(Error::Model(format!("outcome {outcome} out of range")));
        }
        Ok(4 * (pos - 1) + (outcome - 1))
    }

    /// `(pos, outcome)` of an observation index.
    pub fn decode_observation(o: usize) -> Result<(usize, usize)> {
        if o >= NUM_OBSERVATIONS {
            return Err(Error::Dimension(format!("observation index {o} out of range")));
        }
        Ok((o / 4 + 1, o % 4 + 1))
    }
}

fn check_position(pos: usize) -> Result<()> {
    if (1..=NUM_POSITIONS).contains(&pos) {
        Ok(())
    } else {
        Err(Error::Model(format!("position {pos} out of range")))
    }
}

pub fn outcome_label(outcome: usize) -> &'static str {
    match outcome {
        1 => "cue-left",
        2 => "cue-right",
        3 => "reward",
        4 => "no-reward",
        _ => "?",
    }
}

/// Human-readable observation label such as `pos4:cue-right`.
pub fn observation_label(o: usize) -> String {
    match IndexCodec::decode_observation(o) {
        Ok((pos, outcome)) => format!("pos{pos}:{}", outcome_label(outcome)),
        Err(_) => format!("invalid({o})"),
    }
}

/// Policy from 1-based moves.
pub fn policy_from_moves(moves: &[usize]) -> Result<Policy> {
    moves
        .iter()
        .map(|&m| {
            check_position(m)
                .map(|_| m - 1)
                .map_err(|_| Error::Model(format!("move {m} is not in 1..=4")))
        })
        .collect::<Result<Vec<_>>>()
        .map(Policy::new)
}

/// 1-based moves of a policy.
pub fn moves_of(policy: &Policy) -> Vec<usize> {
    policy.controls().iter().map(|u| u + 1).collect()
}

/// Position transitions `P_u[to, from]`, one per move.
const MOVES: [[[f64; 4]; 4]; 4] = [
    [[1., 0., 0., 1.], [0., 1., 0., 0.], [0., 0., 1., 0.], [0., 0., 0., 0.]],
    [[0., 0., 0., 0.], [1., 1., 0., 1.], [0., 0., 1., 0.], [0., 0., 0., 0.]],
    [[0., 0., 0., 0.], [0., 1., 0., 0.], [1., 0., 1., 1.], [0., 0., 0., 0.]],
    [[0., 0., 0., 0.], [0., 1., 0., 0.], [0., 0., 1., 0.], [1., 0., 0., 1.]],
];

/// Position reached from `pos` by `action`; the arms are absorbing.
pub fn next_position(pos: usize, action: usize) -> usize {
    if pos == 2 || pos == 3 {
        pos
    } else {
        action
    }
}

fn position_block(b: [[f64; 2]; 4]) -> StochasticMatrix {
    StochasticMatrix::from_rows(b.iter().map(|r| r.to_vec()).collect()).expect("observation block is column-stochastic")
}

pub fn observation_matrix(alpha: f64) -> Result<StochasticMatrix> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Model(format!("reward probability {alpha} outside [0, 1]")));
    }
    let a = alpha;
    let blocks = [
        position_block([[0.5, 0.5], [0.5, 0.5], [0., 0.], [0., 0.]]),
        position_block([[0., 0.], [0., 0.], [a, 1. - a], [1. - a, a]]),
        position_block([[0., 0.], [0., 0.], [1. - a, a], [a, 1. - a]]),
        position_block([[1., 0.], [0., 1.], [0., 0.], [0., 0.]]),
    ];
    direct_sum(&blocks)
}

pub fn transition_matrices() -> Vec<StochasticMatrix> {
    let eye = StochasticMatrix::identity(NUM_ARMS);
    MOVES
        .iter()
        .map(|p| {
            StochasticMatrix::from_rows(p.iter().map(|r| r.to_vec()).collect())
                .expect("move matrix is column-stochastic")
                .kron(&eye)
        })
        .collect()
}

pub fn initial_state() -> Categorical {
    Categorical::new(kronecker(&[1.0, 0.0, 0.0, 0.0], &[0.5, 0.5])).expect("normalized")
}

/// Goal prior for absolute time `k`: flat at `k = 1`, otherwise utility `+c`
/// on reward and `−c` on no reward at every position.
pub fn goal_prior(k: usize, c: f64) -> Result<Categorical> {
    if k <= 1 {
        return Ok(Categorical::uniform(NUM_OBSERVATIONS));
    }
    softmax(&kronecker(&[1.0; NUM_POSITIONS], &[0.0, 0.0, c, -c]))
}

/// T-maze model with goals for every time up to `last_goal_time`.
pub fn build_tmaze_model_through(
    alpha: f64,
    c: f64,
    horizon: usize,
    start_time: usize,
    last_goal_time: usize,
) -> Result<ModelSpec> {
    if !c.is_finite() {
        return Err(Error::Model(format!("reward utility {c} is not finite")));
    }
    if start_time == 0 {
        return Err(Error::Model("time starts at 1".into()));
    }
    let last = last_goal_time.max(start_time + horizon.max(1) - 1);
    let goals = (1..=last)
        .map(|k| Ok((k, goal_prior(k, c)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let spec = ModelSpec {
        observation: observation_matrix(alpha)?,
        transitions: transition_matrices(),
        d0: initial_state(),
        goals,
        horizon,
        start_time,
        alpha,
        c,
    };
    spec.validate()?;
    Ok(spec)
}

pub fn build_tmaze_model(alpha: f64, c: f64, horizon: usize, start_time: usize) -> Result<ModelSpec> {
    build_tmaze_model_through(alpha, c, horizon, start_time, start_time + horizon.max(1) - 1)
}

/// Two-armed bandit: control 0 is a coin flip, control 1 always yields outcome 0.
pub fn build_bandit_model() -> BanditSpec {
    BanditSpec {
        observation: StochasticMatrix::from_rows(vec![vec![0.5, 1.0], vec![0.5, 0.0]])
            .expect("bandit matrix is column-stochastic"),
    }
}

/// Ground-truth T-maze.
#[derive(Debug, Clone)]
pub struct TMazeEnv {
    pub reward_arm: usize,
    pub agent_pos: usize,
    pub alpha: f64,
    pub rng_seed: u64,
    observation: StochasticMatrix,
    rng: ChaCha8Rng,
}

impl TMazeEnv {
    pub fn new(reward_arm: usize, alpha: f64, rng_seed: u64) -> Result<Self> {
        IndexCodec::state(1, reward_arm)?;
        Ok(TMazeEnv {
            reward_arm,
            agent_pos: 1,
            alpha,
            rng_seed,
            observation: observation_matrix(alpha)?,
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
        })
    }

    pub fn state(&self) -> usize {
        IndexCodec::state(self.agent_pos, self.reward_arm).expect("valid environment state")
    }

    /// Moves the agent (`action` in 1..=4).
    pub fn execute(&mut self, action: usize) -> Result<()> {
        check_position(action).map_err(|_| Error::Model(format!("move {action} is not in 1..=4")))?;
        self.agent_pos = next_position(self.agent_pos, action);
        Ok(())
    }

    /// Samples an observation index from the true state.
    pub fn observe(&mut self) -> usize {
        let column = self.observation.column(self.state());
        let probs = column.probs();
        let block = 4 * (self.agent_pos - 1);
        let support: Vec<usize> = (block..block + NUM_OUTCOMES).filter(|&o| probs[o] > 0.0).collect();
        if support.len() == 1 {
            return support[0];
        }
        let draw: f64 = self.rng.gen();
        let mut acc = 0.0;
        for &o in &support {
            acc += probs[o];
            if draw < acc {
                return o;
            }
        }
        *support.last().expect("non-empty support")
    }

    /// Reward probability of the current position.
    pub fn expected_reward(&self) -> f64 {
        match self.agent_pos {
            p if p == self.reward_arm => self.alpha,
            2 | 3 => 1.0 - self.alpha,
            _ => 0.0,
        }
    }
}

pub fn env_execute(env: &mut TMazeEnv, action: usize) -> Result<()> {
    env.execute(action)
}

pub fn env_observe(env: &mut TMazeEnv) -> usize {
    env.observe()
}

pub fn expected_reward(env: &TMazeEnv) -> f64 {
    env.expected_reward()
}
