//! Experiment commands behind the `cbfe-aif` binary.

mod output;
pub mod verify;

pub use output::{ExperimentOutput, Format, Metadata, NamedMatrix};

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::agent::evaluate_grid;
use crate::agent::{linspace, run_landscape, run_trial, thread_pool, AgentConfig, LandscapeParams, PolicyGrid};
use crate::error::{Error, Result};
use crate::graph::build_bandit_graph;
use crate::model::Policy;
use crate::objectives::{cbfe_decompose, minimize_bfe, minimize_cbfe, solve_cbfe, Objective, RestartMode};
use crate::tmaze::{build_bandit_model, build_tmaze_model};

#[derive(Debug, Parser)]
#[command(
    name = "cbfe-aif",
    version,
    about = "Free-energy planning experiments on the bandit and T-maze models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write into this directory instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_alpha(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} is not in [0, 1]"))
    }
}

fn parse_finite(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err("value must be finite".into())
    }
}

fn parse_objective(s: &str) -> std::result::Result<Objective, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_restarts(s: &str) -> std::result::Result<RestartMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Free energies of the two bandit policies.
    Bandit {
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Minimized free energy of every policy on the T-maze.
    Grid {
        #[arg(long, value_parser = parse_objective)]
        objective: Objective,
        #[arg(long, value_parser = parse_alpha, default_value = "0.9")]
        alpha: f64,
        #[arg(long, value_parser = parse_finite, default_value = "2")]
        c: f64,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..=4))]
        horizon: u64,
        #[arg(long, value_parser = parse_restarts, default_value = "exhaustive")]
        restarts: RestartMode,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Opportunity, risk and extrinsic value of every policy.
    Decompose {
        #[arg(long, value_parser = parse_alpha, default_value = "0.9")]
        alpha: f64,
        #[arg(long, value_parser = parse_finite, default_value = "2")]
        c: f64,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..=4))]
        horizon: u64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// One interactive trial.
    Trial {
        #[arg(long, value_parser = parse_objective)]
        objective: Objective,
        #[arg(long, value_parser = parse_alpha, default_value = "0.9")]
        alpha: f64,
        #[arg(long, value_parser = parse_finite, default_value = "2")]
        c: f64,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..=4))]
        horizon: u64,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        moves: u64,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..=3))]
        reward_arm: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_restarts, default_value = "exhaustive")]
        restarts: RestartMode,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Average expected reward over a grid of reward probabilities and utilities.
    Landscape {
        #[arg(long, value_parser = parse_objective)]
        objective: Objective,
        #[arg(long, value_parser = parse_alpha, default_value = "0.5")]
        alpha_min: f64,
        #[arg(long, value_parser = parse_alpha, default_value = "1.0")]
        alpha_max: f64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        alpha_steps: u64,
        #[arg(long, value_parser = parse_finite, default_value = "0")]
        c_min: f64,
        #[arg(long, value_parser = parse_finite, default_value = "2")]
        c_max: f64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        c_steps: u64,
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
        runs: u64,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..=4))]
        horizon: u64,
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        moves: u64,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(2..=3))]
        reward_arm: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_restarts, default_value = "exhaustive")]
        restarts: RestartMode,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Compare every objective against the enumeration oracles.
    Verify {
        /// Corrupt one observation factor to check that failures are caught.
        #[arg(long)]
        perturb: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
}

/// Sequence labels for the remaining moves of a policy, e.g. `3` or `3-1`.
fn tail_labels(num_controls: usize, horizon: usize) -> Vec<String> {
    if horizon <= 1 {
        return vec!["-".into()];
    }
    Policy::enumerate(num_controls, horizon - 1)
        .iter()
        .map(|p| {
            p.controls()
                .iter()
                .map(|u| (u + 1).to_string())
                .collect::<Vec<_>>()
                .join("-")
        })
        .collect()
}

fn policy_matrix(name: &str, values: &[f64], num_controls: usize, horizon: usize, marked: &[usize]) -> NamedMatrix {
    let cols = values.len() / num_controls;
    NamedMatrix {
        name: name.to_string(),
        row_label: "first move".into(),
        col_label: if horizon > 2 {
            "later moves".into()
        } else {
            "second move".into()
        },
        row_headers: (1..=num_controls).map(|m| m.to_string()).collect(),
        col_headers: tail_labels(num_controls, horizon),
        values: values.chunks(cols).map(<[f64]>::to_vec).collect(),
        marked: marked.iter().map(|&i| (i / cols, i % cols)).collect(),
    }
}

fn grid_matrix(name: &str, grid: &PolicyGrid, num_controls: usize, horizon: usize) -> NamedMatrix {
    policy_matrix(name, &grid.values(), num_controls, horizon, &grid.argmin_set())
}

/// Indices within tolerance of the best value.
fn optimum(values: &[f64], maximize: bool) -> Vec<usize> {
    let sign = if maximize { -1.0 } else { 1.0 };
    let best = values.iter().map(|v| sign * v).fold(f64::INFINITY, f64::min);
    (0..values.len())
        .filter(|&i| sign * values[i] <= best + crate::agent::TIE_TOLERANCE)
        .collect()
}

pub fn cmd_bandit() -> Result<ExperimentOutput> {
    let spec = build_bandit_model();
    let mut values = Vec::new();
    for u in 0..spec.num_controls() {
        let graph = build_bandit_graph(&spec, u, true)?;
        let (bfe, _) = minimize_bfe(&graph)?;
        let (cbfe, _) = minimize_cbfe(&graph, RestartMode::Exhaustive)?;
        values.push(vec![bfe.value, cbfe.value]);
    }
    Ok(ExperimentOutput {
        metadata: Metadata::new("bandit"),
        matrices: vec![NamedMatrix {
            name: "free energy (bits)".into(),
            row_label: "policy".into(),
            col_label: "objective".into(),
            row_headers: vec!["u=0 ignorant".into(), "u=1 informative".into()],
            col_headers: vec!["BFE".into(), "CBFE".into()],
            values,
            marked: vec![],
        }],
        notes: vec![
            "CBFE of the ignorant policy is -log2 p(y|u=0) = +1 bit; a tabulated -1 for this entry has the wrong sign"
                .into(),
        ],
        detail: None,
    })
}

pub fn cmd_grid(
    objective: Objective,
    alpha: f64,
    c: f64,
    horizon: usize,
    restarts: RestartMode,
) -> Result<ExperimentOutput> {
    let spec = build_tmaze_model(alpha, c, horizon, 1)?;
    let grid = evaluate_grid(&spec, &spec.d0, objective, restarts)?;
    let mut metadata = Metadata::new("grid")
        .param("objective", objective)
        .param("alpha", alpha)
        .param("c", c)
        .param("horizon", horizon);
    if objective == Objective::Cbfe {
        metadata = metadata.param("restarts", restarts);
    }
    Ok(ExperimentOutput {
        metadata,
        matrices: vec![grid_matrix(objective.as_str(), &grid, spec.num_controls(), horizon)],
        notes: vec!["marked cells are the minimizers".into()],
        detail: Some(serde_json::to_value(&grid).map_err(|e| Error::State(e.to_string()))?),
    })
}

pub fn cmd_decompose(alpha: f64, c: f64, horizon: usize) -> Result<ExperimentOutput> {
    let spec = build_tmaze_model(alpha, c, horizon, 1)?;
    let prior = spec.d0.clone();
    let policies = Policy::enumerate(spec.num_controls(), horizon);
    let mut terms = Vec::with_capacity(policies.len());
    for p in &policies {
        let sol = solve_cbfe(&spec, &prior, p, RestartMode::Exhaustive)?;
        terms.push(cbfe_decompose(&spec, &prior, p, &sol.model, &sol.state)?);
    }
    let opportunity: Vec<f64> = terms.iter().map(|d| d.opportunity).collect();
    let risk: Vec<f64> = terms.iter().map(|d| d.risk).collect();
    let extrinsic: Vec<f64> = terms.iter().map(|d| d.extrinsic_value).collect();
    let n = spec.num_controls();
    Ok(ExperimentOutput {
        metadata: Metadata::new("decompose")
            .param("alpha", alpha)
            .param("c", c)
            .param("horizon", horizon),
        matrices: vec![
            policy_matrix("opportunity", &opportunity, n, horizon, &optimum(&opportunity, true)),
            policy_matrix("risk", &risk, n, horizon, &optimum(&risk, false)),
            policy_matrix("extrinsic value", &extrinsic, n, horizon, &optimum(&extrinsic, true)),
        ],
        notes: vec!["marked cells: maximal opportunity, minimal risk, maximal extrinsic value".into()],
        detail: Some(serde_json::to_value(&terms).map_err(|e| Error::State(e.to_string()))?),
    })
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_trial(
    config: AgentConfig,
    alpha: f64,
    c: f64,
    reward_arm: usize,
    moves: usize,
    seed: u64,
) -> Result<ExperimentOutput> {
    let t = run_trial(&config, alpha, c, reward_arm, moves, seed)?;
    let matrices = t
        .steps
        .iter()
        .map(|s| {
            let flat: Vec<f64> = s.grid.iter().flatten().copied().collect();
            let marked = optimum(&flat, false);
            policy_matrix(
                &format!("t={} {}", s.time, config.objective),
                &flat,
                s.grid.len(),
                config.horizon,
                &marked,
            )
        })
        .collect();
    let actions: Vec<String> = t.actions().iter().map(|a| a.to_string()).collect();
    Ok(ExperimentOutput {
        metadata: Metadata {
            seed: Some(seed),
            ..Metadata::new("trial")
                .param("objective", config.objective)
                .param("alpha", alpha)
                .param("c", c)
                .param("reward_arm", reward_arm)
                .param("moves", moves)
                .param("horizon", config.horizon)
        },
        matrices,
        notes: vec![
            format!("actions: ({})", actions.join(",")),
            format!("expected reward: {}", t.expected_reward),
        ],
        detail: Some(serde_json::to_value(&t).map_err(|e| Error::State(e.to_string()))?),
    })
}

pub fn cmd_landscape(config: AgentConfig, params: &LandscapeParams) -> Result<ExperimentOutput> {
    let pool = thread_pool()?;
    let landscape = pool.install(|| run_landscape(&config, params))?;
    Ok(ExperimentOutput {
        metadata: Metadata {
            seed: Some(params.seed),
            ..Metadata::new("landscape")
                .param("objective", config.objective)
                .param("alphas", &params.alphas)
                .param("cs", &params.cs)
                .param("runs", params.runs)
                .param("moves", params.moves)
                .param("horizon", config.horizon)
                .param("reward_arm", params.reward_arm)
        },
        matrices: vec![NamedMatrix {
            name: "average expected reward".into(),
            row_label: "alpha".into(),
            col_label: "c".into(),
            row_headers: params.alphas.iter().map(|a| format!("{a}")).collect(),
            col_headers: params.cs.iter().map(|c| format!("{c}")).collect(),
            values: landscape.rewards(),
            marked: vec![],
        }],
        notes: vec![format!("zero-reward cells: {}", landscape.zero_cells())],
        detail: Some(serde_json::to_value(&landscape).map_err(|e| Error::State(e.to_string()))?),
    })
}

/// Check results plus whether all of them passed.
pub fn cmd_verify(perturb: bool) -> Result<(ExperimentOutput, bool)> {
    let checks = verify::run_checks(perturb)?;
    let passed = checks.iter().all(|c| c.passed);
    let notes = checks
        .iter()
        .map(|c| {
            format!(
                "{} {}: {} cases, max deviation {:.3e}, worst {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.cases,
                c.max_deviation,
                c.worst_case
            )
        })
        .collect();
    Ok((
        ExperimentOutput {
            metadata: Metadata::new("verify")
                .param("perturb", perturb)
                .param("tolerance", verify::TOLERANCE),
            matrices: vec![],
            notes,
            detail: Some(serde_json::to_value(&checks).map_err(|e| Error::State(e.to_string()))?),
        },
        passed,
    ))
}

fn emit(out: &ExperimentOutput, args: &OutputArgs, stem: &str) -> Result<()> {
    match &args.out {
        Some(dir) => {
            let path = out.write_to(dir, stem, args.format)?;
            println!("{}", path.display());
        }
        None => {
            let text = out.render(args.format)?;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| Error::State(format!("cannot write output: {e}")))?;
        }
    }
    Ok(())
}

fn agent_config(objective: Objective, horizon: u64, restarts: RestartMode, seed: u64) -> AgentConfig {
    AgentConfig {
        objective,
        horizon: horizon as usize,
        restart_mode: restarts,
        tie_break_seed: seed,
    }
}

/// Runs a parsed command; `Ok(false)` means a verification failure.
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Bandit { output } => emit(&cmd_bandit()?, &output, "bandit")?,
        Command::Grid {
            objective,
            alpha,
            c,
            horizon,
            restarts,
            output,
        } => {
            let out = cmd_grid(objective, alpha, c, horizon as usize, restarts)?;
            emit(&out, &output, &format!("grid_{objective}"))?
        }
        Command::Decompose {
            alpha,
            c,
            horizon,
            output,
        } => emit(&cmd_decompose(alpha, c, horizon as usize)?, &output, "decompose")?,
        Command::Trial {
            objective,
            alpha,
            c,
            horizon,
            moves,
            reward_arm,
            seed,
            restarts,
            output,
        } => {
            let config = agent_config(objective, horizon, restarts, seed);
            let out = cmd_trial(config, alpha, c, reward_arm as usize, moves as usize, seed)?;
            emit(&out, &output, &format!("trial_{objective}"))?
        }
        Command::Landscape {
            objective,
            alpha_min,
            alpha_max,
            alpha_steps,
            c_min,
            c_max,
            c_steps,
            runs,
            horizon,
            moves,
            reward_arm,
            seed,
            restarts,
            output,
        } => {
            let config = agent_config(objective, horizon, restarts, seed);
            let params = LandscapeParams {
                alphas: linspace(alpha_min, alpha_max, alpha_steps as usize),
                cs: linspace(c_min, c_max, c_steps as usize),
                runs: runs as usize,
                reward_arm: reward_arm as usize,
                moves: moves as usize,
                seed,
            };
            emit(
                &cmd_landscape(config, &params)?,
                &output,
                &format!("landscape_{objective}"),
            )?
        }
        Command::Verify { perturb, output } => {
            let (out, passed) = cmd_verify(perturb)?;
            emit(&out, &output, "verify")?;
            return Ok(passed);
        }
    }
    Ok(true)
}

/// Entry point used by the binary.
pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
