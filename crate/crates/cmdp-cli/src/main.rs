//! Command-line front end: offline solves and diagnostics plus configured
//! experiment runs.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on infeasible or invalid
//! inputs (unparseable grids or configs, infeasible models, aborted runs).

use clap::{Args, Parser, Subcommand};
use cmdp::agents::Branch;
use cmdp::envs::{compile_grid, parse_grid, EnvInstance};
use cmdp::harness::{
    reference_solution, resolve_env, run, sweep, AgentKind, ExperimentConfig, HarnessError, Trace,
};
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "cmdp",
    version,
    about = "Constrained MDP planning and posterior-sampling RL experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct EnvArgs {
    /// Builtin environment (toy | marsrover4 | marsrover8 | box) or a .grid path.
    env: String,
    /// Escape probability of the toy environment.
    #[arg(long, default_value_t = 0.9)]
    theta: f64,
    /// Threshold override for the toy environment.
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the constrained planning problem on the true model.
    Solve(EnvArgs),
    /// Print the diameter of an environment's transition kernel.
    Diameter(EnvArgs),
    /// Parse and compile a grid file, reporting its state space.
    Validate { grid: PathBuf },
    /// Run a configured experiment, writing trace and metrics CSVs.
    Run { config: PathBuf },
    /// Run one experiment config for several agents with shared seeds.
    Sweep {
        config: PathBuf,
        /// Comma-separated agent kinds (psconrl | psrlcmdp | cucrl).
        #[arg(long, value_delimiter = ',', required = true)]
        agents: Vec<String>,
    },
}

enum CliError {
    Usage(String),
    Input(HarnessError),
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        CliError::Input(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = u8::from(e.use_stderr());
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve(args) => {
            let env = resolve_env(&args.env, args.theta, args.tau)?;
            print_solution(&env)?;
        }
        Command::Diameter(args) => {
            let env = resolve_env(&args.env, args.theta, args.tau)?;
            println!("{}: diameter {:.6}", env.name, env.diameter);
        }
        Command::Validate { grid } => {
            let env = validate_grid(&grid)?;
            println!("{}: ok", grid.display());
            println!("states: {}", env.model.n_states());
            println!("actions: {}", env.model.n_actions());
            println!("constraints: {}", env.model.n_constraints());
            println!("initial state: {}", env.initial_state);
            println!("diameter: {:.6}", env.diameter);
        }
        Command::Run { config } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let traces = run(&cfg)?;
            print_run_summary(&cfg, &traces);
        }
        Command::Sweep { config, agents } => {
            let kinds = parse_agent_list(&agents)?;
            let cfg = ExperimentConfig::from_file(&config)?;
            for (kind, traces) in sweep(&cfg, &kinds)? {
                let mut sub = cfg.clone();
                sub.agent = kind;
                sub.outdir = cfg.outdir.join(kind.as_str());
                print_run_summary(&sub, &traces);
            }
        }
    }
    Ok(())
}

fn parse_agent_list(agents: &[String]) -> Result<Vec<AgentKind>, CliError> {
    agents
        .iter()
        .map(|s| {
            s.parse::<AgentKind>()
                .map_err(|e| CliError::Usage(e.to_string()))
        })
        .collect()
}

fn validate_grid(path: &PathBuf) -> Result<EnvInstance, CliError> {
    let text = fs::read_to_string(path).map_err(HarnessError::Io)?;
    let spec = parse_grid(&text).map_err(HarnessError::Env)?;
    Ok(compile_grid(&spec).map_err(HarnessError::Env)?)
}

fn print_solution(env: &EnvInstance) -> Result<(), CliError> {
    let sol = reference_solution(env)?;
    let model = &env.model;
    println!(
        "{}: {} states, {} actions, {} constraint(s)",
        env.name,
        model.n_states(),
        model.n_actions(),
        model.n_constraints()
    );
    println!("optimal loss: {:.6}", sol.objective_value);
    for i in 0..model.n_constraints() {
        let value = sol.constraint_values[i];
        let threshold = model.thresholds()[i];
        let status = if (threshold - value).abs() <= 1e-6 {
            "binding"
        } else {
            "slack"
        };
        println!("constraint {i}: value {value:.6} <= threshold {threshold:.6} ({status})");
    }
    println!("policy (rows are states, columns action probabilities):");
    for s in 0..model.n_states() {
        let probs: Vec<String> = (0..model.n_actions())
            .map(|a| format!("{:.4}", sol.policy.prob(s, a)))
            .collect();
        println!("  s{s}: [{}]", probs.join(", "));
    }
    Ok(())
}

fn print_run_summary(cfg: &ExperimentConfig, traces: &[Trace]) {
    println!(
        "{} / {}: {} run(s), horizon {}, seeds {}..{}",
        cfg.env,
        cfg.agent.as_str(),
        traces.len(),
        cfg.horizon,
        cfg.base_seed,
        cfg.base_seed + traces.len() as u64 - 1
    );
    for (j, trace) in traces.iter().enumerate() {
        let episodes = trace.episodes.len();
        let lp_episodes = trace
            .episodes
            .iter()
            .filter(|e| e.branch == Branch::LpFeasible)
            .count();
        println!("  run {j}: {episodes} episode(s), {lp_episodes} via the constrained LP");
    }
    println!("wrote CSVs to {}", cfg.outdir.display());
}
