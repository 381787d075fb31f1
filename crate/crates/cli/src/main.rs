use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;

/// Train, evaluate and analyse RL controllers for a surrogate building
/// energy model.
#[derive(Debug, Parser)]
#[command(name = "urbanrl", version, about)]
struct Cli {
    /// key=value settings file (run, reward, `building.*`, `qlearning.*`,
    /// `dqn.*`, `sac.*` keys)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Override one setting, e.g. `--set sac.batch_size=128`; repeatable,
    /// wins over the config file
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory
    #[arg(long, global = true, env = "URBANRL_OUT", default_value = ".", value_name = "DIR")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct ForcingArgs {
    /// City preset (london, new_york, beijing, hong_kong, singapore); selects
    /// synthetic training/evaluation years and the default controller
    #[arg(long)]
    city: Option<String>,

    /// Training forcing CSV (temperatures in K, one row per 1800 s step)
    #[arg(long, value_name = "CSV")]
    forcing: Option<PathBuf>,

    /// Evaluation forcing CSV (temperatures in K, one row per 1800 s step)
    #[arg(long, value_name = "CSV")]
    eval_forcing: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an agent, then evaluate it on the held-out forcing
    Train {
        /// qlearning, dqn or sac
        #[arg(long)]
        agent: String,
        #[command(flatten)]
        forcing: ForcingArgs,
        /// Training episodes of one simulated year (17520 half-hour steps) each
        #[arg(long)]
        episodes: Option<usize>,
        /// RNG seed (required)
        #[arg(long)]
        seed: u64,
        /// Energy weight w of the reward, dimensionless in [0, 1]
        #[arg(long)]
        w: Option<f64>,
    },
    /// Roll out a trained policy and report its mean per-step reward
    Evaluate {
        /// Checkpoint directory, `.sacpolicy` artifact, `.mlp` network, Q-table
        /// file, or `default` for the city's default controller
        #[arg(long, value_name = "PATH")]
        policy: String,
        #[command(flatten)]
        forcing: ForcingArgs,
        /// Evaluation episodes (one simulated year each)
        #[arg(long, default_value_t = 3)]
        episodes: usize,
        /// Seed for stochastic evaluation
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Energy weight w of the reward, dimensionless in [0, 1]
        #[arg(long)]
        w: Option<f64>,
        /// Use the mean action of SAC policies (pass `false` to sample)
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set, value_name = "BOOL")]
        deterministic: bool,
    },
    /// Re-score a fixed policy and a default controller over reward weights 0..1
    Sweep {
        /// Policy to sweep (same forms as `evaluate --policy`)
        #[arg(long, value_name = "PATH")]
        policy: String,
        /// City whose default controller is the baseline; also the evaluation
        /// city unless --city is given
        #[arg(long)]
        baseline_city: Option<String>,
        #[command(flatten)]
        forcing: ForcingArgs,
        /// Weight of the reward the policy was evaluated under, in [0, 1]
        #[arg(long)]
        w: Option<f64>,
        /// Grid points between w=0 and w=1
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// Evaluate every policy in every city and score cross-city transfer
    Transfer {
        /// `CITY=PATH`, one per trained model; repeat for each city
        #[arg(long = "policy", value_name = "CITY=PATH", required = true)]
        policies: Vec<String>,
        /// Evaluation episodes per cell (one simulated year each)
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        /// Energy weight w of the reward, dimensionless in [0, 1]
        #[arg(long)]
        w: Option<f64>,
    },
    /// Write the deployable `SACPOLICY 1` artifact of a SAC checkpoint
    Export {
        /// SAC checkpoint directory or `policy.mlp`
        #[arg(long, value_name = "PATH")]
        policy: PathBuf,
        /// Artifact file name, relative to --out
        #[arg(long, default_value = "policy.sacpolicy", value_name = "FILE")]
        name: String,
    },
    /// Run the building model under fixed set points and dump the trajectory
    Simulate {
        #[command(flatten)]
        forcing: ForcingArgs,
        /// `default`, `off`, or `AC_C,HEAT_C,VENT` (°C, °C, air changes per hour)
        #[arg(long, default_value = "default")]
        controller: String,
        /// Steps of 1800 s to simulate (defaults to one episode)
        #[arg(long)]
        steps: Option<usize>,
        /// Energy weight w of the reward, dimensionless in [0, 1]
        #[arg(long)]
        w: Option<f64>,
    },
    /// Generate a synthetic forcing CSV from a preset or explicit climate
    GenForcing {
        /// City preset supplying the climate parameters
        #[arg(long)]
        city: Option<String>,
        /// Steps of 1800 s to generate
        #[arg(long, default_value_t = 17_520)]
        steps: usize,
        /// Noise seed (defaults to the preset's)
        #[arg(long)]
        seed: Option<u64>,
        /// Mean canopy temperature, K
        #[arg(long)]
        mean_k: Option<f64>,
        /// Annual sine amplitude, K
        #[arg(long)]
        annual_k: Option<f64>,
        /// Diurnal sine amplitude, K
        #[arg(long)]
        diurnal_k: Option<f64>,
        /// Gaussian noise standard deviation, K
        #[arg(long)]
        noise_k: Option<f64>,
        /// Delay of the inner-node temperatures, steps of 1800 s
        #[arg(long)]
        lag_steps: Option<usize>,
        /// Output file name, relative to --out
        #[arg(long, value_name = "FILE")]
        name: Option<String>,
    },
    /// Print the city presets
    Presets,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
