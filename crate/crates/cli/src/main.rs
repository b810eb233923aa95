use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ldtn_cli::config::extract_overrides;
use ldtn_cli::{cmd_eval, cmd_replay, cmd_run, cmd_train, CliError, CliResult, ScenarioConfig};

/// Lunar rover DTN simulator: train the learned router, evaluate policies,
/// record and replay episode traces.
///
/// Any config key can also be set with `--section.key value`, e.g.
/// `--trainer.gamma 0.9`. Shorthand flags win over dotted overrides, which
/// win over the config file.
#[derive(Parser, Debug)]
#[command(name = "ldtn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the training curriculum and write a checkpoint.
    Train {
        #[command(flatten)]
        common: Common,
        /// run.checkpoint
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo comparison of routing policies.
    Eval {
        #[command(flatten)]
        common: Common,
        /// run.checkpoint
        #[arg(long)]
        model: Option<PathBuf>,
        /// run.policies (comma separated)
        #[arg(long, value_delimiter = ',')]
        policies: Option<Vec<String>>,
        /// run.jobs
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run one episode, optionally writing a step trace.
    Run {
        #[command(flatten)]
        common: Common,
        /// run.checkpoint
        #[arg(long)]
        model: Option<PathBuf>,
        /// run.policy
        #[arg(long)]
        policy: Option<String>,
        /// run.trace
        #[arg(long)]
        trace: Option<PathBuf>,
        /// run.max_steps
        #[arg(long)]
        max_steps: Option<u64>,
        /// run.episode
        #[arg(long)]
        episode: Option<u64>,
    },
    /// Re-emit the step records of a trace as JSON lines on stdout.
    Replay {
        #[arg(long)]
        episode_log: PathBuf,
    },
    /// Print the effective configuration as TOML.
    Config {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config file; defaults apply to missing keys.
    config: Option<PathBuf>,
    /// run.seed
    #[arg(long)]
    seed: Option<u64>,
    /// run.episodes
    #[arg(long)]
    episodes: Option<usize>,
    /// run.rovers
    #[arg(long)]
    rovers: Option<usize>,
    /// run.output_dir
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self, overrides: &[(String, String)]) -> CliResult<ScenarioConfig> {
        let mut cfg = ScenarioConfig::load(self.config.as_deref(), overrides)?;
        if let Some(v) = self.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = self.episodes {
            cfg.run.episodes = v;
        }
        if let Some(v) = self.rovers {
            cfg.run.rovers = Some(v);
        }
        if let Some(v) = &self.out_dir {
            cfg.run.output_dir = v.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli, overrides: &[(String, String)]) -> CliResult<()> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Train { common, out } => {
            let mut cfg = common.load(overrides)?;
            if let Some(p) = out {
                cfg.run.checkpoint = p;
            }
            let res = cmd_train(&cfg, &mut stdout)?;
            let _ = writeln!(stdout, "checkpoint {}\nmetrics {}", res.checkpoint.display(), res.metrics.display());
        }
        Command::Eval { common, model, policies, jobs } => {
            let mut cfg = common.load(overrides)?;
            if let Some(p) = model {
                cfg.run.checkpoint = p;
            }
            if let Some(p) = policies {
                cfg.run.policies = p;
            }
            if let Some(j) = jobs {
                cfg.run.jobs = j;
            }
            let res = cmd_eval(&cfg, &mut stdout)?;
            let _ = writeln!(stdout, "results {}\nsummary {}", res.csv.display(), res.summary.display());
        }
        Command::Run { common, model, policy, trace, max_steps, episode } => {
            let mut cfg = common.load(overrides)?;
            if let Some(p) = model {
                cfg.run.checkpoint = p;
            }
            if let Some(p) = policy {
                cfg.run.policy = p;
            }
            if trace.is_some() {
                cfg.run.trace = trace;
            }
            if let Some(s) = max_steps {
                cfg.run.max_steps = s;
            }
            if let Some(e) = episode {
                cfg.run.episode = e;
            }
            let m = cmd_run(&cfg)?;
            let json = serde_json::to_string(&m).map_err(|e| CliError { code: 1, message: e.to_string() })?;
            let _ = writeln!(stdout, "{json}");
        }
        Command::Replay { episode_log } => {
            let (_, summary) = cmd_replay(&episode_log, &mut stdout)?;
            if let Some(s) = summary {
                let json = serde_json::to_string(&s).map_err(|e| CliError { code: 1, message: e.to_string() })?;
                eprintln!("{json}");
            }
        }
        Command::Config { common } => {
            let cfg = common.load(overrides)?;
            cfg.validate()?;
            let _ = write!(stdout, "{}", cfg.to_toml());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = match extract_overrides(std::env::args().collect()) {
        Ok(split) => split,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
