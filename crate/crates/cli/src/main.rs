use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use thiserror::Error;
use wsn_outlier::simnet::{self, Algorithm, RatingName, Scenario, SimError};

mod sweep;

#[derive(Debug, Parser)]
#[command(
    name = "wsn-outlier",
    version,
    about = "Simulate in-network outlier detection on a sensor network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scenario and write nodes.csv and summary.json.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long, env = "WSN_OUTLIER_OUT", default_value = "out")]
        out: PathBuf,
    },
    /// Run a parameter sweep and write one CSV per sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, env = "WSN_OUTLIER_OUT", default_value = "out")]
        out: PathBuf,
        /// Base seed; repeat i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Check a scenario and print it with every default filled in.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    algorithm: Option<Algorithm>,
    #[arg(long)]
    rating: Option<RatingName>,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    d: Option<u32>,
    #[arg(long)]
    p_drop: Option<f64>,
    #[arg(long)]
    sink: Option<u32>,
}

impl Common {
    fn load(&self) -> Result<(Scenario, PathBuf), CliError> {
        let (mut s, dir) = Scenario::load(&self.config).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(v) = self.seed {
            s.seed = v;
        }
        if let Some(v) = self.algorithm {
            s.algorithm = v;
        }
        if let Some(v) = self.rating {
            s.rating = v;
        }
        if self.w.is_some() {
            s.w = self.w;
        }
        if let Some(v) = self.n {
            s.n = v;
        }
        if let Some(v) = self.k {
            s.k = v;
        }
        if self.d.is_some() {
            s.d = self.d;
        }
        if let Some(v) = self.p_drop {
            s.p_drop = v;
        }
        if self.sink.is_some() {
            s.sink = self.sink;
        }
        Ok((s, dir))
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, usize::from)
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error:\n{0}")]
    Config(String),
    #[error("invariant breach: {0}")]
    Breach(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn from_sim(e: SimError, cell: Option<&str>) -> Self {
        let msg = match cell {
            Some(c) => format!("cell {c}: {e}"),
            None => e.to_string(),
        };
        match e {
            SimError::Config(_) | SimError::Topology(_) => Self::Config(msg),
            e if e.is_invariant_breach() => Self::Breach(msg),
            _ => Self::Io(msg),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Breach(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

fn write(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, body).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { common, out } => {
            let (s, dir) = common.load()?;
            let setup = s.resolve(&dir).map_err(|e| CliError::Config(e.to_string()))?;
            let m = simnet::run(&setup).map_err(|e| CliError::from_sim(e, None))?;
            write(&out.join("nodes.csv"), &m.nodes_csv())?;
            write(&out.join("summary.json"), &m.summary_json())?;
            info!("wrote {}", out.display());
            print!("{}", m.summary_json());
        }
        Command::Validate { common } => {
            let (s, dir) = common.load()?;
            s.resolve(&dir).map_err(|e| CliError::Config(e.to_string()))?;
            print!("{}", s.to_toml());
        }
        Command::Sweep {
            config,
            out,
            seed,
            jobs,
        } => {
            let (spec, dir) = sweep::SweepSpec::load(&config)?;
            let rows = spec.run(&dir, seed, jobs.max(1))?;
            let path = out.join(format!("{}.csv", spec.name));
            write(&path, &sweep::csv(&rows))?;
            write(
                &out.join(format!("{}.totals.csv", spec.name)),
                &sweep::totals_csv(&rows),
            )?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wsn-outlier: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
