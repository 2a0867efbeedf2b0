//! `anderson-lab`: batch driver for disorder-ensemble spectral experiments.
//!
//! Settings are taken from the flag, then the `ANDERSON_*` environment
//! variable, then the `[run]` block of the config file.
//!
//! Exit codes: 0 success, 1 selftest violations, 2 invalid configuration,
//! 3 numeric or I/O failure, 4 localization gate false (override with `--force`).

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anderson_core::selftest::Fault;
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const VERSION: &str = env!("ANDERSON_VERSION");

/// Error carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<anderson_core::Error> for Failure {
    fn from(e: anderson_core::Error) -> Self {
        use anderson_core::Error as E;
        let code = match e {
            E::Parameter { .. } | E::Geometry { .. } | E::Size { .. } => 2,
            _ => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(format!("io: {e}"))
    }
}

#[derive(Parser)]
#[command(name = "anderson-lab", version = VERSION, about = "Random Schrödinger operator experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Run the deterministic property suites; exit 0 iff no violations.
    Selftest(SelftestArgs),
    /// Write one assembled operator as a coordinate list.
    ExportOperator(ExportArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long, env = "ANDERSON_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "ANDERSON_TRIALS")]
    trials: Option<usize>,
    #[arg(long, env = "ANDERSON_WORKERS")]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, env = "ANDERSON_OUT")]
    out: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> config::Overrides {
        config::Overrides {
            trials: self.trials,
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Config file; same as --config.
    #[arg(conflicts_with = "config")]
    path: Option<PathBuf>,
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long, env = "ANDERSON_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "ANDERSON_TRIALS")]
    trials: Option<usize>,
    #[arg(long, env = "ANDERSON_WORKERS")]
    workers: Option<usize>,
    #[arg(long, env = "ANDERSON_OUT")]
    out: Option<PathBuf>,
    /// Proceed even when the localization gate is false.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    None,
    InertiaSignFlip,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, env = "ANDERSON_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long, env = "ANDERSON_WORKERS")]
    workers: Option<usize>,
    #[arg(long, env = "ANDERSON_OUT")]
    out: Option<PathBuf>,
    #[arg(long, hide = true, value_enum, default_value = "none")]
    inject_fault: FaultArg,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: Common,
    /// Trial index of the realization.
    #[arg(long, default_value_t = 0)]
    trial: u64,
}

fn workers_pool(n: Option<usize>) -> Result<(), Failure> {
    let n = n.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |k| k.get()));
    if n == 0 {
        return Err(Failure::validation("cli: invalid parameter `run.workers`: must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::runtime(format!("cli: thread pool: {e}")))
}

fn run(a: RunArgs) -> Result<u8, Failure> {
    let path = a
        .path
        .or(a.config)
        .ok_or_else(|| Failure::validation("cli: missing parameter `--config`"))?;
    let o = config::Overrides {
        trials: a.trials,
        seed: a.seed,
        workers: a.workers,
        out: a.out,
    };
    let r = config::load(&path)?.resolve(&o)?;
    workers_pool(Some(r.workers))?;
    experiments::execute(&r, a.force)
}

fn selftest(a: SelftestArgs) -> Result<u8, Failure> {
    workers_pool(a.workers)?;
    let fault = match a.inject_fault {
        FaultArg::None => Fault::None,
        FaultArg::InertiaSignFlip => Fault::InertiaSignFlip,
    };
    let rep = anderson_core::selftest::run_selftest(a.seed, fault)?;
    println!("{}", output::selftest_summary(&rep));
    if let Some(dir) = a.out {
        std::fs::create_dir_all(&dir)?;
        let doc = serde_json::json!({ "version": VERSION, "seed": a.seed, "selftest": rep });
        std::fs::write(dir.join("selftest.json"), serde_json::to_string_pretty(&doc).expect("json"))?;
    }
    Ok(if rep.pass() { 0 } else { 1 })
}

fn export(a: ExportArgs) -> Result<u8, Failure> {
    let mut o = a.common.overrides();
    o.trials.get_or_insert(1);
    let r = config::load(&a.common.config)?.resolve(&o)?;
    let spec = r.config.model_spec()?;
    let side = r.config.side()?;
    let h = spec.realize(side, anderson_core::estimates::box_seed(r.seed, side), a.trial)?;
    std::fs::create_dir_all(&r.out)?;
    let path = r.out.join(format!("operator_L{side}_trial{}.txt", a.trial));
    let f = std::io::BufWriter::new(std::fs::File::create(&path)?);
    h.write_coordinate_list(f)?;
    println!("wrote {} (n = {}, hash {})", path.display(), h.dim(), h.hash());
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => run(a),
        Command::Selftest(a) => selftest(a),
        Command::ExportOperator(a) => export(a),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
