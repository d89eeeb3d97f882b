//! `cfme` command-line driver: simulate data, run single estimates, sweep a
//! policy grid over seeds and report interval coverage.
//!
//! Exit codes: 0 success, 2 invalid input (including usage errors),
//! 3 numerical failure, 4 I/O failure.

pub mod commands;
pub mod config;
mod error;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "cfme",
    version,
    about = "Counterfactual mean embedding estimators for policy evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write D1, D2 and D3 as CSV files.
    Simulate,
    /// Print one estimate as JSON.
    Estimate,
    /// Run a policy sweep and write the table and plot data.
    Sweep,
    /// Run a sweep and report interval coverage per method.
    Calibrate,
    /// Print the Monte-Carlo truth for each alpha.
    Oracle,
}

/// Flags shared by every subcommand. Values are validated by [`RunConfig`],
/// so a flag and the matching config-file key behave identically.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Key-value config file; flags override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Data-generating setting: A or B.
    #[arg(long, global = true)]
    pub setting: Option<String>,
    /// Size of the logged sample D1.
    #[arg(long, global = true)]
    pub n: Option<String>,
    /// Size of the outcome sample D2.
    #[arg(long, global = true)]
    pub m: Option<String>,
    /// Contexts subsampled for D3 (default min(N, 100)).
    #[arg(long, global = true)]
    pub l: Option<String>,
    /// Single policy parameter.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alpha: Option<String>,
    /// Equispaced policy grid.
    #[arg(
        long,
        global = true,
        value_name = "MIN:MAX:COUNT",
        allow_hyphen_values = true
    )]
    pub alpha_grid: Option<String>,
    /// Explicit comma-separated policy list.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub alphas: Option<String>,
    /// Estimator for `estimate`: plugin, cfmp, bayes_rcfme or bayes_cfmp.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Comma-separated estimators for sweeps, or `all`.
    #[arg(long, global = true)]
    pub methods: Option<String>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, global = true)]
    pub seeds: Option<String>,
    /// Base seed.
    #[arg(long, global = true)]
    pub seed: Option<String>,
    /// Explicit comma-separated seeds (overrides --seeds).
    #[arg(long, global = true)]
    pub seed_list: Option<String>,
    /// Ridge of the embedding stage.
    #[arg(long, global = true)]
    pub lambda: Option<String>,
    /// Noise/ridge of the outcome regression.
    #[arg(long, global = true)]
    pub lambda_f: Option<String>,
    /// Credible level (default 0.95).
    #[arg(long, global = true)]
    pub level: Option<String>,
    /// Monte-Carlo draws for the truth (default 1e6).
    #[arg(long, global = true)]
    pub mc_samples: Option<String>,
    /// Seed of the Monte-Carlo truth.
    #[arg(long, global = true)]
    pub oracle_seed: Option<String>,
    /// median or explicit.
    #[arg(long, global = true)]
    pub lengthscale_mode: Option<String>,
    /// Two covariate lengthscales for explicit mode, `a,b`.
    #[arg(long, global = true)]
    pub lengthscales_x: Option<String>,
    /// Outcome lengthscale for explicit mode.
    #[arg(long, global = true)]
    pub lengthscale_r: Option<String>,
    /// Kernel inside the Θ₄ regression term: K or R.
    #[arg(long, global = true)]
    pub theta4: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<String>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<String>,
}

impl CommonArgs {
    /// Flags that were given, as config key-value pairs.
    pub fn overrides(&self) -> Vec<(String, String)> {
        let fields: [(&str, &Option<String>); 23] = [
            ("setting", &self.setting),
            ("n", &self.n),
            ("m", &self.m),
            ("l", &self.l),
            ("alpha", &self.alpha),
            ("alpha_grid", &self.alpha_grid),
            ("alphas", &self.alphas),
            ("method", &self.method),
            ("methods", &self.methods),
            ("seeds", &self.seeds),
            ("seed", &self.seed),
            ("seed_list", &self.seed_list),
            ("lambda", &self.lambda),
            ("lambda_f", &self.lambda_f),
            ("level", &self.level),
            ("mc_samples", &self.mc_samples),
            ("oracle_seed", &self.oracle_seed),
            ("lengthscale_mode", &self.lengthscale_mode),
            ("lengthscales_x", &self.lengthscales_x),
            ("lengthscale_r", &self.lengthscale_r),
            ("theta4", &self.theta4),
            ("jobs", &self.jobs),
            ("out", &self.out),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect()
    }
}

/// Runs `command` on a thread pool sized by `cfg.jobs`.
pub fn dispatch(
    command: Command,
    cfg: &RunConfig,
    out: &mut (dyn Write + Send),
) -> Result<(), CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cfg.jobs {
        builder = builder.num_threads(jobs);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    pool.install(|| match command {
        Command::Simulate => commands::cmd_simulate(cfg, out).map(drop),
        Command::Estimate => commands::cmd_estimate(cfg, out).map(drop),
        Command::Sweep => commands::cmd_sweep(cfg, out).map(drop),
        Command::Calibrate => commands::cmd_calibrate(cfg, out).map(drop),
        Command::Oracle => commands::cmd_oracle(cfg, out).map(drop),
    })
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { CliError::INPUT } else { 0 };
        }
    };
    let result = RunConfig::load(cli.common.config.as_deref(), &cli.common.overrides())
        .and_then(|cfg| dispatch(cli.command, &cfg, &mut std::io::stdout()));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("cfme: {e}");
            e.exit_code()
        }
    }
}
