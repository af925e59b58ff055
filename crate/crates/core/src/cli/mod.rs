//! Command-line experiment runner.
//!
//! Precedence for every setting: flag, then config file, then default. The
//! output directory falls back to `$CRITVAL_OUT_DIR`, then `./out`.
//! Exit status: 0 all comparisons pass, 1 a comparison fails, 2 usage or runtime error.

pub mod config;
pub mod run;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{
    validate, Command, ConfigErrors, ExperimentConfig, FieldError, Formula, GridSpec, RawConfig,
};
pub use run::{analytic_curve, content_hash, run, RunOutcome};

#[derive(Debug, Parser)]
#[command(
    name = "critval",
    version,
    about = "Critical values and values of random SU(m+1) polynomials"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Sub,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Sample sections, find critical points, pool values, compare with a curve.
    Critvals(Flags),
    /// Sample sections, evaluate |s| at FS-uniform points, compare with a curve.
    Values(Flags),
    /// Tabulate an analytic curve.
    Density(Flags),
    /// Gaussian density from the spherical one through the Laplace bridge.
    Bridge(Flags),
    /// Sup-error rate table of a curve against the universal limit.
    Converge(Flags),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<u32>,
    #[arg(long)]
    pub m: Option<u32>,
    /// Comma-separated degrees for `converge`.
    #[arg(long, value_delimiter = ',')]
    pub ns: Option<Vec<u32>>,
    /// gaussian, normalized or spherical.
    #[arg(long)]
    pub ensemble: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub samples: Option<usize>,
    /// FS-uniform points per section for `values`.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub formula: Option<String>,
    /// `lo:hi:points`.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub volume: Option<f64>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub mc_seed: Option<u64>,
    /// Skip the comparison; exit status is then 0 on success.
    #[arg(long)]
    pub no_compare: bool,
    #[arg(long)]
    pub l1_threshold: Option<f64>,
    #[arg(long)]
    pub ks_level: Option<f64>,
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// csv or json.
    #[arg(long)]
    pub format: Option<String>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
}

impl Flags {
    /// Overlay the flags that were given onto `raw`.
    pub fn apply(&self, raw: &mut RawConfig) {
        fn set<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        set(&mut raw.degree.n, &self.n);
        set(&mut raw.degree.m, &self.m);
        set(&mut raw.degree.ns, &self.ns);
        set(&mut raw.ensemble.kind, &self.ensemble);
        set(&mut raw.ensemble.alpha, &self.alpha);
        set(&mut raw.sampling.samples, &self.samples);
        set(&mut raw.sampling.points_per_section, &self.points);
        set(&mut raw.sampling.seed, &self.seed);
        set(&mut raw.curve.formula, &self.formula);
        set(&mut raw.curve.grid, &self.grid);
        set(&mut raw.curve.volume, &self.volume);
        set(&mut raw.mc.samples, &self.mc_samples);
        set(&mut raw.mc.seed, &self.mc_seed);
        if self.no_compare {
            raw.compare.enabled = Some(false);
        }
        set(&mut raw.compare.l1_threshold, &self.l1_threshold);
        set(&mut raw.compare.ks_level, &self.ks_level);
        set(&mut raw.compare.bootstrap, &self.bootstrap);
        set(&mut raw.output.dir, &self.out);
        set(&mut raw.output.format, &self.format);
    }
}

impl Sub {
    fn split(&self) -> (Command, &Flags) {
        match self {
            Sub::Critvals(f) => (Command::Critvals, f),
            Sub::Values(f) => (Command::Values, f),
            Sub::Density(f) => (Command::Density, f),
            Sub::Bridge(f) => (Command::Bridge, f),
            Sub::Converge(f) => (Command::Converge, f),
        }
    }
}

/// Configuration from the optional file with flags applied, validated.
pub fn load(
    command: Command,
    flags: &Flags,
) -> std::result::Result<ExperimentConfig, ConfigErrors> {
    let mut raw = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| {
                ConfigErrors(vec![FieldError::new(
                    "--config",
                    format!("{}: {e}", path.display()),
                )])
            })?;
            RawConfig::from_toml(&text)?
        }
        None => RawConfig::default(),
    };
    flags.apply(&mut raw);
    validate(command, &raw)
}

/// Parse `args`, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let (command, flags) = cli.command.split();
    let cfg = match load(command, flags) {
        Ok(c) => c,
        Err(errs) => {
            eprintln!("invalid configuration:");
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&errs.0).unwrap_or_else(|_| errs.to_string())
            );
            return 2;
        }
    };
    let result = match flags.threads {
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| run(&cfg)),
            Err(e) => {
                eprintln!("cannot start {t} worker threads: {e}");
                return 2;
            }
        },
        None => run(&cfg),
    };
    match result {
        Ok(outcome) => {
            for a in &outcome.artifacts {
                println!("wrote {}", a.display());
            }
            for (name, ok) in &outcome.checks {
                println!("{name}: {}", if *ok { "pass" } else { "FAIL" });
            }
            if outcome.passed() {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("{} failed: {e}", command.name());
            2
        }
    }
}
