use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mabi::harness::experiment::{ensure_dir, write_json, write_rows};
use mabi::harness::{
    lower_bound_demo, reproduce_figure, run_experiment, FigureId, LowerBoundConfig, NRule, Overrides, RunConfig,
};
use mabi::harness::config::parse_policies;
use mabi::validate::{validate, Suite};
use mabi::Error;

/// Multi-armed bandits with spatial interference: simulations and checks.
#[derive(Parser)]
#[command(name = "mabi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write results.csv, runs.csv and manifest.json.
    Simulate(Common),
    /// Reproduce a figure: n-eq-t2, n-eq-t3 or var-curves.
    ReproduceFig {
        #[arg(long)]
        figure: String,
        /// Fraction of full-scale work (instances and reps shrink by √scale).
        #[arg(long, default_value_t = 0.25)]
        scale: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run an invariant suite, or `all`.
    Validate {
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Switchback regret on hard instances and the coin-flip exceedance rate.
    LowerBoundDemo {
        /// Interior size m² of the hard instance.
        #[arg(long = "N", default_value_t = 1)]
        n: usize,
        #[arg(long = "T", value_delimiter = ',', default_value = "256,1024,4096")]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value = "out/lower-bound")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated: switchback-exp3ix (sb), exp3-ht-ix (cr), fixed-arm.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long = "T", value_delimiter = ',')]
    horizons: Option<Vec<usize>>,
    /// t2, t3 or a fixed perfect square.
    #[arg(long = "N-rule")]
    n_rule: Option<String>,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Deterministic square clustering without random boundary regions.
    #[arg(long)]
    simplified_clustering: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig, Error> {
        let base = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let overrides = Overrides {
            policies: self.policy.as_deref().map(parse_policies).transpose()?,
            horizons: self.horizons.clone(),
            n_rule: self.n_rule.as_deref().map(str::parse::<NRule>).transpose()?,
            instances: self.instances,
            reps: self.reps,
            seed: self.seed,
            out: self.out.clone(),
            threads: self.threads,
            simplified_clustering: self.simplified_clustering,
        };
        base.apply(&overrides)
    }
}

enum Failure {
    Validation,
    Error(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(common) => {
            let config = common.config()?;
            let (output, files) = run_experiment(&config)?;
            for row in &output.rows {
                println!(
                    "{:<18} T={:<4} N={:<6} mean={:.4} q95={:.4} VaR({})={:.4}",
                    row.policy, row.horizon, row.units, row.mean_regret, row.q95_regret, row.var_level, row.var_value
                );
            }
            println!("wrote {}", files.results.display());
        }
        Command::ReproduceFig { figure, scale, common } => {
            let which: FigureId = figure.parse()?;
            let config = common.config()?;
            let files = reproduce_figure(which, scale, &config, common.horizons.as_deref())?;
            println!("wrote {} and {}", files.csv.display(), files.svg.display());
        }
        Command::Validate { suite } => {
            let suites = if suite == "all" { Suite::ALL.to_vec() } else { vec![suite.parse()?] };
            let mut ok = true;
            for s in suites {
                let report = validate(s)?;
                print!("{report}");
                ok &= report.passed();
            }
            if !ok {
                return Err(Failure::Validation);
            }
        }
        Command::LowerBoundDemo { n, horizons, reps, seed, out, threads } => {
            let config = LowerBoundConfig { n, horizons, runs: reps, seed, ..Default::default() };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
            let rows = pool.install(|| lower_bound_demo(&config))?;
            ensure_dir(&out)?;
            write_rows(&out.join("lower_bound.csv"), &rows)?;
            write_json(&out.join("manifest.json"), &config)?;
            for r in &rows {
                println!(
                    "T={:<5} mean regret={:.3} (interior-normalised {:.3}) exceedance={:.4} ± {:.4}",
                    r.horizon, r.mean_regret, r.mean_regret_interior, r.exceedance_frequency, r.exceedance_se
                );
            }
            println!("wrote {}", out.join("lower_bound.csv").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => ExitCode::from(1),
        Err(Failure::Error(e @ Error::Config(_))) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
