use std::path::PathBuf;
use std::process::ExitCode;

use abf_cli::acceptance::{acceptance, AcceptanceOptions, Suite};
use abf_cli::config::{Engine, ExperimentConfig};
use abf_cli::run::{run, EXIT_OTHER, EXIT_VALIDATION};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "abflab", version, about = "Adaptive biasing force experiments on the flat torus")]
struct Cli {
    /// Worker threads for the parallel engines (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (TOML); a run manifest works too.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Fast,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the Fokker-Planck equation and write the trajectory diagnostics.
    SimulatePde(RunArgs),
    /// Run the interacting particle system.
    SimulateParticles(RunArgs),
    /// Solve for the stationary state by fixed-point iteration.
    Stationary(RunArgs),
    /// Sweep the perturbation size and report the free-energy bias.
    PerturbationSweep(RunArgs),
    /// Constants of the force and sampled functional inequalities.
    Diagnose(RunArgs),
    /// Run the acceptance suite.
    Acceptance {
        #[arg(long, value_enum, default_value = "fast")]
        suite: SuiteArg,
        /// Directory for the report and the particle runs.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run only these criteria (comma separated).
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u32>>,
    },
}

fn simulate(engine: Engine, args: RunArgs) -> ExitCode {
    let mut cfg = match &args.config {
        Some(path) => match ExperimentConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("invalid configuration: {e}");
                return ExitCode::from(EXIT_VALIDATION as u8);
            }
        },
        None => ExperimentConfig::default(),
    };
    cfg.experiment.engine = engine;
    if let Some(seed) = args.seed {
        cfg.experiment.seed = seed;
    }
    match run(&cfg, &args.out) {
        Ok(outcome) => {
            for p in &outcome.outputs {
                println!("{}", p.display());
            }
            println!("{}", outcome.manifest.display());
            if let Some(e) = &outcome.error {
                eprintln!("{e}");
            }
            ExitCode::from(outcome.exit_code as u8)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("cannot configure {k} threads: {e}");
            return ExitCode::from(EXIT_OTHER as u8);
        }
    }
    match cli.command {
        Command::SimulatePde(a) => simulate(Engine::Pde, a),
        Command::SimulateParticles(a) => simulate(Engine::Particles, a),
        Command::Stationary(a) => simulate(Engine::Stationary, a),
        Command::PerturbationSweep(a) => simulate(Engine::Sweep, a),
        Command::Diagnose(a) => simulate(Engine::Diagnose, a),
        Command::Acceptance { suite, out, seed, only } => {
            let mut opts = AcceptanceOptions {
                suite: match suite {
                    SuiteArg::Fast => Suite::Fast,
                    SuiteArg::Full => Suite::Full,
                },
                only,
                workdir: out.clone(),
                ..Default::default()
            };
            if let Some(s) = seed {
                opts.seed = s;
            }
            let report = acceptance(&opts);
            print!("{}", report.render());
            if let Some(dir) = &out {
                if let Err(e) = report.write(dir) {
                    eprintln!("cannot write report: {e}");
                    return ExitCode::from(EXIT_OTHER as u8);
                }
            }
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
