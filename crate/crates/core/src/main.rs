use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dicke_emission::config::{self, Mode, RunConfig};
use dicke_emission::run::run;
use dicke_emission::Error;

#[derive(Parser)]
#[command(version, about = "Single-photon cooperative emission from random atomic clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One cloud: decay matrix, survival, Dicke projections, rates and patterns.
    Single(Common),
    /// Ensemble sweep over atom number and sample size with exponent fits.
    Sweep(Common),
    /// The numbered acceptance criteria.
    Accept(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Suppress the human-readable summary on stdout.
    #[arg(long)]
    quiet: bool,
}

fn load(mode: Mode, args: &Common) -> Result<RunConfig, Error> {
    let mut cfg = match &args.config {
        Some(path) => config::load(path)?,
        None if mode == Mode::Acceptance => config::parse("mode = \"acceptance\"")?,
        None => return Err(Error::Config("--config is required for this subcommand".into())),
    };
    if cfg.mode != mode {
        return Err(Error::Config(format!(
            "config has mode = {:?} but the subcommand runs {mode:?}",
            cfg.mode
        )));
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = match &cli.command {
        Command::Single(a) => (Mode::Single, a),
        Command::Sweep(a) => (Mode::Sweep, a),
        Command::Accept(a) => (Mode::Acceptance, a),
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(if args.quiet {
        "error"
    } else {
        "warn"
    }))
    .init();

    if let Some(n) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }

    let result = load(mode, args).and_then(|cfg| {
        let out = args
            .out
            .clone()
            .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        run(&cfg, &out)
    });
    match result {
        Ok(summary) => {
            if !args.quiet {
                print!("{}", summary.text);
                for f in &summary.files {
                    println!("wrote {}", f.display());
                }
            }
            if summary.failed_criteria > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
