use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vcarleson_cli::{run, CliError, Experiment, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "vcarleson", version, about = "Reproducible experiments for variational Carleson-type operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Growth of the variational partial-sum operator on de la Vallée Poussin kernels.
    Sharpness(Common),
    /// Energy and density tree selection on a random multitile family.
    Decompose(Common),
    /// Dyadic martingale and smooth-average variation probes.
    Lepingle(Common),
    /// The variational Menshov–Paley–Zygmund ratio.
    Mpz(Common),
    /// SU(1,1) curves and their left traces.
    Nlft(Common),
    /// Dynamic-programming variation norm against exhaustive search.
    Selftest(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Parameter override, `key=value` with a JSON value.
    #[arg(long = "param", short = 'p', value_name = "KEY=VALUE")]
    params: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, common) = match cli.command {
        Command::Sharpness(c) => (Experiment::Sharpness, c),
        Command::Decompose(c) => (Experiment::Decompose, c),
        Command::Lepingle(c) => (Experiment::Lepingle, c),
        Command::Mpz(c) => (Experiment::Mpz, c),
        Command::Nlft(c) => (Experiment::Nlft, c),
        Command::Selftest(c) => (Experiment::Selftest, c),
    };
    let overrides = Overrides {
        config: common.config,
        seed: common.seed,
        output_dir: common.out,
        threads: common.threads,
        params: common.params,
    };
    match RunConfig::resolve(experiment, &overrides).and_then(|cfg| run(&cfg).map(|o| (cfg, o))) {
        Ok((cfg, outcome)) => {
            eprintln!("{experiment}: wrote {} files to {}", outcome.artifacts.len() + 1, cfg.output_dir.display());
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("{experiment}: checks failed, see the outputs");
                ExitCode::from(1)
            }
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    println!("{}", e.record());
    ExitCode::from(2)
}
