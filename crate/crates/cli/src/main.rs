use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use bregvr::{builtin, BUILTIN_NAMES};
use bregvr_cli::{certify, oracle, run_experiment, CliError, ExperimentConfig, Overrides, EXIT_CERTIFICATE};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bregvr", version, about = "Variance-reduced Bregman primal-dual saddle solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run all replications and write trace.csv and summary.json.
    Run(Common),
    /// Print the step-size certificate as JSON; exit 2 if it is not valid.
    Certify(Common),
    /// Compute and print a certified saddle point as JSON.
    Oracle(Common),
    /// List the builtin instances.
    ListInstances,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    stages: Option<usize>,
    /// Run even when the certificate is rejected or θ and the weights are mismatched.
    #[arg(long)]
    unsafe_override: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut config = ExperimentConfig::load(&self.config)?;
        config.apply(&Overrides {
            seed: self.seed,
            stages: self.stages,
            unsafe_override: self.unsafe_override,
            output_dir: self.output.clone(),
        });
        config.validate()?;
        Ok(config)
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    let mut stdout = std::io::stdout().lock();
    let _ = serde_json::to_writer_pretty(&mut stdout, value);
    let _ = writeln!(stdout);
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run(args) => {
            let report = run_experiment(&args.load()?)?;
            for error in &report.summary.errors {
                eprintln!("replication {}: {}", error.replication, error.message);
            }
            eprintln!("wrote {} and {}", report.trace_path.display(), report.summary_path.display());
            Ok(report.exit_code)
        }
        Command::Certify(args) => {
            let report = certify(&args.load()?)?;
            print_json(&report);
            Ok(if report.certificate.valid() { 0 } else { EXIT_CERTIFICATE })
        }
        Command::Oracle(args) => {
            let config = args.load()?;
            let saddle = oracle(&config)?;
            if let Some(dir) = &args.output {
                std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                let path = dir.join("oracle.json");
                let json = serde_json::to_string_pretty(&saddle).map_err(|e| CliError::Output(e.to_string()))?;
                std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;
            }
            print_json(&saddle);
            Ok(0)
        }
        Command::ListInstances => {
            println!("{:<22} {:<18} {:>4} {:>4} {:>4} {:>4}  hash", "name", "geometry", "d", "p", "n", "n'");
            for name in BUILTIN_NAMES {
                let spec = builtin(name).expect("builtin names resolve");
                let instance = spec.build().map_err(|e| CliError::Config(e.to_string()))?;
                let problem = &instance.problem;
                println!(
                    "{:<22} {:<18} {:>4} {:>4} {:>4} {:>4}  {}",
                    name,
                    format!("{}/{}", spec.primal_geometry.name(), spec.dual_geometry.name()),
                    problem.primal_dim(),
                    problem.dual_dim(),
                    problem.h().count(),
                    problem.ell().count(),
                    spec.hash()
                );
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
