use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use delay_da::harness::{self, suites, Format};

/// Simulate dual averaging under delayed feedback and check regret bounds.
#[derive(Parser)]
#[command(name = "delay-da", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and report its bound checks.
    Run {
        scenario: PathBuf,
        /// Directory for the output file; prints to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "summary", value_parser = ["csv", "plotdata", "summary"])]
        format: String,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a predefined experiment grid.
    Suite {
        #[arg(value_parser = suites::SUITES)]
        name: String,
    },
    /// Parse a scenario and build its inputs without running it.
    Validate { scenario: PathBuf },
}

/// Writes to stdout; a closed pipe is not an error.
fn emit_stdout(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

const CONFIG_ERROR: u8 = 2;
const CHECK_FAILED: u8 = 1;

fn fail(e: delay_da::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_configuration() { CONFIG_ERROR } else { CHECK_FAILED })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { CONFIG_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run { scenario, out, format, seed } => {
            let format: Format = match format.parse() {
                Ok(f) => f,
                Err(e) => return fail(e),
            };
            let report = match harness::run_file(&scenario, seed) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            match out {
                Some(dir) => match harness::emit(&report, format, &dir) {
                    Ok(path) => emit_stdout(&format!("wrote {}\n", path.display())),
                    Err(e) => return fail(e),
                },
                None => emit_stdout(&harness::render(&report, format)),
            }
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                for c in report.checks.iter().filter(|c| !c.satisfied()) {
                    eprintln!("bound {} violated: measured {} > rhs {}", c.id, c.measured, c.rhs);
                }
                ExitCode::from(CHECK_FAILED)
            }
        }
        Command::Suite { name } => match suites::run_suite(&name) {
            Ok(report) => {
                emit_stdout(&report.render());
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(CHECK_FAILED)
                }
            }
            Err(e) => fail(e),
        },
        Command::Validate { scenario } => match harness::validate_file(&scenario) {
            Ok(sc) => {
                emit_stdout(&format!(
                    "{}: valid ({} scenario, seed {})\n",
                    scenario.display(),
                    sc.algorithm.name(),
                    sc.seed
                ));
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
    }
}
