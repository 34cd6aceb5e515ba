use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use chorsec_core::cli::{
    cmd_check, cmd_infer, cmd_nitest, cmd_run, CmdOutput, NiOptions, RunOptions, DEFAULT_MAX_STEPS, DEFAULT_SEED,
    DEFAULT_TRIALS,
};
use clap::{Parser, Subcommand};

/// Flow-policy checker and interpreter for recursive choreographies.
#[derive(Parser)]
#[command(name = "chorsec", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Type-check main at bottom under the inferred procedure context.
    Check {
        file: PathBuf,
        #[arg(long)]
        policy: PathBuf,
    },
    /// Print the inferred procedure constraints.
    Infer {
        file: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// Also print the constraints generated for main.
        #[arg(long)]
        show_constraints: bool,
    },
    /// Execute main from a store file.
    Run {
        file: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "det")]
        sched: String,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
        #[arg(long)]
        trace: bool,
        /// Make division by zero and type mismatches evaluation errors.
        #[arg(long)]
        strict_eval: bool,
    },
    /// Differential non-interference test over random low-equivalent stores.
    Nitest {
        file: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
        max_steps: usize,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let out: CmdOutput = match cli.command {
        Command::Check { file, policy } => cmd_check(&file, &policy),
        Command::Infer {
            file,
            policy,
            show_constraints,
        } => cmd_infer(&file, &policy, show_constraints),
        Command::Run {
            file,
            store,
            seed,
            sched,
            max_steps,
            trace,
            strict_eval,
        } => cmd_run(
            &file,
            &store,
            &RunOptions {
                seed,
                sched,
                max_steps,
                trace,
                strict: strict_eval,
            },
        ),
        Command::Nitest {
            file,
            policy,
            trials,
            seed,
            max_steps,
        } => cmd_nitest(&file, &policy, &NiOptions { trials, seed, max_steps }),
    };
    let _ = std::io::stdout().write_all(out.stdout.as_bytes());
    let _ = std::io::stderr().write_all(out.stderr.as_bytes());
    ExitCode::from(out.code as u8)
}
