//! `consensus`: command-line front end.
//!
//! Verbs: `analyze`, `simulate`, `montecarlo`, `gamma`, `verify`,
//! `code-bench`. Outputs go to `--out`, else `$CONSENSUS_OUT_DIR`, else
//! `./out`. The worker pool size follows `RAYON_NUM_THREADS`.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = args::Cli::parse();
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
