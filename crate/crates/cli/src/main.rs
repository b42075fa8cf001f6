mod args;
mod manifest;
mod run;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, RunConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

/// Maps an error chain to the documented exit codes.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<gadscan::Error>() {
            return match e {
                gadscan::Error::Numerical(_) => EXIT_NUMERICAL,
                gadscan::Error::InvalidArgument(_) => EXIT_USAGE,
                gadscan::Error::Json(_) | gadscan::Error::Version { .. } => EXIT_DATA,
                e if e.is_data_quality() => EXIT_DATA,
                _ => 1,
            };
        }
        if cause.is::<csv::Error>() || cause.is::<serde_json::Error>() {
            return EXIT_DATA;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cfg = RunConfig::from(Cli::parse());
    if let Some(n) = cfg.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size the thread pool: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match run::execute(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_kinds_map_to_exit_codes() {
        let code = |e: gadscan::Error| exit_code(&anyhow::Error::new(e).context("while running"));
        assert_eq!(code(gadscan::Error::Numerical("x".into())), EXIT_NUMERICAL);
        assert_eq!(code(gadscan::Error::InvalidArgument("x".into())), EXIT_USAGE);
        assert_eq!(code(gadscan::Error::DataQuality("x".into())), EXIT_DATA);
        assert_eq!(code(gadscan::Error::DimensionMismatch { expected: 1, found: 2 }), EXIT_DATA);
        assert_eq!(exit_code(&anyhow::anyhow!("plain")), 1);
    }
}
