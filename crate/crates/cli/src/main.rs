use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use tdbh_cli::config::{parse_config, ConfigError};
use tdbh_cli::run::run;

/// Run a lattice experiment described by a `key = value` config file.
///
/// Any config key can be overridden on the command line as `--key value`.
#[derive(Parser, Debug)]
#[command(name = "tdbh", version, trailing_var_arg = true)]
struct Cli {
    /// Path to the configuration file.
    config: PathBuf,

    /// Overrides, as `--key value` pairs.
    #[arg(allow_hyphen_values = true, num_args = 0..)]
    overrides: Vec<String>,
}

fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .ok_or_else(|| ConfigError::Invalid(format!("expected `--key value`, found {flag:?}")))?;
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.replace('-', "_"), v.to_string()));
            continue;
        }
        let value = it.next().ok_or_else(|| ConfigError::Invalid(format!("override `--{key}` has no value")))?;
        out.push((key.replace('-', "_"), value.clone()));
    }
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = match parse_overrides(&cli.overrides).and_then(|o| parse_config(&cli.config, &o)) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("tdbh: {e}");
            return ExitCode::from(2);
        }
    };
    log::info!("scenario {} -> {}", cfg.scenario, cfg.output_dir.display());
    let manifest = run(&cfg);
    match &manifest.error {
        Some(e) => eprintln!("tdbh: {e}"),
        None => log::info!("done in {:.2} s", manifest.wall_time_s),
    }
    ExitCode::from(manifest.exit_code as u8)
}
