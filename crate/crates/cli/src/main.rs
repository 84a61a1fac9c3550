//! `iqpbp` command-line driver.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad arguments, 3 capacity
//! exceeded, 4 verification failure.

mod args;
mod output;
mod run;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use output::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0}")]
    Args(String),
    #[error(transparent)]
    Lib(#[from] iqpbp::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Verify(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Args(_) => 2,
            Failure::Lib(e) if e.is_capacity() => 3,
            Failure::Lib(iqpbp::Error::Io(_) | iqpbp::Error::Json(_)) => 1,
            Failure::Lib(_) => 2,
            Failure::Io(_) | Failure::Csv(_) => 1,
            Failure::Verify(_) => 4,
        }
    }
}

fn name(c: &Command) -> &'static str {
    match c {
        Command::Ranks(_) => "ranks",
        Command::Variance(_) => "variance",
        Command::Anticoncentration(_) => "anticoncentration",
        Command::Scan(_) => "scan",
        Command::Train(_) => "train",
        Command::Sample(_) => "sample",
        Command::Probs(_) => "probs",
        Command::OracleVerify(_) => "oracle-verify",
        Command::Replay(_) => "replay",
    }
}

fn execute(cli: &Cli, argv: Vec<String>) -> Result<(), Failure> {
    let g = &cli.global;
    let mut seed = g.seed.unwrap_or(0);
    let mut verified = true;
    let extra = match &cli.command {
        Command::Ranks(a) => run::ranks(a, g)?,
        Command::Variance(a) => run::variance(a, g)?,
        Command::Anticoncentration(a) => run::anticoncentration(a, g)?,
        Command::Scan(a) => run::scan(a, g)?,
        Command::Train(a) => {
            let (extra, s) = run::train_cmd(a, g)?;
            seed = s;
            extra
        }
        Command::Sample(a) => run::sample(a, g)?,
        Command::Probs(a) => run::probs(a, g)?,
        Command::OracleVerify(a) => {
            verified = run::oracle_verify(a, g)?;
            vec![]
        }
        Command::Replay(r) => return replay(&r.manifest_path, cli),
    };
    if let Some(path) = run::manifest_path(g) {
        let mut outputs: Vec<_> = g.out.iter().cloned().collect();
        outputs.extend(extra);
        let params = serde_json::to_value(cli).map_err(iqpbp::Error::from)?;
        RunManifest::new(name(&cli.command), argv, params, seed, outputs).write(&path)?;
    }
    if !verified {
        return Err(Failure::Verify("oracle comparison exceeded tolerance".into()));
    }
    Ok(())
}

/// Re-runs a recorded command; `--out` and `--manifest` on the replay
/// command redirect its outputs.
fn replay(path: &std::path::Path, outer: &Cli) -> Result<(), Failure> {
    let m = RunManifest::read(path)?;
    let mut argv = vec!["iqpbp".to_string()];
    argv.extend(m.args.iter().cloned());
    let mut cli = Cli::try_parse_from(&argv).map_err(|e| Failure::Args(format!("manifest arguments: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Failure::Args("a manifest cannot record a replay".into()));
    }
    if outer.global.out.is_some() {
        cli.global.out = outer.global.out.clone();
        cli.global.manifest = outer.global.manifest.clone();
    }
    let mut args = m.args.clone();
    if let Some(o) = &outer.global.out {
        args = strip(&args, &["--out", "-o", "--manifest"]);
        args.push(format!("--out={}", o.to_string_lossy()));
        if let Some(mp) = &outer.global.manifest {
            args.push(format!("--manifest={}", mp.to_string_lossy()));
        }
    }
    execute(&cli, args)
}

/// Drops `flag value` and `flag=value` pairs.
fn strip(args: &[String], flags: &[&str]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if flags.contains(&a.as_str()) {
            it.next();
        } else if !flags.iter().any(|f| a.starts_with(&format!("{f}="))) {
            out.push(a.clone());
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match execute(&cli, argv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
