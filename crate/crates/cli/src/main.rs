//! `gammalab`: run the checkers and bounds from the command line or from a
//! JSON manifest.
//!
//! Exit status: 0 when every check holds (possibly within confidence
//! intervals), 2 when any check is violated, 1 on usage or configuration
//! errors.

mod commands;
mod params;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::Serialize;

use commands::{execute, Command, Outcome};
use params::{artifact_version, ExperimentManifest, Format, Params};

#[derive(Debug, Parser)]
#[command(name = "gammalab", version, about = "Gamma calculus and spin-glass variance bound checks")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Manifest whose parameters sit under the command-line flags.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Serialize)]
struct Report<'a> {
    manifest: &'a ExperimentManifest,
    result: &'a serde_json::Value,
}

fn resolve(cli: &Cli) -> Result<ExperimentManifest> {
    let from_file = match (&cli.command, &cli.manifest) {
        (Command::Run { path }, None) => Some(ExperimentManifest::load(path)?),
        (Command::Run { .. }, Some(_)) => bail!("`run` takes the manifest as its argument, not --manifest"),
        (_, Some(path)) => Some(ExperimentManifest::load(path)?),
        (_, None) => None,
    };
    let command = match (&cli.command, &from_file) {
        (Command::Run { .. }, Some(m)) => m.command.clone(),
        (c, Some(m)) if m.command != c.id() => {
            bail!("manifest is for `{}` but the command line asks for `{}`", m.command, c.id())
        }
        (c, _) => c.id().to_string(),
    };
    let base = from_file.as_ref().map(|m| m.params.clone()).unwrap_or_default();
    let flags = cli.command.params().cloned().unwrap_or_default();
    Ok(ExperimentManifest {
        command,
        version: artifact_version(),
        params: flags.over(base).resolve()?,
    })
}

fn emit(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(body.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn write_outputs(manifest: &ExperimentManifest, outcome: &Outcome) -> Result<()> {
    let p: &Params = &manifest.params;
    let out = p.out.as_deref();
    match p.format() {
        Format::Json => {
            let report = Report {
                manifest,
                result: &outcome.result,
            };
            let mut body = serde_json::to_string_pretty(&report)?;
            body.push('\n');
            emit(out, &body)
        }
        Format::Csv => {
            emit(out, &outcome.csv)?;
            if let Some(path) = out {
                let mut side = path.as_os_str().to_owned();
                side.push(".manifest.json");
                let mut body = serde_json::to_string_pretty(manifest)?;
                body.push('\n');
                emit(Some(Path::new(&side)), &body)?;
            }
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(t) = cli.threads {
        if t == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let manifest = resolve(&cli)?;
    let outcome = execute(&manifest.command, &manifest.params)?;
    write_outputs(&manifest, &outcome)?;
    Ok(outcome.violated)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("gammalab: at least one check was violated");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("gammalab: {e:#}");
            ExitCode::from(1)
        }
    }
}
