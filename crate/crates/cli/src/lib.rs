//! Batch driver: reads a scene file, runs one workflow and writes its
//! outputs to a directory.

pub mod commands;
pub mod output;
pub mod scene;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use smallbody::export::to_json;
use smallbody::{Error, Result};

use crate::commands::Products;
use crate::output::{write_all, ErrorReport};
use crate::scene::Scene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Solve the many-particle system for the scene's cloud.
    Solve,
    /// Solve the continuum limit on the scene's grid.
    Limit,
    /// Turn a target refraction coefficient into a particle cloud.
    Design,
    /// Run a convergence study over decreasing particle radii.
    Study,
    /// Check the scene without solving.
    Validate,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Limit => "limit",
            Command::Design => "design",
            Command::Study => "study",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "smallbody", version, about = "Wave scattering by many small bodies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scene file (JSON).
    #[arg(long, global = true)]
    pub scene: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Relative residual target of the linear solvers.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
}

/// Run metadata written alongside the outputs. The only place timing appears.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub command: String,
    pub version: String,
    pub threads: usize,
    pub tol: Option<f64>,
    pub elapsed_seconds: f64,
    pub outputs: Vec<String>,
    pub details: Value,
}

fn dispatch(command: Command, scene: &Scene, tol: Option<f64>) -> Result<(Products, Option<Error>)> {
    match command {
        Command::Solve => commands::solve(scene, tol).map(|p| (p, None)),
        Command::Limit => commands::limit(scene, tol).map(|p| (p, None)),
        Command::Design => commands::design_cmd(scene, tol).map(|p| (p, None)),
        Command::Study => commands::study(scene, tol).map(|p| (p, None)),
        Command::Validate => commands::validate(scene, tol),
    }
}

fn execute(cli: &Cli) -> Result<Option<Error>> {
    let path = cli
        .scene
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("--scene <path> is required".into()))?;
    if let Some(t) = cli.tol {
        if !(t.is_finite() && t > 0.0 && t < 1.0) {
            return Err(Error::InvalidInput(format!("--tol {t} must lie in (0, 1)")));
        }
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read scene {}: {e}", path.display())))?;
    let scene = Scene::parse(&text)?;
    let start = Instant::now();
    let (mut products, failure) = dispatch(cli.command, &scene, cli.tol)?;
    let meta = RunMetadata {
        command: cli.command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        tol: cli.tol,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        outputs: products.files.iter().map(|(n, _)| n.clone()).collect(),
        details: std::mem::take(&mut products.details),
    };
    products
        .files
        .push((format!("{}_metadata.json", cli.command.name()), to_json("run_metadata", &meta)?));
    write_all(&cli.out, &products.files)?;
    log::info!("wrote {} files to {}", products.files.len(), cli.out.display());
    Ok(failure)
}

/// Runs the parsed command; returns the process exit code. Failures are
/// reported on stderr as a JSON error document.
pub fn run(cli: &Cli) -> i32 {
    let go = || execute(cli);
    let result = match cli.threads {
        Some(0) => Err(Error::InvalidInput("--threads must be positive".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(go),
            Err(e) => Err(Error::InvalidInput(format!("thread pool: {e}"))),
        },
        None => go(),
    };
    match result {
        Ok(None) => 0,
        Ok(Some(e)) | Err(e) => {
            let report = ErrorReport::from_error(&e);
            eprint!("{}", report.to_json());
            report.exit_code
        }
    }
}
