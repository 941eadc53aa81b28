//! `topolab`: config-driven reports for oriented-line geometry.
//!
//! Exit codes: 0 ok, 1 computation failure, 2 config error.

// NaN must fail every validation check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use commands::{Command, ErrorRecord};
use output::OutDir;

#[derive(Parser)]
#[command(name = "topolab", version, about = "Oriented-line geometry reports and plot data")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Per-point curvature and congruence diagnostics on a grid.
    Analyze(Common),
    /// Maslov and analytic indices of parameter loops.
    Maslov(Common),
    /// Evolve a disc with boundary on a normal congruence.
    Flow(Common),
    /// Profile conditions, umbilic-gap sweeps and completeness probes.
    Toponogov(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (.toml or .json).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `out` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (overrides `threads` in the config).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Serialize)]
struct Versions {
    topolab: &'static str,
    topolab_cli: &'static str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'static str,
    config: String,
    config_sha256: String,
    seed: u64,
    threads: usize,
    versions: Versions,
    outputs: &'a [String],
    exit_code: u8,
    error: Option<&'a ErrorRecord>,
    wall_time_s: f64,
}

fn config_error(msg: &str) -> ExitCode {
    eprintln!("config error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let started = Instant::now();
    let cli = Cli::parse();
    let (cmd, args) = match cli.command {
        Cmd::Analyze(a) => (Command::Analyze, a),
        Cmd::Maslov(a) => (Command::Maslov, a),
        Cmd::Flow(a) => (Command::Flow, a),
        Cmd::Toponogov(a) => (Command::Toponogov, a),
    };

    let format = match config::Format::detect(&args.config) {
        Ok(f) => f,
        Err(e) => return config_error(&e),
    };
    let bytes = match std::fs::read(&args.config) {
        Ok(b) => b,
        Err(e) => return config_error(&format!("{}: {e}", args.config.display())),
    };
    let Ok(text) = std::str::from_utf8(&bytes) else {
        return config_error(&format!("{}: not UTF-8", args.config.display()));
    };
    let mut cfg = match config::parse(text, format) {
        Ok(c) => c,
        Err(e) => return config_error(&format!("{}: {e}", args.config.display())),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let threads = args.threads.or(cfg.threads);
    if threads == Some(0) {
        return config_error("threads must be at least 1");
    }
    let plan = match commands::plan(&cfg, cmd) {
        Ok(p) => p,
        Err(e) => return config_error(&e),
    };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let out_dir = args.out.or(cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let mut out = match OutDir::create(&out_dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {}: {e}", out_dir.display());
            return ExitCode::from(1);
        }
    };

    let error = match commands::run(plan, &mut out) {
        Ok(outcome) => outcome.error,
        Err(e) => {
            if let Err(io) = out.json("error.json", &serde_json::json!({ "command": cmd.name(), "error": &e })) {
                eprintln!("error: {io}");
            }
            Some(e)
        }
    };
    let code: u8 = if error.is_some() { 1 } else { 0 };
    if let Some(e) = &error {
        eprintln!("error [{}]: {}", e.kind, e.message);
    }
    let outputs = out.written().to_vec();
    let manifest = Manifest {
        command: cmd.name(),
        config: args.config.display().to_string(),
        config_sha256: format!("{:x}", Sha256::digest(&bytes)),
        seed: cfg.seed,
        threads: rayon::current_num_threads(),
        versions: Versions { topolab: topolab::VERSION, topolab_cli: env!("CARGO_PKG_VERSION") },
        outputs: &outputs,
        exit_code: code,
        error: error.as_ref(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    if let Err(e) = out.json("manifest.json", &manifest) {
        eprintln!("error: {e}");
        return ExitCode::from(1);
    }
    ExitCode::from(code)
}
