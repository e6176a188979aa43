//! `gaudin`: solve, verify and evolve spin-1/2 Gaudin magnets from a JSON
//! config.
//!
//! Exit codes: 0 ok, 2 config or usage error, 3 solver failure,
//! 4 verification failure, 5 vanishing in-plane field where the common-frame
//! states are needed. Failures print `{"code": ..., "message": ...}` on
//! stderr.

// `!(x < tol)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gaudin::config::Config;
use gaudin::dynamics::Observable;
use serde::Serialize;

use commands::{Context, Failure, QuenchArgs, Report};

#[derive(Parser)]
#[command(name = "gaudin", version, about = "Spin-1/2 Gaudin magnets in arbitrarily oriented fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Serialize)]
struct Common {
    /// JSON system description.
    #[arg(long)]
    config: PathBuf,
    /// Output file; the manifest goes to `<out>.manifest.json`.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Charge weights `α_k` of `H = Σ α_k R_k`, comma separated. Falls back
    /// to the config, then to fixed pseudo-random weights.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    weights: Option<Vec<f64>>,
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
enum Command {
    /// Every eigenstate: Λ in both frames, charges, energy, residuals.
    Spectrum {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the solver against exact diagonalization.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Largest system to accept; 1 runs the single-spin closed forms only.
        #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..=10))]
        nmax: u64,
        /// Add this to `Λ_0` of the first state before checking.
        #[arg(long, allow_hyphen_values = true)]
        perturb: Option<f64>,
    },
    /// Rapidities of every eigenstate.
    Roots {
        #[command(flatten)]
        common: Common,
    },
    /// Determinant overlaps between eigenstates.
    Overlap {
        #[command(flatten)]
        common: Common,
        /// Label of the first state (with --b); all pairs otherwise.
        #[arg(long)]
        a: Option<String>,
        #[arg(long)]
        b: Option<String>,
        /// Also contract the states in Fock space and fail above 1e-10.
        #[arg(long)]
        check: bool,
    },
    /// Projections of eigenstates on a product state.
    Project {
        #[command(flatten)]
        common: Common,
        /// Product state as a 0/1 string, character k for site k (1 = up).
        #[arg(long)]
        up: String,
        /// Only this eigenstate.
        #[arg(long)]
        label: Option<String>,
        /// Also read the amplitude off the Fock vector and fail above 1e-10.
        #[arg(long)]
        check: bool,
    },
    /// Time series of a local observable after a quench from a product state.
    Quench {
        #[command(flatten)]
        common: Common,
        /// Initial product state as a 0/1 string (1 = up).
        #[arg(long)]
        initial: String,
        /// `sz:K`, `sx:K` or `sy:K`.
        #[arg(long)]
        observable: Observable,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        t0: f64,
        #[arg(long, allow_hyphen_values = true)]
        tmax: f64,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        /// Compare with direct propagation and fail above 1e-8.
        #[arg(long)]
        check: bool,
        /// JSON with the eigenstate expansion instead of `t,value` CSV.
        #[arg(long)]
        json: bool,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Spectrum { .. } => "spectrum",
            Command::Verify { .. } => "verify",
            Command::Roots { .. } => "roots",
            Command::Overlap { .. } => "overlap",
            Command::Project { .. } => "project",
            Command::Quench { .. } => "quench",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Spectrum { common }
            | Command::Verify { common, .. }
            | Command::Roots { common }
            | Command::Overlap { common, .. }
            | Command::Project { common, .. }
            | Command::Quench { common, .. } => common,
        }
    }
}

fn run(command: &Command) -> Result<Report, Failure> {
    let common = command.common();
    if let Some(k) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| Failure::new(commands::EXIT_CONFIG, "Threads", e.to_string()))?;
    }
    let ctx = Context::load(Config::from_path(&common.config)?, common.weights.clone())?;
    match command {
        Command::Spectrum { .. } => commands::spectrum(&ctx),
        Command::Verify { nmax, perturb, .. } => commands::verify(&ctx, *nmax as usize, *perturb),
        Command::Roots { .. } => commands::roots(&ctx),
        Command::Overlap { a, b, check, .. } => commands::overlap(&ctx, a.as_deref(), b.as_deref(), *check),
        Command::Project { up, label, check, .. } => commands::project(&ctx, up, label.as_deref(), *check),
        Command::Quench {
            initial,
            observable,
            t0,
            tmax,
            steps,
            check,
            json,
            ..
        } => commands::quench(
            &ctx,
            &QuenchArgs {
                initial,
                observable: *observable,
                t0: *t0,
                tmax: *tmax,
                steps: *steps as usize,
                check: *check,
                json: *json,
            },
        ),
    }
}

fn report_failure(f: &Failure) -> ExitCode {
    let line = serde_json::json!({ "code": f.code, "message": f.message });
    eprintln!("{line}");
    ExitCode::from(f.exit as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let started = Instant::now();
    let common = cli.command.common();

    let (report, outputs) = match run(&cli.command) {
        Ok(report) => match commands::write_payload(&common.out, &report.payload) {
            Ok(()) => (Ok(report), vec![common.out.display().to_string()]),
            Err(e) => (Err(Failure::from(e)), Vec::new()),
        },
        Err(f) => (Err(f), Vec::new()),
    };
    let (status, details, failure) = match report {
        Ok(r) => (if r.failure.is_some() { "failed" } else { "ok" }, r.details, r.failure),
        Err(f) => ("error", serde_json::Map::new(), Some(f)),
    };

    let wall = started.elapsed().as_secs_f64();
    log::info!("{} finished in {wall:.3} s", cli.command.name());
    let manifest = output::Manifest {
        command: cli.command.name(),
        config: common.config.display().to_string(),
        options: serde_json::to_value(&cli.command).unwrap_or_default(),
        version: env!("CARGO_PKG_VERSION"),
        wall_time_s: wall,
        outputs,
        status,
        details,
    };
    if let Err(e) = output::write_json(&output::manifest_path(&common.out), &manifest) {
        log::warn!("could not write manifest: {e}");
    }
    match failure {
        Some(f) => report_failure(&f),
        None => ExitCode::SUCCESS,
    }
}
