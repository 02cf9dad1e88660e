use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use bdirs::baselines::Scheme;
use bdirs::config::SystemConfig;
use bdirs::harness::{run_point, run_sweep, SweepAxis, SweepRow, SweepSpec};
use bdirs::output::{emit_results, emit_trace, EmitOptions, Format};
use bdirs::Error;

#[derive(Parser)]
#[command(name = "bdirs", version, about = "Hybrid beamforming and BD-IRS sum-rate simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario and write its result row and convergence trace.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "hybrid")]
        scheme: Scheme,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: Format,
        /// Fill `wall_ms` with measured times.
        #[arg(long)]
        timing: bool,
    },
    /// Run a parameter sweep.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: Format,
        #[arg(long)]
        timing: bool,
    },
}

fn run(cli: Cli) -> bdirs::Result<Vec<PathBuf>> {
    match cli.command {
        Command::Solve {
            config,
            seed,
            scheme,
            out,
            format,
            timing,
        } => {
            let cfg = SystemConfig::load(&config)?;
            let seed = seed.unwrap_or(cfg.seed);
            let start = Instant::now();
            let result = run_point(&cfg, seed, scheme)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let parts: Vec<(String, &bdirs::solver::SolveTrace)> = result
                .parts
                .iter()
                .map(|p| {
                    let name = p.group.map_or_else(|| scheme.to_string(), |g| g.to_string());
                    (name, &p.trace)
                })
                .collect();
            let trace = emit_trace(&parts, &out)?;
            let row = SweepRow::from_result(SweepAxis::None, 0.0, seed, scheme, Ok(result.clone()), wall_ms);
            let mut paths = emit_results(&[row], &out, &EmitOptions { format, timing })?;
            paths.push(trace);
            eprintln!("{scheme} rate = {} bits/s/Hz", result.rate);
            Ok(paths)
        }
        Command::Sweep {
            config,
            spec,
            out,
            format,
            timing,
        } => {
            let cfg = SystemConfig::load(&config)?;
            let spec = SweepSpec::load(&spec)?;
            let rows = run_sweep(&spec, &cfg)?;
            let failed = rows.iter().filter(|r| r.rate_bps_hz.is_none()).count();
            if failed > 0 {
                eprintln!("{failed} of {} sweep points failed; see the flags column", rows.len());
            }
            emit_results(&rows, &out, &EmitOptions { format, timing })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Parse { .. } | Error::OutOfRange { .. } | Error::Domain { .. } => {
                    ExitCode::from(2)
                }
                _ => ExitCode::FAILURE,
            }
        }
    }
}
