//! Command-line front end for the delay-Doppler simulation harness.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use otfs_core::config::{parse_config_file, FileConfig};
use otfs_core::sim::{
    cdf_csv, complexity_csv, complexity_report, ddip_trace_csv, iteration_cdf, median_iterations,
    run_sweep, run_trial_detailed, sweep_csv, trial_rng, Detector, SimConfig,
};

#[derive(Parser)]
#[command(
    name = "otfs-sim",
    version,
    about = "Delay-Doppler (OTFS) link-level simulator: MMSE, MMSE-BPIC, and D-DIP-BPIC detectors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonOpts {
    /// Experiment configuration file (flat key = value text).
    #[arg(long)]
    config: PathBuf,
    /// Directory for output CSV files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's detector list, e.g. "mmse,ddip-bpic".
    #[arg(long)]
    detectors: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo SER sweep over the configured SNR list; writes ser.csv.
    Sweep(CommonOpts),
    /// Empirical CDF of the network stopping iteration; writes iteration_cdf.csv.
    Cdf(CommonOpts),
    /// Single-frame diagnostic run; writes channel.txt (and ddip_trace.csv
    /// when ddip_trace is enabled in the config).
    Trial(CommonOpts),
    /// Operation-count comparison across detectors; writes complexity.csv.
    Complexity(CommonOpts),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(opts) => cmd_sweep(&opts),
        Command::Cdf(opts) => cmd_cdf(&opts),
        Command::Trial(opts) => cmd_trial(&opts),
        Command::Complexity(opts) => cmd_complexity(&opts),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type CliResult = Result<(), Box<dyn std::error::Error>>;

fn load(opts: &CommonOpts) -> Result<FileConfig, Box<dyn std::error::Error>> {
    let mut cfg = parse_config_file(&opts.config)?;
    if let Some(seed) = opts.seed {
        cfg.sim.seed = seed;
    }
    if let Some(list) = &opts.detectors {
        cfg.sim.detectors = list
            .split(',')
            .map(Detector::parse)
            .collect::<otfs_core::Result<Vec<Detector>>>()?;
        cfg.sim.validate()?;
    }
    Ok(cfg)
}

/// Write every output file, or none: a failed write removes the files
/// already written in this invocation.
fn write_outputs(dir: &Path, files: &[(&str, String)]) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        match fs::write(&path, contents) {
            Ok(()) => written.push(path),
            Err(e) => {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                return Err(e);
            }
        }
    }
    Ok(written)
}

fn cmd_sweep(opts: &CommonOpts) -> CliResult {
    let cfg = load(opts)?;
    let sweep = run_sweep(&cfg.sim)?;
    for p in &sweep.points {
        println!(
            "{:>9} @ {:>5} dB: SER {:.4e} +- {:.2e}  ({} errors / {} symbols)",
            p.detector.name(),
            p.snr_db,
            p.ser,
            p.ci_halfwidth,
            p.symbol_errors,
            p.frames * sweep.symbols_per_frame
        );
    }
    if sweep.ddip_truncated_trials > 0 {
        eprintln!(
            "note: {} network fits hit the iteration cap",
            sweep.ddip_truncated_trials
        );
    }
    let paths = write_outputs(&opts.out, &[("ser.csv", sweep_csv(&sweep))])?;
    println!("wrote {}", paths[0].display());
    Ok(())
}

fn cmd_cdf(opts: &CommonOpts) -> CliResult {
    let cfg = load(opts)?;
    if !cfg.sim.wants(Detector::DdipBpic) {
        return Err("the cdf command needs ddip-bpic among the configured detectors".into());
    }
    let sweep = run_sweep(&cfg.sim)?;
    let cdf = iteration_cdf(&sweep)?;
    let median = median_iterations(&sweep.ddip_iteration_counts).unwrap_or(f64::NAN);
    println!(
        "ddip-bpic @ M={} N={}: {} fits, median I = {median}, range {}..{}",
        cfg.sim.m,
        cfg.sim.n,
        sweep.ddip_iteration_counts.len(),
        cdf.first().map(|c| c.0).unwrap_or(0),
        cdf.last().map(|c| c.0).unwrap_or(0),
    );
    let paths = write_outputs(&opts.out, &[("iteration_cdf.csv", cdf_csv(&cdf))])?;
    println!("wrote {}", paths[0].display());
    Ok(())
}

fn cmd_trial(opts: &CommonOpts) -> CliResult {
    let cfg = load(opts)?;
    let snr_db = cfg.sim.snr_db_list[0];
    let mut rng = trial_rng(cfg.sim.seed, 0, 0);
    let detail = run_trial_detailed(&cfg.sim, snr_db, &mut rng)?;

    println!(
        "trial @ {snr_db} dB on a {}x{} grid, {} paths:",
        cfg.sim.m,
        cfg.sim.n,
        detail.channel.paths.len()
    );
    for p in &detail.channel.paths {
        println!(
            "  path l={:>2} k={:>3}  h = {:+.4}{:+.4}j  (tau = {:.3} us, nu = {:.1} Hz)",
            p.delay_index,
            p.doppler_index,
            p.gain.re,
            p.gain.im,
            p.delay_seconds(cfg.sim.delta_f_hz, cfg.sim.m) * 1e6,
            p.doppler_hz(cfg.sim.delta_f_hz, cfg.sim.n),
        );
    }
    for (det, errors) in &detail.result.symbol_errors {
        println!("  {:>9}: {errors} symbol errors", det.name());
    }
    if let Some(i) = detail.result.ddip_iterations {
        println!(
            "  network fit stopped after {i} iterations{}",
            if detail.result.ddip_truncated {
                " (cap reached)"
            } else {
                ""
            }
        );
    }
    for (stage, micros) in &detail.result.stage_micros {
        println!("  {stage:>10}: {micros} us");
    }

    let mut files = vec![("channel.txt", detail.channel.to_text())];
    if cfg.ddip_trace {
        if let Some(trace) = &detail.ddip_trace {
            files.push(("ddip_trace.csv", ddip_trace_csv(trace)));
        }
    }
    for path in write_outputs(&opts.out, &files)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Mean stopping iteration from a short ddip-only probe run.
fn probe_iterations(sim: &SimConfig) -> Result<f64, Box<dyn std::error::Error>> {
    let mut probe = sim.clone();
    probe.detectors = vec![Detector::DdipBpic];
    probe.frames = sim.frames.min(50);
    probe.snr_db_list = vec![sim.snr_db_list[0]];
    let sweep = run_sweep(&probe)?;
    let counts = &sweep.ddip_iteration_counts;
    Ok(counts.iter().map(|&c| c as f64).sum::<f64>() / counts.len() as f64)
}

fn cmd_complexity(opts: &CommonOpts) -> CliResult {
    let cfg = load(opts)?;
    let (i_mean, source) = match cfg.complexity_i {
        Some(i) => (i, "configured".to_string()),
        None => {
            let i = probe_iterations(&cfg.sim)?;
            (i, format!("measured over {} fits", cfg.sim.frames.min(50)))
        }
    };
    let report = complexity_report(cfg.sim.m, cfg.sim.n, cfg.sim.bpic_iterations, i_mean);
    println!(
        "deployment operation counts at M={} N={} T={} I={i_mean} ({source}):",
        report.m, report.n, report.bpic_iterations
    );
    for (name, ops) in &report.entries {
        let ratio = report.ratio_over_ddip(name).unwrap_or(f64::NAN);
        println!("  {name:>9}: {ops:>14.0} ops  ({ratio:.2}x ddip-bpic)");
    }
    let paths = write_outputs(&opts.out, &[("complexity.csv", complexity_csv(&report))])?;
    println!("wrote {}", paths[0].display());
    Ok(())
}
