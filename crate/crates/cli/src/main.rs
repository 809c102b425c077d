//! `plcqkd`: fringe scans, BB84 sessions and polarisation sweeps of the
//! simulated time-bin link.

mod config;
mod error;

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use plcqkd::linksim::{
    central_visibility, fitted_visibility, fringe_scan, measured_min_visibility,
    min_visibility_over_polarisation, point_rng, visibility, write_scan_csv,
};
use plcqkd::optics::JonesMatrix;
use plcqkd::qkd::{
    bits_to_hex, expected_sift_ratio, qber_phase_prediction, run_session_batched, sift, write_records_csv,
};

use config::RunConfig;
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "plcqkd", version, about = "Time-bin phase-coding QKD link simulator")]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,
    /// Override one config key, e.g. `--set fibre.length_km=10`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep Alice's interferometer temperature and record Bob's fringe.
    FringeScan,
    /// Run a BB84 session and sift the key.
    Bb84 {
        /// Number of pulses; overrides `bb84.pulses`.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        pulses: Option<u64>,
    },
    /// Worst-case visibility against Bob's polarisation unbalance.
    PolSweep {
        /// Number of unbalance angles from 0 to pi/2; overrides `sweep.delta_steps`.
        #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
        steps: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("plcqkd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    for item in &cli.set {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set `{item}`: expected key=value")))?;
        cfg.set(key.trim(), value)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::Bb84 { pulses: Some(n) } => cfg.bb84_pulses = n,
        Command::PolSweep { steps: Some(n) } => cfg.sweep_delta_steps = n,
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = build_config(&cli)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    fs::create_dir_all(&cli.out).map_err(CliError::io(&cli.out))?;
    write_file(&cli.out.join("config.txt"), cfg.echo().as_bytes())?;
    match cli.command {
        Command::FringeScan => cmd_fringe_scan(&cfg, &cli.out),
        Command::Bb84 { .. } => cmd_bb84(&cfg, &cli.out),
        Command::PolSweep { .. } => cmd_pol_sweep(&cfg, &cli.out),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(CliError::io(path))
}

fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>,
{
    let file = fs::File::create(path).map_err(CliError::io(path))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|()| w.flush()).map_err(CliError::io(path))
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "undefined".to_string(), |v| format!("{v:?}"))
}

fn cmd_fringe_scan(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let link = cfg.link_config();
    let scan = cfg.scan_spec();
    let rows = fringe_scan(&link, &scan)?;
    write_with(&out.join("fringe.csv"), |w| write_scan_csv(&rows, w))?;

    let c0: Vec<f64> = rows.iter().map(|r| r.counts_port0 as f64).collect();
    let c1: Vec<f64> = rows.iter().map(|r| r.counts_port1 as f64).collect();
    let phases: Vec<f64> = rows.iter().map(|r| r.phase).collect();
    let mut s = String::new();
    let _ = writeln!(s, "points = {}", rows.len());
    let _ = writeln!(s, "visibility_port0 = {:?}", visibility(c0.iter().copied()).ok().unwrap_or(f64::NAN));
    let _ = writeln!(s, "visibility_port1 = {:?}", visibility(c1.iter().copied()).ok().unwrap_or(f64::NAN));
    let _ = writeln!(s, "fitted_visibility_port0 = {}", opt(fitted_visibility(&phases, &c0).ok()));
    let _ = writeln!(s, "fitted_visibility_port1 = {}", opt(fitted_visibility(&phases, &c1).ok()));
    let _ = writeln!(s, "noise_free_visibility = {}", opt(central_visibility(&link, None).ok()));
    let _ = writeln!(s, "fringe_period_k = {:?}", link.alice_mzi.thermal.fringe_period());
    write_file(&out.join("summary.txt"), s.as_bytes())?;
    print!("{s}");
    Ok(())
}

fn cmd_bb84(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let link = cfg.link_config();
    let records = run_session_batched(&link, cfg.bb84_pulses, cfg.seed)?;
    write_with(&out.join("records.csv"), |w| write_records_csv(&records, w))?;

    let key = sift(&records);
    let key_txt = format!(
        "alice = {}\nbob = {}\nbits = {}\n",
        bits_to_hex(&key.bits_alice),
        bits_to_hex(&key.bits_bob),
        key.bits_alice.len()
    );
    write_file(&out.join("key.txt"), key_txt.as_bytes())?;

    let v = central_visibility(&link, None).ok();
    let mut s = String::new();
    let _ = writeln!(s, "pulses = {}", cfg.bb84_pulses);
    let _ = writeln!(s, "sift_ratio = {:?}", key.sift_ratio);
    let _ = writeln!(s, "expected_sift_ratio = {}", opt(expected_sift_ratio(&link).ok()));
    let _ = writeln!(s, "kept_time = {}", key.kept_time);
    let _ = writeln!(s, "kept_phase = {}", key.kept_phase);
    let _ = writeln!(s, "errors_time = {}", key.errors_time);
    let _ = writeln!(s, "errors_phase = {}", key.errors_phase);
    let _ = writeln!(s, "qber_time = {}", opt(key.qber_time));
    let _ = writeln!(s, "qber_phase = {}", opt(key.qber_phase));
    let _ = writeln!(s, "noise_free_visibility = {}", opt(v));
    let _ = writeln!(s, "predicted_qber_phase = {}", opt(v.and_then(|v| qber_phase_prediction(v).ok())));
    write_file(&out.join("report.txt"), s.as_bytes())?;
    print!("{s}");
    Ok(())
}

/// Coherence is set to 1 and Alice's arms to identity so the measured column
/// isolates Bob's polarisation term.
fn cmd_pol_sweep(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let steps = cfg.sweep_delta_steps;
    let mut csv = String::from("delta_rad,measured_v_min,analytic_v_min\n");
    for k in 0..steps {
        let delta = std::f64::consts::FRAC_PI_2 * k as f64 / (steps - 1) as f64;
        let mut link = cfg.link_config();
        link.alice_mzi.overlap = 1.0;
        link.bob_mzi.overlap = 1.0;
        link.alice_mzi.u_short = JonesMatrix::identity();
        link.alice_mzi.u_long = JonesMatrix::identity();
        link.bob_mzi.u_short = JonesMatrix::identity();
        link.bob_mzi.u_long = JonesMatrix::retarder(delta);
        let mut rng = point_rng(cfg.seed, k);
        let measured = measured_min_visibility(&link, cfg.sweep_polarisations as usize, &mut rng)?;
        let analytic = min_visibility_over_polarisation(&link.bob_mzi.u_short, &link.bob_mzi.u_long)?;
        let _ = writeln!(csv, "{delta:?},{measured:?},{analytic:?}");
    }
    write_file(&out.join("pol_sweep.csv"), csv.as_bytes())?;
    print!("{csv}");
    Ok(())
}
