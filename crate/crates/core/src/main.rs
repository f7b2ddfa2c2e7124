// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! `crsim`: run cross-resonance experiments from a TOML configuration.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crsim::config::{Overrides, RunConfig};
use crsim::experiments::{
    calibrate_cnot, calibrate_j, format_number, operating_point_at, run_bell, run_concurrence_scan, run_jeff_sweep,
    run_qpt, run_rabi, selftest, ExperimentResult, OperatingPoint, QptGate, QptOutcome,
};
use crsim::{Error, Result};

/// Environment variable that overrides the configured output directory.
const OUTPUT_ENV: &str = "CRSIM_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "crsim", version, about = "Cross-resonance gate simulator and tomography toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        matches!(s, Switch::On)
    }
}

#[derive(Debug, Args)]
struct Common {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides CRSIM_OUTPUT_DIR and the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Decoherence during pulses.
    #[arg(long, global = true, value_enum)]
    noise: Option<Switch>,
    /// Entangling-pulse amplitude, MHz.
    #[arg(long, global = true)]
    amplitude_mhz: Option<f64>,
    /// Entangling-pulse duration, ns.
    #[arg(long, global = true)]
    tg_ns: Option<f64>,
    /// Search for the best pulse near the configured operating point.
    #[arg(long, global = true, value_enum)]
    auto_calibrate: Option<Switch>,
    /// Exchange coupling, MHz.
    #[arg(long, global = true)]
    j_mhz: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the exchange coupling to a target interaction strength.
    CalibrateJ {
        /// Target maximum interaction strength, MHz (config value if omitted).
        #[arg(long)]
        target_mhz: Option<f64>,
    },
    /// Interaction strength versus cross-drive amplitude.
    JeffSweep,
    /// Concurrence versus gate time for each preset amplitude.
    ConcurrenceScan,
    /// Bell-state preparation and tomography.
    Bell,
    /// Process tomography of the entangling gate.
    Qpt,
    /// Process tomography of an idle of the same length.
    IdentityQpt,
    /// Conditional Rabi oscillations of the target qubit.
    Rabi,
    /// Fast physical and numerical invariants.
    Selftest,
}

fn overrides(c: &Common) -> Overrides {
    Overrides {
        seed: c.seed,
        threads: c.threads,
        output_dir: c
            .out
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from)),
        noise: c.noise.map(Into::into),
        amplitude_mhz: c.amplitude_mhz,
        tg_ns: c.tg_ns,
        auto_calibrate: c.auto_calibrate.map(Into::into),
        j_mhz: c.j_mhz,
    }
}

fn load(c: &Common) -> Result<RunConfig> {
    let o = overrides(c);
    match &c.config {
        Some(path) => RunConfig::load(path, &o),
        None => RunConfig::from_toml_with("", &o),
    }
}

fn write(result: &ExperimentResult, dir: &Path) -> Result<()> {
    for path in result.write(dir)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn operating_point(cfg: &RunConfig) -> Result<OperatingPoint> {
    let e = &cfg.experiment;
    let op = if e.auto_calibrate {
        calibrate_cnot(&cfg.setup, e.amplitude, e.gate_time)?
    } else {
        operating_point_at(&cfg.setup, e.amplitude, e.gate_time)?
    };
    log::info!(
        "operating point {:.3} MHz, {:.2} ns (nominal {:.3} MHz, {:.2} ns), noiseless F_g {:.9}",
        op.amplitude / 1e6,
        op.duration * 1e9,
        e.amplitude / 1e6,
        e.gate_time * 1e9,
        op.gate_fidelity
    );
    Ok(op)
}

fn tag_nominal(result: &mut ExperimentResult, cfg: &RunConfig) {
    result.scalars.insert("nominal_amplitude_hz".into(), cfg.experiment.amplitude);
    result.scalars.insert("nominal_gate_time_s".into(), cfg.experiment.gate_time);
}

fn write_qpt(outcome: &QptOutcome, dir: &Path, prefix: &str) -> Result<()> {
    write(&outcome.result, dir)?;
    let chi = dir.join(format!("{prefix}chi.json"));
    std::fs::write(&chi, outcome.tomography.projected.to_json()?)?;
    let fidelities = dir.join(format!("{prefix}fidelities.csv"));
    let mut csv = String::from("quantity,value\n");
    for key in ["process_fidelity", "gate_fidelity", "process_fidelity_raw", "gate_fidelity_raw"] {
        csv.push_str(&format!("{key},{}\n", format_number(outcome.result.scalars[key])));
    }
    std::fs::write(&fidelities, csv)?;
    println!("wrote {}\nwrote {}", chi.display(), fidelities.display());
    println!(
        "target {}: F_p = {:.4}, F_g = {:.4}",
        outcome.target.label, outcome.process_fidelity, outcome.gate_fidelity
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load(&cli.common)?;
    if cfg.threads > 0 {
        // A second initialisation only fails if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    }
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("effective_config.toml"), cfg.to_toml())?;
    let setup = &cfg.setup;
    let e = &cfg.experiment;

    match &cli.command {
        Command::CalibrateJ { target_mhz } => {
            let target = target_mhz.map(|t| t * 1e6).unwrap_or(e.jeff_target);
            let cal = calibrate_j(setup, target, &e.amplitudes)?;
            let calibrated = cfg.with_coupling(cal.coupling)?;
            let mut sweep = run_jeff_sweep(&calibrated.setup, &e.amplitudes)?;
            sweep.name = "calibrate_j".into();
            sweep.scalars.insert("target_hz".into(), target);
            sweep.scalars.insert("iterations".into(), cal.iterations as f64);
            write(&sweep, &dir)?;
            let path = dir.join("calibrated_config.toml");
            std::fs::write(&path, calibrated.to_toml())?;
            println!("wrote {}", path.display());
            println!(
                "J = {:.9} MHz gives max J_eff = {:.6} MHz",
                cal.coupling / 1e6,
                cal.max_jeff / 1e6
            );
        }
        Command::JeffSweep => {
            let r = run_jeff_sweep(setup, &e.amplitudes)?;
            write(&r, &dir)?;
            println!(
                "max J_eff = {:.4} MHz at {:.1} MHz",
                r.scalars["max_jeff_hz"] / 1e6,
                r.scalars["argmax_amplitude_hz"] / 1e6
            );
        }
        Command::ConcurrenceScan => {
            let amplitudes = match cli.common.amplitude_mhz {
                Some(_) => vec![e.amplitude],
                None => e.presets.clone(),
            };
            for a in amplitudes {
                let r = run_concurrence_scan(setup, a, &e.gate_times, e.noise)?;
                write(&r, &dir)?;
                println!(
                    "{:.0} MHz: max C = {:.4} at {:.0} ns",
                    a / 1e6,
                    r.scalars["max_concurrence"],
                    r.scalars["argmax_gate_time_s"] * 1e9
                );
            }
        }
        Command::Bell => {
            let op = operating_point(&cfg)?;
            let mut r = run_bell(setup, &op, e.noise)?;
            tag_nominal(&mut r, &cfg);
            write(&r, &dir)?;
            println!("F = {:.6}, C = {:.6}", r.scalars["fidelity"], r.scalars["concurrence"]);
        }
        Command::Qpt => {
            let op = operating_point(&cfg)?;
            let mut outcome = run_qpt(setup, QptGate::CrossResonance(op), e.noise)?;
            tag_nominal(&mut outcome.result, &cfg);
            write_qpt(&outcome, &dir, "")?;
        }
        Command::IdentityQpt => {
            let outcome = run_qpt(setup, QptGate::Identity(e.identity_duration), e.noise)?;
            write_qpt(&outcome, &dir, "identity_")?;
            println!(
                "max output concurrence = {:.4}",
                outcome.result.scalars["max_output_concurrence"]
            );
        }
        Command::Rabi => {
            let r = run_rabi(setup, e.rabi_amplitude, &e.rabi_durations)?;
            write(&r, &dir)?;
        }
        Command::Selftest => {
            let checks = selftest(setup)?;
            let mut failed = 0;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(Error::Convergence {
                    what: "selftest",
                    iterations: checks.len(),
                    detail: format!("{failed} check(s) failed"),
                });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let mut record = json!({
                "error": err.kind(),
                "message": err.to_string(),
                "exit_code": err.exit_code(),
            });
            if let Error::Config { key, .. } = &err {
                record["key"] = json!(key);
            }
            eprintln!("{record}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
