// Copyright 2026 The crsim Authors
// SPDX-License-Identifier: Apache-2.0

//! Strict TOML run configuration.
//!
//! Every physical key carries its unit as a suffix (`_ghz`, `_mhz`, `_khz`,
//! `_ns`, `_us`). Unknown keys are rejected with the closest valid key, and a
//! key whose stem is valid but whose unit suffix differs is reported as a unit
//! mismatch. Missing keys take the default device and pulse constants.
//!
//! ```
//! use crsim::config::RunConfig;
//!
//! let cfg = RunConfig::from_toml_str("[device]\nzeta_khz = 150\n").unwrap();
//! assert_eq!(cfg.setup.device.zz, 150e3);
//! assert!(RunConfig::from_toml_str("[device]\nzeta_hz = 150\n").is_err());
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::device::{DeviceParams, DriveModel};
use crate::dynamics::{Integrator, SolverOptions};
use crate::experiments::{Setup, CONCURRENCE_PRESETS, IDENTITY_DURATION, NOMINAL_OPERATING_POINT};
use crate::pulses::PulseParams;
use crate::tomo::{ReadoutModel, ShotNoise};
use crate::{Error, Result};

/// One value for both qubits, or one per qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerQubit {
    Both(f64),
    Each([f64; 2]),
}

impl PerQubit {
    fn values(self) -> [f64; 2] {
        match self {
            PerQubit::Both(v) => [v, v],
            PerQubit::Each(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DeviceSection {
    omega1_ghz: f64,
    omega2_ghz: f64,
    j_mhz: f64,
    alpha1_mhz: f64,
    alpha2_mhz: f64,
    t1_us: PerQubit,
    t2_us: PerQubit,
    m12: f64,
    m21: f64,
    zeta_khz: f64,
    beta_ii: f64,
    beta_iz: f64,
    beta_zi: f64,
    beta_zz: f64,
}

impl Default for DeviceSection {
    fn default() -> Self {
        let d = DeviceParams::default();
        Self {
            omega1_ghz: rescale(d.omega[0], -9),
            omega2_ghz: rescale(d.omega[1], -9),
            j_mhz: rescale(d.coupling, -6),
            alpha1_mhz: rescale(d.anharmonicity[0], -6),
            alpha2_mhz: rescale(d.anharmonicity[1], -6),
            t1_us: PerQubit::Each(d.t1.map(|t| rescale(t, 6))),
            t2_us: PerQubit::Each(d.t2.map(|t| rescale(t, 6))),
            m12: d.crosstalk[0],
            m21: d.crosstalk[1],
            zeta_khz: rescale(d.zz, -3),
            beta_ii: d.beta[0],
            beta_iz: d.beta[1],
            beta_zi: d.beta[2],
            beta_zz: d.beta[3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PulseSection {
    sq_sigma_ns: f64,
    sq_drag_scale: f64,
    cr_drag_scale: f64,
    cr_ramp_sigma_ns: f64,
    cr_duration_includes_ramps: bool,
}

impl Default for PulseSection {
    fn default() -> Self {
        let p = PulseParams::default();
        Self {
            sq_sigma_ns: rescale(p.sq_sigma, 9),
            sq_drag_scale: p.sq_drag_scale,
            cr_drag_scale: p.cr_drag_scale,
            cr_ramp_sigma_ns: rescale(p.cr_ramp_sigma, 9),
            cr_duration_includes_ramps: p.cr_duration_includes_ramps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SolverSection {
    integrator: String,
    dt_ns: f64,
    rtol: f64,
    atol: f64,
    max_steps: usize,
    model: String,
}

impl Default for SolverSection {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            integrator: "adaptive".into(),
            dt_ns: rescale(s.dt, 9),
            rtol: s.rtol,
            atol: s.atol,
            max_steps: s.max_steps,
            model: "effective".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ReadoutSection {
    /// `none`, `gaussian` or `shots`.
    noise: String,
    sigma: f64,
    shots: u32,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        Self {
            noise: "none".into(),
            sigma: 0.02,
            shots: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentSection {
    amplitude_mhz: f64,
    tg_ns: f64,
    auto_calibrate: bool,
    noise: bool,
    jeff_target_mhz: f64,
    amplitudes_mhz: Vec<f64>,
    presets_mhz: Vec<f64>,
    tg_max_ns: f64,
    tg_step_ns: f64,
    identity_ns: f64,
    rabi_amplitude_mhz: f64,
    rabi_max_ns: f64,
    rabi_points: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            amplitude_mhz: rescale(NOMINAL_OPERATING_POINT.0, -6),
            tg_ns: rescale(NOMINAL_OPERATING_POINT.1, 9),
            auto_calibrate: true,
            noise: true,
            jeff_target_mhz: 1.4,
            amplitudes_mhz: Vec::new(),
            presets_mhz: CONCURRENCE_PRESETS.iter().map(|a| rescale(*a, -6)).collect(),
            tg_max_ns: 800.0,
            tg_step_ns: 8.0,
            identity_ns: rescale(IDENTITY_DURATION, 9),
            rabi_amplitude_mhz: 100.0,
            rabi_max_ns: 400.0,
            rabi_points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RawConfig {
    seed: u64,
    output_dir: String,
    /// Worker threads; 0 uses every core.
    threads: usize,
    device: DeviceSection,
    pulses: PulseSection,
    solver: SolverSection,
    readout: ReadoutSection,
    experiment: ExperimentSection,
}

impl Default for RawConfig {
    fn default() -> Self {
        Self {
            seed: Setup::default().seed,
            output_dir: "crsim-out".into(),
            threads: 0,
            device: DeviceSection::default(),
            pulses: PulseSection::default(),
            solver: SolverSection::default(),
            readout: ReadoutSection::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

/// Experiment-level settings, SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Entangling-pulse amplitude, Hz.
    pub amplitude: f64,
    /// Entangling-pulse duration, s.
    pub gate_time: f64,
    /// Search for the best CNOT pulse near `(amplitude, gate_time)`.
    pub auto_calibrate: bool,
    pub noise: bool,
    /// Largest interaction strength targeted by coupling calibration, Hz.
    pub jeff_target: f64,
    /// Sweep amplitudes, Hz.
    pub amplitudes: Vec<f64>,
    /// Concurrence-scan amplitudes, Hz.
    pub presets: Vec<f64>,
    /// Concurrence-scan gate times, s.
    pub gate_times: Vec<f64>,
    /// Idle length of the identity control, s.
    pub identity_duration: f64,
    pub rabi_amplitude: f64,
    /// Flat durations of the Rabi traces, s.
    pub rabi_durations: Vec<f64>,
}

/// Validated configuration of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub setup: Setup,
    pub experiment: ExperimentConfig,
    pub output_dir: PathBuf,
    pub threads: usize,
    raw: RawConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RawConfig::default().build().expect("defaults are valid")
    }
}

/// `v·10^exp`, rounded once from the exact decimal, so unit conversions
/// agree with the literal a user would type (`1.6` µs is `1.6e-6` s).
fn rescale(v: f64, exp: i32) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    let text = format!("{v:e}");
    let (mantissa, e) = text.split_once('e').expect("exponent form");
    let e: i32 = e.parse().expect("integer exponent");
    format!("{mantissa}e{}", e + exp).parse().expect("valid float")
}

const SUFFIXES: [&str; 8] = ["_ghz", "_mhz", "_khz", "_hz", "_ns", "_us", "_ms", "_s"];

fn stem(key: &str) -> &str {
    SUFFIXES
        .iter()
        .find_map(|s| key.strip_suffix(s))
        .unwrap_or(key)
}

fn known_keys(section: Option<&str>) -> Vec<String> {
    let raw = toml::Value::try_from(RawConfig::default()).expect("serialisable defaults");
    let table = raw.as_table().expect("table");
    match section {
        None => table.keys().cloned().collect(),
        Some(s) => table[s].as_table().expect("section").keys().cloned().collect(),
    }
}

fn check_keys(table: &Table, section: Option<&str>) -> Result<()> {
    let known = known_keys(section);
    let qualified = |k: &str| match section {
        Some(s) => format!("{s}.{k}"),
        None => k.to_string(),
    };
    for (key, value) in table {
        if known.iter().any(|k| k == key) {
            if section.is_none() && value.is_table() {
                check_keys(value.as_table().expect("table"), Some(key))?;
            }
            continue;
        }
        if let Some(expected) = known.iter().find(|k| stem(k) == stem(key) && stem(key) != key.as_str()) {
            return Err(Error::Config {
                key: qualified(key),
                message: format!("unit suffix mismatch: this quantity is given as `{}`", qualified(expected)),
            });
        }
        let nearest = known
            .iter()
            .max_by(|a, b| strsim::jaro_winkler(key, a).total_cmp(&strsim::jaro_winkler(key, b)))
            .map(|k| qualified(k))
            .unwrap_or_default();
        return Err(Error::Config {
            key: qualified(key),
            message: format!("unknown key; did you mean `{nearest}`?"),
        });
    }
    Ok(())
}

fn config_error(key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        message: message.into(),
    }
}

fn grid(step: f64, max: f64) -> Vec<f64> {
    let n = (max / step + 1e-9).floor() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

impl RawConfig {
    fn build(&self) -> Result<RunConfig> {
        let d = &self.device;
        let device = DeviceParams {
            omega: [rescale(d.omega1_ghz, 9), rescale(d.omega2_ghz, 9)],
            coupling: rescale(d.j_mhz, 6),
            anharmonicity: [rescale(d.alpha1_mhz, 6), rescale(d.alpha2_mhz, 6)],
            t1: d.t1_us.values().map(|t| rescale(t, -6)),
            t2: d.t2_us.values().map(|t| rescale(t, -6)),
            crosstalk: [d.m12, d.m21],
            zz: rescale(d.zeta_khz, 3),
            beta: [d.beta_ii, d.beta_iz, d.beta_zi, d.beta_zz],
            ..DeviceParams::default()
        }
        .validated()
        .map_err(|e| {
            let key = match &e {
                Error::Unphysical(m) if m.contains("T2") => "device.t2_us",
                Error::Unphysical(m) if m.contains("omega") => "device.omega1_ghz",
                Error::Unphysical(m) if m.contains("beta") => "device.beta_ii",
                _ => "device",
            };
            config_error(key, e.to_string())
        })?;

        let p = &self.pulses;
        for (key, v) in [("pulses.sq_sigma_ns", p.sq_sigma_ns), ("pulses.cr_ramp_sigma_ns", p.cr_ramp_sigma_ns)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_error(key, format!("must be positive, got {v}")));
            }
        }
        let pulses = PulseParams {
            sq_sigma: rescale(p.sq_sigma_ns, -9),
            sq_drag_scale: p.sq_drag_scale,
            cr_drag_scale: p.cr_drag_scale,
            cr_ramp_sigma: rescale(p.cr_ramp_sigma_ns, -9),
            cr_duration_includes_ramps: p.cr_duration_includes_ramps,
        };

        let s = &self.solver;
        let integrator: Integrator = s.integrator.parse().map_err(|e: Error| config_error("solver.integrator", e.to_string()))?;
        let model: DriveModel = s.model.parse().map_err(|e: Error| config_error("solver.model", e.to_string()))?;
        for (key, v) in [("solver.dt_ns", s.dt_ns), ("solver.rtol", s.rtol), ("solver.atol", s.atol)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_error(key, format!("must be positive, got {v}")));
            }
        }
        let solver = SolverOptions {
            integrator,
            dt: rescale(s.dt_ns, -9),
            rtol: s.rtol,
            atol: s.atol,
            max_steps: s.max_steps,
            model,
            frame: None,
        };

        let r = &self.readout;
        let noise = match r.noise.as_str() {
            "none" => ShotNoise::None,
            "gaussian" => ShotNoise::Gaussian { sigma: r.sigma },
            "shots" => ShotNoise::Shots { count: r.shots },
            other => {
                return Err(config_error(
                    "readout.noise",
                    format!("unknown noise model `{other}` (expected none, gaussian or shots)"),
                ))
            }
        };
        let readout = ReadoutModel::new(device.beta, noise).map_err(|e| config_error("readout", e.to_string()))?;

        let e = &self.experiment;
        for (key, v) in [
            ("experiment.amplitude_mhz", e.amplitude_mhz),
            ("experiment.tg_ns", e.tg_ns),
            ("experiment.tg_step_ns", e.tg_step_ns),
            ("experiment.identity_ns", e.identity_ns),
            ("experiment.rabi_amplitude_mhz", e.rabi_amplitude_mhz),
            ("experiment.rabi_max_ns", e.rabi_max_ns),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config_error(key, format!("must be positive, got {v}")));
            }
        }
        if !(e.jeff_target_mhz >= 0.0) {
            return Err(config_error("experiment.jeff_target_mhz", "must be non-negative"));
        }
        if e.rabi_points < 8 {
            return Err(config_error("experiment.rabi_points", "need at least 8 points"));
        }
        let amplitudes = if e.amplitudes_mhz.is_empty() {
            crate::experiments::default_amplitude_grid()
        } else {
            e.amplitudes_mhz.iter().map(|a| rescale(*a, 6)).collect()
        };
        let experiment = ExperimentConfig {
            amplitude: rescale(e.amplitude_mhz, 6),
            gate_time: rescale(e.tg_ns, -9),
            auto_calibrate: e.auto_calibrate,
            noise: e.noise,
            jeff_target: rescale(e.jeff_target_mhz, 6),
            amplitudes,
            presets: e.presets_mhz.iter().map(|a| rescale(*a, 6)).collect(),
            gate_times: grid(e.tg_step_ns * 1e-9, e.tg_max_ns * 1e-9),
            identity_duration: rescale(e.identity_ns, -9),
            rabi_amplitude: rescale(e.rabi_amplitude_mhz, 6),
            rabi_durations: (0..e.rabi_points)
                .map(|k| k as f64 * e.rabi_max_ns * 1e-9 / (e.rabi_points - 1) as f64)
                .collect(),
        };

        Ok(RunConfig {
            setup: Setup {
                device,
                pulses,
                solver,
                readout,
                seed: self.seed,
            },
            experiment,
            output_dir: PathBuf::from(&self.output_dir),
            threads: self.threads,
            raw: self.clone(),
        })
    }
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub noise: Option<bool>,
    pub amplitude_mhz: Option<f64>,
    pub tg_ns: Option<f64>,
    pub auto_calibrate: Option<bool>,
    pub j_mhz: Option<f64>,
}

impl RunConfig {
    /// Parses a configuration document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &Overrides::default())
    }

    /// Parses a configuration document and applies `overrides` on top.
    pub fn from_toml_with(text: &str, overrides: &Overrides) -> Result<Self> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_error("<file>", e.message().to_string()))?;
        check_keys(&table, None)?;
        let mut raw: RawConfig = Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            config_error("<file>", e.message().to_string())
        })?;
        if let Some(v) = overrides.seed {
            raw.seed = v;
        }
        if let Some(v) = overrides.threads {
            raw.threads = v;
        }
        if let Some(v) = &overrides.output_dir {
            raw.output_dir = v.to_string_lossy().into_owned();
        }
        if let Some(v) = overrides.noise {
            raw.experiment.noise = v;
        }
        if let Some(v) = overrides.amplitude_mhz {
            raw.experiment.amplitude_mhz = v;
        }
        if let Some(v) = overrides.tg_ns {
            raw.experiment.tg_ns = v;
        }
        if let Some(v) = overrides.auto_calibrate {
            raw.experiment.auto_calibrate = v;
        }
        if let Some(v) = overrides.j_mhz {
            raw.device.j_mhz = v;
        }
        raw.build()
    }

    /// Reads and parses `path`.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(&path.display().to_string(), format!("cannot read config: {e}")))?;
        Self::from_toml_with(&text, overrides)
    }

    /// The effective configuration, every key present, as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.raw).expect("config serialises")
    }

    /// Copy with the exchange coupling replaced, Hz.
    pub fn with_coupling(&self, coupling: f64) -> Result<Self> {
        let mut raw = self.raw.clone();
        raw.device.j_mhz = rescale(coupling, -6);
        raw.build()
    }
}
