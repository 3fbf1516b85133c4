//! Run configuration: TOML file format, built-in defaults, and `--set`
//! command-line overrides.
//!
//! Every field has a default, so an empty file (or none at all) yields the
//! full benchmark setup; unknown keys are rejected rather than ignored.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::drive::MotorParams;
use crate::error::{Error, Result};
use crate::koopman::Dictionary;
use crate::sim::{ControllerKind, ScenarioConfig, SimTiming, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub motor: MotorSection,
    pub timing: TimingSection,
    pub training: TrainingSection,
    pub koopman: KoopmanSection,
    pub scenario: Vec<ScenarioSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            motor: MotorSection::default(),
            timing: TimingSection::default(),
            training: TrainingSection::default(),
            koopman: KoopmanSection::default(),
            scenario: default_scenarios(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorSection {
    /// Stator resistance in ohm.
    pub r_s: f64,
    /// Direct-axis inductance in henry.
    pub l_d: f64,
    /// Quadrature-axis inductance in henry.
    pub l_q: f64,
    /// Permanent-magnet flux linkage in volt-seconds.
    pub psi_p: f64,
    pub pole_pairs: u32,
}

impl Default for MotorSection {
    fn default() -> Self {
        let p = MotorParams::default();
        MotorSection {
            r_s: p.r_s,
            l_d: p.l_d,
            l_q: p.l_q,
            psi_p: p.psi_p,
            pole_pairs: p.pole_pairs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingSection {
    /// Controller sampling period in seconds.
    pub t_s: f64,
    /// Plant integration step in seconds.
    pub fine_dt: f64,
}

impl Default for TimingSection {
    fn default() -> Self {
        TimingSection {
            t_s: 50e-6,
            fine_dt: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingSection {
    pub speed_rpm: f64,
    pub u_dc: f64,
    /// Length of the identification run in seconds.
    pub duration: f64,
    pub seed: u64,
    /// Sampled i_d reference range in amps.
    pub id_range: [f64; 2],
    /// Sampled i_q reference range in amps.
    pub iq_range: [f64; 2],
    /// Dwell per random setpoint in milliseconds.
    pub dwell_range_ms: [f64; 2],
    /// Prediction horizon of the exciting controller.
    pub horizon: usize,
    pub compensate_delay: bool,
    /// Minimum snapshot pairs required per voltage vector.
    pub min_pairs: usize,
    /// Leading fraction of the run used for fitting; the rest is held out.
    pub train_fraction: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection {
            speed_rpm: 1000.0,
            u_dc: 300.0,
            duration: 0.5,
            seed: 7,
            id_range: [-170.0, 0.0],
            iq_range: [-170.0, 170.0],
            dwell_range_ms: [0.5, 2.0],
            horizon: 3,
            compensate_delay: true,
            min_pairs: 200,
            train_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KoopmanSection {
    /// Observable dictionary: `identity`, `monomials2`, or
    /// `monomials2+const`.
    pub dictionary: String,
    /// Relative singular-value cutoff of the least-squares fit.
    pub tolerance: f64,
}

impl Default for KoopmanSection {
    fn default() -> Self {
        KoopmanSection {
            dictionary: "identity".to_string(),
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub name: String,
    pub speed_rpm: f64,
    pub u_dc: f64,
    pub duration: f64,
    /// `[time_s, i_d_ref, i_q_ref]` entries; each holds until the next.
    pub schedule: Vec<[f64; 3]>,
    pub record_fine: bool,
    pub controllers: Vec<String>,
    /// Symmetrical-optimum design parameter of the FOC baseline.
    pub foc_a: f64,
    /// FOC carrier period in controller periods.
    pub foc_oversampling: u32,
    /// MPC prediction horizon.
    pub horizon: usize,
    pub compensate_delay: bool,
    pub seed: u64,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        ScenarioSection {
            name: "unnamed".to_string(),
            speed_rpm: 1000.0,
            u_dc: 300.0,
            duration: 0.1,
            schedule: vec![[0.0, 0.0, 0.0]],
            record_fine: false,
            controllers: vec![
                "foc".to_string(),
                "whitebox-mpc".to_string(),
                "koopman-mpc".to_string(),
            ],
            foc_a: 4.0,
            foc_oversampling: 5,
            horizon: 3,
            compensate_delay: true,
            seed: 1,
        }
    }
}

/// The benchmark matrix: a small-signal study point plus rated-current steps
/// at low, nominal, and high speed.
fn default_scenarios() -> Vec<ScenarioSection> {
    let all = vec![
        "foc".to_string(),
        "whitebox-mpc".to_string(),
        "koopman-mpc".to_string(),
    ];
    let mpc_only = vec!["whitebox-mpc".to_string(), "koopman-mpc".to_string()];
    vec![
        ScenarioSection {
            name: "small_signal_1000".to_string(),
            speed_rpm: 1000.0,
            duration: 0.36,
            schedule: vec![[0.0, 0.0, 0.0], [0.005, -25.0, 0.0], [0.015, -25.0, 25.0]],
            record_fine: true,
            controllers: all.clone(),
            foc_a: 3.0,
            foc_oversampling: 6,
            ..ScenarioSection::default()
        },
        ScenarioSection {
            name: "nominal_1000".to_string(),
            speed_rpm: 1000.0,
            duration: 0.34,
            schedule: vec![[0.0, 0.0, 0.0], [0.002, -169.0, 169.0]],
            record_fine: true,
            controllers: all,
            ..ScenarioSection::default()
        },
        ScenarioSection {
            name: "nominal_100".to_string(),
            speed_rpm: 100.0,
            duration: 1.2,
            schedule: vec![[0.0, 0.0, 0.0], [0.002, -169.0, 169.0]],
            controllers: mpc_only.clone(),
            ..ScenarioSection::default()
        },
        ScenarioSection {
            name: "nominal_2500".to_string(),
            speed_rpm: 2500.0,
            duration: 0.34,
            schedule: vec![[0.0, 0.0, 0.0], [0.002, -169.0, 169.0]],
            controllers: mpc_only,
            ..ScenarioSection::default()
        },
    ]
}

impl RunConfig {
    pub fn motor_params(&self) -> MotorParams {
        MotorParams {
            r_s: self.motor.r_s,
            l_d: self.motor.l_d,
            l_q: self.motor.l_q,
            psi_p: self.motor.psi_p,
            pole_pairs: self.motor.pole_pairs,
        }
    }

    pub fn sim_timing(&self) -> SimTiming {
        SimTiming {
            t_s: self.timing.t_s,
            fine_dt: self.timing.fine_dt,
        }
    }

    pub fn training_config(&self) -> TrainingConfig {
        let t = &self.training;
        TrainingConfig {
            speed_rpm: t.speed_rpm,
            u_dc: t.u_dc,
            duration: t.duration,
            seed: t.seed,
            id_range: (t.id_range[0], t.id_range[1]),
            iq_range: (t.iq_range[0], t.iq_range[1]),
            dwell_range: (t.dwell_range_ms[0] * 1e-3, t.dwell_range_ms[1] * 1e-3),
            horizon: t.horizon,
            compensate_delay: t.compensate_delay,
        }
    }

    pub fn dictionary(&self) -> Result<Dictionary> {
        parse_dictionary(&self.koopman.dictionary)
    }

    pub fn scenario(&self, name: &str) -> Result<&ScenarioSection> {
        self.scenario
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| {
                let known: Vec<&str> = self.scenario.iter().map(|s| s.name.as_str()).collect();
                Error::Config(format!(
                    "unknown scenario '{name}' (configured: {})",
                    known.join(", ")
                ))
            })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.timing.t_s) || !positive(self.timing.fine_dt) {
            return Err(Error::Config("timing periods must be positive".to_string()));
        }
        if !(0.0 < self.training.train_fraction && self.training.train_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} must lie in (0, 1]",
                self.training.train_fraction
            )));
        }
        self.dictionary()?;
        let mut seen = std::collections::HashSet::new();
        for s in &self.scenario {
            if !seen.insert(s.name.as_str()) {
                return Err(Error::Config(format!("duplicate scenario '{}'", s.name)));
            }
            if s.schedule.is_empty() {
                return Err(Error::Config(format!(
                    "scenario '{}' has an empty schedule",
                    s.name
                )));
            }
            s.controller_kinds()?;
        }
        Ok(())
    }
}

pub fn parse_dictionary(s: &str) -> Result<Dictionary> {
    match s {
        "identity" => Ok(Dictionary::Identity),
        "monomials2" => Ok(Dictionary::Monomials {
            degree: 2,
            constant: false,
        }),
        "monomials2+const" => Ok(Dictionary::Monomials {
            degree: 2,
            constant: true,
        }),
        other => Err(Error::Config(format!(
            "unknown dictionary '{other}' (expected identity, monomials2 or monomials2+const)"
        ))),
    }
}

impl ScenarioSection {
    pub fn to_scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            name: self.name.clone(),
            speed_rpm: self.speed_rpm,
            u_dc: self.u_dc,
            duration: self.duration,
            schedule: self.schedule.iter().map(|e| (e[0], e[1], e[2])).collect(),
            seed: self.seed,
            record_fine: self.record_fine,
            foc_a: self.foc_a,
            foc_oversampling: self.foc_oversampling,
        }
    }

    pub fn controller_kinds(&self) -> Result<Vec<ControllerKind>> {
        self.controllers
            .iter()
            .map(|c| ControllerKind::parse(c))
            .collect()
    }
}

/// Loads a TOML config, or the built-in defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Applies one `key=value` override. Keys are dotted paths into the config
/// (`training.seed`, `koopman.tolerance`); scenarios are addressed by name
/// (`scenario.nominal_1000.duration`). Values are parsed as TOML, so arrays
/// use TOML syntax and bare words become strings.
pub fn apply_override(cfg: &mut RunConfig, assignment: &str) -> Result<()> {
    let (key, value) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "override '{assignment}' is not of the form key=value"
        ))
    })?;
    let key = key.trim();
    let value = value.trim();
    if key.is_empty() {
        return Err(Error::Config(format!(
            "override '{assignment}' has an empty key"
        )));
    }

    let parsed: toml::Value = match format!("v = {value}").parse::<toml::Table>() {
        Ok(table) => table["v"].clone(),
        Err(_) => toml::Value::String(value.to_string()),
    };

    let mut root = toml::Value::try_from(&*cfg)
        .map_err(|e| Error::Config(format!("config serialization failed: {e}")))?;

    let segments: Vec<&str> = key.split('.').collect();
    let mut node = &mut root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        match node {
            toml::Value::Table(map) => {
                let entry = map.get_mut(*seg).ok_or_else(|| {
                    Error::Config(format!("override key '{key}': no field '{seg}'"))
                })?;
                if last {
                    *entry = coerce_like(entry, &parsed, key)?;
                    break;
                }
                node = entry;
            }
            toml::Value::Array(items) => {
                // Scenario arrays are addressed by the scenario name.
                let found = items
                    .iter_mut()
                    .find(|item| item.get("name").and_then(|n| n.as_str()) == Some(*seg));
                let entry = found.ok_or_else(|| {
                    Error::Config(format!("override key '{key}': no scenario named '{seg}'"))
                })?;
                if last {
                    return Err(Error::Config(format!(
                        "override key '{key}' addresses a whole scenario; set one of its fields"
                    )));
                }
                node = entry;
            }
            _ => {
                return Err(Error::Config(format!(
                    "override key '{key}': '{seg}' is nested under a scalar"
                )))
            }
        }
    }

    let candidate: RunConfig = root
        .try_into()
        .map_err(|e| Error::Config(format!("override '{assignment}' rejected: {e}")))?;
    candidate.validate()?;
    *cfg = candidate;
    Ok(())
}

/// Matches the parsed value to the type already at the target so `seed=9`
/// stays an integer and `tolerance=1e-8` a float.
fn coerce_like(existing: &toml::Value, parsed: &toml::Value, key: &str) -> Result<toml::Value> {
    use toml::Value::*;
    Ok(match (existing, parsed) {
        (Float(_), Integer(i)) => Float(*i as f64),
        (Integer(_), Float(f)) if f.fract() == 0.0 => Integer(*f as i64),
        (String(_), v) if !matches!(v, String(_)) => String(v.to_string()),
        (Boolean(_), String(s)) => Boolean(s.parse().map_err(|_| {
            Error::Config(format!(
                "override key '{key}': expected true/false, got '{s}'"
            ))
        })?),
        _ => parsed.clone(),
    })
}

pub fn apply_overrides(cfg: &mut RunConfig, assignments: &[String]) -> Result<()> {
    for a in assignments {
        apply_override(cfg, a)?;
    }
    Ok(())
}
