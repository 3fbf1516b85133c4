//! Closed-loop simulation engine.
//!
//! The plant is integrated at a fine time step (Runge-Kutta, microsecond
//! scale) while controllers run at the coarser sampling period `t_s`. The
//! digital control loop has a one-period actuation latency: a command
//! computed from the measurement at `t_k` takes effect at `t_{k+1}`. The
//! engine reproduces that pipeline for both controller families — voltage
//! vectors for the predictive controllers, duty cycles for the PWM-based
//! baseline — and records everything needed for training and analysis.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::drive::{
    alphabeta_to_phases, dq_current_to_alphabeta, plant_step, DqState, ElectricalAngle,
    MotorParams, OperatingCondition, SwitchState,
};
use crate::error::{Error, Result};
use crate::foc::{FocController, FocTiming, PwmCarrier};
use crate::koopman::{KoopmanModelBank, Observation};
use crate::mpc::{control_step, PredictionModel, Reference};

/// The three controllers under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    KoopmanMpc,
    WhiteboxMpc,
    Foc,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::KoopmanMpc => "koopman-mpc",
            ControllerKind::WhiteboxMpc => "whitebox-mpc",
            ControllerKind::Foc => "foc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "koopman-mpc" => Ok(ControllerKind::KoopmanMpc),
            "whitebox-mpc" => Ok(ControllerKind::WhiteboxMpc),
            "foc" => Ok(ControllerKind::Foc),
            other => Err(Error::Config(format!(
                "unknown controller '{other}' (expected koopman-mpc, whitebox-mpc or foc)"
            ))),
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Scenario description: operating point plus a reference schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub speed_rpm: f64,
    pub u_dc: f64,
    /// Total simulated time in seconds.
    pub duration: f64,
    /// `(time, i_d_ref, i_q_ref)` entries with non-decreasing times; each
    /// entry holds until the next one. Before the first entry the reference
    /// is zero.
    pub schedule: Vec<(f64, f64, f64)>,
    /// Recorded in the log; scenarios themselves are deterministic.
    pub seed: u64,
    /// Record microsecond-rate phase currents and switch states.
    pub record_fine: bool,
    /// Symmetrical-optimum design parameter for the FOC baseline.
    pub foc_a: f64,
    /// FOC carrier period in controller periods.
    pub foc_oversampling: u32,
}

/// Shared timing of the simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimTiming {
    /// Controller sampling period in seconds.
    pub t_s: f64,
    /// Plant integration step in seconds; must divide `t_s`.
    pub fine_dt: f64,
}

impl SimTiming {
    pub fn fine_steps_per_period(&self) -> Result<u32> {
        let ratio = self.t_s / self.fine_dt;
        let rounded = ratio.round();
        if (ratio - rounded).abs() > 1e-9 * ratio || rounded < 1.0 {
            return Err(Error::Config(format!(
                "fine step {} must divide the controller period {}",
                self.fine_dt, self.t_s
            )));
        }
        Ok(rounded as u32)
    }
}

/// Controller selection for one run, carrying any model it needs.
#[derive(Debug, Clone)]
pub enum ControllerSpec<'a> {
    WhiteboxMpc {
        horizon: usize,
        compensate_delay: bool,
    },
    KoopmanMpc {
        bank: &'a KoopmanModelBank,
        horizon: usize,
        compensate_delay: bool,
    },
    Foc,
}

impl ControllerSpec<'_> {
    pub fn kind(&self) -> ControllerKind {
        match self {
            ControllerSpec::WhiteboxMpc { .. } => ControllerKind::WhiteboxMpc,
            ControllerSpec::KoopmanMpc { .. } => ControllerKind::KoopmanMpc,
            ControllerSpec::Foc => ControllerKind::Foc,
        }
    }
}

/// Metadata identifying one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub scenario: String,
    pub controller: ControllerKind,
    pub speed_rpm: f64,
    pub u_dc: f64,
    pub t_s: f64,
    pub fine_dt: f64,
    pub seed: u64,
    pub pole_pairs: u32,
}

/// Everything recorded at one controller period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    /// Period start time in seconds; the state fields are sampled here.
    pub time: f64,
    pub i_d: f64,
    pub i_q: f64,
    pub eps_el: f64,
    pub id_ref: f64,
    pub iq_ref: f64,
    /// Vector driving the plant during this period (predictive controllers).
    pub applied_vector: Option<u8>,
    /// Vector decided this period; takes effect next period.
    pub commanded_vector: Option<u8>,
    /// Switch state realizing `applied_vector` (predictive controllers).
    pub switch_state: Option<SwitchState>,
    /// Optimal-sequence cost of this period's decision.
    pub cost: Option<f64>,
    /// Duty cycles in effect (available to the carrier latch) this period.
    pub applied_duties: Option<[f64; 3]>,
    /// Duty cycles decided this period; in effect next period.
    pub commanded_duties: Option<[f64; 3]>,
    /// Voltage command hit a limiter this period.
    pub saturated: bool,
}

/// Microsecond-rate record of phase currents and inverter switch states.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FineLog {
    pub dt: f64,
    pub time: Vec<f64>,
    pub i_a: Vec<f64>,
    pub i_b: Vec<f64>,
    pub i_c: Vec<f64>,
    pub switches: Vec<SwitchState>,
}

/// Complete record of one closed-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub meta: RunMeta,
    pub periods: Vec<PeriodRecord>,
    /// State one period after the last record — the successor of the final
    /// snapshot pair.
    pub final_i_d: f64,
    pub final_i_q: f64,
    pub final_eps: f64,
    pub fine: Option<FineLog>,
}

impl TrajectoryLog {
    /// Observation sequence plus the vector applied between consecutive
    /// observations — the training interface. Only meaningful for runs of the
    /// predictive controllers.
    pub fn observations(&self) -> Result<(Vec<Observation>, Vec<u8>)> {
        let mut obs = Vec::with_capacity(self.periods.len() + 1);
        let mut applied = Vec::with_capacity(self.periods.len());
        for rec in &self.periods {
            obs.push(Observation::new(
                DqState {
                    i_d: rec.i_d,
                    i_q: rec.i_q,
                },
                ElectricalAngle::new(rec.eps_el),
            ));
            applied.push(rec.applied_vector.ok_or_else(|| {
                Error::LogFormat(
                    "log has periods without an applied vector; only predictive-controller \
                     runs can train models"
                        .to_string(),
                )
            })?);
        }
        obs.push(Observation::new(
            DqState {
                i_d: self.final_i_d,
                i_q: self.final_i_q,
            },
            ElectricalAngle::new(self.final_eps),
        ));
        Ok((obs, applied))
    }

    /// Maximal intervals of constant reference: `(t_start, t_end, id_ref,
    /// iq_ref)` with `t_end` exclusive (one period past the last record).
    pub fn reference_intervals(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut out: Vec<(f64, f64, f64, f64)> = Vec::new();
        for rec in &self.periods {
            match out.last_mut() {
                Some(last) if last.2 == rec.id_ref && last.3 == rec.iq_ref => {
                    last.1 = rec.time + self.meta.t_s;
                }
                _ => out.push((rec.time, rec.time + self.meta.t_s, rec.id_ref, rec.iq_ref)),
            }
        }
        out
    }
}

/// Confirms the one-period actuation latency in a recorded log: whatever a
/// period commands is what the next period applies, and the first period
/// applies the neutral startup command.
pub fn delay_model_check(log: &TrajectoryLog) -> bool {
    let periods = &log.periods;
    if periods.is_empty() {
        return false;
    }
    match log.meta.controller {
        ControllerKind::Foc => {
            if periods[0].applied_duties != Some([0.5; 3]) {
                return false;
            }
            periods.windows(2).all(|w| {
                w[0].commanded_duties.is_some() && w[1].applied_duties == w[0].commanded_duties
            })
        }
        _ => {
            if periods[0].applied_vector != Some(0) {
                return false;
            }
            periods.windows(2).all(|w| {
                w[0].commanded_vector.is_some() && w[1].applied_vector == w[0].commanded_vector
            })
        }
    }
}

fn validate_scenario(scenario: &ScenarioConfig, timing: &SimTiming) -> Result<u32> {
    if scenario.duration <= 0.0 {
        return Err(Error::Config(format!(
            "scenario '{}': duration must be positive",
            scenario.name
        )));
    }
    let mut prev = 0.0;
    for &(t, _, _) in &scenario.schedule {
        if t < prev {
            return Err(Error::Config(format!(
                "scenario '{}': schedule times must be non-decreasing",
                scenario.name
            )));
        }
        prev = t;
    }
    if scenario.foc_oversampling == 0 {
        return Err(Error::Config(format!(
            "scenario '{}': foc_oversampling must be positive",
            scenario.name
        )));
    }
    timing.fine_steps_per_period()
}

/// Runs one closed-loop scenario and returns its complete record.
pub fn run_closed_loop(
    scenario: &ScenarioConfig,
    params: &MotorParams,
    timing: &SimTiming,
    controller: &ControllerSpec,
) -> Result<TrajectoryLog> {
    let fine_per_period = validate_scenario(scenario, timing)?;
    let cond = OperatingCondition::from_rpm(scenario.speed_rpm, params.pole_pairs, scenario.u_dc);
    let n_periods = (scenario.duration / timing.t_s).round() as usize;

    let mut x = DqState::default();
    let mut eps = ElectricalAngle::ZERO;

    // Controller-family state.
    let whitebox_model;
    let koopman_model;
    let model: Option<&PredictionModel> = match controller {
        ControllerSpec::WhiteboxMpc { .. } => {
            whitebox_model = PredictionModel::WhiteBox {
                params: *params,
                cond,
                t_s: timing.t_s,
            };
            Some(&whitebox_model)
        }
        ControllerSpec::KoopmanMpc { bank, .. } => {
            koopman_model = PredictionModel::Koopman { bank };
            Some(&koopman_model)
        }
        ControllerSpec::Foc => None,
    };
    let (horizon, compensate_delay) = match controller {
        ControllerSpec::WhiteboxMpc {
            horizon,
            compensate_delay,
        }
        | ControllerSpec::KoopmanMpc {
            horizon,
            compensate_delay,
            ..
        } => (*horizon, *compensate_delay),
        ControllerSpec::Foc => (0, false),
    };

    let foc_timing = FocTiming {
        t_s: timing.t_s,
        oversampling: scenario.foc_oversampling,
        a: scenario.foc_a,
    };
    let mut foc = FocController::new(params, foc_timing, scenario.u_dc);
    let steps_per_carrier = fine_per_period
        .checked_mul(scenario.foc_oversampling)
        .expect("carrier sample count");
    let mut pwm = if matches!(controller, ControllerSpec::Foc) {
        if steps_per_carrier % 2 != 0 {
            return Err(Error::Config(format!(
                "scenario '{}': carrier period must span an even number of fine steps, got {}",
                scenario.name, steps_per_carrier
            )));
        }
        Some(PwmCarrier::new(steps_per_carrier))
    } else {
        None
    };

    // One-period actuation pipeline. The startup command is neutral: the zero
    // vector realized as all-low, or centered duties.
    let mut pending_vector = 0_u8;
    let mut pending_switch = SwitchState::ALL_LOW;
    let mut pending_duties = [0.5_f64; 3];

    let mut periods = Vec::with_capacity(n_periods);
    let mut fine = scenario.record_fine.then(|| FineLog {
        dt: timing.fine_dt,
        time: Vec::with_capacity(n_periods * fine_per_period as usize),
        i_a: Vec::with_capacity(n_periods * fine_per_period as usize),
        i_b: Vec::with_capacity(n_periods * fine_per_period as usize),
        i_c: Vec::with_capacity(n_periods * fine_per_period as usize),
        switches: Vec::with_capacity(n_periods * fine_per_period as usize),
    });

    let mut schedule_pos = 0;
    let mut reference = Reference { i_d: 0.0, i_q: 0.0 };

    for i in 0..n_periods {
        let t = i as f64 * timing.t_s;
        while schedule_pos < scenario.schedule.len()
            && scenario.schedule[schedule_pos].0 <= t + 0.5 * timing.t_s
        {
            reference = Reference {
                i_d: scenario.schedule[schedule_pos].1,
                i_q: scenario.schedule[schedule_pos].2,
            };
            schedule_pos += 1;
        }

        // Promote last period's command: it drives the plant from now on.
        let applied_vector = pending_vector;
        let applied_switch = pending_switch;
        let applied_duties = pending_duties;

        let obs = Observation::new(x, eps);
        let mut record = PeriodRecord {
            time: t,
            i_d: x.i_d,
            i_q: x.i_q,
            eps_el: eps.radians(),
            id_ref: reference.i_d,
            iq_ref: reference.i_q,
            applied_vector: None,
            commanded_vector: None,
            switch_state: None,
            cost: None,
            applied_duties: None,
            commanded_duties: None,
            saturated: false,
        };

        match controller {
            ControllerSpec::Foc => {
                let cmd = foc.control_step(x, reference, eps, &cond, params);
                pending_duties = cmd.duties;
                record.applied_duties = Some(applied_duties);
                record.commanded_duties = Some(cmd.duties);
                record.saturated = cmd.saturated;
            }
            _ => {
                let decision = control_step(
                    model.expect("predictive controller has a model"),
                    &obs,
                    reference,
                    horizon,
                    applied_vector,
                    applied_switch,
                    compensate_delay,
                );
                pending_vector = decision.vector_index;
                pending_switch = decision.switch_state;
                record.applied_vector = Some(applied_vector);
                record.commanded_vector = Some(decision.vector_index);
                record.switch_state = Some(applied_switch);
                record.cost = Some(decision.cost);
            }
        }
        periods.push(record);

        // Integrate the plant across the period under the applied command.
        for f in 0..fine_per_period {
            let s = match &mut pwm {
                Some(pwm) => pwm.step(applied_duties),
                None => applied_switch,
            };
            if let Some(fine) = &mut fine {
                let ab = dq_current_to_alphabeta(x, eps);
                let ph = alphabeta_to_phases(ab);
                fine.time.push(t + f64::from(f) * timing.fine_dt);
                fine.i_a.push(ph[0]);
                fine.i_b.push(ph[1]);
                fine.i_c.push(ph[2]);
                fine.switches.push(s);
            }
            x = plant_step(x, s, eps, &cond, params, timing.fine_dt, 1);
            eps = eps.advanced(cond.omega_el * timing.fine_dt);
        }
    }

    Ok(TrajectoryLog {
        meta: RunMeta {
            scenario: scenario.name.clone(),
            controller: controller.kind(),
            speed_rpm: scenario.speed_rpm,
            u_dc: scenario.u_dc,
            t_s: timing.t_s,
            fine_dt: timing.fine_dt,
            seed: scenario.seed,
            pole_pairs: params.pole_pairs,
        },
        periods,
        final_i_d: x.i_d,
        final_i_q: x.i_q,
        final_eps: eps.radians(),
        fine,
    })
}

/// Settings for closed-loop training-data generation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub speed_rpm: f64,
    pub u_dc: f64,
    pub duration: f64,
    pub seed: u64,
    /// Uniform sampling range for the d-axis reference (amperes).
    pub id_range: (f64, f64),
    /// Uniform sampling range for the q-axis reference (amperes).
    pub iq_range: (f64, f64),
    /// Uniform sampling range for each reference's dwell time (seconds).
    pub dwell_range: (f64, f64),
    pub horizon: usize,
    pub compensate_delay: bool,
}

/// Builds the randomized reference schedule used for training runs.
pub fn training_schedule(cfg: &TrainingConfig) -> Vec<(f64, f64, f64)> {
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut schedule = Vec::new();
    let mut t = 0.0;
    while t < cfg.duration {
        let i_d = rng.gen_range(cfg.id_range.0..=cfg.id_range.1);
        let i_q = rng.gen_range(cfg.iq_range.0..=cfg.iq_range.1);
        let dwell = rng.gen_range(cfg.dwell_range.0..=cfg.dwell_range.1);
        schedule.push((t, i_d, i_q));
        t += dwell;
    }
    schedule
}

/// Runs the white-box controller over a randomized reference schedule to
/// excite the drive across its operating envelope; the resulting log is the
/// training corpus for the Koopman model bank.
pub fn generate_training_data(
    cfg: &TrainingConfig,
    params: &MotorParams,
    timing: &SimTiming,
) -> Result<TrajectoryLog> {
    if !(cfg.dwell_range.0 > 0.0 && cfg.dwell_range.1 >= cfg.dwell_range.0) {
        return Err(Error::Config(
            "training dwell range must be positive and ordered".to_string(),
        ));
    }
    let scenario = ScenarioConfig {
        name: "training".to_string(),
        speed_rpm: cfg.speed_rpm,
        u_dc: cfg.u_dc,
        duration: cfg.duration,
        schedule: training_schedule(cfg),
        seed: cfg.seed,
        record_fine: false,
        foc_a: 4.0,
        foc_oversampling: 5,
    };
    run_closed_loop(
        &scenario,
        params,
        timing,
        &ControllerSpec::WhiteboxMpc {
            horizon: cfg.horizon,
            compensate_delay: cfg.compensate_delay,
        },
    )
}

// ---------------------------------------------------------------------------
// CSV persistence
// ---------------------------------------------------------------------------

const PERIOD_COLUMNS: &str = "time,i_d,i_q,eps_el,id_ref,iq_ref,applied_vector,\
commanded_vector,s_a,s_b,s_c,cost,duty_a,duty_b,duty_c,applied_duty_a,\
applied_duty_b,applied_duty_c,saturated";

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the controller-rate log as CSV with a metadata comment header.
pub fn write_period_csv(log: &TrajectoryLog, path: &Path) -> Result<()> {
    let mut out = String::new();
    let m = &log.meta;
    let _ = writeln!(
        out,
        "# scenario={} controller={} speed_rpm={} u_dc={} t_s={} fine_dt={} seed={} \
         pole_pairs={} final_i_d={} final_i_q={} final_eps={}",
        m.scenario,
        m.controller,
        m.speed_rpm,
        m.u_dc,
        m.t_s,
        m.fine_dt,
        m.seed,
        m.pole_pairs,
        log.final_i_d,
        log.final_i_q,
        log.final_eps
    );
    out.push_str(PERIOD_COLUMNS);
    out.push('\n');
    for r in &log.periods {
        let (s_a, s_b, s_c) = match r.switch_state {
            Some(s) => (s.0[0].to_string(), s.0[1].to_string(), s.0[2].to_string()),
            None => (String::new(), String::new(), String::new()),
        };
        let duties = r.commanded_duties.map(|d| d.map(|x| x.to_string()));
        let applied = r.applied_duties.map(|d| d.map(|x| x.to_string()));
        let empty3 = || [String::new(), String::new(), String::new()];
        let duties = duties.unwrap_or_else(empty3);
        let applied = applied.unwrap_or_else(empty3);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.time,
            r.i_d,
            r.i_q,
            r.eps_el,
            r.id_ref,
            r.iq_ref,
            fmt_opt(r.applied_vector),
            fmt_opt(r.commanded_vector),
            s_a,
            s_b,
            s_c,
            fmt_opt(r.cost),
            duties[0],
            duties[1],
            duties[2],
            applied[0],
            applied[1],
            applied[2],
            u8::from(r.saturated)
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Writes the microsecond-rate log as CSV.
pub fn write_fine_csv(log: &TrajectoryLog, path: &Path) -> Result<()> {
    let fine = log
        .fine
        .as_ref()
        .ok_or_else(|| Error::LogFormat("run recorded no fine log".to_string()))?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# scenario={} controller={} dt={}",
        log.meta.scenario, log.meta.controller, fine.dt
    );
    out.push_str("time,i_a,i_b,i_c,s_a,s_b,s_c\n");
    for i in 0..fine.time.len() {
        let s = fine.switches[i].0;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fine.time[i], fine.i_a[i], fine.i_b[i], fine.i_c[i], s[0], s[1], s[2]
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn meta_fields(line: &str) -> Result<std::collections::HashMap<String, String>> {
    let body = line
        .strip_prefix("# ")
        .ok_or_else(|| Error::LogFormat("missing metadata header".to_string()))?;
    Ok(body
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

fn meta_get<T: std::str::FromStr>(
    map: &std::collections::HashMap<String, String>,
    key: &str,
) -> Result<T> {
    map.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::LogFormat(format!("missing or bad metadata field '{key}'")))
}

fn parse_opt<T: std::str::FromStr>(tok: &str, what: &str) -> Result<Option<T>> {
    if tok.is_empty() {
        return Ok(None);
    }
    tok.parse()
        .map(Some)
        .map_err(|_| Error::LogFormat(format!("bad {what} value '{tok}'")))
}

fn parse_req<T: std::str::FromStr>(tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::LogFormat(format!("bad {what} value '{tok}'")))
}

/// Reads back a controller-rate CSV written by [`write_period_csv`].
pub fn read_period_csv(path: &Path) -> Result<TrajectoryLog> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let meta_line = lines
        .next()
        .ok_or_else(|| Error::LogFormat("empty log file".to_string()))?;
    let map = meta_fields(meta_line)?;
    let controller = ControllerKind::parse(&meta_get::<String>(&map, "controller")?)?;
    let meta = RunMeta {
        scenario: meta_get(&map, "scenario")?,
        controller,
        speed_rpm: meta_get(&map, "speed_rpm")?,
        u_dc: meta_get(&map, "u_dc")?,
        t_s: meta_get(&map, "t_s")?,
        fine_dt: meta_get(&map, "fine_dt")?,
        seed: meta_get(&map, "seed")?,
        pole_pairs: meta_get(&map, "pole_pairs")?,
    };
    let header = lines
        .next()
        .ok_or_else(|| Error::LogFormat("missing column header".to_string()))?;
    if header != PERIOD_COLUMNS {
        return Err(Error::LogFormat("unexpected column header".to_string()));
    }
    let mut periods = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split(',').collect();
        if tok.len() != 19 {
            return Err(Error::LogFormat(format!(
                "expected 19 columns, found {} in '{line}'",
                tok.len()
            )));
        }
        let legs = [
            parse_opt::<i8>(tok[8], "s_a")?,
            parse_opt::<i8>(tok[9], "s_b")?,
            parse_opt::<i8>(tok[10], "s_c")?,
        ];
        let switch_state = match legs {
            [Some(a), Some(b), Some(c)] => Some(SwitchState::new([a, b, c])),
            [None, None, None] => None,
            _ => return Err(Error::LogFormat("partial switch state".to_string())),
        };
        let cmd = [
            parse_opt::<f64>(tok[12], "duty_a")?,
            parse_opt::<f64>(tok[13], "duty_b")?,
            parse_opt::<f64>(tok[14], "duty_c")?,
        ];
        let commanded_duties = match cmd {
            [Some(a), Some(b), Some(c)] => Some([a, b, c]),
            [None, None, None] => None,
            _ => return Err(Error::LogFormat("partial duty triple".to_string())),
        };
        let app = [
            parse_opt::<f64>(tok[15], "applied_duty_a")?,
            parse_opt::<f64>(tok[16], "applied_duty_b")?,
            parse_opt::<f64>(tok[17], "applied_duty_c")?,
        ];
        let applied_duties = match app {
            [Some(a), Some(b), Some(c)] => Some([a, b, c]),
            [None, None, None] => None,
            _ => return Err(Error::LogFormat("partial duty triple".to_string())),
        };
        periods.push(PeriodRecord {
            time: parse_req(tok[0], "time")?,
            i_d: parse_req(tok[1], "i_d")?,
            i_q: parse_req(tok[2], "i_q")?,
            eps_el: parse_req(tok[3], "eps_el")?,
            id_ref: parse_req(tok[4], "id_ref")?,
            iq_ref: parse_req(tok[5], "iq_ref")?,
            applied_vector: parse_opt(tok[6], "applied_vector")?,
            commanded_vector: parse_opt(tok[7], "commanded_vector")?,
            switch_state,
            cost: parse_opt(tok[11], "cost")?,
            applied_duties,
            commanded_duties,
            saturated: parse_req::<u8>(tok[18], "saturated")? != 0,
        });
    }
    Ok(TrajectoryLog {
        meta,
        periods,
        final_i_d: meta_get(&map, "final_i_d")?,
        final_i_q: meta_get(&map, "final_i_q")?,
        final_eps: meta_get(&map, "final_eps")?,
        fine: None,
    })
}

/// Reads back a microsecond-rate CSV written by [`write_fine_csv`].
pub fn read_fine_csv(path: &Path) -> Result<FineLog> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let meta_line = lines
        .next()
        .ok_or_else(|| Error::LogFormat("empty fine log".to_string()))?;
    let map = meta_fields(meta_line)?;
    let mut fine = FineLog {
        dt: meta_get(&map, "dt")?,
        ..FineLog::default()
    };
    let header = lines
        .next()
        .ok_or_else(|| Error::LogFormat("missing fine column header".to_string()))?;
    if header != "time,i_a,i_b,i_c,s_a,s_b,s_c" {
        return Err(Error::LogFormat(
            "unexpected fine column header".to_string(),
        ));
    }
    for line in lines {
        let tok: Vec<&str> = line.split(',').collect();
        if tok.len() != 7 {
            return Err(Error::LogFormat(format!(
                "expected 7 columns, found {} in '{line}'",
                tok.len()
            )));
        }
        fine.time.push(parse_req(tok[0], "time")?);
        fine.i_a.push(parse_req(tok[1], "i_a")?);
        fine.i_b.push(parse_req(tok[2], "i_b")?);
        fine.i_c.push(parse_req(tok[3], "i_c")?);
        fine.switches.push(SwitchState::new([
            parse_req(tok[4], "s_a")?,
            parse_req(tok[5], "s_b")?,
            parse_req(tok[6], "s_c")?,
        ]));
    }
    Ok(fine)
}
