//! Post-run metrics: spectra, THD, setpoint deviation, switching frequency,
//! step-response timing, and the comparison report (CSV, text table, SVG).

mod svg;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::drive::SwitchState;
use crate::error::{Error, Result};
use crate::sim::{ControllerKind, TrajectoryLog};

pub use svg::{Chart, Series};

/// Fraction of a constant-reference interval treated as transient and
/// excluded from steady-state metrics (the last 60% is evaluated).
pub const STEADY_SKIP_FRACTION: f64 = 0.4;

/// Relative half-width of the step-response band: rise and settling are
/// measured against +-5% of the commanded step size.
pub const STEP_BAND_FRACTION: f64 = 0.05;

/// Fraction of the post-step segment averaged to define the settled level.
pub const STEP_TAIL_FRACTION: f64 = 0.2;

/// Electrical fundamental in Hz for a mechanical speed in rpm.
pub fn fundamental_frequency(speed_rpm: f64, pole_pairs: u32) -> f64 {
    speed_rpm.abs() * pole_pairs as f64 / 60.0
}

/// One-sided amplitude spectrum over an integer number of fundamental
/// periods (rectangular window, no leakage by construction).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Frequency resolution in Hz per bin.
    pub freq_step: f64,
    /// Peak amplitudes for bins `0..=n/2`; bin 0 is the DC mean.
    pub amplitudes: Vec<f64>,
    /// Bin index of the fundamental (equals the analyzed period count).
    pub fundamental_bin: usize,
    /// Number of time samples in the analysis window.
    pub window_len: usize,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.freq_step
    }

    pub fn fundamental_amplitude(&self) -> f64 {
        self.amplitudes[self.fundamental_bin]
    }

    /// Mean square of the windowed signal reconstructed via Parseval.
    pub fn mean_square(&self) -> f64 {
        let n = self.window_len;
        let mut ms = self.amplitudes[0].powi(2);
        for (k, &a) in self.amplitudes.iter().enumerate().skip(1) {
            if n.is_multiple_of(2) && k == n / 2 {
                ms += a * a;
            } else {
                ms += a * a / 2.0;
            }
        }
        ms
    }
}

/// Amplitude spectrum of the trailing `periods / f_fund` seconds of
/// `signal`. The window must hold an integer sample count and fit inside
/// the signal; both are validated rather than silently padded.
pub fn dft(signal: &[f64], dt: f64, f_fund: f64, periods: u32) -> Result<Spectrum> {
    if periods == 0 {
        return Err(Error::Window(
            "need at least one fundamental period".to_string(),
        ));
    }
    if !(f_fund.is_finite() && f_fund > 0.0 && dt.is_finite() && dt > 0.0) {
        return Err(Error::Window(format!(
            "fundamental {f_fund} Hz and sample step {dt} s must be positive"
        )));
    }
    let exact = periods as f64 / (f_fund * dt);
    let n = exact.round() as usize;
    if n < 2 || (exact - n as f64).abs() > 1e-6 * exact {
        return Err(Error::Window(format!(
            "{periods} fundamental period(s) span {exact} samples, not an integer count"
        )));
    }
    if signal.len() < n {
        return Err(Error::Window(format!(
            "signal has {} samples, analysis window needs {n}",
            signal.len()
        )));
    }
    let window = &signal[signal.len() - n..];

    let mut buf: Vec<Complex<f64>> = window.iter().map(|&x| Complex::new(x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    let mut amplitudes = Vec::with_capacity(half + 1);
    amplitudes.push(buf[0].norm() / n as f64);
    for (k, value) in buf.iter().enumerate().take(half + 1).skip(1) {
        let scale = if n.is_multiple_of(2) && k == half {
            1.0
        } else {
            2.0
        };
        amplitudes.push(scale * value.norm() / n as f64);
    }
    Ok(Spectrum {
        freq_step: 1.0 / (n as f64 * dt),
        amplitudes,
        fundamental_bin: periods as usize,
        window_len: n,
    })
}

/// Broadband total harmonic distortion in percent: every non-DC,
/// non-fundamental component (harmonic or not) counts as distortion.
pub fn thd(signal: &[f64], dt: f64, f_fund: f64, periods: u32) -> Result<f64> {
    let spectrum = dft(signal, dt, f_fund, periods)?;
    thd_of_spectrum(&spectrum)
}

/// THD from an already-computed spectrum.
pub fn thd_of_spectrum(spectrum: &Spectrum) -> Result<f64> {
    let fund_rms = spectrum.fundamental_amplitude() / std::f64::consts::SQRT_2;
    let total_ms = spectrum.mean_square();
    // A fundamental below float noise relative to the whole signal cannot
    // normalize a ratio meaningfully.
    if !(fund_rms.is_finite() && fund_rms > 1e-9 * total_ms.sqrt()) {
        return Err(Error::ZeroFundamental);
    }
    let ac_ms = total_ms - spectrum.amplitudes[0].powi(2);
    let distortion_ms = (ac_ms - fund_rms * fund_rms).max(0.0);
    Ok(distortion_ms.sqrt() / fund_rms * 100.0)
}

/// Mean distance between the reference and a trailing sliding mean of the
/// measured dq currents over `[t_start, t_end)`. The window suppresses
/// switching ripple so the metric captures systematic offset; the first
/// `window`-worth of samples only seed the mean and contribute no distance.
pub fn setpoint_deviation(
    log: &TrajectoryLog,
    t_start: f64,
    t_end: f64,
    window: f64,
) -> Result<f64> {
    let t_s = log.meta.t_s;
    let recs: Vec<_> = log
        .periods
        .iter()
        .filter(|r| r.time >= t_start - 1e-12 && r.time < t_end - 1e-12)
        .collect();
    let Some(first) = recs.first() else {
        return Err(Error::SegmentTooShort(format!(
            "no samples in [{t_start}, {t_end})"
        )));
    };
    let (id_ref, iq_ref) = (first.id_ref, first.iq_ref);
    if recs
        .iter()
        .any(|r| r.id_ref != id_ref || r.iq_ref != iq_ref)
    {
        return Err(Error::SegmentTooShort(format!(
            "references change within [{t_start}, {t_end})"
        )));
    }
    let w = ((window / t_s).round() as usize).max(1);
    if recs.len() < w + 1 {
        return Err(Error::SegmentTooShort(format!(
            "{} samples in [{t_start}, {t_end}) but the averaging window needs {w}",
            recs.len()
        )));
    }

    let mut sum_d = 0.0;
    let mut sum_q = 0.0;
    let mut prefix_d = Vec::with_capacity(recs.len() + 1);
    let mut prefix_q = Vec::with_capacity(recs.len() + 1);
    prefix_d.push(0.0);
    prefix_q.push(0.0);
    for r in &recs {
        sum_d += r.i_d;
        sum_q += r.i_q;
        prefix_d.push(sum_d);
        prefix_q.push(sum_q);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in w..=recs.len() {
        let mean_d = (prefix_d[i] - prefix_d[i - w]) / w as f64;
        let mean_q = (prefix_q[i] - prefix_q[i - w]) / w as f64;
        total += (mean_d - id_ref).hypot(mean_q - iq_ref);
        count += 1;
    }
    Ok(total / count as f64)
}

fn toggles_between(a: SwitchState, b: SwitchState) -> u32 {
    a.legs_differing(b)
}

/// Average per-device switching frequency over `[t_start, t_end)`:
/// total leg toggles / (2 transitions per cycle x 3 legs x duration).
/// Uses the microsecond log when present, otherwise the per-period switch
/// states (exact for the direct-switching controllers, which hold one state
/// per period).
pub fn avg_switching_frequency(log: &TrajectoryLog, t_start: f64, t_end: f64) -> Result<f64> {
    if let Some(fine) = &log.fine {
        let mut prev: Option<SwitchState> = None;
        let mut toggles = 0u64;
        let mut count = 0usize;
        for (i, &t) in fine.time.iter().enumerate() {
            if t < t_start - 1e-12 || t >= t_end - 1e-12 {
                continue;
            }
            if let Some(p) = prev {
                toggles += toggles_between(p, fine.switches[i]) as u64;
            }
            prev = Some(fine.switches[i]);
            count += 1;
        }
        if count < 2 {
            return Err(Error::SegmentTooShort(format!(
                "{count} fine samples in [{t_start}, {t_end})"
            )));
        }
        let duration = (count - 1) as f64 * fine.dt;
        return Ok(toggles as f64 / (2.0 * 3.0 * duration));
    }

    let mut prev: Option<SwitchState> = None;
    let mut toggles = 0u64;
    let mut count = 0usize;
    for rec in &log.periods {
        if rec.time < t_start - 1e-12 || rec.time >= t_end - 1e-12 {
            continue;
        }
        let Some(state) = rec.switch_state else {
            return Err(Error::LogFormat(
                "switching frequency for a pwm controller needs the fine log".to_string(),
            ));
        };
        if let Some(p) = prev {
            toggles += toggles_between(p, state) as u64;
        }
        prev = Some(state);
        count += 1;
    }
    if count < 2 {
        return Err(Error::SegmentTooShort(format!(
            "{count} period samples in [{t_start}, {t_end})"
        )));
    }
    let duration = (count - 1) as f64 * log.meta.t_s;
    Ok(toggles as f64 / (2.0 * 3.0 * duration))
}

/// Step-response timing for one current axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisStepMetrics {
    /// Commanded change (new reference minus old).
    pub step_size: f64,
    /// Seconds from the step until the measurement first enters the
    /// +-5%-of-step band around the new reference; `None` if it never does.
    pub rise_time: Option<f64>,
    /// Seconds from the step until the measurement last enters the same-width
    /// band around the settled level and stays; `None` if still outside at
    /// the end of the segment.
    pub settle_time: Option<f64>,
    /// Peak excursion beyond the new reference, percent of the step size.
    pub overshoot_pct: f64,
    /// Mean of the trailing fifth of the post-step segment.
    pub steady_mean: f64,
}

/// Step metrics for both axes; an axis whose reference did not change at the
/// step is `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub t_step: f64,
    pub d: Option<AxisStepMetrics>,
    pub q: Option<AxisStepMetrics>,
}

fn axis_metrics(
    times: &[f64],
    signal: &[f64],
    old_ref: f64,
    new_ref: f64,
) -> Option<AxisStepMetrics> {
    let step = new_ref - old_ref;
    if step.abs() < 1e-9 {
        return None;
    }
    let band = STEP_BAND_FRACTION * step.abs();
    let t0 = times[0];

    let rise_time = signal
        .iter()
        .position(|&x| (x - new_ref).abs() <= band)
        .map(|k| times[k] - t0);

    let tail_len = ((signal.len() as f64 * STEP_TAIL_FRACTION).ceil() as usize).max(1);
    let tail = &signal[signal.len() - tail_len..];
    let steady_mean = tail.iter().sum::<f64>() / tail_len as f64;

    let last_outside = signal.iter().rposition(|&x| (x - steady_mean).abs() > band);
    let settle_time = match last_outside {
        None => Some(0.0),
        Some(k) if k + 1 < signal.len() => Some(times[k + 1] - t0),
        Some(_) => None,
    };

    let sign = step.signum();
    let peak = signal
        .iter()
        .map(|&x| (x - new_ref) * sign)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);

    Some(AxisStepMetrics {
        step_size: step,
        rise_time,
        settle_time,
        overshoot_pct: peak / step.abs() * 100.0,
        steady_mean,
    })
}

/// Locates the reference step nearest `t_step` (within half a period) and
/// measures both axes over the following constant-reference segment.
pub fn step_metrics(log: &TrajectoryLog, t_step: f64) -> Result<StepMetrics> {
    let periods = &log.periods;
    let half = log.meta.t_s / 2.0;
    let mut step_idx = None;
    for i in 1..periods.len() {
        let changed = periods[i].id_ref != periods[i - 1].id_ref
            || periods[i].iq_ref != periods[i - 1].iq_ref;
        if changed && (periods[i].time - t_step).abs() <= half + 1e-12 {
            step_idx = Some(i);
            break;
        }
    }
    let Some(i0) = step_idx else {
        return Err(Error::StepNotFound(t_step));
    };

    let mut i1 = periods.len();
    for i in (i0 + 1)..periods.len() {
        if periods[i].id_ref != periods[i0].id_ref || periods[i].iq_ref != periods[i0].iq_ref {
            i1 = i;
            break;
        }
    }
    let segment = &periods[i0..i1];
    if segment.len() < 5 {
        return Err(Error::SegmentTooShort(format!(
            "only {} samples follow the step at {t_step}",
            segment.len()
        )));
    }
    let times: Vec<f64> = segment.iter().map(|r| r.time).collect();
    let i_d: Vec<f64> = segment.iter().map(|r| r.i_d).collect();
    let i_q: Vec<f64> = segment.iter().map(|r| r.i_q).collect();
    let old = &periods[i0 - 1];
    Ok(StepMetrics {
        t_step: periods[i0].time,
        d: axis_metrics(&times, &i_d, old.id_ref, periods[i0].id_ref),
        q: axis_metrics(&times, &i_q, old.iq_ref, periods[i0].iq_ref),
    })
}

/// One line of the comparison report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub controller: ControllerKind,
    pub speed_rpm: f64,
    pub id_ref: f64,
    pub iq_ref: f64,
    pub thd_pct: Option<f64>,
    pub setpoint_dev_a: Option<f64>,
    pub fsw_avg_hz: Option<f64>,
    pub rise_ms: Option<f64>,
    pub settle_ms: Option<f64>,
}

pub const REPORT_HEADER: &str =
    "controller,speed_rpm,id_ref,iq_ref,thd_pct,setpoint_dev_A,fsw_avg_Hz,rise_ms,settle_ms";

fn opt4(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.4}"))
}

fn opt1(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:.1}"))
}

impl ReportRow {
    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.controller,
            self.speed_rpm,
            self.id_ref,
            self.iq_ref,
            opt4(self.thd_pct),
            opt4(self.setpoint_dev_a),
            opt1(self.fsw_avg_hz),
            opt4(self.rise_ms),
            opt4(self.settle_ms),
        )
    }
}

/// The steady-state evaluation window of a log: the last 60% of the final
/// constant-reference interval, together with that interval's references.
pub fn steady_window(log: &TrajectoryLog) -> Result<(f64, f64, f64, f64)> {
    let intervals = log.reference_intervals();
    let &(t0, t1, id_ref, iq_ref) = intervals
        .last()
        .ok_or_else(|| Error::SegmentTooShort("log holds no samples".to_string()))?;
    Ok((t0 + STEADY_SKIP_FRACTION * (t1 - t0), t1, id_ref, iq_ref))
}

/// Spectrum of the phase-a current over the trailing integer number of
/// fundamental periods inside the steady window. Needs the fine log.
pub fn steady_spectrum(log: &TrajectoryLog) -> Result<Spectrum> {
    let fine = log
        .fine
        .as_ref()
        .ok_or_else(|| Error::LogFormat("spectrum needs the fine log".to_string()))?;
    let (t0, t1, _, _) = steady_window(log)?;
    let f_fund = fundamental_frequency(log.meta.speed_rpm, log.meta.pole_pairs);
    if !(f_fund.is_finite() && f_fund > 0.0) {
        return Err(Error::ZeroFundamental);
    }
    let signal: Vec<f64> = fine
        .time
        .iter()
        .zip(&fine.i_a)
        .filter(|(&t, _)| t >= t0 - 1e-12 && t < t1 - 1e-12)
        .map(|(_, &x)| x)
        .collect();
    let span = signal.len() as f64 * fine.dt;
    let periods = (span * f_fund * (1.0 + 1e-9)).floor() as u32;
    dft(&signal, fine.dt, f_fund, periods)
}

/// Computes the full metric row for one run. Metrics whose inputs are not
/// recorded (THD without a fine log) or undefined (no step in the schedule)
/// are left empty rather than approximated.
pub fn analyze_run(log: &TrajectoryLog) -> Result<ReportRow> {
    let intervals = log.reference_intervals();
    if intervals.is_empty() {
        return Err(Error::SegmentTooShort("log holds no samples".to_string()));
    }
    let (t0, t1, id_ref, iq_ref) = steady_window(log)?;
    let f_fund = fundamental_frequency(log.meta.speed_rpm, log.meta.pole_pairs);

    let window = if f_fund > 0.0 {
        1.0 / f_fund
    } else {
        log.meta.t_s
    };
    let setpoint_dev_a = Some(setpoint_deviation(log, t0, t1, window)?);

    let thd_pct = if log.fine.is_some() && f_fund > 0.0 {
        Some(thd_of_spectrum(&steady_spectrum(log)?)?)
    } else {
        None
    };

    let fsw_avg_hz = Some(avg_switching_frequency(log, t0, t1)?);

    let (rise_ms, settle_ms) = if intervals.len() >= 2 {
        let step_start = intervals.last().unwrap().0;
        let metrics = step_metrics(log, step_start)?;
        // The q axis carries the torque-step story; fall back to d when only
        // the d reference moved.
        let axis = metrics.q.or(metrics.d);
        match axis {
            Some(a) => (a.rise_time.map(|t| t * 1e3), a.settle_time.map(|t| t * 1e3)),
            None => (None, None),
        }
    } else {
        (None, None)
    };

    Ok(ReportRow {
        scenario: log.meta.scenario.clone(),
        controller: log.meta.controller,
        speed_rpm: log.meta.speed_rpm,
        id_ref,
        iq_ref,
        thd_pct,
        setpoint_dev_a,
        fsw_avg_hz,
        rise_ms,
        settle_ms,
    })
}

/// Writes `compare.csv` and `compare.txt` into `dir`; returns both paths.
/// Output bytes are a pure function of the rows.
pub fn emit_report(rows: &[ReportRow], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    let mut csv = String::new();
    csv.push_str(REPORT_HEADER);
    csv.push('\n');
    for row in rows {
        csv.push_str(&row.csv_line());
        csv.push('\n');
    }
    let csv_path = dir.join("compare.csv");
    std::fs::write(&csv_path, csv)?;

    let mut txt = String::new();
    let _ = writeln!(
        txt,
        "{:<22} {:<14} {:>9} {:>8} {:>8} {:>9} {:>9} {:>8} {:>10}",
        "scenario",
        "controller",
        "rpm",
        "id_ref",
        "iq_ref",
        "thd_pct",
        "dev_A",
        "fsw_Hz",
        "settle_ms"
    );
    let dash = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
    for row in rows {
        let _ = writeln!(
            txt,
            "{:<22} {:<14} {:>9} {:>8} {:>8} {:>9} {:>9} {:>8} {:>10}",
            row.scenario,
            row.controller.to_string(),
            format!("{}", row.speed_rpm),
            format!("{}", row.id_ref),
            format!("{}", row.iq_ref),
            dash(row.thd_pct, 3),
            dash(row.setpoint_dev_a, 4),
            dash(row.fsw_avg_hz, 0),
            dash(row.settle_ms, 3),
        );
    }
    let txt_path = dir.join("compare.txt");
    std::fs::write(&txt_path, txt)?;
    Ok((csv_path, txt_path))
}

/// Overlaid dq-current traces for every controller that ran a scenario.
pub fn write_timeseries_svg(scenario: &str, logs: &[&TrajectoryLog], path: &Path) -> Result<()> {
    let mut series = Vec::new();
    for (idx, log) in logs.iter().enumerate() {
        let color = svg::PALETTE[idx % svg::PALETTE.len()].to_string();
        let pts_q: Vec<(f64, f64)> = log.periods.iter().map(|r| (r.time * 1e3, r.i_q)).collect();
        let pts_d: Vec<(f64, f64)> = log.periods.iter().map(|r| (r.time * 1e3, r.i_d)).collect();
        series.push(Series {
            label: format!("{} i_q", log.meta.controller),
            color: color.clone(),
            dashed: false,
            points: svg::decimate(&pts_q, 1500),
        });
        series.push(Series {
            label: format!("{} i_d", log.meta.controller),
            color,
            dashed: true,
            points: svg::decimate(&pts_d, 1500),
        });
    }
    if let Some(first) = logs.first() {
        let mut ref_q = Vec::new();
        let mut ref_d = Vec::new();
        for (t0, t1, id_ref, iq_ref) in first.reference_intervals() {
            ref_d.push((t0 * 1e3, id_ref));
            ref_d.push((t1 * 1e3, id_ref));
            ref_q.push((t0 * 1e3, iq_ref));
            ref_q.push((t1 * 1e3, iq_ref));
        }
        series.push(Series {
            label: "reference i_q".to_string(),
            color: "#444444".to_string(),
            dashed: false,
            points: ref_q,
        });
        series.push(Series {
            label: "reference i_d".to_string(),
            color: "#444444".to_string(),
            dashed: true,
            points: ref_d,
        });
    }
    let chart = Chart {
        title: format!("{scenario}: dq currents"),
        x_label: "time / ms".to_string(),
        y_label: "current / A".to_string(),
        series,
    };
    std::fs::write(path, chart.render())?;
    Ok(())
}

/// Overlaid phase-current spectra up to `max_freq` Hz, amplitudes in dBA.
pub fn write_spectrum_svg(
    scenario: &str,
    entries: &[(String, Spectrum)],
    max_freq: f64,
    path: &Path,
) -> Result<()> {
    let mut series = Vec::new();
    for (idx, (label, spectrum)) in entries.iter().enumerate() {
        let pts: Vec<(f64, f64)> = spectrum
            .amplitudes
            .iter()
            .enumerate()
            .take_while(|(k, _)| spectrum.frequency(*k) <= max_freq)
            .map(|(k, &a)| (spectrum.frequency(k), 20.0 * a.max(1e-6).log10()))
            .collect();
        series.push(Series {
            label: label.clone(),
            color: svg::PALETTE[idx % svg::PALETTE.len()].to_string(),
            dashed: false,
            points: svg::decimate(&pts, 3000),
        });
    }
    let chart = Chart {
        title: format!("{scenario}: phase-current spectrum"),
        x_label: "frequency / Hz".to_string(),
        y_label: "amplitude / dBA".to_string(),
        series,
    };
    std::fs::write(path, chart.render())?;
    Ok(())
}
