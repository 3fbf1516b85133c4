//! Implementations of the four CLI subcommands. Every artifact lands under
//! the chosen output directory; stdout carries a short human summary.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::analysis::{
    analyze_run, emit_report, steady_spectrum, write_spectrum_svg, write_timeseries_svg, ReportRow,
    Spectrum,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::koopman::KoopmanModelBank;
use crate::sim::{
    generate_training_data, read_fine_csv, read_period_csv, run_closed_loop, write_fine_csv,
    write_period_csv, ControllerKind, ControllerSpec, TrajectoryLog,
};

pub const BANK_FILE: &str = "koopman_bank.txt";
pub const TRAIN_LOG_FILE: &str = "train_data.csv";
/// Frequency span of the spectrum figures in Hz.
pub const SPECTRUM_MAX_HZ: f64 = 12e3;

pub fn bank_path(out: &Path) -> PathBuf {
    out.join(BANK_FILE)
}

pub fn period_log_path(out: &Path, scenario: &str, kind: ControllerKind) -> PathBuf {
    out.join(format!("{scenario}_{kind}.csv"))
}

pub fn fine_log_path(out: &Path, scenario: &str, kind: ControllerKind) -> PathBuf {
    out.join(format!("{scenario}_{kind}_fine.csv"))
}

/// Generates the excitation run, fits one model per voltage vector, reports
/// holdout accuracy, and writes the model bank.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let training = cfg.training_config();
    let params = cfg.motor_params();
    let timing = cfg.sim_timing();
    println!(
        "training: {} s excitation at {} rpm, seed {}",
        training.duration, training.speed_rpm, training.seed
    );
    let log = generate_training_data(&training, &params, &timing)?;
    write_period_csv(&log, &out.join(TRAIN_LOG_FILE))?;

    let (observations, applied) = log.observations()?;
    let dictionary = cfg.dictionary()?;
    let (bank, holdout) = crate::koopman::train_with_holdout(
        &observations,
        &applied,
        dictionary,
        cfg.koopman.tolerance,
        cfg.training.min_pairs,
        cfg.training.train_fraction,
    )?;

    for (index, stats) in bank.stats.iter().enumerate() {
        println!(
            "fit: vector {index}: {} pairs, residual {:.3e}, rank {}",
            stats.pairs, stats.residual, stats.retained_rank
        );
        if stats.rank_deficient {
            println!(
                "warning: vector {index} snapshots are rank deficient; \
                 using the minimum-norm model"
            );
        }
    }
    for h in &holdout {
        println!(
            "holdout: vector {}: {} pairs, one-step rms i_d {:.4} A, i_q {:.4} A",
            h.vector_index, h.pairs, h.rms_i_d, h.rms_i_q
        );
    }

    let path = bank_path(out);
    bank.save(&path)?;
    println!("model bank written to {}", path.display());
    Ok(())
}

fn build_spec<'a>(
    kind: ControllerKind,
    section: &crate::config::ScenarioSection,
    bank: Option<&'a KoopmanModelBank>,
) -> Result<ControllerSpec<'a>> {
    Ok(match kind {
        ControllerKind::Foc => ControllerSpec::Foc,
        ControllerKind::WhiteboxMpc => ControllerSpec::WhiteboxMpc {
            horizon: section.horizon,
            compensate_delay: section.compensate_delay,
        },
        ControllerKind::KoopmanMpc => ControllerSpec::KoopmanMpc {
            bank: bank.expect("bank loaded before building a koopman controller"),
            horizon: section.horizon,
            compensate_delay: section.compensate_delay,
        },
    })
}

fn needs_bank(jobs: &[(usize, ControllerKind)]) -> bool {
    jobs.iter().any(|&(_, k)| k == ControllerKind::KoopmanMpc)
}

fn load_bank(out: &Path) -> Result<KoopmanModelBank> {
    KoopmanModelBank::load(&bank_path(out))
}

fn write_run_logs(log: &TrajectoryLog, out: &Path) -> Result<()> {
    write_period_csv(
        log,
        &period_log_path(out, &log.meta.scenario, log.meta.controller),
    )?;
    if log.fine.is_some() {
        write_fine_csv(
            log,
            &fine_log_path(out, &log.meta.scenario, log.meta.controller),
        )?;
    }
    Ok(())
}

/// Simulates one scenario with one controller and prints its metric row.
pub fn cmd_run(cfg: &RunConfig, out: &Path, scenario: &str, controller: &str) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let section = cfg.scenario(scenario)?;
    let kind = ControllerKind::parse(controller)?;
    let bank = if kind == ControllerKind::KoopmanMpc {
        Some(load_bank(out)?)
    } else {
        None
    };
    let spec = build_spec(kind, section, bank.as_ref())?;
    println!(
        "run: scenario {scenario} with {kind} ({} s at {} rpm)",
        section.duration, section.speed_rpm
    );
    let log = run_closed_loop(
        &section.to_scenario(),
        &cfg.motor_params(),
        &cfg.sim_timing(),
        &spec,
    )?;
    write_run_logs(&log, out)?;
    let row = analyze_run(&log)?;
    print_rows(std::slice::from_ref(&row));
    println!(
        "log written to {}",
        period_log_path(out, scenario, kind).display()
    );
    Ok(())
}

/// The scenario-controller matrix in configuration order.
fn job_list(cfg: &RunConfig) -> Result<Vec<(usize, ControllerKind)>> {
    let mut jobs = Vec::new();
    for (i, section) in cfg.scenario.iter().enumerate() {
        for kind in section.controller_kinds()? {
            jobs.push((i, kind));
        }
    }
    Ok(jobs)
}

/// Runs every configured scenario-controller pair, writes all logs, the
/// comparison tables, and the per-scenario figures.
pub fn cmd_compare(cfg: &RunConfig, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let jobs = job_list(cfg)?;
    let bank = if needs_bank(&jobs) {
        Some(load_bank(out)?)
    } else {
        None
    };
    let params = cfg.motor_params();
    let timing = cfg.sim_timing();

    println!(
        "compare: {} runs across {} scenarios",
        jobs.len(),
        cfg.scenario.len()
    );
    let logs: Vec<TrajectoryLog> = jobs
        .par_iter()
        .map(|&(si, kind)| {
            let section = &cfg.scenario[si];
            let spec = build_spec(kind, section, bank.as_ref())?;
            run_closed_loop(&section.to_scenario(), &params, &timing, &spec)
        })
        .collect::<Result<_>>()?;

    for log in &logs {
        write_run_logs(log, out)?;
    }
    finish_report(cfg, out, &logs)
}

/// Recomputes every metric and figure from the CSV logs already on disk,
/// without re-simulating. Outputs are byte-identical to `compare`'s.
pub fn cmd_report(cfg: &RunConfig, out: &Path) -> Result<()> {
    let jobs = job_list(cfg)?;
    let mut logs = Vec::with_capacity(jobs.len());
    for &(si, kind) in &jobs {
        let scenario = &cfg.scenario[si].name;
        let path = period_log_path(out, scenario, kind);
        if !path.exists() {
            return Err(Error::Config(format!(
                "missing log {} - run `kdrive compare` first",
                path.display()
            )));
        }
        let mut log = read_period_csv(&path)?;
        let fine_path = fine_log_path(out, scenario, kind);
        if fine_path.exists() {
            log.fine = Some(read_fine_csv(&fine_path)?);
        }
        logs.push(log);
    }
    println!(
        "report: {} logs re-analyzed from {}",
        logs.len(),
        out.display()
    );
    finish_report(cfg, out, &logs)
}

/// Shared tail of `compare` and `report`: metric rows, tables, figures.
fn finish_report(cfg: &RunConfig, out: &Path, logs: &[TrajectoryLog]) -> Result<()> {
    let rows: Vec<ReportRow> = logs.iter().map(analyze_run).collect::<Result<_>>()?;
    let (csv_path, _) = emit_report(&rows, out)?;
    print_rows(&rows);

    for section in &cfg.scenario {
        let scenario_logs: Vec<&TrajectoryLog> = logs
            .iter()
            .filter(|l| l.meta.scenario == section.name)
            .collect();
        if scenario_logs.is_empty() {
            continue;
        }
        write_timeseries_svg(
            &section.name,
            &scenario_logs,
            &out.join(format!("{}_timeseries.svg", section.name)),
        )?;
        let mut spectra: Vec<(String, Spectrum)> = Vec::new();
        for log in &scenario_logs {
            if log.fine.is_some() {
                spectra.push((log.meta.controller.to_string(), steady_spectrum(log)?));
            }
        }
        if !spectra.is_empty() {
            write_spectrum_svg(
                &section.name,
                &spectra,
                SPECTRUM_MAX_HZ,
                &out.join(format!("{}_spectrum.svg", section.name)),
            )?;
        }
    }
    println!("report written to {}", csv_path.display());
    Ok(())
}

fn print_rows(rows: &[ReportRow]) {
    let dash = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$}"));
    println!(
        "{:<22} {:<14} {:>7} {:>8} {:>8} {:>8} {:>9} {:>8} {:>8} {:>10}",
        "scenario",
        "controller",
        "rpm",
        "id_ref",
        "iq_ref",
        "thd_pct",
        "dev_A",
        "fsw_Hz",
        "rise_ms",
        "settle_ms"
    );
    for row in rows {
        println!(
            "{:<22} {:<14} {:>7} {:>8} {:>8} {:>8} {:>9} {:>8} {:>8} {:>10}",
            row.scenario,
            row.controller.to_string(),
            row.speed_rpm,
            row.id_ref,
            row.iq_ref,
            dash(row.thd_pct, 3),
            dash(row.setpoint_dev_a, 4),
            dash(row.fsw_avg_hz, 0),
            dash(row.rise_ms, 3),
            dash(row.settle_ms, 3),
        );
    }
}
