//! End-to-end pipeline checks on the default scenario matrix: report
//! coverage, carrier tracking by the field-oriented baseline, cross-predictor
//! decision agreement, rank-deficiency handling, and artifact reproducibility.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::OnceLock;

use koopman_drive::analysis::{analyze_run, ReportRow, REPORT_HEADER};
use koopman_drive::commands::{bank_path, cmd_compare, cmd_train, fine_log_path, period_log_path};
use koopman_drive::config::RunConfig;
use koopman_drive::drive::{DqState, ElectricalAngle, OperatingCondition, SwitchState};
use koopman_drive::koopman::{train_with_holdout, KoopmanModelBank, Observation};
use koopman_drive::mpc::{control_step, PredictionModel, Reference};
use koopman_drive::sim::{
    generate_training_data, read_fine_csv, read_period_csv, ControllerKind, TrajectoryLog,
};

struct Fixture {
    _dir: tempfile::TempDir,
    out: PathBuf,
    cfg: RunConfig,
    logs: Vec<TrajectoryLog>,
    rows: Vec<ReportRow>,
}

static FIXTURE: OnceLock<Fixture> = OnceLock::new();

fn fixture() -> &'static Fixture {
    FIXTURE.get_or_init(|| {
        let cfg = RunConfig::default();
        let dir = tempfile::tempdir().expect("tempdir");
        let out = dir.path().to_path_buf();
        cmd_train(&cfg, &out).expect("train");
        cmd_compare(&cfg, &out).expect("compare");
        let mut logs = Vec::new();
        for section in &cfg.scenario {
            for kind in section.controller_kinds().expect("controllers") {
                let mut log = read_period_csv(&period_log_path(&out, &section.name, kind))
                    .expect("period log");
                let fine = fine_log_path(&out, &section.name, kind);
                if fine.exists() {
                    log.fine = Some(read_fine_csv(&fine).expect("fine log"));
                }
                logs.push(log);
            }
        }
        let rows = logs
            .iter()
            .map(|l| analyze_run(l).expect("analyze"))
            .collect();
        Fixture {
            _dir: dir,
            out,
            cfg,
            logs,
            rows,
        }
    })
}

fn the_log<'a>(f: &'a Fixture, scenario: &str, kind: ControllerKind) -> &'a TrajectoryLog {
    f.logs
        .iter()
        .find(|l| l.meta.scenario == scenario && l.meta.controller == kind)
        .unwrap_or_else(|| panic!("no log for {scenario}/{kind}"))
}

fn the_row<'a>(f: &'a Fixture, scenario: &str, kind: ControllerKind) -> &'a ReportRow {
    f.rows
        .iter()
        .find(|r| r.scenario == scenario && r.controller == kind)
        .unwrap_or_else(|| panic!("no row for {scenario}/{kind}"))
}

#[test]
fn report_covers_all_operating_points() {
    let f = fixture();
    let csv = std::fs::read_to_string(f.out.join("compare.csv")).expect("compare.csv");
    let mut lines = csv.lines();
    assert_eq!(lines.next().expect("header"), REPORT_HEADER);
    let data: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(data.len(), 10, "4 scenarios x their controllers");

    let speeds: BTreeSet<&str> = data.iter().map(|r| r[1]).collect();
    let expected: BTreeSet<&str> = ["100", "1000", "2500"].into_iter().collect();
    assert_eq!(speeds, expected, "all three operating speeds reported");

    let count = |name: &str| data.iter().filter(|r| r[0] == name).count();
    assert_eq!(count("foc"), 2, "baseline runs only where it is scheduled");
    assert_eq!(count("whitebox-mpc"), 4);
    assert_eq!(count("koopman-mpc"), 4);
}

#[test]
fn foc_switching_frequency_tracks_carrier() {
    let f = fixture();
    // Carrier = 1 / (T_s * oversampling): 3333.3 Hz in the small-signal run
    // (x6), 4 kHz in the nominal run (x5). Every vertex flips each leg once,
    // so the average switching frequency equals the carrier frequency.
    for (scenario, carrier) in [
        ("small_signal_1000", 10_000.0 / 3.0),
        ("nominal_1000", 4_000.0),
    ] {
        let row = the_row(f, scenario, ControllerKind::Foc);
        let fsw = row.fsw_avg_hz.expect("fine log present for foc scenarios");
        assert!(
            (fsw - carrier).abs() <= 0.01 * carrier,
            "{scenario}: fsw {fsw:.1} Hz not within 1% of carrier {carrier:.1} Hz"
        );
    }
}

#[test]
fn predictors_agree_on_most_decisions_at_training_speed() {
    let f = fixture();
    let log = the_log(f, "nominal_1000", ControllerKind::WhiteboxMpc);
    let section = f.cfg.scenario("nominal_1000").expect("scenario");
    let bank = KoopmanModelBank::load(&bank_path(&f.out)).expect("bank");

    let params = f.cfg.motor_params();
    let cond = OperatingCondition::from_rpm(log.meta.speed_rpm, params.pole_pairs, log.meta.u_dc);
    let white = PredictionModel::WhiteBox {
        params,
        cond,
        t_s: log.meta.t_s,
    };
    let koopman = PredictionModel::Koopman { bank: &bank };

    let mut total = 0usize;
    let mut agree = 0usize;
    for rec in &log.periods {
        let (Some(applied), Some(switch), Some(commanded)) =
            (rec.applied_vector, rec.switch_state, rec.commanded_vector)
        else {
            continue;
        };
        let obs = Observation::new(
            DqState {
                i_d: rec.i_d,
                i_q: rec.i_q,
            },
            ElectricalAngle::new(rec.eps_el),
        );
        let reference = Reference {
            i_d: rec.id_ref,
            i_q: rec.iq_ref,
        };
        let replay = control_step(
            &white,
            &obs,
            reference,
            section.horizon,
            applied,
            switch,
            section.compensate_delay,
        );
        assert_eq!(
            replay.vector_index, commanded,
            "white-box replay must reproduce the logged command at t={}",
            rec.time
        );
        let cross = control_step(
            &koopman,
            &obs,
            reference,
            section.horizon,
            applied,
            switch,
            section.compensate_delay,
        );
        agree += usize::from(cross.vector_index == replay.vector_index);
        total += 1;
    }
    let fraction = agree as f64 / total as f64;
    println!("decision agreement: {agree}/{total} = {fraction:.3}");
    assert!(
        fraction >= 0.90,
        "predictors agree on {agree}/{total} = {fraction:.3} of decisions, need >= 0.90"
    );
}

#[test]
fn coarse_tolerance_flags_rank_deficiency_but_stays_usable() {
    let f = fixture();
    let mut training = f.cfg.training_config();
    training.duration = 0.05;
    let log = generate_training_data(&training, &f.cfg.motor_params(), &f.cfg.sim_timing())
        .expect("training data");
    let (observations, applied) = log.observations().expect("observations");

    // Currents dwarf the bounded angle coordinates, so a 0.5 relative cut
    // drops singular directions and every fit reports the truncation.
    let dict = f.cfg.dictionary().expect("dictionary");
    let (bank, holdout) =
        train_with_holdout(&observations, &applied, dict, 0.5, 10, 0.8).expect("train");
    assert!(bank.stats.iter().all(|s| s.rank_deficient));
    assert!(bank.stats.iter().all(|s| s.retained_rank < 4));

    // Predictions stay finite: a degraded bank must not poison the search.
    let model = PredictionModel::Koopman { bank: &bank };
    let decision = control_step(
        &model,
        &observations[0],
        Reference {
            i_d: -25.0,
            i_q: 25.0,
        },
        3,
        0,
        SwitchState::ALL_LOW,
        true,
    );
    assert!(decision.cost.is_finite());
    assert!(holdout
        .iter()
        .all(|h| h.rms_i_d.is_finite() && h.rms_i_q.is_finite()));
}

#[test]
fn same_seed_reproduces_identical_training_artifacts() {
    let cfg = RunConfig::default();
    let dirs = [
        tempfile::tempdir().expect("d1"),
        tempfile::tempdir().expect("d2"),
    ];
    for dir in &dirs {
        cmd_train(&cfg, dir.path()).expect("train");
    }
    for file in ["koopman_bank.txt", "train_data.csv"] {
        let a = std::fs::read(dirs[0].path().join(file)).expect(file);
        let b = std::fs::read(dirs[1].path().join(file)).expect(file);
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    // The bank survives a parse round-trip byte-for-byte.
    let bank = KoopmanModelBank::load(&bank_path(dirs[0].path())).expect("load");
    let raw = std::fs::read_to_string(dirs[0].path().join("koopman_bank.txt")).expect("read");
    assert_eq!(bank.to_text(), raw);
}
