mod common;

use neve::controller::{replay_neve, ControllerConfig, Verdict};
use neve::experiment::{
    parse_run_csv, records_to_csv, run_suite, run_training, write_run_outputs, ExperimentConfig,
    RunStatus, SchedulerSpec, CSV_HEADER,
};

fn quick_blobs() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::blobs_default();
    cfg.dataset.n = Some(400);
    cfg.dataset.test_n = Some(200);
    cfg.batch_size = 64;
    cfg.max_epochs = 40;
    cfg
}

fn strip_wall(csv: &str) -> Vec<String> {
    csv.lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect()
}

#[test]
fn same_config_and_seed_give_identical_csv() {
    let cfg = quick_blobs();
    let data = cfg.prepare_data().unwrap();
    let a = run_training(&cfg, &data, 3, None).unwrap();
    let b = run_training(&cfg, &data, 3, None).unwrap();
    assert_eq!(
        strip_wall(&records_to_csv(&a.records)),
        strip_wall(&records_to_csv(&b.records))
    );
}

#[test]
fn neve_run_ends_in_stop_below_eps() {
    let cfg = quick_blobs();
    let data = cfg.prepare_data().unwrap();
    let o = run_training(&cfg, &data, 0, None).unwrap();
    let last = o.last().unwrap();
    assert_eq!(last.decision, Verdict::Stop);
    assert!(last.model_velocity.unwrap() < 1e-3);
    assert!(matches!(o.status, RunStatus::Stopped(e) if e == last.epoch));
    // epochs contiguous from 1, a single terminal record
    for (i, r) in o.records.iter().enumerate() {
        assert_eq!(r.epoch, i + 1);
    }
    let stops = o
        .records
        .iter()
        .filter(|r| r.decision == Verdict::Stop)
        .count();
    assert_eq!(stops, 1);
}

#[test]
fn fixed_scheduler_keeps_lr_constant() {
    let mut cfg = quick_blobs();
    cfg.scheduler = SchedulerSpec::Fixed;
    cfg.max_epochs = 5;
    let data = cfg.prepare_data().unwrap();
    let o = run_training(&cfg, &data, 0, None).unwrap();
    assert_eq!(o.records.len(), 5);
    assert!(o.records.iter().all(|r| r.learning_rate == 0.1));
    assert_eq!(o.status, RunStatus::Exhausted);
    assert_eq!(o.last().unwrap().decision, Verdict::Continue);
}

#[test]
fn lr_column_follows_rescale_count() {
    let mut cfg = quick_blobs();
    // loose plateau test so rescales actually happen
    let nc = ControllerConfig {
        plateau_rel_span: 0.9,
        patience: 2,
        eps: 1e-6,
        ..Default::default()
    };
    cfg.scheduler = SchedulerSpec::Neve(nc.clone());
    cfg.max_epochs = 20;
    let data = cfg.prepare_data().unwrap();
    let o = run_training(&cfg, &data, 1, None).unwrap();
    let mut k = 0;
    for r in &o.records {
        if matches!(r.decision, Verdict::RescaleLr(_)) {
            k += 1;
        }
        assert_eq!(r.learning_rate, 0.1f64 * 0.1f64.powi(k));
    }
    assert!(k >= 1, "no rescale happened");
    // the recorded velocities replay to the same decisions
    let v: Vec<f64> = o
        .records
        .iter()
        .map(|r| r.model_velocity.unwrap())
        .collect();
    let replay = replay_neve(&v, &nc, 0.1).unwrap();
    let got: Vec<Verdict> = o.records.iter().map(|r| r.decision).collect();
    let want: Vec<Verdict> = replay.iter().map(|d| d.verdict).collect();
    assert_eq!(got, want);
}

#[test]
fn csv_has_header_rows_and_empty_val_column() {
    let mut cfg = quick_blobs();
    cfg.scheduler = SchedulerSpec::Fixed;
    cfg.max_epochs = 3;
    let data = cfg.prepare_data().unwrap();
    let o = run_training(&cfg, &data, 0, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_outputs(dir.path(), &o).unwrap();
    let text = std::fs::read_to_string(dir.path().join("run_seed0.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], CSV_HEADER);
    assert!(lines[1].split(',').nth(5).unwrap().is_empty());
    let rows = parse_run_csv(&dir.path().join("run_seed0.csv")).unwrap();
    assert!(rows.iter().all(|r| r.val_loss.is_none()));
}

#[test]
fn stop_marker_is_drawn_at_stop_epoch() {
    let cfg = quick_blobs();
    let data = cfg.prepare_data().unwrap();
    let o = run_training(&cfg, &data, 0, None).unwrap();
    let e = o.stop_epoch().unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_run_outputs(dir.path(), &o).unwrap();
    for f in ["velocity_seed0.svg", "loss_seed0.svg"] {
        let svg = std::fs::read_to_string(dir.path().join(f)).unwrap();
        assert!(svg.contains(&format!("stop @ {e}")), "{f}");
        assert!(svg.contains(">epoch<"));
    }
}

#[test]
fn validation_split_fills_val_loss() {
    let mut cfg = quick_blobs();
    cfg.dataset.validation_fraction = 0.25;
    cfg.scheduler = SchedulerSpec::Vloss {
        patience: 2,
        factor: 0.1,
        stop_patience: 4,
    };
    let data = cfg.prepare_data().unwrap();
    assert_eq!(data.train.len(), 300);
    let o = run_training(&cfg, &data, 0, None).unwrap();
    assert!(o.records.iter().all(|r| r.val_loss.is_some()));
    for w in o.records.windows(2) {
        assert!(w[1].learning_rate <= w[0].learning_rate);
    }
}

#[test]
fn numeric_blowup_marks_run_failed_and_keeps_records() {
    let mut cfg = quick_blobs();
    cfg.scheduler = SchedulerSpec::Fixed;
    cfg.optimizer.lr = 1e6;
    cfg.optimizer.kind = neve::nn::OptimizerKind::Sgd { momentum: 0.0 };
    cfg.max_epochs = 50;
    let data = cfg.prepare_data().unwrap();
    let o = run_training(&cfg, &data, 0, None).unwrap();
    assert!(o.failed(), "{:?}", o.status);
    assert!(o.records.len() < 50);
}

#[test]
fn suite_statistics_and_empty_seed_list() {
    let mut cfg = quick_blobs();
    cfg.seeds = vec![0, 1, 2];
    let data = cfg.prepare_data().unwrap();
    let s = run_suite(&cfg, &data).unwrap();
    assert_eq!(s.outcomes.len(), 3);
    let accs: Vec<f64> = s
        .outcomes
        .iter()
        .map(|o| o.last().unwrap().test_acc)
        .collect();
    let mean = accs.iter().sum::<f64>() / 3.0;
    assert!((s.test_acc.mean - mean).abs() < 1e-15);

    cfg.seeds = vec![5];
    let one = run_suite(&cfg, &data).unwrap();
    assert_eq!(one.test_acc.std, 0.0);

    cfg.seeds.clear();
    assert!(run_suite(&cfg, &data)
        .unwrap_err()
        .to_string()
        .contains("seeds"));
}

#[test]
fn mean_std_arithmetic_example() {
    let m = neve::experiment::MeanStd::of(&[0.90, 0.92, 0.94]);
    assert!((m.mean - 0.92).abs() < 1e-12);
    assert!((m.std - 0.016330).abs() < 1e-5);
}

#[test]
fn aux_set_is_frozen_during_a_run() {
    let cfg = quick_blobs();
    let data = cfg.prepare_data().unwrap();
    let mut t = neve::experiment::Trainer::new(&cfg, &data, 0).unwrap();
    let before: Vec<u64> = t.aux_sets().map(|a| a.fingerprint()).collect();
    for _ in 0..3 {
        t.step().unwrap();
        let now: Vec<u64> = t.aux_sets().map(|a| a.fingerprint()).collect();
        assert_eq!(now, before);
    }
}

#[test]
fn multi_source_velocity_is_recorded() {
    let mut cfg = quick_blobs();
    cfg.dataset.validation_fraction = 0.2;
    cfg.aux.sources = vec![
        neve::data::AuxSource::GaussianNoise,
        neve::data::AuxSource::HeldoutValidation,
        neve::data::AuxSource::Train,
    ];
    cfg.max_epochs = 4;
    let data = cfg.prepare_data().unwrap();
    let o = run_training(&cfg, &data, 0, None).unwrap();
    for r in &o.records {
        assert_eq!(r.source_velocity.len(), 3);
        assert_eq!(r.model_velocity, Some(r.source_velocity[0].1));
    }
}

#[test]
fn neuron_dump_writes_one_file_per_epoch() {
    let mut cfg = quick_blobs();
    cfg.max_epochs = 3;
    cfg.scheduler = SchedulerSpec::Fixed;
    let data = cfg.prepare_data().unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_training(&cfg, &data, 0, Some(dir.path())).unwrap();
    let text = std::fs::read_to_string(dir.path().join("neurons_seed0_epoch3.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "neuron,layer,rho,velocity");
    // 64 + 64 hidden units and 4 outputs
    assert_eq!(text.lines().count(), 1 + 64 + 64 + 4);
}
