//! Training-loop contracts: update schedule, scoring cadence, checkpoint
//! selection and the large-λ1 limit of the adversarial objective.

mod common;

use chanpred_core::dataset::NormalizationStats;
use chanpred_cpcgan::train::TensorSet;
use chanpred_cpcgan::{train, CnnLoss, CpcganError, LogRecord, Method, TrainConfig, Trainer};
use common::eva_samples;

fn micro_cfg(seed: u64) -> TrainConfig {
    TrainConfig {
        n_base: 2,
        batch_size: 2,
        epochs: 1,
        seed,
        ..TrainConfig::default()
    }
}

#[test]
fn large_lambda1_follows_the_l1_trained_cnn() {
    let samples = eva_samples(40, 11);
    let stats = NormalizationStats::fit_samples(&samples).unwrap();
    let set = TensorSet::new(&samples, &stats).unwrap();
    let cfg = TrainConfig {
        n_base: 4,
        lambda1: 1e6,
        seed: 12,
        ..TrainConfig::default()
    };
    let mut gan = Trainer::new(Method::Cpcgan, &cfg, set.dims).unwrap();
    let mut cnn = Trainer::new(Method::Cnn { loss: CnnLoss::L1 }, &cfg, set.dims).unwrap();
    // Adam is invariant to loss scale except through ε. The L1 gradients of
    // deep layers are of order ε, so the CNN gets the ε that the λ1-scaled
    // objective effectively sees.
    cnn.adam_g.config.eps /= cfg.lambda1;
    let start = gan.generator.store.flat_values();
    assert_eq!(start, cnn.generator.store.flat_values(), "same seed must give the same generator");

    // Five batches with two generator steps each against the same batch fed
    // twice to the CNN: ten Adam steps on both sides.
    for b in 0..5 {
        let idx: Vec<usize> = (8 * b..8 * b + 8).collect();
        let (ul, dl) = set.batch(&idx);
        gan.train_batch(&ul, &dl).unwrap();
        for _ in 0..2 {
            cnn.cnn_step(&ul, &dl, CnnLoss::L1).unwrap();
        }
    }
    assert_eq!(gan.adam_g.step_count(), 10);
    assert_eq!(cnn.adam_g.step_count(), 10);

    let (a, b) = (gan.generator.store.flat_values(), cnn.generator.store.flat_values());
    let mut diff = 0.0;
    let mut norm = 0.0;
    for i in 0..start.len() {
        let (da, db) = (a[i] - start[i], b[i] - start[i]);
        diff += (da - db) * (da - db);
        norm += db * db;
    }
    let rel = (diff / norm).sqrt();
    assert!(norm > 0.0);
    assert!(rel < 0.01, "relative parameter-delta gap {rel}");
}

#[test]
fn scoring_happens_exactly_every_interval_with_two_generator_steps_per_batch() {
    let samples = eva_samples(70, 21);
    let (tr, val) = samples.split_at(60);
    let cfg = TrainConfig {
        epochs: 9,
        max_batches: Some(250),
        ..micro_cfg(3)
    };
    let out = train(tr, val, &cfg, Method::Cpcgan, None).unwrap();
    assert_eq!(out.batches, 250);

    let mut batches = 0u64;
    let mut scored = Vec::new();
    for rec in &out.log {
        match rec {
            LogRecord::Batch {
                counter,
                d_adam_steps,
                g_adam_steps,
                d_loss,
                l1_term,
                ..
            } => {
                batches += 1;
                assert_eq!(*counter, batches);
                assert_eq!(*d_adam_steps, batches);
                assert_eq!(*g_adam_steps, 2 * d_adam_steps);
                assert!(d_loss.is_some() && l1_term.is_some());
            }
            LogRecord::Score { counter, criterion, .. } => {
                // A scoring record directly follows the batch it scores.
                assert_eq!(*counter, batches);
                assert_eq!(criterion, "cp_error");
                scored.push(*counter);
            }
        }
    }
    assert_eq!(scored, vec![100, 200]);
    assert_eq!(out.scores.iter().map(|s| s.counter).collect::<Vec<_>>(), scored);
    assert_eq!(out.best.counter % 100, 0);
}

#[test]
fn cnn_selection_records_nmse_h() {
    let samples = eva_samples(30, 22);
    let (tr, val) = samples.split_at(20);
    let cfg = TrainConfig {
        val_interval_batches: 5,
        epochs: 2,
        ..micro_cfg(4)
    };
    let out = train(tr, val, &cfg, Method::CNN, None).unwrap();
    assert_eq!(out.best.criterion, "nmse_h");
    assert!(out.best.discriminator.is_none());
    for rec in &out.log {
        match rec {
            LogRecord::Score { criterion, score, nmse_h, .. } => {
                assert_eq!(criterion, "nmse_h");
                assert_eq!(score, nmse_h);
            }
            LogRecord::Batch { d_loss, d_adam_steps, .. } => {
                assert!(d_loss.is_none());
                assert_eq!(*d_adam_steps, 0);
            }
        }
    }
}

#[test]
fn micro_run_selects_the_global_minimum() {
    let samples = eva_samples(250, 23);
    let (tr, val) = samples.split_at(200);
    let cfg = TrainConfig {
        n_base: 8,
        epochs: 2,
        val_interval_batches: 2,
        seed: 5,
        ..TrainConfig::default()
    };
    let out = train(tr, val, &cfg, Method::Cpcgan, None).unwrap();
    assert_eq!(out.scores.len(), 7);
    let min = out.scores.iter().map(|s| s.score).fold(f64::INFINITY, f64::min);
    assert_eq!(out.best.score, min);
    assert!(out.best.score <= out.scores[0].score);
    let first_min = out.scores.iter().find(|s| s.score == min).unwrap();
    assert_eq!(out.best.counter, first_min.counter);
    assert_eq!(out.best.metrics.unwrap().cp_error, min);
}

#[test]
fn run_shorter_than_one_interval_has_nothing_to_select() {
    let samples = eva_samples(12, 24);
    let (tr, val) = samples.split_at(8);
    let err = train(tr, val, &micro_cfg(6), Method::Cpcgan, None).unwrap_err();
    assert!(matches!(err, CpcganError::NoScoredCheckpoint { interval: 100, ran: 4 }), "{err}");
}

#[test]
fn log_sink_receives_one_json_line_per_record() {
    let samples = eva_samples(14, 25);
    let (tr, val) = samples.split_at(10);
    let cfg = TrainConfig {
        val_interval_batches: 5,
        ..micro_cfg(7)
    };
    let mut buf = Vec::new();
    let out = train(tr, val, &cfg, Method::Cpcgan, Some(&mut buf)).unwrap();
    let lines: Vec<LogRecord> = String::from_utf8(buf)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines, out.log);
}

#[test]
fn training_is_reproducible() {
    let samples = eva_samples(24, 26);
    let (tr, val) = samples.split_at(20);
    let cfg = TrainConfig {
        val_interval_batches: 5,
        epochs: 2,
        ..micro_cfg(8)
    };
    let a = train(tr, val, &cfg, Method::Cpcgan, None).unwrap();
    let b = train(tr, val, &cfg, Method::Cpcgan, None).unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.best.generator.store.flat_values(), b.best.generator.store.flat_values());
}
