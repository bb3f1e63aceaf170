use mtdistill::datastore::{EmbeddingDataset, TeacherView};
use mtdistill::kernels::LossKind;
use mtdistill::numkit::{Matrix, Parameters};
use mtdistill::rng;
use mtdistill::trainer::{
    checkpoint_roundtrip, eval_loss, initial_checkpoint, resume_distill, timing_report, train_distill,
    train_distill_with, training_rows, validation_rows, Checkpoint, TrainConfig,
};
use mtdistill::Error;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng::stream(seed, 0);
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut r))
}

/// One teacher that is an exact linear function of the base features.
fn realizable(n: usize) -> EmbeddingDataset {
    let x = gaussian(n, 5, 1);
    let a = gaussian(5, 3, 2);
    let t = x.matmul(&a).unwrap();
    EmbeddingDataset::new(
        x,
        vec![TeacherView {
            name: "linear".into(),
            embeddings: t,
        }],
        None,
    )
    .unwrap()
}

fn linear_config() -> TrainConfig {
    TrainConfig {
        seed: 3,
        epochs: 50,
        batch_size: 32,
        lr: 1e-2,
        student_hidden: vec![],
        student_dim: 5,
        head_depth: 1,
        head_hidden: 8,
        ..TrainConfig::default()
    }
}

fn small_config(loss: LossKind) -> TrainConfig {
    TrainConfig {
        seed: 11,
        epochs: 4,
        batch_size: 16,
        lr: 3e-3,
        loss,
        student_hidden: vec![12],
        student_dim: 6,
        head_depth: 2,
        head_hidden: 8,
        ..TrainConfig::default()
    }
}

fn two_teachers() -> EmbeddingDataset {
    let x = gaussian(120, 4, 5);
    let t1 = x.matmul(&gaussian(4, 3, 6)).unwrap().map(f64::tanh);
    let t2 = gaussian(120, 6, 7);
    EmbeddingDataset::new(
        x,
        vec![
            TeacherView {
                name: "a".into(),
                embeddings: t1,
            },
            TeacherView {
                name: "b".into(),
                embeddings: t2,
            },
        ],
        None,
    )
    .unwrap()
}

#[test]
fn realizable_teacher_entropy_halves() {
    let data = realizable(400);
    let cfg = linear_config();
    let ckpt = train_distill(&cfg, &data).unwrap();
    let val = validation_rows(&cfg, data.n()).unwrap();
    let h0 = eval_loss(&initial_checkpoint(&cfg, &data).unwrap(), &data, &val).unwrap().loss;
    let h = ckpt.history.last().unwrap().val_loss;
    assert!(h0 - h > 0.5 * h0.abs(), "initial {h0}, final {h}");
    assert_eq!(ckpt.history.len(), 50);
    assert!(ckpt.history[49].train_loss < ckpt.history[0].train_loss);
}

#[test]
fn trained_beats_random_on_train_rows() {
    let data = realizable(200);
    let cfg = TrainConfig { epochs: 10, ..linear_config() };
    let rows = training_rows(&cfg, data.n()).unwrap();
    let trained = train_distill(&cfg, &data).unwrap();
    let random = initial_checkpoint(&cfg, &data).unwrap();
    let a = eval_loss(&trained, &data, &rows).unwrap();
    let b = eval_loss(&random, &data, &rows).unwrap();
    assert!(a.loss <= b.loss);
    assert!(a.bound.is_some());
}

#[test]
fn zero_learning_rate_is_a_no_op() {
    let data = two_teachers();
    let cfg = TrainConfig { lr: 0.0, ..small_config(LossKind::Nll) };
    let init = initial_checkpoint(&cfg, &data).unwrap();
    let done = train_distill(&cfg, &data).unwrap();
    assert_eq!(init.model, done.model);
    let first = done.history[0].val_loss;
    assert!(done.history.iter().all(|r| r.val_loss == first));
}

#[test]
fn runs_are_deterministic() {
    let data = two_teachers();
    for loss in [LossKind::Nll, LossKind::Mse, LossKind::Cosine { eps: 1e-8 }] {
        let cfg = small_config(loss);
        let a = train_distill(&cfg, &data).unwrap();
        let b = train_distill(&cfg, &data).unwrap();
        assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
        assert_eq!(a.history_csv(), b.history_csv());
    }
}

#[test]
fn one_step_moves_student_and_heads() {
    let data = two_teachers();
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 1000,
        ..small_config(LossKind::Nll)
    };
    let init = initial_checkpoint(&cfg, &data).unwrap();
    let done = train_distill(&cfg, &data).unwrap();
    assert_eq!(done.student_opt.step, 1);
    assert_ne!(init.model.student.flatten(), done.model.student.flatten());
    for (a, b) in init.model.heads.params().iter().zip(done.model.heads.params()) {
        assert_ne!(a.flatten(), b.flatten());
    }
}

#[test]
fn checkpoint_roundtrip_is_exact() {
    let data = two_teachers();
    let dir = tempfile::tempdir().unwrap();
    for loss in [LossKind::Nll, LossKind::Mse] {
        let ckpt = train_distill(&small_config(loss), &data).unwrap();
        let back = checkpoint_roundtrip(&ckpt, dir.path().join("c.mtck")).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.config_hash, ckpt.config.hash());
    }
}

#[test]
fn edited_hash_is_stale() {
    let data = two_teachers();
    let ckpt = train_distill(&small_config(LossKind::Nll), &data).unwrap();
    let mut bytes = ckpt.to_bytes().unwrap();
    bytes[10] ^= 0xff;
    let err = Checkpoint::from_bytes(&bytes, "x.mtck".as_ref()).unwrap_err();
    assert!(matches!(err, Error::StaleCheckpoint { .. }), "{err}");
    let mut bytes = ckpt.to_bytes().unwrap();
    bytes[4] = 9;
    let err = Checkpoint::from_bytes(&bytes, "x.mtck".as_ref()).unwrap_err();
    assert!(matches!(err, Error::StaleCheckpoint { .. }));
    let bytes = ckpt.to_bytes().unwrap();
    assert!(matches!(
        Checkpoint::from_bytes(&bytes[..bytes.len() - 3], "x.mtck".as_ref()),
        Err(Error::Truncated { .. })
    ));
}

#[test]
fn resume_matches_uninterrupted_run() {
    let data = two_teachers();
    let dir = tempfile::tempdir().unwrap();
    let full = train_distill(&TrainConfig { epochs: 6, ..small_config(LossKind::Nll) }, &data).unwrap();
    let half = train_distill(&TrainConfig { epochs: 3, ..small_config(LossKind::Nll) }, &data).unwrap();
    let half = checkpoint_roundtrip(&half, dir.path().join("half.mtck")).unwrap();
    let resumed = resume_distill(half, &data, 6, &mut |_| Ok(())).unwrap();
    assert_eq!(resumed.history_csv(), full.history_csv());
    assert_eq!(resumed.to_bytes().unwrap(), full.to_bytes().unwrap());
}

#[test]
fn periodic_checkpoints_are_emitted() {
    let data = two_teachers();
    let cfg = TrainConfig {
        checkpoint_every: 2,
        epochs: 5,
        ..small_config(LossKind::Mse)
    };
    let mut seen = Vec::new();
    train_distill_with(&cfg, &data, &mut |c| {
        seen.push(c.epoch);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![2, 4]);
}

#[test]
fn divergence_keeps_the_last_finite_state() {
    let data = two_teachers();
    let cfg = TrainConfig {
        lr: 1e200,
        epochs: 20,
        ..small_config(LossKind::Mse)
    };
    match train_distill(&cfg, &data) {
        Err(Error::Diverged { epoch, last_finite }) => {
            assert_eq!(last_finite.epoch + 1, epoch);
            assert!(last_finite.history.iter().all(|r| r.train_loss.is_finite()));
        }
        other => panic!("expected divergence, got {:?}", other.map(|c| c.epoch)),
    }
}

#[test]
fn identical_teachers_have_identical_entropy() {
    let base = two_teachers();
    let t = base.teachers[0].embeddings.clone();
    let data = EmbeddingDataset::new(
        base.base.clone(),
        (0..3)
            .map(|k| TeacherView {
                name: format!("copy{k}"),
                embeddings: t.clone(),
            })
            .collect(),
        None,
    )
    .unwrap();
    let mut cfg = small_config(LossKind::Nll);
    cfg.lr = 0.0;
    let mut ckpt = initial_checkpoint(&cfg, &data).unwrap();
    if let mtdistill::trainer::Heads::Gaussian(h) = &mut ckpt.model.heads {
        let first = h[0].mlp.clone();
        for head in h.iter_mut() {
            head.mlp = first.clone();
        }
    }
    let rows: Vec<usize> = (0..data.n()).collect();
    let a = eval_loss(&ckpt, &data, &rows).unwrap();
    let b = eval_loss(&ckpt, &data, &rows).unwrap();
    assert_eq!(a, b);
    for h in &a.per_teacher.per_teacher {
        assert!((h - a.per_teacher.per_teacher[0]).abs() < 1e-12);
    }
}

#[test]
fn rejects_bad_inputs() {
    let data = two_teachers();
    let ckpt = train_distill(&small_config(LossKind::Nll), &data).unwrap();
    assert!(eval_loss(&ckpt, &data, &[data.n()]).is_err());
    assert!(resume_distill(ckpt, &data, 1, &mut |_| Ok(())).is_err());
    let mut bad = small_config(LossKind::Nll);
    bad.epochs = 0;
    assert!(train_distill(&bad, &data).is_err());
}

#[test]
fn timing_reports_a_fit() {
    let x = gaussian(64, 4, 9);
    let teachers = (0..3)
        .map(|k| TeacherView {
            name: format!("t{k}"),
            embeddings: gaussian(64, 8, 20 + k),
        })
        .collect();
    let data = EmbeddingDataset::new(x, teachers, None).unwrap();
    let cfg = small_config(LossKind::Nll);
    let report = timing_report(&cfg, &data, &[1, 2, 3], 100).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.fit.residual_rms.is_finite());
    assert!(report.to_csv().lines().count() == 4);
    assert!(timing_report(&cfg, &data, &[1, 2], 10).is_err());
    assert!(timing_report(&cfg, &data, &[1, 4], 100).is_err());
}
