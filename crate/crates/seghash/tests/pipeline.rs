//! End-to-end pipeline runs on a small synthetic corpus.

mod common;

use seghash::error::Error;
use seghash::pipeline::{
    cmd_eval, cmd_generate, cmd_index, cmd_ingest, cmd_pretrain, cmd_train, Workspace,
};

#[test]
fn ingest_reports_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write_synth_corpus(dir.path(), 40, 1);
    let cfg = common::test_config(&corpus, &dir.path().join("ws"));

    let report = cmd_ingest(&cfg).unwrap();
    assert_eq!(report.songs_rejected, 0, "synthetic corpus must parse clean");
    let expected = common::synth_corpus(40, 1).retained_songs;
    assert_eq!(report.songs_retained, expected);
    assert!(report.windows_kept > 100);
    assert!(report.canonical_segments <= report.windows_kept);

    let ws = Workspace::new(&cfg.workspace);
    let first = std::fs::read(ws.store()).unwrap();
    let manifest = std::fs::read_to_string(ws.manifest()).unwrap();
    assert!(manifest.lines().count() >= 40);

    // Rerun: byte-identical primary outputs.
    let report2 = cmd_ingest(&cfg).unwrap();
    assert_eq!(report2.windows_kept, report.windows_kept);
    assert_eq!(std::fs::read(ws.store()).unwrap(), first);
}

#[test]
fn ingest_rejects_unusable_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("waltz.abc");
    std::fs::write(&corpus, "X:1\nT:Waltz\nM:3/4\nL:1/4\nK:C\nCDE|FGA|\n").unwrap();
    let cfg = common::test_config(&corpus, &dir.path().join("ws"));
    assert!(matches!(cmd_ingest(&cfg), Err(Error::Empty(_))));
}

#[test]
fn full_pipeline_small_scale() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write_synth_corpus(dir.path(), 40, 2);
    let mut cfg = common::test_config(&corpus, &dir.path().join("ws"));
    cfg.n_pieces = 2;
    cfg.n_continuations = 4;

    cmd_ingest(&cfg).unwrap();
    let pre = cmd_pretrain(&cfg).unwrap();
    assert_eq!(pre.losses.len(), cfg.pretrain_epochs);
    assert!(pre.checkpoint.exists());

    let train = cmd_train(&cfg).unwrap();
    assert_eq!(train.metrics.len(), cfg.epochs);
    for m in &train.metrics {
        assert!(m.train_loss.is_finite());
    }

    let index = cmd_index(&cfg).unwrap();
    assert!(index.entries > 0);

    let gen = cmd_generate(&cfg).unwrap();
    assert_eq!(gen.pieces.len(), 2);
    for p in &gen.pieces {
        assert_eq!(p.segments, cfg.n_continuations + 1);
        assert!(p.file.exists());
        assert_eq!(p.transition_distances.len(), cfg.n_continuations);
    }

    let eval = cmd_eval(&cfg).unwrap();
    assert_eq!(eval.rows, cfg.epochs);
    let svg = std::fs::read_to_string(&eval.svg_path).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 5);
    let csv = std::fs::read_to_string(&eval.csv_path).unwrap();
    assert!(csv.starts_with("epoch,train_loss,ham_pos_train,ham_neg_train,ham_pos_val,ham_neg_val"));

    // Same seed, rerun generate: byte-identical pieces.
    let ws = Workspace::new(&cfg.workspace);
    let piece0 = gen.pieces[0].file.clone();
    let before = std::fs::read(&piece0).unwrap();
    cmd_generate(&cfg).unwrap();
    assert_eq!(std::fs::read(&piece0).unwrap(), before);
    let _ = ws;
}

#[test]
fn workspace_lock_blocks_concurrent_use() {
    use seghash::pipeline::WorkspaceLock;
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("ws");
    let guard = WorkspaceLock::acquire(&root).unwrap();
    assert!(matches!(
        WorkspaceLock::acquire(&root),
        Err(Error::WorkspaceLocked(_))
    ));
    drop(guard);
    assert!(WorkspaceLock::acquire(&root).is_ok());
}

#[test]
fn train_requires_pretrain_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = common::write_synth_corpus(dir.path(), 30, 3);
    let cfg = common::test_config(&corpus, &dir.path().join("ws"));
    cmd_ingest(&cfg).unwrap();
    assert!(cmd_train(&cfg).is_err());
}
