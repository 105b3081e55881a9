//! Workspace commands: ingest, pretrain, train, index, generate, eval.
//!
//! A workspace directory collects every derived artifact under a stable
//! layout: ingest/, checkpoints/, pairs/, index/, generated/, eval/, and
//! runs/<timestamp>/ holding the resolved config snapshot of each command. A
//! lock file guards the workspace against concurrent mutation. Primary
//! outputs are byte-identical across reruns with the same config and seed.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::PipelineConfig;
use crate::corpus::{filter_songs, parse_abc, quantize, segment, transpose_to_c, Mode, Score};
use crate::error::{Error, Result};
use crate::features::{
    build_chord_vocab, build_store, load_store, save_sequences, save_store, ChordVocab,
    SegmentStore,
};
use crate::generate::{generate, render, GenerationConfig, Piece, RenderFormat};
use crate::hashnet::{
    epoch_rng, save_metrics, train_hash, EpochMetrics, NegativePolicy, TrainConfig,
};
use crate::index::{build_index, load_index, save_index, CodeIndex, QueryMode};
use crate::neural::{
    checkpoint_checksum, load_checkpoint, pretrain_loss, save_checkpoint, segment_bits, Adam,
    BitStep, Direction, Model,
};
use crate::pairs::{
    boundaries, estimate_stats, extract_positive_pairs, sample_negatives, save_split, shuffle,
    split_validation, load_split,
};

/// Path helpers for the on-disk workspace layout.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: &Path) -> Self {
        Workspace {
            root: root.to_path_buf(),
        }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("ingest/manifest.txt")
    }
    pub fn vocab(&self) -> PathBuf {
        self.root.join("ingest/vocab.txt")
    }
    pub fn store(&self) -> PathBuf {
        self.root.join("ingest/segments.bin")
    }
    pub fn sequences(&self) -> PathBuf {
        self.root.join("ingest/sequences.txt")
    }
    pub fn pretrain_ckpt(&self) -> PathBuf {
        self.root.join("checkpoints/pretrain.ckpt")
    }
    pub fn pretrain_log(&self) -> PathBuf {
        self.root.join("checkpoints/pretrain_loss.txt")
    }
    pub fn trained_ckpt(&self) -> PathBuf {
        self.root.join("checkpoints/trained.ckpt")
    }
    pub fn metrics(&self) -> PathBuf {
        self.root.join("checkpoints/metrics.csv")
    }
    pub fn stats(&self) -> PathBuf {
        self.root.join("pairs/stats.txt")
    }
    pub fn val_split(&self) -> PathBuf {
        self.root.join("pairs/val_split.txt")
    }
    pub fn index_file(&self) -> PathBuf {
        self.root.join("index/index.bin")
    }
    pub fn generated_dir(&self) -> PathBuf {
        self.root.join("generated")
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    fn ensure_dirs(&self) -> Result<()> {
        for sub in ["ingest", "checkpoints", "pairs", "index", "generated", "eval", "runs"] {
            std::fs::create_dir_all(self.root.join(sub))?;
        }
        Ok(())
    }

    /// Archives the resolved configuration under runs/<timestamp>_<command>/.
    fn snapshot(&self, cfg: &PipelineConfig, command: &str) -> Result<()> {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let dir = self.root.join(format!("runs/{secs}_{command}"));
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join("config.txt"), cfg.to_snapshot())?;
        Ok(())
    }
}

/// Exclusive workspace lock; the file disappears when the guard drops.
pub struct WorkspaceLock {
    path: PathBuf,
}

impl WorkspaceLock {
    pub fn acquire(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        let path = root.join(".lock");
        match std::fs::OpenOptions::new()
            .write(true)
            .create_new(true)
            .open(&path)
        {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(WorkspaceLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::WorkspaceLocked(path))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

fn setup(cfg: &PipelineConfig, command: &str) -> Result<(Workspace, WorkspaceLock)> {
    cfg.validate()?;
    let lock = WorkspaceLock::acquire(&cfg.workspace)?;
    let ws = Workspace::new(&cfg.workspace);
    ws.ensure_dirs()?;
    ws.snapshot(cfg, command)?;
    Ok((ws, lock))
}

// --- ingest ----------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct IngestReport {
    pub songs_parsed: usize,
    pub songs_rejected: usize,
    pub songs_retained: usize,
    pub windows_kept: usize,
    pub windows_dropped: usize,
    pub canonical_segments: usize,
    pub oov_chord_rate: f64,
}

fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.is_file() {
        return Ok(vec![dir.to_path_buf()]);
    }
    if !dir.is_dir() {
        return Err(Error::Config(format!(
            "corpus_dir '{}' is neither a file nor a directory",
            dir.display()
        )));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "abc").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Empty(format!(
            "no .abc files under '{}'",
            dir.display()
        )));
    }
    Ok(files)
}

fn filter_reason(score: &Score) -> Option<String> {
    if score.key.mode != Mode::Major {
        return Some("filtered:minor-or-modal-key".into());
    }
    if !matches!(score.meter, (2, 4) | (4, 4)) {
        return Some(format!("filtered:meter-{}/{}", score.meter.0, score.meter.1));
    }
    None
}

/// Full corpus pass: parse, filter, transpose, quantize, window, build the
/// chord vocabulary, and encode the deduplicated segment store.
pub fn cmd_ingest(cfg: &PipelineConfig) -> Result<IngestReport> {
    let (ws, _lock) = setup(cfg, "ingest")?;

    let mut parsed = Vec::new();
    let mut rejects = Vec::new();
    for file in corpus_files(&cfg.corpus_dir)? {
        let text = std::fs::read_to_string(&file)?;
        let mut out = parse_abc(&text);
        parsed.append(&mut out.scores);
        rejects.append(&mut out.rejects);
    }
    let songs_parsed = parsed.len();

    // Manifest rows for filtered-out songs keep the reason; retained songs
    // get sequential ids.
    let mut manifest = String::new();
    let mut retained: Vec<Score> = Vec::new();
    for score in parsed {
        match filter_reason(&score) {
            Some(reason) => {
                manifest.push_str(&format!("-\t{}\t0\t{}\n", score.title, reason));
            }
            None => retained.push(score),
        }
    }
    for r in &rejects {
        manifest.push_str(&format!("-\t{}\t0\t{}\n", r.title, r.reason));
    }
    let retained = filter_songs(retained); // invariant: already satisfied
    if retained.is_empty() {
        std::fs::write(ws.manifest(), &manifest)?;
        return Err(Error::Empty("no songs retained by the key/meter filter".into()));
    }

    let quantized: Vec<_> = retained
        .into_iter()
        .enumerate()
        .map(|(id, score)| quantize(&transpose_to_c(score), id as u32))
        .collect();
    let vocab = build_chord_vocab(&quantized)?;
    vocab.save(&ws.vocab())?;

    let mut windows_dropped = 0usize;
    let mut windows_kept = 0usize;
    let mut songs = Vec::with_capacity(quantized.len());
    let mut song_rows = Vec::with_capacity(quantized.len());
    for q in quantized {
        let seg = segment(&q);
        windows_dropped += seg.dropped_contaminated;
        windows_kept += seg.segments.len();
        song_rows.push((q.song_id, q.title.clone(), seg.segments.len()));
        songs.push((q, seg.segments));
    }
    let store = build_store(&songs, &vocab);
    for (id, title, count) in song_rows {
        manifest.push_str(&format!("{id}\t{title}\t{count}\tok\n"));
    }
    std::fs::write(ws.manifest(), &manifest)?;
    save_store(&store, &ws.store())?;
    save_sequences(&store, &ws.sequences())?;

    if windows_kept == 0 {
        return Err(Error::Empty("no segments survived windowing".into()));
    }
    Ok(IngestReport {
        songs_parsed,
        songs_rejected: rejects.len(),
        songs_retained: store.sequences.len(),
        windows_kept,
        windows_dropped,
        canonical_segments: store.len(),
        oov_chord_rate: if store.total_steps > 0 {
            store.oov_chord_steps as f64 / store.total_steps as f64
        } else {
            0.0
        },
    })
}

// --- pretrain ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub epochs: usize,
    pub losses: Vec<(f64, f64)>,
    pub checkpoint: PathBuf,
}

fn load_bits(store: &SegmentStore) -> Vec<Vec<BitStep>> {
    store
        .segments
        .iter()
        .map(|s| segment_bits(&s.steps))
        .collect()
}

/// Stage 1: teacher-forced next/previous timestep prediction for both
/// direction networks.
pub fn cmd_pretrain(cfg: &PipelineConfig) -> Result<PretrainReport> {
    let (ws, _lock) = setup(cfg, "pretrain")?;
    let store = load_store(&ws.store(), &ws.sequences())?;
    let bits = load_bits(&store);

    let mut model = Model::init(cfg.hidden_size, cfg.code_len, cfg.arity, cfg.seed);
    let mut opt = Adam::new(&model, cfg.learning_rate, cfg.grad_clip);
    let mut losses = Vec::with_capacity(cfg.pretrain_epochs);
    let mut log = String::from("epoch,loss_fwd,loss_bwd\n");

    for epoch in 0..cfg.pretrain_epochs {
        let mut order: Vec<usize> = (0..bits.len()).collect();
        let mut rng = epoch_rng(cfg.seed.wrapping_add(0x5eed), epoch);
        shuffle(&mut order, &mut rng);
        let mut sum_f = 0.0;
        let mut sum_b = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_pairs.max(1)) {
            let batch: Vec<Vec<BitStep>> = chunk.iter().map(|&i| bits[i].clone()).collect();
            let mut grads = model.zeros_like();
            let (loss_f, loss_b) = {
                let Model {
                    fwd: gf, bwd: gb, ..
                } = &mut grads;
                rayon::join(
                    || {
                        pretrain_loss(
                            &model.fwd.lstm,
                            &model.fwd.heads,
                            &batch,
                            Direction::Forward,
                            Some((&mut gf.lstm, &mut gf.heads)),
                        )
                    },
                    || {
                        pretrain_loss(
                            &model.bwd.lstm,
                            &model.bwd.heads,
                            &batch,
                            Direction::Retrograde,
                            Some((&mut gb.lstm, &mut gb.heads)),
                        )
                    },
                )
            };
            if !loss_f.is_finite() || !loss_b.is_finite() {
                return Err(Error::NonFiniteLoss {
                    context: format!("pretraining epoch {epoch}"),
                });
            }
            opt.step(&mut model, &grads);
            sum_f += loss_f;
            sum_b += loss_b;
            batches += 1;
        }
        let (mean_f, mean_b) = if batches > 0 {
            (sum_f / batches as f64, sum_b / batches as f64)
        } else {
            (0.0, 0.0)
        };
        println!("pretrain epoch {epoch}: loss_fwd={mean_f:.5} loss_bwd={mean_b:.5}");
        log.push_str(&format!("{epoch},{mean_f},{mean_b}\n"));
        losses.push((mean_f, mean_b));
    }

    save_checkpoint(&model, &ws.pretrain_ckpt())?;
    std::fs::write(ws.pretrain_log(), log)?;
    Ok(PretrainReport {
        epochs: cfg.pretrain_epochs,
        losses,
        checkpoint: ws.pretrain_ckpt(),
    })
}

// --- train ------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub metrics: Vec<EpochMetrics>,
    pub checkpoint: PathBuf,
    pub metrics_path: PathBuf,
}

/// Stage 2: pair-wise hash learning from the pretraining checkpoint.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainReport> {
    let (ws, _lock) = setup(cfg, "train")?;
    let store = load_store(&ws.store(), &ws.sequences())?;
    let bits = load_bits(&store);
    let mut model = load_checkpoint(&ws.pretrain_ckpt())?;
    if model.hidden != cfg.hidden_size || model.code_len != cfg.code_len || model.arity != cfg.arity
    {
        return Err(Error::Config(format!(
            "checkpoint dims (H={}, L={}, K={}) disagree with config (H={}, L={}, K={})",
            model.hidden, model.code_len, model.arity, cfg.hidden_size, cfg.code_len, cfg.arity
        )));
    }

    let positives = extract_positive_pairs(&store);
    let bounds = boundaries(&store.segments);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stats = estimate_stats(&positives, &store.segments, &mut rng, cfg.neg_stats_sample);
    stats.save(&ws.stats())?;

    let positive_keys: HashSet<(u32, u32)> = positives.iter().map(|p| p.key()).collect();
    let val_negatives = sample_negatives(
        store.len(),
        &stats,
        &bounds,
        &positive_keys,
        &HashSet::new(),
        cfg.threshold,
        cfg.n_val_neg,
        &mut rng,
    )?;
    let split = split_validation(
        &positives,
        &val_negatives,
        cfg.n_val_pos,
        cfg.n_val_neg,
        &mut rng,
    )?;
    save_split(&split, &ws.val_split())?;

    // Training negatives are resampled each epoch; the held-out negative
    // pairs must never be drawn.
    let val_neg_keys: HashSet<(u32, u32)> = split.val_neg.iter().map(|p| p.key()).collect();
    let train_cfg = TrainConfig {
        code_len: cfg.code_len,
        arity: cfg.arity,
        alpha: cfg.alpha,
        epochs: cfg.epochs,
        batch_pairs: cfg.batch_pairs,
        learning_rate: cfg.learning_rate,
        grad_clip: cfg.grad_clip,
        seed: cfg.seed,
    };
    let mut progress = |m: &EpochMetrics| {
        println!(
            "train epoch {}: loss={:.5} ham(+tr)={:.3} ham(-tr)={:.3} ham(+val)={:.3} ham(-val)={:.3}",
            m.epoch, m.train_loss, m.ham_pos_train, m.ham_neg_train, m.ham_pos_val, m.ham_neg_val
        );
    };
    let metrics = train_hash(
        &mut model,
        &bits,
        &split.train_pos,
        &split.val_pos,
        &split.val_neg,
        NegativePolicy::Resample {
            stats: &stats,
            bounds: &bounds,
            positive_keys: &positive_keys,
            exclude: &val_neg_keys,
            threshold: cfg.threshold,
        },
        &train_cfg,
        Some(&mut progress),
    )?;

    save_checkpoint(&model, &ws.trained_ckpt())?;
    save_metrics(&metrics, &ws.metrics())?;
    Ok(TrainReport {
        metrics,
        checkpoint: ws.trained_ckpt(),
        metrics_path: ws.metrics(),
    })
}

// --- index ------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct IndexReport {
    pub entries: usize,
    pub path: PathBuf,
    pub checksum: u64,
}

pub fn cmd_index(cfg: &PipelineConfig) -> Result<IndexReport> {
    let (ws, _lock) = setup(cfg, "index")?;
    build_and_save_index(cfg, &ws)
}

fn build_and_save_index(_cfg: &PipelineConfig, ws: &Workspace) -> Result<IndexReport> {
    let store = load_store(&ws.store(), &ws.sequences())?;
    let model = load_checkpoint(&ws.trained_ckpt())?;
    let checksum = checkpoint_checksum(&ws.trained_ckpt())?;
    let index = build_index(&model, &store, checksum);
    save_index(&index, &ws.index_file())?;
    Ok(IndexReport {
        entries: index.entries.len(),
        path: ws.index_file(),
        checksum,
    })
}

// --- generate ---------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PieceStats {
    pub file: PathBuf,
    pub start: u32,
    pub segments: usize,
    pub transition_distances: Vec<u32>,
    pub distinct_songs: usize,
    pub complete: bool,
}

#[derive(Debug, Clone)]
pub struct GenerateReport {
    pub pieces: Vec<PieceStats>,
    pub mean_distinct_songs: f64,
    pub mean_transition_distance: f64,
}

pub fn cmd_generate(cfg: &PipelineConfig) -> Result<GenerateReport> {
    let (ws, _lock) = setup(cfg, "generate")?;
    // Build the index from the trained checkpoint when it is missing.
    if !ws.index_file().exists() {
        build_and_save_index(cfg, &ws)?;
    }
    let index = load_index(&ws.index_file())?;
    let store = load_store(&ws.store(), &ws.sequences())?;
    let vocab = ChordVocab::load(&ws.vocab())?;

    let gen_cfg = GenerationConfig {
        n_continuations: cfg.n_continuations,
        mode: cfg.mode,
        max_segments_per_song: cfg.max_segments_per_song,
        start: cfg.start_policy,
    };
    let mode_tag = match cfg.mode {
        QueryMode::Nearest => "nearest",
        QueryMode::Farthest => "farthest",
    };

    let mut pieces = Vec::new();
    let mut stats_text = String::from(
        "piece,start,mode,segments,complete,mean_distance,distances,distinct_songs\n",
    );
    let mut dead_end: Option<Error> = None;
    for p in 0..cfg.n_pieces {
        let mut rng = ChaCha8Rng::seed_from_u64(
            cfg.seed ^ (p as u64 + 1).wrapping_mul(0xd1b5_4a32_d192_ed03),
        );
        let (piece, complete) = match generate(&index, &gen_cfg, &mut rng) {
            Ok(piece) => (piece, true),
            Err(dead) => {
                dead_end = Some(Error::DeadEnd {
                    placed: dead.partial.len(),
                });
                (dead.partial, false)
            }
        };
        if piece.is_empty() {
            break;
        }
        let stem = format!("piece_{}_{:03}_{}", cfg.seed, p, mode_tag);
        let abc_path = ws.generated_dir().join(format!("{stem}.abc"));
        let title = format!("Piece {} ({})", p, mode_tag);
        let abc = render(&piece, &store, &vocab, &title, RenderFormat::Abc)?;
        std::fs::write(&abc_path, &abc)?;
        if cfg.emit_midi {
            let midi = render(&piece, &store, &vocab, &title, RenderFormat::Midi)?;
            std::fs::write(ws.generated_dir().join(format!("{stem}.mid")), &midi)?;
        }
        let stats = piece_stats(&piece, &abc_path, complete);
        stats_text.push_str(&format!(
            "{},{},{},{},{},{:.4},{},{}\n",
            stem,
            stats.start,
            mode_tag,
            stats.segments,
            complete,
            mean(&stats.transition_distances),
            stats
                .transition_distances
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(" "),
            stats.distinct_songs
        ));
        pieces.push(stats);
        if dead_end.is_some() {
            break;
        }
    }

    let mean_distinct = mean_f64(pieces.iter().map(|p| p.distinct_songs as f64));
    let mean_dist = mean_f64(
        pieces
            .iter()
            .flat_map(|p| p.transition_distances.iter().map(|&d| d as f64)),
    );
    stats_text.push_str(&format!(
        "# mean_distinct_songs = {mean_distinct:.4}\n# mean_transition_distance = {mean_dist:.4}\n"
    ));
    std::fs::write(ws.generated_dir().join("stats.txt"), stats_text)?;

    if let Some(err) = dead_end {
        eprintln!("generation hit a dead end; partial piece written");
        return Err(err);
    }
    Ok(GenerateReport {
        pieces,
        mean_distinct_songs: mean_distinct,
        mean_transition_distance: mean_dist,
    })
}

fn piece_stats(piece: &Piece, file: &Path, complete: bool) -> PieceStats {
    PieceStats {
        file: file.to_path_buf(),
        start: piece.segment_ids.first().copied().unwrap_or(0),
        segments: piece.len(),
        transition_distances: piece.transition_distances.clone(),
        distinct_songs: piece.distinct_songs(),
        complete,
    }
}

fn mean(values: &[u32]) -> f64 {
    mean_f64(values.iter().map(|&v| v as f64))
}

fn mean_f64(values: impl Iterator<Item = f64>) -> f64 {
    let collected: Vec<f64> = values.collect();
    if collected.is_empty() {
        return f64::NAN;
    }
    collected.iter().sum::<f64>() / collected.len() as f64
}

// --- eval -------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: usize,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

/// Re-emits the training curves as a tidy CSV and a selfcontained SVG chart.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<EvalReport> {
    let (ws, _lock) = setup(cfg, "eval")?;
    let metrics = crate::hashnet::load_metrics(&ws.metrics())?;

    let mut csv =
        String::from("epoch,train_loss,ham_pos_train,ham_neg_train,ham_pos_val,ham_neg_val\n");
    for m in &metrics {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            m.epoch, m.train_loss, m.ham_pos_train, m.ham_neg_train, m.ham_pos_val, m.ham_neg_val
        ));
    }
    let csv_path = ws.eval_dir().join("curves.csv");
    std::fs::write(&csv_path, &csv)?;

    let svg_path = ws.eval_dir().join("curves.svg");
    std::fs::write(&svg_path, curves_svg(&metrics))?;
    Ok(EvalReport {
        rows: metrics.len(),
        csv_path,
        svg_path,
    })
}

/// Hand-rolled line chart: five series over epochs, shared y axis.
fn curves_svg(metrics: &[EpochMetrics]) -> String {
    const W: f64 = 800.0;
    const H: f64 = 480.0;
    const ML: f64 = 55.0;
    const MR: f64 = 15.0;
    const MT: f64 = 25.0;
    const MB: f64 = 45.0;
    let series: [(&str, &str, Box<dyn Fn(&EpochMetrics) -> f64>); 5] = [
        ("train_loss", "#888888", Box::new(|m| m.train_loss)),
        ("ham_pos_train", "#1f77b4", Box::new(|m| m.ham_pos_train)),
        ("ham_neg_train", "#d62728", Box::new(|m| m.ham_neg_train)),
        ("ham_pos_val", "#2ca02c", Box::new(|m| m.ham_pos_val)),
        ("ham_neg_val", "#ff7f0e", Box::new(|m| m.ham_neg_val)),
    ];
    let max_epoch = metrics.iter().map(|m| m.epoch).max().unwrap_or(0).max(1) as f64;
    let mut max_y = 1e-9f64;
    for m in metrics {
        for (_, _, f) in &series {
            let v = f(m);
            if v.is_finite() {
                max_y = max_y.max(v);
            }
        }
    }
    let x = |e: f64| ML + (W - ML - MR) * e / max_epoch;
    let y = |v: f64| H - MB - (H - MT - MB) * v / max_y;

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"
    );
    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{ML}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ML}\" y1=\"{MT}\" x2=\"{ML}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MB,
        W - MR,
        H - MB,
        H - MB
    ));
    // Ticks.
    for t in 0..=4 {
        let v = max_y * t as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{:.2}</text>\n\
             <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
            ML - 6.0,
            y(v) + 4.0,
            v,
            ML,
            y(v),
            W - MR,
            y(v)
        ));
        let e = max_epoch * t as f64 / 4.0;
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{:.0}</text>\n",
            x(e),
            H - MB + 18.0,
            e
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">epoch</text>\n",
        (ML + W - MR) / 2.0,
        H - 8.0
    ));
    // Series.
    for (idx, (name, color, f)) in series.iter().enumerate() {
        let pts: Vec<String> = metrics
            .iter()
            .filter(|m| f(m).is_finite())
            .map(|m| format!("{:.2},{:.2}", x(m.epoch as f64), y(f(m))))
            .collect();
        if !pts.is_empty() {
            svg.push_str(&format!(
                "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                color,
                pts.join(" ")
            ));
        }
        let ly = MT + 16.0 * idx as f64;
        svg.push_str(&format!(
            "<line x1=\"{}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{}\" stroke-width=\"3\"/>\n\
             <text x=\"{}\" y=\"{}\">{}</text>\n",
            W - 180.0,
            W - 150.0,
            color,
            W - 144.0,
            ly + 4.0,
            name
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Loads the persisted validation split (used by offline analyses).
pub fn load_validation_split(ws: &Workspace) -> Result<(Vec<crate::pairs::SegmentPair>, Vec<crate::pairs::SegmentPair>)> {
    load_split(&ws.val_split())
}

pub fn load_code_index(ws: &Workspace) -> Result<CodeIndex> {
    load_index(&ws.index_file())
}
