//! Command-line front end. Exit codes: 0 success, 1 configuration error,
//! 2 runtime or data error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seghash::config::PipelineConfig;
use seghash::error::Error;
use seghash::pipeline;

#[derive(Parser)]
#[command(
    name = "seghash",
    about = "Learned segment hash codes for folk-tune generation by retrieval",
    version
)]
struct Cli {
    /// Key=value configuration file; flags below override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    #[arg(long = "corpus_dir", global = true)]
    corpus_dir: Option<PathBuf>,
    #[arg(long = "hidden_size", global = true)]
    hidden_size: Option<usize>,
    #[arg(long = "code_len", global = true)]
    code_len: Option<usize>,
    #[arg(long, global = true)]
    arity: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long = "pretrain_epochs", global = true)]
    pretrain_epochs: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long = "batch_pairs", global = true)]
    batch_pairs: Option<usize>,
    #[arg(long = "learning_rate", global = true)]
    learning_rate: Option<f64>,
    #[arg(long = "grad_clip", global = true)]
    grad_clip: Option<f64>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long = "neg_stats_sample", global = true)]
    neg_stats_sample: Option<usize>,
    #[arg(long = "n_val_pos", global = true)]
    n_val_pos: Option<usize>,
    #[arg(long = "n_val_neg", global = true)]
    n_val_neg: Option<usize>,
    #[arg(long = "n_continuations", global = true)]
    n_continuations: Option<usize>,
    /// nearest | farthest
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long = "max_segments_per_song", global = true)]
    max_segments_per_song: Option<u32>,
    /// random | song_start | <segment id>
    #[arg(long = "start_policy", global = true)]
    start_policy: Option<String>,
    #[arg(long = "n_pieces", global = true)]
    n_pieces: Option<usize>,
    /// true | false
    #[arg(long = "emit_midi", global = true)]
    emit_midi: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the ABC corpus and build the segment store and chord vocabulary.
    Ingest,
    /// Stage 1: next/previous timestep prediction pretraining.
    Pretrain,
    /// Stage 2: pair-wise hash learning; writes the epoch metrics table.
    Train,
    /// Code every segment with the trained model and write the index.
    Index,
    /// Generate pieces by hash retrieval and render them to ABC/MIDI.
    Generate,
    /// Emit the training-curve CSV and SVG chart from the metrics table.
    Eval,
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    let mut set = |key: &str, value: Option<String>| -> Result<(), Error> {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
        Ok(())
    };
    set("seed", cli.seed.map(|v| v.to_string()))?;
    set("workspace", cli.workspace.as_ref().map(|v| v.display().to_string()))?;
    set("corpus_dir", cli.corpus_dir.as_ref().map(|v| v.display().to_string()))?;
    set("hidden_size", cli.hidden_size.map(|v| v.to_string()))?;
    set("code_len", cli.code_len.map(|v| v.to_string()))?;
    set("arity", cli.arity.map(|v| v.to_string()))?;
    set("alpha", cli.alpha.map(|v| v.to_string()))?;
    set("pretrain_epochs", cli.pretrain_epochs.map(|v| v.to_string()))?;
    set("epochs", cli.epochs.map(|v| v.to_string()))?;
    set("batch_pairs", cli.batch_pairs.map(|v| v.to_string()))?;
    set("learning_rate", cli.learning_rate.map(|v| v.to_string()))?;
    set("grad_clip", cli.grad_clip.map(|v| v.to_string()))?;
    set("threshold", cli.threshold.map(|v| v.to_string()))?;
    set("neg_stats_sample", cli.neg_stats_sample.map(|v| v.to_string()))?;
    set("n_val_pos", cli.n_val_pos.map(|v| v.to_string()))?;
    set("n_val_neg", cli.n_val_neg.map(|v| v.to_string()))?;
    set("n_continuations", cli.n_continuations.map(|v| v.to_string()))?;
    set("mode", cli.mode.clone())?;
    set(
        "max_segments_per_song",
        cli.max_segments_per_song.map(|v| v.to_string()),
    )?;
    set("start_policy", cli.start_policy.clone())?;
    set("n_pieces", cli.n_pieces.map(|v| v.to_string()))?;
    set("emit_midi", cli.emit_midi.clone())?;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &PipelineConfig) -> Result<(), Error> {
    match cli.command {
        Command::Ingest => {
            let r = pipeline::cmd_ingest(cfg)?;
            println!(
                "ingest: {} songs retained ({} parsed, {} rejected), {} segments \
                 ({} canonical, {} windows dropped), out-of-vocab chord rate {:.4}",
                r.songs_retained,
                r.songs_parsed,
                r.songs_rejected,
                r.windows_kept,
                r.canonical_segments,
                r.windows_dropped,
                r.oov_chord_rate
            );
        }
        Command::Pretrain => {
            let r = pipeline::cmd_pretrain(cfg)?;
            println!(
                "pretrain: {} epochs, checkpoint {}",
                r.epochs,
                r.checkpoint.display()
            );
        }
        Command::Train => {
            let r = pipeline::cmd_train(cfg)?;
            println!(
                "train: {} epochs, metrics {}, checkpoint {}",
                r.metrics.len(),
                r.metrics_path.display(),
                r.checkpoint.display()
            );
        }
        Command::Index => {
            let r = pipeline::cmd_index(cfg)?;
            println!(
                "index: {} entries, checksum {:016x}, {}",
                r.entries,
                r.checksum,
                r.path.display()
            );
        }
        Command::Generate => {
            let r = pipeline::cmd_generate(cfg)?;
            println!(
                "generate: {} pieces, mean transition distance {:.3}, \
                 mean distinct source songs {:.2}",
                r.pieces.len(),
                r.mean_transition_distance,
                r.mean_distinct_songs
            );
        }
        Command::Eval => {
            let r = pipeline::cmd_eval(cfg)?;
            println!(
                "eval: {} epochs, {} and {}",
                r.rows,
                r.csv_path.display(),
                r.svg_path.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match run(&cli, &cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
