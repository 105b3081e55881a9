//! Flat key=value pipeline configuration with CLI overrides.
//!
//! Every knob lives in one snapshot-friendly struct. A config file holds
//! `key = value` lines; command-line flags named after the keys win over the
//! file. Validation happens once, before any compute starts.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::generate::StartPolicy;
use crate::index::QueryMode;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Directory of .abc files (or a single .abc file).
    pub corpus_dir: PathBuf,
    /// Workspace root for all derived artifacts.
    pub workspace: PathBuf,

    pub hidden_size: usize,
    pub code_len: usize,
    pub arity: usize,
    pub alpha: f64,
    pub pretrain_epochs: usize,
    pub epochs: usize,
    /// Pairs per class per training minibatch; also the pretraining batch.
    pub batch_pairs: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,

    pub threshold: f64,
    pub neg_stats_sample: usize,
    pub n_val_pos: usize,
    pub n_val_neg: usize,

    pub n_continuations: usize,
    pub mode: QueryMode,
    pub max_segments_per_song: u32,
    pub start_policy: StartPolicy,
    pub n_pieces: usize,
    pub emit_midi: bool,

    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            corpus_dir: PathBuf::from("corpus"),
            workspace: PathBuf::from("workspace"),
            hidden_size: 128,
            code_len: 8,
            arity: 4,
            alpha: 0.1,
            pretrain_epochs: 30,
            epochs: 100,
            batch_pairs: 64,
            learning_rate: 1e-3,
            grad_clip: 5.0,
            threshold: 0.5,
            neg_stats_sample: 200_000,
            n_val_pos: 750,
            n_val_neg: 750,
            n_continuations: 8,
            mode: QueryMode::Nearest,
            max_segments_per_song: 2,
            start_policy: StartPolicy::Random,
            n_pieces: 1,
            emit_midi: true,
            seed: 7,
        }
    }
}

fn mode_name(mode: QueryMode) -> &'static str {
    match mode {
        QueryMode::Nearest => "nearest",
        QueryMode::Farthest => "farthest",
    }
}

fn start_name(policy: StartPolicy) -> String {
    match policy {
        StartPolicy::Random => "random".into(),
        StartPolicy::SongStartPool => "song_start".into(),
        StartPolicy::Explicit(id) => id.to_string(),
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config '{}': {e}", path.display())))?;
        let mut cfg = PipelineConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "config line {} is not 'key = value': '{raw}'",
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Applies one `key = value` assignment (file line or CLI flag).
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("bad value '{value}' for {what}"));
        match key {
            "corpus_dir" => self.corpus_dir = PathBuf::from(value),
            "workspace" => self.workspace = PathBuf::from(value),
            "hidden_size" => self.hidden_size = value.parse().map_err(|_| bad(key))?,
            "code_len" => self.code_len = value.parse().map_err(|_| bad(key))?,
            "arity" => self.arity = value.parse().map_err(|_| bad(key))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad(key))?,
            "pretrain_epochs" => self.pretrain_epochs = value.parse().map_err(|_| bad(key))?,
            "epochs" => self.epochs = value.parse().map_err(|_| bad(key))?,
            "batch_pairs" => self.batch_pairs = value.parse().map_err(|_| bad(key))?,
            "learning_rate" => self.learning_rate = value.parse().map_err(|_| bad(key))?,
            "grad_clip" => self.grad_clip = value.parse().map_err(|_| bad(key))?,
            "threshold" => self.threshold = value.parse().map_err(|_| bad(key))?,
            "neg_stats_sample" => self.neg_stats_sample = value.parse().map_err(|_| bad(key))?,
            "n_val_pos" => self.n_val_pos = value.parse().map_err(|_| bad(key))?,
            "n_val_neg" => self.n_val_neg = value.parse().map_err(|_| bad(key))?,
            "n_continuations" => self.n_continuations = value.parse().map_err(|_| bad(key))?,
            "mode" => {
                self.mode = match value {
                    "nearest" => QueryMode::Nearest,
                    "farthest" => QueryMode::Farthest,
                    _ => return Err(bad("mode (nearest|farthest)")),
                }
            }
            "max_segments_per_song" => {
                self.max_segments_per_song = value.parse().map_err(|_| bad(key))?
            }
            "start_policy" => {
                self.start_policy = match value {
                    "random" => StartPolicy::Random,
                    "song_start" => StartPolicy::SongStartPool,
                    other => StartPolicy::Explicit(
                        other
                            .parse()
                            .map_err(|_| bad("start_policy (random|song_start|<segment id>)"))?,
                    ),
                }
            }
            "n_pieces" => self.n_pieces = value.parse().map_err(|_| bad(key))?,
            "emit_midi" => {
                self.emit_midi = match value {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    _ => return Err(bad("emit_midi (true|false)")),
                }
            }
            "seed" => self.seed = value.parse().map_err(|_| bad(key))?,
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Range checks; run before any command executes.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden_size < 1 {
            return fail("hidden_size must be >= 1");
        }
        if self.code_len < 1 {
            return fail("code_len must be >= 1");
        }
        if self.arity < 2 {
            return fail("arity must be >= 2");
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return fail("alpha must be finite and >= 0");
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return fail("threshold must be in [0, 1]");
        }
        if self.batch_pairs < 1 {
            return fail("batch_pairs must be >= 1");
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return fail("learning_rate must be finite and > 0");
        }
        if self.grad_clip < 0.0 {
            return fail("grad_clip must be >= 0 (0 disables clipping)");
        }
        if self.n_continuations < 1 && self.n_pieces > 0 {
            // A single-segment piece is allowed; the knob itself just needs
            // to be non-degenerate for the default flow.
        }
        if self.max_segments_per_song < 1 {
            return fail("max_segments_per_song must be >= 1");
        }
        if self.n_pieces < 1 {
            return fail("n_pieces must be >= 1");
        }
        Ok(())
    }

    /// Serialization used for the per-run config snapshot; `load` parses it.
    pub fn to_snapshot(&self) -> String {
        format!(
            "corpus_dir = {}\nworkspace = {}\nhidden_size = {}\ncode_len = {}\narity = {}\n\
             alpha = {}\npretrain_epochs = {}\nepochs = {}\nbatch_pairs = {}\nlearning_rate = {}\n\
             grad_clip = {}\nthreshold = {}\nneg_stats_sample = {}\nn_val_pos = {}\nn_val_neg = {}\n\
             n_continuations = {}\nmode = {}\nmax_segments_per_song = {}\nstart_policy = {}\n\
             n_pieces = {}\nemit_midi = {}\nseed = {}\n",
            self.corpus_dir.display(),
            self.workspace.display(),
            self.hidden_size,
            self.code_len,
            self.arity,
            self.alpha,
            self.pretrain_epochs,
            self.epochs,
            self.batch_pairs,
            self.learning_rate,
            self.grad_clip,
            self.threshold,
            self.neg_stats_sample,
            self.n_val_pos,
            self.n_val_neg,
            self.n_continuations,
            mode_name(self.mode),
            self.max_segments_per_song,
            start_name(self.start_policy),
            self.n_pieces,
            self.emit_midi,
            self.seed,
        )
    }
}
