//! Piece generation by iterative hash retrieval, and rendering to ABC/MIDI.
//!
//! A piece starts from a seed segment. Each extension queries the index with
//! the forward code of the last segment, drops candidates whose every source
//! song has hit the per-song budget, and samples uniformly from the best
//! surviving distance tier. Segments are concatenated as whole 4-beat
//! measures; sustained notes and unchanged chords are merged across segment
//! boundaries so the ABC re-parses to the original timestep states.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::abc::render_abc;
use crate::corpus::{beats, ChordEvent, NoteEvent};
use crate::error::{Error, Result};
use crate::features::{decode_segment, ChordVocab, SegmentStore};
use crate::index::{query, CodeIndex, QueryMode};
use crate::midi::write_midi;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StartPolicy {
    Random,
    SongStartPool,
    Explicit(u32),
}

#[derive(Debug, Clone)]
pub struct GenerationConfig {
    pub n_continuations: usize,
    pub mode: QueryMode,
    pub max_segments_per_song: u32,
    pub start: StartPolicy,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n_continuations: 8,
            mode: QueryMode::Nearest,
            max_segments_per_song: 2,
            start: StartPolicy::Random,
        }
    }
}

/// A generated piece: ordered segments, the Hamming distance of every
/// transition, and the source song each segment was attributed to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Piece {
    pub segment_ids: Vec<u32>,
    pub transition_distances: Vec<u32>,
    pub attributions: Vec<u32>,
    usage: HashMap<u32, u32>,
}

impl Piece {
    fn new() -> Self {
        Piece {
            segment_ids: Vec::new(),
            transition_distances: Vec::new(),
            attributions: Vec::new(),
            usage: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segment_ids.is_empty()
    }

    /// Number of distinct songs attributed across the piece.
    pub fn distinct_songs(&self) -> usize {
        self.usage.len()
    }

    pub fn song_usage(&self) -> &HashMap<u32, u32> {
        &self.usage
    }

    /// Charges the segment to the least-used eligible source song.
    fn attribute(&mut self, song_ids: &[u32], cap: u32) -> Option<u32> {
        let mut best: Option<(u32, u32)> = None; // (count, song)
        for &s in song_ids {
            let count = *self.usage.get(&s).unwrap_or(&0);
            if count >= cap {
                continue;
            }
            if best.map(|(c, b)| (count, s) < (c, b)).unwrap_or(true) {
                best = Some((count, s));
            }
        }
        let (_, song) = best?;
        *self.usage.entry(song).or_insert(0) += 1;
        self.attributions.push(song);
        Some(song)
    }
}

/// Dead end with the partial piece attached.
#[derive(Debug)]
pub struct DeadEnd {
    pub partial: Piece,
}

impl From<DeadEnd> for Error {
    fn from(d: DeadEnd) -> Error {
        Error::DeadEnd {
            placed: d.partial.len(),
        }
    }
}

fn entry_position(index: &CodeIndex, segment_id: u32) -> usize {
    // Entries are stored in canonical id order.
    let pos = segment_id as usize;
    debug_assert_eq!(index.entries[pos].segment_id, segment_id);
    pos
}

/// Chooses the opening segment under the configured policy.
pub fn pick_start(index: &CodeIndex, config: &GenerationConfig, rng: &mut ChaCha8Rng) -> Result<u32> {
    match config.start {
        StartPolicy::Explicit(id) => {
            if (id as usize) < index.entries.len() {
                Ok(id)
            } else {
                Err(Error::EmptyPool)
            }
        }
        StartPolicy::Random => {
            if index.entries.is_empty() {
                return Err(Error::EmptyPool);
            }
            Ok(index.entries[rng.gen_range(0..index.entries.len())].segment_id)
        }
        StartPolicy::SongStartPool => {
            let pool: Vec<u32> = index
                .entries
                .iter()
                .filter(|e| e.is_song_start)
                .map(|e| e.segment_id)
                .collect();
            if pool.is_empty() {
                return Err(Error::EmptyPool);
            }
            Ok(pool[rng.gen_range(0..pool.len())])
        }
    }
}

/// Appends one retrieved segment, or fails with the piece untouched.
pub fn extend(
    piece: &mut Piece,
    index: &CodeIndex,
    config: &GenerationConfig,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<(), Error> {
    let last = *piece.segment_ids.last().expect("piece must be nonempty");
    let q = &index.entries[entry_position(index, last)].forward;
    let ranked = query(index, q, config.mode, &HashSet::new(), usize::MAX)?;
    for (distance, tier) in &ranked.tiers {
        // Candidates with at least one unsaturated source song survive.
        let eligible: Vec<u32> = tier
            .iter()
            .copied()
            .filter(|&id| {
                index.entries[entry_position(index, id)]
                    .song_ids
                    .iter()
                    .any(|s| {
                        *piece.usage.get(s).unwrap_or(&0) < config.max_segments_per_song
                    })
            })
            .collect();
        if eligible.is_empty() {
            continue;
        }
        let choice = eligible[rng.gen_range(0..eligible.len())];
        let songs = index.entries[entry_position(index, choice)].song_ids.clone();
        piece
            .attribute(&songs, config.max_segments_per_song)
            .expect("eligibility was checked");
        piece.segment_ids.push(choice);
        piece.transition_distances.push(*distance);
        return Ok(());
    }
    Err(Error::DeadEnd {
        placed: piece.len(),
    })
}

/// Start plus `n_continuations` extensions. A dead end returns the partial
/// piece inside the error.
pub fn generate(
    index: &CodeIndex,
    config: &GenerationConfig,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<Piece, DeadEnd> {
    let mut piece = Piece::new();
    let start = match pick_start(index, config, rng) {
        Ok(s) => s,
        Err(_) => return Err(DeadEnd { partial: piece }),
    };
    let songs = index.entries[entry_position(index, start)].song_ids.clone();
    if piece
        .attribute(&songs, config.max_segments_per_song)
        .is_none()
    {
        return Err(DeadEnd { partial: piece });
    }
    piece.segment_ids.push(start);
    for _ in 0..config.n_continuations {
        if extend(&mut piece, index, config, rng).is_err() {
            return Err(DeadEnd { partial: piece });
        }
    }
    Ok(piece)
}

/// Concatenated events of a piece, one 4-beat measure per segment. Sustains
/// and unchanged chords merge across boundaries.
pub fn piece_events(
    piece: &[u32],
    store: &SegmentStore,
    vocab: &ChordVocab,
) -> Result<(Vec<NoteEvent>, Vec<ChordEvent>)> {
    let mut melody: Vec<NoteEvent> = Vec::new();
    let mut chords: Vec<ChordEvent> = Vec::new();
    for (pos, &id) in piece.iter().enumerate() {
        let seg = &store.segments[id as usize];
        let offset = beats(4 * pos as i64, 1);
        let (notes, seg_chords) = decode_segment(&seg.steps, vocab)?;
        let continues = !seg.steps[0].articulated();
        for (k, n) in notes.into_iter().enumerate() {
            let shifted = NoteEvent {
                onset: n.onset + offset,
                duration: n.duration,
                pitch: n.pitch,
            };
            if k == 0 && continues {
                if let Some(prev) = melody.last_mut() {
                    if prev.pitch == shifted.pitch
                        && prev.pitch.is_some()
                        && prev.onset + prev.duration == shifted.onset
                    {
                        prev.duration += shifted.duration;
                        continue;
                    }
                }
            }
            melody.push(shifted);
        }
        for (k, c) in seg_chords.into_iter().enumerate() {
            let shifted = ChordEvent {
                onset: c.onset + offset,
                duration: c.duration,
                root: c.root,
                quality: c.quality,
            };
            if k == 0 && shifted.onset > beats(0, 1) {
                if let Some(prev) = chords.last_mut() {
                    if prev.root == shifted.root
                        && prev.quality == shifted.quality
                        && prev.onset + prev.duration == shifted.onset
                    {
                        prev.duration += shifted.duration;
                        continue;
                    }
                }
            }
            chords.push(shifted);
        }
    }
    Ok((melody, chords))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Abc,
    Midi,
}

/// Renders a piece for output. ABC re-parses through the corpus pipeline;
/// MIDI is a format-0 file with block-triad chords.
pub fn render(
    piece: &Piece,
    store: &SegmentStore,
    vocab: &ChordVocab,
    title: &str,
    format: RenderFormat,
) -> Result<Vec<u8>> {
    let (melody, chords) = piece_events(&piece.segment_ids, store, vocab)?;
    match format {
        RenderFormat::Abc => Ok(render_abc(title, (4, 4), &melody, &chords).into_bytes()),
        RenderFormat::Midi => Ok(write_midi(&melody, &chords)),
    }
}
