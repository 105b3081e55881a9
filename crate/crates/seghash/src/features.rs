//! 29-bit timestep encoding, chord vocabulary, and the segment store.
//!
//! Bit layout per timestep: 0 melody articulation; 1-4 melody octave one-hot
//! (four octaves anchored at C3, clamped); 5-16 melody pitch-class one-hot;
//! 17-28 chord-class one-hot. Rests leave bits 1-16 zero; missing or
//! out-of-vocabulary chords leave bits 17-28 zero.

use std::collections::{BTreeSet, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use crate::corpus::{beats, Beats, ChordEvent, ChordQuality, NoteEvent, QuantizedSong, RawSegment};
use crate::error::{Error, Result};

pub const FEATURE_DIM: usize = 29;
pub const SEGMENT_STEPS: usize = crate::corpus::SEGMENT_STEPS;
/// 16 timesteps x 29 bits = 464 bits = 58 bytes.
pub const PACKED_BYTES: usize = SEGMENT_STEPS * FEATURE_DIM / 8;

pub const CHORD_CLASSES: usize = 12;
/// Lowest pitch of the 4-octave melody window (C3).
pub const OCTAVE_BASE_PITCH: i32 = 48;
pub const OCTAVE_BINS: usize = 4;

const BIT_ARTICULATION: usize = 0;
const BIT_OCTAVE: usize = 1;
const BIT_PITCH_CLASS: usize = 5;
const BIT_CHORD: usize = 17;

/// The 12 most frequent (root, quality) chords, ordered by descending
/// timestep count with ties broken by (root, quality) ordinal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChordVocab {
    pub entries: Vec<(u8, ChordQuality)>,
    pub counts: Vec<u64>,
    lookup: HashMap<(u8, ChordQuality), usize>,
}

impl ChordVocab {
    pub fn new(entries: Vec<(u8, ChordQuality)>, counts: Vec<u64>) -> Self {
        let lookup = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        ChordVocab {
            entries,
            counts,
            lookup,
        }
    }

    pub fn index_of(&self, root: u8, quality: &ChordQuality) -> Option<usize> {
        self.lookup.get(&(root, quality.clone())).copied()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, (root, quality)) in self.entries.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", root, quality.label(), self.counts[i]));
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut entries = Vec::new();
        let mut counts = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.splitn(3, ',').collect();
            if parts.len() != 3 {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    detail: format!("bad vocab line '{line}'"),
                });
            }
            let root: u8 = parts[0].parse().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                detail: format!("bad root in '{line}'"),
            })?;
            let count: u64 = parts[2].parse().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                detail: format!("bad count in '{line}'"),
            })?;
            entries.push((root, ChordQuality::from_label(parts[1])));
            counts.push(count);
        }
        if entries.len() != CHORD_CLASSES {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("expected {CHORD_CLASSES} vocab lines, found {}", entries.len()),
            });
        }
        Ok(ChordVocab::new(entries, counts))
    }
}

/// Counts chord occurrences per timestep and keeps the top 12.
pub fn build_chord_vocab(qsongs: &[QuantizedSong]) -> Result<ChordVocab> {
    let mut counts: HashMap<(u8, ChordQuality), u64> = HashMap::new();
    for song in qsongs {
        for cell in &song.grid {
            if let Some((root, quality)) = &cell.chord {
                *counts.entry((*root, quality.clone())).or_insert(0) += 1;
            }
        }
    }
    if counts.len() < CHORD_CLASSES {
        return Err(Error::FewerThan12Chords { found: counts.len() });
    }
    let mut ordered: Vec<((u8, ChordQuality), u64)> = counts.into_iter().collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ordered.truncate(CHORD_CLASSES);
    let (entries, counts): (Vec<_>, Vec<_>) = ordered.into_iter().unzip();
    Ok(ChordVocab::new(entries, counts))
}

/// One timestep of the binary feature encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimestepVector {
    pub bits: [bool; FEATURE_DIM],
}

impl TimestepVector {
    pub fn zeros() -> Self {
        TimestepVector {
            bits: [false; FEATURE_DIM],
        }
    }

    pub fn articulated(&self) -> bool {
        self.bits[BIT_ARTICULATION]
    }

    fn one_hot(&self, start: usize, len: usize) -> Option<usize> {
        (0..len).find(|&i| self.bits[start + i])
    }

    pub fn octave(&self) -> Option<usize> {
        self.one_hot(BIT_OCTAVE, OCTAVE_BINS)
    }

    pub fn pitch_class(&self) -> Option<usize> {
        self.one_hot(BIT_PITCH_CLASS, 12)
    }

    pub fn chord_class(&self) -> Option<usize> {
        self.one_hot(BIT_CHORD, CHORD_CLASSES)
    }

    /// Sounding pitch, or `None` for a rest.
    pub fn pitch(&self) -> Result<Option<u8>> {
        match (self.octave(), self.pitch_class()) {
            (Some(o), Some(pc)) => Ok(Some((OCTAVE_BASE_PITCH as usize + 12 * o + pc) as u8)),
            (None, None) => Ok(None),
            _ => Err(Error::InconsistentState {
                step: 0,
                detail: "octave and pitch-class groups disagree".into(),
            }),
        }
    }

    /// Checks the one-hot group invariants.
    pub fn validate(&self) -> bool {
        let count =
            |start: usize, len: usize| self.bits[start..start + len].iter().filter(|&&b| b).count();
        let oct = count(BIT_OCTAVE, OCTAVE_BINS);
        let pc = count(BIT_PITCH_CLASS, 12);
        let ch = count(BIT_CHORD, CHORD_CLASSES);
        oct <= 1 && pc <= 1 && ch <= 1 && (oct == 0) == (pc == 0)
    }

    pub fn to_f64(&self) -> [f64; FEATURE_DIM] {
        let mut v = [0.0; FEATURE_DIM];
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                v[i] = 1.0;
            }
        }
        v
    }
}

/// A segment encoded for the networks, deduplicated across source songs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentTensor {
    pub segment_id: u32,
    pub song_ids: BTreeSet<u32>,
    pub steps: Vec<TimestepVector>,
}

fn octave_bin(pitch: u8) -> usize {
    ((pitch as i32 - OCTAVE_BASE_PITCH).div_euclid(12)).clamp(0, OCTAVE_BINS as i32 - 1) as usize
}

/// Encodes a clean 16-step window. Returns the step vectors plus the count of
/// timesteps whose chord fell outside the vocabulary.
pub fn encode_segment(raw: &RawSegment, vocab: &ChordVocab) -> (Vec<TimestepVector>, u32) {
    let mut steps = Vec::with_capacity(SEGMENT_STEPS);
    let mut oov = 0u32;
    for cell in &raw.states {
        let mut v = TimestepVector::zeros();
        if let Some(p) = cell.pitch {
            v.bits[BIT_ARTICULATION] = cell.articulated;
            v.bits[BIT_OCTAVE + octave_bin(p)] = true;
            v.bits[BIT_PITCH_CLASS + (p % 12) as usize] = true;
        }
        if let Some((root, quality)) = &cell.chord {
            match vocab.index_of(*root, quality) {
                Some(idx) => v.bits[BIT_CHORD + idx] = true,
                None => oov += 1,
            }
        }
        steps.push(v);
    }
    (steps, oov)
}

/// Reconstructs events from an encoded segment. Onsets are in beats from the
/// segment start; rests come back as explicit events.
pub fn decode_segment(
    steps: &[TimestepVector],
    vocab: &ChordVocab,
) -> Result<(Vec<NoteEvent>, Vec<ChordEvent>)> {
    for (i, s) in steps.iter().enumerate() {
        if !s.validate() {
            return Err(Error::InconsistentState {
                step: i,
                detail: "one-hot group invariant violated".into(),
            });
        }
    }
    let step_beats = beats(1, 4);
    let mut notes: Vec<NoteEvent> = Vec::new();
    for (i, s) in steps.iter().enumerate() {
        let onset: Beats = step_beats * beats(i as i64, 1);
        let pitch = s.pitch()?;
        let new_event = match notes.last() {
            None => true,
            Some(prev) => prev.pitch != pitch || (pitch.is_some() && s.articulated()),
        };
        if new_event {
            notes.push(NoteEvent {
                onset,
                duration: step_beats,
                pitch,
            });
        } else {
            let last = notes.last_mut().unwrap();
            last.duration += step_beats;
        }
    }

    let mut chords: Vec<ChordEvent> = Vec::new();
    let mut current: Option<(usize, usize)> = None; // (class, start step)
    for (i, s) in steps.iter().enumerate() {
        let class = s.chord_class();
        let changed = class != current.map(|(c, _)| c);
        if changed {
            if let Some((c, start)) = current.take() {
                chords.push(chord_event(vocab, c, start, i));
            }
            current = class.map(|c| (c, i));
        }
    }
    if let Some((c, start)) = current {
        chords.push(chord_event(vocab, c, start, steps.len()));
    }
    Ok((notes, chords))
}

fn chord_event(vocab: &ChordVocab, class: usize, start: usize, end: usize) -> ChordEvent {
    let (root, quality) = vocab.entries[class].clone();
    ChordEvent {
        onset: beats(start as i64, 4),
        duration: beats((end - start) as i64, 4),
        root,
        quality,
    }
}

pub fn pack_steps(steps: &[TimestepVector]) -> [u8; PACKED_BYTES] {
    let mut bytes = [0u8; PACKED_BYTES];
    for (t, step) in steps.iter().enumerate() {
        for (f, &bit) in step.bits.iter().enumerate() {
            if bit {
                let pos = t * FEATURE_DIM + f;
                bytes[pos / 8] |= 1 << (pos % 8);
            }
        }
    }
    bytes
}

pub fn unpack_steps(bytes: &[u8; PACKED_BYTES]) -> Vec<TimestepVector> {
    let mut steps = vec![TimestepVector::zeros(); SEGMENT_STEPS];
    for (t, step) in steps.iter_mut().enumerate() {
        for f in 0..FEATURE_DIM {
            let pos = t * FEATURE_DIM + f;
            step.bits[f] = bytes[pos / 8] & (1 << (pos % 8)) != 0;
        }
    }
    steps
}

/// Window sequence of one song: (start beat, canonical segment id) in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SongSequence {
    pub song_id: u32,
    pub entries: Vec<(u32, u32)>,
}

/// Canonical deduplicated segments plus per-song window sequences.
#[derive(Debug, Clone)]
pub struct SegmentStore {
    pub segments: Vec<SegmentTensor>,
    pub sequences: Vec<SongSequence>,
    /// Timesteps whose chord was outside the vocabulary (zero-encoded).
    pub oov_chord_steps: u64,
    pub total_steps: u64,
}

impl SegmentStore {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Ids of segments that open at least one source song.
    pub fn song_start_ids(&self) -> BTreeSet<u32> {
        self.sequences
            .iter()
            .filter_map(|seq| seq.entries.first().map(|&(_, id)| id))
            .collect()
    }
}

/// Encodes and deduplicates segments. Bit-identical tensors share one id whose
/// `song_ids` is the union of their sources.
pub fn build_store(
    songs: &[(QuantizedSong, Vec<RawSegment>)],
    vocab: &ChordVocab,
) -> SegmentStore {
    let mut segments: Vec<SegmentTensor> = Vec::new();
    let mut by_bits: HashMap<[u8; PACKED_BYTES], u32> = HashMap::new();
    let mut sequences = Vec::new();
    let mut oov = 0u64;
    let mut total = 0u64;

    for (qsong, raws) in songs {
        let mut entries = Vec::with_capacity(raws.len());
        for raw in raws {
            let (steps, step_oov) = encode_segment(raw, vocab);
            oov += step_oov as u64;
            total += steps.len() as u64;
            let key = pack_steps(&steps);
            let id = match by_bits.get(&key) {
                Some(&id) => {
                    segments[id as usize].song_ids.insert(qsong.song_id);
                    id
                }
                None => {
                    let id = segments.len() as u32;
                    by_bits.insert(key, id);
                    let mut song_ids = BTreeSet::new();
                    song_ids.insert(qsong.song_id);
                    segments.push(SegmentTensor {
                        segment_id: id,
                        song_ids,
                        steps,
                    });
                    id
                }
            };
            entries.push((raw.start_beat as u32, id));
        }
        sequences.push(SongSequence {
            song_id: qsong.song_id,
            entries,
        });
    }

    SegmentStore {
        segments,
        sequences,
        oov_chord_steps: oov,
        total_steps: total,
    }
}

// --- persistence ------------------------------------------------------------

const STORE_MAGIC: &[u8; 8] = b"SGSTORE1";
const STORE_VERSION: u32 = 1;

pub fn save_store(store: &SegmentStore, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(STORE_MAGIC)?;
    w.write_all(&STORE_VERSION.to_le_bytes())?;
    w.write_all(&(store.segments.len() as u32).to_le_bytes())?;
    for seg in &store.segments {
        w.write_all(&seg.segment_id.to_le_bytes())?;
        w.write_all(&pack_steps(&seg.steps))?;
        w.write_all(&(seg.song_ids.len() as u32).to_le_bytes())?;
        for &sid in &seg.song_ids {
            w.write_all(&sid.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Sequences are stored beside the binary store as a text table:
/// `song_id,start_beat,segment_id` per window.
pub fn save_sequences(store: &SegmentStore, path: &Path) -> Result<()> {
    let mut out = String::new();
    for seq in &store.sequences {
        for &(start, id) in &seq.entries {
            out.push_str(&format!("{},{},{}\n", seq.song_id, start, id));
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_store(store_path: &Path, sequences_path: &Path) -> Result<SegmentStore> {
    let mut r = std::io::BufReader::new(std::fs::File::open(store_path)?);
    let bad = |detail: &str| Error::Format {
        path: store_path.to_path_buf(),
        detail: detail.to_string(),
    };
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != STORE_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != STORE_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut segments = Vec::with_capacity(count);
    for _ in 0..count {
        let id = read_u32(&mut r)?;
        let mut bits = [0u8; PACKED_BYTES];
        r.read_exact(&mut bits)?;
        let n_songs = read_u32(&mut r)? as usize;
        let mut song_ids = BTreeSet::new();
        for _ in 0..n_songs {
            song_ids.insert(read_u32(&mut r)?);
        }
        segments.push(SegmentTensor {
            segment_id: id,
            song_ids,
            steps: unpack_steps(&bits),
        });
    }

    let text = std::fs::read_to_string(sequences_path)?;
    let mut sequences: Vec<SongSequence> = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Format {
                path: sequences_path.to_path_buf(),
                detail: format!("bad sequence line '{line}'"),
            });
        }
        let song_id: u32 = parts[0].parse().map_err(|_| Error::Format {
            path: sequences_path.to_path_buf(),
            detail: format!("bad song id in '{line}'"),
        })?;
        let start: u32 = parts[1].parse().unwrap_or(0);
        let seg: u32 = parts[2].parse().unwrap_or(0);
        match sequences.last_mut() {
            Some(s) if s.song_id == song_id => s.entries.push((start, seg)),
            _ => sequences.push(SongSequence {
                song_id,
                entries: vec![(start, seg)],
            }),
        }
    }

    Ok(SegmentStore {
        segments,
        sequences,
        oov_chord_steps: 0,
        total_steps: 0,
    })
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{QuantStep, QuantizedSong, RawSegment};
    use rand::{Rng, SeedableRng};

    fn test_vocab() -> ChordVocab {
        let entries: Vec<(u8, ChordQuality)> = vec![
            (0, ChordQuality::Major),
            (7, ChordQuality::Major),
            (5, ChordQuality::Major),
            (7, ChordQuality::Seventh),
            (9, ChordQuality::Minor),
            (2, ChordQuality::Minor),
            (4, ChordQuality::Minor),
            (0, ChordQuality::Seventh),
            (2, ChordQuality::Seventh),
            (9, ChordQuality::Seventh),
            (4, ChordQuality::Seventh),
            (11, ChordQuality::Diminished),
        ];
        let counts = (0..12).map(|i| 100 - i as u64).collect();
        ChordVocab::new(entries, counts)
    }

    fn raw_segment(cells: Vec<QuantStep>) -> RawSegment {
        assert_eq!(cells.len(), SEGMENT_STEPS);
        RawSegment {
            song_id: 0,
            start_beat: 0,
            states: cells,
        }
    }

    fn quarter_note_segment() -> RawSegment {
        let mut cells = Vec::new();
        for step in 0..SEGMENT_STEPS {
            let pitch = 60 + (step / 4) as u8 * 2;
            cells.push(QuantStep {
                articulated: step % 4 == 0,
                pitch: Some(pitch),
                chord: Some((0, ChordQuality::Major)),
                contaminated: false,
            });
        }
        raw_segment(cells)
    }

    #[test]
    fn encode_articulated_c4_over_c_major() {
        let vocab = test_vocab();
        let mut cells = vec![QuantStep::rest(); SEGMENT_STEPS];
        cells[0] = QuantStep {
            articulated: true,
            pitch: Some(60),
            chord: Some((0, ChordQuality::Major)),
            contaminated: false,
        };
        let (steps, oov) = encode_segment(&raw_segment(cells), &vocab);
        assert_eq!(oov, 0);
        let v = &steps[0];
        assert!(v.bits[0]);
        assert!(v.bits[2], "octave bin 1 is bit 2");
        assert!(v.bits[5], "pitch class 0 is bit 5");
        assert!(v.bits[17], "chord class 0 is bit 17");
        assert_eq!(v.bits.iter().filter(|&&b| b).count(), 4);
        // All later steps are rests with no chord.
        assert!(steps[1..].iter().all(|s| s.bits.iter().all(|&b| !b)));
    }

    #[test]
    fn encode_rest_is_all_zero_and_sustain_drops_bit0() {
        let vocab = test_vocab();
        let mut cells = vec![QuantStep::rest(); SEGMENT_STEPS];
        cells[1] = QuantStep {
            articulated: false,
            pitch: Some(60),
            chord: None,
            contaminated: false,
        };
        let (steps, _) = encode_segment(&raw_segment(cells), &vocab);
        assert!(steps[0].bits.iter().all(|&b| !b));
        assert!(!steps[1].bits[0]);
        assert!(steps[1].bits[2] && steps[1].bits[5]);
    }

    #[test]
    fn encode_octave_window_clamps() {
        let vocab = test_vocab();
        for (pitch, bin) in [(47u8, 0usize), (48, 0), (60, 1), (72, 2), (84, 3), (96, 3)] {
            let mut cells = vec![QuantStep::rest(); SEGMENT_STEPS];
            cells[0].pitch = Some(pitch);
            let (steps, _) = encode_segment(&raw_segment(cells), &vocab);
            assert_eq!(steps[0].octave(), Some(bin), "pitch {pitch}");
        }
    }

    #[test]
    fn out_of_vocab_chord_encodes_zero_and_counts() {
        let vocab = test_vocab();
        let mut cells = vec![QuantStep::rest(); SEGMENT_STEPS];
        cells[0].chord = Some((1, ChordQuality::Augmented));
        let (steps, oov) = encode_segment(&raw_segment(cells), &vocab);
        assert_eq!(oov, 1);
        assert_eq!(steps[0].chord_class(), None);
    }

    #[test]
    fn decode_round_trips_quarter_notes() {
        let vocab = test_vocab();
        let raw = quarter_note_segment();
        let (steps, _) = encode_segment(&raw, &vocab);
        let (notes, chords) = decode_segment(&steps, &vocab).unwrap();
        assert_eq!(notes.len(), 4);
        for (i, n) in notes.iter().enumerate() {
            assert_eq!(n.onset, beats(i as i64, 1));
            assert_eq!(n.duration, beats(1, 1));
            assert_eq!(n.pitch, Some(60 + 2 * i as u8));
        }
        assert_eq!(chords.len(), 1);
        assert_eq!(chords[0].duration, beats(4, 1));
    }

    #[test]
    fn decode_all_zero_is_one_rest() {
        let vocab = test_vocab();
        let steps = vec![TimestepVector::zeros(); SEGMENT_STEPS];
        let (notes, chords) = decode_segment(&steps, &vocab).unwrap();
        assert_eq!(notes.len(), 1);
        assert_eq!(notes[0].pitch, None);
        assert_eq!(notes[0].duration, beats(4, 1));
        assert!(chords.is_empty());
    }

    #[test]
    fn decode_rejects_inconsistent_state() {
        let vocab = test_vocab();
        let mut steps = vec![TimestepVector::zeros(); SEGMENT_STEPS];
        steps[3].bits[2] = true; // octave set, pitch class unset
        assert!(matches!(
            decode_segment(&steps, &vocab),
            Err(Error::InconsistentState { step: 3, .. })
        ));
    }

    #[test]
    fn vocab_orders_by_count_then_ordinal() {
        let mut grid = Vec::new();
        // 20 steps of C major, 10 of G major, single steps of 11 rare minors.
        for _ in 0..20 {
            grid.push(QuantStep {
                chord: Some((0, ChordQuality::Major)),
                ..QuantStep::rest()
            });
        }
        for _ in 0..10 {
            grid.push(QuantStep {
                chord: Some((7, ChordQuality::Major)),
                ..QuantStep::rest()
            });
        }
        for root in 0..11u8 {
            grid.push(QuantStep {
                chord: Some((root, ChordQuality::Minor)),
                ..QuantStep::rest()
            });
        }
        let song = QuantizedSong {
            song_id: 0,
            title: "v".into(),
            grid,
            beats_total: 0,
        };
        let vocab = build_chord_vocab(&[song]).unwrap();
        assert_eq!(vocab.entries[0], (0, ChordQuality::Major));
        assert_eq!(vocab.entries[1], (7, ChordQuality::Major));
        // Ties among the minors break by root ordinal.
        assert_eq!(vocab.entries[2], (0, ChordQuality::Minor));
        assert_eq!(vocab.entries.len(), 12);
    }

    #[test]
    fn vocab_requires_12_chords() {
        let song = QuantizedSong {
            song_id: 0,
            title: "few".into(),
            grid: vec![
                QuantStep {
                    chord: Some((0, ChordQuality::Major)),
                    ..QuantStep::rest()
                };
                40
            ],
            beats_total: 10,
        };
        assert!(matches!(
            build_chord_vocab(&[song]),
            Err(Error::FewerThan12Chords { found: 1 })
        ));
    }

    #[test]
    fn one_hot_exclusivity_on_random_segments() {
        let vocab = test_vocab();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let cells: Vec<QuantStep> = (0..SEGMENT_STEPS)
                .map(|_| QuantStep {
                    articulated: rng.gen_bool(0.5),
                    pitch: if rng.gen_bool(0.8) {
                        Some(rng.gen_range(40..100))
                    } else {
                        None
                    },
                    chord: if rng.gen_bool(0.7) {
                        Some((rng.gen_range(0..12), ChordQuality::Major))
                    } else {
                        None
                    },
                    contaminated: false,
                })
                .collect();
            let (steps, _) = encode_segment(&raw_segment(cells), &vocab);
            for s in &steps {
                assert!(s.validate());
            }
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let vocab = test_vocab();
        let raw = quarter_note_segment();
        let (a, _) = encode_segment(&raw, &vocab);
        let (b, _) = encode_segment(&raw, &vocab);
        assert_eq!(pack_steps(&a), pack_steps(&b));
    }

    #[test]
    fn pack_unpack_round_trip() {
        let vocab = test_vocab();
        let (steps, _) = encode_segment(&quarter_note_segment(), &vocab);
        let packed = pack_steps(&steps);
        assert_eq!(unpack_steps(&packed), steps);
    }

    #[test]
    fn store_dedups_with_song_union() {
        let vocab = test_vocab();
        let raw = quarter_note_segment();
        let mk_song = |id: u32| {
            (
                QuantizedSong {
                    song_id: id,
                    title: format!("s{id}"),
                    grid: vec![],
                    beats_total: 0,
                },
                vec![RawSegment {
                    song_id: id,
                    ..raw.clone()
                }],
            )
        };
        let songs = vec![mk_song(0), mk_song(1)];
        let store = build_store(&songs, &vocab);
        assert_eq!(store.segments.len(), 1);
        assert_eq!(
            store.segments[0].song_ids.iter().copied().collect::<Vec<_>>(),
            vec![0, 1]
        );
        assert_eq!(store.sequences.len(), 2);
        assert_eq!(store.song_start_ids().len(), 1);
    }

    #[test]
    fn store_save_load_round_trip() {
        let vocab = test_vocab();
        let raw = quarter_note_segment();
        let songs = vec![(
            QuantizedSong {
                song_id: 5,
                title: "s".into(),
                grid: vec![],
                beats_total: 0,
            },
            vec![raw.clone(), raw.clone()],
        )];
        let store = build_store(&songs, &vocab);
        let dir = tempfile::tempdir().unwrap();
        let sp = dir.path().join("segments.bin");
        let qp = dir.path().join("sequences.txt");
        save_store(&store, &sp).unwrap();
        save_sequences(&store, &qp).unwrap();
        let loaded = load_store(&sp, &qp).unwrap();
        assert_eq!(loaded.segments.len(), store.segments.len());
        assert_eq!(loaded.segments[0].steps, store.segments[0].steps);
        assert_eq!(loaded.segments[0].song_ids, store.segments[0].song_ids);
        assert_eq!(loaded.sequences, store.sequences);
    }

    #[test]
    fn vocab_save_load_round_trip() {
        let vocab = test_vocab();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        vocab.save(&path).unwrap();
        let loaded = ChordVocab::load(&path).unwrap();
        assert_eq!(loaded, vocab);
    }
}
