//! Score model and the corpus pipeline: filter, transpose, quantize, segment.
//!
//! A [`Score`] is a parsed tune (melody plus chord symbols, onsets in beats).
//! [`quantize`] flattens it onto a sixteenth-note grid and [`segment`] cuts
//! overlapping 4-beat windows out of the grid.

use num_rational::Ratio;

pub use crate::abc::{parse_abc, ParsedCorpus, RejectReason, TuneReject};

/// Onsets and durations are exact rationals measured in beats.
pub type Beats = Ratio<i64>;

pub const STEPS_PER_BEAT: usize = 4;
pub const SEGMENT_BEATS: usize = 4;
pub const SEGMENT_STEPS: usize = SEGMENT_BEATS * STEPS_PER_BEAT;
/// Window hop in timesteps (2-beat overlap between consecutive segments).
pub const SEGMENT_HOP: usize = SEGMENT_STEPS / 2;

pub fn beats(num: i64, den: i64) -> Beats {
    Ratio::new(num, den)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Major,
    Minor,
    Dorian,
    Phrygian,
    Lydian,
    Mixolydian,
    Locrian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Key {
    /// Tonic pitch class, 0..=11 with C = 0.
    pub tonic_pc: u8,
    pub mode: Mode,
}

/// Chord quality after normalizing the chord-symbol suffix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChordQuality {
    Major,
    Minor,
    Seventh,
    MinorSeventh,
    MajorSeventh,
    Sixth,
    MinorSixth,
    Ninth,
    Diminished,
    Augmented,
    Suspended,
    Other(String),
}

impl ChordQuality {
    /// Stable label used in the vocabulary file and in rendered chord symbols.
    pub fn label(&self) -> String {
        match self {
            ChordQuality::Major => "maj".into(),
            ChordQuality::Minor => "min".into(),
            ChordQuality::Seventh => "7".into(),
            ChordQuality::MinorSeventh => "m7".into(),
            ChordQuality::MajorSeventh => "maj7".into(),
            ChordQuality::Sixth => "6".into(),
            ChordQuality::MinorSixth => "m6".into(),
            ChordQuality::Ninth => "9".into(),
            ChordQuality::Diminished => "dim".into(),
            ChordQuality::Augmented => "aug".into(),
            ChordQuality::Suspended => "sus".into(),
            ChordQuality::Other(s) => format!("other:{s}"),
        }
    }

    pub fn from_label(label: &str) -> Self {
        match label {
            "maj" => ChordQuality::Major,
            "min" => ChordQuality::Minor,
            "7" => ChordQuality::Seventh,
            "m7" => ChordQuality::MinorSeventh,
            "maj7" => ChordQuality::MajorSeventh,
            "6" => ChordQuality::Sixth,
            "m6" => ChordQuality::MinorSixth,
            "9" => ChordQuality::Ninth,
            "dim" => ChordQuality::Diminished,
            "aug" => ChordQuality::Augmented,
            "sus" => ChordQuality::Suspended,
            other => ChordQuality::Other(other.strip_prefix("other:").unwrap_or(other).to_string()),
        }
    }
}

/// Melody event. `pitch` is a MIDI semitone index (middle C = 60); `None` is a rest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoteEvent {
    pub onset: Beats,
    pub duration: Beats,
    pub pitch: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChordEvent {
    pub onset: Beats,
    pub duration: Beats,
    /// Root pitch class, 0..=11.
    pub root: u8,
    pub quality: ChordQuality,
}

/// One parsed tune.
#[derive(Debug, Clone)]
pub struct Score {
    pub title: String,
    pub key: Key,
    /// Meter numerator/denominator as notated (C maps to 4/4, C| to 2/2).
    pub meter: (u32, u32),
    /// Unit note length as a fraction of a whole note.
    pub unit_note_length: Ratio<i64>,
    /// Time-ordered melody; rests are explicit events.
    pub melody: Vec<NoteEvent>,
    /// Time-ordered chord symbols with fill-forward durations.
    pub chords: Vec<ChordEvent>,
    /// Count of unsupported tokens skipped while parsing this tune.
    pub skipped_tokens: u32,
}

impl Score {
    pub fn beats_per_measure(&self) -> Beats {
        Ratio::new(self.meter.0 as i64, 1)
    }
}

/// Melodic state of one sixteenth-note timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimestepState {
    /// A note onset falls exactly on this timestep.
    pub articulated: bool,
    /// Sounding pitch, or `None` for rest.
    pub pitch: Option<u8>,
    /// Governing chord, or `None`.
    pub chord: Option<(u8, u8)>, // (root pc, quality ordinal index into the song's chord list)
    /// Some governing event is not representable on the sixteenth grid.
    pub contaminated: bool,
}

/// A whole song flattened onto the sixteenth grid.
#[derive(Debug, Clone)]
pub struct QuantizedSong {
    pub song_id: u32,
    pub title: String,
    pub grid: Vec<QuantStep>,
    pub beats_total: usize,
}

/// Grid cell carried by [`QuantizedSong`]; chord is the full (root, quality) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantStep {
    pub articulated: bool,
    pub pitch: Option<u8>,
    pub chord: Option<(u8, ChordQuality)>,
    pub contaminated: bool,
}

impl QuantStep {
    pub fn rest() -> Self {
        QuantStep {
            articulated: false,
            pitch: None,
            chord: None,
            contaminated: false,
        }
    }
}

/// A 16-timestep window of a quantized song.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawSegment {
    pub song_id: u32,
    /// Beat index of the window start; always even.
    pub start_beat: usize,
    pub states: Vec<QuantStep>,
}

/// Retains major-key songs in 2/4 or 4/4 (meter C counts as 4/4, C| as 2/2 and is dropped).
pub fn filter_songs(scores: Vec<Score>) -> Vec<Score> {
    scores
        .into_iter()
        .filter(|s| s.key.mode == Mode::Major && matches!(s.meter, (2, 4) | (4, 4)))
        .collect()
}

/// Signed semitone shift that moves `tonic_pc` to C, minimizing the absolute
/// shift and breaking the |6| tie downward.
pub fn transpose_shift(tonic_pc: u8) -> i8 {
    let up = ((12 - tonic_pc as i32) % 12) as i8;
    if up == 0 {
        0
    } else if up <= 5 {
        up
    } else {
        up - 12
    }
}

/// Transposes a major-key score to C major.
pub fn transpose_to_c(mut score: Score) -> Score {
    let shift = transpose_shift(score.key.tonic_pc) as i32;
    for note in &mut score.melody {
        if let Some(p) = note.pitch {
            let moved = (p as i32 + shift).clamp(0, 127);
            note.pitch = Some(moved as u8);
        }
    }
    for chord in &mut score.chords {
        chord.root = ((chord.root as i32 + shift).rem_euclid(12)) as u8;
    }
    score.key = Key {
        tonic_pc: 0,
        mode: score.key.mode,
    };
    score
}

fn on_grid(x: Beats) -> bool {
    (x * Ratio::new(STEPS_PER_BEAT as i64, 1)).is_integer()
}

/// Flattens a score onto the sixteenth grid.
///
/// Each cell carries (articulated?, pitch-or-rest, chord-or-none). A note is
/// articulated only at its onset timestep. Cells overlapped by an event whose
/// onset or duration is off the sixteenth grid are flagged contaminated.
pub fn quantize(score: &Score, song_id: u32) -> QuantizedSong {
    let steps_ratio = Ratio::new(STEPS_PER_BEAT as i64, 1);
    let mut end = Ratio::new(0, 1);
    for n in &score.melody {
        end = end.max(n.onset + n.duration);
    }
    for c in &score.chords {
        end = end.max(c.onset + c.duration);
    }
    let beats_total = end.ceil().to_integer().max(0) as usize;
    let n_steps = beats_total * STEPS_PER_BEAT;
    let mut grid = vec![QuantStep::rest(); n_steps];

    // Melody: later onsets win when events overlap (monophonic input).
    for n in &score.melody {
        let clean = on_grid(n.onset) && on_grid(n.duration);
        let start_step = (n.onset * steps_ratio).floor().to_integer().max(0) as usize;
        let end_exact = (n.onset + n.duration) * steps_ratio;
        let end_step = end_exact.ceil().to_integer().max(0) as usize;
        for cell in grid
            .iter_mut()
            .take(end_step.min(n_steps))
            .skip(start_step)
        {
            cell.pitch = n.pitch;
            cell.articulated = false;
            if !clean {
                cell.contaminated = true;
            }
        }
        // Articulation: exact on-grid onsets only.
        if n.pitch.is_some() && on_grid(n.onset) {
            let s = (n.onset * steps_ratio).to_integer() as usize;
            if s < n_steps {
                grid[s].articulated = true;
                grid[s].pitch = n.pitch;
            }
        }
    }

    // Chords: fill forward from each onset; an off-grid chord onset contaminates
    // the cell it lands in.
    for c in &score.chords {
        let start_step = (c.onset * steps_ratio).floor().to_integer().max(0) as usize;
        let end_exact = (c.onset + c.duration) * steps_ratio;
        let end_step = end_exact.ceil().to_integer().max(0) as usize;
        for cell in grid
            .iter_mut()
            .take(end_step.min(n_steps))
            .skip(start_step)
        {
            cell.chord = Some((c.root, c.quality.clone()));
        }
        if !on_grid(c.onset) {
            if let Some(cell) = grid.get_mut(start_step) {
                cell.contaminated = true;
            }
        }
    }

    QuantizedSong {
        song_id,
        title: score.title.clone(),
        grid,
        beats_total,
    }
}

/// Segmentation outcome: kept windows plus the number of windows dropped for
/// containing off-grid material.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub segments: Vec<RawSegment>,
    pub dropped_contaminated: usize,
}

/// Cuts 16-step windows every 8 steps. Windows running past the end are
/// dropped; windows containing any contaminated timestep are dropped and
/// counted.
pub fn segment(qsong: &QuantizedSong) -> Segmentation {
    let mut segments = Vec::new();
    let mut dropped = 0usize;
    let n = qsong.grid.len();
    let mut start = 0usize;
    while start + SEGMENT_STEPS <= n {
        let window = &qsong.grid[start..start + SEGMENT_STEPS];
        if window.iter().any(|c| c.contaminated) {
            dropped += 1;
        } else {
            segments.push(RawSegment {
                song_id: qsong.song_id,
                start_beat: start / STEPS_PER_BEAT,
                states: window.to_vec(),
            });
        }
        start += SEGMENT_HOP;
    }
    Segmentation {
        segments,
        dropped_contaminated: dropped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(onset: Beats, dur: Beats, pitch: u8) -> NoteEvent {
        NoteEvent {
            onset,
            duration: dur,
            pitch: Some(pitch),
        }
    }

    fn plain_score(meter: (u32, u32), tonic_pc: u8, mode: Mode, melody: Vec<NoteEvent>) -> Score {
        Score {
            title: "t".into(),
            key: Key { tonic_pc, mode },
            meter,
            unit_note_length: Ratio::new(1, 4),
            melody,
            chords: vec![],
            skipped_tokens: 0,
        }
    }

    #[test]
    fn filter_keeps_major_24_and_44_only() {
        let scores = vec![
            plain_score((4, 4), 0, Mode::Major, vec![]),
            plain_score((3, 4), 7, Mode::Major, vec![]),
            plain_score((4, 4), 9, Mode::Minor, vec![]),
            plain_score((2, 4), 2, Mode::Major, vec![]),
            plain_score((2, 2), 0, Mode::Major, vec![]),
        ];
        let kept = filter_songs(scores);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].meter, (4, 4));
        assert_eq!(kept[1].meter, (2, 4));
    }

    #[test]
    fn transpose_shift_minimizes_interval() {
        assert_eq!(transpose_shift(0), 0); // C
        assert_eq!(transpose_shift(7), 5); // G: +5 over -7
        assert_eq!(transpose_shift(2), -2); // D: -2 over +10
        assert_eq!(transpose_shift(5), -5); // F
        assert_eq!(transpose_shift(6), -6); // F#: tie broken downward
    }

    #[test]
    fn transpose_moves_pitches_and_roots() {
        let mut s = plain_score(
            (4, 4),
            7,
            Mode::Major,
            vec![note(beats(0, 1), beats(1, 1), 67)],
        );
        s.chords.push(ChordEvent {
            onset: beats(0, 1),
            duration: beats(4, 1),
            root: 7,
            quality: ChordQuality::Major,
        });
        let t = transpose_to_c(s);
        assert_eq!(t.melody[0].pitch, Some(72));
        assert_eq!(t.chords[0].root, 0);
        assert_eq!(t.key.tonic_pc, 0);
    }

    #[test]
    fn transpose_is_idempotent() {
        let s = plain_score(
            (4, 4),
            7,
            Mode::Major,
            vec![note(beats(0, 1), beats(1, 1), 67)],
        );
        let once = transpose_to_c(s);
        let twice = transpose_to_c(once.clone());
        assert_eq!(once.melody, twice.melody);
        assert_eq!(once.key, twice.key);
    }

    #[test]
    fn quantize_marks_articulation_only_at_onset() {
        let s = plain_score(
            (4, 4),
            0,
            Mode::Major,
            vec![note(beats(0, 1), beats(1, 1), 60)],
        );
        let q = quantize(&s, 0);
        assert_eq!(q.grid.len(), 4);
        assert!(q.grid[0].articulated);
        for (i, cell) in q.grid.iter().enumerate() {
            assert_eq!(cell.pitch, Some(60));
            if i > 0 {
                assert!(!cell.articulated);
            }
        }
    }

    #[test]
    fn quantize_flags_triplet_steps() {
        // Eighth-note triplet filling beat 2: onsets 2, 2+1/3, 2+2/3.
        let mut melody = vec![note(beats(0, 1), beats(2, 1), 60)];
        for k in 0..3i64 {
            melody.push(note(beats(2, 1) + beats(k, 3), beats(1, 3), 62));
        }
        melody.push(note(beats(3, 1), beats(1, 1), 64));
        let s = plain_score((4, 4), 0, Mode::Major, melody);
        let q = quantize(&s, 0);
        assert_eq!(q.grid.len(), 16);
        for step in 8..12 {
            assert!(q.grid[step].contaminated, "step {step} should be flagged");
        }
        for step in (0..8).chain(12..16) {
            assert!(!q.grid[step].contaminated, "step {step} should be clean");
        }
    }

    #[test]
    fn quantize_rest_has_no_pitch() {
        let s = plain_score(
            (4, 4),
            0,
            Mode::Major,
            vec![
                NoteEvent {
                    onset: beats(0, 1),
                    duration: beats(1, 1),
                    pitch: None,
                },
                note(beats(1, 1), beats(1, 1), 60),
            ],
        );
        let q = quantize(&s, 0);
        assert_eq!(q.grid[0].pitch, None);
        assert!(!q.grid[0].articulated);
        assert!(q.grid[4].articulated);
    }

    #[test]
    fn quantize_preserves_articulation_count() {
        let s = plain_score(
            (4, 4),
            0,
            Mode::Major,
            vec![
                note(beats(0, 1), beats(1, 2), 60),
                note(beats(1, 2), beats(1, 2), 62),
                note(beats(1, 1), beats(3, 1), 64),
            ],
        );
        let q = quantize(&s, 0);
        let bits = q.grid.iter().filter(|c| c.articulated).count();
        assert_eq!(bits, 3);
    }

    #[test]
    fn segment_window_arithmetic() {
        // 8-beat song -> 3 windows (beats 0-4, 2-6, 4-8).
        let s = plain_score(
            (4, 4),
            0,
            Mode::Major,
            vec![note(beats(0, 1), beats(8, 1), 60)],
        );
        let q = quantize(&s, 3);
        let seg = segment(&q);
        assert_eq!(seg.segments.len(), 3);
        assert_eq!(seg.dropped_contaminated, 0);
        assert_eq!(
            seg.segments.iter().map(|s| s.start_beat).collect::<Vec<_>>(),
            vec![0, 2, 4]
        );
        for s in &seg.segments {
            assert_eq!(s.states.len(), SEGMENT_STEPS);
            assert_eq!(s.start_beat % 2, 0);
            assert_eq!(s.song_id, 3);
        }
    }

    #[test]
    fn segment_too_short_song() {
        let s = plain_score(
            (4, 4),
            0,
            Mode::Major,
            vec![note(beats(0, 1), beats(3, 1), 60)],
        );
        let q = quantize(&s, 0);
        assert!(segment(&q).segments.is_empty());
    }

    #[test]
    fn segments_overlap_verbatim() {
        let mut melody = Vec::new();
        for b in 0..8i64 {
            melody.push(note(beats(b, 1), beats(1, 1), 60 + (b % 5) as u8));
        }
        let s = plain_score((4, 4), 0, Mode::Major, melody);
        let q = quantize(&s, 0);
        let segs = segment(&q).segments;
        for pair in segs.windows(2) {
            assert_eq!(pair[0].states[SEGMENT_HOP..], pair[1].states[..SEGMENT_HOP]);
        }
    }

    #[test]
    fn segment_drops_contaminated_windows() {
        let mut melody = vec![note(beats(0, 1), beats(4, 1), 60)];
        for k in 0..3i64 {
            melody.push(note(beats(4, 1) + beats(k, 3), beats(1, 3), 62));
        }
        melody.push(note(beats(5, 1), beats(5, 1), 64));
        let s = plain_score((4, 4), 0, Mode::Major, melody);
        let q = quantize(&s, 0);
        let seg = segment(&q);
        // 10 beats -> windows at 0, 2, 4, 6; beat 4 is contaminated, hitting
        // the windows starting at beats 2 and 4.
        assert_eq!(seg.segments.len() + seg.dropped_contaminated, 4);
        assert_eq!(seg.dropped_contaminated, 2);
        assert_eq!(
            seg.segments.iter().map(|s| s.start_beat).collect::<Vec<_>>(),
            vec![0, 6]
        );
    }
}
