//! Single-track standard MIDI file writer (format 0, 480 ticks per quarter).
//!
//! Melody goes out on channel 0; chords are realized as block triads (with a
//! seventh where the quality calls for one) on channel 1.

use num_rational::Ratio;

use crate::corpus::{Beats, ChordEvent, ChordQuality, NoteEvent};

pub const TICKS_PER_QUARTER: u16 = 480;

const MELODY_CHANNEL: u8 = 0;
const CHORD_CHANNEL: u8 = 1;
const MELODY_VELOCITY: u8 = 96;
const CHORD_VELOCITY: u8 = 72;

fn ticks(beats: Beats) -> u32 {
    let t = beats * Ratio::new(TICKS_PER_QUARTER as i64, 1);
    debug_assert!(t.is_integer(), "off-grid event at {beats}");
    t.to_integer().max(0) as u32
}

/// Chord tones above a root pitch class placed in the octave below middle C.
fn chord_pitches(root: u8, quality: &ChordQuality) -> Vec<u8> {
    let base = 48 + (root % 12);
    let (third, fifth) = match quality {
        ChordQuality::Minor | ChordQuality::MinorSeventh | ChordQuality::MinorSixth => (3, 7),
        ChordQuality::Diminished => (3, 6),
        ChordQuality::Augmented => (4, 8),
        ChordQuality::Suspended => (5, 7),
        _ => (4, 7),
    };
    let mut tones = vec![base, base + third, base + fifth];
    match quality {
        ChordQuality::Seventh | ChordQuality::MinorSeventh | ChordQuality::Ninth => {
            tones.push(base + 10)
        }
        ChordQuality::MajorSeventh => tones.push(base + 11),
        ChordQuality::Sixth | ChordQuality::MinorSixth => tones.push(base + 9),
        _ => {}
    }
    tones
}

fn push_varlen(out: &mut Vec<u8>, mut value: u32) {
    let mut stack = [0u8; 4];
    let mut n = 0;
    loop {
        stack[n] = (value & 0x7f) as u8;
        value >>= 7;
        n += 1;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        let mut byte = stack[i];
        if i > 0 {
            byte |= 0x80;
        }
        out.push(byte);
    }
}

/// Serializes the events as a complete standard MIDI file.
pub fn write_midi(melody: &[NoteEvent], chords: &[ChordEvent]) -> Vec<u8> {
    // (tick, order class, payload): offs sort before ons at the same tick.
    let mut events: Vec<(u32, u8, Vec<u8>)> = Vec::new();
    for n in melody {
        let Some(p) = n.pitch else { continue };
        let on = ticks(n.onset);
        let off = ticks(n.onset + n.duration);
        events.push((on, 1, vec![0x90 | MELODY_CHANNEL, p, MELODY_VELOCITY]));
        events.push((off, 0, vec![0x80 | MELODY_CHANNEL, p, 0]));
    }
    for c in chords {
        let on = ticks(c.onset);
        let off = ticks(c.onset + c.duration);
        for p in chord_pitches(c.root, &c.quality) {
            events.push((on, 1, vec![0x90 | CHORD_CHANNEL, p, CHORD_VELOCITY]));
            events.push((off, 0, vec![0x80 | CHORD_CHANNEL, p, 0]));
        }
    }
    events.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));

    let mut track = Vec::new();
    // Tempo meta: 120 bpm.
    push_varlen(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x51, 0x03, 0x07, 0xa1, 0x20]);
    let mut cursor = 0u32;
    for (tick, _, payload) in events {
        push_varlen(&mut track, tick - cursor);
        track.extend_from_slice(&payload);
        cursor = tick;
    }
    push_varlen(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(14 + 8 + track.len());
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes()); // format 0
    out.extend_from_slice(&1u16.to_be_bytes()); // one track
    out.extend_from_slice(&TICKS_PER_QUARTER.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}
