//! Shared test support: a deterministic synthetic folk-tune corpus in ABC,
//! plus small fixture helpers.
//!
//! The generator writes diatonic melodies with measure-aligned chord symbols,
//! pickups, repeats, sustains across barlines, occasional triplets, and a mix
//! of keys and meters, so the whole ingest pipeline gets exercised the same
//! way a real collection would exercise it.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use seghash::config::PipelineConfig;
use seghash::neural::BitStep;

const LETTERS: [char; 7] = ['C', 'D', 'E', 'F', 'G', 'A', 'B'];

/// Key table: (K header, tonic natural index 0..6 relative to C, sharp-side?)
const MAJOR_KEYS: [(&str, usize, bool); 6] = [
    ("C", 0, true),
    ("G", 4, true),
    ("D", 1, true),
    ("A", 5, true),
    ("F", 3, false),
    ("Bb", 6, false),
];

/// ABC text for a natural (white-key) note at diatonic index `n`
/// (0 = C4, 7 = C5, ...).
fn natural_note(n: i32) -> String {
    let letter = LETTERS[n.rem_euclid(7) as usize];
    let octave = n.div_euclid(7); // 0 = the C4 octave
    let mut s = String::new();
    if octave >= 1 {
        s.push(letter.to_ascii_lowercase());
        for _ in 1..octave {
            s.push('\'');
        }
    } else {
        s.push(letter);
        for _ in 0..(-octave) {
            s.push(',');
        }
    }
    s
}

const SHARP_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];
const FLAT_NAMES: [&str; 12] = [
    "C", "Db", "D", "Eb", "E", "F", "Gb", "G", "Ab", "A", "Bb", "B",
];
const LETTER_PCS: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];

/// Diatonic chord for a scale degree of the major key, as (symbol, weight).
fn degree_chord(tonic_pc: i32, degree: usize, sharp_side: bool, rng: &mut ChaCha8Rng) -> String {
    let names = if sharp_side { SHARP_NAMES } else { FLAT_NAMES };
    let root = ((tonic_pc + LETTER_PCS[degree]) % 12) as usize;
    let suffix = match degree {
        0 => {
            if rng.gen_bool(0.15) {
                "7"
            } else {
                ""
            }
        }
        1 => {
            if rng.gen_bool(0.3) {
                "m7"
            } else {
                "m"
            }
        }
        2 => "m",
        3 => "",
        4 => {
            if rng.gen_bool(0.5) {
                "7"
            } else {
                ""
            }
        }
        5 => {
            if rng.gen_bool(0.2) {
                "m7"
            } else {
                "m"
            }
        }
        _ => "dim",
    };
    format!("{}{}", names[root], suffix)
}

struct TuneSpec {
    key: &'static str,
    tonic_natural: usize,
    tonic_pc: i32,
    sharp_side: bool,
    meter: (u32, u32),
    measures: usize,
    pickup: bool,
    repeat: bool,
    triplets: bool,
}

/// One synthetic tune. Melodies stay on scale tones within roughly two
/// octaves of the tonic so every pitch survives transposition inside the
/// encoder's four-octave window.
fn gen_tune(x_id: usize, rng: &mut ChaCha8Rng) -> (String, bool) {
    // Mostly 4/4 majors; minors and odd meters exercise the filter.
    let meter_roll = rng.gen_range(0..100);
    let (meter, meter_txt) = if meter_roll < 78 {
        ((4u32, 4u32), "4/4")
    } else if meter_roll < 88 {
        ((2, 4), "2/4")
    } else if meter_roll < 95 {
        ((3, 4), "3/4")
    } else {
        ((6, 8), "6/8")
    };
    let minor = rng.gen_bool(0.12);
    let (key_name, tonic_natural, sharp_side) = MAJOR_KEYS[rng.gen_range(0..MAJOR_KEYS.len())];
    let retained = !minor && matches!(meter, (4, 4) | (2, 4));

    let spec = TuneSpec {
        key: key_name,
        tonic_natural,
        tonic_pc: LETTER_PCS[tonic_natural],
        sharp_side,
        meter,
        measures: if rng.gen_bool(0.5) { 8 } else { 12 },
        pickup: rng.gen_bool(0.15),
        repeat: rng.gen_bool(0.3),
        triplets: rng.gen_bool(0.08),
    };

    let mut body = String::new();
    // Melody position in diatonic steps above the tonic (tonic octave 4/5).
    let base = spec.tonic_natural as i32 + if spec.tonic_natural >= 4 { 0 } else { 7 };
    let mut degree = 0i32; // relative scale degree
    let units_per_measure = (spec.meter.0 * 8 / spec.meter.1) as i32;

    let walk = |rng: &mut ChaCha8Rng, degree: &mut i32| -> i32 {
        let step = match rng.gen_range(0..10) {
            0..=3 => 1,
            4..=6 => -1,
            7 => 2,
            8 => -2,
            _ => {
                if rng.gen_bool(0.5) {
                    3
                } else {
                    -3
                }
            }
        };
        *degree = (*degree + step).clamp(-3, 10);
        base + *degree
    };

    if spec.pickup {
        let n = natural_note(walk(rng, &mut degree));
        body.push_str(&format!("{n} | "));
    }
    if spec.repeat {
        body.push_str("|: ");
    }

    let mut sustain_into_next: Option<String> = None;
    for m in 0..spec.measures {
        if spec.repeat && m == spec.measures / 2 {
            body.push_str(":| ");
        }
        let mut units = 0i32;
        let mut first_of_measure = true;
        while units < units_per_measure {
            // Chord symbols on beats 0 and 2.
            if units == 0 || (units == 4 && units_per_measure >= 8) {
                let deg = match rng.gen_range(0..10) {
                    0..=3 => 0,
                    4..=5 => 4,
                    6 => 3,
                    7 => 5,
                    8 => 1,
                    _ => rng.gen_range(0..7),
                };
                body.push_str(&format!(
                    "\"{}\"",
                    degree_chord(spec.tonic_pc, deg, spec.sharp_side, rng)
                ));
            }
            if let Some(tied) = sustain_into_next.take() {
                // Continuation of a note tied across the barline.
                body.push_str(&format!("{tied}2 "));
                units += 2;
                first_of_measure = false;
                continue;
            }
            let remaining = units_per_measure - units;
            let choice = rng.gen_range(0..12);
            if spec.triplets && remaining >= 2 && choice == 0 {
                let a = natural_note(walk(rng, &mut degree));
                let b = natural_note(walk(rng, &mut degree));
                let c = natural_note(walk(rng, &mut degree));
                body.push_str(&format!("(3{a}{b}{c} "));
                units += 2;
            } else if remaining >= 4 && choice <= 2 {
                let n = natural_note(walk(rng, &mut degree));
                if remaining == 4 && rng.gen_bool(0.35) && m + 1 < spec.measures {
                    // Half note tied into the next measure.
                    body.push_str(&format!("{n}4- | "));
                    sustain_into_next = Some(n);
                    units += 4;
                    continue;
                }
                body.push_str(&format!("{n}4 "));
                units += 4;
            } else if choice <= 5 {
                let n = natural_note(walk(rng, &mut degree));
                body.push_str(&format!("{n}2 "));
                units += 2;
            } else if choice == 6 && remaining >= 2 {
                body.push_str("z2 ");
                units += 2;
            } else if choice == 7 && remaining >= 2 {
                let a = natural_note(walk(rng, &mut degree));
                let b = natural_note(walk(rng, &mut degree));
                body.push_str(&format!("{a}/{b}/{a}/{b}/ "));
                let _ = first_of_measure;
                units += 2;
            } else {
                let a = natural_note(walk(rng, &mut degree));
                let b = natural_note(walk(rng, &mut degree));
                body.push_str(&format!("{a} {b} "));
                units += 2;
            }
            first_of_measure = false;
        }
        if sustain_into_next.is_none() {
            body.push_str("| ");
        }
    }
    if spec.repeat {
        body.push_str(":| ");
    }
    body.push_str("|]");

    let key_header = if minor {
        format!("{}m", spec.key)
    } else {
        spec.key.to_string()
    };
    let tune = format!(
        "X:{x_id}\nT:Synthetic Tune {x_id}\nM:{meter_txt}\nL:1/8\nK:{key_header}\n{body}\n\n"
    );
    (tune, retained)
}

pub struct SynthCorpus {
    pub text: String,
    pub retained_songs: usize,
    pub total_songs: usize,
}

pub fn synth_corpus(n_songs: usize, seed: u64) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    let mut retained = 0;
    for x in 1..=n_songs {
        let (tune, kept) = gen_tune(x, &mut rng);
        text.push_str(&tune);
        if kept {
            retained += 1;
        }
    }
    SynthCorpus {
        text,
        retained_songs: retained,
        total_songs: n_songs,
    }
}

/// Writes the corpus under `dir/corpus.abc` and returns its path.
pub fn write_synth_corpus(dir: &Path, n_songs: usize, seed: u64) -> PathBuf {
    let path = dir.join("corpus.abc");
    std::fs::write(&path, synth_corpus(n_songs, seed).text).unwrap();
    path
}

/// Config sized for integration tests: small model, short pretraining.
pub fn test_config(corpus: &Path, workspace: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.corpus_dir = corpus.to_path_buf();
    cfg.workspace = workspace.to_path_buf();
    cfg.hidden_size = 16;
    cfg.pretrain_epochs = 2;
    cfg.epochs = 2;
    cfg.batch_pairs = 16;
    cfg.neg_stats_sample = 5_000;
    cfg.n_val_pos = 20;
    cfg.n_val_neg = 20;
    cfg.seed = 11;
    cfg
}

/// Random feature timesteps that satisfy the one-hot invariants.
pub fn random_segment_bits(rng: &mut ChaCha8Rng) -> Vec<BitStep> {
    (0..16)
        .map(|_| {
            let mut bits: BitStep = Vec::new();
            if rng.gen_bool(0.85) {
                if rng.gen_bool(0.5) {
                    bits.push(0);
                }
                bits.push(1 + rng.gen_range(0..4u8));
                bits.push(5 + rng.gen_range(0..12u8));
            }
            if rng.gen_bool(0.7) {
                bits.push(17 + rng.gen_range(0..12u8));
            }
            bits
        })
        .collect()
}
