//! Composable-pair mining and the statistical negative filter.
//!
//! Positives are consecutive windows of the same song. Candidate negatives
//! are scored by boundary-state transition statistics: the probability that a
//! pair is secretly composable is the mean of a chord component and a melodic
//! pitch component, each a ratio of smoothed conditional probabilities
//! estimated from positive and sampled non-positive pairs. Negatives whose
//! score reaches the threshold are filtered out of training.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::features::{SegmentStore, SegmentTensor};

/// Chord states: 12 vocabulary classes plus "no chord".
pub const CHORD_STATES: usize = 13;
const NO_CHORD: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SegmentPair {
    pub i: u32,
    pub j: u32,
    pub label: bool,
}

impl SegmentPair {
    pub fn positive(i: u32, j: u32) -> Self {
        SegmentPair { i, j, label: true }
    }

    pub fn negative(i: u32, j: u32) -> Self {
        SegmentPair { i, j, label: false }
    }

    pub fn key(&self) -> (u32, u32) {
        (self.i, self.j)
    }
}

/// Boundary states of every canonical segment: chord and melodic pitch at the
/// first and last timestep.
#[derive(Debug, Clone)]
pub struct Boundaries {
    pub first_chord: Vec<usize>,
    pub last_chord: Vec<usize>,
    pub first_pitch: Vec<Option<u8>>,
    pub last_pitch: Vec<Option<u8>>,
}

pub fn boundaries(segments: &[SegmentTensor]) -> Boundaries {
    let chord_state =
        |s: &SegmentTensor, step: usize| s.steps[step].chord_class().unwrap_or(NO_CHORD);
    let pitch_state = |s: &SegmentTensor, step: usize| s.steps[step].pitch().ok().flatten();
    let last = crate::features::SEGMENT_STEPS - 1;
    Boundaries {
        first_chord: segments.iter().map(|s| chord_state(s, 0)).collect(),
        last_chord: segments.iter().map(|s| chord_state(s, last)).collect(),
        first_pitch: segments.iter().map(|s| pitch_state(s, 0)).collect(),
        last_pitch: segments.iter().map(|s| pitch_state(s, last)).collect(),
    }
}

/// One consecutive-window pair per song occurrence; label 1. Windows dropped
/// for contamination break consecutiveness (start beats must differ by 2).
pub fn extract_positive_pairs(store: &SegmentStore) -> Vec<SegmentPair> {
    let mut out = Vec::new();
    for seq in &store.sequences {
        for w in seq.entries.windows(2) {
            let (start_a, id_a) = w[0];
            let (start_b, id_b) = w[1];
            if start_b == start_a + 2 {
                out.push(SegmentPair::positive(id_a, id_b));
            }
        }
    }
    out
}

/// Smoothed conditional transition tables for chord and pitch boundary states.
#[derive(Debug, Clone)]
pub struct TransitionStats {
    /// Melodic pitch alphabet observed at segment boundaries; `None` is REST.
    pub pitch_alphabet: Vec<Option<u8>>,
    pitch_index: HashMap<Option<u8>, usize>,
    pub chord_pos: Vec<Vec<f64>>,
    pub chord_neg: Vec<Vec<f64>>,
    pub pitch_pos: Vec<Vec<f64>>,
    pub pitch_neg: Vec<Vec<f64>>,
}

fn smooth(counts: &[Vec<u64>]) -> Vec<Vec<f64>> {
    let states = counts.len();
    counts
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            let den = total as f64 + states as f64;
            row.iter().map(|&c| (c as f64 + 1.0) / den).collect()
        })
        .collect()
}

impl TransitionStats {
    pub fn pitch_state(&self, p: Option<u8>) -> Option<usize> {
        self.pitch_index.get(&p).copied()
    }

    fn from_counts(
        pitch_alphabet: Vec<Option<u8>>,
        chord_pos: &[Vec<u64>],
        chord_neg: &[Vec<u64>],
        pitch_pos: &[Vec<u64>],
        pitch_neg: &[Vec<u64>],
    ) -> Self {
        let pitch_index = pitch_alphabet
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, i))
            .collect();
        TransitionStats {
            pitch_alphabet,
            pitch_index,
            chord_pos: smooth(chord_pos),
            chord_neg: smooth(chord_neg),
            pitch_pos: smooth(pitch_pos),
            pitch_neg: smooth(pitch_neg),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let chord_name = |s: usize| {
            if s == NO_CHORD {
                "none".to_string()
            } else {
                s.to_string()
            }
        };
        let pitch_name = |p: Option<u8>| match p {
            None => "rest".to_string(),
            Some(x) => x.to_string(),
        };
        for i in 0..CHORD_STATES {
            for j in 0..CHORD_STATES {
                out.push_str(&format!(
                    "chord,{},{},{},{}\n",
                    chord_name(i),
                    chord_name(j),
                    self.chord_pos[i][j],
                    self.chord_neg[i][j]
                ));
            }
        }
        for (i, &pi) in self.pitch_alphabet.iter().enumerate() {
            for (j, &pj) in self.pitch_alphabet.iter().enumerate() {
                out.push_str(&format!(
                    "pitch,{},{},{},{}\n",
                    pitch_name(pi),
                    pitch_name(pj),
                    self.pitch_pos[i][j],
                    self.pitch_neg[i][j]
                ));
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// The melodic pitch alphabet: every pitch state observed at any segment
/// boundary, with REST always included. Sorted for determinism.
fn pitch_alphabet(bounds: &Boundaries) -> Vec<Option<u8>> {
    let mut set: HashSet<Option<u8>> = HashSet::new();
    set.insert(None);
    for &p in bounds.first_pitch.iter().chain(bounds.last_pitch.iter()) {
        set.insert(p);
    }
    let mut v: Vec<Option<u8>> = set.into_iter().collect();
    v.sort();
    v
}

/// Estimates the conditional tables with add-one smoothing. Negative
/// statistics come from `neg_sample_size` uniformly sampled non-positive
/// pairs rather than the quadratic enumeration.
pub fn estimate_stats(
    positives: &[SegmentPair],
    segments: &[SegmentTensor],
    rng: &mut impl Rng,
    neg_sample_size: usize,
) -> TransitionStats {
    let bounds = boundaries(segments);
    let alphabet = pitch_alphabet(&bounds);
    let pitch_index: HashMap<Option<u8>, usize> = alphabet
        .iter()
        .enumerate()
        .map(|(i, &p)| (p, i))
        .collect();
    let p_states = alphabet.len();

    let mut chord_pos = vec![vec![0u64; CHORD_STATES]; CHORD_STATES];
    let mut chord_neg = vec![vec![0u64; CHORD_STATES]; CHORD_STATES];
    let mut pitch_pos = vec![vec![0u64; p_states]; p_states];
    let mut pitch_neg = vec![vec![0u64; p_states]; p_states];

    for p in positives {
        let (i, j) = (p.i as usize, p.j as usize);
        chord_pos[bounds.last_chord[i]][bounds.first_chord[j]] += 1;
        pitch_pos[pitch_index[&bounds.last_pitch[i]]][pitch_index[&bounds.first_pitch[j]]] += 1;
    }

    let positive_keys: HashSet<(u32, u32)> = positives.iter().map(|p| p.key()).collect();
    let n = segments.len() as u32;
    if n > 1 {
        let mut drawn = 0usize;
        while drawn < neg_sample_size {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            if i == j || positive_keys.contains(&(i, j)) {
                continue;
            }
            chord_neg[bounds.last_chord[i as usize]][bounds.first_chord[j as usize]] += 1;
            pitch_neg[pitch_index[&bounds.last_pitch[i as usize]]]
                [pitch_index[&bounds.first_pitch[j as usize]]] += 1;
            drawn += 1;
        }
    }

    TransitionStats::from_counts(alphabet, &chord_pos, &chord_neg, &pitch_pos, &pitch_neg)
}

fn component(p_pos: f64, p_neg: f64) -> f64 {
    let den = p_pos + p_neg;
    if den <= 0.0 {
        0.5
    } else {
        p_pos / den
    }
}

/// Probability that the ordered pair (i, j) is composable: the mean of the
/// chord and pitch ratio components.
pub fn prob_positive(stats: &TransitionStats, bounds: &Boundaries, i: u32, j: u32) -> f64 {
    let (i, j) = (i as usize, j as usize);
    let chord = component(
        stats.chord_pos[bounds.last_chord[i]][bounds.first_chord[j]],
        stats.chord_neg[bounds.last_chord[i]][bounds.first_chord[j]],
    );
    let pitch = match (
        stats.pitch_state(bounds.last_pitch[i]),
        stats.pitch_state(bounds.first_pitch[j]),
    ) {
        (Some(a), Some(b)) => component(stats.pitch_pos[a][b], stats.pitch_neg[a][b]),
        _ => 0.5,
    };
    (chord + pitch) / 2.0
}

/// Uniform rejection sampling of negatives: not positive, not a self-pair,
/// not excluded, and scored below the threshold.
#[allow(clippy::too_many_arguments)]
pub fn sample_negatives(
    n_segments: usize,
    stats: &TransitionStats,
    bounds: &Boundaries,
    positive_keys: &HashSet<(u32, u32)>,
    exclude: &HashSet<(u32, u32)>,
    threshold: f64,
    n: usize,
    rng: &mut impl Rng,
) -> Result<Vec<SegmentPair>> {
    if threshold <= 0.0 || n == 0 {
        return Ok(Vec::new());
    }
    if n_segments < 2 {
        return Err(Error::ExhaustedCandidates {
            attempts: 0,
            accepted: 0,
            requested: n,
        });
    }
    let mut out = Vec::with_capacity(n);
    let mut seen: HashSet<(u32, u32)> = HashSet::new();
    let budget = (n as u64).saturating_mul(200).max(100_000);
    let mut attempts = 0u64;
    let top = n_segments as u32;
    while out.len() < n {
        if attempts >= budget {
            return Err(Error::ExhaustedCandidates {
                attempts,
                accepted: out.len(),
                requested: n,
            });
        }
        attempts += 1;
        let i = rng.gen_range(0..top);
        let j = rng.gen_range(0..top);
        if i == j
            || positive_keys.contains(&(i, j))
            || exclude.contains(&(i, j))
            || seen.contains(&(i, j))
        {
            continue;
        }
        if prob_positive(stats, bounds, i, j) < threshold {
            seen.insert((i, j));
            out.push(SegmentPair::negative(i, j));
        }
    }
    Ok(out)
}

/// Disjoint train/validation split. Validation withholds whole pair keys, so
/// a duplicated positive occurrence can never leak into training.
#[derive(Debug, Clone)]
pub struct PairSplit {
    pub train_pos: Vec<SegmentPair>,
    pub train_neg: Vec<SegmentPair>,
    pub val_pos: Vec<SegmentPair>,
    pub val_neg: Vec<SegmentPair>,
}

pub fn split_validation(
    positives: &[SegmentPair],
    negatives: &[SegmentPair],
    n_val_pos: usize,
    n_val_neg: usize,
    rng: &mut impl Rng,
) -> Result<PairSplit> {
    let mut pos_keys: Vec<(u32, u32)> = {
        let mut seen = HashSet::new();
        positives
            .iter()
            .map(|p| p.key())
            .filter(|k| seen.insert(*k))
            .collect()
    };
    if pos_keys.len() < n_val_pos {
        return Err(Error::InsufficientPairs {
            label: "positive",
            requested: n_val_pos,
            available: pos_keys.len(),
        });
    }
    if negatives.len() < n_val_neg {
        return Err(Error::InsufficientPairs {
            label: "negative",
            requested: n_val_neg,
            available: negatives.len(),
        });
    }
    shuffle(&mut pos_keys, rng);
    let val_keys: HashSet<(u32, u32)> = pos_keys[..n_val_pos].iter().copied().collect();

    let val_pos: Vec<SegmentPair> = pos_keys[..n_val_pos]
        .iter()
        .map(|&(i, j)| SegmentPair::positive(i, j))
        .collect();
    let train_pos: Vec<SegmentPair> = positives
        .iter()
        .filter(|p| !val_keys.contains(&p.key()))
        .copied()
        .collect();

    let mut neg = negatives.to_vec();
    shuffle(&mut neg, rng);
    let val_neg: Vec<SegmentPair> = neg[..n_val_neg].to_vec();
    let train_neg: Vec<SegmentPair> = neg[n_val_neg..].to_vec();

    Ok(PairSplit {
        train_pos,
        train_neg,
        val_pos,
        val_neg,
    })
}

/// Fisher-Yates with the caller's seeded source.
pub fn shuffle<T>(items: &mut [T], rng: &mut impl Rng) {
    for k in (1..items.len()).rev() {
        let m = rng.gen_range(0..=k);
        items.swap(k, m);
    }
}

pub fn save_split(split: &PairSplit, path: &Path) -> Result<()> {
    let mut out = String::new();
    for p in &split.val_pos {
        out.push_str(&format!("val_pos,{},{}\n", p.i, p.j));
    }
    for p in &split.val_neg {
        out.push_str(&format!("val_neg,{},{}\n", p.i, p.j));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_split(path: &Path) -> Result<(Vec<SegmentPair>, Vec<SegmentPair>)> {
    let text = std::fs::read_to_string(path)?;
    let mut val_pos = Vec::new();
    let mut val_neg = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                detail: format!("bad split line '{line}'"),
            });
        }
        let i: u32 = parts[1].parse().unwrap_or(0);
        let j: u32 = parts[2].parse().unwrap_or(0);
        match parts[0] {
            "val_pos" => val_pos.push(SegmentPair::positive(i, j)),
            "val_neg" => val_neg.push(SegmentPair::negative(i, j)),
            other => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    detail: format!("unknown split kind '{other}'"),
                })
            }
        }
    }
    Ok((val_pos, val_neg))
}
