//! Packed discrete codes, digit-wise Hamming distance, and exact retrieval.
//!
//! Digits are packed at ceil(log2 K) bits each, never straddling a 64-bit
//! word, so distance is XOR plus a per-digit nonzero count. Retrieval is an
//! exact linear scan: at corpus scale (~10^4 entries) a scan answers in
//! microseconds and keeps the nearest/farthest tiers exact.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::SegmentStore;
use crate::hashnet::compute_codes;
use crate::neural::{segment_bits, Model};

/// L digits packed into machine words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PackedCode {
    pub code_len: usize,
    pub arity: usize,
    pub words: Vec<u64>,
}

fn bits_per_digit(arity: usize) -> u32 {
    debug_assert!(arity >= 2);
    64 - ((arity - 1) as u64).leading_zeros()
}

fn digits_per_word(arity: usize) -> usize {
    (64 / bits_per_digit(arity)) as usize
}

impl PackedCode {
    pub fn pack(digits: &[u8], arity: usize) -> Self {
        let bpd = bits_per_digit(arity);
        let dpw = digits_per_word(arity);
        let n_words = digits.len().div_ceil(dpw);
        let mut words = vec![0u64; n_words];
        for (i, &d) in digits.iter().enumerate() {
            debug_assert!((d as usize) < arity);
            words[i / dpw] |= (d as u64) << ((i % dpw) as u32 * bpd);
        }
        PackedCode {
            code_len: digits.len(),
            arity,
            words,
        }
    }

    pub fn unpack(&self) -> Vec<u8> {
        let bpd = bits_per_digit(self.arity);
        let dpw = digits_per_word(self.arity);
        let mask = (1u64 << bpd) - 1;
        (0..self.code_len)
            .map(|i| ((self.words[i / dpw] >> ((i % dpw) as u32 * bpd)) & mask) as u8)
            .collect()
    }

    pub fn words_per_code(code_len: usize, arity: usize) -> usize {
        code_len.div_ceil(digits_per_word(arity))
    }
}

/// Count of digit positions (not raw bits) where the codes differ.
pub fn hamming(a: &PackedCode, b: &PackedCode) -> Result<u32> {
    if a.code_len != b.code_len || a.arity != b.arity {
        return Err(Error::ShapeMismatch {
            l_a: a.code_len,
            k_a: a.arity,
            l_b: b.code_len,
            k_b: b.arity,
        });
    }
    let bpd = bits_per_digit(a.arity);
    let dpw = digits_per_word(a.arity);
    // One bit at each digit's lowest position.
    let mut low_mask = 0u64;
    for i in 0..dpw {
        low_mask |= 1u64 << (i as u32 * bpd);
    }
    let mut count = 0u32;
    for (&wa, &wb) in a.words.iter().zip(b.words.iter()) {
        let x = wa ^ wb;
        let mut collapsed = x;
        for s in 1..bpd {
            collapsed |= x >> s;
        }
        count += (collapsed & low_mask).count_ones();
    }
    Ok(count)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexEntry {
    pub segment_id: u32,
    pub forward: PackedCode,
    pub backward: PackedCode,
    pub song_ids: Vec<u32>,
    pub is_song_start: bool,
}

/// All segments' packed codes with provenance, tied to the producing
/// checkpoint by checksum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeIndex {
    pub code_len: usize,
    pub arity: usize,
    pub checkpoint_checksum: u64,
    pub entries: Vec<IndexEntry>,
}

/// Codes every canonical segment under the trained model. The song-start
/// flag marks segments opening at least one source song.
pub fn build_index(model: &Model, store: &SegmentStore, checkpoint_checksum: u64) -> CodeIndex {
    let bits: Vec<_> = store
        .segments
        .iter()
        .map(|s| segment_bits(&s.steps))
        .collect();
    let table = compute_codes(model, &bits);
    let starts = store.song_start_ids();
    let entries = store
        .segments
        .iter()
        .enumerate()
        .map(|(i, seg)| IndexEntry {
            segment_id: seg.segment_id,
            forward: PackedCode::pack(&table.fwd[i], model.arity),
            backward: PackedCode::pack(&table.bwd[i], model.arity),
            song_ids: seg.song_ids.iter().copied().collect(),
            is_song_start: starts.contains(&seg.segment_id),
        })
        .collect();
    CodeIndex {
        code_len: model.code_len,
        arity: model.arity,
        checkpoint_checksum,
        entries,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    Nearest,
    Farthest,
}

/// Candidates grouped by distance so callers can sample uniformly within the
/// best tier. Tiers are ordered by the query mode.
#[derive(Debug, Clone)]
pub struct RankedCandidates {
    pub tiers: Vec<(u32, Vec<u32>)>,
}

impl RankedCandidates {
    pub fn best_tier(&self) -> Option<&(u32, Vec<u32>)> {
        self.tiers.first()
    }
}

/// Exact scan of backward codes against a forward query code. Entries with
/// any source song in `exclude` are removed; whole tiers are appended until
/// `budget` candidates are gathered.
pub fn query(
    index: &CodeIndex,
    q: &PackedCode,
    mode: QueryMode,
    exclude: &HashSet<u32>,
    budget: usize,
) -> Result<RankedCandidates> {
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); index.code_len + 1];
    let mut any = false;
    for entry in &index.entries {
        if entry.song_ids.iter().any(|s| exclude.contains(s)) {
            continue;
        }
        let d = hamming(q, &entry.backward)?;
        buckets[d as usize].push(entry.segment_id);
        any = true;
    }
    if !any {
        return Err(Error::EmptyAfterExclusion);
    }
    let order: Vec<usize> = match mode {
        QueryMode::Nearest => (0..buckets.len()).collect(),
        QueryMode::Farthest => (0..buckets.len()).rev().collect(),
    };
    let mut tiers = Vec::new();
    let mut total = 0usize;
    for d in order {
        if buckets[d].is_empty() {
            continue;
        }
        if total >= budget && !tiers.is_empty() {
            break;
        }
        total += buckets[d].len();
        tiers.push((d as u32, std::mem::take(&mut buckets[d])));
    }
    Ok(RankedCandidates { tiers })
}

// --- persistence ---------------------------------------------------------------

const INDEX_MAGIC: &[u8; 8] = b"SGINDEX1";
const INDEX_VERSION: u32 = 1;

/// Layout: header (magic, version, L, K, count, checksum), then fixed-width
/// records (segment_id u32, is_song_start u8 + 3 pad, forward words, backward
/// words, song_offset u32, song_count u32), then the song-id pool (u32 each).
/// All integers little-endian.
pub fn save_index(index: &CodeIndex, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(INDEX_MAGIC)?;
    w.write_all(&INDEX_VERSION.to_le_bytes())?;
    w.write_all(&(index.code_len as u32).to_le_bytes())?;
    w.write_all(&(index.arity as u32).to_le_bytes())?;
    w.write_all(&(index.entries.len() as u32).to_le_bytes())?;
    w.write_all(&index.checkpoint_checksum.to_le_bytes())?;
    let mut pool: Vec<u32> = Vec::new();
    for e in &index.entries {
        w.write_all(&e.segment_id.to_le_bytes())?;
        w.write_all(&[u8::from(e.is_song_start), 0, 0, 0])?;
        for word in &e.forward.words {
            w.write_all(&word.to_le_bytes())?;
        }
        for word in &e.backward.words {
            w.write_all(&word.to_le_bytes())?;
        }
        w.write_all(&(pool.len() as u32).to_le_bytes())?;
        w.write_all(&(e.song_ids.len() as u32).to_le_bytes())?;
        pool.extend(&e.song_ids);
    }
    for sid in pool {
        w.write_all(&sid.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<CodeIndex> {
    let bytes = std::fs::read(path)?;
    let bad = |detail: &str| Error::Format {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    let mut r = &bytes[..];
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != INDEX_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = read_u32(&mut r)?;
    if version != INDEX_VERSION {
        return Err(bad("unsupported version"));
    }
    let code_len = read_u32(&mut r)? as usize;
    let arity = read_u32(&mut r)? as usize;
    let count = read_u32(&mut r)? as usize;
    let mut checksum_bytes = [0u8; 8];
    r.read_exact(&mut checksum_bytes)?;
    let checksum = u64::from_le_bytes(checksum_bytes);
    let wpc = PackedCode::words_per_code(code_len, arity);

    let mut raw_entries = Vec::with_capacity(count);
    for _ in 0..count {
        let segment_id = read_u32(&mut r)?;
        let mut flags = [0u8; 4];
        r.read_exact(&mut flags)?;
        let read_code = |r: &mut &[u8]| -> Result<PackedCode> {
            let mut words = vec![0u64; wpc];
            for word in words.iter_mut() {
                let mut b = [0u8; 8];
                r.read_exact(&mut b)?;
                *word = u64::from_le_bytes(b);
            }
            Ok(PackedCode {
                code_len,
                arity,
                words,
            })
        };
        let forward = read_code(&mut r)?;
        let backward = read_code(&mut r)?;
        let song_off = read_u32(&mut r)? as usize;
        let song_count = read_u32(&mut r)? as usize;
        raw_entries.push((segment_id, flags[0] != 0, forward, backward, song_off, song_count));
    }
    let mut pool = Vec::new();
    while !r.is_empty() {
        pool.push(read_u32(&mut r)?);
    }
    let entries = raw_entries
        .into_iter()
        .map(|(segment_id, is_song_start, forward, backward, off, len)| {
            if off + len > pool.len() {
                return Err(bad("song pool out of range"));
            }
            Ok(IndexEntry {
                segment_id,
                forward,
                backward,
                song_ids: pool[off..off + len].to_vec(),
                is_song_start,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CodeIndex {
        code_len,
        arity,
        checkpoint_checksum: checksum,
        entries,
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
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_digits(rng: &mut ChaCha8Rng, l: usize, k: usize) -> Vec<u8> {
        (0..l).map(|_| rng.gen_range(0..k) as u8).collect()
    }

    /// Oracle: distance on raw digit arrays.
    fn oracle_distance(a: &[u8], b: &[u8]) -> u32 {
        a.iter().zip(b.iter()).filter(|(x, y)| x != y).count() as u32
    }

    #[test]
    fn hamming_examples() {
        let a = PackedCode::pack(&[0, 1, 2, 3, 0, 1, 2, 3], 4);
        assert_eq!(hamming(&a, &a).unwrap(), 0);
        let b = PackedCode::pack(&[1, 2, 3, 0, 1, 2, 3, 0], 4);
        assert_eq!(hamming(&a, &b).unwrap(), 8);
        let c = PackedCode::pack(&[0, 1, 2, 3], 4);
        let d = PackedCode::pack(&[0, 3, 2, 1], 4);
        assert_eq!(hamming(&c, &d).unwrap(), 2);
    }

    #[test]
    fn hamming_shape_mismatch() {
        let a = PackedCode::pack(&[0, 1], 4);
        let b = PackedCode::pack(&[0, 1, 2], 4);
        assert!(matches!(hamming(&a, &b), Err(Error::ShapeMismatch { .. })));
        let c = PackedCode::pack(&[0, 1], 3);
        assert!(matches!(hamming(&a, &c), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn pack_unpack_round_trip_and_distance_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(l, k) in &[(8usize, 4usize), (8, 3), (16, 4), (5, 2), (33, 6), (8, 256)] {
            for _ in 0..200 {
                let da = random_digits(&mut rng, l, k);
                let db = random_digits(&mut rng, l, k);
                let pa = PackedCode::pack(&da, k);
                let pb = PackedCode::pack(&db, k);
                assert_eq!(pa.unpack(), da);
                assert_eq!(hamming(&pa, &pb).unwrap(), oracle_distance(&da, &db));
            }
        }
    }

    #[test]
    fn hamming_is_a_metric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let a = random_digits(&mut rng, 8, 4);
            let b = random_digits(&mut rng, 8, 4);
            let c = random_digits(&mut rng, 8, 4);
            let pa = PackedCode::pack(&a, 4);
            let pb = PackedCode::pack(&b, 4);
            let pc = PackedCode::pack(&c, 4);
            let ab = hamming(&pa, &pb).unwrap();
            let ba = hamming(&pb, &pa).unwrap();
            let ac = hamming(&pa, &pc).unwrap();
            let cb = hamming(&pc, &pb).unwrap();
            assert_eq!(ab, ba);
            assert_eq!(hamming(&pa, &pa).unwrap(), 0);
            if ab == 0 {
                assert_eq!(a, b);
            }
            assert!(ab <= ac + cb, "triangle violated: {ab} > {ac}+{cb}");
        }
    }

    fn toy_index(rng: &mut ChaCha8Rng, n: usize) -> CodeIndex {
        let entries = (0..n)
            .map(|i| IndexEntry {
                segment_id: i as u32,
                forward: PackedCode::pack(&random_digits(rng, 8, 4), 4),
                backward: PackedCode::pack(&random_digits(rng, 8, 4), 4),
                song_ids: vec![(i % 7) as u32],
                is_song_start: i % 5 == 0,
            })
            .collect();
        CodeIndex {
            code_len: 8,
            arity: 4,
            checkpoint_checksum: 42,
            entries,
        }
    }

    #[test]
    fn query_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let index = toy_index(&mut rng, 300);
        for _ in 0..50 {
            let q = PackedCode::pack(&random_digits(&mut rng, 8, 4), 4);
            let qd = q.unpack();
            // Oracle: distances via raw digit arrays.
            let dists: Vec<(u32, u32)> = index
                .entries
                .iter()
                .map(|e| (e.segment_id, oracle_distance(&qd, &e.backward.unpack())))
                .collect();
            for mode in [QueryMode::Nearest, QueryMode::Farthest] {
                let res = query(&index, &q, mode, &HashSet::new(), usize::MAX).unwrap();
                let best = res.best_tier().unwrap();
                let oracle_best = match mode {
                    QueryMode::Nearest => dists.iter().map(|&(_, d)| d).min().unwrap(),
                    QueryMode::Farthest => dists.iter().map(|&(_, d)| d).max().unwrap(),
                };
                assert_eq!(best.0, oracle_best);
                let mut oracle_ids: Vec<u32> = dists
                    .iter()
                    .filter(|&&(_, d)| d == oracle_best)
                    .map(|&(id, _)| id)
                    .collect();
                let mut got = best.1.clone();
                got.sort();
                oracle_ids.sort();
                assert_eq!(got, oracle_ids);
                // Tier ordering covers every entry exactly once.
                let total: usize = res.tiers.iter().map(|(_, v)| v.len()).sum();
                assert_eq!(total, index.entries.len());
                for w in res.tiers.windows(2) {
                    match mode {
                        QueryMode::Nearest => assert!(w[0].0 < w[1].0),
                        QueryMode::Farthest => assert!(w[0].0 > w[1].0),
                    }
                }
            }
        }
    }

    #[test]
    fn query_exclusions_and_empty_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let index = toy_index(&mut rng, 30);
        let q = PackedCode::pack(&random_digits(&mut rng, 8, 4), 4);
        let exclude: HashSet<u32> = [0u32].into_iter().collect();
        let res = query(&index, &q, QueryMode::Nearest, &exclude, usize::MAX).unwrap();
        for (_, ids) in &res.tiers {
            for id in ids {
                assert!(!index.entries[*id as usize].song_ids.contains(&0));
            }
        }
        let all: HashSet<u32> = (0..7u32).collect();
        assert!(matches!(
            query(&index, &q, QueryMode::Nearest, &all, usize::MAX),
            Err(Error::EmptyAfterExclusion)
        ));
    }

    #[test]
    fn query_finds_exact_match_in_top_tier() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut index = toy_index(&mut rng, 50);
        let target = index.entries[17].backward.clone();
        index.entries[17].segment_id = 17;
        let res = query(&index, &target, QueryMode::Nearest, &HashSet::new(), 10).unwrap();
        let best = res.best_tier().unwrap();
        assert_eq!(best.0, 0);
        assert!(best.1.contains(&17));
    }

    #[test]
    fn query_budget_keeps_whole_tiers() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let index = toy_index(&mut rng, 200);
        let q = PackedCode::pack(&random_digits(&mut rng, 8, 4), 4);
        let res = query(&index, &q, QueryMode::Nearest, &HashSet::new(), 5).unwrap();
        assert!(!res.tiers.is_empty());
        // Everything except possibly the last tier fits in the budget.
        let all_but_last: usize = res.tiers[..res.tiers.len() - 1]
            .iter()
            .map(|(_, v)| v.len())
            .sum();
        assert!(all_but_last < 5 || res.tiers.len() == 1);
    }

    #[test]
    fn index_save_load_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let index = toy_index(&mut rng, 40);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        save_index(&index, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        assert_eq!(loaded, index);
        // Re-saving produces identical bytes.
        let path2 = dir.path().join("index2.bin");
        save_index(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }
}
