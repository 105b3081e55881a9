//! ABC notation ingestion and rendering.
//!
//! Supports the subset used by cleaned folk-tune collections: X/T/M/L/K
//! headers, notes with accidentals and octave marks, fractional lengths,
//! broken rhythm, ties, tuplets, rests, quoted chord symbols, bar lines,
//! repeats with first/second endings, and inline K:/M:/L: field changes.
//! Repeats are unrolled, so a repeated section contributes its events twice.
//!
//! Grace notes, decorations, and secondary chord-group notes are skipped and
//! counted per tune. Tunes with a missing K: or M: header, or bodies that
//! yield no melody, are rejected and reported rather than failing the parse.

use std::collections::HashMap;

use num_rational::Ratio;

use crate::corpus::{Beats, ChordEvent, ChordQuality, Key, Mode, NoteEvent, Score};

type Whole = Ratio<i64>; // fractions of a whole note

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    MalformedHeader(String),
    UnparsableBody(String),
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::MalformedHeader(d) => write!(f, "malformed-header: {d}"),
            RejectReason::UnparsableBody(d) => write!(f, "unparsable-body: {d}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneReject {
    pub x_id: String,
    pub title: String,
    pub reason: RejectReason,
}

#[derive(Debug, Default)]
pub struct ParsedCorpus {
    pub scores: Vec<Score>,
    pub rejects: Vec<TuneReject>,
}

/// Parses a concatenation of ABC tune bodies. Unparsable tunes are recorded
/// in `rejects`; the call itself does not fail.
pub fn parse_abc(text: &str) -> ParsedCorpus {
    let mut out = ParsedCorpus::default();
    for tune in split_tunes(text) {
        match parse_tune(&tune) {
            Ok(score) => out.scores.push(score),
            Err(reason) => out.rejects.push(TuneReject {
                x_id: tune.x_id.clone(),
                title: tune.title.clone(),
                reason,
            }),
        }
    }
    out
}

struct RawTune {
    x_id: String,
    title: String,
    headers: Vec<(char, String)>,
    body_lines: Vec<String>,
}

fn split_tunes(text: &str) -> Vec<RawTune> {
    let mut tunes = Vec::new();
    let mut current: Option<RawTune> = None;
    let mut in_body = false;
    for raw_line in text.lines() {
        let line = strip_comment(raw_line);
        let trimmed = line.trim();
        if trimmed.is_empty() {
            if let Some(t) = current.take() {
                tunes.push(t);
            }
            in_body = false;
            continue;
        }
        let header = parse_header_line(trimmed);
        if let Some(('X', val)) = header.clone() {
            if let Some(t) = current.take() {
                tunes.push(t);
            }
            current = Some(RawTune {
                x_id: val,
                title: String::new(),
                headers: Vec::new(),
                body_lines: Vec::new(),
            });
            in_body = false;
            continue;
        }
        let Some(tune) = current.as_mut() else {
            continue; // free text outside any tune
        };
        if !in_body {
            match header {
                Some((field, val)) => {
                    if field == 'T' && tune.title.is_empty() {
                        tune.title = val.clone();
                    }
                    let is_key = field == 'K';
                    tune.headers.push((field, val));
                    if is_key {
                        in_body = true;
                    }
                }
                None => {
                    // Stray non-header line before K: — ignore.
                }
            }
        } else {
            tune.body_lines.push(line.to_string());
        }
    }
    if let Some(t) = current.take() {
        tunes.push(t);
    }
    tunes
}

fn strip_comment(line: &str) -> &str {
    let mut in_quote = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '"' => in_quote = !in_quote,
            '%' if !in_quote => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_header_line(line: &str) -> Option<(char, String)> {
    let mut chars = line.chars();
    let field = chars.next()?;
    if !field.is_ascii_alphabetic() {
        return None;
    }
    if chars.next()? != ':' {
        return None;
    }
    Some((field.to_ascii_uppercase(), chars.as_str().trim().to_string()))
}

fn parse_meter(value: &str) -> Option<(u32, u32)> {
    let v = value.trim();
    if v.eq_ignore_ascii_case("C|") {
        return Some((2, 2));
    }
    if v.eq_ignore_ascii_case("C") {
        return Some((4, 4));
    }
    let (num, den) = v.split_once('/')?;
    // "M:2+2/4" style compound numerators: sum the parts.
    let n: u32 = num
        .split('+')
        .map(|p| p.trim().parse::<u32>())
        .sum::<std::result::Result<u32, _>>()
        .ok()?;
    let d: u32 = den.trim().parse().ok()?;
    if n == 0 || d == 0 {
        return None;
    }
    Some((n, d))
}

fn parse_fraction(value: &str) -> Option<Whole> {
    let (num, den) = value.trim().split_once('/')?;
    let n: i64 = num.trim().parse().ok()?;
    let d: i64 = den.trim().parse().ok()?;
    if n <= 0 || d <= 0 {
        return None;
    }
    Some(Ratio::new(n, d))
}

/// Letter index with C = 0 .. B = 6 and its natural semitone.
const LETTER_SEMITONES: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];

fn letter_index(letter: char) -> usize {
    match letter.to_ascii_uppercase() {
        'C' => 0,
        'D' => 1,
        'E' => 2,
        'F' => 3,
        'G' => 4,
        'A' => 5,
        'B' => 6,
        _ => unreachable!("caller checks letter"),
    }
}

/// Sharps(+)/flats(-) count on the circle of fifths for a spelled tonic+mode.
fn fifths_count(letter: char, acc: i8, mode: Mode) -> i32 {
    let base = match letter.to_ascii_uppercase() {
        'C' => 0,
        'D' => 2,
        'E' => 4,
        'F' => -1,
        'G' => 1,
        'A' => 3,
        'B' => 5,
        _ => 0,
    };
    let mode_shift = match mode {
        Mode::Major => 0,
        Mode::Minor => -3,
        Mode::Dorian => -2,
        Mode::Mixolydian => -1,
        Mode::Phrygian => -4,
        Mode::Lydian => 1,
        Mode::Locrian => -5,
    };
    (base + 7 * acc as i32 + mode_shift).clamp(-7, 7)
}

/// Per-letter accidental offsets implied by the key signature.
fn key_signature(letter: char, acc: i8, mode: Mode) -> [i8; 7] {
    const SHARP_ORDER: [usize; 7] = [3, 0, 4, 1, 5, 2, 6]; // F C G D A E B
    const FLAT_ORDER: [usize; 7] = [6, 2, 5, 1, 4, 0, 3]; // B E A D G C F
    let n = fifths_count(letter, acc, mode);
    let mut sig = [0i8; 7];
    if n > 0 {
        for &idx in SHARP_ORDER.iter().take(n as usize) {
            sig[idx] = 1;
        }
    } else if n < 0 {
        for &idx in FLAT_ORDER.iter().take((-n) as usize) {
            sig[idx] = -1;
        }
    }
    sig
}

struct ParsedKey {
    key: Key,
    signature: [i8; 7],
}

fn parse_key(value: &str) -> Option<ParsedKey> {
    let v = value.trim();
    let mut chars = v.chars().peekable();
    let letter = chars.next()?;
    if !matches!(letter.to_ascii_uppercase(), 'A'..='G') {
        return None;
    }
    let mut acc = 0i8;
    if let Some(&c) = chars.peek() {
        match c {
            '#' | '♯' => {
                acc = 1;
                chars.next();
            }
            'b' | '♭' => {
                acc = -1;
                chars.next();
            }
            _ => {}
        }
    }
    let rest: String = chars.collect();
    let mode_word: String = rest
        .trim_start()
        .chars()
        .take_while(|c| c.is_ascii_alphabetic())
        .collect::<String>()
        .to_ascii_lowercase();
    let mode = if mode_word.is_empty() || mode_word.starts_with("maj") || mode_word.starts_with("ion") {
        Mode::Major
    } else if mode_word == "m" || mode_word.starts_with("min") || mode_word.starts_with("aeo") {
        Mode::Minor
    } else if mode_word.starts_with("dor") {
        Mode::Dorian
    } else if mode_word.starts_with("phr") {
        Mode::Phrygian
    } else if mode_word.starts_with("lyd") {
        Mode::Lydian
    } else if mode_word.starts_with("mix") {
        Mode::Mixolydian
    } else if mode_word.starts_with("loc") {
        Mode::Locrian
    } else {
        Mode::Major // clef specs and similar tails
    };
    let tonic_pc =
        ((LETTER_SEMITONES[letter_index(letter)] + acc as i32).rem_euclid(12)) as u8;
    Some(ParsedKey {
        key: Key { tonic_pc, mode },
        signature: key_signature(letter, acc, mode),
    })
}

/// Chord-symbol parse result: a chord, an explicit no-chord marker, or
/// non-chord annotation text.
enum ChordSymbol {
    Chord { root: u8, quality: ChordQuality },
    NoChord,
    Annotation,
}

fn parse_chord_symbol(text: &str) -> ChordSymbol {
    let t = text.trim();
    if t.is_empty() || t.starts_with(['^', '_', '<', '>', '@']) {
        return ChordSymbol::Annotation;
    }
    let cleaned = t.replace('.', "");
    if cleaned.eq_ignore_ascii_case("nc") {
        return ChordSymbol::NoChord;
    }
    let mut chars = t.chars().peekable();
    let letter = match chars.next() {
        Some(c) if matches!(c.to_ascii_uppercase(), 'A'..='G') => c,
        _ => return ChordSymbol::Annotation,
    };
    let mut pc = LETTER_SEMITONES[letter_index(letter)];
    if let Some(&c) = chars.peek() {
        match c {
            '#' | '♯' => {
                pc += 1;
                chars.next();
            }
            'b' | '♭' => {
                pc -= 1;
                chars.next();
            }
            _ => {}
        }
    }
    let tail: String = chars.collect();
    // Strip slash bass and parenthesized remarks.
    let tail = tail.split(['/', '(']).next().unwrap_or("").trim();
    let quality = match tail {
        "" => ChordQuality::Major,
        "m" | "min" | "-" => ChordQuality::Minor,
        "7" => ChordQuality::Seventh,
        "m7" | "min7" | "-7" => ChordQuality::MinorSeventh,
        "maj7" | "M7" => ChordQuality::MajorSeventh,
        "6" => ChordQuality::Sixth,
        "m6" | "min6" => ChordQuality::MinorSixth,
        "9" => ChordQuality::Ninth,
        "dim" | "dim7" | "o" | "°" => ChordQuality::Diminished,
        "aug" | "+" => ChordQuality::Augmented,
        "sus" | "sus2" | "sus4" | "4" => ChordQuality::Suspended,
        other => ChordQuality::Other(other.to_ascii_lowercase()),
    };
    ChordSymbol::Chord {
        root: (pc.rem_euclid(12)) as u8,
        quality,
    }
}

// ---------------------------------------------------------------------------
// Bar structure and repeat expansion
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Boundary {
    Start,
    Plain,
    StartRepeat,
    EndRepeat,
    EndStartRepeat,
}

#[derive(Debug)]
struct Bar {
    boundary_before: Boundary,
    ending: Option<u8>,
    text: String,
}

/// Combines two barline kinds separated only by whitespace (":| |:").
fn merge_boundary(old: Boundary, next: Boundary) -> Boundary {
    let ends = |b: Boundary| matches!(b, Boundary::EndRepeat | Boundary::EndStartRepeat);
    let starts = |b: Boundary| matches!(b, Boundary::StartRepeat | Boundary::EndStartRepeat);
    let end = ends(old) || ends(next);
    let start = starts(old) || starts(next);
    match (end, start) {
        (true, true) => Boundary::EndStartRepeat,
        (true, false) => Boundary::EndRepeat,
        (false, true) => Boundary::StartRepeat,
        (false, false) => next,
    }
}

fn flush_bar(
    bars: &mut Vec<Bar>,
    buf: &mut String,
    boundary: &mut Boundary,
    ending: &mut Option<u8>,
    next: Boundary,
) {
    if !buf.trim().is_empty() {
        bars.push(Bar {
            boundary_before: *boundary,
            ending: *ending,
            text: std::mem::take(buf),
        });
        *ending = None;
        *boundary = next;
    } else {
        buf.clear();
        *boundary = merge_boundary(*boundary, next);
    }
}

fn split_bars(body: &str) -> Result<Vec<Bar>, String> {
    let mut bars: Vec<Bar> = Vec::new();
    let mut buf = String::new();
    let mut boundary = Boundary::Start;
    let mut ending: Option<u8> = None;
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0usize;
    let mut in_quote = false;

    while i < chars.len() {
        let c = chars[i];
        if in_quote {
            buf.push(c);
            if c == '"' {
                in_quote = false;
            }
            i += 1;
            continue;
        }
        match c {
            '"' => {
                in_quote = true;
                buf.push(c);
                i += 1;
            }
            ':' if i + 1 < chars.len() && chars[i + 1] == ':' => {
                flush_bar(&mut bars, &mut buf, &mut boundary, &mut ending, Boundary::EndStartRepeat);
                i += 2;
            }
            ':' if i + 1 < chars.len() && chars[i + 1] == '|' => {
                flush_bar(&mut bars, &mut buf, &mut boundary, &mut ending, Boundary::EndRepeat);
                i += 2;
            }
            '|' => {
                if i + 1 < chars.len() && chars[i + 1] == ':' {
                    flush_bar(&mut bars, &mut buf, &mut boundary, &mut ending, Boundary::StartRepeat);
                    i += 2;
                } else if i + 1 < chars.len() && (chars[i + 1] == ']' || chars[i + 1] == '|') {
                    flush_bar(&mut bars, &mut buf, &mut boundary, &mut ending, Boundary::Plain);
                    i += 2;
                } else {
                    flush_bar(&mut bars, &mut buf, &mut boundary, &mut ending, Boundary::Plain);
                    i += 1;
                }
            }
            '[' => {
                // "[|" thick barline, "[1"/"[2" endings, otherwise body token.
                if i + 1 < chars.len() && chars[i + 1] == '|' {
                    flush_bar(&mut bars, &mut buf, &mut boundary, &mut ending, Boundary::Plain);
                    i += 2;
                } else if i + 1 < chars.len() && chars[i + 1].is_ascii_digit() {
                    let d = chars[i + 1].to_digit(10).unwrap() as u8;
                    i += 2;
                    if i < chars.len() && chars[i] == ',' {
                        // "[1,2" style list: played on every pass.
                        while i < chars.len() && (chars[i] == ',' || chars[i].is_ascii_digit()) {
                            i += 1;
                        }
                        ending = None;
                    } else {
                        ending = Some(d);
                    }
                } else {
                    buf.push(c);
                    i += 1;
                }
            }
            d if d.is_ascii_digit() && buf.trim().is_empty() && boundary != Boundary::Start => {
                // "|1" style ending digit right after a barline.
                ending = Some(d.to_digit(10).unwrap() as u8);
                i += 1;
            }
            _ => {
                buf.push(c);
                i += 1;
            }
        }
    }
    if in_quote {
        return Err("unterminated chord symbol".into());
    }
    if !buf.trim().is_empty() {
        bars.push(Bar {
            boundary_before: boundary,
            ending,
            text: buf,
        });
    }
    Ok(bars)
}

/// Unrolls repeats: on `:|` the section (since the last `|:`/`:|`/start) is
/// replayed with first-ending bars skipped.
fn expand_repeats(bars: &[Bar]) -> Vec<usize> {
    // Fill endings forward within a section.
    let mut effective: Vec<Option<u8>> = Vec::with_capacity(bars.len());
    let mut current: Option<u8> = None;
    for bar in bars {
        if matches!(
            bar.boundary_before,
            Boundary::StartRepeat | Boundary::EndRepeat | Boundary::EndStartRepeat
        ) {
            current = None;
        }
        if bar.ending.is_some() {
            current = bar.ending;
        }
        effective.push(current);
    }

    let mut out = Vec::new();
    let mut section_start = 0usize;
    for (i, bar) in bars.iter().enumerate() {
        match bar.boundary_before {
            Boundary::StartRepeat => section_start = i,
            Boundary::EndRepeat | Boundary::EndStartRepeat => {
                // Replay previous section without first endings.
                for j in section_start..i {
                    if effective[j] != Some(1) {
                        out.push(j);
                    }
                }
                section_start = i;
            }
            _ => {}
        }
        out.push(i);
    }
    out
}

/// `:|` as the final barline has no following bar, so `expand_repeats` cannot
/// see it via `boundary_before`; the caller appends a sentinel empty bar.
fn expand_with_trailing(bars: Vec<Bar>, trailing: Boundary) -> (Vec<Bar>, Vec<usize>) {
    let mut bars = bars;
    if matches!(trailing, Boundary::EndRepeat | Boundary::EndStartRepeat) {
        bars.push(Bar {
            boundary_before: trailing,
            ending: None,
            text: String::new(),
        });
    }
    let order = expand_repeats(&bars);
    (bars, order)
}

// ---------------------------------------------------------------------------
// Event parsing
// ---------------------------------------------------------------------------

struct EventParser {
    unit: Whole,
    meter: (u32, u32),
    signature: [i8; 7],
    measure_acc: HashMap<u8, i8>, // natural midi -> accidental offset
    pos: Whole,
    notes: Vec<NoteEvent>, // onset/duration temporarily in whole notes
    chords: Vec<(Whole, Option<(u8, ChordQuality)>)>,
    tie_from: Option<usize>,
    broken: Option<(i8, u8)>, // direction, arrow count; applies to previous+next note
    prev_note: Option<usize>,
    tuplet: Option<(u8, Whole)>,
    skipped: u32,
    first_bar_end: Option<Whole>,
}

impl EventParser {
    fn new(unit: Whole, meter: (u32, u32), signature: [i8; 7]) -> Self {
        EventParser {
            unit,
            meter,
            signature,
            measure_acc: HashMap::new(),
            pos: Ratio::new(0, 1),
            notes: Vec::new(),
            chords: Vec::new(),
            tie_from: None,
            broken: None,
            prev_note: None,
            tuplet: None,
            skipped: 0,
            first_bar_end: None,
        }
    }

    fn measure_len(&self) -> Whole {
        Ratio::new(self.meter.0 as i64, self.meter.1 as i64)
    }

    fn end_bar(&mut self) {
        self.measure_acc.clear();
        if self.first_bar_end.is_none() && self.pos > Ratio::new(0, 1) {
            self.first_bar_end = Some(self.pos);
        }
        if self.broken.is_some() {
            self.skipped += 1;
            self.broken = None;
        }
        if self.tuplet.is_some() {
            self.skipped += 1;
            self.tuplet = None;
        }
    }

    fn parse_bar(&mut self, text: &str) -> Result<(), String> {
        let chars: Vec<char> = text.chars().collect();
        let mut i = 0usize;
        while i < chars.len() {
            let c = chars[i];
            match c {
                ' ' | '\t' | ')' | '`' => i += 1,
                '"' => {
                    let close = chars[i + 1..]
                        .iter()
                        .position(|&x| x == '"')
                        .ok_or("unterminated chord symbol")?;
                    let sym: String = chars[i + 1..i + 1 + close].iter().collect();
                    match parse_chord_symbol(&sym) {
                        ChordSymbol::Chord { root, quality } => {
                            self.chords.push((self.pos, Some((root, quality))));
                        }
                        ChordSymbol::NoChord => self.chords.push((self.pos, None)),
                        ChordSymbol::Annotation => {}
                    }
                    i += close + 2;
                }
                '(' => {
                    if i + 1 < chars.len() && chars[i + 1].is_ascii_digit() {
                        i += 1;
                        let (spec, used) = read_tuplet_spec(&chars[i..]);
                        self.tuplet = Some(spec_to_tuplet(spec, self.meter));
                        i += used;
                    } else {
                        i += 1; // slur
                    }
                }
                '-' => {
                    self.tie_from = self.prev_note;
                    i += 1;
                }
                '>' | '<' => {
                    let dir = if c == '>' { 1i8 } else { -1i8 };
                    let mut count = 0u8;
                    while i < chars.len() && chars[i] == c {
                        count += 1;
                        i += 1;
                    }
                    self.broken = Some((dir, count.min(2)));
                }
                '{' => {
                    let close = chars[i + 1..].iter().position(|&x| x == '}');
                    match close {
                        Some(off) => {
                            self.skipped += 1;
                            i += off + 2;
                        }
                        None => return Err("unterminated grace-note group".into()),
                    }
                }
                '!' => {
                    let close = chars[i + 1..].iter().position(|&x| x == '!');
                    match close {
                        Some(off) => {
                            self.skipped += 1;
                            i += off + 2;
                        }
                        None => {
                            self.skipped += 1;
                            i += 1;
                        }
                    }
                }
                '.' | '~' | 'u' | 'v' | '*' | '$' | '}' | ']' => {
                    self.skipped += 1;
                    i += 1;
                }
                '^' | '_' | '=' | 'A'..='G' | 'a'..='g' => match self.parse_note(&chars[i..]) {
                    Ok((used, _)) => i += used,
                    Err(_) => {
                        self.skipped += 1;
                        i += 1;
                    }
                },
                'z' | 'x' => {
                    let (mult, used) = read_length(&chars[i + 1..]);
                    let mut dur = self.unit * mult;
                    if let Some(f) = self.take_note_factors() {
                        dur *= f;
                    }
                    self.push_rest(dur);
                    i += 1 + used;
                }
                'Z' => {
                    let (mult, used) = read_length(&chars[i + 1..]);
                    let dur = self.measure_len() * mult;
                    self.push_rest(dur);
                    i += 1 + used;
                }
                '[' => {
                    // Inline field or chord group ("[1" endings are consumed by
                    // the bar splitter).
                    if i + 2 < chars.len() && chars[i + 1].is_ascii_alphabetic() && chars[i + 2] == ':' {
                        let close = chars[i + 1..]
                            .iter()
                            .position(|&x| x == ']')
                            .ok_or("unterminated inline field")?;
                        let field: String = chars[i + 1..i + 1 + close].iter().collect();
                        self.apply_inline_field(&field);
                        i += close + 2;
                    } else {
                        match self.parse_chord_group(&chars[i..]) {
                            Ok(used) => i += used,
                            Err(_) => {
                                self.skipped += 1;
                                i += 1;
                            }
                        }
                    }
                }
                _ => {
                    self.skipped += 1;
                    i += 1;
                }
            }
        }
        Ok(())
    }

    fn apply_inline_field(&mut self, field: &str) {
        if let Some((f, val)) = parse_header_line(field) {
            match f {
                'K' => {
                    if let Some(pk) = parse_key(&val) {
                        self.signature = pk.signature;
                    }
                }
                'M' => {
                    if let Some(m) = parse_meter(&val) {
                        self.meter = m;
                    }
                }
                'L' => {
                    if let Some(u) = parse_fraction(&val) {
                        self.unit = u;
                    }
                }
                _ => {}
            }
        }
    }

    /// Combined tuplet factor and broken-rhythm factor for the next note.
    fn take_note_factors(&mut self) -> Option<Whole> {
        let mut factor = Ratio::new(1i64, 1);
        let mut any = false;
        if let Some((remaining, f)) = self.tuplet {
            factor *= f;
            any = true;
            if remaining <= 1 {
                self.tuplet = None;
            } else {
                self.tuplet = Some((remaining - 1, f));
            }
        }
        if let Some((dir, count)) = self.broken.take() {
            // dir=1 means previous note was dotted: this note is shortened.
            let (long, short) = match count {
                1 => (Ratio::new(3i64, 2), Ratio::new(1i64, 2)),
                _ => (Ratio::new(7i64, 4), Ratio::new(1i64, 4)),
            };
            let (prev_f, next_f) = if dir > 0 { (long, short) } else { (short, long) };
            if let Some(idx) = self.prev_note {
                let old = self.notes[idx].duration;
                let new = old * prev_f;
                self.notes[idx].duration = new;
                self.pos = self.notes[idx].onset + new;
            }
            factor *= next_f;
            any = true;
        }
        if any {
            Some(factor)
        } else {
            None
        }
    }

    fn push_rest(&mut self, dur: Whole) {
        if self.tie_from.is_some() {
            self.skipped += 1; // tie into a rest is not meaningful
            self.tie_from = None;
        }
        self.notes.push(NoteEvent {
            onset: self.pos,
            duration: dur,
            pitch: None,
        });
        self.prev_note = Some(self.notes.len() - 1);
        self.pos += dur;
    }

    /// Parses one note starting at `chars[0]` (which may be an accidental).
    /// Returns (chars consumed, note index).
    fn parse_note(&mut self, chars: &[char]) -> Result<(usize, Option<usize>), String> {
        let mut i = 0usize;
        let mut explicit_acc: Option<i8> = None;
        while i < chars.len() {
            match chars[i] {
                '^' => {
                    explicit_acc = Some(explicit_acc.unwrap_or(0) + 1);
                    i += 1;
                }
                '_' => {
                    explicit_acc = Some(explicit_acc.unwrap_or(0) - 1);
                    i += 1;
                }
                '=' => {
                    explicit_acc = Some(explicit_acc.unwrap_or(0));
                    i += 1;
                }
                _ => break,
            }
        }
        if i >= chars.len() || !chars[i].is_ascii_alphabetic() {
            return Err("accidental not followed by a note".into());
        }
        let letter = chars[i];
        if !matches!(letter.to_ascii_uppercase(), 'A'..='G') {
            return Err(format!("unexpected note letter '{letter}'"));
        }
        i += 1;
        let mut octave = 0i32;
        while i < chars.len() {
            match chars[i] {
                '\'' => {
                    octave += 1;
                    i += 1;
                }
                ',' => {
                    octave -= 1;
                    i += 1;
                }
                _ => break,
            }
        }
        let (mult, used) = read_length(&chars[i..]);
        i += used;

        let idx = letter_index(letter);
        let natural = 60
            + LETTER_SEMITONES[idx]
            + if letter.is_ascii_lowercase() { 12 } else { 0 }
            + 12 * octave;
        let natural_u8 = natural.clamp(0, 127) as u8;
        let offset = match explicit_acc {
            Some(a) => {
                self.measure_acc.insert(natural_u8, a);
                a
            }
            None => *self
                .measure_acc
                .get(&natural_u8)
                .unwrap_or(&self.signature[idx]),
        };
        let pitch = (natural + offset as i32).clamp(0, 127) as u8;

        let mut dur = self.unit * mult;
        if let Some(f) = self.take_note_factors() {
            dur *= f;
        }

        // Tie: extend the previous note instead of emitting a new one.
        if let Some(tie_idx) = self.tie_from.take() {
            if self.notes[tie_idx].pitch == Some(pitch) {
                self.notes[tie_idx].duration += dur;
                self.pos += dur;
                self.prev_note = Some(tie_idx);
                return Ok((i, Some(tie_idx)));
            }
            self.skipped += 1; // tie between different pitches
        }

        self.notes.push(NoteEvent {
            onset: self.pos,
            duration: dur,
            pitch: Some(pitch),
        });
        self.pos += dur;
        let note_idx = self.notes.len() - 1;
        self.prev_note = Some(note_idx);
        Ok((i, Some(note_idx)))
    }

    /// `[CEG]` chord group: first note carries the melody, the rest are
    /// skipped with a warning each.
    fn parse_chord_group(&mut self, chars: &[char]) -> Result<usize, String> {
        debug_assert_eq!(chars[0], '[');
        let close = chars
            .iter()
            .position(|&x| x == ']')
            .ok_or("unterminated chord group")?;
        let inner: Vec<char> = chars[1..close].to_vec();
        // Outer length multiplier after the closing bracket.
        let (outer_mult, outer_used) = read_length(&chars[close + 1..]);

        let mut j = 0usize;
        let mut first: Option<usize> = None;
        let mut extras = 0u32;
        while j < inner.len() {
            match inner[j] {
                ' ' => j += 1,
                '^' | '_' | '=' | 'A'..='G' | 'a'..='g' => {
                    if first.is_none() {
                        let (used, idx) = self.parse_note(&inner[j..])?;
                        first = idx;
                        j += used;
                    } else {
                        // Skip the token without emitting an event.
                        let mut k = j;
                        while k < inner.len()
                            && (matches!(inner[k], '^' | '_' | '=' | '\'' | ',' | '/')
                                || inner[k].is_ascii_alphanumeric())
                        {
                            k += 1;
                        }
                        extras += 1;
                        j = k.max(j + 1);
                    }
                }
                _ => j += 1,
            }
        }
        self.skipped += extras;
        if let Some(idx) = first {
            if outer_mult != Ratio::new(1, 1) {
                let old = self.notes[idx].duration;
                self.notes[idx].duration = old * outer_mult;
                self.pos = self.notes[idx].onset + self.notes[idx].duration;
            }
        }
        Ok(close + 1 + outer_used)
    }
}

/// Parses an ABC length modifier: "", "2", "3/2", "/2", "/", "//".
fn read_length(chars: &[char]) -> (Whole, usize) {
    let mut i = 0usize;
    let mut num: i64 = 1;
    let mut digits = String::new();
    while i < chars.len() && chars[i].is_ascii_digit() {
        digits.push(chars[i]);
        i += 1;
    }
    if !digits.is_empty() {
        num = digits.parse().unwrap_or(1);
    }
    let mut slashes = 0u32;
    while i < chars.len() && chars[i] == '/' {
        slashes += 1;
        i += 1;
    }
    if slashes == 0 {
        return (Ratio::new(num, 1), i);
    }
    let mut den_digits = String::new();
    while i < chars.len() && chars[i].is_ascii_digit() {
        den_digits.push(chars[i]);
        i += 1;
    }
    let den: i64 = if den_digits.is_empty() {
        1i64 << slashes
    } else {
        den_digits.parse::<i64>().unwrap_or(2) * (1i64 << (slashes - 1))
    };
    (Ratio::new(num, den.max(1)), i)
}

/// Reads "p", "p:q", or "p:q:r" after "(".
fn read_tuplet_spec(chars: &[char]) -> ((u8, Option<u8>, Option<u8>), usize) {
    let mut nums: Vec<u8> = Vec::new();
    let mut i = 0usize;
    loop {
        let mut digits = String::new();
        while i < chars.len() && chars[i].is_ascii_digit() {
            digits.push(chars[i]);
            i += 1;
        }
        if digits.is_empty() {
            break;
        }
        nums.push(digits.parse().unwrap_or(2));
        if i < chars.len() && chars[i] == ':' {
            i += 1;
        } else {
            break;
        }
    }
    let p = *nums.first().unwrap_or(&2);
    ((p, nums.get(1).copied(), nums.get(2).copied()), i)
}

fn spec_to_tuplet(spec: (u8, Option<u8>, Option<u8>), meter: (u32, u32)) -> (u8, Whole) {
    let (p, q, r) = spec;
    let compound = meter.0 % 3 == 0 && meter.0 > 3;
    let q = q.unwrap_or(match p {
        2 => 3,
        3 => 2,
        4 => 3,
        6 => 2,
        8 => 3,
        _ => {
            if compound {
                3
            } else {
                2
            }
        }
    });
    let r = r.unwrap_or(p);
    (r, Ratio::new(q as i64, p as i64))
}

fn parse_tune(tune: &RawTune) -> Result<Score, RejectReason> {
    let mut meter: Option<(u32, u32)> = None;
    let mut unit: Option<Whole> = None;
    let mut parsed_key: Option<ParsedKey> = None;
    for (field, value) in &tune.headers {
        match field {
            'M' => {
                meter = parse_meter(value);
                if meter.is_none() {
                    return Err(RejectReason::MalformedHeader(format!(
                        "unparsable meter '{value}'"
                    )));
                }
            }
            'L' => {
                unit = parse_fraction(value);
                if unit.is_none() {
                    return Err(RejectReason::MalformedHeader(format!(
                        "unparsable unit length '{value}'"
                    )));
                }
            }
            'K' => {
                parsed_key = parse_key(value);
                if parsed_key.is_none() {
                    return Err(RejectReason::MalformedHeader(format!(
                        "unparsable key '{value}'"
                    )));
                }
            }
            _ => {}
        }
    }
    let meter = meter.ok_or_else(|| RejectReason::MalformedHeader("missing M: header".into()))?;
    let parsed_key =
        parsed_key.ok_or_else(|| RejectReason::MalformedHeader("missing K: header".into()))?;
    // ABC default: unit is 1/16 when the meter is shorter than 3/4, else 1/8.
    let unit = unit.unwrap_or_else(|| {
        if (meter.0 as f64) / (meter.1 as f64) < 0.75 {
            Ratio::new(1, 16)
        } else {
            Ratio::new(1, 8)
        }
    });

    // Assemble the body: join continuations, convert stray field lines. Lines
    // starting with a note letter and ':' ("E:|...") stay music; only known
    // header fields are treated as fields here.
    let mut body = String::new();
    for line in &tune.body_lines {
        let mut l = line.trim_end().to_string();
        if let Some((field, val)) = parse_header_line(l.trim()) {
            match field {
                'K' | 'M' | 'L' => {
                    body.push_str(&format!("[{}:{}]", field, val));
                    body.push(' ');
                    continue;
                }
                'P' | 'Q' | 'V' | 'I' | 'N' | 'O' | 'R' | 'S' | 'T' | 'U' | 'W' | 'X' | 'Z'
                | 'H' => {
                    continue; // lyrics, parts, tune metadata: dropped
                }
                _ => {} // A-G etc: ambiguous with music, keep the line
            }
        }
        let continued = l.ends_with('\\');
        if continued {
            l.pop();
        }
        body.push_str(&l);
        if !continued {
            body.push(' ');
        }
    }

    let trailing = trailing_boundary(&body);
    let bars = split_bars(&body).map_err(RejectReason::UnparsableBody)?;
    let (bars, order) = expand_with_trailing(bars, trailing);

    let mut parser = EventParser::new(unit, meter, parsed_key.signature);
    for &bar_idx in &order {
        parser
            .parse_bar(&bars[bar_idx].text)
            .map_err(RejectReason::UnparsableBody)?;
        parser.end_bar();
    }

    if !parser.notes.iter().any(|n| n.pitch.is_some()) {
        return Err(RejectReason::UnparsableBody("no melody events".into()));
    }

    // Front-pad a pickup so segment windows align to notated measures.
    let measure = parser.measure_len();
    let shift = match parser.first_bar_end {
        Some(end) if end < measure => measure - end,
        _ => Ratio::new(0, 1),
    };

    let beats_per_whole = Ratio::new(meter.1 as i64, 1);
    let mut melody: Vec<NoteEvent> = parser
        .notes
        .iter()
        .map(|n| NoteEvent {
            onset: (n.onset + shift) * beats_per_whole,
            duration: n.duration * beats_per_whole,
            pitch: n.pitch,
        })
        .filter(|n| n.duration > Ratio::new(0, 1))
        .collect();
    melody.sort_by_key(|n| n.onset);

    let song_end = melody
        .iter()
        .map(|n| n.onset + n.duration)
        .max()
        .unwrap_or_else(|| Ratio::new(0, 1));

    // Fill chord durations forward; NoChord markers terminate without starting.
    let mut chord_marks: Vec<(Beats, Option<(u8, ChordQuality)>)> = parser
        .chords
        .iter()
        .map(|(onset, c)| ((*onset + shift) * beats_per_whole, c.clone()))
        .collect();
    chord_marks.sort_by_key(|(onset, _)| *onset);
    let mut chords: Vec<ChordEvent> = Vec::new();
    for (i, (onset, chord)) in chord_marks.iter().enumerate() {
        let next_onset = chord_marks
            .get(i + 1)
            .map(|(o, _)| *o)
            .unwrap_or(song_end);
        if let Some((root, quality)) = chord {
            let duration = next_onset - *onset;
            if duration > Ratio::new(0, 1) {
                chords.push(ChordEvent {
                    onset: *onset,
                    duration,
                    root: *root,
                    quality: quality.clone(),
                });
            }
        }
    }

    Ok(Score {
        title: tune.title.clone(),
        key: parsed_key.key,
        meter,
        unit_note_length: unit,
        melody,
        chords,
        skipped_tokens: parser.skipped,
    })
}

/// Detects a tune ending in ":|" so the final section still gets replayed.
fn trailing_boundary(body: &str) -> Boundary {
    let t: String = body.chars().filter(|c| !c.is_whitespace()).collect();
    if t.ends_with("::") {
        return Boundary::EndStartRepeat;
    }
    // ":|", ":|]", ":||"
    let t = t.trim_end_matches([']', '|']).to_string();
    if t.ends_with(":|") || t.ends_with(':') {
        Boundary::EndRepeat
    } else {
        Boundary::Plain
    }
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

/// Renders events back to an ABC tune in C major with L:1/16.
///
/// All onsets and durations must sit on the sixteenth grid. Notes crossing a
/// barline or a chord change are split and tied so the output re-parses to the
/// same event content.
pub fn render_abc(
    title: &str,
    meter: (u32, u32),
    melody: &[NoteEvent],
    chords: &[ChordEvent],
) -> String {
    let sixteenth = Ratio::new(1i64, 4); // in beats
    let total_end = melody
        .iter()
        .map(|n| n.onset + n.duration)
        .chain(chords.iter().map(|c| c.onset + c.duration))
        .max()
        .unwrap_or_else(|| Ratio::new(0, 1));
    let n_units = (total_end / sixteenth).ceil().to_integer().max(0) as usize;
    let units_per_measure = (meter.0 as usize) * 16 / (meter.1 as usize);

    // Paint the melody onto a unit grid.
    let mut pitch_at: Vec<Option<u8>> = vec![None; n_units];
    let mut artic_at: Vec<bool> = vec![false; n_units];
    for n in melody {
        let s = (n.onset / sixteenth).to_integer() as usize;
        let e = ((n.onset + n.duration) / sixteenth).to_integer() as usize;
        for u in s..e.min(n_units) {
            pitch_at[u] = n.pitch;
        }
        if n.pitch.is_some() && s < n_units {
            artic_at[s] = true;
        }
    }
    let mut chord_at: Vec<Option<&ChordEvent>> = vec![None; n_units];
    for c in chords {
        let s = (c.onset / sixteenth).to_integer() as usize;
        if s < n_units {
            chord_at[s] = Some(c);
        }
    }

    let mut body = String::new();
    let mut acc_state: HashMap<u8, i8> = HashMap::new(); // natural midi -> printed accidental
    let mut u = 0usize;
    while u < n_units {
        if u > 0 && u % units_per_measure == 0 {
            body.push_str("| ");
            acc_state.clear();
        }
        let measure_end = ((u / units_per_measure) + 1) * units_per_measure;
        // Run: same pitch, no re-articulation, no chord change, within measure.
        let mut len = 1usize;
        while u + len < n_units.min(measure_end)
            && pitch_at[u + len] == pitch_at[u]
            && !artic_at[u + len]
            && chord_at[u + len].is_none()
        {
            len += 1;
        }
        if let Some(c) = chord_at[u] {
            body.push('"');
            body.push_str(&chord_symbol_text(c.root, &c.quality));
            body.push('"');
        }
        match pitch_at[u] {
            None => {
                body.push('z');
                if len > 1 {
                    body.push_str(&len.to_string());
                }
            }
            Some(p) => {
                body.push_str(&pitch_to_abc(p, &mut acc_state));
                if len > 1 {
                    body.push_str(&len.to_string());
                }
                // Tie when this run continues into the next one.
                let next = u + len;
                if next < n_units && pitch_at[next] == Some(p) && !artic_at[next] {
                    body.push('-');
                }
            }
        }
        body.push(' ');
        u += len;
    }
    body.push_str("|]");

    format!(
        "X:1\nT:{}\nM:{}/{}\nL:1/16\nK:C\n{}\n",
        title, meter.0, meter.1, body
    )
}

/// ABC text for one pitch, emitting accidentals relative to C major and the
/// accidentals already printed in this measure.
fn pitch_to_abc(pitch: u8, acc_state: &mut HashMap<u8, i8>) -> String {
    // Sharp spellings in C: C ^C D ^D E F ^F G ^G A ^A B
    const LETTER_OF_PC: [(usize, i8); 12] = [
        (0, 0),
        (0, 1),
        (1, 0),
        (1, 1),
        (2, 0),
        (3, 0),
        (3, 1),
        (4, 0),
        (4, 1),
        (5, 0),
        (5, 1),
        (6, 0),
    ];
    const LETTERS: [char; 7] = ['C', 'D', 'E', 'F', 'G', 'A', 'B'];
    let pc = (pitch % 12) as usize;
    let (letter_idx, acc) = LETTER_OF_PC[pc];
    let natural = pitch as i32 - acc as i32;
    let natural_u8 = natural.clamp(0, 127) as u8;

    let mut s = String::new();
    let active = *acc_state.get(&natural_u8).unwrap_or(&0);
    if acc != active {
        s.push_str(match acc {
            1 => "^",
            -1 => "_",
            _ => "=",
        });
        acc_state.insert(natural_u8, acc);
    }

    // Octave marks relative to C4 (uppercase) / C5 (lowercase).
    let octave_offset = (natural - 60).div_euclid(12);
    let letter = LETTERS[letter_idx];
    if octave_offset >= 1 {
        s.push(letter.to_ascii_lowercase());
        for _ in 1..octave_offset {
            s.push('\'');
        }
    } else {
        s.push(letter);
        for _ in 0..(-octave_offset) {
            s.push(',');
        }
    }
    s
}

/// Chord symbol text matching `parse_chord_symbol`.
pub fn chord_symbol_text(root: u8, quality: &ChordQuality) -> String {
    const ROOT_NAMES: [&str; 12] = [
        "C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B",
    ];
    let suffix = match quality {
        ChordQuality::Major => "".to_string(),
        ChordQuality::Minor => "m".to_string(),
        ChordQuality::Seventh => "7".to_string(),
        ChordQuality::MinorSeventh => "m7".to_string(),
        ChordQuality::MajorSeventh => "maj7".to_string(),
        ChordQuality::Sixth => "6".to_string(),
        ChordQuality::MinorSixth => "m6".to_string(),
        ChordQuality::Ninth => "9".to_string(),
        ChordQuality::Diminished => "dim".to_string(),
        ChordQuality::Augmented => "aug".to_string(),
        ChordQuality::Suspended => "sus".to_string(),
        ChordQuality::Other(s) => s.clone(),
    };
    format!("{}{}", ROOT_NAMES[(root % 12) as usize], suffix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::beats;

    #[test]
    fn two_bar_tune_from_headers() {
        let text = "X:1\nT:Demo\nM:4/4\nL:1/4\nK:C\n\"C\" CDEF|\"G\" GABc|\n";
        let parsed = parse_abc(text);
        assert!(parsed.rejects.is_empty());
        assert_eq!(parsed.scores.len(), 1);
        let s = &parsed.scores[0];
        assert_eq!(s.key, Key { tonic_pc: 0, mode: Mode::Major });
        assert_eq!(s.meter, (4, 4));
        assert_eq!(s.melody.len(), 8);
        let pitches: Vec<u8> = s.melody.iter().filter_map(|n| n.pitch).collect();
        assert_eq!(pitches, vec![60, 62, 64, 65, 67, 69, 71, 72]);
        for (i, n) in s.melody.iter().enumerate() {
            assert_eq!(n.onset, beats(i as i64, 1));
            assert_eq!(n.duration, beats(1, 1));
        }
        assert_eq!(s.chords.len(), 2);
        assert_eq!(s.chords[0].root, 0);
        assert_eq!(s.chords[0].duration, beats(4, 1));
        assert_eq!(s.chords[1].root, 7);
        assert_eq!(s.chords[1].onset, beats(4, 1));
    }

    #[test]
    fn empty_input_is_empty() {
        let parsed = parse_abc("");
        assert!(parsed.scores.is_empty());
        assert!(parsed.rejects.is_empty());
    }

    #[test]
    fn minor_header_passes_through() {
        let text = "X:1\nT:Sad\nM:4/4\nL:1/4\nK:Am\nABcd|\n";
        let parsed = parse_abc(text);
        assert_eq!(parsed.scores.len(), 1);
        assert_eq!(parsed.scores[0].key.mode, Mode::Minor);
        assert_eq!(parsed.scores[0].key.tonic_pc, 9);
    }

    #[test]
    fn missing_key_is_rejected() {
        let text = "X:1\nT:NoKey\nM:4/4\nL:1/4\nCDEF|\n";
        let parsed = parse_abc(text);
        assert!(parsed.scores.is_empty());
        assert_eq!(parsed.rejects.len(), 1);
        assert!(matches!(
            parsed.rejects[0].reason,
            RejectReason::MalformedHeader(_)
        ));
    }

    #[test]
    fn key_signature_applies_and_accidentals_persist() {
        // K:G puts F# in the signature; "=F" naturalizes within the measure.
        let text = "X:1\nT:Sig\nM:4/4\nL:1/4\nK:G\nF=FF|F2F2|\n";
        let parsed = parse_abc(text);
        let s = &parsed.scores[0];
        let pitches: Vec<u8> = s.melody.iter().filter_map(|n| n.pitch).collect();
        // F# (sig), F natural (explicit), F natural (persists), then the bar
        // resets: F# F#.
        assert_eq!(pitches, vec![66, 65, 65, 66, 66]);
    }

    #[test]
    fn flat_key_signature() {
        let text = "X:1\nT:FK\nM:4/4\nL:1/4\nK:F\nBcdB|\n";
        let parsed = parse_abc(text);
        let pitches: Vec<u8> = parsed.scores[0].melody.iter().filter_map(|n| n.pitch).collect();
        assert_eq!(pitches, vec![70, 72, 74, 70]); // Bb in F major
    }

    #[test]
    fn octave_marks_and_lengths() {
        let text = "X:1\nT:Oct\nM:4/4\nL:1/8\nK:C\nC,2 c'2 G/2 A3/2 B/ |\n";
        let parsed = parse_abc(text);
        let s = &parsed.scores[0];
        let got: Vec<(Option<u8>, Beats)> = s.melody.iter().map(|n| (n.pitch, n.duration)).collect();
        assert_eq!(
            got,
            vec![
                (Some(48), beats(1, 1)),
                (Some(84), beats(1, 1)),
                (Some(67), beats(1, 4)),
                (Some(69), beats(3, 4)),
                (Some(71), beats(1, 4)),
            ]
        );
    }

    #[test]
    fn broken_rhythm_and_tie() {
        let text = "X:1\nT:BR\nM:4/4\nL:1/4\nK:C\nC>D E2-|E4|\n";
        let parsed = parse_abc(text);
        let s = &parsed.scores[0];
        assert_eq!(s.melody.len(), 3);
        assert_eq!(s.melody[0].duration, beats(3, 2));
        assert_eq!(s.melody[1].duration, beats(1, 2));
        assert_eq!(s.melody[2].duration, beats(6, 1)); // 2 + 4 tied
    }

    #[test]
    fn triplet_durations() {
        let text = "X:1\nT:Trip\nM:4/4\nL:1/8\nK:C\nC2 (3DEF G2 z2 |\n";
        let parsed = parse_abc(text);
        let s = &parsed.scores[0];
        assert_eq!(s.melody[1].duration, beats(1, 3));
        assert_eq!(s.melody[2].duration, beats(1, 3));
        assert_eq!(s.melody[3].duration, beats(1, 3));
        assert_eq!(s.melody[4].onset, beats(2, 1));
        assert_eq!(s.melody[5].pitch, None);
    }

    #[test]
    fn repeats_unroll_twice() {
        let text = "X:1\nT:Rep\nM:4/4\nL:1/4\nK:C\n|:CDEF:|GABc|\n";
        let parsed = parse_abc(text);
        let s = &parsed.scores[0];
        let pitches: Vec<u8> = s.melody.iter().filter_map(|n| n.pitch).collect();
        assert_eq!(pitches, vec![60, 62, 64, 65, 60, 62, 64, 65, 67, 69, 71, 72]);
    }

    #[test]
    fn first_second_endings() {
        let text = "X:1\nT:End\nM:4/4\nL:1/4\nK:C\nCDEF|1 GGGG:|2 AAAA|\n";
        let parsed = parse_abc(text);
        let s = &parsed.scores[0];
        let pitches: Vec<u8> = s.melody.iter().filter_map(|n| n.pitch).collect();
        assert_eq!(
            pitches,
            vec![60, 62, 64, 65, 67, 67, 67, 67, 60, 62, 64, 65, 69, 69, 69, 69]
        );
    }

    #[test]
    fn trailing_repeat_unrolls() {
        let text = "X:1\nT:TR\nM:4/4\nL:1/4\nK:C\n|:CDEF:|\n";
        let parsed = parse_abc(text);
        let pitches: Vec<u8> = parsed.scores[0].melody.iter().filter_map(|n| n.pitch).collect();
        assert_eq!(pitches, vec![60, 62, 64, 65, 60, 62, 64, 65]);
    }

    #[test]
    fn pickup_is_front_padded() {
        let text = "X:1\nT:Pickup\nM:4/4\nL:1/4\nK:C\nG|CDEF|GABc|\n";
        let parsed = parse_abc(text);
        let s = &parsed.scores[0];
        // One-beat pickup: shift = 3 beats, so the pickup sits at beat 3.
        assert_eq!(s.melody[0].onset, beats(3, 1));
        assert_eq!(s.melody[1].onset, beats(4, 1));
    }

    #[test]
    fn grace_notes_counted_not_fatal() {
        let text = "X:1\nT:Grace\nM:4/4\nL:1/4\nK:C\n{ag}CDEF|\n";
        let parsed = parse_abc(text);
        let s = &parsed.scores[0];
        assert_eq!(s.melody.len(), 4);
        assert!(s.skipped_tokens >= 1);
    }

    #[test]
    fn multi_tune_split() {
        let text = "X:1\nT:A\nM:4/4\nL:1/4\nK:C\nCDEF|\n\nX:2\nT:B\nM:3/4\nL:1/4\nK:D\nDEF|\n";
        let parsed = parse_abc(text);
        assert_eq!(parsed.scores.len(), 2);
        assert_eq!(parsed.scores[0].title, "A");
        assert_eq!(parsed.scores[1].title, "B");
        assert_eq!(parsed.scores[1].meter, (3, 4));
    }

    #[test]
    fn common_time_meters() {
        assert_eq!(parse_meter("C"), Some((4, 4)));
        assert_eq!(parse_meter("C|"), Some((2, 2)));
        assert_eq!(parse_meter("6/8"), Some((6, 8)));
    }

    #[test]
    fn render_round_trips_events() {
        let text = "X:1\nT:RT\nM:4/4\nL:1/4\nK:C\n\"C\"C2 ^F_B|\"G7\"z G3-|G4|\n";
        let parsed = parse_abc(text);
        let s = &parsed.scores[0];
        let rendered = render_abc(&s.title, s.meter, &s.melody, &s.chords);
        let reparsed = parse_abc(&rendered);
        assert_eq!(reparsed.rejects.len(), 0, "rendered:\n{rendered}");
        let s2 = &reparsed.scores[0];
        let ev1: Vec<_> = s.melody.iter().filter(|n| n.pitch.is_some()).collect();
        let ev2: Vec<_> = s2.melody.iter().filter(|n| n.pitch.is_some()).collect();
        assert_eq!(ev1, ev2, "rendered:\n{rendered}");
        assert_eq!(s.chords, s2.chords, "rendered:\n{rendered}");
    }

    #[test]
    fn render_emits_naturals_after_accidentals() {
        // ^F then F natural in one measure must round-trip.
        let melody = vec![
            NoteEvent { onset: beats(0, 1), duration: beats(1, 1), pitch: Some(66) },
            NoteEvent { onset: beats(1, 1), duration: beats(1, 1), pitch: Some(65) },
            NoteEvent { onset: beats(2, 1), duration: beats(2, 1), pitch: Some(66) },
        ];
        let rendered = render_abc("acc", (4, 4), &melody, &[]);
        let reparsed = parse_abc(&rendered);
        let pitches: Vec<u8> = reparsed.scores[0].melody.iter().filter_map(|n| n.pitch).collect();
        assert_eq!(pitches, vec![66, 65, 66], "rendered:\n{rendered}");
    }
}
