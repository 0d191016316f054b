//! Chord symbol grammar for external labels and the command line.
//!
//! ```text
//! label   := "N" | root quality? ("/" note)?
//! root    := note
//! note    := [A-G] ("#" | "b")*
//! quality := "" | "maj" | "M" | "m" | "min" | "dim" | "o" | "aug" | "+"
//!          | "7" | "maj7" | "M7" | "m7" | "min7" | "sus2" | "sus4" | "sus"
//! ```
//!
//! A label file holds whitespace-separated labels, one per beat; a token
//! starting with `#` begins a comment that runs to the end of the line.

use super::{ChordFrame, ChordProgression, Quality};
use crate::BEATS_PER_SEGMENT;
use crate::{Error, Result};

pub const PITCH_NAMES: [&str; 12] = ["C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B"];

/// A parsed chord symbol; `None` quality means "no chord".
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChordLabel {
    pub chord: Option<(u8, Quality)>,
    pub bass: Option<u8>,
}

impl ChordLabel {
    pub fn frame(&self) -> ChordFrame {
        match self.chord {
            None => ChordFrame::silent(),
            Some((root, q)) => ChordFrame {
                root,
                bass: self.bass.unwrap_or(root),
                chroma: q.template(root),
                is_silent: false,
            },
        }
    }
}

fn err(label: &str, message: impl Into<String>) -> Error {
    Error::ChordLabel {
        label: label.to_string(),
        message: message.into(),
    }
}

fn parse_note<'a>(label: &str, s: &'a str) -> Result<(u8, &'a str)> {
    let mut chars = s.char_indices();
    let base: i32 = match chars.next() {
        Some((_, 'C')) => 0,
        Some((_, 'D')) => 2,
        Some((_, 'E')) => 4,
        Some((_, 'F')) => 5,
        Some((_, 'G')) => 7,
        Some((_, 'A')) => 9,
        Some((_, 'B')) => 11,
        Some((_, c)) => return Err(err(label, format!("expected a note letter A-G, found {c:?}"))),
        None => return Err(err(label, "missing note letter")),
    };
    let mut pc = base;
    let mut rest = &s[1..];
    while let Some(c) = rest.chars().next() {
        match c {
            '#' => pc += 1,
            'b' => pc -= 1,
            _ => break,
        }
        rest = &rest[1..];
    }
    Ok((pc.rem_euclid(12) as u8, rest))
}

/// Parses a single chord symbol such as `C`, `Am`, `G7/B` or `N`.
pub fn parse_label(label: &str) -> Result<ChordLabel> {
    let s = label.trim();
    if s == "N" {
        return Ok(ChordLabel {
            chord: None,
            bass: None,
        });
    }
    let (root, rest) = parse_note(label, s)?;
    let (quality_str, bass_str) = match rest.split_once('/') {
        Some((q, b)) => (q, Some(b)),
        None => (rest, None),
    };
    let quality = match quality_str {
        "" | "maj" | "M" => Quality::Major,
        "m" | "min" => Quality::Minor,
        "dim" | "o" => Quality::Diminished,
        "aug" | "+" => Quality::Augmented,
        "7" => Quality::Dominant7,
        "maj7" | "M7" => Quality::Major7,
        "m7" | "min7" => Quality::Minor7,
        "sus2" => Quality::Sus2,
        "sus4" | "sus" => Quality::Sus4,
        q => return Err(err(label, format!("unknown quality {q:?}"))),
    };
    let bass = match bass_str {
        None => None,
        Some(b) => {
            let (pc, tail) = parse_note(label, b)?;
            if !tail.is_empty() {
                return Err(err(label, format!("trailing text {tail:?} after bass note")));
            }
            Some(pc)
        }
    };
    Ok(ChordLabel {
        chord: Some((root, quality)),
        bass,
    })
}

/// Parses a label file or string: whitespace-separated labels; a token
/// starting with `#` comments out the rest of its line.
pub fn parse_label_sequence(text: &str) -> Result<Vec<ChordLabel>> {
    text.lines()
        .flat_map(|line| line.split_whitespace().take_while(|t| !t.starts_with('#')))
        .map(parse_label)
        .collect()
}

/// Per-unit progressions from chord symbols lasting `beats_per_symbol`
/// beats each. The symbols must fill whole 8-beat units.
pub fn progressions_from_symbols(text: &str, beats_per_symbol: usize) -> Result<Vec<ChordProgression>> {
    let labels = parse_label_sequence(text)?;
    if beats_per_symbol == 0 {
        return Err(Error::Config("beats per chord symbol must be positive".into()));
    }
    let beats: Vec<ChordLabel> = labels
        .iter()
        .flat_map(|l| std::iter::repeat_n(*l, beats_per_symbol))
        .collect();
    if beats.is_empty() || beats.len() % BEATS_PER_SEGMENT != 0 {
        return Err(Error::LengthMismatch(format!(
            "{} symbols of {beats_per_symbol} beats do not fill whole {BEATS_PER_SEGMENT}-beat units",
            labels.len()
        )));
    }
    beats.chunks(BEATS_PER_SEGMENT).map(ChordProgression::from_labels).collect()
}
