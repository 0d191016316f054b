//! Synthetic pop-style songs for smoke training and tests.
//!
//! Each song is in a random key, follows a diatonic progression with one or
//! two chords per bar, and carries a `piano` accompaniment whose figuration
//! is drawn from [`TexturePattern`] per eight-bar phrase plus a monophonic
//! `melody` on chord and scale tones.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::score::{MeterChange, Song, TempoChange, TimedNote, Track, DEFAULT_TICKS_PER_BEAT};
use crate::STEPS_PER_BEAT;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TexturePattern {
    /// Triad on every beat.
    Block,
    /// Chord held for its whole span.
    Sustained,
    /// Eighth-note broken chord.
    Arpeggio,
    /// Sixteenth-note low-high-mid-high figure.
    Alberti,
    /// Bass on strong beats, chord on weak beats.
    OomPah,
    /// Anticipated chords on the off-beat.
    Syncopated,
}

impl TexturePattern {
    pub const ALL: [TexturePattern; 6] = [
        TexturePattern::Block,
        TexturePattern::Sustained,
        TexturePattern::Arpeggio,
        TexturePattern::Alberti,
        TexturePattern::OomPah,
        TexturePattern::Syncopated,
    ];
}

const MAJOR_SCALE: [u8; 7] = [0, 2, 4, 5, 7, 9, 11];

/// Scale degrees (0-based) of common progressions.
const PROGRESSIONS: [[usize; 4]; 8] = [
    [0, 5, 3, 4],
    [0, 4, 5, 3],
    [5, 3, 0, 4],
    [0, 3, 4, 0],
    [1, 4, 0, 5],
    [0, 2, 3, 4],
    [3, 4, 2, 5],
    [0, 5, 1, 4],
];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub bars: usize,
    /// Probability that a progression moves two chords per bar instead of one.
    pub half_bar_chords: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            bars: 16,
            half_bar_chords: 0.5,
        }
    }
}

/// Pitch classes (root, third, fifth) of a diatonic triad in `key`.
fn triad(key: u8, degree: usize) -> [u8; 3] {
    std::array::from_fn(|i| (key + MAJOR_SCALE[(degree + 2 * i) % 7]) % 12)
}

/// Lowest pitch ≥ `floor` with pitch class `pc`.
fn above(floor: u8, pc: u8) -> u8 {
    floor + (pc + 12 - floor % 12) % 12
}

fn voicing(chord: [u8; 3]) -> [u8; 4] {
    let low = above(55, chord[0]);
    let mut v = [low, above(low + 1, chord[1]), 0, 0];
    v[2] = above(v[1] + 1, chord[2]);
    v[3] = low + 12;
    v
}

pub fn generate_song<R: Rng + ?Sized>(id: &str, opts: &SynthOptions, rng: &mut R) -> Song {
    let key = rng.random_range(0..12u8);
    let tpb = u64::from(DEFAULT_TICKS_PER_BEAT);
    let step = tpb / STEPS_PER_BEAT as u64;
    let beats = opts.bars * 4;
    let mut piano = Vec::new();
    let mut melody = Vec::new();
    let note = |out: &mut Vec<TimedNote>, at: usize, len: usize, pitch: u8| {
        out.push(TimedNote {
            onset: at as u64 * step,
            duration: len as u64 * step,
            pitch,
            velocity: 80,
        });
    };

    let mut chords_per_beat = Vec::with_capacity(beats);
    let mut pattern = TexturePattern::Block;
    let mut last_melody = above(67, key);
    for phrase_start in (0..opts.bars).step_by(4) {
        if phrase_start % 8 == 0 {
            pattern = *TexturePattern::ALL.choose(rng).expect("non-empty");
        }
        let prog = PROGRESSIONS.choose(rng).expect("non-empty");
        let beats_per_chord = if rng.random_bool(opts.half_bar_chords) { 2 } else { 4 };
        let phrase_beats = (opts.bars - phrase_start).min(4) * 4;
        for b in 0..phrase_beats {
            chords_per_beat.push(triad(key, prog[(b / beats_per_chord) % 4]));
        }
        for span in (0..phrase_beats).step_by(beats_per_chord) {
            let beat = phrase_start * 4 + span;
            let chord = chords_per_beat[beat];
            let v = voicing(chord);
            let bass = above(36, chord[0]);
            let s0 = beat * STEPS_PER_BEAT;
            let len = beats_per_chord * STEPS_PER_BEAT;
            match pattern {
                TexturePattern::Sustained => {
                    note(&mut piano, s0, len, bass);
                    for &p in &v[..3] {
                        note(&mut piano, s0, len, p);
                    }
                }
                TexturePattern::Block => {
                    note(&mut piano, s0, len, bass);
                    for k in 0..beats_per_chord {
                        for &p in &v[..3] {
                            note(&mut piano, s0 + k * 4, 3, p);
                        }
                    }
                }
                TexturePattern::Arpeggio => {
                    note(&mut piano, s0, len, bass);
                    for k in 0..2 * beats_per_chord {
                        note(&mut piano, s0 + 2 * k, 2, v[k % 4]);
                    }
                }
                TexturePattern::Alberti => {
                    for k in 0..4 * beats_per_chord {
                        note(&mut piano, s0 + k, 1, [v[0] - 12, v[2], v[1], v[2]][k % 4]);
                    }
                }
                TexturePattern::OomPah => {
                    for k in 0..beats_per_chord {
                        if k % 2 == 0 {
                            note(&mut piano, s0 + 4 * k, 4, bass);
                        } else {
                            for &p in &v[..3] {
                                note(&mut piano, s0 + 4 * k, 2, p);
                            }
                        }
                    }
                }
                TexturePattern::Syncopated => {
                    note(&mut piano, s0, len, bass);
                    for k in 0..beats_per_chord / 2 {
                        let at = s0 + 8 * k;
                        for &p in &v[1..] {
                            note(&mut piano, at, 3, p);
                            note(&mut piano, at + 3, 5, p);
                        }
                    }
                }
            }
        }
        // melody: one or two notes per beat, chord tones on the beat
        for b in 0..phrase_beats {
            let beat = phrase_start * 4 + b;
            let chord = chords_per_beat[beat];
            let target = *chord.choose(rng).expect("triad");
            let p = nearest(last_melody, target).clamp(64, 88);
            if rng.random_bool(0.4) {
                note(&mut melody, beat * 4, 2, p);
                let pc = (key + MAJOR_SCALE.choose(rng).copied().unwrap_or(0)) % 12;
                let q = nearest(p, pc).clamp(64, 88);
                note(&mut melody, beat * 4 + 2, 2, q);
                last_melody = q;
            } else if rng.random_bool(0.85) {
                note(&mut melody, beat * 4, 4, p);
                last_melody = p;
            }
        }
    }

    Song {
        id: id.to_string(),
        ticks_per_beat: DEFAULT_TICKS_PER_BEAT,
        tracks: vec![
            Track {
                name: "melody".into(),
                notes: sorted(melody),
            },
            Track {
                name: "piano".into(),
                notes: sorted(piano),
            },
        ],
        meter: vec![MeterChange {
            tick: 0,
            bar: 0,
            numerator: 4,
            denominator: 4,
        }],
        tempo: vec![TempoChange {
            tick: 0,
            micros_per_beat: 500_000,
        }],
        end_tick: beats as u64 * tpb,
    }
}

/// Pitch with class `pc` closest to `from`.
fn nearest(from: u8, pc: u8) -> u8 {
    let up = above(from, pc);
    if up - from > 6 && up >= 12 {
        up - 12
    } else {
        up
    }
}

fn sorted(mut notes: Vec<TimedNote>) -> Vec<TimedNote> {
    notes.sort_by_key(|n| (n.onset, n.pitch));
    notes
}

/// `n` songs named `synth-000`, `synth-001`, … from one seed.
pub fn generate_corpus(n: usize, opts: &SynthOptions, seed: u64) -> Vec<Song> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| generate_song(&format!("synth-{i:03}"), opts, &mut rng))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chord::{extract_progression, ExtractMode};
    use crate::score::quantize_and_segment;

    #[test]
    fn songs_segment_cleanly() {
        let songs = generate_corpus(6, &SynthOptions::default(), 1);
        for song in &songs {
            assert_eq!(song.tracks.len(), 2);
            let segs = quantize_and_segment(song, 8).segments;
            assert_eq!(segs.len(), 8);
            assert!(segs.iter().all(|s| !s.is_empty()));
        }
        assert_eq!(songs, generate_corpus(6, &SynthOptions::default(), 1));
    }

    #[test]
    fn accompaniment_matches_planned_chords() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let song = generate_song(
            "x",
            &SynthOptions {
                bars: 8,
                half_bar_chords: 0.0,
            },
            &mut rng,
        );
        let piano = Song {
            tracks: vec![song.track("piano").unwrap().clone()],
            ..song.clone()
        };
        for seg in quantize_and_segment(&piano, 8).segments {
            let prog = extract_progression(&seg, ExtractMode::Sounding);
            for f in prog.frames {
                assert!(!f.is_silent);
                assert_eq!(f.chroma.len(), 3, "{}", f.label());
            }
        }
    }

    #[test]
    fn triads_are_diatonic() {
        assert_eq!(triad(0, 0), [0, 4, 7]);
        assert_eq!(triad(0, 5), [9, 0, 4]);
        assert_eq!(triad(2, 4), [9, 1, 4]);
        assert_eq!(voicing([0, 4, 7]), [60, 64, 67, 72]);
    }
}
