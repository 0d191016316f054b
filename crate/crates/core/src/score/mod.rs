//! Symbolic-music intermediate representation.
//!
//! Everything downstream works on [`Segment`]s: 8 beats of quantized notes
//! on a sixteenth-note grid.

mod augment;
mod midi;
mod record;
mod roll;
mod segment;

use serde::{Deserialize, Serialize};

pub use augment::{halve_durations, perturb_pitch, transpose};
pub use midi::{
    encode_smf, load_midi, parse_smf, segments_to_song, write_segments, write_song,
    DEFAULT_TICKS_PER_BEAT,
};
pub use record::{SongRecord, Stream, RECORD_EXTENSION, RECORD_MAGIC, RECORD_VERSION};
pub use roll::PianoRoll;
pub use segment::{quantize_and_segment, segment_song, Segmentation, SegmentOptions};

use crate::SEGMENT_STEPS;

/// A note on the quarter-beat grid, relative to its segment start.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NoteEvent {
    pub onset: u32,
    pub pitch: u8,
    pub duration: u32,
}

impl NoteEvent {
    pub fn new(onset: u32, pitch: u8, duration: u32) -> Self {
        Self {
            onset,
            pitch,
            duration,
        }
    }

    pub fn end(&self) -> u32 {
        self.onset + self.duration
    }
}

/// Where a segment came from.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentSource {
    pub song_id: String,
    pub start_beat: u32,
}

impl SegmentSource {
    pub fn new(song_id: impl Into<String>, start_beat: u32) -> Self {
        Self {
            song_id: song_id.into(),
            start_beat,
        }
    }
}

/// Eight beats (32 steps) of polyphonic notes.
///
/// Construction normalizes the note list: onsets outside `[0, 32)` and
/// pitches above 127 are dropped, zero durations become 1, durations are
/// clipped at the segment end, equal `(onset, pitch)` pairs are merged
/// keeping the longer duration, and notes are sorted by `(onset, pitch)`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segment {
    notes: Vec<NoteEvent>,
    pub source: SegmentSource,
}

impl Segment {
    pub fn new(notes: impl IntoIterator<Item = NoteEvent>, source: SegmentSource) -> Self {
        let steps = SEGMENT_STEPS as u32;
        let mut notes: Vec<NoteEvent> = notes
            .into_iter()
            .filter(|n| n.onset < steps && n.pitch < 128)
            .map(|n| NoteEvent {
                duration: n.duration.clamp(1, steps - n.onset),
                ..n
            })
            .collect();
        // longest first within equal (onset, pitch) so dedup keeps it
        notes.sort_by(|a, b| {
            (a.onset, a.pitch)
                .cmp(&(b.onset, b.pitch))
                .then(b.duration.cmp(&a.duration))
        });
        notes.dedup_by(|later, kept| later.onset == kept.onset && later.pitch == kept.pitch);
        Self { notes, source }
    }

    pub fn from_notes(notes: impl IntoIterator<Item = NoteEvent>) -> Self {
        Self::new(notes, SegmentSource::default())
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn notes(&self) -> &[NoteEvent] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn with_notes(&self, notes: impl IntoIterator<Item = NoteEvent>) -> Self {
        Self::new(notes, self.source.clone())
    }

    /// Checks the segment invariants; `Segment::new` always establishes
    /// them, this exists for data decoded from elsewhere.
    pub fn validate(&self) -> crate::Result<()> {
        let steps = SEGMENT_STEPS as u32;
        for (i, n) in self.notes.iter().enumerate() {
            if n.onset >= steps || n.duration == 0 || n.end() > steps || n.pitch > 127 {
                return Err(crate::Error::InvalidSegment(format!("note {i} out of range: {n:?}")));
            }
            if i > 0 {
                let p = self.notes[i - 1];
                if (p.onset, p.pitch) >= (n.onset, n.pitch) {
                    return Err(crate::Error::InvalidSegment(format!(
                        "notes {} and {i} not strictly ordered",
                        i - 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A note with absolute timing in MIDI ticks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedNote {
    pub onset: u64,
    pub duration: u64,
    pub pitch: u8,
    pub velocity: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Track {
    pub name: String,
    pub notes: Vec<TimedNote>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterChange {
    pub tick: u64,
    pub bar: u32,
    pub numerator: u8,
    pub denominator: u8,
}

impl MeterChange {
    pub fn is_duple(&self) -> bool {
        self.denominator == 4 && (self.numerator == 2 || self.numerator == 4)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TempoChange {
    pub tick: u64,
    pub micros_per_beat: u32,
}

/// A parsed MIDI file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Song {
    pub id: String,
    pub ticks_per_beat: u16,
    pub tracks: Vec<Track>,
    /// Never empty; a file without time signatures gets 4/4 at tick 0.
    pub meter: Vec<MeterChange>,
    pub tempo: Vec<TempoChange>,
    /// Latest end-of-track tick over all tracks.
    pub end_tick: u64,
}

impl Song {
    pub fn note_count(&self) -> usize {
        self.tracks.iter().map(|t| t.notes.len()).sum()
    }

    pub fn track(&self, name: &str) -> Option<&Track> {
        self.tracks.iter().find(|t| t.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_normalizes() {
        let seg = Segment::from_notes([
            NoteEvent::new(8, 64, 4),
            NoteEvent::new(0, 60, 0),
            NoteEvent::new(30, 60, 10),
            NoteEvent::new(8, 64, 6),
            NoteEvent::new(32, 60, 1),
        ]);
        assert_eq!(
            seg.notes(),
            &[
                NoteEvent::new(0, 60, 1),
                NoteEvent::new(8, 64, 6),
                NoteEvent::new(30, 60, 2)
            ]
        );
        seg.validate().unwrap();
    }
}
