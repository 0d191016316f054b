use super::{NoteEvent, Segment, SegmentSource, Song};
use crate::{BEATS_PER_SEGMENT, STEPS_PER_BEAT};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegmentOptions {
    /// Distance between consecutive window starts, in beats.
    pub hop_beats: u32,
    /// Beat at which the first window starts.
    pub offset_beats: u32,
    /// Tracks merged into the segments; `None` takes every track.
    pub tracks: Option<Vec<String>>,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            hop_beats: BEATS_PER_SEGMENT as u32,
            offset_beats: 0,
            tracks: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    /// Songs skipped because of an unsupported meter.
    pub skipped: usize,
}

/// Nearest grid step, ties rounding up.
fn ticks_to_steps(ticks: u64, ticks_per_beat: u16) -> u64 {
    let tpb = u64::from(ticks_per_beat.max(1));
    (2 * STEPS_PER_BEAT as u64 * ticks + tpb) / (2 * tpb)
}

/// Cuts a song into 8-beat segments every `hop_beats` beats.
///
/// Songs whose meter map contains anything other than 2/4 or 4/4 are
/// skipped and counted in [`Segmentation::skipped`].
///
/// # Panics
/// If `hop_beats` is zero.
pub fn quantize_and_segment(song: &Song, hop_beats: u32) -> Segmentation {
    segment_song(
        song,
        &SegmentOptions {
            hop_beats,
            ..Default::default()
        },
    )
}

pub fn segment_song(song: &Song, opts: &SegmentOptions) -> Segmentation {
    assert!(opts.hop_beats >= 1, "hop_beats must be at least 1");
    if !song.meter.iter().all(|m| m.is_duple()) {
        return Segmentation {
            segments: Vec::new(),
            skipped: 1,
        };
    }
    let tpb = song.ticks_per_beat;
    let mut notes: Vec<NoteEvent> = song
        .tracks
        .iter()
        .filter(|t| opts.tracks.as_ref().map_or(true, |names| names.contains(&t.name)))
        .flat_map(|t| t.notes.iter())
        .filter(|n| n.pitch < 128)
        .map(|n| {
            let onset = ticks_to_steps(n.onset, tpb);
            let duration = ticks_to_steps(n.duration, tpb).max(1);
            NoteEvent::new(
                onset.min(u64::from(u32::MAX)) as u32,
                n.pitch,
                duration.min(u64::from(u32::MAX)) as u32,
            )
        })
        .collect();
    notes.sort();

    let end_steps = notes
        .iter()
        .map(|n| u64::from(n.onset) + u64::from(n.duration))
        .chain(std::iter::once(ticks_to_steps(song.end_tick, tpb)))
        .max()
        .unwrap_or(0);
    let steps_per_beat = STEPS_PER_BEAT as u64;
    let total_beats = end_steps.div_ceil(steps_per_beat);
    let window = BEATS_PER_SEGMENT as u64;

    let mut segments = Vec::new();
    let mut start = u64::from(opts.offset_beats);
    while start + window <= total_beats {
        let lo = start * steps_per_beat;
        let hi = lo + window * steps_per_beat;
        let first = notes.partition_point(|n| u64::from(n.onset) < lo);
        let last = notes.partition_point(|n| u64::from(n.onset) < hi);
        let local = notes[first..last].iter().map(|n| NoteEvent {
            onset: (u64::from(n.onset) - lo) as u32,
            ..*n
        });
        segments.push(Segment::new(local, SegmentSource::new(song.id.clone(), start as u32)));
        start += u64::from(opts.hop_beats);
    }
    Segmentation {
        segments,
        skipped: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{MeterChange, TempoChange, TimedNote, Track};

    fn song(notes: Vec<TimedNote>, num: u8, end_tick: u64) -> Song {
        Song {
            id: "s".into(),
            ticks_per_beat: 100,
            tracks: vec![Track {
                name: "piano".into(),
                notes,
            }],
            meter: vec![MeterChange {
                tick: 0,
                bar: 0,
                numerator: num,
                denominator: 4,
            }],
            tempo: vec![TempoChange {
                tick: 0,
                micros_per_beat: 500_000,
            }],
            end_tick,
        }
    }

    fn note(onset: u64, duration: u64, pitch: u8) -> TimedNote {
        TimedNote {
            onset,
            duration,
            pitch,
            velocity: 64,
        }
    }

    #[test]
    fn thirty_two_beats_hop_eight() {
        let s = song(vec![note(0, 100, 60)], 4, 3200);
        assert_eq!(quantize_and_segment(&s, 8).segments.len(), 4);
        assert_eq!(quantize_and_segment(&s, 4).segments.len(), 7);
    }

    #[test]
    fn triple_meter_skipped() {
        let s = song(vec![note(0, 100, 60)], 3, 3200);
        let r = quantize_and_segment(&s, 8);
        assert!(r.segments.is_empty());
        assert_eq!(r.skipped, 1);
    }

    #[test]
    fn nearest_grid_rounding() {
        // 0.13 beats -> 0.52 steps -> 1; 0.125 beats -> tie -> rounds up
        let s = song(vec![note(13, 100, 60), note(300, 1, 62), note(412, 100, 64)], 4, 800);
        let segs = quantize_and_segment(&s, 8).segments;
        let n = segs[0].notes();
        assert_eq!(n[0], NoteEvent::new(1, 60, 4));
        assert_eq!(n[1], NoteEvent::new(12, 62, 1));
        assert_eq!(n[2].onset, 16); // 4.12 beats = 16.48 steps
        assert_eq!(ticks_to_steps(12, 96), 1); // 0.5 step exactly rounds up
    }

    #[test]
    fn trailing_partial_window_dropped() {
        let s = song(vec![note(0, 100, 60)], 4, 1500);
        assert_eq!(quantize_and_segment(&s, 8).segments.len(), 1);
    }

    #[test]
    fn boundary_crossing_durations_clipped() {
        let s = song(vec![note(700, 400, 60)], 4, 1600);
        let segs = quantize_and_segment(&s, 8).segments;
        assert_eq!(segs[0].notes(), &[NoteEvent::new(28, 60, 4)]);
        assert!(segs[1].is_empty());
    }
}
