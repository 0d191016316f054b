use serde::{Deserialize, Serialize};

use crate::score::{NoteEvent, Segment, SegmentSource};
use crate::{Error, Result, SEGMENT_STEPS};

/// Most notes a single frame may hold.
pub const MAX_NOTES_PER_FRAME: usize = 16;
/// Bits in the duration code.
pub const DURATION_BITS: usize = 5;
/// Pitch vocabulary: 128 pitches plus start and stop tokens.
pub const PITCH_TOKENS: usize = 130;
pub const START_TOKEN: usize = 128;
pub const STOP_TOKEN: usize = 129;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNote {
    pub pitch: u8,
    /// Steps, in `1..=32`.
    pub duration: u8,
}

/// Notes grouped by onset frame, ascending pitch inside each frame.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PianoTree {
    pub frames: Vec<Vec<TreeNote>>,
}

/// `duration − 1` as five bits, most significant first.
pub fn duration_bits(duration: u8) -> [u8; DURATION_BITS] {
    assert!((1..=32).contains(&duration), "duration {duration} outside 1..=32");
    let code = duration - 1;
    std::array::from_fn(|i| (code >> (DURATION_BITS - 1 - i)) & 1)
}

pub fn duration_from_bits(bits: &[u8; DURATION_BITS]) -> u8 {
    bits.iter().fold(0u8, |acc, &b| (acc << 1) | (b & 1)) + 1
}

impl Default for PianoTree {
    fn default() -> Self {
        Self {
            frames: vec![Vec::new(); SEGMENT_STEPS],
        }
    }
}

impl PianoTree {
    /// Groups a segment's notes by onset. Frames with more than 16 notes
    /// keep their lowest 16.
    pub fn from_segment(seg: &Segment) -> Self {
        let mut tree = Self::default();
        for n in seg.notes() {
            let frame = &mut tree.frames[n.onset as usize];
            if frame.len() < MAX_NOTES_PER_FRAME {
                frame.push(TreeNote {
                    pitch: n.pitch,
                    duration: n.duration as u8,
                });
            }
        }
        tree
    }

    /// Converts back to a segment; durations running past the segment end
    /// are clipped.
    pub fn to_segment(&self, source: SegmentSource) -> Segment {
        let notes = self.frames.iter().enumerate().flat_map(|(t, frame)| {
            frame
                .iter()
                .map(move |n| NoteEvent::new(t as u32, n.pitch, u32::from(n.duration)))
        });
        Segment::new(notes, source)
    }

    pub fn note_count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.len() != SEGMENT_STEPS {
            return Err(Error::Shape {
                expected: format!("{SEGMENT_STEPS} frames"),
                got: format!("{} frames", self.frames.len()),
            });
        }
        for (t, frame) in self.frames.iter().enumerate() {
            if frame.len() > MAX_NOTES_PER_FRAME {
                return Err(Error::InvalidSegment(format!("frame {t} holds {} notes", frame.len())));
            }
            for (i, n) in frame.iter().enumerate() {
                if n.pitch > 127 || !(1..=32).contains(&n.duration) {
                    return Err(Error::InvalidSegment(format!("frame {t} note {i} out of range: {n:?}")));
                }
                if i > 0 && frame[i - 1].pitch >= n.pitch {
                    return Err(Error::InvalidSegment(format!("frame {t} pitches not increasing")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn duration_code_round_trips() {
        for d in 1..=32u8 {
            assert_eq!(duration_from_bits(&duration_bits(d)), d);
        }
        assert_eq!(duration_bits(1), [0, 0, 0, 0, 0]);
        assert_eq!(duration_bits(32), [1, 1, 1, 1, 1]);
        assert_eq!(duration_bits(5), [0, 0, 1, 0, 0]);
    }

    #[test]
    fn crowded_frame_keeps_lowest_sixteen() {
        let seg = Segment::from_notes((40..60).map(|p| NoteEvent::new(0, p, 2)));
        let tree = PianoTree::from_segment(&seg);
        assert_eq!(tree.frames[0].len(), 16);
        assert_eq!(tree.frames[0][15].pitch, 55);
        tree.validate().unwrap();
    }

    proptest! {
        #[test]
        fn segment_round_trip(notes in prop::collection::vec((0u32..32, 0u8..128, 1u32..33), 0..40)) {
            let seg = Segment::from_notes(notes.into_iter().map(|(o, p, d)| NoteEvent::new(o, p, d)));
            let tree = PianoTree::from_segment(&seg);
            prop_assert_eq!(tree.frames.len(), 32);
            tree.validate().unwrap();
            // at most 16 notes per onset survive
            let kept = tree.to_segment(seg.source.clone());
            if seg.notes().chunk_by(|a, b| a.onset == b.onset).all(|c| c.len() <= 16) {
                prop_assert_eq!(kept, seg);
            }
        }
    }
}
