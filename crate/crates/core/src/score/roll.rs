use super::{NoteEvent, Segment, SegmentSource};
use crate::{Error, Result, NUM_PITCHES, SEGMENT_STEPS};

/// 128×32 piano-roll whose onset cells hold the note duration.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PianoRoll {
    cells: Vec<u8>,
}

impl Default for PianoRoll {
    fn default() -> Self {
        Self {
            cells: vec![0; NUM_PITCHES * SEGMENT_STEPS],
        }
    }
}

impl PianoRoll {
    pub const ROWS: usize = NUM_PITCHES;
    pub const COLS: usize = SEGMENT_STEPS;

    pub fn from_segment(seg: &Segment) -> Self {
        let mut roll = Self::default();
        for n in seg.notes() {
            roll.cells[n.pitch as usize * SEGMENT_STEPS + n.onset as usize] = n.duration as u8;
        }
        roll
    }

    /// Builds a roll from raw cells (row-major, pitch × step), validating
    /// that every entry fits before the segment end.
    pub fn from_cells(cells: Vec<u8>) -> Result<Self> {
        if cells.len() != NUM_PITCHES * SEGMENT_STEPS {
            return Err(Error::Shape {
                expected: format!("{NUM_PITCHES}x{SEGMENT_STEPS}"),
                got: format!("{} cells", cells.len()),
            });
        }
        for (i, &v) in cells.iter().enumerate() {
            let t = i % SEGMENT_STEPS;
            if usize::from(v) > SEGMENT_STEPS - t {
                return Err(Error::InvalidSegment(format!(
                    "cell ({}, {t}) holds duration {v} past the segment end",
                    i / SEGMENT_STEPS
                )));
            }
        }
        Ok(Self { cells })
    }

    pub fn get(&self, pitch: usize, step: usize) -> u8 {
        self.cells[pitch * SEGMENT_STEPS + step]
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn nonzero(&self) -> usize {
        self.cells.iter().filter(|&&c| c > 0).count()
    }

    pub fn to_segment(&self, source: SegmentSource) -> Segment {
        let notes = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, &d)| d > 0)
            .map(|(i, &d)| {
                NoteEvent::new((i % SEGMENT_STEPS) as u32, (i / SEGMENT_STEPS) as u8, u32::from(d))
            });
        Segment::new(notes, source)
    }

    /// Row-major values as `f64`, the texture encoder input layout.
    pub fn to_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| f64::from(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_note() {
        let roll = PianoRoll::from_segment(&Segment::from_notes([NoteEvent::new(0, 60, 4)]));
        assert_eq!(roll.get(60, 0), 4);
        assert_eq!(roll.nonzero(), 1);
        assert_eq!(roll.cells().len(), 128 * 32);
    }

    #[test]
    fn empty_segment() {
        assert_eq!(PianoRoll::from_segment(&Segment::empty()).nonzero(), 0);
    }

    #[test]
    fn chord_column() {
        let seg = Segment::from_notes([60, 64, 67].map(|p| NoteEvent::new(8, p, 8)));
        let roll = PianoRoll::from_segment(&seg);
        for p in [60, 64, 67] {
            assert_eq!(roll.get(p, 8), 8);
        }
        assert_eq!(roll.nonzero(), 3);
    }

    #[test]
    fn overlong_cell_rejected() {
        let mut cells = vec![0u8; 128 * 32];
        cells[31] = 2;
        assert!(PianoRoll::from_cells(cells).is_err());
    }

    pub(crate) fn arb_segment() -> impl Strategy<Value = Segment> {
        prop::collection::vec((0u32..32, 0u8..128, 1u32..33), 0..40)
            .prop_map(|v| Segment::from_notes(v.into_iter().map(|(o, p, d)| NoteEvent::new(o, p, d))))
    }

    proptest! {
        #[test]
        fn matrix_round_trip(seg in arb_segment()) {
            let roll = PianoRoll::from_segment(&seg);
            prop_assert_eq!(roll.nonzero(), seg.len());
            prop_assert_eq!(roll.to_segment(seg.source.clone()), seg.clone());
            prop_assert!(PianoRoll::from_cells(roll.cells().to_vec()).is_ok());
        }
    }
}
