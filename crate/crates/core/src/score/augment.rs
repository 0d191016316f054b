//! The three augmentation operators used for training and evaluation.

use rand::Rng;

use super::{NoteEvent, Segment};
use crate::{BEATS_PER_SEGMENT, STEPS_PER_BEAT};

fn check_prob(prob: f64) {
    assert!((0.0..=1.0).contains(&prob), "probability {prob} outside [0, 1]");
}

fn shift(pitch: u8, by: i32) -> Option<u8> {
    let p = i32::from(pitch) + by;
    (0..128).contains(&p).then_some(p as u8)
}

/// Transposes every note by `semitones`; notes leaving `[0, 127]` are dropped.
pub fn transpose(seg: &Segment, semitones: i32) -> Segment {
    seg.with_notes(seg.notes().iter().filter_map(|n| {
        shift(n.pitch, semitones).map(|pitch| NoteEvent { pitch, ..*n })
    }))
}

/// Selects each beat with probability `prob` and moves all notes with an
/// onset in a selected beat one semitone up or down (one direction per beat).
///
/// The rng is consumed in beat order: one selection draw per beat, then a
/// direction draw only for selected beats.
pub fn perturb_pitch<R: Rng + ?Sized>(seg: &Segment, prob: f64, rng: &mut R) -> Segment {
    check_prob(prob);
    let mut direction = [0i32; BEATS_PER_SEGMENT];
    for d in direction.iter_mut() {
        if rng.random_bool(prob) {
            *d = if rng.random_bool(0.5) { 1 } else { -1 };
        }
    }
    seg.with_notes(seg.notes().iter().filter_map(|n| {
        let beat = n.onset as usize / STEPS_PER_BEAT;
        shift(n.pitch, direction[beat]).map(|pitch| NoteEvent { pitch, ..*n })
    }))
}

/// Halves the duration (floor, minimum 1) of each note independently with
/// probability `prob`.
pub fn halve_durations<R: Rng + ?Sized>(seg: &Segment, prob: f64, rng: &mut R) -> Segment {
    check_prob(prob);
    let notes: Vec<NoteEvent> = seg
        .notes()
        .iter()
        .map(|n| {
            if rng.random_bool(prob) {
                NoteEvent {
                    duration: (n.duration / 2).max(1),
                    ..*n
                }
            } else {
                *n
            }
        })
        .collect();
    seg.with_notes(notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seg(notes: &[(u32, u8, u32)]) -> Segment {
        Segment::from_notes(notes.iter().map(|&(o, p, d)| NoteEvent::new(o, p, d)))
    }

    #[test]
    fn octave_shift_and_drop() {
        let s = seg(&[(0, 60, 4), (4, 120, 2)]);
        assert_eq!(transpose(&s, 12).notes(), &[NoteEvent::new(0, 72, 4)]);
        assert_eq!(transpose(&s, -61).notes(), &[NoteEvent::new(4, 59, 2)]);
    }

    #[test]
    fn zero_probability_is_identity() {
        let s = seg(&[(0, 60, 4), (5, 64, 3), (30, 67, 2)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(perturb_pitch(&s, 0.0, &mut rng), s);
        assert_eq!(halve_durations(&s, 0.0, &mut rng), s);
    }

    #[test]
    fn forced_perturbation_moves_every_note_by_one() {
        let s = seg(&[(0, 60, 4), (1, 64, 3), (9, 67, 2), (31, 40, 1)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = perturb_pitch(&s, 1.0, &mut rng);
        assert_eq!(out.len(), s.len());
        // notes sharing a beat move together
        let d0 = i32::from(out.notes()[0].pitch) - 60;
        let d1 = i32::from(out.notes().iter().find(|n| n.onset == 1).unwrap().pitch) - 64;
        assert_eq!(d0.abs(), 1);
        assert_eq!(d0, d1);
        for (a, b) in s.notes().iter().zip(out.notes()) {
            assert_eq!((i32::from(a.pitch) - i32::from(b.pitch)).abs(), 1);
            assert_eq!((a.onset, a.duration), (b.onset, b.duration));
        }
    }

    #[test]
    fn halving_rules() {
        let s = seg(&[(0, 60, 4), (4, 62, 1), (8, 64, 7)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = halve_durations(&s, 1.0, &mut rng);
        let d: Vec<u32> = out.notes().iter().map(|n| n.duration).collect();
        assert_eq!(d, vec![2, 1, 3]);
    }

    #[test]
    fn seeded_replay() {
        let s = seg(&[(0, 60, 4), (4, 62, 8), (8, 64, 7), (20, 50, 6)]);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (perturb_pitch(&s, 0.5, &mut rng), halve_durations(&s, 0.5, &mut rng))
        };
        assert_eq!(run(42), run(42));
    }

    proptest! {
        #[test]
        fn transpose_inverse(notes in prop::collection::vec((0u32..32, 24u8..104, 1u32..33), 0..30), i in -24i32..=24) {
            let s = Segment::from_notes(notes.into_iter().map(|(o, p, d)| NoteEvent::new(o, p, d)));
            prop_assert_eq!(transpose(&transpose(&s, i), -i), s);
        }

        #[test]
        fn octave_preserves_pitch_class(notes in prop::collection::vec((0u32..32, 0u8..116, 1u32..33), 0..30)) {
            let s = Segment::from_notes(notes.into_iter().map(|(o, p, d)| NoteEvent::new(o, p, d)));
            let t = transpose(&s, 12);
            prop_assert_eq!(t.len(), s.len());
            for (a, b) in s.notes().iter().zip(t.notes()) {
                prop_assert_eq!(a.pitch % 12, b.pitch % 12);
            }
        }
    }
}
