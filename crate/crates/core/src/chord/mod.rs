//! Rule-based chord recognition at one-beat resolution.
//!
//! Each beat of a segment becomes a [`ChordFrame`] (root, bass, chroma);
//! eight frames form a [`ChordProgression`], which encodes to the 36×8
//! binary matrix consumed by the chord encoder.

mod label;

use serde::{Deserialize, Serialize};

pub use label::{parse_label, parse_label_sequence, progressions_from_symbols, ChordLabel, PITCH_NAMES};

use crate::score::Segment;
use crate::{Error, Result, BEATS_PER_SEGMENT, STEPS_PER_BEAT};

/// Rows of the chord matrix: 12 root + 12 bass + 12 chroma.
pub const CHORD_DIM: usize = 36;

/// A 12-bit pitch-class set; bit `k` is pitch class `k` (C = 0).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Chroma(u16);

impl Chroma {
    pub const EMPTY: Chroma = Chroma(0);

    pub fn from_bits(bits: u16) -> Self {
        Chroma(bits & 0x0fff)
    }

    pub fn from_pitch_classes(pcs: impl IntoIterator<Item = u8>) -> Self {
        Chroma(pcs.into_iter().fold(0, |acc, pc| acc | 1 << (pc % 12)))
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn contains(self, pc: u8) -> bool {
        self.0 >> (pc % 12) & 1 == 1
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn pitch_classes(self) -> impl Iterator<Item = u8> {
        (0..12u8).filter(move |&pc| self.contains(pc))
    }

    /// Rotates upwards by `semitones` (mod 12).
    pub fn rotate(self, semitones: i32) -> Chroma {
        let k = semitones.rem_euclid(12) as u32;
        Chroma(((self.0 << k) | (self.0 >> (12 - k))) & 0x0fff)
    }

    fn intersect(self, other: Chroma) -> Chroma {
        Chroma(self.0 & other.0)
    }

    fn minus(self, other: Chroma) -> Chroma {
        Chroma(self.0 & !other.0)
    }
}

/// Chord qualities of the recognizer vocabulary, in tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quality {
    Major,
    Minor,
    Diminished,
    Augmented,
    Sus2,
    Sus4,
    Dominant7,
    Major7,
    Minor7,
}

impl Quality {
    pub const ALL: [Quality; 9] = [
        Quality::Major,
        Quality::Minor,
        Quality::Diminished,
        Quality::Augmented,
        Quality::Sus2,
        Quality::Sus4,
        Quality::Dominant7,
        Quality::Major7,
        Quality::Minor7,
    ];

    pub fn intervals(self) -> &'static [u8] {
        match self {
            Quality::Major => &[0, 4, 7],
            Quality::Minor => &[0, 3, 7],
            Quality::Diminished => &[0, 3, 6],
            Quality::Augmented => &[0, 4, 8],
            Quality::Sus2 => &[0, 2, 7],
            Quality::Sus4 => &[0, 5, 7],
            Quality::Dominant7 => &[0, 4, 7, 10],
            Quality::Major7 => &[0, 4, 7, 11],
            Quality::Minor7 => &[0, 3, 7, 10],
        }
    }

    pub fn template(self, root: u8) -> Chroma {
        Chroma::from_pitch_classes(self.intervals().iter().map(|i| (root + i) % 12))
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Quality::Major => "",
            Quality::Minor => "m",
            Quality::Diminished => "dim",
            Quality::Augmented => "aug",
            Quality::Sus2 => "sus2",
            Quality::Sus4 => "sus4",
            Quality::Dominant7 => "7",
            Quality::Major7 => "maj7",
            Quality::Minor7 => "m7",
        }
    }
}

/// Template score scaled by 10 to stay in integers:
/// `|O ∩ T| − 0.5·|T \ O| − 0.3·|O \ T|`.
fn score(observed: Chroma, template: Chroma) -> i32 {
    10 * observed.intersect(template).len() as i32
        - 5 * template.minus(observed).len() as i32
        - 3 * observed.minus(template).len() as i32
}

/// Best `(root, quality)` for an observed pitch-class set.
///
/// Ties go to triads over tetrads, then to the root closest above the bass,
/// then to vocabulary order. Using the bass-relative root keeps the choice
/// transposition-equivariant for symmetric chords such as augmented triads.
pub fn best_match(observed: Chroma, bass: u8) -> (u8, Quality) {
    let mut best: Option<((i32, u8, u8, usize), u8, Quality)> = None;
    for (qi, &q) in Quality::ALL.iter().enumerate() {
        for root in 0..12u8 {
            let s = score(observed, q.template(root));
            let size = q.intervals().len() as u8;
            // larger is better for score; smaller is better for the rest
            let key = (s, size, (root + 12 - bass % 12) % 12, qi);
            let better = match &best {
                None => true,
                Some((b, _, _)) => {
                    key.0 > b.0 || (key.0 == b.0 && (key.1, key.2, key.3) < (b.1, b.2, b.3))
                }
            };
            if better {
                best = Some((key, root, q));
            }
        }
    }
    let (_, root, q) = best.expect("vocabulary is non-empty");
    (root, q)
}

/// One beat of harmony.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChordFrame {
    pub root: u8,
    pub bass: u8,
    pub chroma: Chroma,
    /// Set only when there is no chord to carry (leading silence or "N").
    pub is_silent: bool,
}

impl ChordFrame {
    pub fn silent() -> Self {
        Self {
            root: 0,
            bass: 0,
            chroma: Chroma::EMPTY,
            is_silent: true,
        }
    }

    pub fn transposed(self, semitones: i32) -> Self {
        if self.is_silent {
            return self;
        }
        let rot = |pc: u8| ((i32::from(pc) + semitones).rem_euclid(12)) as u8;
        Self {
            root: rot(self.root),
            bass: rot(self.bass),
            chroma: self.chroma.rotate(semitones),
            is_silent: false,
        }
    }

    /// A readable label such as `Am` or `C/E`, `N` when silent.
    pub fn label(&self) -> String {
        if self.is_silent {
            return "N".into();
        }
        let root = self.root;
        let (_, q) = Quality::ALL
            .iter()
            .enumerate()
            .max_by_key(|(i, q)| {
                let size = q.intervals().len();
                (score(self.chroma, q.template(root)), std::cmp::Reverse((size, *i)))
            })
            .expect("vocabulary is non-empty");
        let mut s = format!("{}{}", PITCH_NAMES[root as usize], q.suffix());
        if self.bass != root {
            s.push('/');
            s.push_str(PITCH_NAMES[self.bass as usize]);
        }
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtractMode {
    /// Every note sounding at any point of the beat.
    Sounding,
    /// Only notes whose onset falls inside the beat.
    OnsetOnly,
}

/// Eight per-beat chord frames.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChordProgression {
    pub frames: [ChordFrame; BEATS_PER_SEGMENT],
}

/// The 36×8 chord matrix; column `b` is beat `b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChordMatrix {
    pub bits: [[u8; BEATS_PER_SEGMENT]; CHORD_DIM],
}

impl Default for ChordMatrix {
    fn default() -> Self {
        Self {
            bits: [[0; BEATS_PER_SEGMENT]; CHORD_DIM],
        }
    }
}

impl ChordMatrix {
    pub fn column(&self, beat: usize) -> [u8; CHORD_DIM] {
        std::array::from_fn(|r| self.bits[r][beat])
    }

    /// Beat-major `8 × 36` values, the chord encoder's input layout.
    pub fn to_beat_rows(&self) -> Vec<f64> {
        (0..BEATS_PER_SEGMENT)
            .flat_map(|b| (0..CHORD_DIM).map(move |r| (b, r)))
            .map(|(b, r)| f64::from(self.bits[r][b]))
            .collect()
    }
}

impl ChordProgression {
    pub fn new(frames: [ChordFrame; BEATS_PER_SEGMENT]) -> Self {
        Self { frames }
    }

    /// Builds a progression from per-beat labels, `"N"` being silence.
    pub fn from_labels(labels: &[ChordLabel]) -> Result<Self> {
        if labels.len() != BEATS_PER_SEGMENT {
            return Err(Error::LengthMismatch(format!(
                "a progression needs {BEATS_PER_SEGMENT} beat labels, got {}",
                labels.len()
            )));
        }
        Ok(Self {
            frames: std::array::from_fn(|b| labels[b].frame()),
        })
    }

    pub fn transposed(&self, semitones: i32) -> Self {
        Self {
            frames: self.frames.map(|f| f.transposed(semitones)),
        }
    }

    pub fn roots(&self) -> [u8; BEATS_PER_SEGMENT] {
        self.frames.map(|f| f.root)
    }

    /// Root block in rows 0–11, bass in 12–23, chroma in 24–35.
    pub fn encode_matrix(&self) -> ChordMatrix {
        let mut m = ChordMatrix::default();
        for (b, f) in self.frames.iter().enumerate() {
            m.bits[f.root as usize % 12][b] = 1;
            m.bits[12 + f.bass as usize % 12][b] = 1;
            for pc in f.chroma.pitch_classes() {
                m.bits[24 + pc as usize][b] = 1;
            }
        }
        m
    }

    /// Inverse of [`encode_matrix`](Self::encode_matrix).
    ///
    /// A column with an empty chroma block is a silent frame; its root and
    /// bass blocks may be one-hot or all zero. Any other column needs
    /// exactly one root bit and one bass bit.
    pub fn decode_matrix(m: &ChordMatrix) -> Result<Self> {
        let mut frames = [ChordFrame::default(); BEATS_PER_SEGMENT];
        for (b, frame) in frames.iter_mut().enumerate() {
            let col = m.column(b);
            if let Some(r) = col.iter().position(|&v| v > 1) {
                return Err(Error::MalformedChordMatrix {
                    beat: b,
                    message: format!("row {r} holds {}", col[r]),
                });
            }
            let chroma = Chroma::from_pitch_classes((0..12u8).filter(|&pc| col[24 + pc as usize] == 1));
            let silent = chroma.is_empty();
            let one_hot = |block: usize, what: &str| -> Result<u8> {
                let set: Vec<u8> = (0..12u8).filter(|&k| col[block + k as usize] == 1).collect();
                match set.as_slice() {
                    [k] => Ok(*k),
                    [] if silent => Ok(0),
                    _ => Err(Error::MalformedChordMatrix {
                        beat: b,
                        message: format!("{what} block has {} bits set", set.len()),
                    }),
                }
            };
            *frame = ChordFrame {
                root: one_hot(0, "root")?,
                bass: one_hot(12, "bass")?,
                chroma,
                is_silent: silent,
            };
        }
        Ok(Self { frames })
    }
}

/// Extracts the per-beat chord progression of a segment.
///
/// Beats without notes repeat the previous frame; leading silence yields
/// [`ChordFrame::silent`].
pub fn extract_progression(seg: &Segment, mode: ExtractMode) -> ChordProgression {
    let mut frames = [ChordFrame::silent(); BEATS_PER_SEGMENT];
    let mut previous = ChordFrame::silent();
    for (b, frame) in frames.iter_mut().enumerate() {
        let lo = (b * STEPS_PER_BEAT) as u32;
        let hi = lo + STEPS_PER_BEAT as u32;
        let active = seg.notes().iter().filter(|n| match mode {
            ExtractMode::Sounding => n.onset < hi && n.end() > lo,
            ExtractMode::OnsetOnly => n.onset >= lo && n.onset < hi,
        });
        let mut chroma = Chroma::EMPTY;
        let mut lowest: Option<u8> = None;
        for n in active {
            chroma = Chroma(chroma.0 | 1 << (n.pitch % 12));
            lowest = Some(lowest.map_or(n.pitch, |l| l.min(n.pitch)));
        }
        *frame = match lowest {
            None => previous,
            Some(low) => {
                let bass = low % 12;
                let (root, _) = best_match(chroma, bass);
                ChordFrame {
                    root,
                    bass,
                    chroma,
                    is_silent: false,
                }
            }
        };
        previous = *frame;
    }
    ChordProgression { frames }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{halve_durations, transpose, NoteEvent};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn beat_chord(pitches: &[u8]) -> Segment {
        Segment::from_notes(pitches.iter().map(|&p| NoteEvent::new(0, p, 4)))
    }

    /// Brute-force reference scorer over the full vocabulary, written
    /// with floats and a plain sort.
    fn reference_best(observed: &[u8], bass: u8) -> u8 {
        let obs: std::collections::BTreeSet<u8> = observed.iter().map(|p| p % 12).collect();
        let mut cands = Vec::new();
        for (qi, q) in Quality::ALL.iter().enumerate() {
            for root in 0..12u8 {
                let t: std::collections::BTreeSet<u8> =
                    q.intervals().iter().map(|i| (root + i) % 12).collect();
                let s = obs.intersection(&t).count() as f64
                    - 0.5 * t.difference(&obs).count() as f64
                    - 0.3 * obs.difference(&t).count() as f64;
                cands.push((-s, t.len(), (root + 12 - bass) % 12, qi, root));
            }
        }
        cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cands[0].4
    }

    #[test]
    fn c_major_triad() {
        let p = extract_progression(&beat_chord(&[60, 64, 67]), ExtractMode::Sounding);
        let f = p.frames[0];
        assert_eq!((f.root, f.bass), (0, 0));
        assert_eq!(f.chroma, Chroma::from_pitch_classes([0, 4, 7]));
        assert!(!f.is_silent);
        // later beats carry the chord
        assert_eq!(p.frames[7], f);
    }

    #[test]
    fn a_minor_root_position() {
        let f = extract_progression(&beat_chord(&[45, 60, 64]), ExtractMode::Sounding).frames[0];
        assert_eq!((f.root, f.bass), (9, 9));
        assert_eq!(f.chroma, Chroma::from_pitch_classes([9, 0, 4]));
        assert_eq!(reference_best(&[45, 60, 64], 9), 9);
    }

    #[test]
    fn c_am_f_g_roots() {
        let chords: [&[u8]; 4] = [&[48, 64, 67], &[45, 64, 69], &[41, 65, 69, 72], &[43, 62, 67, 71]];
        let notes = chords.iter().enumerate().flat_map(|(k, ps)| {
            ps.iter().map(move |&p| NoteEvent::new(k as u32 * 8, p, 8))
        });
        let p = extract_progression(&Segment::from_notes(notes), ExtractMode::Sounding);
        assert_eq!(p.roots(), [0, 0, 9, 9, 5, 5, 7, 7]);
    }

    #[test]
    fn leading_silence() {
        let seg = Segment::from_notes([NoteEvent::new(8, 60, 4), NoteEvent::new(8, 64, 4)]);
        let p = extract_progression(&seg, ExtractMode::Sounding);
        assert!(p.frames[0].is_silent && p.frames[1].is_silent);
        assert!(!p.frames[2].is_silent);
        let m = p.encode_matrix();
        assert!((24..36).all(|r| m.bits[r][0] == 0));
        assert_eq!(ChordProgression::decode_matrix(&m).unwrap(), p);
    }

    #[test]
    fn c_major_column_bits() {
        let p = extract_progression(&beat_chord(&[60, 64, 67]), ExtractMode::Sounding);
        let col = p.encode_matrix().column(0);
        let set: Vec<usize> = (0..36).filter(|&r| col[r] == 1).collect();
        let expected: Vec<usize> = [0, 12].into_iter().chain([0, 4, 7].map(|pc| 24 + pc)).collect();
        assert_eq!(set, expected);
        assert_eq!(set, vec![0, 12, 24, 28, 31]);
    }

    #[test]
    fn malformed_matrix() {
        let p = extract_progression(&beat_chord(&[60, 64, 67]), ExtractMode::Sounding);
        let mut m = p.encode_matrix();
        m.bits[3][2] = 1;
        assert!(matches!(
            ChordProgression::decode_matrix(&m),
            Err(Error::MalformedChordMatrix { beat: 2, .. })
        ));
        let mut m = p.encode_matrix();
        m.bits[0][5] = 0;
        assert!(ChordProgression::decode_matrix(&m).is_err());
    }

    #[test]
    fn augmented_tie_is_bass_relative() {
        let (root, q) = best_match(Chroma::from_pitch_classes([0, 4, 8]), 4);
        assert_eq!((root, q), (4, Quality::Augmented));
    }

    pub(crate) fn arb_segment() -> impl Strategy<Value = Segment> {
        prop::collection::vec((0u32..32, 12u8..116, 1u32..17), 0..30)
            .prop_map(|v| Segment::from_notes(v.into_iter().map(|(o, p, d)| NoteEvent::new(o, p, d))))
    }

    fn arb_frame() -> impl Strategy<Value = ChordFrame> {
        prop_oneof![
            Just(ChordFrame::silent()),
            (0u8..12, 0u8..12, 1u16..4096).prop_map(|(root, bass, bits)| ChordFrame {
                root,
                bass,
                chroma: Chroma::from_bits(bits),
                is_silent: false,
            }),
        ]
    }

    proptest! {
        #[test]
        fn matches_reference_scorer(pcs in prop::collection::btree_set(0u8..12, 1..7), bass_idx in 0usize..7) {
            let pcs: Vec<u8> = pcs.into_iter().collect();
            let bass = pcs[bass_idx % pcs.len()];
            let (root, _) = best_match(Chroma::from_pitch_classes(pcs.iter().copied()), bass);
            prop_assert_eq!(root, reference_best(&pcs, bass));
        }

        #[test]
        fn matrix_round_trip(frames in prop::array::uniform8(arb_frame())) {
            let p = ChordProgression::new(frames);
            prop_assert_eq!(ChordProgression::decode_matrix(&p.encode_matrix()).unwrap(), p);
        }

        #[test]
        fn transposition_equivariance(seg in arb_segment(), i in -11i32..12) {
            let shifted = transpose(&seg, i);
            prop_assume!(shifted.len() == seg.len());
            for mode in [ExtractMode::Sounding, ExtractMode::OnsetOnly] {
                let a = extract_progression(&seg, mode);
                let b = extract_progression(&shifted, mode);
                prop_assert_eq!(b, a.transposed(i));
            }
        }

        #[test]
        fn onset_mode_ignores_durations(seg in arb_segment(), prob in 0.0f64..=1.0, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let halved = halve_durations(&seg, prob, &mut rng);
            prop_assert_eq!(
                extract_progression(&halved, ExtractMode::OnsetOnly),
                extract_progression(&seg, ExtractMode::OnsetOnly)
            );
        }
    }
}
