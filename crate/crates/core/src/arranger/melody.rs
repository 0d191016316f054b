//! Baseline melody embedder: two GRUs over a 2-bar monophonic unit, one
//! reading pitch tokens and one reading onset/hold/rest tokens.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Graph, Gru, Linear, Mat, ParamStore, Var};
use crate::score::Segment;
use crate::SEGMENT_STEPS;

/// Pitch token for a continued note.
pub const HOLD_TOKEN: usize = 128;
/// Pitch token for silence.
pub const REST_TOKEN: usize = 129;
pub const MELODY_PITCH_TOKENS: usize = 130;
/// Rhythm tokens: onset, hold, rest.
pub const RHYTHM_TOKENS: usize = 3;

/// Latent pitch and rhythm vectors of one melody unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MelodyUnitEmbedding {
    pub z_p: Vec<f64>,
    pub z_r: Vec<f64>,
}

impl MelodyUnitEmbedding {
    pub fn is_finite(&self) -> bool {
        self.z_p.iter().chain(&self.z_r).all(|x| x.is_finite())
    }
}

/// Anything that maps 2-bar monophonic units to fixed-size vector pairs.
pub trait MelodyEncoder {
    fn embed(&self, units: &[Segment]) -> Vec<MelodyUnitEmbedding>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MelodyTokens {
    pub pitch: [usize; SEGMENT_STEPS],
    pub rhythm: [usize; SEGMENT_STEPS],
}

/// True if any two notes of `seg` overlap in time.
pub fn is_polyphonic(seg: &Segment) -> bool {
    let mut ends: Vec<(u32, u32)> = seg.notes().iter().map(|n| (n.onset, n.end())).collect();
    ends.sort_unstable();
    ends.windows(2).any(|w| w[1].0 < w[0].1)
}

/// Per-step tokens of `seg`, keeping the highest sounding pitch at every
/// step.
pub fn melody_tokens(seg: &Segment) -> MelodyTokens {
    let mut pitch = [REST_TOKEN; SEGMENT_STEPS];
    let mut rhythm = [2; SEGMENT_STEPS];
    let mut top: [Option<(u8, u32)>; SEGMENT_STEPS] = [None; SEGMENT_STEPS];
    for n in seg.notes() {
        for t in n.onset..n.end() {
            let slot = &mut top[t as usize];
            if slot.is_none_or(|(p, _)| n.pitch > p) {
                *slot = Some((n.pitch, n.onset));
            }
        }
    }
    for (t, slot) in top.iter().enumerate() {
        if let Some((p, onset)) = *slot {
            // a note that becomes the top voice mid-way counts as a hold
            let starts = onset as usize == t;
            pitch[t] = if starts { usize::from(p) } else { HOLD_TOKEN };
            rhythm[t] = if starts { 0 } else { 1 };
        }
    }
    MelodyTokens { pitch, rhythm }
}

#[derive(Clone, Debug)]
pub struct BaselineMelodyEmbedder {
    pub pitch_gru: Gru,
    pub rhythm_gru: Gru,
    pub pitch_out: Linear,
    pub rhythm_out: Linear,
}

impl BaselineMelodyEmbedder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, hidden: usize, out: usize, rng: &mut R) -> Self {
        Self {
            pitch_gru: Gru::new(store, "melody.pitch_gru", MELODY_PITCH_TOKENS, hidden, rng),
            rhythm_gru: Gru::new(store, "melody.rhythm_gru", RHYTHM_TOKENS, hidden, rng),
            pitch_out: Linear::new(store, "melody.pitch_out", hidden, out, rng),
            rhythm_out: Linear::new(store, "melody.rhythm_out", hidden, out, rng),
        }
    }

    /// `(z_p, z_r)` as `[units, out]` graph values.
    pub fn forward(&self, g: &mut Graph<'_>, units: &[Segment]) -> (Var, Var) {
        let n = units.len();
        let steps = SEGMENT_STEPS;
        let mut p = Mat::zeros(steps * n, MELODY_PITCH_TOKENS);
        let mut r = Mat::zeros(steps * n, RHYTHM_TOKENS);
        for (u, seg) in units.iter().enumerate() {
            if is_polyphonic(seg) {
                log::warn!(
                    "melody unit {}@{} is polyphonic; keeping the highest pitch",
                    seg.source.song_id,
                    seg.source.start_beat
                );
            }
            let tok = melody_tokens(seg);
            for t in 0..steps {
                p.set(t * n + u, tok.pitch[t], 1.0);
                r.set(t * n + u, tok.rhythm[t], 1.0);
            }
        }
        let p = g.input(p);
        let r = g.input(r);
        let h0 = g.input(Mat::zeros(n, self.pitch_gru.hidden));
        let hp = *self.pitch_gru.run(g, p, steps, n, h0, false).last().expect("steps > 0");
        let hr = *self.rhythm_gru.run(g, r, steps, n, h0, false).last().expect("steps > 0");
        (self.pitch_out.forward(g, hp), self.rhythm_out.forward(g, hr))
    }

    pub fn embed_with(&self, store: &ParamStore, units: &[Segment]) -> Vec<MelodyUnitEmbedding> {
        if units.is_empty() {
            return Vec::new();
        }
        let mut g = Graph::new(store);
        let (zp, zr) = self.forward(&mut g, units);
        let (zp, zr) = (g.value(zp), g.value(zr));
        (0..units.len())
            .map(|i| MelodyUnitEmbedding {
                z_p: zp.row(i).to_vec(),
                z_r: zr.row(i).to_vec(),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::NoteEvent;

    #[test]
    fn tokens_mark_onsets_holds_and_rests() {
        let seg = Segment::from_notes([NoteEvent::new(0, 60, 4), NoteEvent::new(8, 62, 2)]);
        let t = melody_tokens(&seg);
        assert_eq!(&t.pitch[..10], &[60, 128, 128, 128, 129, 129, 129, 129, 62, 128]);
        assert_eq!(&t.rhythm[..10], &[0, 1, 1, 1, 2, 2, 2, 2, 0, 1]);
        assert!(t.pitch[10..].iter().all(|&p| p == REST_TOKEN));
        assert!(!is_polyphonic(&seg));
    }

    #[test]
    fn polyphony_keeps_highest_pitch() {
        let seg = Segment::from_notes([
            NoteEvent::new(0, 60, 8),
            NoteEvent::new(0, 67, 2),
            NoteEvent::new(4, 64, 2),
        ]);
        assert!(is_polyphonic(&seg));
        let t = melody_tokens(&seg);
        assert_eq!(&t.pitch[..8], &[67, 128, 128, 128, 64, 128, 128, 128]);
    }
}
