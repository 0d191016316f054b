//! The chord/texture VAE.
//!
//! A chord encoder and a convolutional texture encoder map a segment to two
//! Gaussian posteriors, `z_chd` and `z_txt`. A chord decoder reconstructs the
//! per-beat chords from `z_chd` alone and a PianoTree decoder reconstructs
//! the notes from `[z_chd, z_txt]`.

mod nets;
mod tree;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use nets::{
    ChordDecoder, ChordEncoder, FeatureMap, PianoTreeDecoder, TextureEncoder, CONV_CHANNELS, CONV_HEIGHT,
    CONV_KERNEL_PITCH, CONV_KERNEL_TIME, CONV_WIDTH, POOLED_HEIGHT, POOL_KERNEL,
};
pub use tree::{
    duration_bits, duration_from_bits, PianoTree, TreeNote, DURATION_BITS, MAX_NOTES_PER_FRAME, PITCH_TOKENS,
    START_TOKEN, STOP_TOKEN,
};

use crate::chord::{extract_progression, ChordMatrix, ChordProgression, ExtractMode};
use crate::nn::{Checkpoint, CheckpointKind, Gradients, Graph, Mat, ParamStore, Var};
use crate::score::{PianoRoll, Segment, SegmentSource};
use crate::{Error, Result, BEATS_PER_SEGMENT};

pub const VAE_CHECKPOINT_VERSION: u16 = 1;
/// Segments per graph during inference.
const INFERENCE_CHUNK: usize = 64;

/// Layer widths.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub chord_enc_hidden: usize,
    pub chord_dec_hidden: usize,
    pub texture_enc_hidden: usize,
    pub frame_hidden: usize,
    pub note_hidden: usize,
    /// Width of the latent projection fed to the frame GRU at every step.
    pub frame_input: usize,
    pub note_embedding: usize,
    pub duration_hidden: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 256,
            chord_enc_hidden: 256,
            chord_dec_hidden: 512,
            texture_enc_hidden: 512,
            frame_hidden: 1024,
            note_hidden: 512,
            frame_input: 256,
            note_embedding: 128,
            duration_hidden: 64,
        }
    }
}

impl VaeConfig {
    /// Every width 16, latent 8; for gradient checks.
    pub fn tiny() -> Self {
        Self {
            latent_dim: 8,
            chord_enc_hidden: 16,
            chord_dec_hidden: 16,
            texture_enc_hidden: 16,
            frame_hidden: 16,
            note_hidden: 16,
            frame_input: 16,
            note_embedding: 16,
            duration_hidden: 16,
        }
    }

    /// Reduced widths that train in minutes on one CPU core.
    pub fn small() -> Self {
        Self {
            latent_dim: 32,
            chord_enc_hidden: 32,
            chord_dec_hidden: 48,
            texture_enc_hidden: 64,
            frame_hidden: 128,
            note_hidden: 64,
            frame_input: 32,
            note_embedding: 32,
            duration_hidden: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("latent_dim", self.latent_dim),
            ("chord_enc_hidden", self.chord_enc_hidden),
            ("chord_dec_hidden", self.chord_dec_hidden),
            ("texture_enc_hidden", self.texture_enc_hidden),
            ("frame_hidden", self.frame_hidden),
            ("note_hidden", self.note_hidden),
            ("frame_input", self.frame_input),
            ("note_embedding", self.note_embedding),
            ("duration_hidden", self.duration_hidden),
        ];
        match widths.iter().find(|(_, w)| *w == 0 || *w > 8192) {
            Some((name, w)) => Err(Error::Config(format!("{name} = {w} must be in 1..=8192"))),
            None => Ok(()),
        }
    }
}

/// Diagonal Gaussian posterior parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianLatent {
    pub mean: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianLatent {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `mean + exp(log_var / 2) · ε`, ε ~ N(0, I).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        reparameterize(&self.mean, &self.log_var, rng)
    }

    /// Closed-form KL divergence to N(0, I).
    pub fn kl(&self) -> f64 {
        self.mean
            .iter()
            .zip(&self.log_var)
            .map(|(m, lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.mean.iter().chain(&self.log_var).all(|x| x.is_finite())
    }
}

pub fn reparameterize<R: Rng + ?Sized>(mean: &[f64], log_var: &[f64], rng: &mut R) -> Vec<f64> {
    mean.iter()
        .zip(log_var)
        .map(|(m, lv)| {
            let eps: f64 = rng.sample(StandardNormal);
            m + (0.5 * lv).exp() * eps
        })
        .collect()
}

/// Chord decoder output for one segment: rows are beats, columns classes.
#[derive(Clone, Debug, PartialEq)]
pub struct ChordDecoderOutput {
    pub root: Mat,
    pub bass: Mat,
    pub chroma: Mat,
}

impl ChordDecoderOutput {
    /// Argmax root/bass and thresholded chroma.
    pub fn progression(&self) -> ChordProgression {
        use crate::chord::{ChordFrame, Chroma};
        let frames = std::array::from_fn(|b| {
            let chroma = Chroma::from_pitch_classes((0..12u8).filter(|&c| self.chroma.get(b, c as usize) > 0.0));
            ChordFrame {
                root: self.root.argmax_row(b) as u8,
                bass: self.bass.argmax_row(b) as u8,
                chroma,
                is_silent: chroma.is_empty(),
            }
        });
        ChordProgression::new(frames)
    }
}

/// One training or evaluation item with its model inputs precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub segment: Segment,
    pub progression: ChordProgression,
    pub chord_rows: Vec<f64>,
    pub roll: PianoRoll,
    pub tree: PianoTree,
}

impl Example {
    /// Chords extracted from the notes in sounding mode.
    pub fn new(segment: Segment) -> Self {
        let prog = extract_progression(&segment, ExtractMode::Sounding);
        Self::with_progression(segment, prog)
    }

    /// Chords supplied externally.
    pub fn with_progression(segment: Segment, progression: ChordProgression) -> Self {
        Self {
            chord_rows: progression.encode_matrix().to_beat_rows(),
            roll: PianoRoll::from_segment(&segment),
            tree: PianoTree::from_segment(&segment),
            progression,
            segment,
        }
    }
}

/// Loss components, each averaged over the batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub chord: f64,
    pub pianotree: f64,
    pub kl_chd: f64,
    pub kl_txt: f64,
    pub total: f64,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        [self.chord, self.pianotree, self.kl_chd, self.kl_txt, self.total]
            .iter()
            .all(|x| x.is_finite())
    }
}

/// Teacher-forced reconstruction counts; add batches with `merge`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconCounts {
    /// Real-note pitch predictions.
    pub pitch_correct: u64,
    pub pitch_total: u64,
    /// Stop-token predictions (one per frame).
    pub stop_correct: u64,
    pub stop_total: u64,
    pub duration_bits_correct: u64,
    pub duration_bits_total: u64,
    pub root_correct: u64,
    pub bass_correct: u64,
    pub beats: u64,
    pub chroma_tp: u64,
    pub chroma_fp: u64,
    pub chroma_fn: u64,
}

impl ReconCounts {
    pub fn merge(&mut self, o: &Self) {
        self.pitch_correct += o.pitch_correct;
        self.pitch_total += o.pitch_total;
        self.stop_correct += o.stop_correct;
        self.stop_total += o.stop_total;
        self.duration_bits_correct += o.duration_bits_correct;
        self.duration_bits_total += o.duration_bits_total;
        self.root_correct += o.root_correct;
        self.bass_correct += o.bass_correct;
        self.beats += o.beats;
        self.chroma_tp += o.chroma_tp;
        self.chroma_fp += o.chroma_fp;
        self.chroma_fn += o.chroma_fn;
    }

    fn ratio(a: u64, b: u64) -> f64 {
        if b == 0 {
            1.0
        } else {
            a as f64 / b as f64
        }
    }

    pub fn pitch_accuracy(&self) -> f64 {
        Self::ratio(self.pitch_correct, self.pitch_total)
    }

    pub fn stop_accuracy(&self) -> f64 {
        Self::ratio(self.stop_correct, self.stop_total)
    }

    pub fn duration_bit_accuracy(&self) -> f64 {
        Self::ratio(self.duration_bits_correct, self.duration_bits_total)
    }

    pub fn root_accuracy(&self) -> f64 {
        Self::ratio(self.root_correct, self.beats)
    }

    pub fn bass_accuracy(&self) -> f64 {
        Self::ratio(self.bass_correct, self.beats)
    }

    pub fn chroma_f1(&self) -> f64 {
        Self::ratio(2 * self.chroma_tp, 2 * self.chroma_tp + self.chroma_fp + self.chroma_fn)
    }
}

/// How latents are drawn in the forward pass.
pub enum Sampling<'a> {
    /// Posterior means.
    Mean,
    /// Reparameterized samples.
    Noise(&'a mut dyn RngCore),
}

pub struct Forward {
    pub loss: Var,
    pub parts: LossParts,
    pub counts: ReconCounts,
}

/// Sum over batch and dimensions of the closed-form KL to N(0, I).
fn kl_sum(g: &mut Graph<'_>, mean: Var, log_var: Var) -> Var {
    let (r, c) = g.shape(mean);
    let m2 = g.mul(mean, mean);
    let e = g.exp(log_var);
    let s = g.add(m2, e);
    let s = g.sub(s, log_var);
    let total = g.sum(s);
    let shifted = g.add_scalar(total, -((r * c) as f64));
    g.scale(shifted, 0.5)
}

fn rows_of(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows).map(|r| m.row(r).to_vec()).collect()
}

#[derive(Clone, Debug)]
pub struct ChordTextureVae {
    pub config: VaeConfig,
    pub store: ParamStore,
    pub chord_encoder: ChordEncoder,
    pub chord_decoder: ChordDecoder,
    pub texture_encoder: TextureEncoder,
    pub decoder: PianoTreeDecoder,
}

impl ChordTextureVae {
    pub fn new(config: VaeConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let chord_encoder = ChordEncoder::new(&mut store, &config, &mut rng);
        let chord_decoder = ChordDecoder::new(&mut store, &config, &mut rng);
        let texture_encoder = TextureEncoder::new(&mut store, &config, &mut rng);
        let decoder = PianoTreeDecoder::new(&mut store, &config, &mut rng);
        Ok(Self {
            config,
            store,
            chord_encoder,
            chord_decoder,
            texture_encoder,
            decoder,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    /// Builds the full objective for a batch on `g`.
    pub fn forward(&self, g: &mut Graph<'_>, batch: &[Example], sampling: Sampling<'_>, kl_weight: f64) -> Forward {
        assert!(!batch.is_empty(), "empty batch");
        let b = batch.len();
        let chord_rows: Vec<Vec<f64>> = batch.iter().map(|e| e.chord_rows.clone()).collect();
        let chord_x = g.input(nets::chord_input(&chord_rows));
        let chd = self.chord_encoder.forward(g, chord_x, b);
        let rolls: Vec<&PianoRoll> = batch.iter().map(|e| &e.roll).collect();
        let txt = self.texture_encoder.forward(g, &rolls);

        let (z_chd, z_txt) = match sampling {
            Sampling::Mean => (chd.mean, txt.mean),
            Sampling::Noise(rng) => {
                let d = self.latent_dim();
                let mut draw = |g: &mut Graph<'_>, mean: Var, log_var: Var| {
                    let eps = Mat::from_vec(b, d, (0..b * d).map(|_| rng.sample(StandardNormal)).collect());
                    let eps = g.input(eps);
                    let half = g.scale(log_var, 0.5);
                    let std = g.exp(half);
                    let noise = g.mul(std, eps);
                    g.add(mean, noise)
                };
                let zc = draw(g, chd.mean, chd.log_var);
                let zt = draw(g, txt.mean, txt.log_var);
                (zc, zt)
            }
        };

        let chord = self.chord_decoder.forward(g, z_chd);
        let mut counts = ReconCounts::default();
        let mut root_t = Vec::with_capacity(8 * b);
        let mut bass_t = Vec::with_capacity(8 * b);
        let mut chroma_t = Vec::with_capacity(96 * b);
        for t in 0..BEATS_PER_SEGMENT {
            for e in batch {
                let f = e.progression.frames[t];
                root_t.push(Some(usize::from(f.root)));
                bass_t.push(Some(usize::from(f.bass)));
                chroma_t.extend((0..12u8).map(|c| f64::from(u8::from(f.chroma.contains(c)))));
            }
        }
        {
            let (rm, bm, cm) = (g.value(chord.root), g.value(chord.bass), g.value(chord.chroma));
            for r in 0..8 * b {
                counts.root_correct += u64::from(Some(rm.argmax_row(r)) == root_t[r]);
                counts.bass_correct += u64::from(Some(bm.argmax_row(r)) == bass_t[r]);
            }
            counts.beats = (8 * b) as u64;
            for (x, y) in cm.data.iter().zip(&chroma_t) {
                match (*x > 0.0, *y > 0.5) {
                    (true, true) => counts.chroma_tp += 1,
                    (true, false) => counts.chroma_fp += 1,
                    (false, true) => counts.chroma_fn += 1,
                    _ => {}
                }
            }
        }
        let l_root = g.cross_entropy(chord.root, root_t);
        let l_bass = g.cross_entropy(chord.bass, bass_t);
        let l_chroma = g.bce_with_logits(chord.chroma, chroma_t, None);
        let l_chord = g.add(l_root, l_bass);
        let l_chord = g.add(l_chord, l_chroma);

        let z = g.concat_cols(&[z_chd, z_txt]);
        let trees: Vec<&PianoTree> = batch.iter().map(|e| &e.tree).collect();
        let tl = self.decoder.teacher_forced(g, z, &trees);
        {
            let pm = g.value(tl.pitch);
            for (r, t) in tl.pitch_targets.iter().enumerate() {
                let t = t.expect("every token row has a target");
                let hit = u64::from(pm.argmax_row(r) == t);
                if t == STOP_TOKEN {
                    counts.stop_correct += hit;
                    counts.stop_total += 1;
                } else {
                    counts.pitch_correct += hit;
                    counts.pitch_total += 1;
                }
            }
            if let Some(d) = tl.duration {
                let dm = g.value(d);
                for (x, y) in dm.data.iter().zip(&tl.duration_targets) {
                    counts.duration_bits_correct += u64::from((*x > 0.0) == (*y > 0.5));
                }
                counts.duration_bits_total += tl.duration_targets.len() as u64;
            }
        }
        let mut l_tree = g.cross_entropy(tl.pitch, tl.pitch_targets);
        if let Some(d) = tl.duration {
            let l_dur = g.bce_with_logits(d, tl.duration_targets, None);
            l_tree = g.add(l_tree, l_dur);
        }

        let kl_c = kl_sum(g, chd.mean, chd.log_var);
        let kl_t = kl_sum(g, txt.mean, txt.log_var);
        let recon = g.add(l_chord, l_tree);
        let kl = g.add(kl_c, kl_t);
        let kl = g.scale(kl, kl_weight);
        let total = g.add(recon, kl);
        let inv = 1.0 / b as f64;
        let loss = g.scale(total, inv);
        let parts = LossParts {
            chord: g.value(l_chord).item() * inv,
            pianotree: g.value(l_tree).item() * inv,
            kl_chd: g.value(kl_c).item() * inv,
            kl_txt: g.value(kl_t).item() * inv,
            total: g.value(loss).item(),
        };
        Forward { loss, parts, counts }
    }

    /// Loss and parameter gradients for one batch.
    pub fn loss_and_gradients(
        &self,
        batch: &[Example],
        sampling: Sampling<'_>,
        kl_weight: f64,
    ) -> (LossParts, ReconCounts, Gradients) {
        let mut g = Graph::new(&self.store);
        let f = self.forward(&mut g, batch, sampling, kl_weight);
        let grads = g.backward(f.loss);
        (f.parts, f.counts, grads)
    }

    /// Loss without gradients.
    pub fn evaluate(&self, batch: &[Example], sampling: Sampling<'_>, kl_weight: f64) -> (LossParts, ReconCounts) {
        let mut g = Graph::new(&self.store);
        let f = self.forward(&mut g, batch, sampling, kl_weight);
        (f.parts, f.counts)
    }

    pub fn encode_chords(&self, progressions: &[ChordProgression]) -> Vec<GaussianLatent> {
        let mut out = Vec::with_capacity(progressions.len());
        for chunk in progressions.chunks(INFERENCE_CHUNK) {
            let rows: Vec<Vec<f64>> = chunk.iter().map(|p| p.encode_matrix().to_beat_rows()).collect();
            out.extend(self.encode_chord_rows(&rows));
        }
        out
    }

    /// Encodes 36×8 matrices, validating their one-hot structure first.
    pub fn encode_chord_matrices(&self, matrices: &[ChordMatrix]) -> Result<Vec<GaussianLatent>> {
        let progs = matrices
            .iter()
            .map(ChordProgression::decode_matrix)
            .collect::<Result<Vec<_>>>()?;
        Ok(self.encode_chords(&progs))
    }

    fn encode_chord_rows(&self, rows: &[Vec<f64>]) -> Vec<GaussianLatent> {
        let mut g = Graph::new(&self.store);
        let x = g.input(nets::chord_input(rows));
        let out = self.chord_encoder.forward(&mut g, x, rows.len());
        to_latents(&g, out.mean, out.log_var)
    }

    pub fn encode_textures(&self, rolls: &[PianoRoll]) -> Vec<GaussianLatent> {
        let mut out = Vec::with_capacity(rolls.len());
        for chunk in rolls.chunks(INFERENCE_CHUNK) {
            let mut g = Graph::new(&self.store);
            let refs: Vec<&PianoRoll> = chunk.iter().collect();
            let lat = self.texture_encoder.forward(&mut g, &refs);
            out.extend(to_latents(&g, lat.mean, lat.log_var));
        }
        out
    }

    /// Posterior parameters `(z_chd, z_txt)` for each segment, chords
    /// extracted in sounding mode.
    pub fn encode_segments(&self, segments: &[Segment]) -> Vec<(GaussianLatent, GaussianLatent)> {
        let progs: Vec<ChordProgression> = segments
            .iter()
            .map(|s| extract_progression(s, ExtractMode::Sounding))
            .collect();
        self.encode_with_chords(segments, &progs)
    }

    pub fn encode_with_chords(
        &self,
        segments: &[Segment],
        progressions: &[ChordProgression],
    ) -> Vec<(GaussianLatent, GaussianLatent)> {
        assert_eq!(segments.len(), progressions.len(), "one progression per segment");
        let rolls: Vec<PianoRoll> = segments.iter().map(PianoRoll::from_segment).collect();
        self.encode_chords(progressions)
            .into_iter()
            .zip(self.encode_textures(&rolls))
            .collect()
    }

    pub fn decode_chords(&self, z_chd: &[Vec<f64>]) -> Vec<ChordDecoderOutput> {
        let d = self.latent_dim();
        let mut out = Vec::with_capacity(z_chd.len());
        for chunk in z_chd.chunks(INFERENCE_CHUNK) {
            let b = chunk.len();
            let mut g = Graph::new(&self.store);
            let z = g.input(Mat::from_vec(b, d, chunk.concat()));
            let logits = self.chord_decoder.forward(&mut g, z);
            let pick = |m: &Mat, i: usize| {
                let rows = (0..BEATS_PER_SEGMENT).flat_map(|t| m.row(t * b + i).to_vec()).collect();
                Mat::from_vec(BEATS_PER_SEGMENT, 12, rows)
            };
            for i in 0..b {
                out.push(ChordDecoderOutput {
                    root: pick(g.value(logits.root), i),
                    bass: pick(g.value(logits.bass), i),
                    chroma: pick(g.value(logits.chroma), i),
                });
            }
        }
        out
    }

    /// Greedy PianoTree decoding of `[z_chd, z_txt]` pairs.
    pub fn decode_trees(&self, z_chd: &[Vec<f64>], z_txt: &[Vec<f64>]) -> Vec<PianoTree> {
        assert_eq!(z_chd.len(), z_txt.len(), "latent count mismatch");
        let d = self.latent_dim();
        let mut out = Vec::with_capacity(z_chd.len());
        for start in (0..z_chd.len()).step_by(INFERENCE_CHUNK) {
            let end = (start + INFERENCE_CHUNK).min(z_chd.len());
            let mut data = Vec::with_capacity((end - start) * 2 * d);
            for i in start..end {
                assert!(z_chd[i].len() == d && z_txt[i].len() == d, "latent width");
                data.extend_from_slice(&z_chd[i]);
                data.extend_from_slice(&z_txt[i]);
            }
            let mut g = Graph::new(&self.store);
            let z = g.input(Mat::from_vec(end - start, 2 * d, data));
            out.extend(self.decoder.greedy(&mut g, z));
        }
        out
    }

    pub fn decode_segments(&self, z_chd: &[Vec<f64>], z_txt: &[Vec<f64>], source: SegmentSource) -> Vec<Segment> {
        self.decode_trees(z_chd, z_txt)
            .iter()
            .map(|t| t.to_segment(source.clone()))
            .collect()
    }

    /// Encode with posterior means and decode greedily.
    pub fn reconstruct(&self, segments: &[Segment]) -> Vec<Segment> {
        let lat = self.encode_segments(segments);
        let zc: Vec<Vec<f64>> = lat.iter().map(|(c, _)| c.mean.clone()).collect();
        let zt: Vec<Vec<f64>> = lat.iter().map(|(_, t)| t.mean.clone()).collect();
        self.decode_trees(&zc, &zt)
            .iter()
            .zip(segments)
            .map(|(t, s)| t.to_segment(s.source.clone()))
            .collect()
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let config = serde_json::json!({ "model": self.config, "training": extra });
        Checkpoint::from_store(CheckpointKind::Vae, VAE_CHECKPOINT_VERSION, config.to_string(), &self.store)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CheckpointKind::Vae {
            return Err(Error::Checkpoint("not a VAE checkpoint".into()));
        }
        if ck.version != VAE_CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported VAE checkpoint version {}", ck.version)));
        }
        let meta: serde_json::Value =
            serde_json::from_str(&ck.config_json).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let config: VaeConfig = serde_json::from_value(meta.get("model").cloned().unwrap_or_default())
            .map_err(|e| Error::Checkpoint(format!("model config: {e}")))?;
        let mut model = Self::new(config, 0)?;
        model
            .store
            .load_from(&ck.to_store())
            .map_err(Error::Checkpoint)?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

fn to_latents(g: &Graph<'_>, mean: Var, log_var: Var) -> Vec<GaussianLatent> {
    rows_of(g.value(mean))
        .into_iter()
        .zip(rows_of(g.value(log_var)))
        .map(|(mean, log_var)| GaussianLatent { mean, log_var })
        .collect()
}

#[cfg(test)]
mod tests;
