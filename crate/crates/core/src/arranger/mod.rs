//! Melody-conditioned accompaniment arrangement in latent space.
//!
//! A 16-bar sample is four 2-bar units. The encoder reads the melody as
//! `[z_p(1..4), z_r(1..4)]`; the decoder predicts `[z_chd(1..4),
//! z_txt(1..4)]` autoregressively from a shifted-right copy of that
//! sequence. Every token is a linear projection of its vector plus a
//! sinusoidal code for its unit index and a learned embedding for its
//! factor. Decoder slot `j` carries the tags of the vector it predicts.
//! The frozen VAE turns the predicted latents back into notes.

mod melody;
mod paired;
mod transformer;

pub use melody::{
    is_polyphonic, melody_tokens, BaselineMelodyEmbedder, MelodyEncoder, MelodyTokens, MelodyUnitEmbedding,
    HOLD_TOKEN, MELODY_PITCH_TOKENS, REST_TOKEN, RHYTHM_TOKENS,
};
pub use paired::{paired_samples, paired_samples_from_record, PairedManifest, PairedSample, PairedSong};
pub use transformer::{sinusoidal, DecoderLayer, EncoderLayer, FeedForward, MultiHeadAttention};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chord::ChordProgression;
use crate::nn::{Adam, Checkpoint, CheckpointKind, Graph, Linear, Mat, ParamId, ParamStore, Var};
use crate::score::{Segment, SegmentSource};
use crate::trainer::mix;
use crate::vae::ChordTextureVae;
use crate::{Error, Result};

/// 2-bar units per 16-bar sample.
pub const UNITS_PER_SAMPLE: usize = 4;
pub const ARRANGER_CHECKPOINT_VERSION: u16 = 1;

/// Rows of the factor-embedding table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    Pitch = 0,
    Rhythm = 1,
    Chord = 2,
    Texture = 3,
}

pub const FACTOR_COUNT: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrangerLoss {
    /// Mean squared error to the VAE posterior means.
    #[default]
    Mse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArrangerConfig {
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub feed_forward: usize,
    /// Width of each melody vector.
    pub melody_dim: usize,
    /// Hidden size of the baseline melody GRUs.
    pub melody_hidden: usize,
    /// Must match the VAE latent width.
    pub latent_dim: usize,
    /// Length of the positional-code table.
    pub max_positions: usize,
    pub warmup_steps: usize,
    pub peak_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub clip_norm: f64,
    pub seed: u64,
    pub loss: ArrangerLoss,
}

impl Default for ArrangerConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            layers: 4,
            heads: 8,
            feed_forward: 1024,
            melody_dim: 256,
            melody_hidden: 256,
            latent_dim: 256,
            max_positions: 16,
            warmup_steps: 12_000,
            peak_lr: 1e-3,
            batch_size: 32,
            epochs: 40,
            clip_norm: 1.0,
            seed: 0,
            loss: ArrangerLoss::Mse,
        }
    }
}

impl ArrangerConfig {
    /// A narrow model for smoke runs over a VAE of width `latent_dim`.
    pub fn toy(latent_dim: usize) -> Self {
        Self {
            hidden: 32,
            layers: 2,
            heads: 4,
            feed_forward: 64,
            melody_dim: 16,
            melody_hidden: 32,
            latent_dim,
            warmup_steps: 100,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if [self.hidden, self.layers, self.heads, self.feed_forward, self.melody_dim, self.melody_hidden]
            .contains(&0)
            || self.latent_dim == 0
        {
            return bad("arranger widths and depth must be positive".into());
        }
        if self.hidden % self.heads != 0 {
            return bad(format!("hidden {} not divisible by heads {}", self.hidden, self.heads));
        }
        if self.max_positions < 2 * UNITS_PER_SAMPLE {
            return bad(format!("max_positions must be at least {}", 2 * UNITS_PER_SAMPLE));
        }
        if self.warmup_steps == 0 || self.batch_size == 0 {
            return bad("warmup_steps and batch_size must be positive".into());
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) || self.clip_norm < 0.0 {
            return bad("peak_lr must be positive and clip_norm non-negative".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(format!("arranger config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    /// Linear warm-up to `peak_lr`, then inverse-square-root decay.
    /// `step` counts from 0.
    pub fn learning_rate(&self, step: usize) -> f64 {
        let s = (step + 1) as f64;
        let w = self.warmup_steps as f64;
        self.peak_lr * (s / w).min((w / s).sqrt())
    }
}

/// Where the value of a decoder slot comes from during arrangement.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotSource {
    Predicted,
    GivenChord,
    Prefix,
}

/// Slot sources for `units` units with optional chords and a prefix of
/// `prefix_units`. Slots `0..units` are chord latents, `units..2·units`
/// texture latents.
pub fn slot_plan(units: usize, chords_given: bool, prefix_units: usize) -> Vec<SlotSource> {
    let chord = (0..units).map(|k| {
        if chords_given {
            SlotSource::GivenChord
        } else if k < prefix_units {
            SlotSource::Prefix
        } else {
            SlotSource::Predicted
        }
    });
    let texture = (0..units).map(|k| if k < prefix_units { SlotSource::Prefix } else { SlotSource::Predicted });
    chord.chain(texture).collect()
}

/// Teacher input for decoder slot `j`: `Some(j - 1)`, or `None` for the
/// start vector.
pub fn shift_right(len: usize) -> Vec<Option<usize>> {
    (0..len).map(|j| j.checked_sub(1)).collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArrangeOptions {
    /// One progression per unit; overrides every chord latent.
    pub given_chords: Option<Vec<ChordProgression>>,
    /// Accompaniment for the first units; its posterior latents are kept.
    pub given_prefix: Option<Vec<Segment>>,
}

#[derive(Clone, Debug)]
pub struct Arranger {
    pub config: ArrangerConfig,
    pub store: ParamStore,
    pub embedder: BaselineMelodyEmbedder,
    pub encoder_in: Linear,
    pub decoder_in: Linear,
    pub factor_embedding: ParamId,
    pub start: ParamId,
    pub encoder: Vec<EncoderLayer>,
    pub decoder: Vec<DecoderLayer>,
    pub head: Linear,
}

impl MelodyEncoder for Arranger {
    fn embed(&self, units: &[Segment]) -> Vec<MelodyUnitEmbedding> {
        self.embedder.embed_with(&self.store, units)
    }
}

fn factor_of_target(j: usize, units: usize) -> Factor {
    if j < units {
        Factor::Chord
    } else {
        Factor::Texture
    }
}

impl Arranger {
    pub fn new(config: ArrangerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = config.hidden;
        let embedder = BaselineMelodyEmbedder::new(&mut store, config.melody_hidden, config.melody_dim, &mut rng);
        let encoder_in = Linear::new(&mut store, "encoder_in", config.melody_dim, d, &mut rng);
        let decoder_in = Linear::new(&mut store, "decoder_in", config.latent_dim, d, &mut rng);
        let factor_embedding = store.uniform("factor_embedding", FACTOR_COUNT, d, 0.1, &mut rng);
        let start = store.uniform("start", 1, d, 0.1, &mut rng);
        let encoder = (0..config.layers)
            .map(|l| EncoderLayer::new(&mut store, &format!("encoder.{l}"), d, config.heads, config.feed_forward, &mut rng))
            .collect();
        let decoder = (0..config.layers)
            .map(|l| DecoderLayer::new(&mut store, &format!("decoder.{l}"), d, config.heads, config.feed_forward, &mut rng))
            .collect();
        let head = Linear::new(&mut store, "head", d, config.latent_dim, &mut rng);
        Ok(Self {
            config,
            store,
            embedder,
            encoder_in,
            decoder_in,
            factor_embedding,
            start,
            encoder,
            decoder,
            head,
        })
    }

    pub fn factor_rows(&self) -> usize {
        self.store.value(self.factor_embedding).rows
    }

    /// Positional plus factor codes for `batch` copies of a tag list.
    fn tags(&self, g: &mut Graph<'_>, batch: usize, tags: &[(usize, Factor)]) -> Var {
        let d = self.config.hidden;
        let table = sinusoidal(self.config.max_positions, d);
        let mut pos = Mat::zeros(batch * tags.len(), d);
        let mut idx = Vec::with_capacity(batch * tags.len());
        for b in 0..batch {
            for (j, &(p, f)) in tags.iter().enumerate() {
                pos.row_mut(b * tags.len() + j).copy_from_slice(table.row(p));
                idx.push(f as usize);
            }
        }
        let pos = g.input(pos);
        let table = g.param(self.factor_embedding);
        let fac = g.gather_rows(table, idx);
        g.add(pos, fac)
    }

    /// Encoder memory `[batch·2n, d]` from melody vectors `[batch·n, m]`
    /// whose row `b·n + k` is unit `k` of sample `b`.
    fn encode(&self, g: &mut Graph<'_>, zp: Var, zr: Var, batch: usize, n: usize) -> Var {
        let both = g.concat_rows(&[zp, zr]);
        let idx = (0..batch)
            .flat_map(|b| (0..2 * n).map(move |j| if j < n { b * n + j } else { batch * n + b * n + j - n }))
            .collect();
        let seq = g.gather_rows(both, idx);
        let x = self.encoder_in.forward(g, seq);
        let tags: Vec<(usize, Factor)> = (0..2 * n)
            .map(|j| if j < n { (j, Factor::Pitch) } else { (j - n, Factor::Rhythm) })
            .collect();
        let t = self.tags(g, batch, &tags);
        let mut x = g.add(x, t);
        for layer in &self.encoder {
            x = layer.forward(g, x, batch, 2 * n);
        }
        x
    }

    /// Predictions `[batch·len, latent]` for decoder slots `0..len` given
    /// teacher values `prev` (`[batch·(len-1), latent]`, row `b·(len-1) +
    /// i` holding slot `i` of sample `b`).
    fn decode(&self, g: &mut Graph<'_>, memory: Var, batch: usize, n: usize, prev: &Mat, len: usize) -> Var {
        let start = g.param(self.start);
        let x = if len > 1 {
            let p = g.input(prev.clone());
            let proj = self.decoder_in.forward(g, p);
            let both = g.concat_rows(&[start, proj]);
            let idx = (0..batch)
                .flat_map(|b| shift_right(len).into_iter().map(move |s| s.map_or(0, |i| 1 + b * (len - 1) + i)))
                .collect();
            g.gather_rows(both, idx)
        } else {
            g.gather_rows(start, vec![0; batch])
        };
        let tags: Vec<(usize, Factor)> = (0..len).map(|j| (j % n, factor_of_target(j, n))).collect();
        let t = self.tags(g, batch, &tags);
        let mut x = g.add(x, t);
        for layer in &self.decoder {
            x = layer.forward(g, x, memory, batch, len, 2 * n);
        }
        self.head.forward(g, x)
    }

    /// Teacher-forced MSE over whole samples. `melody` holds 4 units per
    /// sample; `prev` and `target` follow the decoder slot layout.
    pub(crate) fn batch_loss(&self, g: &mut Graph<'_>, melody: &[Segment], prev: &Mat, target: Mat) -> Var {
        let n = UNITS_PER_SAMPLE;
        let b = melody.len() / n;
        let (zp, zr) = self.embedder.forward(g, melody);
        let memory = self.encode(g, zp, zr, b, n);
        let pred = self.decode(g, memory, b, n, prev, 2 * n);
        let count = target.len();
        let t = g.input(target);
        let diff = g.sub(pred, t);
        let sq = g.mul(diff, diff);
        let total = g.sum(sq);
        g.scale(total, 1.0 / count as f64)
    }

    fn melody_vars(&self, g: &mut Graph<'_>, melody: &[MelodyUnitEmbedding]) -> (Var, Var) {
        let m = self.config.melody_dim;
        let mut zp = Mat::zeros(melody.len(), m);
        let mut zr = Mat::zeros(melody.len(), m);
        for (i, e) in melody.iter().enumerate() {
            zp.row_mut(i).copy_from_slice(&e.z_p);
            zr.row_mut(i).copy_from_slice(&e.z_r);
        }
        (g.input(zp), g.input(zr))
    }

    /// Teacher-forced predictions for one sample: `targets` holds the
    /// `2n` slot values `[z_chd(1..n), z_txt(1..n)]`.
    pub fn teacher_forced_outputs(&self, melody: &[Segment], targets: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = melody.len();
        if targets.len() != 2 * n || n == 0 || n > UNITS_PER_SAMPLE {
            return Err(Error::LengthMismatch(format!(
                "{n} melody units need {} target vectors (at most {UNITS_PER_SAMPLE} units)",
                2 * n
            )));
        }
        self.check_widths(targets)?;
        let mut g = Graph::new(&self.store);
        let (zp, zr) = self.embedder.forward(&mut g, melody);
        let memory = self.encode(&mut g, zp, zr, 1, n);
        let prev = Mat::from_vec(2 * n - 1, self.config.latent_dim, targets[..2 * n - 1].concat());
        let out = self.decode(&mut g, memory, 1, n, &prev, 2 * n);
        let out = g.value(out);
        Ok((0..2 * n).map(|j| out.row(j).to_vec()).collect())
    }

    fn check_widths(&self, v: &[Vec<f64>]) -> Result<()> {
        match v.iter().find(|x| x.len() != self.config.latent_dim) {
            Some(x) => Err(Error::Shape {
                expected: format!("latent width {}", self.config.latent_dim),
                got: format!("{}", x.len()),
            }),
            None => Ok(()),
        }
    }

    /// Decodes an accompaniment for every melody unit, 4 units at a time.
    /// Chords and prefix latents are written into their slots before they
    /// are fed back to the decoder.
    pub fn arrange(
        &self,
        vae: &ChordTextureVae,
        melody: &[MelodyUnitEmbedding],
        opts: &ArrangeOptions,
    ) -> Result<Vec<Segment>> {
        let total = melody.len();
        if vae.latent_dim() != self.config.latent_dim {
            return Err(Error::Config(format!(
                "VAE latent width {} differs from arranger latent width {}",
                vae.latent_dim(),
                self.config.latent_dim
            )));
        }
        if let Some(e) = melody.iter().find(|e| e.z_p.len() != self.config.melody_dim || e.z_r.len() != self.config.melody_dim) {
            return Err(Error::Shape {
                expected: format!("melody width {}", self.config.melody_dim),
                got: format!("{}/{}", e.z_p.len(), e.z_r.len()),
            });
        }
        let prefix = opts.given_prefix.as_deref().unwrap_or(&[]);
        if prefix.len() > total {
            return Err(Error::LengthMismatch(format!(
                "prefix of {} units is longer than the {total}-unit melody",
                prefix.len()
            )));
        }
        let chords = match &opts.given_chords {
            Some(c) if c.len() != total => {
                return Err(Error::LengthMismatch(format!(
                    "{} chord progressions for {total} melody units",
                    c.len()
                )))
            }
            Some(c) => Some(vae.encode_chords(c)),
            None => None,
        };
        let prefix_latents = vae.encode_segments(prefix);

        let mut z_chd = Vec::with_capacity(total);
        let mut z_txt = Vec::with_capacity(total);
        for w0 in (0..total).step_by(UNITS_PER_SAMPLE) {
            let n = (total - w0).min(UNITS_PER_SAMPLE);
            let prefix_here = prefix.len().saturating_sub(w0).min(n);
            let plan = slot_plan(n, chords.is_some(), prefix_here);
            let mut slots: Vec<Option<Vec<f64>>> = plan
                .iter()
                .enumerate()
                .map(|(j, src)| {
                    let k = w0 + j % n;
                    match src {
                        SlotSource::Predicted => None,
                        SlotSource::GivenChord => chords.as_ref().map(|c| c[k].mean.clone()),
                        SlotSource::Prefix if j < n => Some(prefix_latents[k].0.mean.clone()),
                        SlotSource::Prefix => Some(prefix_latents[k].1.mean.clone()),
                    }
                })
                .collect();
            if plan.contains(&SlotSource::Predicted) {
                let window = &melody[w0..w0 + n];
                for j in 0..2 * n {
                    if slots[j].is_some() {
                        continue;
                    }
                    let mut g = Graph::new(&self.store);
                    let (zp, zr) = self.melody_vars(&mut g, window);
                    let memory = self.encode(&mut g, zp, zr, 1, n);
                    let known: Vec<f64> = slots[..j].iter().flat_map(|s| s.clone().expect("filled in order")).collect();
                    let prev = Mat::from_vec(j, self.config.latent_dim, known);
                    let out = self.decode(&mut g, memory, 1, n, &prev, j + 1);
                    slots[j] = Some(g.value(out).row(j).to_vec());
                }
            }
            let mut slots = slots.into_iter().map(|s| s.expect("all slots filled"));
            z_chd.extend(slots.by_ref().take(n));
            z_txt.extend(slots);
        }
        let trees = vae.decode_trees(&z_chd, &z_txt);
        Ok(trees
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let source = prefix
                    .get(k)
                    .map_or_else(|| SegmentSource::new("arrangement", (k * crate::BEATS_PER_SEGMENT) as u32), |p| p.source.clone());
                t.to_segment(source)
            })
            .collect())
    }

    /// [`Arranger::arrange`] with the baseline melody embedder.
    pub fn arrange_melody(&self, vae: &ChordTextureVae, melody: &[Segment], opts: &ArrangeOptions) -> Result<Vec<Segment>> {
        self.arrange(vae, &self.embed(melody), opts)
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        let config = serde_json::json!({ "model": self.config, "training": extra });
        Checkpoint::from_store(CheckpointKind::Arranger, ARRANGER_CHECKPOINT_VERSION, config.to_string(), &self.store)
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CheckpointKind::Arranger {
            return Err(Error::Checkpoint("not an arranger checkpoint".into()));
        }
        if ck.version != ARRANGER_CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported arranger checkpoint version {}", ck.version)));
        }
        let meta: serde_json::Value =
            serde_json::from_str(&ck.config_json).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
        let config: ArrangerConfig = serde_json::from_value(meta.get("model").cloned().unwrap_or_default())
            .map_err(|e| Error::Checkpoint(format!("arranger config: {e}")))?;
        let mut model = Self::new(config, 0).map_err(|e| Error::Checkpoint(e.to_string()))?;
        model.store.load_from(&ck.to_store()).map_err(Error::Checkpoint)?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Result of [`train_arranger`].
#[derive(Debug)]
pub struct ArrangerOutcome {
    pub model: Arranger,
    /// Mean training MSE per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    /// Samples dropped for lacking a melody or having the wrong length.
    pub skipped: usize,
}

/// Trains the arranger on `samples` against the frozen `vae`.
pub fn train_arranger(samples: &[PairedSample], vae: &ChordTextureVae, config: &ArrangerConfig) -> Result<ArrangerOutcome> {
    config.validate()?;
    if vae.latent_dim() != config.latent_dim {
        return Err(Error::Config(format!(
            "VAE latent width {} differs from arranger latent_dim {}",
            vae.latent_dim(),
            config.latent_dim
        )));
    }
    let usable: Vec<(&[Segment], &[Segment])> = samples
        .iter()
        .filter_map(|s| {
            let m = s.melody.as_deref()?;
            (m.len() == UNITS_PER_SAMPLE && s.accompaniment.len() == UNITS_PER_SAMPLE)
                .then_some((m, s.accompaniment.as_slice()))
        })
        .collect();
    let skipped = samples.len() - usable.len();
    if skipped > 0 {
        log::warn!("skipped {skipped} samples without a melody pairing");
    }
    if usable.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    // target slot vectors per sample, [z_chd(1..4), z_txt(1..4)]
    let acc: Vec<Segment> = usable.iter().flat_map(|(_, a)| a.iter().cloned()).collect();
    let lat = vae.encode_segments(&acc);
    let targets: Vec<Vec<Vec<f64>>> = lat
        .chunks(UNITS_PER_SAMPLE)
        .map(|c| {
            c.iter()
                .map(|(zc, _)| zc.mean.clone())
                .chain(c.iter().map(|(_, zt)| zt.mean.clone()))
                .collect()
        })
        .collect();

    let mut model = Arranger::new(config.clone(), config.seed)?;
    let mut adam = Adam::new(&model.store);
    let n = UNITS_PER_SAMPLE;
    let len = 2 * n;
    let dz = config.latent_dim;
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0;
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..usable.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(config.seed, 1 + epoch as u64)));
        let mut sum = 0.0;
        let mut batches = 0;
        for batch in order.chunks(config.batch_size) {
            let b = batch.len();
            let melody: Vec<Segment> = batch.iter().flat_map(|&i| usable[i].0.iter().cloned()).collect();
            let mut target = Mat::zeros(b * len, dz);
            let mut prev = Mat::zeros(b * (len - 1), dz);
            for (r, &i) in batch.iter().enumerate() {
                for (j, src) in shift_right(len).into_iter().enumerate() {
                    target.row_mut(r * len + j).copy_from_slice(&targets[i][j]);
                    if let Some(s) = src {
                        prev.row_mut(r * (len - 1) + s).copy_from_slice(&targets[i][s]);
                    }
                }
            }
            let (loss, mut grads) = {
                let mut g = Graph::new(&model.store);
                let loss = model.batch_loss(&mut g, &melody, &prev, target);
                (g.value(loss).item(), g.backward(loss))
            };
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Divergence { step, batch: batches });
            }
            if config.clip_norm > 0.0 {
                grads.clip(config.clip_norm);
            }
            adam.update(&mut model.store, &grads, config.learning_rate(step));
            step += 1;
            sum += loss;
            batches += 1;
        }
        let mean = sum / batches as f64;
        log::info!("arranger epoch {epoch}: mse {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(ArrangerOutcome {
        model,
        epoch_losses,
        steps: step,
        skipped,
    })
}

#[cfg(test)]
mod tests;
