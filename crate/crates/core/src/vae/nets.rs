//! The four networks of the model, each writing its ops onto a [`Graph`].

use rand::Rng;

use super::tree::{
    duration_bits, duration_from_bits, PianoTree, TreeNote, DURATION_BITS, MAX_NOTES_PER_FRAME, PITCH_TOKENS,
    START_TOKEN, STOP_TOKEN,
};
use super::VaeConfig;
use crate::chord::CHORD_DIM;
use crate::nn::{BiGru, Graph, Gru, Linear, Mat, ParamId, ParamStore, Var};
use crate::score::PianoRoll;
use crate::{BEATS_PER_SEGMENT, NUM_PITCHES, SEGMENT_STEPS};

pub const CONV_CHANNELS: usize = 10;
pub const CONV_KERNEL_PITCH: usize = 12;
pub const CONV_KERNEL_TIME: usize = 4;
pub const POOL_KERNEL: usize = 4;
/// Pitch extent of the valid convolution: 128 − 12 + 1.
pub const CONV_HEIGHT: usize = NUM_PITCHES - CONV_KERNEL_PITCH + 1;
/// Time extent of the convolution: 32 / 4.
pub const CONV_WIDTH: usize = SEGMENT_STEPS / CONV_KERNEL_TIME;
/// Pitch extent after pooling: (117 − 4) / 4 + 1.
pub const POOLED_HEIGHT: usize = (CONV_HEIGHT - POOL_KERNEL) / POOL_KERNEL + 1;
const PATCH: usize = CONV_KERNEL_PITCH * CONV_KERNEL_TIME;
const TEXTURE_FEATURES: usize = CONV_CHANNELS * POOLED_HEIGHT;
/// Note token width: pitch one-hot plus the five duration bits.
const TOKEN_WIDTH: usize = PITCH_TOKENS + DURATION_BITS;

pub(crate) struct Gaussian {
    pub mean: Var,
    pub log_var: Var,
}

/// Bidirectional GRU over the eight chord columns.
#[derive(Clone, Debug)]
pub struct ChordEncoder {
    gru: BiGru,
    mean: Linear,
    log_var: Linear,
}

impl ChordEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &VaeConfig, rng: &mut R) -> Self {
        let h = cfg.chord_enc_hidden;
        Self {
            gru: BiGru::new(store, "chord_enc.gru", CHORD_DIM, h, rng),
            mean: Linear::new(store, "chord_enc.mean", 2 * h, cfg.latent_dim, rng),
            log_var: Linear::new(store, "chord_enc.log_var", 2 * h, cfg.latent_dim, rng),
        }
    }

    /// `x` is `[8·B, 36]`, beat-major (row `t·B + b`).
    pub(crate) fn forward(&self, g: &mut Graph<'_>, x: Var, batch: usize) -> Gaussian {
        let out = self.gru.run(g, x, BEATS_PER_SEGMENT, batch, None);
        Gaussian {
            mean: self.mean.forward(g, out.last),
            log_var: self.log_var.forward(g, out.last),
        }
    }
}

/// Time-major chord-encoder input for a batch of 36×8 matrices given as
/// beat-major rows (see [`crate::chord::ChordMatrix::to_beat_rows`]).
pub(crate) fn chord_input(beat_rows: &[Vec<f64>]) -> Mat {
    let b = beat_rows.len();
    let mut m = Mat::zeros(BEATS_PER_SEGMENT * b, CHORD_DIM);
    for (i, rows) in beat_rows.iter().enumerate() {
        for t in 0..BEATS_PER_SEGMENT {
            m.row_mut(t * b + i)
                .copy_from_slice(&rows[t * CHORD_DIM..(t + 1) * CHORD_DIM]);
        }
    }
    m
}

/// Per-beat logits, time-major rows `t·B + b`.
pub(crate) struct ChordLogits {
    pub root: Var,
    pub bass: Var,
    pub chroma: Var,
}

/// Non-autoregressive bidirectional decoder; `z_chd` is the input at every beat.
#[derive(Clone, Debug)]
pub struct ChordDecoder {
    gru: BiGru,
    root: Linear,
    bass: Linear,
    chroma: Linear,
}

impl ChordDecoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &VaeConfig, rng: &mut R) -> Self {
        let h = cfg.chord_dec_hidden;
        Self {
            gru: BiGru::new(store, "chord_dec.gru", cfg.latent_dim, h, rng),
            root: Linear::new(store, "chord_dec.root", 2 * h, 12, rng),
            bass: Linear::new(store, "chord_dec.bass", 2 * h, 12, rng),
            chroma: Linear::new(store, "chord_dec.chroma", 2 * h, 12, rng),
        }
    }

    /// Output-head parameters, in (root, bass, chroma) order.
    pub fn heads(&self) -> [&Linear; 3] {
        [&self.root, &self.bass, &self.chroma]
    }

    pub(crate) fn forward(&self, g: &mut Graph<'_>, z_chd: Var) -> ChordLogits {
        let batch = g.shape(z_chd).0;
        let idx = (0..BEATS_PER_SEGMENT).flat_map(|_| 0..batch).collect();
        let x = g.gather_rows(z_chd, idx);
        let out = self.gru.run(g, x, BEATS_PER_SEGMENT, batch, None);
        let states = g.concat_rows(&out.states);
        ChordLogits {
            root: self.root.forward(g, states),
            bass: self.bass.forward(g, states),
            chroma: self.chroma.forward(g, states),
        }
    }
}

/// A `channels × height × width` activation map.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn get(&self, c: usize, h: usize, w: usize) -> f64 {
        self.data[(c * self.height + h) * self.width + w]
    }
}

/// Convolution over the duration-valued piano-roll followed by a
/// bidirectional GRU across the eight beat columns.
#[derive(Clone, Debug)]
pub struct TextureEncoder {
    conv_w: ParamId,
    conv_b: ParamId,
    gru: BiGru,
    mean: Linear,
    log_var: Linear,
}

pub(crate) struct TextureActivations {
    pub conv: Var,
    pub pooled: Var,
}

impl TextureEncoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &VaeConfig, rng: &mut R) -> Self {
        let bound = 1.0 / (PATCH as f64).sqrt();
        let h = cfg.texture_enc_hidden;
        Self {
            conv_w: store.uniform("texture_enc.conv.weight", PATCH, CONV_CHANNELS, bound, rng),
            conv_b: store.uniform("texture_enc.conv.bias", 1, CONV_CHANNELS, bound, rng),
            gru: BiGru::new(store, "texture_enc.gru", TEXTURE_FEATURES, h, rng),
            mean: Linear::new(store, "texture_enc.mean", 2 * h, cfg.latent_dim, rng),
            log_var: Linear::new(store, "texture_enc.log_var", 2 * h, cfg.latent_dim, rng),
        }
    }

    /// Patch matrix `[8·B·117, 48]`, rows ordered (beat, sample, pitch offset).
    fn im2col(rolls: &[&PianoRoll]) -> Mat {
        let b = rolls.len();
        let mut m = Mat::zeros(CONV_WIDTH * b * CONV_HEIGHT, PATCH);
        for t in 0..CONV_WIDTH {
            for (i, roll) in rolls.iter().enumerate() {
                let cells = roll.cells();
                for h in 0..CONV_HEIGHT {
                    let row = m.row_mut((t * b + i) * CONV_HEIGHT + h);
                    for dp in 0..CONV_KERNEL_PITCH {
                        let base = (h + dp) * SEGMENT_STEPS + t * CONV_KERNEL_TIME;
                        for dt in 0..CONV_KERNEL_TIME {
                            row[dp * CONV_KERNEL_TIME + dt] = f64::from(cells[base + dt]);
                        }
                    }
                }
            }
        }
        m
    }

    pub(crate) fn activations(&self, g: &mut Graph<'_>, rolls: &[&PianoRoll]) -> TextureActivations {
        let patches = g.input(Self::im2col(rolls));
        let w = g.param(self.conv_w);
        let bias = g.param(self.conv_b);
        let xw = g.matmul(patches, w);
        let conv = g.add_row(xw, bias);
        let act = g.relu(conv);
        let pooled = g.max_pool_rows(act, CONV_HEIGHT, POOL_KERNEL, POOL_KERNEL);
        TextureActivations { conv, pooled }
    }

    pub(crate) fn forward(&self, g: &mut Graph<'_>, rolls: &[&PianoRoll]) -> Gaussian {
        let b = rolls.len();
        let pooled = self.activations(g, rolls).pooled;
        // [(t·B + b)·29 + h', c] -> [t·B + b, c·29 + h']
        let rows = CONV_WIDTH * b;
        let mut idx = Vec::with_capacity(rows * TEXTURE_FEATURES);
        for r in 0..rows {
            for c in 0..CONV_CHANNELS {
                for h in 0..POOLED_HEIGHT {
                    idx.push((r * POOLED_HEIGHT + h) * CONV_CHANNELS + c);
                }
            }
        }
        let features = g.gather(pooled, idx, rows, TEXTURE_FEATURES);
        let out = self.gru.run(g, features, CONV_WIDTH, b, None);
        Gaussian {
            mean: self.mean.forward(g, out.last),
            log_var: self.log_var.forward(g, out.last),
        }
    }

    /// Pre-activation convolution output and pooled features for one roll.
    pub fn feature_maps(&self, store: &ParamStore, roll: &PianoRoll) -> (FeatureMap, FeatureMap) {
        let mut g = Graph::new(store);
        let acts = self.activations(&mut g, &[roll]);
        let to_map = |m: &Mat, height: usize| {
            let mut data = vec![0.0; CONV_CHANNELS * height * CONV_WIDTH];
            for t in 0..CONV_WIDTH {
                for h in 0..height {
                    for c in 0..CONV_CHANNELS {
                        data[(c * height + h) * CONV_WIDTH + t] = m.get(t * height + h, c);
                    }
                }
            }
            FeatureMap {
                channels: CONV_CHANNELS,
                height,
                width: CONV_WIDTH,
                data,
            }
        };
        (
            to_map(g.value(acts.conv), CONV_HEIGHT),
            to_map(g.value(acts.pooled), POOLED_HEIGHT),
        )
    }
}

/// Hierarchical frame → note → duration decoder.
#[derive(Clone, Debug)]
pub struct PianoTreeDecoder {
    z_in: Linear,
    frame_init: Linear,
    frame_summary: Linear,
    frame_gru: Gru,
    note_init: Linear,
    note_embed: Linear,
    note_gru: Gru,
    pitch_head: Linear,
    dur_init: Linear,
    dur_gru: Gru,
    dur_head: Linear,
}

/// Teacher-forced decoder outputs.
pub(crate) struct TreeLogits {
    /// `[Σ tokens, 130]` pitch logits.
    pub pitch: Var,
    pub pitch_targets: Vec<Option<usize>>,
    /// `[5·N, 1]` duration-bit logits, step-major, `None` without notes.
    pub duration: Option<Var>,
    pub duration_targets: Vec<f64>,
}

fn token_row(row: &mut [f64], pitch: usize, duration: Option<u8>) {
    row[pitch] = 1.0;
    if let Some(d) = duration {
        for (slot, bit) in row[PITCH_TOKENS..].iter_mut().zip(duration_bits(d)) {
            *slot = f64::from(bit);
        }
    }
}

/// Duration-GRU inputs `[5·N, 3]`: start marker, then the previous bit.
fn duration_inputs(codes: &[[u8; DURATION_BITS]]) -> Mat {
    let n = codes.len();
    let mut m = Mat::zeros(DURATION_BITS * n, 3);
    for j in 0..DURATION_BITS {
        for (i, code) in codes.iter().enumerate() {
            let col = if j == 0 { 0 } else { 1 + usize::from(code[j - 1]) };
            m.set(j * n + i, col, 1.0);
        }
    }
    m
}

impl PianoTreeDecoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: &VaeConfig, rng: &mut R) -> Self {
        let z = 2 * cfg.latent_dim;
        let (hf, hn, hd, e) = (cfg.frame_hidden, cfg.note_hidden, cfg.duration_hidden, cfg.note_embedding);
        Self {
            z_in: Linear::new(store, "tree_dec.z_in", z, cfg.frame_input, rng),
            frame_init: Linear::new(store, "tree_dec.frame_init", z, hf, rng),
            frame_summary: Linear::new(store, "tree_dec.frame_summary", NUM_PITCHES, e, rng),
            frame_gru: Gru::new(store, "tree_dec.frame_gru", cfg.frame_input + e, hf, rng),
            note_init: Linear::new(store, "tree_dec.note_init", hf, hn, rng),
            note_embed: Linear::new(store, "tree_dec.note_embed", TOKEN_WIDTH, e, rng),
            note_gru: Gru::new(store, "tree_dec.note_gru", e, hn, rng),
            pitch_head: Linear::new(store, "tree_dec.pitch", hn, PITCH_TOKENS, rng),
            dur_init: Linear::new(store, "tree_dec.dur_init", hn + e, hd, rng),
            dur_gru: Gru::new(store, "tree_dec.dur_gru", 3, hd, rng),
            dur_head: Linear::new(store, "tree_dec.dur", hd, 1, rng),
        }
    }

    /// Frame-level pass shared by both modes: returns `(z_in, h0)`.
    fn frame_start(&self, g: &mut Graph<'_>, z: Var) -> (Var, Var) {
        let z_in = self.z_in.forward(g, z);
        let h = self.frame_init.forward(g, z);
        (z_in, g.tanh(h))
    }

    /// Duration-GRU initial state from note hidden states and the chosen
    /// pitch tokens.
    fn duration_start(&self, g: &mut Graph<'_>, note_h: Var, pitches: &[usize]) -> Var {
        let mut onehot = Mat::zeros(pitches.len(), TOKEN_WIDTH);
        for (i, &p) in pitches.iter().enumerate() {
            token_row(onehot.row_mut(i), p, None);
        }
        let onehot = g.input(onehot);
        let pe = self.note_embed.forward(g, onehot);
        let cat = g.concat_cols(&[note_h, pe]);
        let h = self.dur_init.forward(g, cat);
        g.tanh(h)
    }

    pub(crate) fn teacher_forced(&self, g: &mut Graph<'_>, z: Var, trees: &[&PianoTree]) -> TreeLogits {
        let batch = trees.len();
        let (z_in, h0) = self.frame_start(g, z);

        let mut prev = Mat::zeros(SEGMENT_STEPS * batch, NUM_PITCHES);
        for t in 1..SEGMENT_STEPS {
            for (b, tree) in trees.iter().enumerate() {
                for n in &tree.frames[t - 1] {
                    prev.set(t * batch + b, usize::from(n.pitch), 1.0);
                }
            }
        }
        let prev = g.input(prev);
        let summary = self.frame_summary.forward(g, prev);
        let z_rep = g.gather_rows(z_in, (0..SEGMENT_STEPS).flat_map(|_| 0..batch).collect());
        let x = g.concat_cols(&[z_rep, summary]);
        let states = self.frame_gru.run(g, x, SEGMENT_STEPS, batch, h0, false);
        let frames_h = g.concat_rows(&states);

        // Frame rows (t·B + b) sorted by token count, longest first, so each
        // note step runs on a prefix of the rows.
        let frames: Vec<&[TreeNote]> = (0..SEGMENT_STEPS)
            .flat_map(|t| trees.iter().map(move |tr| tr.frames[t].as_slice()))
            .collect();
        let mut order: Vec<usize> = (0..frames.len()).collect();
        order.sort_by_key(|&f| std::cmp::Reverse(frames[f].len()));
        let max_tokens = frames.iter().map(|f| f.len() + 1).max().unwrap_or(1);
        let active: Vec<usize> = (0..max_tokens)
            .map(|k| order.iter().take_while(|&&f| frames[f].len() + 1 > k).count())
            .collect();

        let total: usize = active.iter().sum();
        let mut inputs = Mat::zeros(total, TOKEN_WIDTH);
        let mut pitch_targets = Vec::with_capacity(total);
        let mut note_rows = Vec::new();
        let mut note_pitches = Vec::new();
        let mut codes = Vec::new();
        let mut row = 0;
        for (k, &n_k) in active.iter().enumerate() {
            for &f in &order[..n_k] {
                let notes = frames[f];
                match k.checked_sub(1).map(|i| notes[i]) {
                    None => token_row(inputs.row_mut(row), START_TOKEN, None),
                    Some(p) => token_row(inputs.row_mut(row), usize::from(p.pitch), Some(p.duration)),
                }
                match notes.get(k) {
                    Some(n) => {
                        pitch_targets.push(Some(usize::from(n.pitch)));
                        note_rows.push(row);
                        note_pitches.push(usize::from(n.pitch));
                        codes.push(duration_bits(n.duration));
                    }
                    None => pitch_targets.push(Some(STOP_TOKEN)),
                }
                row += 1;
            }
        }

        let sorted_h = g.gather_rows(frames_h, order.clone());
        let init = self.note_init.forward(g, sorted_h);
        let mut h = g.tanh(init);
        let inputs = g.input(inputs);
        let emb = self.note_embed.forward(g, inputs);
        let xp = self.note_gru.project(g, emb);
        let mut outs = Vec::with_capacity(active.len());
        let mut offset = 0;
        for &n_k in &active {
            let xk = g.slice_rows(xp, offset, n_k);
            if g.shape(h).0 > n_k {
                h = g.slice_rows(h, 0, n_k);
            }
            h = self.note_gru.step(g, xk, h);
            outs.push(h);
            offset += n_k;
        }
        let note_h = g.concat_rows(&outs);
        let pitch = self.pitch_head.forward(g, note_h);

        let (duration, duration_targets) = if note_rows.is_empty() {
            (None, Vec::new())
        } else {
            let n = note_rows.len();
            let hn = g.gather_rows(note_h, note_rows);
            let dh0 = self.duration_start(g, hn, &note_pitches);
            let din = g.input(duration_inputs(&codes));
            let dstates = self.dur_gru.run(g, din, DURATION_BITS, n, dh0, false);
            let dh = g.concat_rows(&dstates);
            let logits = self.dur_head.forward(g, dh);
            let targets = (0..DURATION_BITS)
                .flat_map(|j| codes.iter().map(move |c| f64::from(c[j])))
                .collect();
            (Some(logits), targets)
        };
        TreeLogits {
            pitch,
            pitch_targets,
            duration,
            duration_targets,
        }
    }

    /// Greedy decoding: pitches are forced strictly increasing inside a
    /// frame and a stop is forced after 16 notes.
    pub(crate) fn greedy(&self, g: &mut Graph<'_>, z: Var) -> Vec<PianoTree> {
        let batch = g.shape(z).0;
        let (z_in, mut h) = self.frame_start(g, z);
        let mut trees = vec![PianoTree::default(); batch];
        let mut prev = Mat::zeros(batch, NUM_PITCHES);
        for t in 0..SEGMENT_STEPS {
            let prev_in = g.input(std::mem::replace(&mut prev, Mat::zeros(batch, NUM_PITCHES)));
            let summary = self.frame_summary.forward(g, prev_in);
            let x = g.concat_cols(&[z_in, summary]);
            let xp = self.frame_gru.project(g, x);
            h = self.frame_gru.step(g, xp, h);
            let init = self.note_init.forward(g, h);
            let mut nh = g.tanh(init);
            let mut alive: Vec<usize> = (0..batch).collect();
            for k in 0..=MAX_NOTES_PER_FRAME {
                if alive.is_empty() {
                    break;
                }
                let mut tok = Mat::zeros(alive.len(), TOKEN_WIDTH);
                for (i, &b) in alive.iter().enumerate() {
                    match trees[b].frames[t].last() {
                        Some(n) if k > 0 => token_row(tok.row_mut(i), usize::from(n.pitch), Some(n.duration)),
                        _ => token_row(tok.row_mut(i), START_TOKEN, None),
                    }
                }
                let tok = g.input(tok);
                let emb = self.note_embed.forward(g, tok);
                let xp = self.note_gru.project(g, emb);
                let hk = self.note_gru.step(g, xp, nh);
                let logits = self.pitch_head.forward(g, hk);
                let lm = g.value(logits);
                let mut keep = Vec::new();
                let mut pitches = Vec::new();
                for (i, &b) in alive.iter().enumerate() {
                    let floor = trees[b].frames[t].last().map_or(0, |n| usize::from(n.pitch) + 1);
                    let row = lm.row(i);
                    let best_pitch = (floor..NUM_PITCHES).max_by(|&x, &y| row[x].total_cmp(&row[y]));
                    let choice = match best_pitch {
                        Some(p) if k < MAX_NOTES_PER_FRAME && row[p] > row[STOP_TOKEN] => Some(p),
                        _ => None,
                    };
                    if let Some(p) = choice {
                        keep.push(i);
                        pitches.push(p);
                    }
                }
                if keep.is_empty() {
                    break;
                }
                let kept_h = g.gather_rows(hk, keep.clone());
                let durations = self.greedy_durations(g, kept_h, &pitches);
                alive = keep.iter().map(|&i| alive[i]).collect();
                for ((&b, &p), d) in alive.iter().zip(&pitches).zip(durations) {
                    trees[b].frames[t].push(TreeNote {
                        pitch: p as u8,
                        duration: d,
                    });
                }
                nh = kept_h;
            }
            for (b, tree) in trees.iter().enumerate() {
                for n in &tree.frames[t] {
                    prev.set(b, usize::from(n.pitch), 1.0);
                }
            }
        }
        trees
    }

    fn greedy_durations(&self, g: &mut Graph<'_>, note_h: Var, pitches: &[usize]) -> Vec<u8> {
        let n = pitches.len();
        let mut dh = self.duration_start(g, note_h, pitches);
        let mut codes = vec![[0u8; DURATION_BITS]; n];
        for j in 0..DURATION_BITS {
            let mut x = Mat::zeros(n, 3);
            for (i, code) in codes.iter().enumerate() {
                let col = if j == 0 { 0 } else { 1 + usize::from(code[j - 1]) };
                x.set(i, col, 1.0);
            }
            let x = g.input(x);
            let xp = self.dur_gru.project(g, x);
            dh = self.dur_gru.step(g, xp, dh);
            let logit = self.dur_head.forward(g, dh);
            let lv = g.value(logit);
            for (i, code) in codes.iter_mut().enumerate() {
                code[j] = u8::from(lv.get(i, 0) > 0.0);
            }
        }
        codes.iter().map(duration_from_bits).collect()
    }
}
