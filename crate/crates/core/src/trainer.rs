//! Corpus building, song-level splitting and the VAE training loop.
//!
//! Schedules:
//! - learning rate: geometric per epoch from `lr_start` to `lr_floor`
//!   (`lr_e = start · (floor/start)^(e/(E−1))`);
//! - KL weight: linear from 0 to `kl_target` over the first epoch, counted
//!   in steps, constant afterwards.
//!
//! Shuffling is seeded from `(seed, epoch)` and the reparameterization
//! noise of each step from `(seed, step)`, so resuming at an epoch
//! boundary reproduces the remaining trajectory exactly.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::nn::{Adam, Checkpoint, OptimizerState};
use crate::score::{transpose, Segment};
use crate::vae::{ChordTextureVae, Example, LossParts, ReconCounts, Sampling, VaeConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: VaeConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_start: f64,
    pub lr_floor: f64,
    pub kl_target: f64,
    pub split_fraction: f64,
    pub seed: u64,
    pub hop_beats: u32,
    /// Global gradient-norm clip; 0 disables clipping.
    pub clip_norm: f64,
    /// Training copies per segment, transposed by 0, 1, … semitones.
    pub transpositions: usize,
    /// Stream of the segment records used for training.
    pub stream: String,
    /// Stops after this many optimizer steps in total.
    pub max_steps: Option<usize>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: VaeConfig::default(),
            batch_size: 128,
            epochs: 6,
            lr_start: 1e-3,
            lr_floor: 1e-5,
            kl_target: 0.1,
            split_fraction: 0.9,
            seed: 0,
            hop_beats: 8,
            clip_norm: 10.0,
            transpositions: 12,
            stream: "piano".into(),
            max_steps: None,
            data_dir: None,
            out_dir: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split_fraction must lie strictly between 0 and 1");
        }
        if !(self.lr_floor > 0.0 && self.lr_floor <= self.lr_start) {
            return bad("need 0 < lr_floor <= lr_start");
        }
        if !(0.0..=0.1).contains(&self.kl_target) {
            return bad("kl_target must lie in [0, 0.1]");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return bad("batch_size and epochs must be positive");
        }
        if self.hop_beats == 0 {
            return bad("hop_beats must be positive");
        }
        if !(1..=12).contains(&self.transpositions) {
            return bad("transpositions must lie in 1..=12");
        }
        if !(self.clip_norm >= 0.0) {
            return bad("clip_norm must be non-negative");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.lr_start;
        }
        let frac = epoch.min(self.epochs - 1) as f64 / (self.epochs - 1) as f64;
        self.lr_start * (self.lr_floor / self.lr_start).powf(frac)
    }

    pub fn kl_weight(&self, step: usize, steps_per_epoch: usize) -> f64 {
        let span = steps_per_epoch.saturating_sub(1).max(1);
        self.kl_target * (step as f64 / span as f64).min(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SongEntry {
    pub song_id: String,
    pub segments: Vec<Segment>,
    pub split: Split,
}

/// One training item: a segment of a training song under a transposition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ItemKey {
    pub song: usize,
    pub segment: usize,
    pub shift: i32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusIndex {
    /// Sorted by song id.
    pub songs: Vec<SongEntry>,
    pub transpositions: usize,
}

impl CorpusIndex {
    pub fn songs_in(&self, split: Split) -> impl Iterator<Item = &SongEntry> {
        self.songs.iter().filter(move |s| s.split == split)
    }

    pub fn train_items(&self) -> Vec<ItemKey> {
        let mut out = Vec::new();
        for (si, song) in self.songs.iter().enumerate() {
            if song.split != Split::Train {
                continue;
            }
            for seg in 0..song.segments.len() {
                for shift in 0..self.transpositions as i32 {
                    out.push(ItemKey {
                        song: si,
                        segment: seg,
                        shift,
                    });
                }
            }
        }
        out
    }

    pub fn item(&self, key: ItemKey) -> Segment {
        transpose(&self.songs[key.song].segments[key.segment], key.shift)
    }

    pub fn test_segments(&self) -> Vec<Segment> {
        self.songs_in(Split::Test)
            .flat_map(|s| s.segments.iter().cloned())
            .collect()
    }

    pub fn train_segments(&self) -> Vec<Segment> {
        self.songs_in(Split::Train)
            .flat_map(|s| s.segments.iter().cloned())
            .collect()
    }
}

/// Splits songs into train and test sets by song under `seed`.
///
/// `round(fraction · n)` songs train, clamped so each side keeps at least
/// one song when there are two or more.
pub fn build_corpus(
    songs: impl IntoIterator<Item = (String, Vec<Segment>)>,
    fraction: f64,
    transpositions: usize,
    seed: u64,
) -> Result<CorpusIndex> {
    let mut songs: Vec<(String, Vec<Segment>)> = songs.into_iter().filter(|(_, s)| !s.is_empty()).collect();
    if songs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    songs.sort_by(|a, b| a.0.cmp(&b.0));
    let n = songs.len();
    let n_train = if n == 1 {
        1
    } else {
        ((fraction * n as f64).round() as usize).clamp(1, n - 1)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split = vec![Split::Test; n];
    for &i in &order[..n_train] {
        split[i] = Split::Train;
    }
    Ok(CorpusIndex {
        songs: songs
            .into_iter()
            .zip(split)
            .map(|((song_id, segments), split)| SongEntry {
                song_id,
                segments,
                split,
            })
            .collect(),
        transpositions,
    })
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MetricRecord {
    Step {
        step: usize,
        epoch: usize,
        #[serde(flatten)]
        loss: LossParts,
        lr: f64,
        kl_weight: f64,
        grad_norm: f64,
    },
    Epoch {
        epoch: usize,
        train: LossParts,
        test: Option<LossParts>,
        test_pitch_accuracy: Option<f64>,
        test_root_accuracy: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    /// Next epoch to run.
    pub epoch: usize,
    /// Optimizer steps taken.
    pub step: usize,
    /// Batches of `epoch` already consumed (non-zero after a `max_steps` stop).
    #[serde(default)]
    pub batch_in_epoch: usize,
    pub best_test: Option<f64>,
    pub adam_step: u64,
}

/// What one call to [`Trainer::run`] produced.
#[derive(Clone, Debug, Default)]
pub struct RunLog {
    pub records: Vec<MetricRecord>,
    /// Mean training loss per completed epoch.
    pub epoch_train: Vec<LossParts>,
    pub epoch_test: Vec<Option<LossParts>>,
}

impl RunLog {
    pub fn step_totals(&self) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter_map(|r| match r {
                MetricRecord::Step { step, loss, .. } => Some((*step, loss.total)),
                _ => None,
            })
            .collect()
    }
}

pub struct TrainOutcome {
    pub model: ChordTextureVae,
    pub log: RunLog,
    pub state: TrainState,
}

fn mean_parts(parts: &[LossParts]) -> LossParts {
    let n = parts.len().max(1) as f64;
    let mut m = LossParts::default();
    for p in parts {
        m.chord += p.chord / n;
        m.pianotree += p.pianotree / n;
        m.kl_chd += p.kl_chd / n;
        m.kl_txt += p.kl_txt / n;
        m.total += p.total / n;
    }
    m
}

/// Teacher-forced loss and counts over `segments` with posterior means,
/// weighted by batch size.
pub fn evaluate_segments(
    model: &ChordTextureVae,
    segments: &[Segment],
    batch_size: usize,
    kl_weight: f64,
) -> Option<(LossParts, ReconCounts)> {
    if segments.is_empty() {
        return None;
    }
    let mut counts = ReconCounts::default();
    let mut sum = LossParts::default();
    for chunk in segments.chunks(batch_size.max(1)) {
        let batch: Vec<Example> = chunk.iter().cloned().map(Example::new).collect();
        let (p, c) = model.evaluate(&batch, Sampling::Mean, kl_weight);
        let w = chunk.len() as f64;
        sum.chord += p.chord * w;
        sum.pianotree += p.pianotree * w;
        sum.kl_chd += p.kl_chd * w;
        sum.kl_txt += p.kl_txt * w;
        sum.total += p.total * w;
        counts.merge(&c);
    }
    let n = segments.len() as f64;
    Some((
        LossParts {
            chord: sum.chord / n,
            pianotree: sum.pianotree / n,
            kl_chd: sum.kl_chd / n,
            kl_txt: sum.kl_txt / n,
            total: sum.total / n,
        },
        counts,
    ))
}

/// Mixes two seeds into one.
pub(crate) fn mix(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Order of training items in `epoch`.
pub fn epoch_order(items: &[ItemKey], seed: u64, epoch: usize) -> Vec<ItemKey> {
    let mut v = items.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(seed, 1 + epoch as u64)));
    v
}

pub struct Trainer<'c> {
    pub config: TrainConfig,
    corpus: &'c CorpusIndex,
    items: Vec<ItemKey>,
    test: Vec<Segment>,
    pub model: ChordTextureVae,
    adam: Adam,
    state: TrainState,
    out_dir: Option<PathBuf>,
    metrics: Option<BufWriter<File>>,
}

impl<'c> Trainer<'c> {
    pub fn new(corpus: &'c CorpusIndex, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = ChordTextureVae::new(config.model.clone(), config.seed)?;
        Self::with_model(corpus, config, model)
    }

    /// Continues from a checkpoint written by [`Trainer::save`].
    pub fn resume(corpus: &'c CorpusIndex, config: TrainConfig, ck: &Checkpoint) -> Result<Self> {
        config.validate()?;
        let model = ChordTextureVae::from_checkpoint(ck)?;
        if model.config != config.model {
            return Err(Error::Checkpoint("model widths differ from the configuration".into()));
        }
        let opt = ck
            .optimizer
            .as_ref()
            .ok_or_else(|| Error::Checkpoint("checkpoint has no optimizer state".into()))?;
        let state: TrainState =
            serde_json::from_str(&opt.json).map_err(|e| Error::Checkpoint(format!("training state: {e}")))?;
        let mut t = Self::with_model(corpus, config, model)?;
        if opt.first_moments.len() != t.adam.m.len() {
            return Err(Error::Checkpoint("optimizer state does not match the model".into()));
        }
        t.adam.m = opt.first_moments.clone();
        t.adam.v = opt.second_moments.clone();
        t.adam.step = state.adam_step;
        t.state = state;
        Ok(t)
    }

    fn with_model(corpus: &'c CorpusIndex, config: TrainConfig, model: ChordTextureVae) -> Result<Self> {
        let items = corpus.train_items();
        if items.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let adam = Adam::new(&model.store);
        Ok(Self {
            test: corpus.test_segments(),
            items,
            corpus,
            model,
            adam,
            state: TrainState {
                epoch: 0,
                step: 0,
                batch_in_epoch: 0,
                best_test: None,
                adam_step: 0,
            },
            out_dir: None,
            metrics: None,
            config,
        })
    }

    /// Writes metrics (`metrics.jsonl`, appended) and checkpoints under `dir`.
    pub fn output_to(mut self, dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("metrics.jsonl");
        let file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        self.metrics = Some(BufWriter::new(file));
        self.out_dir = Some(dir);
        Ok(self)
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.items.len().div_ceil(self.config.batch_size)
    }

    fn emit(&mut self, rec: &MetricRecord) -> Result<()> {
        if let (Some(w), Some(dir)) = (self.metrics.as_mut(), self.out_dir.as_ref()) {
            let line = serde_json::to_string(rec).expect("metrics serialize");
            writeln!(w, "{line}").map_err(|e| Error::io(dir.join("metrics.jsonl"), e))?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = self.model.to_checkpoint(serde_json::to_value(&self.config).expect("config serializes"));
        ck.optimizer = Some(OptimizerState {
            json: serde_json::to_string(&self.state).expect("state serializes"),
            first_moments: self.adam.m.clone(),
            second_moments: self.adam.v.clone(),
        });
        ck
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.checkpoint().save(path)
    }

    pub fn into_model(self) -> ChordTextureVae {
        self.model
    }

    /// Runs the remaining epochs, stopping early once `max_steps` is reached;
    /// calling again after raising `max_steps` continues where it stopped.
    pub fn run(&mut self) -> Result<RunLog> {
        let spe = self.steps_per_epoch();
        let mut log = RunLog::default();
        let bs = self.config.batch_size;
        while self.state.epoch < self.config.epochs {
            if self.config.max_steps.is_some_and(|m| self.state.step >= m) {
                break;
            }
            let epoch = self.state.epoch;
            let lr = self.config.learning_rate(epoch);
            let order = epoch_order(&self.items, self.config.seed, epoch);
            let mut parts = Vec::with_capacity(spe);
            let mut stopped = false;
            for (bi, keys) in order.chunks(bs).enumerate().skip(self.state.batch_in_epoch) {
                if self.config.max_steps.is_some_and(|m| self.state.step >= m) {
                    stopped = true;
                    break;
                }
                let step = self.state.step;
                let kl_weight = self.config.kl_weight(step, spe);
                let batch: Vec<Example> = keys.iter().map(|&k| Example::new(self.corpus.item(k))).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(mix(self.config.seed, 0x5EED_0000 + step as u64));
                let (p, _, mut grads) = self
                    .model
                    .loss_and_gradients(&batch, Sampling::Noise(&mut rng), kl_weight);
                if !p.is_finite() || !grads.is_finite() {
                    return Err(Error::Divergence { step, batch: bi });
                }
                let grad_norm = if self.config.clip_norm > 0.0 {
                    grads.clip(self.config.clip_norm)
                } else {
                    grads.global_norm()
                };
                self.adam.update(&mut self.model.store, &grads, lr);
                self.state.step += 1;
                self.state.batch_in_epoch = bi + 1;
                self.state.adam_step = self.adam.step;
                let rec = MetricRecord::Step {
                    step,
                    epoch,
                    loss: p,
                    lr,
                    kl_weight,
                    grad_norm,
                };
                self.emit(&rec)?;
                log::debug!("step {step} epoch {epoch} total {:.4}", p.total);
                log.records.push(rec);
                parts.push(p);
            }
            if stopped {
                break;
            }
            let train = mean_parts(&parts);
            let kl_now = self.config.kl_weight(self.state.step, spe);
            let test = evaluate_segments(&self.model, &self.test, bs, kl_now);
            self.state.epoch += 1;
            self.state.batch_in_epoch = 0;
            let is_best = match (&test, self.state.best_test) {
                (Some((t, _)), Some(best)) => t.total < best,
                (Some(_), None) => true,
                _ => false,
            };
            if is_best {
                self.state.best_test = test.as_ref().map(|(t, _)| t.total);
            }
            let rec = MetricRecord::Epoch {
                epoch,
                train,
                test: test.as_ref().map(|(t, _)| *t),
                test_pitch_accuracy: test.as_ref().map(|(_, c)| c.pitch_accuracy()),
                test_root_accuracy: test.as_ref().map(|(_, c)| c.root_accuracy()),
            };
            self.emit(&rec)?;
            log::info!(
                "epoch {epoch}: train {:.4}, test {}",
                train.total,
                test.as_ref().map_or("n/a".to_string(), |(t, _)| format!("{:.4}", t.total))
            );
            log.records.push(rec);
            log.epoch_train.push(train);
            log.epoch_test.push(test.map(|(t, _)| t));
            if let Some(dir) = self.out_dir.clone() {
                if let Some(w) = self.metrics.as_mut() {
                    w.flush().map_err(|e| Error::io(dir.join("metrics.jsonl"), e))?;
                }
                self.save(dir.join(format!("epoch-{epoch}.ckpt")))?;
                self.save(dir.join("last.ckpt"))?;
                if is_best {
                    self.save(dir.join("best.ckpt"))?;
                }
            }
        }
        if let (Some(w), Some(dir)) = (self.metrics.as_mut(), self.out_dir.as_ref()) {
            w.flush().map_err(|e| Error::io(dir.join("metrics.jsonl"), e))?;
        }
        Ok(log)
    }
}

/// Trains from scratch; convenience over [`Trainer`].
pub fn train(corpus: &CorpusIndex, config: &TrainConfig, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let mut t = Trainer::new(corpus, config.clone())?;
    if let Some(dir) = out_dir {
        t = t.output_to(dir)?;
    }
    let log = t.run()?;
    Ok(TrainOutcome {
        state: t.state.clone(),
        model: t.into_model(),
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::quantize_and_segment;
    use crate::synth::{generate_corpus, SynthOptions};

    fn songs(n: usize) -> Vec<(String, Vec<Segment>)> {
        generate_corpus(n, &SynthOptions { bars: 4, ..Default::default() }, 5)
            .into_iter()
            .map(|s| {
                let piano = crate::score::Song {
                    tracks: vec![s.track("piano").unwrap().clone()],
                    ..s.clone()
                };
                (s.id.clone(), quantize_and_segment(&piano, 8).segments)
            })
            .collect()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            model: VaeConfig::tiny(),
            batch_size: 8,
            epochs: 3,
            transpositions: 2,
            ..Default::default()
        }
    }

    #[test]
    fn split_is_by_song_and_seeded() {
        let c = build_corpus(songs(10), 0.9, 12, 1).unwrap();
        assert_eq!(c.songs_in(Split::Train).count(), 9);
        assert_eq!(c.songs_in(Split::Test).count(), 1);
        assert_eq!(c, build_corpus(songs(10), 0.9, 12, 1).unwrap());
        let train_ids: Vec<_> = c.songs_in(Split::Train).map(|s| s.song_id.clone()).collect();
        for k in c.train_items() {
            assert!(train_ids.contains(&c.songs[k.song].song_id));
        }
        let per_song = c.songs[0].segments.len();
        assert_eq!(c.train_items().len(), 9 * per_song * 12);
        assert!(matches!(build_corpus(Vec::new(), 0.9, 12, 1), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn one_segment_gives_twelve_keys() {
        let seg = songs(1)[0].1[0].clone();
        let c = build_corpus([("a".to_string(), vec![seg.clone()])], 0.9, 12, 0).unwrap();
        let items = c.train_items();
        assert_eq!(items.len(), 12);
        for (i, k) in items.iter().enumerate() {
            assert_eq!(c.item(*k), transpose(&seg, i as i32));
        }
    }

    #[test]
    fn schedules_hit_their_endpoints() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate(0), 1e-3);
        assert!((cfg.learning_rate(5) - 1e-5).abs() < 1e-18);
        assert!(cfg.learning_rate(3) < cfg.learning_rate(2));
        assert_eq!(cfg.kl_weight(0, 50), 0.0);
        assert!((cfg.kl_weight(49, 50) - 0.1).abs() < 1e-15);
        let mut prev = 0.0;
        for s in 0..200 {
            let w = cfg.kl_weight(s, 50);
            assert!(w >= prev && w <= 0.1);
            prev = w;
        }
    }

    #[test]
    fn config_parses_and_validates() {
        let cfg = TrainConfig::from_toml("batch_size = 4\nepochs = 2\n[model]\nlatent_dim = 8\n").unwrap();
        assert_eq!(cfg.batch_size, 4);
        assert_eq!(cfg.model.latent_dim, 8);
        assert_eq!(cfg.model.frame_hidden, 1024);
        assert!(TrainConfig::from_toml("split_fraction = 1.0").is_err());
        assert!(TrainConfig::from_toml("kl_target = 0.5").is_err());
        assert!(TrainConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn resume_reproduces_trajectory() {
        let corpus = build_corpus(songs(3), 0.67, 2, 3).unwrap();
        let cfg = tiny_config();
        let full = train(&corpus, &cfg, None).unwrap();

        let mut first = cfg.clone();
        first.epochs = 1;
        let t = Trainer::new(&corpus, first).unwrap();
        let spe = t.steps_per_epoch();
        let dir = tempfile::tempdir().unwrap();
        let mut t = t.output_to(dir.path()).unwrap();
        t.run().unwrap();
        assert_eq!(t.state().epoch, 1);
        let ck = Checkpoint::load(dir.path().join("last.ckpt")).unwrap();
        let resumed = Trainer::resume(&corpus, cfg.clone(), &ck).unwrap().run().unwrap();
        let all = full.log.step_totals();
        assert_eq!(&all[spe..], resumed.step_totals().as_slice());

        // stopping mid-epoch and continuing is seamless too
        let mut chunked = Trainer::new(&corpus, cfg).unwrap();
        let mut got = Vec::new();
        for stop in [spe / 2 + 1, 2 * spe + 1, usize::MAX] {
            chunked.config.max_steps = Some(stop);
            got.extend(chunked.run().unwrap().step_totals());
        }
        assert_eq!(got, all);
        let log = fs::read_to_string(dir.path().join("metrics.jsonl")).unwrap();
        assert_eq!(log.lines().count(), spe + 1);
        assert!(dir.path().join("best.ckpt").exists());
    }

    #[test]
    fn divergence_is_reported() {
        let corpus = build_corpus(songs(2), 0.5, 1, 0).unwrap();
        let mut t = Trainer::new(&corpus, tiny_config()).unwrap();
        let id = t.model.store.find("chord_enc.mean.bias").unwrap();
        t.model.store.value_mut(id).data[0] = f64::NAN;
        assert!(matches!(t.run(), Err(Error::Divergence { step: 0, batch: 0 })));
    }
}
