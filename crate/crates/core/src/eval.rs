//! Disentanglement sweeps and reconstruction metrics.
//!
//! A sweep augments every test segment, re-extracts its chords, re-encodes
//! both factors and reports the L1 change of the posterior means. Only
//! posterior means enter the numbers, so reports are deterministic.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chord::{extract_progression, ExtractMode};
use crate::score::{halve_durations, perturb_pitch, transpose, Segment};
use crate::trainer::evaluate_segments;
use crate::vae::{ChordTextureVae, GaussianLatent, LossParts};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Augmentation {
    /// Whole-segment transposition by `i` semitones.
    Transpose,
    /// Beat-wise ±1 semitone shifts with probability `i`.
    PerturbPitch,
    /// Duration halving with probability `i`.
    HalveDurations,
}

impl Augmentation {
    pub fn name(self) -> &'static str {
        match self {
            Augmentation::Transpose => "transpose",
            Augmentation::PerturbPitch => "perturb_pitch",
            Augmentation::HalveDurations => "halve_durations",
        }
    }

    fn salt(self) -> u64 {
        match self {
            Augmentation::Transpose => 1,
            Augmentation::PerturbPitch => 2,
            Augmentation::HalveDurations => 3,
        }
    }
}

/// Mean and total L1 latent change for one augmentation setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub augmentation: Augmentation,
    pub param: f64,
    /// Extraction mode used for the chord side, before and after.
    pub chord_mode: ExtractMode,
    pub mean_delta_chd: f64,
    pub mean_delta_txt: f64,
    pub total_delta_chd: f64,
    pub total_delta_txt: f64,
    pub segments: usize,
}

/// Default probabilities for the perturbation sweeps: 0.0, 0.1, …, 1.0.
pub fn default_probabilities() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}

fn l1(a: &GaussianLatent, b: &GaussianLatent) -> f64 {
    a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y).abs()).sum()
}

fn fnv(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// RNG seed for augmenting one segment: a function of its source, the
/// operator and `base_seed` only, so every probability level of a sweep
/// reuses the same draws.
pub fn segment_seed(seg: &Segment, aug: Augmentation, base_seed: u64) -> u64 {
    let mut key = seg.source.song_id.as_bytes().to_vec();
    key.extend_from_slice(&seg.source.start_beat.to_le_bytes());
    key.extend_from_slice(&aug.salt().to_le_bytes());
    key.extend_from_slice(&base_seed.to_le_bytes());
    fnv(&key)
}

fn encode(model: &ChordTextureVae, segs: &[Segment], mode: ExtractMode) -> Vec<(GaussianLatent, GaussianLatent)> {
    let progs: Vec<_> = segs.iter().map(|s| extract_progression(s, mode)).collect();
    model.encode_with_chords(segs, &progs)
}

fn report(
    augmentation: Augmentation,
    param: f64,
    chord_mode: ExtractMode,
    base: &[(GaussianLatent, GaussianLatent)],
    moved: &[(GaussianLatent, GaussianLatent)],
) -> DeltaReport {
    let total_delta_chd: f64 = base.iter().zip(moved).map(|(a, b)| l1(&a.0, &b.0)).sum();
    let total_delta_txt: f64 = base.iter().zip(moved).map(|(a, b)| l1(&a.1, &b.1)).sum();
    let n = base.len();
    DeltaReport {
        augmentation,
        param,
        chord_mode,
        mean_delta_chd: total_delta_chd / n as f64,
        mean_delta_txt: total_delta_txt / n as f64,
        total_delta_chd,
        total_delta_txt,
        segments: n,
    }
}

/// Transposition sweep for `i = 1..=12`.
pub fn delta_sweep_transpose(model: &ChordTextureVae, test: &[Segment]) -> Result<Vec<DeltaReport>> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mode = ExtractMode::Sounding;
    let base = encode(model, test, mode);
    Ok((1..=12)
        .map(|i| {
            let moved: Vec<Segment> = test.iter().map(|s| transpose(s, i)).collect();
            report(Augmentation::Transpose, f64::from(i), mode, &base, &encode(model, &moved, mode))
        })
        .collect())
}

/// Beat-wise pitch perturbation and duration halving sweeps.
///
/// For each probability three series are produced: pitch perturbation with
/// sounding-mode chords, duration halving with onset-only chords (whose
/// chord delta is zero by construction), and duration halving with
/// sounding-mode chords for comparison.
pub fn delta_sweep_perturb(
    model: &ChordTextureVae,
    test: &[Segment],
    probabilities: &[f64],
    base_seed: u64,
) -> Result<Vec<DeltaReport>> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if let Some(p) = probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Config(format!("probability {p} outside [0, 1]")));
    }
    let sounding = encode(model, test, ExtractMode::Sounding);
    let onset = encode(model, test, ExtractMode::OnsetOnly);
    let mut out = Vec::with_capacity(3 * probabilities.len());
    for &p in probabilities {
        let perturbed: Vec<Segment> = test
            .iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(segment_seed(s, Augmentation::PerturbPitch, base_seed));
                perturb_pitch(s, p, &mut rng)
            })
            .collect();
        out.push(report(
            Augmentation::PerturbPitch,
            p,
            ExtractMode::Sounding,
            &sounding,
            &encode(model, &perturbed, ExtractMode::Sounding),
        ));
        let halved: Vec<Segment> = test
            .iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(segment_seed(s, Augmentation::HalveDurations, base_seed));
                halve_durations(s, p, &mut rng)
            })
            .collect();
        out.push(report(
            Augmentation::HalveDurations,
            p,
            ExtractMode::OnsetOnly,
            &onset,
            &encode(model, &halved, ExtractMode::OnsetOnly),
        ));
        out.push(report(
            Augmentation::HalveDurations,
            p,
            ExtractMode::Sounding,
            &sounding,
            &encode(model, &halved, ExtractMode::Sounding),
        ));
    }
    Ok(out)
}

fn mode_name(m: ExtractMode) -> &'static str {
    match m {
        ExtractMode::Sounding => "sounding",
        ExtractMode::OnsetOnly => "onset_only",
    }
}

/// One CSV row per (augmentation, parameter, chord mode, factor).
pub fn write_delta_csv<W: Write>(reports: &[DeltaReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(["augmentation", "param", "chord_mode", "factor", "mean_l1", "total_l1", "segments"])
        .map_err(io)?;
    for r in reports {
        for (factor, mean, total) in [
            ("z_chd", r.mean_delta_chd, r.total_delta_chd),
            ("z_txt", r.mean_delta_txt, r.total_delta_txt),
        ] {
            w.write_record([
                r.augmentation.name().to_string(),
                r.param.to_string(),
                mode_name(r.chord_mode).to_string(),
                factor.to_string(),
                mean.to_string(),
                total.to_string(),
                r.segments.to_string(),
            ])
            .map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::Config(format!("csv: {e}")))
}

pub fn save_delta_csv(reports: &[DeltaReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_delta_csv(reports, std::io::BufWriter::new(file))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub segments: usize,
    pub pitch_accuracy: f64,
    pub stop_accuracy: f64,
    pub duration_bit_accuracy: f64,
    pub root_accuracy: f64,
    pub bass_accuracy: f64,
    pub chroma_f1: f64,
    pub loss: LossParts,
}

/// Teacher-forced accuracies over `test` with posterior means.
pub fn reconstruction_report(model: &ChordTextureVae, test: &[Segment]) -> Result<ReconstructionReport> {
    let (loss, c) = evaluate_segments(model, test, 64, 0.1).ok_or(Error::EmptyTestSet)?;
    Ok(ReconstructionReport {
        segments: test.len(),
        pitch_accuracy: c.pitch_accuracy(),
        stop_accuracy: c.stop_accuracy(),
        duration_bit_accuracy: c.duration_bit_accuracy(),
        root_accuracy: c.root_accuracy(),
        bass_accuracy: c.bass_accuracy(),
        chroma_f1: c.chroma_f1(),
        loss,
    })
}

pub fn write_reconstruction_csv<W: Write>(r: &ReconstructionReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(["metric", "value"]).map_err(io)?;
    for (k, v) in [
        ("segments", r.segments as f64),
        ("pitch_accuracy", r.pitch_accuracy),
        ("stop_accuracy", r.stop_accuracy),
        ("duration_bit_accuracy", r.duration_bit_accuracy),
        ("root_accuracy", r.root_accuracy),
        ("bass_accuracy", r.bass_accuracy),
        ("chroma_f1", r.chroma_f1),
        ("loss_total", r.loss.total),
        ("loss_chord", r.loss.chord),
        ("loss_pianotree", r.loss.pianotree),
        ("kl_chd", r.loss.kl_chd),
        ("kl_txt", r.loss.kl_txt),
    ] {
        w.write_record([k.to_string(), v.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Config(format!("csv: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{quantize_and_segment, Song};
    use crate::synth::{generate_corpus, SynthOptions};
    use crate::vae::VaeConfig;

    fn test_set(n: usize) -> Vec<Segment> {
        generate_corpus(n, &SynthOptions { bars: 8, ..Default::default() }, 4)
            .iter()
            .flat_map(|s| {
                let piano = Song {
                    tracks: vec![s.track("piano").unwrap().clone()],
                    ..s.clone()
                };
                quantize_and_segment(&piano, 8).segments
            })
            .collect()
    }

    fn model() -> ChordTextureVae {
        ChordTextureVae::new(VaeConfig::tiny(), 1).unwrap()
    }

    #[test]
    fn transpose_sweep_is_finite_and_octave_keeps_chords() {
        let m = model();
        let reports = delta_sweep_transpose(&m, &test_set(2)).unwrap();
        assert_eq!(reports.len(), 12);
        for r in &reports {
            assert!(r.mean_delta_chd.is_finite() && r.mean_delta_chd >= 0.0);
            assert!(r.mean_delta_txt.is_finite() && r.mean_delta_txt >= 0.0);
        }
        assert_eq!(reports[11].mean_delta_chd, 0.0);
        assert!(reports[0].mean_delta_chd > 0.0);
        assert!(matches!(delta_sweep_transpose(&m, &[]), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn perturbation_sweep_properties() {
        let m = model();
        let test = test_set(2);
        let reports = delta_sweep_perturb(&m, &test, &default_probabilities(), 0).unwrap();
        assert_eq!(reports.len(), 33);
        for r in &reports {
            if r.param == 0.0 {
                assert_eq!((r.mean_delta_chd, r.mean_delta_txt), (0.0, 0.0));
            }
            if r.augmentation == Augmentation::HalveDurations && r.chord_mode == ExtractMode::OnsetOnly {
                assert_eq!(r.mean_delta_chd, 0.0);
            }
        }
        let again = delta_sweep_perturb(&m, &test, &default_probabilities(), 0).unwrap();
        assert_eq!(reports, again);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_delta_csv(&reports, &mut a).unwrap();
        write_delta_csv(&again, &mut b).unwrap();
        assert_eq!(a, b);
        assert_eq!(String::from_utf8(a).unwrap().lines().count(), 1 + 66);
    }

    #[test]
    fn random_model_root_accuracy_is_chance() {
        let m = model();
        let base = test_set(3);
        let all_keys: Vec<Segment> = base
            .iter()
            .flat_map(|s| (0..12).map(move |i| transpose(s, i)))
            .collect();
        let r = reconstruction_report(&m, &all_keys).unwrap();
        let n = (all_keys.len() * 8) as f64;
        let p = 1.0 / 12.0;
        let sd = (p * (1.0 - p) / n).sqrt();
        assert!((r.root_accuracy - p).abs() < 4.0 * sd, "root accuracy {}", r.root_accuracy);
        assert_eq!(r, reconstruction_report(&m, &all_keys).unwrap());
    }
}
