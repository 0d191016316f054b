//! Controlled generation with a trained VAE: chord/texture swapping and
//! texture sampling. The preserved factor always uses posterior means.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::chord::{extract_progression, ChordProgression, ExtractMode};
use crate::score::{Segment, SegmentSource};
use crate::vae::ChordTextureVae;
use crate::{Error, Result};

/// The two latents decoded together, with where each came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentPair {
    pub z_chd: Vec<f64>,
    pub z_txt: Vec<f64>,
    pub chord_source: String,
    pub texture_source: String,
}

pub const PRIOR_TAG: &str = "prior sample";

fn tag(s: &SegmentSource) -> String {
    format!("{}@{}", s.song_id, s.start_beat)
}

/// Pairs unit `k`'s chord latent from `chords` with its texture latent
/// from `textures`.
pub fn transfer_pairs(model: &ChordTextureVae, textures: &[Segment], chords: &[Segment]) -> Result<Vec<LatentPair>> {
    if textures.len() != chords.len() {
        return Err(Error::LengthMismatch(format!(
            "{} texture units vs {} chord units",
            textures.len(),
            chords.len()
        )));
    }
    let lt = model.encode_segments(textures);
    let lc = model.encode_segments(chords);
    Ok(lc
        .into_iter()
        .zip(lt)
        .zip(chords.iter().zip(textures))
        .map(|(((c, _), (_, t)), (sc, st))| LatentPair {
            z_chd: c.mean,
            z_txt: t.mean,
            chord_source: tag(&sc.source),
            texture_source: tag(&st.source),
        })
        .collect())
}

pub fn decode_pairs(model: &ChordTextureVae, pairs: &[LatentPair], source: &SegmentSource) -> Vec<Segment> {
    let zc: Vec<Vec<f64>> = pairs.iter().map(|p| p.z_chd.clone()).collect();
    let zt: Vec<Vec<f64>> = pairs.iter().map(|p| p.z_txt.clone()).collect();
    model.decode_segments(&zc, &zt, source.clone())
}

/// Decodes the chords of `chords` with the texture of `textures`, unit by
/// unit. Output segments keep the texture piece's sources.
pub fn style_transfer(model: &ChordTextureVae, textures: &[Segment], chords: &[Segment]) -> Result<Vec<Segment>> {
    let pairs = transfer_pairs(model, textures, chords)?;
    let zc: Vec<Vec<f64>> = pairs.iter().map(|p| p.z_chd.clone()).collect();
    let zt: Vec<Vec<f64>> = pairs.into_iter().map(|p| p.z_txt).collect();
    Ok(model
        .decode_trees(&zc, &zt)
        .iter()
        .zip(textures)
        .map(|(t, s)| t.to_segment(s.source.clone()))
        .collect())
}

/// `n` decodes with `z_chd` at its posterior mean and `z_txt` drawn from
/// the texture posterior of `x`.
pub fn vary_texture_posterior<R: Rng + ?Sized>(
    model: &ChordTextureVae,
    x: &Segment,
    rng: &mut R,
    n: usize,
) -> Vec<Segment> {
    if n == 0 {
        return Vec::new();
    }
    let (c, t) = model.encode_segments(std::slice::from_ref(x)).remove(0);
    let zc = vec![c.mean; n];
    let zt: Vec<Vec<f64>> = (0..n).map(|_| t.sample(rng)).collect();
    model.decode_segments(&zc, &zt, x.source.clone())
}

/// `n` decodes under `prog` with `z_txt` drawn from N(0, I).
pub fn vary_texture_prior<R: Rng + ?Sized>(
    model: &ChordTextureVae,
    prog: &ChordProgression,
    rng: &mut R,
    n: usize,
) -> Vec<Segment> {
    let pairs = prior_pairs(model, prog, rng, n);
    decode_pairs(model, &pairs, &SegmentSource::new(PRIOR_TAG, 0))
}

pub fn prior_pairs<R: Rng + ?Sized>(
    model: &ChordTextureVae,
    prog: &ChordProgression,
    rng: &mut R,
    n: usize,
) -> Vec<LatentPair> {
    if n == 0 {
        return Vec::new();
    }
    let zc = model.encode_chords(std::slice::from_ref(prog)).remove(0).mean;
    let d = model.latent_dim();
    (0..n)
        .map(|_| LatentPair {
            z_chd: zc.clone(),
            z_txt: (0..d).map(|_| rng.sample(StandardNormal)).collect(),
            chord_source: "given progression".into(),
            texture_source: PRIOR_TAG.into(),
        })
        .collect()
}

/// Fraction of beats whose re-extracted root matches `prog`.
pub fn chord_root_accuracy(outputs: &[Segment], prog: &ChordProgression) -> f64 {
    if outputs.is_empty() {
        return 0.0;
    }
    let want = prog.roots();
    let hits: usize = outputs
        .iter()
        .map(|s| {
            let got = extract_progression(s, ExtractMode::Sounding).roots();
            got.iter().zip(&want).filter(|(a, b)| a == b).count()
        })
        .sum();
    hits as f64 / (outputs.len() * want.len()) as f64
}
