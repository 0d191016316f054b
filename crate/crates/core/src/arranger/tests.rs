use super::*;
use crate::chord::{extract_progression, ExtractMode};
use crate::synth::{generate_corpus, SynthOptions};
use crate::vae::VaeConfig;

fn vae() -> ChordTextureVae {
    ChordTextureVae::new(VaeConfig::tiny(), 5).unwrap()
}

fn arranger() -> Arranger {
    Arranger::new(ArrangerConfig::toy(8), 2).unwrap()
}

fn samples(songs: usize) -> Vec<PairedSample> {
    generate_corpus(songs, &SynthOptions::default(), 9)
        .iter()
        .flat_map(|s| paired_samples(s, &["melody".into()], &["piano".into()]))
        .collect()
}

fn targets(rng_seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..8)
        .map(|_| (0..8).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect())
        .collect()
}

#[test]
fn config_defaults_and_schedule() {
    let c = ArrangerConfig::default();
    assert_eq!((c.hidden, c.layers, c.heads, c.warmup_steps), (256, 4, 8, 12_000));
    c.validate().unwrap();
    assert!((c.learning_rate(11_999) - 1e-3).abs() < 1e-15);
    assert!((c.learning_rate(5_999) - 0.5e-3).abs() < 1e-15);
    assert!((c.learning_rate(47_999) - 0.5e-3).abs() < 1e-15);
    let parsed = ArrangerConfig::from_toml("hidden = 64\nheads = 4\nloss = \"mse\"").unwrap();
    assert_eq!((parsed.hidden, parsed.layers), (64, 4));
    assert!(ArrangerConfig::from_toml("hidden = 30\nheads = 4").is_err());
    assert!(ArrangerConfig::from_toml("depth = 3").is_err());
}

#[test]
fn factor_table_has_four_rows() {
    assert_eq!(arranger().factor_rows(), 4);
    assert_eq!(FACTOR_COUNT, 4);
}

#[test]
fn decoder_input_is_shifted_right() {
    assert_eq!(shift_right(4), [None, Some(0), Some(1), Some(2)]);
    assert_eq!(shift_right(1), [None]);
}

#[test]
fn slot_plan_with_chords_and_prefix() {
    let plan = slot_plan(4, true, 1);
    let predicted: Vec<usize> = (0..8).filter(|&j| plan[j] == SlotSource::Predicted).collect();
    assert_eq!(predicted, [5, 6, 7]);
    assert!(slot_plan(4, false, 0).iter().all(|s| *s == SlotSource::Predicted));
    assert!(!slot_plan(4, true, 4).contains(&SlotSource::Predicted));
}

#[test]
fn decoder_is_causal() {
    let m = arranger();
    let melody = samples(1)[0].melody.clone().unwrap();
    let base = targets(1);
    let out = m.teacher_forced_outputs(&melody, &base).unwrap();
    for j in 0..8 {
        let mut changed = base.clone();
        for t in changed.iter_mut().skip(j) {
            t.iter_mut().for_each(|x| *x += 0.5);
        }
        let moved = m.teacher_forced_outputs(&melody, &changed).unwrap();
        assert_eq!(moved[..=j], out[..=j], "slot {j}");
        if j + 1 < 8 {
            assert_ne!(moved[j + 1], out[j + 1]);
        }
    }
}

#[test]
fn permuting_factor_rows_changes_outputs() {
    let mut m = arranger();
    let melody = samples(1)[0].melody.clone().unwrap();
    let t = targets(2);
    let before = m.teacher_forced_outputs(&melody, &t).unwrap();
    let table = m.store.value(m.factor_embedding).clone();
    let swapped = m.store.value_mut(m.factor_embedding);
    for (dst, src) in [(0, 2), (1, 3), (2, 0), (3, 1)] {
        swapped.row_mut(dst).copy_from_slice(table.row(src));
    }
    assert_ne!(m.teacher_forced_outputs(&melody, &t).unwrap(), before);
}

#[test]
fn melody_embeddings_are_deterministic_and_defined_for_silence() {
    let m = arranger();
    let mut units = samples(1)[0].melody.clone().unwrap();
    units.push(Segment::empty());
    let a = m.embed(&units);
    assert_eq!(a, m.embed(&units));
    assert_eq!(a.len(), 5);
    assert!(a.iter().all(|e| e.is_finite() && e.z_p.len() == 16 && e.z_r.len() == 16));
}

#[test]
fn fully_forced_arrangement_is_reconstruction() {
    let (m, v) = (arranger(), vae());
    let s = &samples(1)[0];
    let prefix = s.accompaniment.clone();
    let chords = prefix.iter().map(|p| extract_progression(p, ExtractMode::Sounding)).collect();
    let opts = ArrangeOptions {
        given_chords: Some(chords),
        given_prefix: Some(prefix.clone()),
    };
    let out = m.arrange_melody(&v, s.melody.as_ref().unwrap(), &opts).unwrap();
    assert_eq!(out, v.reconstruct(&prefix));
}

#[test]
fn free_and_partial_arrangements() {
    let (m, v) = (arranger(), vae());
    let s = &samples(1)[0];
    let melody = s.melody.clone().unwrap();
    let free = m.arrange_melody(&v, &melody, &ArrangeOptions::default()).unwrap();
    assert_eq!(free.len(), 4);
    free.iter().for_each(|seg| seg.validate().unwrap());
    assert_eq!(free, m.arrange_melody(&v, &melody, &ArrangeOptions::default()).unwrap());

    let opts = ArrangeOptions {
        given_chords: None,
        given_prefix: Some(s.accompaniment[..1].to_vec()),
    };
    let partial = m.arrange_melody(&v, &melody, &opts).unwrap();
    assert_eq!(partial[0], v.reconstruct(&s.accompaniment[..1])[0]);

    // windowed beyond 16 bars
    let long: Vec<Segment> = melody.iter().chain(&melody).chain(&melody[..1]).cloned().collect();
    assert_eq!(m.arrange_melody(&v, &long, &ArrangeOptions::default()).unwrap().len(), 9);

    let too_long = ArrangeOptions {
        given_prefix: Some(long.clone()),
        ..Default::default()
    };
    assert!(matches!(m.arrange_melody(&v, &melody, &too_long), Err(Error::LengthMismatch(_))));
    let wrong_chords = ArrangeOptions {
        given_chords: Some(vec![ChordProgression::default(); 3]),
        ..Default::default()
    };
    assert!(matches!(m.arrange_melody(&v, &melody, &wrong_chords), Err(Error::LengthMismatch(_))));
}

#[test]
fn training_reduces_loss_and_skips_unpaired() {
    let v = vae();
    let mut data = samples(6);
    data[0].melody = None;
    let mut cfg = ArrangerConfig::toy(8);
    cfg.epochs = 8;
    cfg.batch_size = 4;
    cfg.warmup_steps = 10;
    let out = train_arranger(&data, &v, &cfg).unwrap();
    assert_eq!(out.skipped, 1);
    assert_eq!(out.epoch_losses.len(), 8);
    assert_eq!(out.steps, 8 * (data.len() - 1).div_ceil(4));
    assert!(out.epoch_losses.iter().all(|l| l.is_finite()));
    assert!(out.epoch_losses[7] < out.epoch_losses[0], "{:?}", out.epoch_losses);

    let again = train_arranger(&data, &v, &cfg).unwrap();
    assert_eq!(again.epoch_losses, out.epoch_losses);

    let ck = out.model.to_checkpoint(serde_json::Value::Null);
    let back = Arranger::from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes()).unwrap()).unwrap();
    let melody = data[1].melody.clone().unwrap();
    let t = targets(3);
    assert_eq!(
        back.teacher_forced_outputs(&melody, &t).unwrap(),
        out.model.teacher_forced_outputs(&melody, &t).unwrap()
    );
    assert!(ChordTextureVae::from_checkpoint(&ck).is_err());

    let mut wide = cfg.clone();
    wide.latent_dim = 16;
    assert!(matches!(train_arranger(&data, &v, &wide), Err(Error::Config(_))));
    assert!(matches!(train_arranger(&data[..1], &v, &cfg), Err(Error::EmptyCorpus)));
}

#[test]
fn gradient_check() {
    let mut m = Arranger::new(
        ArrangerConfig {
            hidden: 8,
            layers: 1,
            heads: 2,
            feed_forward: 8,
            melody_dim: 4,
            melody_hidden: 4,
            latent_dim: 3,
            ..ArrangerConfig::default()
        },
        4,
    )
    .unwrap();
    let melody: Vec<Segment> = samples(1)[0].melody.clone().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut rand_mat = |r: usize| {
        Mat::from_vec(r, 3, (0..r * 3).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect())
    };
    let prev = rand_mat(7);
    let target = rand_mat(8);
    let loss_at = |m: &Arranger| {
        let mut g = Graph::new(&m.store);
        let l = m.batch_loss(&mut g, &melody, &prev, target.clone());
        g.value(l).item()
    };
    let grads = {
        let mut g = Graph::new(&m.store);
        let l = m.batch_loss(&mut g, &melody, &prev, target.clone());
        g.backward(l)
    };
    let h = 1e-5;
    let mut pick = ChaCha8Rng::seed_from_u64(1);
    let ids: Vec<_> = m.store.ids().collect();
    for id in ids {
        let len = m.store.value(id).len();
        for _ in 0..2 {
            let i = rand::Rng::random_range(&mut pick, 0..len);
            let orig = m.store.value(id).data[i];
            m.store.value_mut(id).data[i] = orig + h;
            let up = loss_at(&m);
            m.store.value_mut(id).data[i] = orig - h;
            let down = loss_at(&m);
            m.store.value_mut(id).data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g.data[i]);
            let scale = numeric.abs().max(analytic.abs());
            assert!(
                (numeric - analytic).abs() <= 1e-3 * scale + 1e-8,
                "{}[{i}]: analytic {analytic} numeric {numeric}",
                m.store.iter().nth(id.index()).unwrap().name
            );
        }
    }
}
