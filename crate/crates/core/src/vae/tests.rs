use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::score::{transpose, NoteEvent};

fn demo_segment() -> Segment {
    let mut notes = Vec::new();
    for (beat, chord) in [[48, 64, 67], [45, 60, 64], [41, 60, 65], [43, 62, 67]].iter().enumerate() {
        for &p in chord {
            notes.push(NoteEvent::new(beat as u32 * 8, p, 6));
        }
        notes.push(NoteEvent::new(beat as u32 * 8 + 4, chord[2] + 5, 2));
    }
    Segment::from_notes(notes)
}

fn tiny() -> ChordTextureVae {
    ChordTextureVae::new(VaeConfig::tiny(), 3).unwrap()
}

#[test]
fn texture_feature_geometry() {
    let model = tiny();
    let (conv, pooled) = model
        .texture_encoder
        .feature_maps(&model.store, &PianoRoll::from_segment(&demo_segment()));
    assert_eq!(conv.shape(), (10, 117, 8));
    assert_eq!(pooled.shape(), (10, 29, 8));
    assert_eq!((CONV_HEIGHT, CONV_WIDTH, POOLED_HEIGHT), (117, 8, 29));
}

#[test]
fn conv_is_pitch_translation_equivariant() {
    let model = tiny();
    let seg = demo_segment();
    let up = transpose(&seg, 12);
    assert_eq!(up.len(), seg.len());
    let (c0, p0) = model
        .texture_encoder
        .feature_maps(&model.store, &PianoRoll::from_segment(&seg));
    let (c1, p1) = model
        .texture_encoder
        .feature_maps(&model.store, &PianoRoll::from_segment(&up));
    for c in 0..10 {
        for w in 0..8 {
            for h in 0..CONV_HEIGHT - 12 {
                assert_eq!(c1.get(c, h + 12, w), c0.get(c, h, w));
            }
            for h in 0..POOLED_HEIGHT - 3 {
                assert_eq!(p1.get(c, h + 3, w), p0.get(c, h, w));
            }
        }
    }
}

#[test]
fn latents_have_configured_width_and_are_deterministic() {
    let model = tiny();
    let segs = [demo_segment(), Segment::empty()];
    let a = model.encode_segments(&segs);
    let b = model.encode_segments(&segs);
    assert_eq!(a, b);
    for (c, t) in &a {
        assert_eq!((c.dim(), t.dim()), (8, 8));
        assert!(c.is_finite() && t.is_finite());
    }
    let full = ChordTextureVae::new(VaeConfig::default(), 0).unwrap();
    let lat = full.encode_chords(&[extract_progression(&demo_segment(), ExtractMode::Sounding)]);
    assert_eq!(lat[0].mean.len(), 256);
    assert_eq!(lat[0].log_var.len(), 256);
}

#[test]
fn octave_transposition_keeps_chord_posterior() {
    let model = tiny();
    let seg = demo_segment();
    let a = model.encode_segments(&[seg.clone()]);
    let b = model.encode_segments(&[transpose(&seg, 12)]);
    assert_eq!(a[0].0, b[0].0);
}

#[test]
fn uniform_chord_heads_give_analytic_loss() {
    let mut model = tiny();
    for head in model.chord_decoder.heads() {
        let (w, b) = (head.w, head.b);
        model.store.value_mut(w).data.fill(0.0);
        model.store.value_mut(b).data.fill(0.0);
    }
    let batch = [Example::new(demo_segment()), Example::new(Segment::empty())];
    let (parts, _) = model.evaluate(&batch, Sampling::Mean, 0.0);
    let per_beat = 2.0 * 12f64.ln() + 12.0 * 2f64.ln();
    assert!((parts.chord / 8.0 - per_beat).abs() < 1e-9, "{}", parts.chord);
}

#[test]
fn kl_closed_form() {
    let unit = GaussianLatent {
        mean: vec![1.0; 256],
        log_var: vec![0.0; 256],
    };
    assert!((unit.kl() - 128.0).abs() < 1e-12);
    let prior = GaussianLatent {
        mean: vec![0.0; 256],
        log_var: vec![0.0; 256],
    };
    assert_eq!(prior.kl(), 0.0);

    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let m = g.input(Mat::filled(2, 4, 1.0));
    let lv = g.input(Mat::zeros(2, 4));
    let k = kl_sum(&mut g, m, lv);
    assert!((g.value(k).item() - 4.0).abs() < 1e-12);
}

#[test]
fn reparameterization_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let lat = GaussianLatent {
        mean: vec![0.5, -2.0],
        log_var: vec![0.0, (0.25f64).ln()],
    };
    let n = 10_000;
    let draws: Vec<Vec<f64>> = (0..n).map(|_| lat.sample(&mut rng)).collect();
    for d in 0..2 {
        let var_true = lat.log_var[d].exp();
        let mean = draws.iter().map(|x| x[d]).sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x[d] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = (var_true / n as f64).sqrt();
        let se_var = var_true * (2.0 / (n - 1) as f64).sqrt();
        assert!((mean - lat.mean[d]).abs() < 3.0 * se_mean, "mean {mean}");
        assert!((var - var_true).abs() < 3.0 * se_var, "var {var}");
    }
    let mut r1 = ChaCha8Rng::seed_from_u64(5);
    let mut r2 = ChaCha8Rng::seed_from_u64(5);
    assert_eq!(lat.sample(&mut r1), lat.sample(&mut r2));
    let sharp = GaussianLatent {
        mean: vec![0.25; 3],
        log_var: vec![-800.0; 3],
    };
    assert_eq!(sharp.sample(&mut r1), sharp.mean);
}

#[test]
fn greedy_decode_is_structurally_valid() {
    let model = tiny();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let zc: Vec<Vec<f64>> = (0..3).map(|_| reparameterize(&[0.0; 8], &[2.0; 8], &mut rng)).collect();
    let zt: Vec<Vec<f64>> = (0..3).map(|_| reparameterize(&[0.0; 8], &[2.0; 8], &mut rng)).collect();
    for tree in model.decode_trees(&zc, &zt) {
        assert_eq!(tree.frames.len(), 32);
        tree.validate().unwrap();
        tree.to_segment(SegmentSource::default()).validate().unwrap();
    }
    let out = model.decode_chords(&zc);
    assert_eq!(out[0].root.shape(), (8, 12));
    assert_eq!(out[0].bass.shape(), (8, 12));
    assert_eq!(out[0].chroma.shape(), (8, 12));
}

#[test]
fn loss_is_finite_and_counts_targets() {
    let model = tiny();
    let seg = demo_segment();
    let batch = [Example::new(seg.clone()), Example::new(Segment::empty())];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (parts, counts, grads) = model.loss_and_gradients(&batch, Sampling::Noise(&mut rng), 0.1);
    assert!(parts.is_finite() && grads.is_finite());
    assert!(parts.kl_chd >= 0.0 && parts.kl_txt >= 0.0);
    assert_eq!(counts.pitch_total, seg.len() as u64);
    assert_eq!(counts.stop_total, 64);
    assert_eq!(counts.duration_bits_total, 5 * seg.len() as u64);
    assert_eq!(counts.beats, 16);
    let expect = parts.chord + parts.pianotree + 0.1 * (parts.kl_chd + parts.kl_txt);
    assert!((parts.total - expect).abs() < 1e-9);
}

/// Central differences on a sample of entries from every parameter array.
#[test]
fn full_model_gradient_check() {
    let mut model = tiny();
    let batch = [Example::new(demo_segment()), Example::new(transpose(&demo_segment(), 3))];
    let loss_at = |m: &ChordTextureVae| {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        m.evaluate(&batch, Sampling::Noise(&mut rng), 0.1).0.total
    };
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (_, _, grads) = model.loss_and_gradients(&batch, Sampling::Noise(&mut rng), 0.1);
    let h = 1e-4;
    let mut pick = ChaCha8Rng::seed_from_u64(4);
    let ids: Vec<_> = model.store.ids().collect();
    let mut checked = 0;
    for id in ids {
        let n = model.store.value(id).len();
        for _ in 0..2 {
            let i = pick.random_range(0..n);
            let orig = model.store.value(id).data[i];
            model.store.value_mut(id).data[i] = orig + h;
            let up = loss_at(&model);
            model.store.value_mut(id).data[i] = orig - h;
            let down = loss_at(&model);
            model.store.value_mut(id).data[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g.data[i]);
            let scale = numeric.abs().max(analytic.abs());
            assert!(
                (numeric - analytic).abs() <= 1e-3 * scale + 1e-7,
                "{} [{i}]: analytic {analytic} numeric {numeric}",
                model.store.iter().nth(id.index()).unwrap().name
            );
            checked += 1;
        }
    }
    assert!(checked > 40);
}

#[test]
fn checkpoint_round_trip_preserves_outputs() {
    let model = tiny();
    let ck = model.to_checkpoint(serde_json::json!({"note": "test"}));
    let back = ChordTextureVae::from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes()).unwrap()).unwrap();
    assert_eq!(back.config, model.config);
    let segs = [demo_segment()];
    assert_eq!(back.encode_segments(&segs), model.encode_segments(&segs));
    assert_eq!(back.reconstruct(&segs), model.reconstruct(&segs));
}
