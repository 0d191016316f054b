//! Replays the checked-in fuzz corpora through the same entry points and
//! invariants as the fuzz targets, so regressions show up in `cargo test`.

use std::fs;
use std::path::PathBuf;

use polydis::arranger::{Arranger, ArrangerConfig, PairedManifest};
use polydis::chord::{
    parse_label, parse_label_sequence, progressions_from_symbols, ChordMatrix, ChordProgression, CHORD_DIM,
};
use polydis::nn::Checkpoint;
use polydis::score::{encode_smf, parse_smf, quantize_and_segment, SongRecord};
use polydis::trainer::TrainConfig;
use polydis::vae::ChordTextureVae;
use polydis::BEATS_PER_SEGMENT;

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.into_iter().map(|p| (p.clone(), fs::read(p).unwrap())).collect()
}

/// Every prefix of a seed, plus single-byte flips of the first bytes.
fn mutations(data: &[u8]) -> Vec<Vec<u8>> {
    let step = (data.len() / 64).max(1);
    let mut out: Vec<Vec<u8>> = (0..data.len()).step_by(step).map(|n| data[..n].to_vec()).collect();
    for i in 0..data.len().min(48) {
        let mut d = data.to_vec();
        d[i] ^= 0xff;
        out.push(d);
    }
    out
}

#[test]
fn midi_seeds() {
    for (path, data) in corpus("parse_smf") {
        let song = parse_smf(&data, "seed").unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(!quantize_and_segment(&song, 8).segments.is_empty());
        assert_eq!(parse_smf(&encode_smf(&song), "seed").unwrap().note_count(), song.note_count());
        for m in mutations(&data) {
            if let Ok(s) = parse_smf(&m, "seed") {
                let _ = quantize_and_segment(&s, 8);
            }
        }
    }
}

#[test]
fn record_seeds() {
    for (path, data) in corpus("song_record") {
        let rec = SongRecord::from_bytes(&data).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(SongRecord::from_bytes(&rec.to_bytes()).unwrap(), rec);
        for m in mutations(&data) {
            if let Ok(r) = SongRecord::from_bytes(&m) {
                assert_eq!(SongRecord::from_bytes(&r.to_bytes()).unwrap(), r);
            }
        }
    }
}

#[test]
fn chord_label_seeds() {
    let mut parsed = 0;
    for (_, data) in corpus("chord_label") {
        let text = String::from_utf8(data).unwrap();
        let _ = parse_label(&text);
        if parse_label_sequence(&text).is_ok() {
            parsed += 1;
        }
        for beats in [1, 2, 4] {
            let _ = progressions_from_symbols(&text, beats);
        }
    }
    assert!(parsed >= 3);
}

#[test]
fn chord_matrix_seeds() {
    let n = CHORD_DIM * BEATS_PER_SEGMENT;
    let mut decoded = 0;
    for (_, data) in corpus("chord_matrix") {
        assert_eq!(data.len(), n);
        for d in std::iter::once(data.clone()).chain(mutations(&data)).filter(|d| d.len() >= n) {
            let mut m = ChordMatrix::default();
            for (i, &b) in d.iter().take(n).enumerate() {
                m.bits[i / BEATS_PER_SEGMENT][i % BEATS_PER_SEGMENT] = b;
            }
            if let Ok(p) = ChordProgression::decode_matrix(&m) {
                assert_eq!(ChordProgression::decode_matrix(&p.encode_matrix()).unwrap(), p);
                decoded += 1;
            }
        }
    }
    assert!(decoded > 0);
}

#[test]
fn checkpoint_seeds() {
    for (path, data) in corpus("checkpoint") {
        let ck = Checkpoint::from_bytes(&data).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(Checkpoint::from_bytes(&ck.to_bytes()).unwrap(), ck);
        // the seeds carry toy parameter sets, which neither model accepts
        assert!(ChordTextureVae::from_checkpoint(&ck).is_err());
        assert!(Arranger::from_checkpoint(&ck).is_err());
        for m in mutations(&data) {
            if let Ok(c) = Checkpoint::from_bytes(&m) {
                let _ = ChordTextureVae::from_checkpoint(&c);
            }
        }
    }
}

#[test]
fn config_seeds() {
    let mut accepted = 0;
    for (_, data) in corpus("config_toml") {
        let text = String::from_utf8(data).unwrap();
        accepted += usize::from(TrainConfig::from_toml(&text).is_ok());
        accepted += usize::from(ArrangerConfig::from_toml(&text).is_ok());
        accepted += usize::from(PairedManifest::from_toml(&text).is_ok());
    }
    assert_eq!(accepted, 3);
}
